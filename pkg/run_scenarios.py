#!/usr/bin/env python3
"""
Run, list and describe the registered scenarios.

Usage:
    python run_scenarios.py run configs/free_gaussian.yaml --out output
    python run_scenarios.py run configs/*.yaml --parallel
    python run_scenarios.py list --json
    python run_scenarios.py describe ring_state

Exit codes: 0 every check passed, 1 a check failed, 2 invalid configuration,
3 numerical instability.
"""

import argparse
import json
import logging
import os
import sys
from dotenv import load_dotenv
load_dotenv()

from bohm_backend.backend import ScenarioBackend
from wave_lattice.errors import ConfigurationError

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIGURATION = 2
EXIT_INSTABILITY = 3


def print_report(result: dict):
    """
    Print the checks of one run.

    Args:
        result: Entry returned by ScenarioBackend.run_many
    """
    if "report" not in result:
        print(f"\n✗ {result['path']}: {result['error']} error")
        print(f"  - {result['message']}")
        return
    report = result["report"]
    mark = "✓" if report.passed else "✗"
    print(f"\n{mark} {report.label} ({report.scenario}, seed {report.seed})")
    for c in report.checks:
        print(f"  {'✓' if c.passed else '✗'} {c.name}: {c.value:.4g} ({c.comparison} {c.threshold:.4g})")


def exit_code(results: list) -> int:
    errors = {r["error"] for r in results if "report" not in r}
    if "configuration" in errors:
        return EXIT_CONFIGURATION
    if "instability" in errors:
        return EXIT_INSTABILITY
    if errors or not all(r["report"].passed for r in results):
        return EXIT_CHECK_FAILED
    return EXIT_PASS


def run(args, backend: ScenarioBackend) -> int:
    progress = not args.json and sys.stdout.isatty()
    if not args.json:
        print(f"Running {len(args.configs)} scenario file(s)...")
    results = backend.run_many(args.configs, args.seed, args.out, args.parallel, progress)
    if args.json:
        payload = [
            {"path": r["path"], **({"report": r["report"].model_dump()} if "report" in r else
                                   {"error": r["error"], "message": r["message"]})}
            for r in results
        ]
        print(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True))
    else:
        for result in results:
            print_report(result)
    return exit_code(results)


def main():
    parser = argparse.ArgumentParser(
        description="Reproduce the pilot-wave scenarios from their config files"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="Machine-readable output on stdout")
    common.add_argument("--strict", action="store_true", help="Turn accuracy warnings into errors")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", parents=[common], help="Run one or more scenario config files")
    run_parser.add_argument("configs", nargs="+", help="YAML or JSON config files")
    run_parser.add_argument("--seed", type=int, help="Override the seed of every config")
    run_parser.add_argument("--out", help="Output root (default: config output.directory, then PILOTWAVE_OUTPUT_DIR)")
    run_parser.add_argument("--parallel", action="store_true", help="Run config files in a process pool")

    commands.add_parser("list", parents=[common], help="List the registered scenarios")
    describe_parser = commands.add_parser("describe", parents=[common], help="Describe one scenario")
    describe_parser.add_argument("name", help="Scenario name")

    args = parser.parse_args()

    logging.basicConfig(
        level=os.getenv("PILOTWAVE_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    backend = ScenarioBackend(strict=True if args.strict else None)

    try:
        if args.command == "run":
            return run(args, backend)
        if args.command == "list":
            scenarios = backend.list_scenarios()
            if args.json:
                print(json.dumps(scenarios, indent=2))
            else:
                for s in scenarios:
                    print(f"  - {s['name']}: {s['title']}")
            return EXIT_PASS
        description = backend.describe(args.name)
        if args.json:
            print(json.dumps(description, indent=2))
        else:
            print(f"{description['title']} ({description['name']})")
            print(description["description"])
            print(f"\nRequired blocks: {', '.join(description['required_blocks'])}")
        return EXIT_PASS
    except ConfigurationError as e:
        print(f"\n✗ Error: {e}", file=sys.stderr)
        return EXIT_CONFIGURATION


if __name__ == "__main__":
    exit(main())

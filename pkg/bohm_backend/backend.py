import logging
import os
import typing
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml
from pydantic import ValidationError

from bohm_backend.models import REQUIRED_BLOCKS, ScenarioConfig, ScenarioReport
from bohm_backend.report import (
    convert_markdown_to_html,
    plain,
    summary_markdown,
    write_fields,
    write_metrics,
    write_qtm_states,
    write_trajectories,
)
from bohm_backend.scenarios import SCENARIO_RUNNERS
from data.scenario_catalog import scenario_catalog
from wave_lattice.errors import (
    AccuracyError,
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    InconsistentPhaseError,
    NumericalInstabilityError,
    ScenarioError,
)

logger = logging.getLogger(__name__)


class ScenarioBackend:
    """
    Loads scenario configurations, runs them and writes their output bundles.

    Configuration is loaded from environment variables:
    - PILOTWAVE_OUTPUT_DIR: Root of the output tree (default: output)
    - PILOTWAVE_STRICT: 1 turns accuracy warnings into errors
    - PILOTWAVE_MAX_WORKERS: Process pool size for run_many (default: CPU count)
    """

    def __init__(
        self,
        output_dir: typing.Optional[str] = None,
        strict: typing.Optional[bool] = None,
        max_workers: typing.Optional[int] = None,
    ):
        self.output_dir = output_dir or os.getenv("PILOTWAVE_OUTPUT_DIR", "output")
        if strict is not None:
            # Worker processes inherit the environment
            os.environ["PILOTWAVE_STRICT"] = "1" if strict else "0"
        workers = max_workers or os.getenv("PILOTWAVE_MAX_WORKERS")
        self.max_workers = int(workers) if workers else None
        self.catalog = {name: (title, description) for name, title, description in scenario_catalog}

    def list_scenarios(self) -> typing.List[typing.Dict[str, str]]:
        return [{"name": name, "title": title} for name, (title, _) in self.catalog.items()]

    def describe(self, name: str) -> typing.Dict[str, typing.Any]:
        """
        Help text of one scenario.

        Raises:
            ConfigurationError: name is not a registered scenario
        """
        if name not in self.catalog:
            raise ConfigurationError(
                f"unknown scenario '{name}'; valid names: {', '.join(self.catalog)}"
            )
        title, description = self.catalog[name]
        return {
            "name": name,
            "title": title,
            "description": description.strip("\n"),
            "required_blocks": REQUIRED_BLOCKS[name],
        }

    def load_config(self, path: str, seed: typing.Optional[int] = None) -> ScenarioConfig:
        """
        Parse and validate a YAML (or JSON) scenario file.

        Args:
            path: Config file
            seed: Overrides the file's seed

        Raises:
            ConfigurationError: unreadable file or invalid content; names the offending field
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigurationError(f"{path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected a mapping at the top level")
        if seed is not None:
            data["seed"] = seed
        try:
            return ScenarioConfig.model_validate(data)
        except ValidationError as e:
            problems = [
                f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}"
                for error in e.errors()
            ]
            raise ConfigurationError(f"{path}: " + "; ".join(problems)) from e

    def output_root(self, config: ScenarioConfig, out: typing.Optional[str] = None) -> Path:
        return Path(out or config.output.directory or self.output_dir)

    def run_config(
        self,
        config: ScenarioConfig,
        out: typing.Optional[str] = None,
        progress: bool = False,
    ) -> ScenarioReport:
        """
        Run one scenario and write its bundle to <out>/<label>/.

        The directory is created only after the run finished, so a failing
        run leaves no partial outputs.
        """
        logger.info("running %s (seed %d)", config.label, config.seed)
        outcome = SCENARIO_RUNNERS[config.scenario](config, progress)

        directory = self.output_root(config, out) / config.label
        directory.mkdir(parents=True, exist_ok=True)
        formats = config.output.formats
        outputs = []
        if "csv" in formats and outcome.ensemble is not None:
            write_trajectories(directory / "trajectories.csv", outcome.ensemble, config.output.max_csv_trajectories)
            outputs.append("trajectories.csv")
        if "csv" in formats and outcome.qtm_states:
            write_qtm_states(directory / "qtm_states.csv", outcome.qtm_states, config.output.max_csv_trajectories)
            outputs.append("qtm_states.csv")
        if "dump" in formats:
            outputs += sorted(p.name for p in write_fields(directory, outcome.fields))

        report = ScenarioReport(
            scenario=config.scenario,
            label=config.label,
            seed=config.seed,
            passed=all(c.passed for c in outcome.checks),
            checks=outcome.checks,
            metrics=plain(outcome.metrics),
            outputs=outputs + [name for name, fmt in
                               (("metrics.json", "json"), ("summary.md", "md"), ("summary.html", "html"))
                               if fmt in formats],
        )
        if "json" in formats:
            write_metrics(directory / "metrics.json", report)
        markdown = summary_markdown(report, self.catalog[config.scenario][0])
        if "md" in formats:
            (directory / "summary.md").write_text(markdown, encoding="utf-8")
        if "html" in formats:
            (directory / "summary.html").write_text(convert_markdown_to_html(markdown), encoding="utf-8")
        return report

    def run_file(
        self,
        path: str,
        seed: typing.Optional[int] = None,
        out: typing.Optional[str] = None,
        progress: bool = False,
    ) -> ScenarioReport:
        return self.run_config(self.load_config(path, seed), out, progress)

    def run_many(
        self,
        paths: typing.List[str],
        seed: typing.Optional[int] = None,
        out: typing.Optional[str] = None,
        parallel: bool = False,
        progress: bool = False,
    ) -> typing.List[typing.Dict[str, typing.Any]]:
        """
        Run several config files; every entry of the result carries the path
        and either the report or the error kind and message.
        """
        jobs = [(path, seed, out, self.output_dir) for path in paths]
        if parallel and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.max_workers) as pool:
                return list(pool.map(_run_job, jobs))
        return [_run_job(job, progress) for job in jobs]


def _run_job(job: typing.Tuple, progress: bool = False) -> typing.Dict[str, typing.Any]:
    path, seed, out, output_dir = job
    backend = ScenarioBackend(output_dir=output_dir)
    try:
        report = backend.run_file(path, seed, out, progress)
    except (ConfigurationError, DomainError) as e:
        return {"path": path, "error": "configuration", "message": str(e)}
    except (NumericalInstabilityError, AccuracyError, DegenerateInputError, InconsistentPhaseError) as e:
        return {"path": path, "error": "instability", "message": str(e)}
    except ScenarioError as e:
        return {"path": path, "error": "scenario", "message": str(e)}
    return {"path": path, "report": report}

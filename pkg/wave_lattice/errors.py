"""
Exception hierarchy shared by every pilot-wave module.

The harness maps these onto exit codes, so library code raises the most
specific class available instead of a bare Exception.
"""

import logging
import os
import warnings
from typing import Optional

logger = logging.getLogger(__name__)


class PilotWaveError(Exception):
    """Base class for all errors raised by the laboratory"""


class ConfigurationError(PilotWaveError):
    """Invalid combination of grid, solver or run settings"""


class DomainError(PilotWaveError, ValueError):
    """Argument lies outside the domain of an operation"""


class AccuracyError(PilotWaveError):
    """An accuracy contract was violated in strict mode"""


class AccuracyWarning(UserWarning):
    """An accuracy contract was violated (non-strict mode)"""


class NumericalInstabilityError(PilotWaveError):
    """
    Raised when a run blows up.

    Carries the module name and the step index so the harness can report
    where the breakdown happened.
    """

    def __init__(self, message: str, module: Optional[str] = None, step: Optional[int] = None):
        self.module = module
        self.step = step
        location = []
        if module:
            location.append(f"module={module}")
        if step is not None:
            location.append(f"step={step}")
        suffix = f" [{', '.join(location)}]" if location else ""
        super().__init__(f"{message}{suffix}")


class DegenerateInputError(PilotWaveError, ValueError):
    """Input carries no usable information (fully masked, zero norm after projection)"""


class InconsistentPhaseError(PilotWaveError):
    """Loop integral of the phase gradient is not close to an integer winding"""


class ScenarioError(PilotWaveError):
    """Scenario preconditions do not hold"""


def strict_mode(strict: Optional[bool] = None) -> bool:
    """Explicit flag wins; otherwise PILOTWAVE_STRICT=1 turns strict mode on"""
    if strict is not None:
        return bool(strict)
    return os.getenv("PILOTWAVE_STRICT", "0").strip().lower() in ("1", "true", "yes")


def accuracy_problem(message: str, strict: Optional[bool] = None) -> None:
    """Warn about an accuracy violation, or raise AccuracyError in strict mode"""
    if strict_mode(strict):
        raise AccuracyError(message)
    logger.warning(message)
    warnings.warn(message, AccuracyWarning, stacklevel=3)

from .models import CheckResult, ScenarioConfig, ScenarioReport
from .backend import ScenarioBackend
from .scenarios import SCENARIO_RUNNERS, ScenarioOutcome

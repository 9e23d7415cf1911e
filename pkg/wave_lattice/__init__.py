from .errors import (
    AccuracyError,
    AccuracyWarning,
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    InconsistentPhaseError,
    NumericalInstabilityError,
    PilotWaveError,
    ScenarioError,
)
from .models import Grid, PotentialSpec, ScalarField, VectorField, WaveFunction, ZERO_POTENTIAL
from .grid import (
    density,
    gaussian_packet,
    inner_product,
    make_grid,
    norm,
    normalize,
    phase_aligned_distance,
    plane_wave,
    potential_values,
    ring_state,
    superpose,
)

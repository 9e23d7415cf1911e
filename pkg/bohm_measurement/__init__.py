from .models import BornStatistics, ExchangeReport, MeasurementModel, Povm, ProjectiveResult
from .lab import (
    PointerExperiment,
    SternGerlachExperiment,
    born_from_trajectories,
    cnot_model,
    controlled_shift_model,
    cross_sector_mass,
    evolve_model,
    extract_povm,
    load_model,
    model_from_unitary,
    pointer_probability,
    projective_observable,
    random_model,
    save_model,
    weak_coupling_model,
)
from .identical import (
    exchange_report,
    flow_equivariance_check,
    minimum_separation,
    symmetrize,
    unordered_flow_deviation,
    unordered_view,
    velocity_exchange_check,
)

from .models import (
    BranchJump,
    Ensemble,
    EvolutionRecord,
    MagneticSpec,
    NewtonResidualReport,
    PhaseField,
    PhaseResiduals,
    QtmSettings,
    QtmState,
    ReconstructedWave,
    Trajectory,
    TrajectoryFlag,
    VelocityProbe,
    WindingResult,
)
from .solver import (
    CrankNicolsonSolver,
    RecordPlayback,
    SplitSpectralSolver,
    combine_records,
    evolve,
    load_record,
    make_solver,
    save_record,
    stationary_state,
    step_pauli,
    step_split_spectral,
    time_reversal_error,
)
from .guidance import build_probe, continuity_residual, probability_current, velocity_at, velocity_field
from .trajectories import (
    equivariance_distance,
    equivariance_growth,
    equivariance_report,
    integrate_trajectory,
    propagate_ensemble,
    sample_initial,
)
from .quantum_potential import force_field, integrate_newton, newton_residual, quantum_potential
from .qtm import estimate_density, qtm_init, qtm_run, qtm_step, reconstruct_wavefunction
from .polar import hamilton_jacobi_residuals, polar_decompose, winding_number

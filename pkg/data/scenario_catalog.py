scenario_catalog = [
    (
        "free_gaussian",
        "Free Gaussian packet",
        """
   - Gaussian packet spreading in free space, D=1
   - Width follows sigma^2(t) = sigma0^2 + (hbar t / 2 m sigma0)^2; norm drift stays below 1e-10
   - Guided ensemble stays |psi_t|^2-distributed (total-variation distance below 0.05 at every snapshot)
   - Trajectories obey m Q'' = -grad(V + V_qu) along the way""",
    ),
    (
        "boosted_gaussian",
        "Boosted Gaussian packet",
        """
   - Free Gaussian packet with mean momentum hbar k
   - Centre moves with velocity hbar k / m while the packet spreads
   - Equivariance of the guided ensemble is checked at every snapshot""",
    ),
    (
        "harmonic",
        "Harmonic oscillator",
        """
   - Coherent state in V = m omega^2 x^2 / 2 against its closed form
   - Halving dt divides the splitting error by about 4
   - Ground state from the one-step propagator: continuity and Hamilton-Jacobi residuals vanish""",
    ),
    (
        "two_gaussian_interference",
        "Two-packet interference",
        """
   - Two Gaussian packets overlap and interfere, D=1, 10^5 trajectories
   - Equivariance: total-variation distance below 0.05 at every snapshot
   - Negative control: a uniformly sampled ensemble stays far from |psi_t|^2
   - Trajectories never cross each other in one dimension""",
    ),
    (
        "ring_state",
        "Ring states e^{i m phi}",
        """
   - Angular-momentum eigenstates on a periodic ring, m in {-1, 1, 2}
   - The phase S grows linearly with phi, so every single-valued choice of S
     jumps by m 2 pi hbar somewhere: the unwrapped phase records exactly one
     branch cut and every jump is an integer multiple of 2 pi hbar
   - The winding number of the loop integral of grad S returns m exactly
   - Continuity and Hamilton-Jacobi residuals vanish on the stationary ring""",
    ),
    (
        "stern_gerlach",
        "Stern-Gerlach splitting",
        """
   - Spin-1/2 particle with spinor (cos(theta/2), sin(theta/2)) in a field gradient b
   - Spin-up and spin-down components separate into disjoint regions
   - The fraction of trajectories on the spin-up side matches cos^2(theta/2) within 3 sigma
   - Only positions are random; no extra spin variable is carried""",
    ),
    (
        "pointer_measurement",
        "Pointer measurement",
        """
   - Object coordinate coupled to a pointer coordinate on a 2-D grid
   - Object superposition c_0 psi_0 + c_1 psi_1 drives the pointer into disjoint sectors
   - Sector frequencies of 10^4 guided trajectories match |c_alpha|^2 within 3 sigma
   - An eigenstate input lands in its own sector every time""",
    ),
    (
        "two_fermion",
        "Two fermions in one dimension",
        """
   - Antisymmetrized two-particle state on a shared 1-D axis
   - Velocity field is exchange symmetric; twin runs from swapped starts agree
   - Trajectories never reach the nodal line q1 = q2; the minimum separation is reported""",
    ),
    (
        "two_boson",
        "Two bosons in one dimension",
        """
   - Symmetrized two-particle state on a shared 1-D axis
   - Velocity field is exchange symmetric; twin runs from swapped starts agree
   - Canonical unordered configurations are permutation invariant for N <= 4
   - Every ordered lift of an unordered start yields the same unordered trajectory""",
    ),
    (
        "qtm_free_gaussian",
        "Quantum trajectory method",
        """
   - Free Gaussian propagated by an ensemble under V + V_qu of its own kernel density estimate
   - Reconstructed |psi| and gauge-aligned psi within 0.05 (L2) of the grid solution
   - Optional refinement lattice over (n, dt): endpoint error against guided trajectories shrinks""",
    ),
]

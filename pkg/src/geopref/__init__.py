"""Geometric preferential attachment: simulation and limit-measure numerics.

Growth processes attach newcomers to existing vertices with probability
proportional to degree times a location-dependent attractiveness kernel.
The package grows such graphs (finite, continuous, coarse and coupled
variants), computes limiting edge-end measures and fitness by convex
Lyapunov minimization, evaluates the limiting degree laws, certifies
discretizations of continuous spaces, and handles the multiplicative
fitness special case.  ``geopref.cli`` provides the batch front-end.
"""

__version__ = "0.1.0"

from .space import (
    ContinuousSpaceSpec,
    DiscretizedSpace,
    Domain,
    FiniteLocationSpace,
    Kernel,
    build_finite_space,
    discretize,
    kernel_bounds,
    make_kernel,
    two_point_space,
)
from .equilibrium import (
    DustbinEquilibrium,
    EquilibriumResult,
    borel_bracket,
    compute_phi,
    lyapunov_V,
    solve_dustbin,
    solve_nu,
    solve_two_point,
    vector_field_G,
)
from .simulate import (
    ContinuousGraphState,
    DustbinState,
    GraphState,
    SimConfig,
    cell_degree_histogram,
    corrupt_discretization,
    degree_histogram,
    dustbin_mirror,
    empirical_measure,
    grow,
    grow_continuous,
    grow_coupled,
    grow_dustbin,
    make_rng,
    seed_continuous_state,
    seed_dustbin_state,
    seed_finite_state,
)
from .degree import (
    DegreeLawParams,
    DegreeTable,
    compare,
    degree_table,
    mean_degree,
    tail_index,
    theoretical_cdf,
    theoretical_pmf,
    theorem3_bracket,
    write_degree_csv,
)
from .fitness import (
    FitnessDistribution,
    PhaseResult,
    attachment_integral,
    cross_check,
    detect_phase,
    nu_interval,
)

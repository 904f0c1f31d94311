"""metawell: metastable structure and scaling limits of multi-well potentials.

The package extracts the critical-point and valley structure of an analytic
potential, computes the Kramers rate matrix and the associated reversible
Markov chain, verifies the Laplace asymptotics and the capacity variational
principle at finite epsilon, and demonstrates the convergence of the scaled
Kramers-Smoluchowski dynamics to a linear reaction-diffusion system on the
valleys.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegeneracyError,
    LandscapeError,
    MetawellError,
    PotentialOverflow,
    PreconditionError,
    RangeError,
    ResolutionError,
    SchemeError,
    SingularityError,
    SolverError,
    StabilityError,
    UnequalDepthError,
)
from .grids import Grid, GridField, interval_grid
from .landscape import (
    CriticalKind,
    CriticalPoint,
    GaussianWellsPotential,
    PolynomialPotential,
    Potential,
    ValleyDecomposition,
    analyze,
    builtin_potential,
    decompose_valleys,
    evaluate,
    find_critical_points,
)
from .rates import (
    ChainSpec,
    build_chain,
    chain_marginal,
    dirichlet_form,
    kramers_constant,
    solve_balance,
)
from .asymptotics import (
    ScaleSet,
    laplace_check,
    partition_function,
    scale_set,
    tail_mass,
)
from .elliptic import (
    WeightedOperator,
    build_weighted_operator,
    capacity,
    cross_energy,
    test_function,
)
from .evolution import (
    EvolutionScenario,
    convergence_report,
    energy_monitor,
    solve_ks,
    solve_limit_system,
    valley_masses,
)

__all__ = [name for name in dir() if not name.startswith("_")]

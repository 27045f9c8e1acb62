from .cauchy import (
    CauchyTrajectory,
    InstabilityError,
    constant_initial,
    evolve_cauchy,
    fit_decay_rate,
    zero_initial,
)
from .grids import AliasingError, AliasingWarning, CorrelationGrid, TorusGrid, to_full
from .operators import (
    BudgetExceeded,
    Model,
    apply_a_sum,
    apply_lstar,
    assemble_source,
    product_k1,
    product_source,
    resolvent_neumann,
)
from .stationary import (
    FactorizationReport,
    GrowthReport,
    MemoryBudgetError,
    NegativeSolutionError,
    check_factorization,
    growth_report,
    shell_average,
    solve_k1,
    solve_k2_unmarked,
    solve_stationary,
)

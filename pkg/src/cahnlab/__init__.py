"""Pseudospectral local and nonlocal Cahn-Hilliard solvers on the flat torus."""

from .torus import (
    Field,
    TorusGrid,
    inverse_laplacian,
    make_grid,
    mean,
    norm_H1,
    norm_H1_dual,
    norm_Hminus1,
    norm_L2,
)
from .kernel import (
    Mollifier,
    ScaledKernel,
    build_kernel,
    kernel_convolve,
    local_limit_coefficient,
    nonlocal_B,
    normalize_mollifier,
)
from .potential import Potential, certify_H3, eval_ddF, eval_dF, eval_F
from .energy import (
    EnergyBreakdown,
    energy_local,
    energy_nonlocal,
    nonlocal_gradient_seminorm,
    poincare_ratio,
)
from .dynamics import (
    IntegrationError,
    RunReport,
    SolverConfig,
    read_checkpoint,
    run,
    step_local,
    step_nonlocal,
    write_checkpoint,
)
from .lab import (
    SweepPlan,
    SweepReport,
    fit_rate,
    operator_consistency_study,
    poincare_study,
    run_sweep,
)
from .config import ConfigError, RunConfig, parse_config

__version__ = "0.1.0"

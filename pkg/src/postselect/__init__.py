"""Post-selection nonlocal games: local and quantum bounds, statistical power
and hypothesis tests for Bell experiments with post-selected rounds."""

from .errors import (
    CapacityError,
    DegenerateGameError,
    NumericalError,
    ParameterError,
    PostSelectError,
    ShapeError,
    ValidationError,
)
from .scenario import (
    Behaviour,
    GameSpec,
    GameValue,
    Scenario,
    builtin_game,
    ch_game,
    chsh_game,
    evaluate,
    flat_index,
    gamma,
    generalized_hardy_game,
    hardy_game,
    less_than_aggregate,
    omega,
)
from .local_bound import local_bound, local_bound_dinkelbach, local_bound_naive
from .npa import tsirelson_bisection, tsirelson_conic
from .statistics import (
    CountsTable,
    analyze_counts,
    bayes_factor,
    chernoff_p_bound,
    kl_divergence,
    statistical_power,
)
from .efficiency import apply_efficiency, chsh_efficiency_bound, hardy_family_analytic, power_curves, scaling_fit
from .quantum import (
    OptimizerOptions,
    QuantumStrategy,
    behaviour_from_strategy,
    hardy_measurement_family,
    maximize_hardy_probability,
    maximize_power,
    parameterize,
)

__version__ = "0.1.0"

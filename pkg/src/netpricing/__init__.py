"""Monopoly pricing on signed consumer networks."""
from .equilibrium import (
    EquilibriumResult,
    Market,
    best_response,
    foc_residual,
    jacobian,
    price_map,
    price_sensitivity,
    solve_equilibrium,
    solve_fixed_point,
    solve_monotone,
)
from .isotonic import IsotonicFit, interpolate, pava, rate_validator
from .learner import LearnConfig, LearnTrace, fit_psi, plug_in_equilibrium, regret_slope, run_algorithm1
from .network import (
    ConditionReport,
    CurvatureProfile,
    Network,
    build_topology,
    check_conditions,
    communities,
    symmetric_nonneg_threshold,
)
from .pricing import (
    IIVReport,
    OracleSolution,
    PriceBox,
    iiv,
    influencer_lower_bound,
    lq_closed_forms,
    nonlinear_symmetric_foc,
    optimize_prices,
    revenue,
    star_prices,
)
from .utility import ConsumerParams, UtilityModel

__version__ = "0.1.0"

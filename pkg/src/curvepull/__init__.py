"""Curve-pullback dynamics of rational Thurston maps with four marked points.

The package evaluates the Thurston pullback map sigma_f on the upper half
plane via covering-space continuation through the modular lambda function,
extends it to rational cusps, estimates Thurston multipliers both
analytically (horoball scaling) and topologically (monodromy of pullback
components), and searches for finite global curve attractors.
"""

__version__ = "0.1.0"

from .cover import lambda_value, set_precision
from .errors import CurvePullError
from .farey import Cusp, Horoball, ModularElement
from .oracle_topo import (
    calibrate_convention, comparison_table, cusp_pullback_oracle,
    multiplier_oracle, oracle_for_evaluator,
)
from .pullback import (
    AttractorReport, CuspFate, OrbitRecord, build_evaluator, cusp_pullback,
    find_attractor, iterate_cusp_orbit, multiplier_from_horoballs, sigma_eval,
)
from .ratmap import INF, MarkedMap, RationalMap, map_from_spec

__all__ = [
    "AttractorReport", "Cusp", "CuspFate", "CurvePullError", "Horoball",
    "INF", "MarkedMap", "ModularElement", "OrbitRecord", "RationalMap",
    "build_evaluator", "calibrate_convention", "comparison_table",
    "cusp_pullback", "cusp_pullback_oracle", "find_attractor",
    "iterate_cusp_orbit", "lambda_value", "map_from_spec",
    "multiplier_from_horoballs", "multiplier_oracle", "oracle_for_evaluator",
    "set_precision", "sigma_eval", "__version__",
]

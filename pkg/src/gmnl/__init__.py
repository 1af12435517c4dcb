"""Bell inequalities for genuine multipartite nonlocality built from lifted seeds."""

__version__ = "0.1.0"

from .scenario import (Behavior, DensityMatrix, MeasurementSet, PureState, Scenario,  # noqa: E402
                       born_behavior, check_nonsignaling, ghz_state, mix_white_noise)
from .expressions import (BellExpression, ComposedInequality, ExpressionFamily,  # noqa: E402
                          compose_depth, compose_gmnl, evaluate, lift, named_inequality)

__all__ = [
    "__version__", "Behavior", "DensityMatrix", "MeasurementSet", "PureState", "Scenario",
    "born_behavior", "check_nonsignaling", "ghz_state", "mix_white_noise",
    "BellExpression", "ComposedInequality", "ExpressionFamily", "compose_depth",
    "compose_gmnl", "evaluate", "lift", "named_inequality",
]

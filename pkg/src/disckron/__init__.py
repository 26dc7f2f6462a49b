"""Lacunary digital Kronecker sequences over F_q and their star discrepancy."""

__version__ = "0.1.0"

from .errors import DisckronError  # noqa: E402
from .field_series import FieldParams, FracSeries, PolyFq, QadicRational, make_rng  # noqa: E402
from .sequences import GeneratorTuple, PointSet, lacunary_digital_points  # noqa: E402

__all__ = [
    "__version__",
    "DisckronError",
    "FieldParams",
    "FracSeries",
    "GeneratorTuple",
    "PointSet",
    "PolyFq",
    "QadicRational",
    "lacunary_digital_points",
    "make_rng",
]

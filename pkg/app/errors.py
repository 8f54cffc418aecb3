"""Exception hierarchy for the solver.

Everything derives from ``ValueError`` so callers that only care about "bad
input" can keep catching ``ValueError``.
"""

from typing import Optional, Sequence


class FlowError(ValueError):
    """Base class for all solver errors."""


class ParseError(FlowError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DimensionMismatch(FlowError):
    pass


class UnknownCatalogId(FlowError):
    def __init__(self, catalog_id: str, valid: Sequence[str]):
        self.catalog_id = catalog_id
        self.valid = tuple(valid)
        super().__init__(
            f"Unknown catalog id {catalog_id!r}; valid ids: {', '.join(self.valid)}"
        )


class NonOracleScenario(FlowError):
    pass


class UnboundedDomain(FlowError):
    pass


class DegenerateDomain(FlowError):
    pass


class DegenerateGrid(FlowError):
    pass


class NotOnBoundary(FlowError):
    pass


class ExteriorNode(FlowError):
    pass


class InsufficientStencil(FlowError):
    pass


class NotSpacelike(FlowError):
    """The graph left the spacelike regime (largest singular value >= 1)."""

    def __init__(
        self,
        lambda_max: float,
        node: Optional[tuple] = None,
        point: Optional[Sequence[float]] = None,
    ):
        self.lambda_max = float(lambda_max)
        self.node = node
        self.point = None if point is None else tuple(float(v) for v in point)
        where = ""
        if node is not None:
            where = f" at node {node}"
        elif self.point is not None:
            where = f" at point {self.point}"
        super().__init__(f"Graph is not spacelike{where}: lambda_1 = {self.lambda_max!r}")


class NonFiniteState(FlowError):
    pass


class InvalidXi(FlowError):
    pass


class InvalidParameter(FlowError):
    pass


class OutputError(FlowError):
    """A result file or directory could not be written."""

"""Scenario files: strict parsing, semantic validation, emission and preparation.

A scenario is a JSON document validated by :class:`app.models.ProblemSpec`.
``prepare`` turns a validated spec into the objects the flow works on: the
domain, its grid, the boundary data ``psi``, the initial map and, when the
catalog knows one, the exact stationary solution.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from .errors import DimensionMismatch, NotSpacelike, ParseError, UnknownCatalogId
from .fields import AffineField, MapField, PolynomialField, SineBump, SumField
from .lattice import ConvexDomain, Grid, build_grid
from .models import (
    AffinePsi,
    BallDomain,
    BoxDomain,
    CatalogPsi,
    GridSpec,
    PolynomialPsi,
    ProblemSpec,
)
from .oracles import (
    ExactSolution,
    affine_solution,
    holomorphic_solution,
    lorentzian_catenoid,
)

logger = logging.getLogger(__name__)

CATALOG_IDS = ("affine", "catenoid", "holomorphic_poly", "constant")

_CATALOG_PARAMS = {
    "affine": {"matrix", "offset"},
    "catenoid": {"c"},
    "holomorphic_poly": {"coefficients"},
    "constant": {"value"},
}

# (n, m) the closed form is defined for; None means "any".
_CATALOG_DIMENSIONS = {
    "catenoid": (2, 1),
    "holomorphic_poly": (2, 2),
}


def parse_scenario(text: Union[str, bytes]) -> ProblemSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("", f"Invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        spec = ProblemSpec.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        path = ".".join(str(part) for part in first["loc"])
        raise ParseError(path, first["msg"]) from exc
    validate_semantics(spec)
    return spec


def load_scenario(path: Union[str, Path]) -> ProblemSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(path), f"Cannot read scenario: {exc.strerror}") from exc
    return parse_scenario(text)


def emit_scenario(spec: ProblemSpec) -> str:
    return spec.model_dump_json(indent=2, exclude_none=True)


def with_spacing(spec: ProblemSpec, h: float) -> ProblemSpec:
    """Copy of ``spec`` with the grid spacing replaced."""
    return spec.model_copy(update={"grid": GridSpec(h=h)})


def _expect_length(values, length: int, what: str) -> None:
    if len(values) != length:
        raise DimensionMismatch(f"{what} has length {len(values)}, expected {length}.")


def _validate_matrix(matrix, offset, n: int, m: int, where: str) -> None:
    _expect_length(matrix, m, f"{where}.matrix")
    for row in matrix:
        _expect_length(row, n, f"{where}.matrix row")
    if offset is not None:
        _expect_length(offset, m, f"{where}.offset")


def validate_semantics(spec: ProblemSpec) -> None:
    """Checks that only make sense once the document is structurally valid."""
    n = spec.dimensions.n
    m = spec.dimensions.m
    if n < 2:
        raise DimensionMismatch(f"Domain dimension n={n}; the problem needs n >= 2.")
    if m < 1:
        raise DimensionMismatch(f"Codimension m={m}; the problem needs m >= 1.")

    domain = spec.domain
    if isinstance(domain, BoxDomain):
        _expect_length(domain.min, n, "domain.min")
        _expect_length(domain.max, n, "domain.max")
    elif isinstance(domain, BallDomain):
        _expect_length(domain.center, n, "domain.center")
    else:
        for hs in domain.halfspaces:
            _expect_length(hs.normal, n, "domain.halfspaces.normal")

    psi = spec.psi
    if isinstance(psi, AffinePsi):
        _validate_matrix(psi.matrix, psi.offset, n, m, "psi")
    elif isinstance(psi, PolynomialPsi):
        _expect_length(psi.components, m, "psi.components")
        for comp in psi.components:
            for term in comp:
                _expect_length(term.exponents, n, "psi.components.exponents")
                if any(e < 0 for e in term.exponents):
                    raise ParseError("psi.components.exponents", "Exponents must be >= 0")
    else:
        _validate_catalog(psi, n, m)

    if spec.perturbation is not None and not isinstance(domain, BoxDomain):
        raise ParseError(
            "perturbation", "A sine_bump perturbation vanishes on box faces only; use a box domain"
        )


def _validate_catalog(psi: CatalogPsi, n: int, m: int) -> None:
    if psi.id not in CATALOG_IDS:
        raise UnknownCatalogId(psi.id, CATALOG_IDS)
    for key in psi.params:
        if key not in _CATALOG_PARAMS[psi.id]:
            raise ParseError(f"psi.params.{key}", f"Unknown parameter for catalog entry {psi.id!r}")
    required = _CATALOG_DIMENSIONS.get(psi.id)
    if required is not None and (n, m) != required:
        raise DimensionMismatch(
            f"Catalog entry {psi.id!r} needs (n, m) = {required}, got ({n}, {m})."
        )
    params = psi.params
    if psi.id == "affine":
        if "matrix" not in params:
            raise ParseError("psi.params.matrix", "Field required")
        _validate_matrix(params["matrix"], params.get("offset"), n, m, "psi.params")
    elif psi.id == "constant" and "value" in params:
        _expect_length(params["value"], m, "psi.params.value")
    elif psi.id == "holomorphic_poly" and not params.get("coefficients"):
        raise ParseError("psi.params.coefficients", "Field required")


def build_domain(spec: ProblemSpec) -> ConvexDomain:
    domain = spec.domain
    if isinstance(domain, BoxDomain):
        return ConvexDomain.box(domain.min, domain.max)
    if isinstance(domain, BallDomain):
        return ConvexDomain.ball(domain.center, domain.radius)
    return ConvexDomain.polytope([(hs.normal, hs.offset) for hs in domain.halfspaces])


def _affine_parts(spec: ProblemSpec):
    psi = spec.psi
    n, m = spec.dimensions.n, spec.dimensions.m
    if isinstance(psi, AffinePsi):
        return np.asarray(psi.matrix, dtype=float), np.asarray(psi.offset, dtype=float)
    if psi.id == "affine":
        offset = psi.params.get("offset", [0.0] * m)
        return np.asarray(psi.params["matrix"], dtype=float), np.asarray(offset, dtype=float)
    value = psi.params.get("value", [0.0] * m)
    return np.zeros((m, n)), np.asarray(value, dtype=float)


def _is_affine(spec: ProblemSpec) -> bool:
    psi = spec.psi
    return isinstance(psi, AffinePsi) or (
        isinstance(psi, CatalogPsi) and psi.id in ("affine", "constant")
    )


def build_psi(spec: ProblemSpec) -> MapField:
    psi = spec.psi
    if _is_affine(spec):
        A, b = _affine_parts(spec)
        return AffineField(A=A, b=b)
    if isinstance(psi, PolynomialPsi):
        components = tuple(
            tuple((tuple(t.exponents), float(t.coefficient)) for t in comp)
            for comp in psi.components
        )
        return PolynomialField(n=spec.dimensions.n, components=components)
    if psi.id == "catenoid":
        return lorentzian_catenoid(float(psi.params.get("c", 1.0)))
    return holomorphic_solution(psi.params["coefficients"])


def exact_solution(spec: ProblemSpec, domain: ConvexDomain) -> Optional[ExactSolution]:
    """Exact stationary solution for ``spec``, or None when none is known."""
    psi = spec.psi
    try:
        if _is_affine(spec):
            return affine_solution(*_affine_parts(spec))
        if isinstance(psi, CatalogPsi) and psi.id == "catenoid":
            return lorentzian_catenoid(float(psi.params.get("c", 1.0)))
        if isinstance(psi, CatalogPsi) and psi.id == "holomorphic_poly":
            return holomorphic_solution(psi.params["coefficients"], domain=domain)
    except NotSpacelike as exc:
        logger.info("no exact solution for %r: %s", spec.name, exc)
    return None


@dataclass(frozen=True, eq=False)
class Scenario:
    spec: ProblemSpec
    domain: ConvexDomain
    grid: Grid
    psi: MapField
    initial: MapField
    exact: Optional[ExactSolution]


def prepare(spec: ProblemSpec) -> Scenario:
    domain = build_domain(spec)
    grid = build_grid(domain, spec.grid.h)
    psi = build_psi(spec)
    initial = psi
    bump = spec.perturbation
    if bump is not None and bump.amplitude != 0.0:
        initial = SumField(
            base=psi,
            extra=SineBump(
                lower=domain.lower, upper=domain.upper, amplitude=bump.amplitude, m=psi.m
            ),
        )
    return Scenario(
        spec=spec,
        domain=domain,
        grid=grid,
        psi=psi,
        initial=initial,
        exact=exact_solution(spec, domain),
    )

"""Closed-form maps Omega -> R^m with analytic first and second derivatives.

All evaluators accept points shaped ``(..., n)`` and return

* ``value``    -> ``(..., m)``
* ``jacobian`` -> ``(..., n, m)`` with ``J[i, beta] = d f^beta / d x^i``
* ``hessian``  -> ``(..., m, n, n)``
"""

from dataclasses import dataclass, field
from typing import Protocol, Sequence, Tuple

import numpy as np

from .errors import InvalidParameter


class MapField(Protocol):
    n: int
    m: int

    def value(self, x: np.ndarray) -> np.ndarray: ...

    def jacobian(self, x: np.ndarray) -> np.ndarray: ...

    def hessian(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class AffineField:
    """f(x) = A x + b with A of shape (m, n)."""

    A: np.ndarray
    b: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.A.T + self.b

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.A.T, x.shape[:-1] + (self.n, self.m)).copy()

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.m, self.n, self.n))


Term = Tuple[Tuple[int, ...], float]


def _eval_terms(x: np.ndarray, terms: Sequence[Term]) -> np.ndarray:
    out = np.zeros(x.shape[:-1])
    for exps, coef in terms:
        out = out + coef * np.prod(x ** np.asarray(exps, dtype=float), axis=-1)
    return out


def _derive(terms: Sequence[Term], k: int) -> Tuple[Term, ...]:
    out = []
    for exps, coef in terms:
        if exps[k] == 0:
            continue
        lowered = list(exps)
        lowered[k] -= 1
        out.append((tuple(lowered), coef * exps[k]))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class PolynomialField:
    """Per-component sums of ``coefficient * prod_i x_i ** exponents[i]``."""

    n: int
    components: Tuple[Tuple[Term, ...], ...]
    _d1: tuple = field(init=False, repr=False)
    _d2: tuple = field(init=False, repr=False)

    def __post_init__(self):
        for comp in self.components:
            for exps, _ in comp:
                if len(exps) != self.n or any(e < 0 for e in exps):
                    raise InvalidParameter(
                        f"Exponent vector {list(exps)} does not match n={self.n}."
                    )
        d1 = tuple(
            tuple(_derive(comp, i) for i in range(self.n)) for comp in self.components
        )
        d2 = tuple(
            tuple(tuple(_derive(d1[b][i], j) for j in range(self.n)) for i in range(self.n))
            for b in range(len(self.components))
        )
        object.__setattr__(self, "_d1", d1)
        object.__setattr__(self, "_d2", d2)

    @property
    def m(self) -> int:
        return len(self.components)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([_eval_terms(x, comp) for comp in self.components], axis=-1)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (self.n, self.m))
        for b in range(self.m):
            for i in range(self.n):
                out[..., i, b] = _eval_terms(x, self._d1[b][i])
        return out

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (self.m, self.n, self.n))
        for b in range(self.m):
            for i in range(self.n):
                for j in range(i, self.n):
                    v = _eval_terms(x, self._d2[b][i][j])
                    out[..., b, i, j] = v
                    out[..., b, j, i] = v
        return out


@dataclass(frozen=True, eq=False)
class SineBump:
    """amplitude * prod_i sin(pi (x_i - lo_i) / (hi_i - lo_i)) in every component.

    Vanishes on the faces of the box [lo, hi].
    """

    lower: np.ndarray
    upper: np.ndarray
    amplitude: float
    m: int

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def _phases(self, x):
        scale = np.pi / (self.upper - self.lower)
        theta = (np.asarray(x, dtype=float) - self.lower) * scale
        return np.sin(theta), np.cos(theta), scale

    def _scalar(self, x):
        s, _, _ = self._phases(x)
        return self.amplitude * np.prod(s, axis=-1)

    def value(self, x):
        v = self._scalar(x)
        return np.repeat(v[..., None], self.m, axis=-1)

    def _grad(self, x):
        s, c, scale = self._phases(x)
        g = np.empty(s.shape)
        for i in range(self.n):
            others = np.prod(np.delete(s, i, axis=-1), axis=-1)
            g[..., i] = self.amplitude * scale[i] * c[..., i] * others
        return g

    def jacobian(self, x):
        g = self._grad(x)
        return np.repeat(g[..., :, None], self.m, axis=-1)

    def hessian(self, x):
        s, c, scale = self._phases(x)
        n = self.n
        H = np.empty(s.shape[:-1] + (n, n))
        for i in range(n):
            for j in range(n):
                factors = []
                for k in range(n):
                    if k == i and k == j:
                        factors.append(-(scale[k] ** 2) * s[..., k])
                    elif k == i or k == j:
                        factors.append(scale[k] * c[..., k])
                    else:
                        factors.append(s[..., k])
                H[..., i, j] = self.amplitude * np.prod(np.stack(factors, axis=-1), axis=-1)
        return np.repeat(H[..., None, :, :], self.m, axis=-3)


@dataclass(frozen=True, eq=False)
class SumField:
    base: MapField
    extra: MapField

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def m(self) -> int:
        return self.base.m

    def value(self, x):
        return self.base.value(x) + self.extra.value(x)

    def jacobian(self, x):
        return self.base.jacobian(x) + self.extra.jacobian(x)

    def hessian(self, x):
        return self.base.hessian(x) + self.extra.hessian(x)

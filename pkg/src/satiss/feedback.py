"""Pointwise feedback maps and sampling checks of the admissibility properties.

All maps act coordinatewise on the values of a state. The checks here are
falsifiers: a pass means no counterexample was found among the samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .grid import GridFunction, State, inner, norm_l1

IDENTITY = "identity"
SAT = "sat"
DEADZONE_LINEAR = "deadzone_linear"
TABULATED = "tabulated"

KINDS = (IDENTITY, SAT, DEADZONE_LINEAR, TABULATED)


def sat_scalar(z):
    """Unit saturation: ``z`` inside (-1, 1), ``sign(z)`` otherwise.

    Accepts scalars or arrays.
    """
    out = np.clip(z, -1.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FeedbackMap:
    """A scalar nonlinearity lifted pointwise to states.

    ``deadzone_linear`` is the identity on ``|z| <= delta`` and saturates at
    level ``delta`` outside; with ``delta = 1`` it coincides with ``sat``.
    ``tabulated`` interpolates the samples ``(xs, ys)`` linearly and holds the
    end values constant beyond the table.
    """

    kind: str = IDENTITY
    delta: float = 1.0
    xs: tuple = field(default=(), repr=False)
    ys: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feedback kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == DEADZONE_LINEAR and not self.delta > 0:
            raise ValueError("deadzone_linear requires delta > 0")
        if self.kind == TABULATED:
            xs = np.asarray(self.xs, dtype=float)
            ys = np.asarray(self.ys, dtype=float)
            if xs.ndim != 1 or xs.size < 2 or xs.shape != ys.shape:
                raise ValueError("tabulated map needs matching xs, ys with at least two samples")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("tabulated xs must be strictly increasing")
            if np.interp(0.0, xs, ys) != 0.0:
                raise ValueError("tabulated map must satisfy map(0) = 0")

    @classmethod
    def identity(cls) -> "FeedbackMap":
        return cls(IDENTITY)

    @classmethod
    def sat(cls) -> "FeedbackMap":
        return cls(SAT)

    @classmethod
    def deadzone_linear(cls, delta: float) -> "FeedbackMap":
        return cls(DEADZONE_LINEAR, delta=float(delta))

    @classmethod
    def tabulated(cls, xs: Sequence[float], ys: Sequence[float]) -> "FeedbackMap":
        return cls(TABULATED, xs=tuple(map(float, xs)), ys=tuple(map(float, ys)))

    @property
    def is_nondecreasing(self) -> bool:
        if self.kind == TABULATED:
            return bool(np.all(np.diff(self.ys) >= 0))
        return True

    @property
    def lipschitz_bound(self) -> float:
        """Global Lipschitz constant of the scalar map (exact for these kinds)."""
        if self.kind == TABULATED:
            return float(np.max(np.abs(np.diff(self.ys) / np.diff(self.xs))))
        return 1.0

    def scalar(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == IDENTITY:
            out = z.copy()
        elif self.kind == SAT:
            out = np.clip(z, -1.0, 1.0)
        elif self.kind == DEADZONE_LINEAR:
            out = np.clip(z, -self.delta, self.delta)
        else:
            out = np.interp(z, self.xs, self.ys)
        return float(out) if out.ndim == 0 else out

    def __call__(self, u: State) -> State:
        return apply(self, u)


def apply(sigma: FeedbackMap, u: State) -> State:
    return u.like(sigma.scalar(u.values))


@dataclass(frozen=True)
class MonotoneReport:
    min_value: float
    sample_count: int
    passed: bool


def check_monotone(
    sigma: FeedbackMap, samples: Iterable[tuple[State, State]], tol: float = 1e-12
) -> MonotoneReport:
    """Minimum of ``<sigma(u) - sigma(v), u - v>`` over the sample pairs."""
    worst = np.inf
    count = 0
    for u, v in samples:
        u.check_compatible(v)
        diff = u - v
        worst = min(worst, (apply(sigma, u) - apply(sigma, v)).inner(diff))
        count += 1
    if count == 0:
        raise ValueError("check_monotone needs at least one sample pair")
    return MonotoneReport(float(worst), count, bool(worst >= -tol))


@dataclass(frozen=True)
class LipschitzReport:
    radius: float
    estimate: float
    sample_count: int
    seed: int


def _random_in_ball(rng: np.random.Generator, N: int, r: float) -> GridFunction:
    g = GridFunction(rng.standard_normal(N))
    return g * (r * rng.uniform() ** (1.0 / 3.0) / g.norm())


def estimate_local_lipschitz(
    sigma: FeedbackMap, r: float, sample_count: int = 1000, seed: int = 0, N: int = 64
) -> LipschitzReport:
    """Largest sampled quotient ``|sigma(u) - sigma(v)| / |u - v|`` on the L2 ball of radius r.

    Half the pairs are independent points of the ball; the other half are
    close pairs, which probe the local slope. The result is a lower bound on
    the true constant ``k_r``.
    """
    if not r > 0:
        raise ValueError("radius r must be positive")
    rng = np.random.default_rng(seed)
    best = 0.0
    for k in range(sample_count):
        u = _random_in_ball(rng, N, r)
        if k % 2:
            v = _random_in_ball(rng, N, r)
        else:
            v = u + GridFunction(rng.standard_normal(N)) * (1e-3 * r)
            if v.norm() > r:
                v = v * (r / v.norm())
        dist = (u - v).norm()
        if dist == 0.0:
            continue
        best = max(best, (apply(sigma, u) - apply(sigma, v)).norm() / dist)
    return LipschitzReport(float(r), float(best), sample_count, seed)


@dataclass(frozen=True)
class PropertyIVReport:
    lhs: float
    rhs: float
    passed: bool


def check_property_iv(
    u: GridFunction, sigma: FeedbackMap | None = None, tol: float = 1e-12
) -> PropertyIVReport:
    """Dual-norm inequality ``||sigma(u) - u||_{L1} <= <sigma(u), u>`` with S = L^inf."""
    sigma = sigma or FeedbackMap.sat()
    s = apply(sigma, u)
    lhs = norm_l1(s - u)
    rhs = inner(s, u)
    return PropertyIVReport(lhs, rhs, bool(lhs <= rhs + tol))


def check_property_v(
    sigma: FeedbackMap, u: State, v: State
) -> tuple[float, float | None]:
    """Cross term ``<u, sigma(u+v) - sigma(u)>`` and its ratio to ``||v||``.

    The ratio is ``None`` when ``v = 0``. Its supremum over samples is an
    empirical lower estimate of the constant ``C0``.
    """
    u.check_compatible(v)
    value = u.inner(apply(sigma, u + v) - apply(sigma, u))
    nv = v.norm()
    return float(value), (float(value / nv) if nv > 0 else None)

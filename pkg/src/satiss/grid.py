"""Grid functions on (0, 1) and finite-dimensional state vectors.

Grid functions are sampled at cell midpoints ``xi_i = (i + 1/2) / N`` and
integrated with the midpoint rule. Midpoint sampling keeps singular profiles
such as ``xi**-a`` finite at every node.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np


def _as_finite_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size < 1:
        raise ValueError(f"{name} must contain at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


class State:
    """Common behaviour of the two state types.

    Subclasses store their data in ``values`` and define the inner product.
    Arithmetic is elementwise and only between states of the same type and
    size.
    """

    values: np.ndarray

    def like(self, values) -> "State":
        raise NotImplementedError

    def inner(self, other: "State") -> float:
        raise NotImplementedError

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    @property
    def size(self) -> int:
        return self.values.size

    def check_compatible(self, other: "State") -> None:
        if type(self) is not type(other) or self.size != other.size:
            raise ValueError(
                f"dimension mismatch: {type(self).__name__}[{self.size}] vs "
                f"{type(other).__name__}[{other.size}]"
            )

    def __add__(self, other):
        if isinstance(other, State):
            self.check_compatible(other)
            return self.like(self.values + other.values)
        return self.like(self.values + other)

    def __sub__(self, other):
        if isinstance(other, State):
            self.check_compatible(other)
            return self.like(self.values - other.values)
        return self.like(self.values - other)

    def __mul__(self, scalar):
        return self.like(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)


@dataclass(frozen=True, eq=False)
class GridFunction(State):
    """Midpoint samples of a function in L2(0, 1)."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_finite_array(self.values, "values"))

    @property
    def N(self) -> int:
        return self.values.size

    @property
    def nodes(self) -> np.ndarray:
        return midpoints(self.N)

    @classmethod
    def from_callable(cls, f: Callable[[np.ndarray], np.ndarray], N: int) -> "GridFunction":
        return cls(np.broadcast_to(f(midpoints(N)), (N,)))

    @classmethod
    def constant(cls, c: float, N: int) -> "GridFunction":
        return cls(np.full(N, float(c)))

    @classmethod
    def zeros(cls, N: int) -> "GridFunction":
        return cls(np.zeros(N))

    def like(self, values) -> "GridFunction":
        return GridFunction(values)

    def inner(self, other: "GridFunction") -> float:
        return inner(self, other)

    def norm(self) -> float:
        return norm_l2(self)


@dataclass(frozen=True, eq=False)
class FiniteVector(State):
    """Vector in R^m with the Euclidean inner product."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_finite_array(self.values, "entries"))

    @property
    def entries(self) -> np.ndarray:
        return self.values

    @property
    def m(self) -> int:
        return self.values.size

    def like(self, values) -> "FiniteVector":
        return FiniteVector(values)

    def inner(self, other: "FiniteVector") -> float:
        self.check_compatible(other)
        return float(np.dot(self.values, other.values))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def midpoints(N: int) -> np.ndarray:
    if N < 1:
        raise ValueError("grid resolution N must be >= 1")
    return (np.arange(N) + 0.5) / N


def norm_l2(f: GridFunction) -> float:
    # scaled 2-norm avoids overflow for large amplitudes
    return float(np.linalg.norm(f.values) / np.sqrt(f.N))


def norm_l1(f: GridFunction) -> float:
    return float(np.mean(np.abs(f.values)))


def norm_linf(f: GridFunction) -> float:
    return float(np.max(np.abs(f.values)))


def inner(f: GridFunction, g: GridFunction) -> float:
    f.check_compatible(g)
    return float(np.dot(f.values, g.values) / f.N)


def cell_shift(t: float, N: int, tol: float = 1e-9) -> int | None:
    """Number of cells equivalent to a shift by ``t``; ``None`` if ``t*N`` is not an integer."""
    k = t * N
    kr = round(k)
    if abs(k - kr) <= tol * max(1.0, abs(k)):
        return int(kr)
    return None


def shift_periodic(f: GridFunction, t: float, strict: bool = True) -> GridFunction:
    """Evaluate ``xi -> f(xi + t)`` with ``f`` extended with period 1.

    Exact (a cell permutation) when ``t*N`` is an integer. Otherwise raises in
    strict mode, or interpolates linearly with a warning.
    """
    N = f.N
    k = cell_shift(t, N)
    if k is not None:
        return GridFunction(np.roll(f.values, -(k % N)))
    if strict:
        raise ValueError(
            f"shift t={t!r} is not a multiple of the cell width 1/{N}; "
            "use a grid-aligned time or strict=False"
        )
    warnings.warn(
        f"interpolated periodic shift by t={t!r} on N={N}; result carries numerical diffusion",
        InterpolatedShiftWarning,
        stacklevel=2,
    )
    pos = (np.arange(N) + (t % 1.0) * N) % N
    lo = np.floor(pos).astype(int)
    w = pos - lo
    v = f.values
    return GridFunction((1 - w) * v[lo % N] + w * v[(lo + 1) % N])


class InterpolatedShiftWarning(UserWarning):
    pass

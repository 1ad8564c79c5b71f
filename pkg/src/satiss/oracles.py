"""Closed-form solutions of the pointwise-saturated systems and the singular
counterexample family.

The ODE ``x' = -sat(x)`` with ``x(0) = f`` is solved in closed form pointwise.
The saturated transport equation ``y' = y_xi - sat(y)`` with periodic boundary
is the same flow read along characteristics, ``y(t, xi) = x(t, xi + t)``.

The family ``f_n(xi) = n**-0.5 * xi**-a_n`` with ``a_n = (1 - 1/n) / 2`` has
unit L2 norm for every n, yet its saturated evolutions keep norm close to 1
for arbitrarily long times as n grows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .grid import GridFunction, State, midpoints, shift_periodic


def sat_ode_flow(values, t: float) -> np.ndarray:
    """Pointwise solution of ``x' = -sat(x)`` after time ``t`` from ``values``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    f = np.asarray(values, dtype=float)
    out = np.empty_like(f)
    upper = f >= 1 + t
    lower = f <= -1 - t
    linear = np.abs(f) < 1
    rising = (f >= 1) & ~upper
    falling = (f <= -1) & ~lower
    out[upper] = f[upper] - t
    out[lower] = f[lower] + t
    out[linear] = np.exp(-t) * f[linear]
    out[rising] = np.exp(f[rising] - 1 - t)
    out[falling] = -np.exp(-f[falling] - 1 - t)
    return out


def exact_sat_ode_solution(f: State, t: float) -> State:
    return f.like(sat_ode_flow(f.values, t))


def exact_sat_transport_solution(f: GridFunction, t: float, strict: bool = True) -> GridFunction:
    return shift_periodic(exact_sat_ode_solution(f, t), t, strict=strict)


def alpha_n(n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    return 0.5 * (1.0 - 1.0 / n)


def counterexample_value(n: int, xi) -> np.ndarray:
    """``f_n`` evaluated at points in (0, 1]."""
    xi = np.asarray(xi, dtype=float)
    return np.exp(-0.5 * math.log(n) - alpha_n(n) * np.log(xi))


def counterexample_profile(n: int, N: int) -> GridFunction:
    return GridFunction(counterexample_value(n, midpoints(N)))


@dataclass(frozen=True)
class CounterexampleProfile:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def alpha(self) -> float:
        return alpha_n(self.n)

    def __call__(self, xi):
        return counterexample_value(self.n, xi)

    def sample(self, N: int) -> GridFunction:
        return counterexample_profile(self.n, N)


def _log_xi_threshold(n: int, t: float) -> float:
    if n < 2:
        raise ValueError("xi threshold needs n >= 2 (f_1 is constant)")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return -(0.5 * math.log(n) + math.log1p(t)) / alpha_n(n)


def xi_threshold(n: int, t: float) -> float:
    """Unique point where ``f_n(xi) = 1 + t``."""
    return math.exp(_log_xi_threshold(n, t))


def norm_lower_bound(n: int, t: float) -> float:
    """Closed form of ``int_0^{xi_{t,n}} (f_n - t)^2``, a lower bound for ``||x_n(t)||^2``.

    Every power is evaluated through its logarithm, so the value stays finite
    for n in the millions.
    """
    if n < 2:
        raise ValueError("norm_lower_bound needs n >= 2")
    if t < 0:
        raise ValueError("t must be nonnegative")
    e = 1.0 / (1.0 - n)
    ln_n = math.log(n)
    ln_1t = math.log1p(t)
    first = math.exp(e * (ln_n + 2.0 * ln_1t))
    cross = 4.0 * t / (n + 1) * math.exp(e * (ln_n + (1.0 + n) * ln_1t))
    last = t * t * math.exp(e * (n * ln_n + 2.0 * n * ln_1t))
    return first - cross + last


def _threshold_integrand(n: int, t: float, log_xi_t: float):
    # substitution xi = xi_t * w**n removes the endpoint singularity of f_n**2
    half = 0.5 * (n - 1)

    def g(w):
        if w <= 0.0:
            return 0.0
        log_w = math.log(w)
        log_f = -0.5 * math.log(n) - alpha_n(n) * (log_xi_t + n * log_w)
        damp = math.exp(half * log_w)
        return (math.exp(log_f + half * log_w) - t * damp) ** 2 * n * math.exp(log_xi_t)

    return g


def threshold_integral_quadrature(n: int, t: float, epsrel: float = 1e-10) -> float:
    """Adaptive quadrature of ``(f_n - t)^2`` over ``[0, xi_{t,n}]``.

    Independent of :func:`norm_lower_bound`; the integrand is evaluated from
    the profile itself, not from the expanded antiderivatives.
    """
    log_xi_t = _log_xi_threshold(n, t)
    # the t-dependent terms peak within O(1/n) of w = 1
    points = [1.0 - k / n for k in (1, 4, 16, 64, 256) if k < n]
    val, _ = integrate.quad(
        _threshold_integrand(n, t, log_xi_t), 0.0, 1.0, epsabs=0.0, epsrel=epsrel, limit=500,
        points=points or None,
    )
    return val


def _sq_solution(n: int, t: float):
    def g(xi):
        return float(sat_ode_flow(counterexample_value(n, xi), t)) ** 2

    return g


def _integrate_solution_sq(n: int, t: float, a: float, b: float, epsrel: float) -> float:
    """``int_a^b x_n(t, xi)^2`` for the ODE solution, split at its branch points."""
    if b <= a:
        return 0.0
    if n == 1:
        return (b - a) * math.exp(-2.0 * t)
    xi_t = xi_threshold(n, t)
    xi_0 = xi_threshold(n, 0.0)
    total = 0.0
    lo = a
    if lo < xi_t:
        hi = min(b, xi_t)
        if lo == 0.0:
            piece = threshold_integral_quadrature(n, t, epsrel)
            if hi < xi_t:
                piece -= _plain_quad(_sq_solution(n, t), hi, xi_t, epsrel)
        else:
            piece = _plain_quad(_sq_solution(n, t), lo, hi, epsrel)
        total += piece
        lo = hi
    for edge in (xi_0, 1.0):
        if lo < b and lo < edge:
            hi = min(b, edge)
            total += _plain_quad(_sq_solution(n, t), lo, hi, epsrel)
            lo = hi
    return total


def _plain_quad(g, a: float, b: float, epsrel: float) -> float:
    if b <= a:
        return 0.0
    if a > 0.0 and b > 10.0 * a:
        # integrand behaves like 1/xi near small a; integrate in log(xi)
        val, _ = integrate.quad(
            lambda u: g(math.exp(u)) * math.exp(u), math.log(a), math.log(b),
            epsabs=0.0, epsrel=epsrel, limit=500,
        )
        return val
    val, _ = integrate.quad(g, a, b, epsabs=0.0, epsrel=epsrel, limit=500)
    return val


def counterexample_norm_sq(
    n: int, t: float, transport: bool = False, epsrel: float = 1e-10
) -> float:
    """Quadrature of ``||x_n(t)||^2`` over the whole interval.

    With ``transport=True`` the integral is taken of ``y(t, xi) = x(t, xi + t)``
    in the transport coordinates: the interval is split where the periodic
    extension wraps, and each piece is pulled back to the ODE coordinates.
    """
    if not transport:
        return _integrate_solution_sq(n, t, 0.0, 1.0, epsrel)
    tau = t % 1.0
    # xi in [0, 1 - tau) maps to xi + tau; xi in [1 - tau, 1) maps to xi + tau - 1
    return _integrate_solution_sq(n, t, tau, 1.0, epsrel) + _integrate_solution_sq(
        n, t, 0.0, tau, epsrel
    )


@dataclass(frozen=True)
class WitnessResult:
    t: float
    threshold: float
    n: int | None
    bound: float | None

    @property
    def found(self) -> bool:
        return self.n is not None


def geometric_ladder(max_power: int = 20) -> list[int]:
    return [2**k for k in range(1, max_power + 1)]


def find_witness_n(t: float, threshold: float, n_candidates: Sequence[int]) -> WitnessResult:
    """Smallest candidate ``n`` whose lower bound exceeds ``threshold**2``."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    candidates = sorted(set(int(n) for n in n_candidates))
    if not candidates:
        raise ValueError("empty candidate list")
    for n in candidates:
        bound = norm_lower_bound(n, t)
        if bound > threshold**2:
            return WitnessResult(t, threshold, n, bound)
    return WitnessResult(t, threshold, None, None)

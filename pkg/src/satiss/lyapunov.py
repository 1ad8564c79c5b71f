"""Lyapunov functions and the inequalities used to certify (L)ISS.

Quadratic functions ``<Px, x>``, the sup-weighted function
``V(x) = max_s e^{omega s / 2} |T~(s) x|`` built from the closed-loop
semigroup, Dini-derivative estimation along simulated trajectories, and
finite-dimensional Lyapunov equations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .grid import GridFunction, State, norm_l2, norm_linf
from .systems import (
    MATRIX,
    PERIODIC_SHIFT,
    Disturbance,
    GeneratorSpec,
    SystemSpec,
    Trajectory,
    _propagator,
    solve_mild,
)

QUADRATIC = "quadratic"
SUP_WEIGHTED = "sup_weighted"


@dataclass(frozen=True, eq=False)
class LyapunovSpec:
    """Either ``V(x) = <P x, x>`` or the sup-weighted function of a stable semigroup.

    For ``quadratic``, ``P`` is a symmetric matrix or a scalar multiple of the
    identity (the only option on grid functions). For ``sup_weighted``,
    ``s_max`` defaults to ``(2 / omega) ln M``, past which the weighted orbit
    cannot exceed ``|x|``.
    """

    kind: str = QUADRATIC
    P: float | np.ndarray = 1.0
    omega: float = 1.0
    M: float = 1.0
    s_max: float | None = None
    s_steps: int = 200

    def __post_init__(self):
        if self.kind == QUADRATIC:
            if np.ndim(self.P) == 0:
                if float(self.P) < 0:
                    raise ValueError("scalar P must be nonnegative")
                object.__setattr__(self, "P", float(self.P))
            else:
                P = np.atleast_2d(np.asarray(self.P, dtype=float))
                if P.shape[0] != P.shape[1] or not np.allclose(P, P.T, atol=1e-12):
                    raise ValueError("P must be square and symmetric")
                if np.linalg.eigvalsh(P).min() < -1e-12:
                    raise ValueError("P must be positive semidefinite")
                object.__setattr__(self, "P", P)
        elif self.kind == SUP_WEIGHTED:
            if not (self.omega > 0 and self.M >= 1 and self.s_steps >= 1):
                raise ValueError("sup_weighted needs omega > 0, M >= 1, s_steps >= 1")
            floor = 2.0 / self.omega * math.log(self.M)
            if self.s_max is None:
                object.__setattr__(self, "s_max", floor)
            elif self.s_max < floor - 1e-12:
                raise ValueError(
                    f"s_max={self.s_max} is below (2/omega) ln M = {floor}; the truncated maximum is unsound"
                )
        else:
            raise ValueError(f"unknown Lyapunov kind {self.kind!r}")

    @classmethod
    def quadratic(cls, P=1.0) -> "LyapunovSpec":
        return cls(QUADRATIC, P=P)

    @classmethod
    def sup_weighted(cls, omega: float, M: float = 1.0, s_max: float | None = None, s_steps: int = 200):
        return cls(SUP_WEIGHTED, omega=omega, M=M, s_max=s_max, s_steps=s_steps)

    @property
    def s_grid(self) -> np.ndarray:
        if self.s_max == 0:
            return np.zeros(1)
        return np.linspace(0.0, self.s_max, self.s_steps + 1)


def v_eval(spec: LyapunovSpec, closed_loop: GeneratorSpec | None, x: State) -> float:
    if spec.kind == QUADRATIC:
        if isinstance(spec.P, float):
            return spec.P * x.inner(x)
        return float(x.values @ spec.P @ x.values)
    if closed_loop is None:
        raise ValueError("sup_weighted V needs the closed-loop generator")
    if closed_loop.kind == PERIODIC_SHIFT:
        raise ValueError("sup_weighted V is evaluated on bounded generators only")
    s = spec.s_grid
    if s.size == 1:
        return x.norm()
    if closed_loop.kind != MATRIX:
        # T(s) is the scalar e^{-rate s}, so the orbit never needs stepping
        rate = closed_loop.alpha + closed_loop.damping
        return x.norm() * float(np.max(np.exp((0.5 * spec.omega - rate) * s)))
    ds = s[1] - s[0]
    step = _propagator(closed_loop, ds, x)
    best = x.norm()
    y = x
    for sk in s[1:]:
        y = step(y)
        best = max(best, math.exp(0.5 * spec.omega * sk) * y.norm())
    return best


@dataclass(frozen=True)
class DiniEstimate:
    value: float
    h_list: tuple
    quotients: tuple
    extrapolated: bool


def dini_derivative(
    spec: LyapunovSpec,
    system: SystemSpec,
    x0: State,
    d: Disturbance | None = None,
    h_list: Sequence[float] = (1e-2, 1e-3, 1e-4),
    substeps: int = 4,
) -> DiniEstimate:
    """Upper right derivative of ``V`` along the mild solution from ``x0``.

    Forward quotients ``(V(x(h)) - V(x0)) / h`` are formed for every ``h``
    (each integrated with ``substeps`` steps) and the two smallest are
    combined by one Richardson step, which removes the O(h) term.
    """
    h_list = sorted((float(h) for h in h_list), reverse=True)
    if not h_list or h_list[-1] <= 0:
        raise ValueError("h_list must contain positive step sizes")
    closed = system.closed_loop_generator() if spec.kind == SUP_WEIGHTED else None
    v0 = v_eval(spec, closed, x0)
    quotients = []
    for h in h_list:
        traj = solve_mild(system, x0, d, T_end=h, dt=h / substeps)
        quotients.append((v_eval(spec, closed, traj.final) - v0) / h)
    if len(h_list) >= 2:
        h1, h2 = h_list[-2], h_list[-1]
        q1, q2 = quotients[-2], quotients[-1]
        r = h1 / h2
        value = (r * q2 - q1) / (r - 1.0)
        extrapolated = True
    else:
        value = quotients[-1]
        extrapolated = False
    return DiniEstimate(float(value), tuple(h_list), tuple(quotients), extrapolated)


@dataclass(frozen=True)
class DissipationSample:
    dini: float
    bound: float
    scale: float

    @property
    def margin(self) -> float:
        return self.bound - self.dini


@dataclass(frozen=True)
class DissipationReport:
    samples: tuple
    passed: bool
    worst_margin: float
    rel_tol: float


def check_dissipation_chain(
    system: SystemSpec,
    alpha: float,
    k_r: float,
    samples: Sequence[tuple[State, Disturbance]],
    eps: float,
    rel_tol: float = 1e-2,
    h_list: Sequence[float] = (1e-2, 1e-3, 1e-4),
) -> DissipationReport:
    """Dini derivative of ``|x|^2`` against ``(eps - 2 alpha)|x0|^2 + (k_r |B| |d(0)|)^2 / eps``.

    A sample passes when the estimate is below the bound plus
    ``rel_tol * (1 + |x0|^2 + (k_r |B| |d(0)|)^2)``.
    """
    if not 0 < eps < 2 * alpha:
        raise ValueError(f"eps must lie in (0, 2 alpha) = (0, {2 * alpha})")
    V = LyapunovSpec.quadratic()
    normB = system.normB
    rows = []
    for x0, d in samples:
        d = d or Disturbance.zero()
        d0 = d.at(0.0)
        gain = k_r * normB * (d0.norm() if d0 is not None else 0.0)
        bound = (eps - 2 * alpha) * x0.norm() ** 2 + gain**2 / eps
        est = dini_derivative(V, system, x0, d, h_list)
        rows.append(DissipationSample(est.value, bound, 1.0 + x0.norm() ** 2 + gain**2))
    if not rows:
        raise ValueError("no samples given")
    passed = all(r.margin >= -rel_tol * r.scale for r in rows)
    worst = min(r.margin / r.scale for r in rows)
    return DissipationReport(tuple(rows), passed, worst, rel_tol)


@dataclass(frozen=True)
class ISSEnvelopeReport:
    times: np.ndarray
    norms: np.ndarray
    envelope: np.ndarray
    passed: bool
    worst_ratio: float


def iss_gain(s: float, alpha: float, eps: float, k_r: float, normB: float) -> float:
    """Gain ``rho(s) = k_r |B| s / sqrt(eps (2 alpha - eps))`` from the comparison argument."""
    return k_r * normB * s / math.sqrt(eps * (2 * alpha - eps))


def check_iss_estimate(
    traj: Trajectory,
    d: Disturbance | None,
    alpha: float,
    eps: float,
    k_r: float,
    normB: float,
    tol: float = 1e-9,
) -> ISSEnvelopeReport:
    """``|x(t)| <= e^{-(alpha - eps/2) t} |x0| + rho(|d|_{L^inf(0,t)})`` at every sample time.

    The envelope follows from integrating the dissipation inequality for
    ``V = |x|^2``: ``V' <= -(2 alpha - eps) V + (k_r |B| |d|)^2 / eps``.
    """
    if not 0 < eps < 2 * alpha:
        raise ValueError(f"eps must lie in (0, 2 alpha) = (0, {2 * alpha})")
    d = d or Disturbance.zero()
    norms = traj.norms()
    x0 = norms[0]
    env = np.array(
        [
            math.exp(-(alpha - eps / 2) * t) * x0 + iss_gain(d.sup_norm(t), alpha, eps, k_r, normB)
            for t in traj.times
        ]
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(env > 0, norms / env, np.where(norms > tol, np.inf, 0.0))
    passed = bool(np.all(norms <= env + tol))
    return ISSEnvelopeReport(traj.times, norms, env, passed, float(np.max(ratio)))


def spectral_abscissa(A: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(A).real))


def solve_lyapunov_finite(A_tilde) -> np.ndarray:
    """Symmetric ``P`` with ``A~^T P + P A~ = -I``, by a Kronecker linear solve."""
    A = np.atleast_2d(np.asarray(A_tilde, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if spectral_abscissa(A) >= 0:
        raise ValueError("matrix is not Hurwitz; the Lyapunov equation has no positive solution")
    m = A.shape[0]
    eye = np.eye(m)
    # vec(A^T P + P A) = (I kron A^T + A^T kron I) vec(P) with column-major vec
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    p = np.linalg.solve(K, -eye.reshape(-1, order="F"))
    P = p.reshape(m, m, order="F")
    return 0.5 * (P + P.T)


def lyapunov_residual(A_tilde, P) -> float:
    A = np.atleast_2d(np.asarray(A_tilde, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return float(np.linalg.norm(A.T @ P + P @ A + np.eye(A.shape[0]), 2))


@dataclass(frozen=True)
class QuadraticFormReport:
    max_value: float
    sample_count: int
    passed: bool


def check_quadratic_form(P, A_tilde, samples: Sequence, tol: float = 1e-8) -> QuadraticFormReport:
    """Max over samples of ``2 Re<A~ x, P x> + |x|^2``; nonpositive means ``P`` certifies decay."""
    A = np.atleast_2d(np.asarray(A_tilde, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    X = np.atleast_2d(np.asarray([getattr(s, "values", s) for s in samples], dtype=float))
    vals = 2 * np.einsum("ij,ij->i", X @ A.T, X @ P.T) + np.einsum("ij,ij->i", X, X)
    worst = float(vals.max())
    return QuadraticFormReport(worst, len(X), worst <= tol)


@dataclass(frozen=True)
class EmbeddingReport:
    constant: float
    ratios: tuple


def check_condition_30(samples: Sequence[tuple[GridFunction, GridFunction]]) -> EmbeddingReport:
    """Empirical constant in ``|x|_{L^inf} <= c (|x|_{L2} + |x'|_{L2})`` over (value, derivative) pairs."""
    ratios = []
    for x, dx in samples:
        denom = norm_l2(x) + norm_l2(dx)
        if denom == 0:
            raise ValueError("sample with zero graph norm")
        ratios.append(norm_linf(x) / denom)
    if not ratios:
        raise ValueError("no samples given")
    return EmbeddingReport(max(ratios), tuple(ratios))


@dataclass(frozen=True)
class EquivalenceReport:
    dissipative: bool
    weighted_contraction: bool
    scaled_identity: bool
    dissipativity_value: float
    weighted_norm_max: float
    quadratic_value: float

    @property
    def consistent(self) -> bool:
        return self.dissipative == self.weighted_contraction == self.scaled_identity


def check_remark28_equivalence(
    A: GeneratorSpec | np.ndarray,
    omega: float,
    dim: int = 2,
    samples: int = 2000,
    t_max: float | None = None,
    t_steps: int = 400,
    seed: int = 0,
    tol: float = 1e-10,
) -> EquivalenceReport:
    """Test three equivalent conditions on a bounded generator independently.

    (a) ``Re<Ax, x> <= -omega |x|^2`` on random unit vectors; (b)
    ``sup_t |e^{omega t} T(t)| <= 1`` on a time grid using matrix exponentials;
    (c) ``P = I / omega`` satisfies ``Re<Ax, Px> <= -|x|^2`` via
    :func:`check_quadratic_form`-style sampling.
    """
    if isinstance(A, GeneratorSpec):
        M = A.dense(A.dim if A.kind == MATRIX else dim)
    else:
        M = np.atleast_2d(np.asarray(A, dtype=float))
    m = M.shape[0]
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, m))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    X = np.vstack([X, np.eye(m)])
    ax = np.einsum("ij,ij->i", X @ M.T, X)
    a_val = float(np.max(ax + omega))
    ts = np.linspace(0.0, t_max if t_max is not None else 10.0 / omega, t_steps + 1)
    b_val = max(float(np.linalg.norm(math.exp(omega * t) * expm(t * M), 2)) for t in ts)
    c_val = float(np.max(ax / omega + 1.0))
    return EquivalenceReport(
        dissipative=a_val <= tol,
        weighted_contraction=b_val <= 1.0 + tol,
        scaled_identity=c_val <= tol,
        dissipativity_value=a_val,
        weighted_norm_max=b_val,
        quadratic_value=c_val,
    )

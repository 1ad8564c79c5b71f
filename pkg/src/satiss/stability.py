"""Empirical stability classification.

GAS is checked trajectory by trajectory. UGAS is falsified by the singular
family ``f_n``: unit-norm data whose solutions stay above a fixed level at any
prescribed time once n is large. Exponential decay rates and disturbance
gains are fitted from simulations. None of these verdicts is a proof.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .feedback import SAT
from .grid import FiniteVector, GridFunction, State, midpoints
from .oracles import (
    counterexample_norm_sq,
    counterexample_profile,
    find_witness_n,
    geometric_ladder,
    norm_lower_bound,
    threshold_integral_quadrature,
)
from .systems import (
    MATRIX,
    PERIODIC_SHIFT,
    ZERO,
    Disturbance,
    SystemSpec,
    solve_mild,
)

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


@dataclass
class StabilityReport:
    verdicts: dict = field(default_factory=dict)
    K: dict = field(default_factory=dict)
    mu: dict = field(default_factory=dict)
    envelope: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)
    notes: list = field(default_factory=list)


@dataclass(frozen=True)
class GASResult:
    verdict: str
    final_norms: tuple
    monotone: tuple
    tol: float


def classify_gas(
    system: SystemSpec,
    x0_list: Sequence[State],
    T_end: float,
    tol: float,
    dt: float = 1.0,
    mono_tol: float = 1e-12,
) -> GASResult:
    """Undisturbed trajectories must shrink below ``tol`` by ``T_end`` without ever growing.

    Norm monotonicity is the contraction-semigroup property of the closed loop;
    together with convergence it is equivalent to GAS for these systems.
    """
    finals, monotone = [], []
    for x0 in x0_list:
        norms = solve_mild(system, x0, None, T_end, dt).norms()
        finals.append(float(norms[-1]))
        monotone.append(bool(np.all(np.diff(norms) <= mono_tol * max(1.0, norms[0]))))
    ok = all(f <= tol for f in finals) and all(monotone)
    return GASResult(PASS if ok else FAIL, tuple(finals), tuple(monotone), tol)


def _is_counterexample_system(system: SystemSpec) -> bool:
    return (
        system.scalar_b
        and system.B == 1.0
        and system.sigma.kind == SAT
        and system.A.kind in (ZERO, PERIODIC_SHIFT)
        and system.A.damping == 0.0
    )


def falsify_ugas(
    system: SystemSpec,
    t_grid: Sequence[float],
    threshold: float = 0.5,
    n_candidates: Sequence[int] | None = None,
    N: int = 4096,
    dt: float | None = None,
) -> StabilityReport:
    """Search the family ``f_n`` for solutions with ``|x_n(t)| > threshold`` at each ``t``.

    For the unit-saturated systems with ``A = 0`` or the periodic shift the
    closed-form lower bound screens the candidates and the chosen witness is
    confirmed by quadrature of the exact solution. Other systems are
    simulated on an N-cell grid. UGAS is falsified when every ``t`` has a
    witness.
    """
    report = StabilityReport()
    exact = _is_counterexample_system(system)
    transport = system.A.kind == PERIODIC_SHIFT
    if n_candidates is None:
        n_candidates = geometric_ladder(20) if exact else geometric_ladder(8)
    candidates = sorted(set(int(n) for n in n_candidates))
    for t in t_grid:
        if exact:
            w = find_witness_n(t, threshold, candidates)
            best_bound = max(norm_lower_bound(n, t) for n in candidates if n >= 2)
            report.envelope.append((float(t), math.sqrt(best_bound)))
            if w.found:
                norm_sq = counterexample_norm_sq(w.n, t, transport=transport)
                confirmed = math.sqrt(norm_sq) > threshold
                report.witnesses.append(
                    {
                        "t": float(t),
                        "n": w.n,
                        "bound": w.bound,
                        "bound_quadrature": threshold_integral_quadrature(w.n, t),
                        "norm": math.sqrt(norm_sq),
                        "confirmed": confirmed,
                    }
                )
        else:
            norms = {}
            for n in candidates:
                x0 = counterexample_profile(n, N)
                step = dt if dt is not None else _default_dt(system, N, t)
                traj = solve_mild(system, x0, None, t, step)
                norms[n] = traj.final.norm()
            report.envelope.append((float(t), max(norms.values())))
            hit = [n for n in candidates if norms[n] > threshold]
            if hit:
                report.witnesses.append(
                    {"t": float(t), "n": hit[0], "norm": norms[hit[0]], "confirmed": True}
                )
    confirmed_t = {w["t"] for w in report.witnesses if w["confirmed"]}
    all_hit = all(float(t) in confirmed_t for t in t_grid)
    report.verdicts["ugas"] = FAIL if all_hit else INCONCLUSIVE
    report.verdicts["iss"] = FAIL if all_hit else INCONCLUSIVE
    if not exact:
        report.notes.append(f"family norms from grid simulation with N={N}")
    return report


def _default_dt(system: SystemSpec, N: int, T: float) -> float:
    if system.A.kind == PERIODIC_SHIFT:
        return 1.0 / N
    return min(1e-2, T) if T > 0 else 1e-2


def fit_decay(times, norms, floor: float = 1e-12) -> tuple[float, float]:
    """Fit ``|x(t)| ~ K e^{-mu t} |x0|`` to one trajectory.

    ``mu`` is the least-squares slope of ``-log(|x(t)| / |x0|)``; ``K`` is then
    the smallest constant that makes the envelope valid at every sample.
    Samples below ``floor * |x0|`` are left out of the fit.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    x0 = norms[0]
    if x0 == 0:
        return 1.0, math.inf
    keep = norms > floor * x0
    t, y = times[keep], np.log(norms[keep] / x0)
    if t.size < 2 or np.ptp(t) == 0:
        return 1.0, 0.0
    slope = np.polyfit(t, y, 1)[0]
    mu = float(-slope)
    K = float(np.max(norms[keep] / x0 * np.exp(mu * t)))
    return K, mu


def fourier_profile(
    rng: np.random.Generator, N: int, modes: int = 4
) -> tuple[GridFunction, GridFunction, float]:
    """Random trigonometric polynomial with its derivative and exact graph norm."""
    xi = midpoints(N)
    a0 = rng.standard_normal()
    a = rng.standard_normal(modes)
    b = rng.standard_normal(modes)
    k = np.arange(1, modes + 1)
    phase = 2 * np.pi * np.outer(xi, k)
    val = a0 + np.cos(phase) @ a + np.sin(phase) @ b
    der = (-np.sin(phase) * (2 * np.pi * k)) @ a + (np.cos(phase) * (2 * np.pi * k)) @ b
    l2 = math.sqrt(a0**2 + 0.5 * np.sum(a**2 + b**2))
    dl2 = math.sqrt(0.5 * np.sum((2 * np.pi * k) ** 2 * (a**2 + b**2)))
    return GridFunction(val), GridFunction(der), l2 + dl2


def sample_domain_ball(
    system: SystemSpec, r: float, rng: np.random.Generator, N: int = 256, dim: int | None = None
) -> State:
    """Random initial state with graph norm ``|x0| + |A x0|`` equal to ``r``."""
    A = system.A
    if A.kind == PERIODIC_SHIFT:
        f, _, gnorm = fourier_profile(rng, N)
        return f * (r / gnorm)
    if A.kind == MATRIX or (dim is not None and not system.scalar_b):
        m = A.dim if A.kind == MATRIX else dim
        x = FiniteVector(rng.standard_normal(m))
    elif not system.scalar_b:
        x = FiniteVector(rng.standard_normal(system.B.shape[0]))
    else:
        x = GridFunction(rng.standard_normal(N))
    gnorm = x.norm() + A.apply(x).norm()
    return x * (r / gnorm)


@dataclass
class SemiglobalFit:
    K: dict
    mu: dict
    verdicts: dict


def fit_semiglobal(
    system: SystemSpec,
    r_list: Sequence[float],
    T_end: float,
    samples: int = 10,
    seed: int = 0,
    dt: float | None = None,
    N: int = 256,
    mu_floor: float = 1e-3,
    initial_states: Callable[[float, np.random.Generator], Sequence[State]] | None = None,
) -> SemiglobalFit:
    """Worst-case ``K(r)`` and ``mu(r)`` over random initial data in each D(A)-ball.

    ``mu(r)`` is the smallest fitted rate among the samples and ``K(r)`` the
    largest overshoot needed to cover every sample at that rate. A radius
    passes when ``mu(r) > mu_floor``.
    """
    rng = np.random.default_rng(seed)
    if dt is None:
        dt = 1.0 / N if system.A.kind == PERIODIC_SHIFT else 1e-2
    K, mu, verdicts = {}, {}, {}
    for r in r_list:
        if initial_states is not None:
            x0s = list(initial_states(r, rng))
        else:
            x0s = [sample_domain_ball(system, r, rng, N) for _ in range(samples)]
        trajs = [solve_mild(system, x0, None, T_end, dt) for x0 in x0s]
        fits = [fit_decay(tr.times, tr.norms()) for tr in trajs]
        mu_r = min(m for _, m in fits)
        K_r = 1.0
        for tr in trajs:
            norms = tr.norms()
            if norms[0] > 0:
                K_r = max(K_r, float(np.max(norms / norms[0] * np.exp(mu_r * tr.times))))
        K[r], mu[r] = K_r, mu_r
        verdicts[r] = PASS if mu_r > mu_floor else INCONCLUSIVE
    return SemiglobalFit(K, mu, verdicts)


def fit_counterexample_family(
    n_list: Sequence[int],
    t_grid: Sequence[float],
    transport: bool = False,
    mu_floor: float = 1e-3,
) -> SemiglobalFit:
    """Decay fits for the ``f_n`` family, all of graph norm 1 when ``A = 0``.

    Norms come from quadrature of the exact solution. The family shares the
    radius ``r = 1``, so a uniform rate would have to bound every member; the
    verdict is ``fail`` when the fitted rates fall below ``mu_floor`` as n grows.
    """
    t = np.concatenate([[0.0], np.asarray(sorted(t_grid), dtype=float)])
    K, mu = {}, {}
    for n in n_list:
        norms = np.array([math.sqrt(counterexample_norm_sq(n, s, transport)) for s in t])
        K[n], mu[n] = fit_decay(t, norms)
    worst = min(mu.values())
    trend = [mu[n] for n in sorted(n_list)]
    decreasing = all(b <= a + 1e-12 for a, b in zip(trend, trend[1:]))
    verdict = FAIL if worst <= mu_floor and decreasing else (PASS if worst > mu_floor else INCONCLUSIVE)
    return SemiglobalFit(K, mu, {1.0: verdict})


@dataclass(frozen=True)
class GainRow:
    amplitude: float
    response: float

    @property
    def ratio(self) -> float:
        return self.response / self.amplitude if self.amplitude > 0 else 0.0


def fit_iss_gain(
    system: SystemSpec,
    amplitudes: Sequence[float],
    T_end: float,
    dt: float = 1e-2,
    direction: State | None = None,
    N: int = 64,
) -> list[GainRow]:
    """Largest response ``sup_t |x(t)|`` from ``x0 = 0`` under constant inputs ``a * direction``.

    ``direction`` is normalized to unit norm; by default it is the constant
    function 1 (grid states) or the first basis vector of the input space.
    """
    if direction is None:
        if system.scalar_b:
            if system.A.kind == MATRIX:
                direction = FiniteVector(np.eye(system.A.dim)[0])
            else:
                direction = GridFunction.constant(1.0, N)
        else:
            direction = FiniteVector(np.eye(system.B.shape[1])[0])
    direction = direction * (1.0 / direction.norm())
    if system.scalar_b:
        x0 = direction * 0.0
    else:
        x0 = FiniteVector(np.zeros(system.B.shape[0]))
    rows = []
    for a in sorted(float(a) for a in amplitudes):
        if a == 0:
            rows.append(GainRow(0.0, 0.0))
            continue
        d = Disturbance.constant(direction * a)
        traj = solve_mild(system, x0, d, T_end, dt)
        rows.append(GainRow(a, float(np.max(traj.norms()))))
    return rows

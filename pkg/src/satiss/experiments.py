"""The named experiments behind ``satiss run``.

Each runner takes a validated :class:`ExperimentConfig` and returns an
:class:`Outcome`: table rows, column units, a verdict and a free-form
summary. Verdict columns sit next to the numeric margin that decided them.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .feedback import (
    apply,
    check_monotone,
    check_property_iv,
    estimate_local_lipschitz,
)
from .grid import (
    FiniteVector,
    GridFunction,
    InterpolatedShiftWarning,
    norm_l1,
    norm_linf,
)
from .lyapunov import (
    check_dissipation_chain,
    check_iss_estimate,
    check_quadratic_form,
    check_remark28_equivalence,
    lyapunov_residual,
    solve_lyapunov_finite,
)
from .oracles import (
    counterexample_norm_sq,
    counterexample_profile,
    exact_sat_ode_solution,
    exact_sat_transport_solution,
    find_witness_n,
    geometric_ladder,
    threshold_integral_quadrature,
)
from .sampling import (
    random_grid_function,
    random_hurwitz,
    random_piecewise_disturbance,
    random_with_norm,
)
from .stability import PASS, classify_gas, falsify_ugas, fit_semiglobal
from .systems import Disturbance, SystemSpec, gronwall_check, solve_mild


@dataclass
class Outcome:
    columns: list
    rows: list
    passed: bool
    summary: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


def _initial_state(cfg: ExperimentConfig, system: SystemSpec, rng: np.random.Generator):
    spec = cfg.numerics["x0"]
    N = cfg.numerics["N"]
    kind = spec["kind"]
    if system.A.kind == "matrix" or not system.scalar_b:
        m = system.A.dim if system.A.kind == "matrix" else system.B.shape[0]
        if kind == "random":
            return FiniteVector(rng.standard_normal(m) * spec.get("amplitude", 1.0))
        return FiniteVector(np.full(m, float(spec.get("value", 1.0))))
    if kind == "constant":
        return GridFunction.constant(spec.get("value", 1.0), N)
    if kind == "counterexample":
        return counterexample_profile(int(spec.get("n", 2)), N)
    if kind == "sine":
        k = spec.get("k", 1)
        return GridFunction.from_callable(lambda x: spec.get("amplitude", 1.0) * np.sin(2 * np.pi * k * x), N)
    if kind == "linear":
        return GridFunction.from_callable(lambda x: spec.get("slope", 1.0) * x + spec.get("offset", 0.0), N)
    return random_grid_function(rng, N, spec.get("amplitude", 1.0))


def _constant_disturbance(cfg, x0) -> Disturbance:
    amp = float(cfg.numerics["disturbance"])
    if amp == 0:
        return Disturbance.zero()
    return Disturbance.constant(x0.like(np.full(x0.size, amp)))


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def run_simulate(cfg, strict, threads):
    system = cfg.build_system()
    rng = np.random.default_rng(cfg.numerics["seed"])
    x0 = _initial_state(cfg, system, rng)
    d = _constant_disturbance(cfg, x0)
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", InterpolatedShiftWarning)
        traj = solve_mild(system, x0, d, cfg.numerics["T_end"], cfg.numerics["dt"], strict=strict)
    if any(issubclass(w.category, InterpolatedShiftWarning) for w in caught):
        notes.append("interpolated (non grid-aligned) periodic shift was used")
    rows = []
    for t, x in zip(traj.times, traj.states):
        linf = norm_linf(x) if isinstance(x, GridFunction) else float(np.max(np.abs(x.values)))
        rows.append({"t": float(t), "norm_l2": x.norm(), "norm_linf": linf})
    cols = [("t", "s"), ("norm_l2", "1"), ("norm_linf", "1")]
    return Outcome(cols, rows, True, {"scheme": traj.scheme, "steps": len(traj) - 1}, notes)


def run_counterexample(cfg, strict, threads):
    num = cfg.numerics
    ladder = geometric_ladder(num["ladder_max_power"])
    rows = []
    for t in num["t_grid"]:
        w = find_witness_n(t, num["threshold"], ladder)
        limit = find_witness_n(t, math.sqrt(0.99), ladder)
        row = {"t": float(t), "n": w.n, "bound": w.bound}
        if w.found:
            quad = threshold_integral_quadrature(w.n, t)
            norm = math.sqrt(counterexample_norm_sq(w.n, t))
            row.update(
                bound_quadrature=quad,
                bound_rel_diff=abs(quad - w.bound) / w.bound,
                norm_quadrature=norm,
                norm_margin=norm - num["threshold"],
            )
        row.update(limit_n=limit.n, limit_bound=limit.bound)
        row["verdict"] = bool(
            w.found and row["norm_margin"] > 0 and row["bound_rel_diff"] <= 1e-2 and limit.found
        )
        rows.append(row)
    cols = [
        ("t", "s"), ("n", "1"), ("bound", "1"), ("bound_quadrature", "1"), ("bound_rel_diff", "1"),
        ("norm_quadrature", "1"), ("norm_margin", "1"), ("limit_n", "1"), ("limit_bound", "1"), ("verdict", "bool"),
    ]
    return Outcome(cols, rows, all(r["verdict"] for r in rows), {"ladder_max": ladder[-1]})


def run_transport_equality(cfg, strict, threads):
    system = cfg.build_system()
    rng = np.random.default_rng(cfg.numerics["seed"])
    f = _initial_state(cfg, system, rng)
    rows = []
    for t in cfg.numerics["t_grid"]:
        nx = exact_sat_ode_solution(f, t).norm()
        ny = exact_sat_transport_solution(f, t).norm()
        diff = abs(nx - ny)
        rows.append({"t": float(t), "norm_x": nx, "norm_y": ny, "abs_diff": diff, "verdict": diff <= 1e-12})
    cols = [("t", "s"), ("norm_x", "1"), ("norm_y", "1"), ("abs_diff", "1"), ("verdict", "bool")]
    return Outcome(cols, rows, all(r["verdict"] for r in rows), {"max_diff": max(r["abs_diff"] for r in rows)})


def run_lyapunov_check(cfg, strict, threads):
    num = cfg.numerics
    rng = np.random.default_rng(num["seed"])
    rows = []
    for i in range(num["samples"]):
        m = int(rng.integers(1, num["max_dim"] + 1))
        A = random_hurwitz(rng, m)
        P = solve_lyapunov_finite(A)
        res = lyapunov_residual(A, P)
        qf = check_quadratic_form(P, A, rng.standard_normal((1000, m)))
        min_eig = float(np.linalg.eigvalsh(P).min())
        ok = res <= 1e-10 and min_eig > 0 and qf.passed
        rows.append({"index": i, "dim": m, "residual": res, "min_eig_P": min_eig, "quad_form_max": qf.max_value, "verdict": ok})
    remark = {}
    for name, M, om in (("-I, omega=1", -np.eye(2), 1.0), ("-I, omega=2", -np.eye(2), 2.0), ("diag(-1,-3), omega=1", np.diag([-1.0, -3.0]), 1.0)):
        rep = check_remark28_equivalence(M, om, seed=num["seed"])
        remark[name] = {
            "a": rep.dissipative, "b": rep.weighted_contraction, "c": rep.scaled_identity, "consistent": rep.consistent,
        }
    cols = [("index", "1"), ("dim", "1"), ("residual", "1"), ("min_eig_P", "1"), ("quad_form_max", "1"), ("verdict", "bool")]
    ok = all(r["verdict"] for r in rows) and all(v["consistent"] for v in remark.values())
    return Outcome(cols, rows, ok, {"equivalence": remark})


def _eps_and_alpha(cfg, system):
    if system.A.kind == "matrix":
        sym = 0.5 * (system.A.matrix + system.A.matrix.T)
        alpha = -float(np.linalg.eigvalsh(sym).max()) + system.A.damping
    else:
        alpha = system.A.alpha + system.A.damping
    eps = cfg.numerics["eps"] if cfg.numerics["eps"] is not None else alpha
    return alpha, eps


def run_iss_check(cfg, strict, threads):
    num = cfg.numerics
    system = cfg.build_system()
    alpha, eps = _eps_and_alpha(cfg, system)
    rng = np.random.default_rng(num["seed"])
    like = _initial_state(cfg, system, rng)
    d_like = system.bstar_apply(like)
    samples = []
    for _ in range(num["samples"]):
        x0 = random_with_norm(rng, like, 5.0 * rng.uniform())
        d = random_piecewise_disturbance(rng, d_like, num["T_end"], num["dt"], 1.0)
        samples.append((x0, d))

    def one(sample):
        x0, d = sample
        chain = check_dissipation_chain(system, alpha, num["k_r"], [(x0, d)], eps)
        traj = solve_mild(system, x0, d, num["T_end"], num["dt"])
        env = check_iss_estimate(traj, d, alpha, eps, num["k_r"], system.normB)
        s = chain.samples[0]
        return {
            "x0_norm": x0.norm(), "d_sup": d.sup_norm(), "dini": s.dini, "bound": s.bound,
            "dissipation_margin": s.margin, "envelope_worst_ratio": env.worst_ratio,
            "verdict": chain.passed and env.passed,
        }

    rows = _map(one, samples, threads)
    for i, r in enumerate(rows):
        r["index"] = i
    cols = [
        ("index", "1"), ("x0_norm", "1"), ("d_sup", "1"), ("dini", "1/s"), ("bound", "1/s"),
        ("dissipation_margin", "1/s"), ("envelope_worst_ratio", "1"), ("verdict", "bool"),
    ]
    return Outcome(cols, rows, all(r["verdict"] for r in rows), {"alpha": alpha, "eps": eps})


def run_gronwall_check(cfg, strict, threads):
    num = cfg.numerics
    system = cfg.build_system()
    rng = np.random.default_rng(num["seed"])
    like = _initial_state(cfg, system, rng)
    d_like = system.bstar_apply(like)
    pairs = []
    for _ in range(num["samples"]):
        x0 = random_with_norm(rng, like, 3.0 * rng.uniform())
        y0 = x0 + random_with_norm(rng, like, 0.2 * rng.uniform())
        d = random_piecewise_disturbance(rng, d_like, num["T_end"], num["dt"], 0.5)
        dt_ = random_piecewise_disturbance(rng, d_like, num["T_end"], num["dt"], 0.5)
        pairs.append((x0, y0, d, dt_))

    def one(p):
        x0, y0, d, d2 = p
        tx = solve_mild(system, x0, d, num["T_end"], num["dt"], strict=strict)
        ty = solve_mild(system, y0, d2, num["T_end"], num["dt"], strict=strict)
        rep = gronwall_check(tx, ty, d, d2, num["k_r"], system.normB, num["tol"], system)
        return {"violations": rep.violations, "worst_margin": rep.worst_margin, "radius": rep.radius, "verdict": rep.passed}

    rows = _map(one, pairs, threads)
    for i, r in enumerate(rows):
        r["index"] = i
    cols = [("index", "1"), ("violations", "1"), ("worst_margin", "1"), ("radius", "1"), ("verdict", "bool")]
    return Outcome(cols, rows, all(r["verdict"] for r in rows), {"k_r": num["k_r"]})


def run_ugas_falsify(cfg, strict, threads):
    num = cfg.numerics
    system = cfg.build_system()
    rep = falsify_ugas(system, num["t_grid"], num["threshold"], geometric_ladder(num["ladder_max_power"]))
    by_t = {w["t"]: w for w in rep.witnesses}
    rows = []
    for t, env in rep.envelope:
        w = by_t.get(t)
        rows.append({
            "t": t, "n": w["n"] if w else None, "bound": w.get("bound") if w else None,
            "norm": w["norm"] if w else None, "envelope": env,
            "margin": (w["norm"] - num["threshold"]) if w else None,
            "verdict": bool(w and w["confirmed"]),
        })
    summary = {"verdicts": rep.verdicts}
    if system.A.kind in ("zero", "periodic_shift") and system.scalar_b:
        profiles = [counterexample_profile(n, num["N"]) for n in (2, 10, 100)]
        gas = classify_gas(system, profiles, 1000.0, 1e-3, dt=1.0)
        summary["gas"] = {"verdict": gas.verdict, "final_norms": list(gas.final_norms)}
    cols = [("t", "s"), ("n", "1"), ("bound", "1"), ("norm", "1"), ("envelope", "1"), ("margin", "1"), ("verdict", "bool")]
    return Outcome(cols, rows, rep.verdicts["ugas"] == "fail", summary, rep.notes)


def run_semiglobal_fit(cfg, strict, threads):
    num = cfg.numerics
    system = cfg.build_system()
    fit = fit_semiglobal(system, num["r_list"], num["T_end"], samples=num["samples"], seed=num["seed"],
                         dt=num["dt"], N=num["N"])
    rows = [{"r": float(r), "K": fit.K[r], "mu": fit.mu[r], "verdict": fit.verdicts[r] == PASS} for r in num["r_list"]]
    cols = [("r", "1"), ("K", "1"), ("mu", "1/s"), ("verdict", "bool")]
    return Outcome(cols, rows, all(r["verdict"] for r in rows))


def run_property_suite(cfg, strict, threads):
    num = cfg.numerics
    system = cfg.build_system()
    sigma = system.sigma
    rng = np.random.default_rng(num["seed"])
    corpus = [random_grid_function(rng, num["N"], 10.0) for _ in range(num["samples"])]
    partners = [random_grid_function(rng, num["N"], 10.0) for _ in range(num["samples"])]
    rows = []
    for i, (u, v) in enumerate(zip(corpus, partners)):
        iv = check_property_iv(u, sigma)
        mono = check_monotone(sigma, [(u, v)])
        s = apply(sigma, u)
        contraction = (
            norm_l1(s) <= norm_l1(u) + 1e-12 and s.norm() <= u.norm() + 1e-12 and norm_linf(s) <= norm_linf(u) + 1e-12
        )
        rows.append({
            "index": i, "lhs_iv": iv.lhs, "rhs_iv": iv.rhs, "margin_iv": iv.rhs - iv.lhs,
            "monotone_value": mono.min_value, "contraction": contraction,
            "verdict": iv.passed and mono.passed and contraction,
        })
    lip = estimate_local_lipschitz(sigma, 10.0, 500, num["seed"])
    cols = [
        ("index", "1"), ("lhs_iv", "1"), ("rhs_iv", "1"), ("margin_iv", "1"), ("monotone_value", "1"),
        ("contraction", "bool"), ("verdict", "bool"),
    ]
    return Outcome(cols, rows, all(r["verdict"] for r in rows), {"lipschitz_estimate_r10": lip.estimate})


RUNNERS = {
    "simulate": run_simulate,
    "counterexample": run_counterexample,
    "transport-equality": run_transport_equality,
    "lyapunov-check": run_lyapunov_check,
    "iss-check": run_iss_check,
    "gronwall-check": run_gronwall_check,
    "ugas-falsify": run_ugas_falsify,
    "semiglobal-fit": run_semiglobal_fit,
    "property-suite": run_property_suite,
}


def run_experiment(cfg: ExperimentConfig, strict: bool = False, threads: int = 1) -> Outcome:
    return RUNNERS[cfg.experiment](cfg, strict, threads)

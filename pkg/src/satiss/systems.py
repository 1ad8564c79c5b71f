"""Linear generators, disturbances and mild-solution integrators.

The closed loop ``x' = A x - B sigma(B* x + d)`` is advanced by operator
splitting: the linear flow ``T(t)`` is applied exactly and the feedback
substep ``z' = -B sigma(B* z + d)`` is integrated with d frozen on the step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .feedback import DEADZONE_LINEAR, IDENTITY, SAT, FeedbackMap
from .grid import FiniteVector, GridFunction, State, cell_shift, shift_periodic
from .oracles import sat_ode_flow

ZERO = "zero"
PERIODIC_SHIFT = "periodic_shift"
SCALAR_DIAGONAL = "scalar_diagonal"
MATRIX = "matrix"

GENERATOR_KINDS = (ZERO, PERIODIC_SHIFT, SCALAR_DIAGONAL, MATRIX)

BLOWUP_NORM = 1e12


class BlowUpError(RuntimeError):
    """State left the finite range during integration."""


class PicardDivergenceError(RuntimeError):
    """Successive Picard iterates move apart; the horizon is not contractive."""


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Generator of a linear C0-semigroup.

    ``scalar_diagonal`` is ``A = -alpha I``. ``damping`` subtracts a multiple
    of the identity from any kind, which is how closed-loop generators
    ``A - b^2 I`` are represented.
    """

    kind: str = ZERO
    alpha: float = 0.0
    matrix: np.ndarray | None = None
    damping: float = 0.0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {GENERATOR_KINDS}")
        if self.kind == MATRIX:
            M = np.atleast_2d(np.asarray(self.matrix, dtype=float))
            if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
                raise ValueError("matrix generator needs a square matrix")
            if not np.all(np.isfinite(M)):
                raise ValueError("matrix generator has non-finite entries")
            object.__setattr__(self, "matrix", M)

    @classmethod
    def zero(cls) -> "GeneratorSpec":
        return cls(ZERO)

    @classmethod
    def periodic_shift(cls) -> "GeneratorSpec":
        return cls(PERIODIC_SHIFT)

    @classmethod
    def scalar_diagonal(cls, alpha: float) -> "GeneratorSpec":
        return cls(SCALAR_DIAGONAL, alpha=float(alpha))

    @classmethod
    def from_matrix(cls, M) -> "GeneratorSpec":
        return cls(MATRIX, matrix=np.asarray(M, dtype=float))

    def with_damping(self, extra: float) -> "GeneratorSpec":
        return GeneratorSpec(self.kind, self.alpha, self.matrix, self.damping + extra)

    @property
    def dim(self) -> int | None:
        return self.matrix.shape[0] if self.kind == MATRIX else None

    def dense(self, m: int) -> np.ndarray:
        """Matrix of the generator on R^m (not available for the shift)."""
        if self.kind == PERIODIC_SHIFT:
            raise ValueError("the periodic shift has no finite matrix representation")
        if self.kind == MATRIX:
            if m != self.dim:
                raise ValueError(f"matrix generator has dimension {self.dim}, state has {m}")
            base = self.matrix
        elif self.kind == SCALAR_DIAGONAL:
            base = -self.alpha * np.eye(m)
        else:
            base = np.zeros((m, m))
        return base - self.damping * np.eye(m)

    def apply(self, x: State) -> State:
        """``A x`` for the bounded kinds."""
        if self.kind == MATRIX:
            return x.like(self.dense(x.size) @ x.values)
        if self.kind == PERIODIC_SHIFT:
            raise ValueError("use a derivative grid for the unbounded shift generator")
        rate = (self.alpha if self.kind == SCALAR_DIAGONAL else 0.0) + self.damping
        return x * (-rate)


def semigroup_apply(A: GeneratorSpec, t: float, x: State, strict: bool = True) -> State:
    """``T(t) x`` for the semigroup generated by ``A``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return _propagator(A, t, x, strict)(x)


def _propagator(A: GeneratorSpec, t: float, like: State, strict: bool = True):
    """Precomputed linear map ``x -> T(t) x`` for states shaped like ``like``."""
    scale = math.exp(-A.damping * t)
    if A.kind == ZERO:
        return lambda x: x * scale if scale != 1.0 else x
    if A.kind == SCALAR_DIAGONAL:
        factor = scale * math.exp(-A.alpha * t)
        return lambda x: x * factor
    if A.kind == PERIODIC_SHIFT:
        if not isinstance(like, GridFunction):
            raise TypeError("periodic shift acts on GridFunction states")
        if strict and cell_shift(t, like.N) is None:
            raise ValueError(f"time {t!r} is not aligned to the grid 1/{like.N}")
        return lambda x: shift_periodic(x, t, strict=strict) * scale
    E = expm(t * A.dense(like.size))
    return lambda x: x.like(E @ x.values)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """``x' = A x - B sigma(B* x + d)`` with bounded ``B``.

    ``B`` is a real scalar (a multiple of the identity, so ``B* = B``) or a
    real matrix of shape ``(state dim, input dim)`` with ``B* = B^T``.
    """

    A: GeneratorSpec = field(default_factory=GeneratorSpec.zero)
    B: float | np.ndarray = 1.0
    sigma: FeedbackMap = field(default_factory=FeedbackMap.identity)

    def __post_init__(self):
        if np.ndim(self.B) == 0:
            b = float(self.B)
            if not math.isfinite(b):
                raise ValueError("B must be finite")
            object.__setattr__(self, "B", b)
        else:
            B = np.atleast_2d(np.asarray(self.B, dtype=float))
            if B.ndim != 2 or not np.all(np.isfinite(B)):
                raise ValueError("B must be a finite 2-d matrix")
            object.__setattr__(self, "B", B)

    @property
    def scalar_b(self) -> bool:
        return isinstance(self.B, float)

    @property
    def normB(self) -> float:
        return abs(self.B) if self.scalar_b else float(np.linalg.norm(self.B, 2))

    def b_apply(self, u: State) -> State:
        if self.scalar_b:
            return u * self.B
        return FiniteVector(self.B @ u.values)

    def bstar_apply(self, x: State) -> State:
        if self.scalar_b:
            return x * self.B
        return FiniteVector(self.B.T @ x.values)

    def closed_loop_generator(self) -> GeneratorSpec:
        """Generator of the unsaturated loop, ``A - B B*``."""
        if self.scalar_b:
            return self.A.with_damping(self.B**2)
        m = self.B.shape[0]
        return GeneratorSpec.from_matrix(self.A.dense(m) - self.B @ self.B.T)

    def feedback(self, x: State, d: State | None) -> State:
        """``B sigma(B* x + d)``."""
        u = self.bstar_apply(x)
        if d is not None:
            u = u + d
        return self.b_apply(self.sigma(u))


@dataclass(frozen=True, eq=False)
class Disturbance:
    """Piecewise-constant input: ``values[i]`` holds on ``[breakpoints[i], breakpoints[i+1])``.

    The last value extends to infinity. ``None`` entries mean zero input.
    """

    breakpoints: tuple = (0.0,)
    values: tuple = (None,)

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if not bp or bp[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        vals = tuple(self.values)
        if len(vals) != len(bp):
            raise ValueError("need one value per breakpoint interval")
        sizes = {(type(v), v.size) for v in vals if v is not None}
        if len(sizes) > 1:
            raise ValueError("disturbance values are not dimensionally consistent")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls) -> "Disturbance":
        return cls()

    @classmethod
    def constant(cls, value: State) -> "Disturbance":
        return cls((0.0,), (value,))

    @classmethod
    def piecewise(cls, breakpoints: Sequence[float], values: Sequence[State | None]) -> "Disturbance":
        return cls(tuple(breakpoints), tuple(values))

    @property
    def is_zero(self) -> bool:
        return all(v is None or not np.any(v.values) for v in self.values)

    def index_at(self, t: float) -> int:
        return int(np.searchsorted(self.breakpoints, t, side="right") - 1)

    def at(self, t: float) -> State | None:
        return self.values[self.index_at(t)]

    def sup_norm(self, t_end: float | None = None) -> float:
        """``||d||_{L^inf(0, t_end)}`` (whole line if ``t_end`` is None)."""
        best = 0.0
        for b, v in zip(self.breakpoints, self.values):
            if t_end is not None and b > t_end:
                break
            if t_end is not None and b == t_end and b > 0:
                break
            if v is not None:
                best = max(best, v.norm())
        return best

    def breakpoints_in(self, a: float, b: float) -> list[float]:
        return [p for p in self.breakpoints if a < p < b]


def _diff(d1: State | None, d2: State | None) -> float:
    if d1 is None and d2 is None:
        return 0.0
    if d1 is None:
        return d2.norm()
    if d2 is None:
        return d1.norm()
    return (d1 - d2).norm()


def integrated_difference(d: Disturbance, d_tilde: Disturbance, times: np.ndarray) -> np.ndarray:
    """``int_0^t ||d(s) - d_tilde(s)|| ds`` at each of ``times`` (exact for piecewise constants)."""
    times = np.asarray(times, dtype=float)
    marks = sorted(set(d.breakpoints) | set(d_tilde.breakpoints) | set(times.tolist()) | {0.0})
    cum = {marks[0]: 0.0}
    acc = 0.0
    for a, b in zip(marks, marks[1:]):
        acc += (b - a) * _diff(d.at(a), d_tilde.at(a))
        cum[b] = acc
    return np.array([cum[t] for t in times.tolist()])


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: tuple
    scheme: str
    dt: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.size != len(self.states):
            raise ValueError("times and states differ in length")
        if times.size == 0 or times[0] != 0.0:
            raise ValueError("trajectory must start at t = 0")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", tuple(self.states))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def final(self) -> State:
        return self.states[-1]

    def norms(self) -> np.ndarray:
        return np.array([s.norm() for s in self.states])


def _exact_substep(system: SystemSpec):
    """Closed-form feedback substep, or ``None`` if no closed form applies."""
    if not system.scalar_b:
        return None
    b = system.B
    kind = system.sigma.kind
    if b == 0.0:
        return lambda z, dk, h: z
    if kind == IDENTITY:
        def step(z, dk, h):
            w = z.values * b + (0.0 if dk is None else dk.values)
            w = w * math.exp(-b * b * h)
            return z.like((w - (0.0 if dk is None else dk.values)) / b)
        return step
    if kind in (SAT, DEADZONE_LINEAR):
        level = 1.0 if kind == SAT else system.sigma.delta
        # w = b z + d solves w' = -b^2 sat_level(w); rescale to the unit flow
        def step(z, dk, h):
            off = 0.0 if dk is None else dk.values
            w = (z.values * b + off) / level
            w = sat_ode_flow(w, b * b * h) * level
            return z.like((w - off) / b)
        return step
    return None


def _rk4_substep(system: SystemSpec):
    def rhs(z, dk):
        return -system.feedback(z, dk).values

    def step(z, dk, h):
        k1 = rhs(z, dk)
        k2 = rhs(z.like(z.values + 0.5 * h * k1), dk)
        k3 = rhs(z.like(z.values + 0.5 * h * k2), dk)
        k4 = rhs(z.like(z.values + h * k3), dk)
        return z.like(z.values + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))

    return step


def _check_state(x: State, t: float):
    if not np.all(np.isfinite(x.values)) or x.norm() > BLOWUP_NORM:
        raise BlowUpError(f"state norm exceeded {BLOWUP_NORM:g} (or became non-finite) at t={t:g}")


def _step_sizes(T_end: float, dt: float) -> list[float]:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T_end < 0:
        raise ValueError("T_end must be nonnegative")
    n_full = int(math.floor(T_end / dt + 1e-9))
    steps = [dt] * n_full
    rest = T_end - n_full * dt
    if rest > 1e-12 * max(1.0, T_end):
        steps.append(rest)
    return steps


def solve_mild(
    system: SystemSpec,
    x0: State,
    d: Disturbance | None = None,
    T_end: float = 1.0,
    dt: float = 1e-2,
    scheme: str = "strang",
    substep: str = "auto",
    strict: bool = True,
) -> Trajectory:
    """Integrate the closed loop by splitting and record the state after every step.

    ``scheme`` is ``"strang"`` (half linear step, feedback step, half linear
    step) or ``"lie"``. For the periodic shift Strang falls back to Lie when a
    half step is not a whole number of cells; the shift commutes with any
    pointwise feedback when ``B`` is scalar, so nothing is lost there.

    ``substep`` selects the feedback integrator: ``"exact"`` (closed form,
    scalar ``B`` with identity, sat or deadzone-linear maps), ``"rk4"``, or
    ``"auto"`` (exact where available).
    """
    d = d or Disturbance.zero()
    if scheme not in ("strang", "lie"):
        raise ValueError("scheme must be 'strang' or 'lie'")
    if substep == "rk4":
        feedback_step = _rk4_substep(system)
    else:
        feedback_step = _exact_substep(system)
        if feedback_step is None:
            if substep == "exact":
                raise ValueError("no closed-form feedback substep for this system")
            feedback_step = _rk4_substep(system)
    steps = _step_sizes(T_end, dt)
    if system.A.kind == PERIODIC_SHIFT:
        if strict and any(cell_shift(h, x0.N) is None for h in set(steps)):
            raise ValueError(f"dt={dt!r} and T_end={T_end!r} must be multiples of 1/N = 1/{x0.N}")
        if scheme == "strang" and any(cell_shift(h / 2, x0.N) is None for h in set(steps)):
            scheme = "lie"
    for bp in d.breakpoints[1:]:
        if bp < T_end and cell_shift(bp, 1.0 / dt) is None:
            raise ValueError(f"disturbance breakpoint {bp!r} is not on the time grid of step {dt!r}")

    props = {}

    def prop(h):
        if h not in props:
            props[h] = _propagator(system.A, h, x0, strict)
        return props[h]

    _check_state(x0, 0.0)
    times = [0.0]
    states = [x0]
    x = x0
    t = 0.0
    for k, h in enumerate(steps):
        dk = d.at(t)
        if scheme == "strang":
            x = prop(h / 2)(x)
            x = feedback_step(x, dk, h)
            x = prop(h / 2)(x)
        else:
            x = feedback_step(x, dk, h)
            x = prop(h)(x)
        t = (k + 1) * dt if h == dt else T_end
        _check_state(x, t)
        times.append(t)
        states.append(x)
    return Trajectory(np.array(times), tuple(states), scheme, dt)


def picard_iterate(
    system: SystemSpec,
    x0: State,
    d: Disturbance | None,
    t1: float,
    iterations: int,
    dt: float,
    strict: bool = True,
) -> State:
    """Picard iterates of the variation-of-constants formula, evaluated at ``t1``.

    Iterate 0 is ``s -> T(s) x0``. The convolution integral uses the
    trapezoidal rule on a uniform grid of step at most ``dt``, accumulated
    recursively through ``T(h)``.
    """
    d = d or Disturbance.zero()
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    M = max(1, int(math.ceil(t1 / dt - 1e-9)))
    h = t1 / M
    Th = _propagator(system.A, h, x0, strict)
    free = [x0]
    for _ in range(M):
        free.append(Th(free[-1]))
    current = free
    history = []
    for _ in range(iterations):
        F = [system.feedback(current[j], d.at(j * h)) for j in range(M + 1)]
        integral = x0 * 0.0
        nxt = [free[0]]
        for j in range(1, M + 1):
            integral = Th(integral) + (Th(F[j - 1]) + F[j]) * (0.5 * h)
            nxt.append(free[j] - integral)
        for j, s in enumerate(nxt):
            if not np.all(np.isfinite(s.values)) or s.norm() > BLOWUP_NORM:
                raise PicardDivergenceError(f"iterate became unbounded at s={j * h:g}")
        change = max((a - b).norm() for a, b in zip(nxt, current))
        history.append(change)
        if len(history) >= 3 and history[-1] > history[-2] > history[-3] and history[-1] > 1e-12:
            raise PicardDivergenceError(
                f"Picard corrections grow ({history[-3]:.3g} -> {history[-1]:.3g}); "
                "shorten t1 so that |B|^2 k_r t1 < 1"
            )
        current = nxt
    return current[-1]


@dataclass(frozen=True)
class GronwallRow:
    t: float
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class GronwallReport:
    rows: tuple
    passed: bool
    k_r: float
    normB: float
    radius: float | None

    @property
    def violations(self) -> int:
        return sum(r.lhs > r.rhs for r in self.rows)

    @property
    def worst_margin(self) -> float:
        return min(r.margin for r in self.rows)


def gronwall_check(
    traj_x: Trajectory,
    traj_y: Trajectory,
    d: Disturbance | None,
    d_tilde: Disturbance | None,
    k_r: float,
    normB: float,
    tol: float = 1e-9,
    system: SystemSpec | None = None,
) -> GronwallReport:
    """Continuous-dependence bound
    ``|x(t) - y(t)| <= (|x0 - y0| + int_0^t |B| k_r |d - d~|) exp(t |B|^2 k_r)``.

    ``k_r`` must be valid on a ball containing every argument of ``sigma``
    along both trajectories. When ``system`` is given the radius of that ball
    is measured and reported so the caller can confirm the choice.
    """
    d = d or Disturbance.zero()
    d_tilde = d_tilde or Disturbance.zero()
    if traj_x.times.shape != traj_y.times.shape or not np.allclose(traj_x.times, traj_y.times):
        raise ValueError("trajectories are on different time grids")
    traj_x.states[0].check_compatible(traj_y.states[0])
    times = traj_x.times
    dist0 = (traj_x.states[0] - traj_y.states[0]).norm()
    forcing = normB * k_r * integrated_difference(d, d_tilde, times)
    rows = []
    for t, x, y, f in zip(times, traj_x.states, traj_y.states, forcing):
        lhs = (x - y).norm()
        rhs = (dist0 + f) * math.exp(t * normB**2 * k_r)
        rows.append(GronwallRow(float(t), lhs, rhs))
    radius = None
    if system is not None:
        radius = 0.0
        for t, x, y in zip(times, traj_x.states, traj_y.states):
            bx, by = system.bstar_apply(x), system.bstar_apply(y)
            dx, dy = d.at(t), d_tilde.at(t)
            radius = max(
                radius,
                bx.norm(),
                (bx + dx).norm() if dx is not None else bx.norm(),
                (by + dy).norm() if dy is not None else by.norm(),
            )
    passed = all(r.lhs <= r.rhs + tol for r in rows)
    return GronwallReport(tuple(rows), passed, k_r, normB, radius)

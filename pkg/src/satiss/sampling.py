"""Seeded generators of test states and disturbances."""
from __future__ import annotations

import numpy as np

from .grid import FiniteVector, GridFunction, midpoints
from .systems import Disturbance


def random_grid_function(rng: np.random.Generator, N: int, amplitude: float = 1.0) -> GridFunction:
    """A smooth, rough or piecewise-constant profile with sup norm up to ``amplitude``."""
    xi = midpoints(N)
    style = rng.integers(3)
    if style == 0:
        k = np.arange(1, 6)
        a, b = rng.standard_normal(5), rng.standard_normal(5)
        v = rng.standard_normal() + np.cos(2 * np.pi * np.outer(xi, k)) @ a + np.sin(2 * np.pi * np.outer(xi, k)) @ b
    elif style == 1:
        v = rng.uniform(-1.0, 1.0, N)
    else:
        cuts = np.sort(rng.uniform(0, 1, rng.integers(1, 6)))
        levels = rng.uniform(-1.0, 1.0, cuts.size + 1)
        v = levels[np.searchsorted(cuts, xi)]
    peak = np.max(np.abs(v))
    if peak == 0:
        return GridFunction(v)
    return GridFunction(v * (amplitude * rng.uniform(0.0, 1.0) / peak))


def random_with_norm(rng: np.random.Generator, like, norm: float):
    """Random state of the same type and size as ``like`` with the given norm."""
    if isinstance(like, GridFunction):
        g = random_grid_function(rng, like.N, 1.0)
        while g.norm() == 0:
            g = random_grid_function(rng, like.N, 1.0)
    else:
        g = FiniteVector(rng.standard_normal(like.size))
    return g * (norm / g.norm())


def random_piecewise_disturbance(
    rng: np.random.Generator, like, T_end: float, dt: float, sup: float, pieces: int = 4
) -> Disturbance:
    """Piecewise-constant input with breakpoints on the time grid and ``||d||_inf <= sup``."""
    n_steps = max(1, int(round(T_end / dt)))
    k = min(pieces - 1, n_steps - 1)
    marks = sorted(rng.choice(np.arange(1, n_steps), size=k, replace=False)) if k > 0 else []
    breakpoints = [0.0] + [m * dt for m in marks]
    values = [random_with_norm(rng, like, sup * rng.uniform()) for _ in breakpoints]
    return Disturbance.piecewise(breakpoints, values)


def random_hurwitz(rng: np.random.Generator, m: int, margin: float = 0.1) -> np.ndarray:
    G = rng.standard_normal((m, m))
    shift = np.max(np.linalg.eigvals(G).real) + margin + abs(rng.standard_normal())
    return G - shift * np.eye(m)

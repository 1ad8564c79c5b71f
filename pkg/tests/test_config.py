import numpy as np
import pytest

from satiss.config import EXPERIMENTS, ConfigError, parse_config
from satiss.grid import FiniteVector, GridFunction
from satiss.sampling import (
    random_grid_function,
    random_hurwitz,
    random_piecewise_disturbance,
    random_with_norm,
)


def test_defaults_fill_in():
    cfg = parse_config("experiment: simulate\n")
    assert cfg.numerics["N"] == 400 and cfg.system["sigma"] == "sat"
    s = cfg.build_system()
    assert s.A.kind == "zero" and s.B == 1.0


def test_matrix_and_tabulated_systems():
    cfg = parse_config(
        "experiment: simulate\n"
        "system:\n  generator: matrix\n  matrix: [[-1, 0], [0, -2]]\n  B: [[1], [0]]\n"
        "  sigma: tabulated\n  table: {xs: [-1, 0, 1], ys: [-1, 0, 1]}\n"
    )
    s = cfg.build_system()
    assert s.A.dim == 2 and s.B.shape == (2, 1) and s.sigma.kind == "tabulated"


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("experiment: fly\n", 1),
        ("experiment: simulate\nnumerics:\n  N: 10\n  dt: -1\n", 4),
        ("experiment: simulate\nsystem:\n  sigma: cubic\n", 3),
        ("experiment: simulate\nnumerics:\n  bogus: 1\n", 3),
        ("experiment: simulate\nextra: 1\n", 2),
        ("experiment: simulate\nnumerics: [1, 2\n", 3),
        ("experiment: transport-equality\nnumerics:\n  N: 400\n  t_grid: [0.001]\n", 4),
        ("experiment: iss-check\nsystem:\n  generator: zero\n", 3),
        ("experiment: simulate\nsystem:\n  generator: matrix\n  matrix: [[1, 2]]\n", 4),
        ("experiment: simulate\nsystem:\n  delta: 0\n", 3),
        ("experiment: counterexample\nnumerics:\n  threshold: 1.5\n", 3),
    ],
)
def test_errors_are_line_anchored(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_every_experiment_name_parses():
    for name in EXPERIMENTS:
        extra = "system:\n  generator: scalar_diagonal\n  alpha: 1.0\n" if name == "iss-check" else ""
        assert parse_config(f"experiment: {name}\n{extra}").experiment == name


def test_sampling_helpers():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_grid_function(rng, 32, 10.0)
        assert np.max(np.abs(g.values)) <= 10.0 + 1e-12
    x = random_with_norm(rng, GridFunction.zeros(16), 2.5)
    assert x.norm() == pytest.approx(2.5)
    v = random_with_norm(rng, FiniteVector(np.zeros(3)), 0.5)
    assert v.norm() == pytest.approx(0.5)
    d = random_piecewise_disturbance(rng, GridFunction.zeros(16), 1.0, 0.01, 0.3)
    assert d.sup_norm() <= 0.3 + 1e-12
    assert all(abs(b / 0.01 - round(b / 0.01)) < 1e-9 for b in d.breakpoints)
    A = random_hurwitz(rng, 5)
    assert np.max(np.linalg.eigvals(A).real) < 0

import csv

import numpy as np
import pytest

from pgsolve.fem import FieldFunction, build_space, interpolate
from pgsolve.mesh import build_interval_mesh, build_unit_square_mesh
from pgsolve.metrics import ConvergenceTable, estimate_eoc, lq_error, w1q_error, write_table_csv


@pytest.fixture
def line():
    return build_space(build_interval_mesh(5), 2)


def test_lq_error_examples(line):
    x2 = lambda p: p[:, 0] ** 2
    assert lq_error(interpolate(line, x2), x2, 1.7) <= 1e-15
    zero = interpolate(line, 0.0)
    for q in (1.01, 1.5, 2.0, 6.0):
        assert lq_error(zero, 1.0, q) == pytest.approx(1.0, rel=1e-14)
    assert lq_error(zero, lambda p: p[:, 0], 3.0) == pytest.approx(0.25 ** (1 / 3), rel=1e-14)


def test_w1q_error_examples(line):
    x2 = lambda p: p[:, 0] ** 2
    dx2 = lambda p: 2 * p[:, :1]
    assert w1q_error(interpolate(line, x2), dx2, 1.3) <= 1e-13
    zero = interpolate(line, 0.0)
    assert w1q_error(zero, 1.0, 2.5) == pytest.approx(1.0, rel=1e-14)
    assert w1q_error(zero, dx2, 2.0) == pytest.approx(2 / np.sqrt(3), rel=1e-14)


def test_w1q_sums_partials():
    U = build_space(build_unit_square_mesh("M3", 2), 1)
    # grad e = (1, 1): both partials count, so the q-th power is 2
    e = interpolate(U, lambda p: p[:, 0] + p[:, 1])
    assert w1q_error(e, np.zeros(2), 1.5) == pytest.approx(2 ** (1 / 1.5), rel=1e-13)


def test_holder_monotone_in_q():
    U = build_space(build_unit_square_mesh("M2", 4), 2)
    rng = np.random.default_rng(0)
    u = FieldFunction(U, rng.uniform(-1, 1, U.dim))
    f = lambda p: np.sin(3 * p[:, 0]) * p[:, 1]
    errs = [lq_error(u, f, q) for q in (1.01, 1.2, 1.5, 2.0, 3.0, 6.0)]
    assert np.all(np.diff(errs) > 0)


def test_quadrature_doubling():
    U = build_space(build_unit_square_mesh("M1", 8), 2)
    u = interpolate(U, lambda p: np.exp(p[:, 0] - p[:, 1]))
    f = lambda p: np.exp(p[:, 0] - p[:, 1])
    g = lambda p: np.stack([f(p), -f(p)], axis=1)
    # q = 2 keeps the integrand polynomial-like; other q have kinks where e changes
    # sign or exceed the degree the default rule integrates
    for q in (2.0,):
        a, b = lq_error(u, f, q), lq_error(u, f, q, order=2 * (2 * 2 + 4))
        assert abs(a - b) <= 1e-8 * b
        a, b = w1q_error(u, g, q), w1q_error(u, g, q, order=16)
        assert abs(a - b) <= 1e-8 * b


def test_quadrature_doubling_nonsmooth_q():
    # the same check at q = 1.2, where |e|^q has kinks inside cells
    U = build_space(build_unit_square_mesh("M1", 8), 2)
    f = lambda p: np.exp(p[:, 0] - p[:, 1])
    u = interpolate(U, f)
    a, b = lq_error(u, f, 1.2), lq_error(u, f, 1.2, order=16)
    assert abs(a - b) <= 1e-8 * b


def test_subdivided_quadrature_agrees():
    U = build_space(build_unit_square_mesh("M2", 4), 1)
    u = interpolate(U, 0.0)
    f = lambda p: p[:, 0] * p[:, 1]
    assert lq_error(u, f, 2.0, subdivide=2) == pytest.approx(1 / 3, rel=1e-13)


def test_estimate_eoc_examples():
    assert estimate_eoc([1.0, 0.5], [1.0, 0.25]) == pytest.approx([2.0])
    assert estimate_eoc([1.0, 0.5], [1.0, 2 ** (-1 / 1.2)]) == pytest.approx([1 / 1.2])
    h = 2.0 ** -np.arange(5)
    assert estimate_eoc(h, 3 * h ** 2.5) == pytest.approx([2.5] * 4)
    with pytest.raises(ValueError):
        estimate_eoc([1.0], [1.0])


def test_convergence_table(tmp_path):
    t = ConvergenceTable()
    for k in range(3):
        t.add(2.0 ** -k, 10 * 4 ** k, 4.0 ** -k, 2.0 ** -k)
    with pytest.raises(ValueError):
        t.add(1.0, 1, 1.0)
    assert t.final_rates() == pytest.approx((2.0, 1.0))
    assert np.isnan(t.eoc_lq[0])
    t.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["h", "dofs", "error_Lq", "error_W1q", "eoc_Lq", "eoc_W1q"]
    assert float(rows[2][4]) == 2.0 and rows[3][1] == "160"
    with pytest.raises(ValueError):
        ConvergenceTable().final_rates()


def test_csv_roundtrip_exact(tmp_path):
    x = 0.1 + 0.2
    write_table_csv(tmp_path / "a.csv", ["x"], [(x,)])
    assert float(list(csv.reader(open(tmp_path / "a.csv")))[1][0]) == x

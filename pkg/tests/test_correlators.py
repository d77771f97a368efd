import math

import numpy as np
import pytest

from bistoch.circuit import CircuitSpec, evolve, full_chain_two_point, local_state
from bistoch.correlators import (
    MultiPointQuery,
    autocorrelation,
    autocorrelation_periods,
    correlation_grid,
    long_time_value,
    multi_point,
    random_unique_max_query,
    scar_plateau,
    two_point,
    verify_theorems,
)
from bistoch.exceptions import InvalidDimension, InvalidParameters, TheoremNotApplicable
from bistoch.gates import LocalGate, make_gate, random_controlled, traceless_basis

D = np.array([1.0, -1.0])
HAAR = make_gate("averaged_haar")


@pytest.fixture(scope="module")
def ring12():
    return CircuitSpec(2, 12, HAAR, "periodic")


@pytest.mark.parametrize("x", [-3, -1, 1, 2, 5])
def test_t0_off_site_vanishes(ring12, x):
    assert abs(two_point(ring12, D, D, x, 0)) < 1e-15


@pytest.mark.parametrize("d_src,d_obs", [(D, D), (D, -D), ([1, 1, -2], [1, -1, 0]), ([2, -1, -1], [2, -1, -1])])
def test_t0_same_site_overlap(d_src, d_obs):
    q = len(d_src)
    spec = CircuitSpec(q, 4, make_gate("identity", q))
    assert two_point(spec, d_src, d_obs, 0, 0) == pytest.approx(np.dot(d_src, d_obs) / q)


def test_averaged_haar_x2_t5(ring12):
    assert abs(two_point(ring12, D, D, 2, 5)) < 1e-12


def test_two_point_rejects_site_outside_open_chain():
    spec = CircuitSpec(2, 6, HAAR, "open")
    with pytest.raises(InvalidParameters):
        two_point(spec, D, D, 3, 2, origin=4)


def test_two_point_dimension_mismatch():
    spec = CircuitSpec(2, 6, HAAR)
    with pytest.raises(InvalidDimension):
        two_point(spec, [1, 1, -2], D, 0, 1)


@pytest.mark.parametrize("boundary", ["periodic", "open"])
def test_grid_matches_full_chain(boundary):
    spec = CircuitSpec(2, 10, random_controlled(2, np.random.default_rng(1)), boundary)
    grid = correlation_grid(spec, D, D, range(-3, 4), range(0, 7), origin=5)
    for x, t, v in zip(grid.xs, grid.ts, grid.values):
        assert abs(v - full_chain_two_point(spec, D, D, 5, 5 + x, t)) < 1e-12


def test_grid_exact_flags(ring12):
    grid = correlation_grid(ring12, D, D, range(-2, 3), range(0, 31))
    # narrow cones close before wrapping
    assert grid.exact[grid.ts <= 4].all()
    assert not grid.exact.all()


def test_grid_csv(ring12):
    text = correlation_grid(ring12, D, D, [0, 1], [0, 1]).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "x,t,value,exact_flag"
    assert len(lines) == 5


@pytest.mark.parametrize("seed", range(20))
def test_cs_only_gate_one_sided(seed):
    spec = CircuitSpec(2, 12, random_controlled(2, np.random.default_rng(seed), kind="row"), "open")
    grid = correlation_grid(spec, D, D, range(-5, 6), range(0, 9), origin=6)
    assert grid.max_abs(grid.xs > 0) < 1e-12


def test_cs_only_gate_is_sharp():
    worst = 0.0
    for seed in range(20):
        spec = CircuitSpec(2, 12, random_controlled(2, np.random.default_rng(seed), kind="row"), "open")
        grid = correlation_grid(spec, D, D, range(-5, 0), range(0, 9), origin=6)
        worst = max(worst, grid.max_abs())
    assert worst > 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_bcs_only_gate_mirror(seed):
    spec = CircuitSpec(2, 12, random_controlled(2, np.random.default_rng(seed), kind="column"), "open")
    grid = correlation_grid(spec, D, D, range(-5, 6), range(0, 9), origin=6)
    assert grid.max_abs(grid.xs < 0) < 1e-12


def test_cnot_grid():
    spec = CircuitSpec(2, 12, make_gate("cnot"), "periodic")
    grid = correlation_grid(spec, D, D, range(-5, 6), range(0, 11))
    assert grid.max_abs(grid.xs != 0) < 1e-12
    assert grid.max_abs((grid.xs == 0) & (grid.ts >= 2)) < 1e-12


@pytest.mark.parametrize("q,n_gates", [(2, 30), (3, 20)])
def test_bistochastic_gates_vanish_off_site(q, n_gates):
    rng = np.random.default_rng(q)
    basis = traceless_basis(q)
    n = 12 if q == 2 else 8
    for _ in range(n_gates):
        spec = CircuitSpec(q, n, random_controlled(q, rng), "periodic")
        for d in basis:
            grid = correlation_grid(spec, d, d, range(-n // 2 + 1, n // 2), range(0, 9))
            assert grid.max_abs(grid.xs != 0, exact_only=True) < 1e-12


def test_multi_point_two_insertions_equals_two_point(rng):
    spec = CircuitSpec(2, 8, random_controlled(2, rng), "open")
    for x, t in [(0, 0), (1, 3), (-2, 4), (3, 5)]:
        q = MultiPointQuery(((4, 0), (4 + x, t)), (D, D))
        assert multi_point(spec, q) == pytest.approx(two_point(spec, D, D, x, t, origin=4), abs=1e-14)


def test_multi_point_unique_maximum_vanishes():
    spec = CircuitSpec(2, 8, HAAR, "open")
    query = MultiPointQuery(((0, 0), (3, 2), (1, 4)), (D, D, D))
    assert query.unique_maximum
    assert abs(multi_point(spec, query)) < 1e-12


def test_multi_point_doubled_maximum_is_computed():
    spec = CircuitSpec(2, 8, HAAR, "open")
    query = MultiPointQuery(((0, 0), (3, 2), (3, 4)), (D, D, D))
    assert not query.unique_maximum
    assert math.isfinite(multi_point(spec, query))


def test_multi_point_query_validation():
    with pytest.raises(InvalidParameters):
        MultiPointQuery(((0, 3), (1, 1)), (D, D))
    with pytest.raises(InvalidParameters):
        MultiPointQuery(((0, 0),), (D, D))
    spec = CircuitSpec(2, 4, HAAR, "open")
    with pytest.raises(InvalidParameters):
        multi_point(spec, MultiPointQuery(((0, 0), (4, 1)), (D, D)))


def test_random_queries_are_unique_max(rng):
    for _ in range(50):
        assert random_unique_max_query(rng, 3, np.arange(6), 6).unique_maximum


def test_autocorrelation_t0():
    spec = CircuitSpec(3, 6, random_controlled(3, np.random.default_rng(0)), "open")
    for d in traceless_basis(3):
        assert autocorrelation(spec, d, 0)[0] == pytest.approx(d.d @ d.d / 3)


def test_autocorrelation_strictly_decreasing():
    spec = CircuitSpec(2, 20, HAAR, "open")
    ac = autocorrelation_periods(spec, D, 20)
    assert ac[0] == pytest.approx(1.0)
    assert np.all(np.diff(ac) < 0)


@pytest.mark.parametrize("boundary,origin", [("open", 9), ("open", 6), ("periodic", 0)])
@pytest.mark.parametrize("gate", [HAAR, make_gate("cnot"), random_controlled(2, np.random.default_rng(3))])
def test_triangle_matches_full_chain(boundary, origin, gate):
    spec = CircuitSpec(2, 10, gate, boundary)
    ac = autocorrelation(spec, D, 12, origin=origin)
    ket = local_state(2, 10, {origin: D / math.sqrt(2)})
    ref = [ket @ evolve(ket, spec, t) for t in range(13)]
    assert np.allclose(ac, ref, atol=1e-13)


def test_cross_autocorrelation_matches_full_chain(rng):
    spec = CircuitSpec(3, 6, random_controlled(3, rng), "open")
    a, b = traceless_basis(3)
    ac = autocorrelation(spec, a, 6, origin=5, d_obs=b)
    ket = local_state(3, 6, {5: a.state})
    bra = local_state(3, 6, {5: b.state})
    assert np.allclose(ac, [bra @ evolve(ket, spec, t) for t in range(7)], atol=1e-13)


def test_cnot_autocorrelation_vanishes():
    spec = CircuitSpec(2, 12, make_gate("cnot"), "open")
    ac = autocorrelation_periods(spec, D, 6)
    assert np.abs(ac[1:]).max() < 1e-14


@pytest.mark.parametrize("n", [4, 6, 8])
def test_scar_plateau(n):
    spec = CircuitSpec(2, n, HAAR, "open")
    plateau, res = scar_plateau(spec, D)
    assert res < 1e-14
    assert plateau == pytest.approx(2.0 ** (1 - n))
    value, _ = long_time_value(spec, D)
    assert value == pytest.approx(plateau, abs=1e-13)


def test_plateau_from_period_map_diagonalization():
    n = 6
    spec = CircuitSpec(2, n, HAAR, "open")
    period = np.column_stack([evolve(e, spec, 2) for e in np.eye(2 ** n)])
    vals, vecs = np.linalg.eig(period)
    keep = np.abs(vals) > 1 - 1e-9
    proj = (vecs[:, keep] @ np.linalg.pinv(vecs)[keep]).real
    ket = local_state(2, n, {n - 1: D / math.sqrt(2)})
    oracle = ket @ proj @ ket
    assert oracle == pytest.approx(2.0 ** (1 - n), abs=1e-10)
    assert long_time_value(spec, D)[0] == pytest.approx(oracle, abs=1e-10)


def test_verify_theorems_averaged_haar():
    rep = verify_theorems(HAAR, sizes=(12,), periods=5, n_multi=200)
    assert rep["passed"] and rep["max_violation"] < 1e-12
    assert set(rep["checked"]) == {"x>0", "x<0", "multi"}


def test_verify_theorems_random_q3():
    gate = random_controlled(3, np.random.default_rng(7))
    rep = verify_theorems(gate, sizes=(8,), periods=3, n_multi=100)
    assert rep["passed"]


def test_verify_theorems_cs_only_checks_one_side():
    gate = random_controlled(2, np.random.default_rng(2), kind="row")
    rep = verify_theorems(gate, sizes=(8,), periods=3, n_multi=50)
    assert rep["checked"] == ["x>0"] and rep["passed"]


def test_verify_theorems_negative_control(rng):
    gate = LocalGate(rng.random(size=(4, 4)))
    with pytest.raises(TheoremNotApplicable):
        verify_theorems(gate, sizes=(8,), periods=2)
    rep = verify_theorems(gate, sizes=(8,), periods=2, n_multi=20, require_conditions=False)
    assert not rep["passed"] and rep["max_violation"] > 1e-6

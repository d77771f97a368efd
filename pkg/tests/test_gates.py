import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bistoch.exceptions import InvalidDimension, InvalidParameters, RewriteNotApplicable
from bistoch.gates import (
    ControlledGate,
    LocalGate,
    Observable,
    assemble,
    check_bcs,
    check_conditions,
    check_cs,
    check_generalized,
    cs_residual,
    extract_c,
    flat_state,
    gate_from_json_dict,
    is_bistochastic,
    load_gate,
    make_gate,
    permutation_matrix,
    random_controlled,
    random_real_bistochastic,
    rewrite_generalized,
    save_gate,
    split,
    traceless_basis,
)

SWAP = np.eye(4)[[0, 2, 1, 3]]


@pytest.mark.parametrize("q", [2, 3, 5])
def test_flat_state_normalized(q):
    f = flat_state(q)
    assert np.allclose(f, 1 / math.sqrt(q))
    assert f @ f == pytest.approx(1.0)


@pytest.mark.parametrize("q", [1, 0, 2.5])
def test_flat_state_rejects_bad_q(q):
    with pytest.raises(InvalidDimension):
        flat_state(q)


@pytest.mark.parametrize("q", [2, 3, 4, 6])
def test_traceless_basis(q):
    basis = traceless_basis(q)
    assert len(basis) == q - 1
    d = np.array([b.d for b in basis])
    assert np.allclose(d.sum(axis=1), 0, atol=1e-14)
    assert np.allclose(d @ d.T, q * np.eye(q - 1))
    assert np.allclose(d @ flat_state(q), 0, atol=1e-14)


def test_traceless_basis_q2():
    assert np.allclose(traceless_basis(2)[0].d, [1, -1])


def test_observable_validation():
    with pytest.raises(InvalidParameters):
        Observable(np.array([1.0, 1.0]))
    with pytest.raises(InvalidParameters):
        Observable(np.zeros(3))
    assert np.allclose(Observable(np.array([1.0, -1.0])).state, [1 / math.sqrt(2), -1 / math.sqrt(2)])


def test_gate_is_immutable():
    g = make_gate("cnot")
    with pytest.raises(ValueError):
        g.matrix[0, 0] = 3.0


def test_local_gate_dimension_checks():
    with pytest.raises(InvalidDimension):
        LocalGate(np.eye(5))
    with pytest.raises(InvalidDimension):
        LocalGate(np.eye(4), q=3)


@given(st.integers(2, 4), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_assemble_split_round_trip(q, seed):
    rng = np.random.default_rng(seed)
    blocks = rng.normal(size=(q, q, q))
    assert np.array_equal(split(assemble(blocks)), blocks)


def test_split_rejects_off_block():
    m = assemble(np.eye(2)[None].repeat(2, axis=0))
    m[0, 3] = 0.1
    with pytest.raises(InvalidDimension):
        split(m)


@pytest.mark.parametrize("family", ["identity", "cnot", "averaged_haar"])
def test_named_gates_are_controlled_bistochastic(family):
    g = make_gate(family)
    assert check_cs(g) and check_bcs(g)


def test_averaged_haar_blocks():
    g = make_gate("averaged_haar")
    assert np.array_equal(g.blocks[0], np.eye(2))
    assert np.array_equal(g.blocks[1], np.full((2, 2), 0.5))


def test_cs_fails_for_non_stochastic_block():
    g = ControlledGate([np.eye(2), np.diag([2.0, 0.0])])
    assert not check_cs(g)
    assert cs_residual(g) > 1e-10


def test_row_only_block_is_cs_not_bcs():
    g = ControlledGate([np.eye(2), np.array([[1.0, 0.0], [1.0, 0.0]])])
    assert check_cs(g)
    assert not check_bcs(g)


@pytest.mark.parametrize("q", [2, 3])
@pytest.mark.parametrize("kind,cs,bcs", [("bistochastic", True, True), ("row", True, False), ("column", False, True)])
def test_random_controlled_kinds(rng, q, kind, cs, bcs):
    for _ in range(10):
        g = random_controlled(q, rng, kind=kind)
        assert check_cs(g) == cs
        assert check_bcs(g) == bcs
        assert g.probabilistic


def test_generalized_agrees_with_cs(rng):
    for k in range(1000):
        q = 2 + k % 2
        if k % 3 == 0:
            g = random_controlled(q, rng, kind="row", nonnegative=True)
        elif k % 3 == 1:
            g = LocalGate(rng.normal(size=(q * q, q * q)))
        else:
            g = LocalGate(np.kron(random_real_bistochastic(q, rng), random_real_bistochastic(q, rng)))
        gen = check_generalized(g)
        c_is_identity = gen is not None and np.abs(gen.c - np.eye(q)).max() <= 1e-10
        assert c_is_identity == check_cs(g)


def test_generalized_returns_product_c(rng):
    c = random_real_bistochastic(3, rng)
    u = np.array([[0.2, 0.3, 0.5], [0.1, 0.1, 0.8], [0.6, 0.2, 0.2]])
    gen = check_generalized(np.kron(c, u))
    assert gen is not None
    assert np.allclose(gen.c, c)
    assert gen.bistochastic


def test_generalized_absent_for_swap():
    assert check_generalized(SWAP) is None
    rep = check_conditions(SWAP)
    assert rep.generalized_c is None and not rep.cs_holds


def test_condition_report_json():
    rep = check_conditions(make_gate("averaged_haar")).to_json_dict()
    assert rep["cs"] and rep["bcs"]
    assert np.allclose(rep["generalized_c"], np.eye(2))
    json.dumps(rep)


def test_rewrite_identity_pairing(rng):
    g = random_controlled(3, rng)
    out = rewrite_generalized(g, np.eye(3), np.eye(3))
    assert np.allclose(out.matrix, g.matrix)


def test_rewrite_permutation_pairing(rng):
    q = 3
    p = permutation_matrix((1, 2, 0))
    us = [random_controlled(q, rng).blocks[0] for _ in range(q)]
    u = sum(np.kron(p @ np.outer(np.eye(q)[a], np.eye(q)[a]) @ p, us[a]) for a in range(q))
    out = rewrite_generalized(u, p, p)
    assert isinstance(out, ControlledGate)
    assert np.allclose(out.blocks, [p @ ua @ p for ua in us])
    assert check_cs(out) and check_bcs(out)


def test_rewrite_circuit_similarity(rng):
    # U = sum (a|k><k|b) (x) u_k generates the same dynamics as the rewritten gate
    # up to fixed single-site transforms at the start and end of the circuit.
    from bistoch.circuit import CircuitSpec, evolve

    q, n = 2, 6
    a = np.array([[0.7, 0.3], [0.3, 0.7]])
    b = np.array([[0.4, 0.6], [0.6, 0.4]])
    us = [random_controlled(q, rng).blocks[k] for k in range(q)]
    u = sum(np.kron(a @ np.outer(np.eye(q)[k], np.eye(q)[k]) @ b, us[k]) for k in range(q))
    new = rewrite_generalized(u, a, b)
    spec, spec2 = CircuitSpec(q, n, LocalGate(u), "periodic"), CircuitSpec(q, n, new, "periodic")

    def on_sites(m, sites):
        out = np.ones((1, 1))
        for s in range(n):
            out = np.kron(out, m if s in sites else np.eye(q))
        return out

    even, odd = range(0, n, 2), range(1, n, 2)
    g = on_sites(a, even) @ np.linalg.inv(on_sites(b, odd))
    v = rng.normal(size=q ** n)
    for layers in (2, 4):
        lhs = evolve(v, spec, layers)
        rhs = g @ evolve(np.linalg.solve(g, v), spec2, layers)
        assert np.allclose(lhs, rhs)


def test_rewrite_degenerate_pairing(rng):
    a = np.full((2, 2), 0.5)
    us = [random_controlled(2, rng).blocks[k] for k in range(2)]
    u = sum(np.kron(a @ np.outer(np.eye(2)[k], np.eye(2)[k]) @ a, us[k]) for k in range(2))
    with pytest.raises(RewriteNotApplicable):
        rewrite_generalized(u, a, a)


def test_rewrite_rejects_wrong_form(rng):
    with pytest.raises(RewriteNotApplicable):
        rewrite_generalized(rng.normal(size=(4, 4)), np.eye(2), np.eye(2))
    with pytest.raises(RewriteNotApplicable):
        rewrite_generalized(make_gate("cnot"), np.diag([2.0, 0.0]), np.eye(2))


@pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
def test_tilted_east_s0(p):
    g = make_gate("tilted_east", p=p, s=0.0)
    assert np.allclose(g.blocks[1], [[1 - p, p], [p, 1 - p]])
    assert check_cs(g) and check_bcs(g)


def test_tilted_east_infinite_tilt_is_flagged():
    g = make_gate("tilted_east", p=0.5, s=math.inf)
    assert np.allclose(g.blocks[1], 0.5 * np.eye(2))
    assert not check_cs(g)
    assert not is_bistochastic(g.blocks[1])


@pytest.mark.parametrize("p,s", [(-0.1, 0.0), (1.2, 0.0), (0.5, -1.0), (None, 0.0)])
def test_tilted_east_rejects(p, s):
    with pytest.raises(InvalidParameters):
        make_gate("tilted_east", p=p, s=s)


def test_controlled_permutation_and_unknown_family():
    g = make_gate("controlled_permutation", 3, perms=[(0, 1, 2), (1, 2, 0), (2, 0, 1)])
    assert np.array_equal(g.blocks[1] @ np.eye(3)[0], np.eye(3)[1])
    with pytest.raises(InvalidParameters):
        make_gate("nope")
    with pytest.raises(InvalidParameters):
        permutation_matrix((0, 0, 1))


def test_gate_json_round_trip(tmp_path, rng):
    g = random_controlled(3, rng)
    path = tmp_path / "g.json"
    save_gate(g, path)
    back = load_gate(path)
    assert np.array_equal(back.matrix, g.matrix)
    m = LocalGate(rng.normal(size=(4, 4)))
    assert np.array_equal(gate_from_json_dict(json.loads(json.dumps(m.to_json_dict()))).matrix, m.matrix)
    with pytest.raises(InvalidDimension):
        gate_from_json_dict({"q": 3, "blocks": np.eye(2)[None].repeat(2, axis=0).tolist()})
    with pytest.raises(InvalidParameters):
        gate_from_json_dict({"q": 2})


def test_extract_c_of_controlled_gate_is_identity(rng):
    assert np.allclose(extract_c(random_controlled(3, rng, kind="row")), np.eye(3))

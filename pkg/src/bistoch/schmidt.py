"""Operator-Schmidt decomposition and the constructive controlled-stochastic factorization."""

from dataclasses import dataclass

import numpy as np

from bistoch.exceptions import NotControlledStochastic
from bistoch.gates import (
    TAU_COND,
    _gate_matrix,
    bcs_residual,
    cs_residual,
    extract_c,
    flat_state,
    is_bistochastic,
    is_stochastic,
)

SIGMA_CUT = 1e-12
MU_ZERO = 1e-10


@dataclass(frozen=True)
class OperatorSchmidt:
    """``U = sum_a weights[a] * kron(left[a], right[a])``; left acts on the control."""

    weights: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def rank(self):
        return len(self.weights)

    def reconstruct(self):
        return np.einsum("a,aij,akl->ikjl", self.weights, self.left, self.right).reshape(
            self.left.shape[1] * self.right.shape[1], -1
        )


def operator_schmidt(gate, sigma_cut=SIGMA_CUT):
    """SVD of the reshuffle ``R[(i,i'),(j,j')] = U[(i,j),(i',j')]``.

    Singular values below ``sigma_cut * lambda_1`` are dropped.
    """
    q, m = _gate_matrix(gate)
    r = m.reshape(q, q, q, q).transpose(0, 2, 1, 3).reshape(q * q, q * q)
    a, s, bt = np.linalg.svd(r)
    keep = s > sigma_cut * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    k = int(keep.sum())
    return OperatorSchmidt(s[:k].copy(), a[:, :k].T.reshape(k, q, q), bt[:k].reshape(k, q, q))


@dataclass(frozen=True)
class CSFactorization:
    """``U = sum_a kron(c_factors[a], u_factors[a])`` with stochastic ``u``."""

    c_factors: np.ndarray
    u_factors: np.ndarray
    c: np.ndarray
    nonzero_mu: tuple
    zero_mu: tuple

    @property
    def rank(self):
        return len(self.c_factors)

    def reconstruct(self):
        return sum(np.kron(c, u) for c, u in zip(self.c_factors, self.u_factors))

    def residual(self, gate):
        _, m = _gate_matrix(gate)
        return float(np.abs(self.reconstruct() - m).max())

    def to_json_dict(self, gate=None, bistochastic=None):
        out = {
            "r": self.rank,
            "residual": None if gate is None else self.residual(gate),
            "bistochastic": bistochastic,
            "c": self.c.tolist(),
            "factors": [{"c": c.tolist(), "u": u.tolist()} for c, u in zip(self.c_factors, self.u_factors)],
        }
        return out


def cs_factorize(gate, tol=TAU_COND):
    """Write a gate with ``U (1 x |->) = c x |->`` as ``sum_a c_a x u_a``.

    Every ``u_a`` has unit row sums and ``sum_a c_a = c``. Schmidt terms with
    ``B_a |-> = mu_a |->``, ``mu_a != 0`` give ``(lambda_a mu_a A_a, B_a / mu_a)``;
    terms with ``mu_a = 0`` get ``u_a = B_a + 1`` and one extra term
    ``(-sum lambda_a A_a, 1)`` compensates. The rank is at most ``q**2 + 1``.
    """
    q, m = _gate_matrix(gate)
    c = extract_c(m)
    res = cs_residual(m, c)
    if res > tol:
        raise NotControlledStochastic(f"no c with U(1 x |->) = c x |-> (residual {res:.3g})", res)
    dec = operator_schmidt(m)
    f = flat_state(q)
    beta = np.einsum("aij,ij->a", dec.left, c)
    span_res = float(np.abs(np.einsum("a,aij->ij", beta, dec.left) - c).max())
    if span_res > tol:
        raise NotControlledStochastic(f"c is not in the span of the Schmidt operators ({span_res:.3g})", span_res)
    mu = beta / dec.weights
    eig_res = float(np.abs(dec.right @ f - mu[:, None] * f).max()) if dec.rank else 0.0
    if eig_res > tol:
        raise NotControlledStochastic(f"Schmidt operators do not fix the flat state ({eig_res:.3g})", eig_res)
    s_idx = tuple(int(a) for a in np.flatnonzero(np.abs(mu) > MU_ZERO))
    z_idx = tuple(int(a) for a in np.flatnonzero(np.abs(mu) <= MU_ZERO))
    cs, us = [], []
    for a in s_idx:
        cs.append(dec.weights[a] * mu[a] * dec.left[a])
        us.append(dec.right[a] / mu[a])
    for a in z_idx:
        cs.append(dec.weights[a] * dec.left[a])
        us.append(dec.right[a] + np.eye(q))
    if z_idx:
        cs.append(-sum(dec.weights[a] * dec.left[a] for a in z_idx))
        us.append(np.eye(q))
    if not cs:
        cs, us = [np.zeros((q, q))], [np.eye(q)]
    return CSFactorization(np.array(cs), np.array(us), c, s_idx, z_idx)


def verify_bistochastic_refinement(fact, gate, tol=TAU_COND):
    """True iff every ``u_a`` also has unit column sums.

    Returns None unless ``(1 x <-|) U = c x <-|`` holds with the factorization's
    ``c``, since the refinement is then not expected.
    """
    if bcs_residual(gate, fact.c) > tol:
        return None
    return all(is_bistochastic(u, tol) for u in fact.u_factors)


def factorization_constraints_hold(fact, tol=TAU_COND):
    """Stochastic factors and ``sum c_a = c``."""
    return all(is_stochastic(u, tol) for u in fact.u_factors) and bool(
        np.abs(fact.c_factors.sum(axis=0) - fact.c).max() <= tol
    )


def random_cs_form(q, rng, rank=None, bistochastic=True):
    """Random ``sum_a c_a x u_a`` with Gaussian ``c_a`` and real stochastic ``u_a``."""
    rank = rank or int(rng.integers(1, q * q + 2))
    avg = np.full((q, q), 1.0 / q)
    proj = np.eye(q) - avg
    out = np.zeros((q * q, q * q))
    for _ in range(rank):
        x = rng.normal(size=(q, q))
        u = avg + (proj @ x @ proj if bistochastic else x @ proj)
        out += np.kron(rng.normal(size=(q, q)), u)
    return out

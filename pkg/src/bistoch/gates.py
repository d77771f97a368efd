"""Two-site gates, diagonal observables and the local flat-state conditions.

Conventions
-----------
A two-site gate on local dimension ``q`` is a real ``q**2 x q**2`` matrix.
Rows index output configurations, columns input configurations, and the
composite index is ``control * q + target``: the first tensor factor is the
control (left) site, the second the target (right) site.

A controlled gate is ``sum_i |i><i| (x) u_i``. "Stochastic" means
``u @ flat == flat`` (unit row sums), "bistochastic" additionally
``flat @ u == flat`` (unit column sums). Entry signs are not part of either
notion; nonnegativity is tracked separately by :attr:`LocalGate.probabilistic`.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bistoch._validation import check_matrix, check_q, frozen, infer_q_from_square
from bistoch.exceptions import InvalidDimension, InvalidParameters, RewriteNotApplicable

TAU_COND = 1e-10
EPS_NONNEG = 1e-12


class LocalGate:
    """A homogeneous two-site gate given by its full ``q^2 x q^2`` matrix."""

    def __init__(self, matrix, q=None, name=None):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidDimension(f"gate matrix must be square, got shape {matrix.shape}")
        if q is None:
            q = infer_q_from_square(matrix.shape[0])
        q = check_q(q)
        self._q = q
        self._matrix = frozen(check_matrix(matrix, (q * q, q * q), "gate matrix"))
        self.name = name

    @property
    def q(self):
        return self._q

    @property
    def matrix(self):
        return self._matrix

    @property
    def tensor(self):
        """Matrix reshaped to ``(c_out, t_out, c_in, t_in)``."""
        q = self._q
        return self._matrix.reshape(q, q, q, q)

    @property
    def probabilistic(self):
        return bool(np.all(self._matrix >= -EPS_NONNEG))

    def to_json_dict(self):
        return {"q": self.q, "matrix": self.matrix.tolist()}

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<{type(self).__name__}{label} q={self.q}>"


class ControlledGate(LocalGate):
    """Controlled gate ``sum_i |i><i| (x) u_i`` built from its ``q`` blocks."""

    def __init__(self, blocks, name=None):
        blocks = np.asarray(blocks, dtype=float)
        if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2] or blocks.shape[0] != blocks.shape[1]:
            raise InvalidDimension(
                f"blocks must be a list of q matrices of shape (q, q), got {blocks.shape}"
            )
        q = check_q(blocks.shape[0])
        self._blocks = frozen(blocks)
        super().__init__(assemble(blocks), q=q, name=name)

    @property
    def blocks(self):
        return self._blocks

    @classmethod
    def from_matrix(cls, matrix, name=None):
        return cls(split(matrix), name=name)

    def to_json_dict(self):
        return {"q": self.q, "blocks": self.blocks.tolist()}


def assemble(blocks):
    """Return ``sum_i |i><i| (x) blocks[i]``."""
    blocks = np.asarray(blocks, dtype=float)
    q = blocks.shape[0]
    out = np.zeros((q * q, q * q))
    for i, u in enumerate(blocks):
        out[i * q:(i + 1) * q, i * q:(i + 1) * q] = u
    return out


def split(matrix):
    """Inverse of :func:`assemble`; raises if ``matrix`` is not block diagonal."""
    matrix = np.asarray(matrix, dtype=float)
    q = infer_q_from_square(matrix.shape[0])
    t = matrix.reshape(q, q, q, q)
    blocks = np.array([t[i, :, i, :] for i in range(q)])
    off = t.copy()
    for i in range(q):
        off[i, :, i, :] = 0.0
    if np.any(off != 0.0):
        raise InvalidDimension("matrix is not of controlled (block-diagonal) form")
    return blocks


@dataclass(frozen=True)
class Observable:
    """Diagonal single-site observable with coefficients ``d`` (sum zero)."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 1:
            raise InvalidDimension("observable coefficients must be a vector")
        check_q(d.size)
        if not np.any(d != 0):
            raise InvalidParameters("observable must be nonzero")
        if abs(d.sum()) > TAU_COND * max(1.0, np.abs(d).max()):
            raise InvalidParameters(f"observable is not traceless (sum = {d.sum():.3g})")
        object.__setattr__(self, "d", frozen(d))

    @property
    def q(self):
        return self.d.size

    @property
    def state(self):
        """Single-site vector ``d / sqrt(q)``."""
        return self.d / math.sqrt(self.q)


def as_observable(obs, q=None):
    if isinstance(obs, Observable):
        out = obs
    else:
        out = Observable(np.asarray(obs, dtype=float))
    if q is not None and out.q != q:
        raise InvalidDimension(f"observable has q={out.q}, expected {q}")
    return out


def flat_state(q):
    """The normalized uniform vector of length ``q``."""
    q = check_q(q)
    return np.full(q, 1.0 / math.sqrt(q))


def traceless_basis(q):
    """``q - 1`` orthogonal traceless coefficient vectors with ``|d|^2 = q``.

    Rows ``1..q-1`` of the orthonormal DCT-II matrix (row 0 is the flat
    vector), rescaled by ``sqrt(q)``.
    """
    q = check_q(q)
    i = np.arange(q)
    out = []
    for k in range(1, q):
        row = np.sqrt(2.0 / q) * np.cos(np.pi * k * (2 * i + 1) / (2 * q))
        row = np.sqrt(q) * row
        row[np.abs(row) < 1e-15] = 0.0
        out.append(Observable(row))
    return out


def _gate_matrix(gate):
    if isinstance(gate, LocalGate):
        return gate.q, gate.matrix
    m = np.asarray(gate, dtype=float)
    return infer_q_from_square(m.shape[0]), m


def cs_residual(gate, c=None):
    """Max-norm of ``U (1 x |->) - c x |->`` (``c`` defaults to identity)."""
    q, m = _gate_matrix(gate)
    f = flat_state(q)[:, None]
    c = np.eye(q) if c is None else np.asarray(c, dtype=float)
    lhs = m @ np.kron(np.eye(q), f)
    return float(np.abs(lhs - np.kron(c, f)).max())


def bcs_residual(gate, c=None):
    """Max-norm of ``(1 x <-|) U - c x <-|``."""
    q, m = _gate_matrix(gate)
    f = flat_state(q)[None, :]
    c = np.eye(q) if c is None else np.asarray(c, dtype=float)
    lhs = np.kron(np.eye(q), f) @ m
    return float(np.abs(lhs - np.kron(c, f)).max())


def check_cs(gate, tol=TAU_COND):
    """Controlled-stochastic condition ``U (1 x |->) = 1 x |->``."""
    return cs_residual(gate) <= tol


def check_bcs(gate, tol=TAU_COND):
    """Controlled-bistochastic condition ``(1 x <-|) U = 1 x <-|``."""
    return bcs_residual(gate) <= tol


def is_stochastic(u, tol=TAU_COND):
    u = np.asarray(u, dtype=float)
    return bool(np.abs(u.sum(axis=1) - 1.0).max() <= tol)


def is_bistochastic(u, tol=TAU_COND):
    u = np.asarray(u, dtype=float)
    return is_stochastic(u, tol) and bool(np.abs(u.sum(axis=0) - 1.0).max() <= tol)


@dataclass(frozen=True)
class GeneralizedCondition:
    """Result of :func:`check_generalized`."""

    c: np.ndarray
    residual: float
    bistochastic: bool
    bcs_residual: float

    @property
    def bcs_holds(self):
        """Whether ``(1 x <-|) U = c x <-|`` holds with the same ``c``."""
        return self.bcs_residual <= TAU_COND


def extract_c(gate):
    """Candidate ``c`` from contracting the target legs with the flat state."""
    q, m = _gate_matrix(gate)
    f = flat_state(q)
    t = m.reshape(q, q, q, q)
    return np.einsum("atbs,t,s->ab", t, f, f)


def check_generalized(gate, tol=TAU_COND):
    """Return the ``c`` with ``U (1 x |->) = c x |->``, or ``None``."""
    c = extract_c(gate)
    res = cs_residual(gate, c)
    if res > tol:
        return None
    return GeneralizedCondition(
        c=frozen(c), residual=res, bistochastic=is_bistochastic(c, tol), bcs_residual=bcs_residual(gate, c)
    )


@dataclass(frozen=True)
class ConditionReport:
    cs_holds: bool
    bcs_holds: bool
    generalized_c: np.ndarray = None
    residual_norms: dict = field(default_factory=dict)

    def to_json_dict(self):
        out = {
            "cs": self.cs_holds,
            "bcs": self.bcs_holds,
            "generalized_c": None if self.generalized_c is None else self.generalized_c.tolist(),
            "residuals": dict(self.residual_norms),
        }
        return out


def check_conditions(gate, tol=TAU_COND):
    q, m = _gate_matrix(gate)
    cs = cs_residual(m)
    bcs = bcs_residual(m)
    gen = check_generalized(m, tol)
    residuals = {"cs": cs, "bcs": bcs}
    if gen is not None:
        residuals["generalized_cs"] = gen.residual
        residuals["generalized_bcs"] = gen.bcs_residual
    return ConditionReport(
        cs_holds=cs <= tol,
        bcs_holds=bcs <= tol,
        generalized_c=None if gen is None else gen.c,
        residual_norms=residuals,
    )


def rewrite_generalized(gate, a, b, tol=TAU_COND):
    """Move the single-site factors of ``U = sum_k (a|k><k|b) (x) u_k`` onto the targets.

    Returns the controlled gate with blocks ``b @ u_k @ a``. In a brickwork
    circuit this gate generates the same dynamics as ``U`` up to a fixed
    similarity transform acting on the first and last layers.
    """
    q, m = _gate_matrix(gate)
    a = check_matrix(a, (q, q), "a")
    b = check_matrix(b, (q, q), "b")
    for name, x in (("a", a), ("b", b)):
        if not is_bistochastic(x, tol):
            raise RewriteNotApplicable(f"{name} is not bistochastic")
    t = m.reshape(q, q, q, q)
    # U[(i,j),(k,l)] = sum_al a[i,al] b[al,k] u_al[j,l]
    coeff = np.einsum("ia,ak->ika", a, b).reshape(q * q, q)
    rhs = t.transpose(0, 2, 1, 3).reshape(q * q, q * q)
    if np.linalg.matrix_rank(coeff) < q:
        raise RewriteNotApplicable("pairing matrices do not determine the blocks uniquely")
    sol, *_ = np.linalg.lstsq(coeff, rhs, rcond=None)
    blocks = sol.reshape(q, q, q)
    recon = np.einsum("ika,ajl->ijkl", coeff.reshape(q, q, q), blocks).reshape(q * q, q * q)
    res = float(np.abs(recon - m).max())
    if res > tol:
        raise RewriteNotApplicable(f"gate is not of the paired form (residual {res:.3g})")
    return ControlledGate([b @ u @ a for u in blocks])


def permutation_matrix(perm):
    """Matrix with ``P|j> = |perm[j]>``."""
    perm = tuple(int(p) for p in perm)
    q = len(perm)
    if sorted(perm) != list(range(q)):
        raise InvalidParameters(f"{perm!r} is not a permutation of range({q})")
    out = np.zeros((q, q))
    out[list(perm), list(range(q))] = 1.0
    return out


def make_gate(family, q=2, *, p=None, s=0.0, perms=None, blocks=None):
    """Build a named controlled gate.

    Families: ``identity``, ``cnot``, ``averaged_haar``, ``tilted_east``
    (``p`` in [0, 1], ``s >= 0``, ``inf`` allowed), ``controlled_permutation``
    (``perms``: one image tuple per control value) and ``custom`` (``blocks``).
    """
    family = family.replace("-", "_").lower()
    if family == "identity":
        q = check_q(q)
        return ControlledGate([np.eye(q)] * q, name="identity")
    if family == "cnot":
        return ControlledGate([np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])], name="cnot")
    if family == "averaged_haar":
        return ControlledGate([np.eye(2), np.full((2, 2), 0.5)], name="averaged_haar")
    if family == "tilted_east":
        if p is None or not 0.0 <= p <= 1.0:
            raise InvalidParameters(f"tilted_east needs p in [0, 1], got {p!r}")
        if s is None or not s >= 0.0:
            raise InvalidParameters(f"tilted_east needs s >= 0, got {s!r}")
        off = p * math.exp(-s)
        u1 = np.array([[1.0 - p, off], [off, 1.0 - p]])
        return ControlledGate([np.eye(2), u1], name=f"tilted_east(p={p!r}, s={s!r})")
    if family == "controlled_permutation":
        if perms is None:
            raise InvalidParameters("controlled_permutation needs perms")
        mats = [permutation_matrix(pm) for pm in perms]
        if len(mats) != mats[0].shape[0]:
            raise InvalidParameters("need one permutation per control value")
        return ControlledGate(mats, name="cperm" + "".join("(" + ",".join(map(str, pm)) + ")" for pm in perms))
    if family == "custom":
        if blocks is None:
            raise InvalidParameters("custom gate needs blocks")
        return ControlledGate(blocks, name="custom")
    raise InvalidParameters(f"unknown gate family {family!r}")


# random gate generators ------------------------------------------------------

def random_permutation_mixture(q, rng, n_terms=None):
    """Random nonnegative bistochastic matrix (convex mix of permutations)."""
    n_terms = n_terms or q + 1
    w = rng.dirichlet(np.ones(n_terms))
    return sum(wi * permutation_matrix(rng.permutation(q)) for wi in w)


def random_real_bistochastic(q, rng):
    """Random real matrix with unit row and column sums, signs unrestricted."""
    proj = np.eye(q) - np.full((q, q), 1.0 / q)
    return np.full((q, q), 1.0 / q) + proj @ rng.normal(size=(q, q)) @ proj


def random_row_stochastic(q, rng):
    u = rng.random((q, q)) + 0.05
    return u / u.sum(axis=1, keepdims=True)


def random_controlled(q, rng, kind="bistochastic", nonnegative=True):
    """Random controlled gate whose blocks are of the requested kind.

    ``kind`` is ``bistochastic``, ``row`` (CS only) or ``column`` (BCS only).
    """
    if kind == "bistochastic":
        gen = random_permutation_mixture if nonnegative else random_real_bistochastic
        blocks = [gen(q, rng) for _ in range(q)]
    elif kind == "row":
        blocks = [random_row_stochastic(q, rng) for _ in range(q)]
    elif kind == "column":
        blocks = [random_row_stochastic(q, rng).T for _ in range(q)]
    else:
        raise InvalidParameters(f"unknown kind {kind!r}")
    return ControlledGate(blocks, name=f"random_{kind}")


# serialization ---------------------------------------------------------------

def gate_from_json_dict(data):
    if "blocks" in data:
        gate = ControlledGate(data["blocks"], name=data.get("name"))
    elif "matrix" in data:
        gate = LocalGate(data["matrix"], name=data.get("name"))
    else:
        raise InvalidParameters("gate JSON needs either 'blocks' or 'matrix'")
    if "q" in data and int(data["q"]) != gate.q:
        raise InvalidDimension(f"declared q={data['q']} does not match matrices (q={gate.q})")
    return gate


def load_gate(path):
    return gate_from_json_dict(json.loads(Path(path).read_text()))


def save_gate(gate, path):
    Path(path).write_text(json.dumps(gate.to_json_dict()) + "\n")

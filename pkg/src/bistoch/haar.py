"""Folded-picture averaging of random quantum controlled gates (qubits only).

Folded legs are ordered ``(ket, bra)`` per site and sites are grouped
control first, so the 16-dim folded index is
``8 * c_ket + 4 * c_bra + 2 * t_ket + t_bra``. The diagonal subspace of a
folded site is spanned by ``|00>`` and ``|11>``, relabeled ``|0>`` and ``|1>``.
"""

import math
from dataclasses import dataclass

import numpy as np

from bistoch._validation import check_rng
from bistoch.circuit import layer_pairs, layer_parity
from bistoch.exceptions import InvalidParameters
from bistoch.gates import _gate_matrix, make_gate

UNITARY_TOL = 1e-10
HADAMARD_TOL = 1e-12

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]]),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
SWAP = np.eye(4)[[0, 2, 1, 3]]
P0 = np.diag([1.0, 0.0])
P1 = np.diag([0.0, 1.0])
DIAG = np.array([0, 3])  # |00>, |11> of one folded site
BELL = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0)


def _check_unitary(w, dim):
    w = np.asarray(w, dtype=complex)
    if w.shape != (dim, dim):
        raise InvalidParameters(f"expected a {dim}x{dim} matrix, got {w.shape}")
    err = float(np.abs(w.conj().T @ w - np.eye(dim)).max())
    if err > UNITARY_TOL:
        raise InvalidParameters(f"matrix is not unitary (deviation {err:.3g})")
    return w


def fold(w, check=True):
    """``W (x) W*`` with legs regrouped per site as ``(ket, bra)``.

    Works for one- and two-qubit operators.
    """
    w = np.asarray(w, dtype=complex)
    n = int(round(math.log2(w.shape[0])))
    if check:
        w = _check_unitary(w, 2 ** n)
    big = np.kron(w, w.conj())
    legs = (2,) * (4 * n)
    t = big.reshape(legs)
    # axes: out(ket sites..., bra sites...), in(ket sites..., bra sites...)
    out = [ax for s in range(n) for ax in (s, n + s)]
    perm = out + [2 * n + ax for ax in out]
    return t.transpose(perm).reshape(4 ** n, 4 ** n)


def controlled(w):
    """``|0><0| (x) 1 + |1><1| (x) w``."""
    return np.kron(P0, np.eye(2)) + np.kron(P1, w)


def haar_unitary(rng, n=2):
    """Haar-random ``U(n)`` element from QR of a complex Gaussian."""
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / math.sqrt(2.0)
    qm, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return qm * ph[None, :]


def analytic_haar_folded():
    """Average of the folded controlled gate over Haar ``w``."""
    p00 = np.zeros((4, 4))
    p00[0, 0] = 1.0
    p11 = np.zeros((4, 4))
    p11[3, 3] = 1.0
    bell = np.zeros((4, 4))
    bell[np.ix_(DIAG, DIAG)] = 0.5
    return np.kron(p00, np.eye(4)) + np.kron(p11, bell)


@dataclass(frozen=True)
class HaarAverage:
    estimate: np.ndarray
    analytic: np.ndarray
    samples: int

    @property
    def distance(self):
        return float(np.abs(self.estimate - self.analytic).max())


def fold_batch(w):
    """:func:`fold` over a stack of operators with shape ``(n, d, d)``."""
    w = np.asarray(w, dtype=complex)
    n_q = int(round(math.log2(w.shape[-1])))
    big = np.einsum("nab,ncd->nacbd", w, w.conj())
    t = big.reshape((w.shape[0],) + (2,) * (4 * n_q))
    # axes after the batch: out_ket sites, out_bra sites, in_ket sites, in_bra sites
    out = [1 + ax for s in range(n_q) for ax in (s, n_q + s)]
    perm = [0] + out + [2 * n_q + ax for ax in out]
    return t.transpose(perm).reshape(w.shape[0], 4 ** n_q, 4 ** n_q)


def haar_average_folded(samples, seed=None, chunk=4096):
    """Monte-Carlo average of the folded controlled gate with Haar ``w``.

    Returns the estimate next to the closed-form average.
    """
    if samples < 1:
        raise InvalidParameters("samples must be >= 1")
    rng = check_rng(seed)
    acc = np.zeros((16, 16), dtype=complex)
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        z = (rng.normal(size=(n, 2, 2)) + 1j * rng.normal(size=(n, 2, 2))) / math.sqrt(2.0)
        qm, r = np.linalg.qr(z)
        d = np.diagonal(r, axis1=1, axis2=2)
        w = qm * (d / np.abs(d))[:, None, :]
        gates = np.zeros((n, 4, 4), dtype=complex)
        gates[:, :2, :2] = np.eye(2)
        gates[:, 2:, 2:] = w
        acc += fold_batch(gates).sum(axis=0)
        done += n
    return HaarAverage(acc / samples, analytic_haar_folded(), samples)


def project_diagonal(folded):
    """Restrict every folded site to ``{|00>, |11>}``; returns a real matrix.

    Raises if the restriction has a non-negligible imaginary part.
    """
    f = np.asarray(folded)
    n = int(round(math.log(f.shape[0], 4)))
    idx = np.array([0])
    for _ in range(n):
        idx = (idx[:, None] * 4 + DIAG[None, :]).reshape(-1)
    sub = f[np.ix_(idx, idx)]
    if np.abs(sub.imag).max() > 1e-9:
        raise InvalidParameters("projected gate is not real")
    return np.ascontiguousarray(sub.real)


def project_vector(vec):
    """Diagonal part of a folded single-site vector."""
    return np.asarray(vec)[DIAG]


def pauli_projection(name):
    """Folded ``vec(sigma)`` restricted to the diagonal subspace."""
    return project_vector(PAULI[name].reshape(-1)).real


def check_hadamard_relation(gate, h=None, tol=HADAMARD_TOL):
    """``(H x H) U (H x H) = SWAP U SWAP`` and the mirrored ``|0>`` relations.

    The mirrored relations are ``U (|0> x 1) = |0> x 1`` and
    ``(<0| x 1) U = <0| x 1``.
    """
    q, m = _gate_matrix(gate)
    if q != 2:
        raise InvalidParameters("the Hadamard relation is defined for q = 2")
    h = HADAMARD if h is None else np.asarray(h, dtype=float)
    hh = np.kron(h, h)
    res = float(np.abs(hh @ m @ hh - SWAP @ m @ SWAP).max())
    zero = np.array([[1.0], [0.0]])
    e0 = np.kron(zero, np.eye(2))
    res_in = float(np.abs(m @ e0 - e0).max())
    res_out = float(np.abs(e0.T @ m - e0.T).max())
    return {
        "relation": res <= tol,
        "local_relations": res_in <= tol and res_out <= tol,
        "residuals": {"relation": res, "zero_in": res_in, "zero_out": res_out},
    }


# tilted East ------------------------------------------------------------------

def _rx(a):
    return np.cos(a) * np.eye(2) + 1j * np.sin(a) * PAULI["x"]


def _ry(a):
    return np.cos(a) * np.eye(2) + 1j * np.sin(a) * PAULI["y"]


def tilted_core(beta, J, D=None):
    """``(1 x e^{i beta X/2}) e^{i (J - pi/4) Z x Z} (1 x e^{i beta Y/2}) D``.

    With this convention the averaged gate has flip probability
    ``p = sin(beta)**2`` and tilting ``exp(-s) = cos(2 J)``.
    """
    D = np.ones(4) if D is None else np.asarray(D, dtype=complex)
    if D.shape == (4, 4):
        if np.abs(D - np.diag(np.diag(D))).max() > UNITARY_TOL:
            raise InvalidParameters("D must be diagonal")
        D = np.diag(D)
    if D.shape != (4,) or np.abs(np.abs(D) - 1.0).max() > UNITARY_TOL:
        raise InvalidParameters("D must be a diagonal unitary (4 unit-modulus phases)")
    zz = np.array([1.0, -1.0, -1.0, 1.0])
    coupling = np.diag(np.exp(1j * (J - math.pi / 4) * zz))
    return (np.kron(np.eye(2), _rx(beta / 2)) @ coupling @ np.kron(np.eye(2), _ry(beta / 2))) * D[None, :]


def tilted_parameters(beta, J):
    """``(p, exp(-s))`` of the averaged gate."""
    return math.sin(beta) ** 2, math.cos(2 * J)


def tilted_closed_form(p, tilt):
    """``1 x |-><-| + a_0 P0 x |d><d| + a_1 P1 x |d><d|`` in the computational basis.

    ``a_0 = 1 - p (1 - tilt)``, ``a_1 = 1 - p (1 + tilt)``, ``tilt = exp(-s)``.
    """
    flat = np.full((2, 2), 0.5)
    dd = np.array([[0.5, -0.5], [-0.5, 0.5]])
    a0 = 1.0 - p * (1.0 - tilt)
    a1 = 1.0 - p * (1.0 + tilt)
    return np.kron(np.eye(2), flat) + a0 * np.kron(P0, dd) + a1 * np.kron(P1, dd)


def rotate_to_flat_basis(matrix):
    """Rewrite a gate in the ``{|->, |d>}`` basis on both sites and swap the sites."""
    v = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    vv = np.kron(v, v)
    return SWAP @ vv.T @ np.asarray(matrix) @ vv @ SWAP


def _phase_fold_average(order):
    # E over phi of fold(e^{i phi Z}) on one site with a K-point trapezoid rule
    phis = 2 * math.pi * np.arange(order) / order
    z = np.array([1.0, -1.0])
    diff = (z[:, None] - z[None, :]).reshape(-1)
    return np.diag(np.exp(1j * np.outer(phis, diff)).mean(axis=0))


@dataclass(frozen=True)
class TiltedEastResult:
    projected: np.ndarray
    closed_form: np.ndarray
    p: float
    tilt: float
    method: str
    leakage: float = 0.0

    @property
    def residual(self):
        """Distance to the closed form plus weight left outside the diagonal subspace."""
        return float(np.abs(self.projected - self.closed_form).max()) + self.leakage

    @property
    def s(self):
        return -math.log(self.tilt) if self.tilt > 0 else math.inf

    @property
    def in_inactive_region(self):
        """Whether ``exp(-s) = cos 2J`` lies in ``[0, 1]``, i.e. ``s >= 0`` is real."""
        return 0.0 <= self.tilt <= 1.0

    def as_tilted_east_blocks(self):
        r = rotate_to_flat_basis(self.projected)
        return r[:2, :2].copy(), r[2:, 2:].copy()

    def to_json_dict(self):
        return {
            "method": self.method,
            "p": self.p,
            "exp_minus_s": self.tilt,
            "s": self.s if self.in_inactive_region else None,
            "inactive_region": self.in_inactive_region,
            "projected": self.projected.tolist(),
            "closed_form": self.closed_form.tolist(),
            "leakage": self.leakage,
            "residual": self.residual,
        }


def tilted_east_average(beta, J, D=None, method="quadrature", order=16, samples=100000, seed=None):
    """Average the folded tilted gate over the four ``U(1)`` phases and project.

    ``w_j = exp(i phi_j Z)`` enter as ``(w_1 x w_2) core (w_3 x w_4)``. The
    folded gate is multilinear in the four folded phases, so the product
    quadrature reduces to one single-phase average per site; an ``order``-point
    trapezoid rule is exact for ``order >= 3``. Lower orders leave weight
    outside the diagonal subspace, which shows up in ``residual``.
    """
    core = fold(tilted_core(beta, J, D))
    if method == "quadrature":
        if order < 1:
            raise InvalidParameters("order must be >= 1")
        e = _phase_fold_average(order)
        ee = np.kron(e, e)
        avg = ee @ core @ ee
    elif method == "mc":
        rng = check_rng(seed)
        z = np.array([1.0, -1.0])
        diff = (z[:, None] - z[None, :]).reshape(-1)
        ph = rng.uniform(0.0, 2 * math.pi, size=(samples, 4))
        site = [np.exp(1j * ph[:, k, None] * diff[None, :]) for k in range(4)]
        left = np.einsum("na,nb->nab", site[0], site[1]).reshape(samples, 16)
        right = np.einsum("na,nb->nab", site[2], site[3]).reshape(samples, 16)
        avg = core * (left.T @ right) / samples
    else:
        raise InvalidParameters(f"method must be 'quadrature' or 'mc', got {method!r}")
    p, tilt = tilted_parameters(beta, J)
    mask = np.zeros(16, dtype=bool)
    mask[(DIAG[:, None] * 4 + DIAG[None, :]).reshape(-1)] = True
    leak = np.abs(avg[~mask]).max(initial=0.0) + np.abs(avg[:, ~mask]).max(initial=0.0)
    return TiltedEastResult(project_diagonal(avg), tilted_closed_form(p, tilt), p, tilt, method, float(leak))


# quantum correlator ------------------------------------------------------------

def _apply_two_site(m, g, sites, n):
    # left-multiply the 2^n x 2^n operator m by g acting on sites (c, t)
    t = m.reshape((2,) * n + (-1,))
    g4 = g.reshape(2, 2, 2, 2)
    c, tt = sites
    t = np.tensordot(g4, t, axes=([2, 3], [c, tt]))
    t = np.moveaxis(t, [0, 1], [c, tt])
    return t.reshape(m.shape)


def quantum_correlator(n_sites, x_src, x_obs, layers, realizations, seed=None, boundary="open",
                       pauli=("z", "z")):
    """Haar-averaged ``tr[sigma_obs(x_obs) U sigma_src(x_src) U^dag] / 2^N``.

    Every gate carries an independent Haar ``w``. Returns ``(mean, std_error)``.
    """
    rng = check_rng(seed)
    periodic = boundary == "periodic"
    dim = 2 ** n_sites

    def site_op(name, x):
        return np.kron(np.kron(np.eye(2 ** x), PAULI[name]), np.eye(2 ** (n_sites - x - 1)))

    src = site_op(pauli[1], x_src)
    obs = site_op(pauli[0], x_obs)
    vals = np.empty(realizations)
    for r in range(realizations):
        m = src.copy()
        for k in range(1, layers + 1):
            for pair in layer_pairs(n_sites, layer_parity(k), periodic):
                g = controlled(haar_unitary(rng))
                m = _apply_two_site(m, g, pair, n_sites)
                m = _apply_two_site(m.conj().T, g, pair, n_sites).conj().T
        vals[r] = float(np.real(np.trace(obs @ m)) / dim)
    err = float(vals.std(ddof=1) / math.sqrt(realizations)) if realizations > 1 else float("nan")
    return float(vals.mean()), err


def averaged_gate():
    """The classical gate obtained from Haar averaging and projection."""
    return make_gate("averaged_haar")

"""Dense brickwork evolution on configuration space.

Sites are integers ``0..N-1``; configuration index has site 0 as the most
significant base-``q`` digit. The even layer couples ``(2k, 2k+1)``, the odd
layer ``(2k+1, 2k+2)`` (the pair ``(N-1, 0)`` only with periodic boundary).
The left site of every pair is the control. One period is the odd layer
followed by the even layer, so layer ``k`` (counting from 1) is odd for odd
``k``.
"""

import math
from dataclasses import dataclass

import numpy as np

from bistoch._validation import check_q
from bistoch.exceptions import InvalidDimension, InvalidParameters
from bistoch.gates import LocalGate, as_observable, check_bcs, check_cs, flat_state

EVEN, ODD = "even", "odd"
W_MAX = 26


@dataclass(frozen=True)
class CircuitSpec:
    """Homogeneous brickwork circuit on ``N`` sites."""

    q: int
    N: int
    gate: LocalGate
    boundary: str = "periodic"

    def __post_init__(self):
        check_q(self.q)
        if self.gate.q != self.q:
            raise InvalidDimension(f"gate has q={self.gate.q}, circuit has q={self.q}")
        if self.boundary not in ("periodic", "open"):
            raise InvalidParameters(f"boundary must be 'periodic' or 'open', got {self.boundary!r}")
        if self.N < 2 or self.N % 2:
            raise InvalidDimension(f"N must be even and >= 2, got {self.N}")

    @property
    def periodic(self):
        return self.boundary == "periodic"

    @property
    def dim(self):
        return self.q ** self.N


def layer_parity(k):
    """Parity of layer ``k`` (1-based): odd layers act first."""
    return ODD if k % 2 else EVEN


def layer_pairs(n_sites, parity, periodic=False, offset=0):
    """Control/target pairs of one layer on a segment of ``n_sites`` sites.

    ``offset`` is the global index of the segment's first site; only pairs
    whose global left site has the layer's parity are included.
    """
    first = (0 if parity == EVEN else 1)
    start = (first - offset) % 2
    pairs = [(i, i + 1) for i in range(start, n_sites - 1, 2)]
    if periodic and n_sites % 2 == 0 and start == 1:
        pairs.append((n_sites - 1, 0))
    return pairs


def _apply_pair(psi, gate_matrix, q, n_sites, pair):
    c, t = pair
    if t == c + 1:
        v = psi.reshape(q ** c, q * q, -1)
        return np.matmul(gate_matrix, v).reshape(-1)
    if (c, t) == (n_sites - 1, 0):
        g = gate_matrix.reshape(q, q, q, q)
        v = psi.reshape(q, -1, q)
        return np.einsum("CTct,tmc->TmC", g, v, optimize=True).reshape(-1)
    raise InvalidParameters(f"unsupported pair {pair}")


def _apply_pairs(psi, gate_matrix, q, n_sites, pairs):
    for pair in pairs:
        psi = _apply_pair(psi, gate_matrix, q, n_sites, pair)
    return psi


def _check_state(state, spec):
    state = np.asarray(state, dtype=float)
    if state.shape != (spec.dim,):
        raise InvalidDimension(f"state must have length q^N = {spec.dim}, got {state.shape}")
    return state


def apply_layer(state, spec, parity, transpose=False):
    """Apply one brickwork layer (``parity`` is ``'even'`` or ``'odd'``).

    With ``transpose=True`` the transposed gates are applied, which evolves a
    bra backwards through the layer.
    """
    if parity not in (EVEN, ODD):
        raise InvalidParameters(f"parity must be 'even' or 'odd', got {parity!r}")
    psi = _check_state(state, spec)
    g = spec.gate.matrix.T if transpose else spec.gate.matrix
    pairs = layer_pairs(spec.N, parity, spec.periodic)
    return _apply_pairs(psi, g, spec.q, spec.N, pairs)


def evolve(state, spec, layers, transpose=False, start=1):
    """Apply ``layers`` brickwork layers, numbered from ``start``.

    ``evolve(v, spec, 2 * t)`` applies ``t`` full periods. For
    ``transpose=True`` the layers run downward from ``start`` (a bra going
    back in time), i.e. ``start, start - 1, ...``.
    """
    if layers < 0:
        raise InvalidParameters("layers must be >= 0")
    psi = _check_state(state, spec).copy()
    for n in range(layers):
        k = start - n if transpose else start + n
        psi = apply_layer(psi, spec, layer_parity(k), transpose=transpose)
    return psi


def evolve_periods(state, spec, periods):
    return evolve(state, spec, 2 * periods)


def product_state(vectors):
    out = np.ones(1)
    for v in vectors:
        out = np.kron(out, v)
    return out


def local_state(q, n_sites, inserts):
    """Flat product state with single-site vectors replacing sites in ``inserts``."""
    f = flat_state(q)
    return product_state([inserts.get(i, f) for i in range(n_sites)])


def single_site_marginals(psi, q, n_sites):
    """For each site, contract every other site with the flat state.

    Returns an ``(n_sites, q)`` array whose row ``x`` is the reduced vector on
    site ``x``.
    """
    scale = (1.0 / math.sqrt(q)) ** (n_sites - 1)
    t = psi.reshape((q,) * n_sites)
    out = np.empty((n_sites, q))
    for x in range(n_sites):
        axes = tuple(a for a in range(n_sites) if a != x)
        out[x] = t.sum(axis=axes) * scale
    return out


@dataclass(frozen=True)
class LightCone:
    """Causal window used by :func:`lightcone_contract`.

    ``lo``/``hi`` are global site bounds (``lo`` may be negative on a ring);
    ``ket_layers``/``bra_layers`` give the forward/backward split of the
    evolution.
    """

    lo: int
    hi: int
    ket_layers: int
    bra_layers: int
    mode: str

    @property
    def width(self):
        return self.hi - self.lo + 1


def absorption_mode(gate):
    """Which flat-state absorptions the gate allows: 'both', 'cs', 'bcs' or None."""
    cs, bcs = check_cs(gate), check_bcs(gate)
    if cs and bcs:
        return "both"
    if cs:
        return "cs"
    if bcs:
        return "bcs"
    return None


def plan_lightcone(x_src, x_obs, layers, mode):
    """Choose the forward/backward split minimizing the window width.

    With CS the ket stays flat right of the source and spreads left by at
    most one site per layer; with BCS the same holds for the bra and the
    observer. One extra site on the left keeps straddling gates acting on
    flat pairs.
    """
    if mode == "cs":
        splits = [(layers, 0)]
    elif mode == "bcs":
        splits = [(0, layers)]
    elif mode == "both":
        splits = [(k, layers - k) for k in range(layers + 1)]
    else:
        raise InvalidParameters(f"light cone needs CS and/or BCS absorption, got mode {mode!r}")
    best = None
    for k, b in splits:
        lo = min(x_src - k, x_obs - b) - 1
        hi = max(x_src, x_obs)
        cone = LightCone(lo, hi, k, b, mode)
        if best is None or cone.width < best.width:
            best = cone
    return best


def _window(spec, cone):
    """Clip/validate a cone for ``spec``; returns (lo, n_sites, thermodynamic) or None."""
    if spec.periodic:
        if cone.width > spec.N - 1:
            return None
        return cone.lo, cone.width, True
    lo = max(cone.lo, 0)
    hi = min(cone.hi, spec.N - 1)
    return lo, hi - lo + 1, cone.lo >= 0


def _window_evolve(psi, spec, lo, n_sites, layers, transpose, start):
    g = spec.gate.matrix.T if transpose else spec.gate.matrix
    for n in range(layers):
        k = start - n if transpose else start + n
        pairs = layer_pairs(n_sites, layer_parity(k), periodic=False, offset=lo)
        psi = _apply_pairs(psi, g, spec.q, n_sites, pairs)
    return psi


def full_chain_two_point(spec, d_src, d_obs, x_src, x_obs, layers):
    """Reference contraction on the whole chain."""
    src = as_observable(d_src, spec.q)
    obs = as_observable(d_obs, spec.q)
    xs, xo = _site(spec, x_src), _site(spec, x_obs)
    ket = local_state(spec.q, spec.N, {xs: src.state})
    bra = local_state(spec.q, spec.N, {xo: obs.state})
    return float(bra @ evolve(ket, spec, layers))


def _site(spec, x):
    if spec.periodic:
        return x % spec.N
    if not 0 <= x < spec.N:
        raise InvalidParameters(f"site {x} outside open chain of {spec.N} sites")
    return x


def lightcone_contract(spec, x_src, x_obs, layers, d_src, d_obs, w_max=None):
    """Two-point amplitude from the causal window of the two insertions.

    Returns ``(value, exact)``. ``exact`` is True when the window closes with
    flat states before reaching a chain end or wrapping around the ring, so
    the value equals the infinite-chain one. When the window cannot be used
    (no flat absorption, wrap-around, or wider than ``w_max``) the full
    chain is contracted instead and ``exact`` is False.
    """
    if layers < 0:
        raise InvalidParameters("layers must be >= 0")
    src = as_observable(d_src, spec.q)
    obs = as_observable(d_obs, spec.q)
    w_max = W_MAX if w_max is None else w_max
    mode = absorption_mode(spec.gate)
    if spec.periodic:
        x_src = x_src % spec.N
        # nearest image of the observer, measured from the source
        delta = (x_obs - x_src) % spec.N
        if delta > spec.N // 2:
            delta -= spec.N
        x_obs = x_src + delta
    else:
        _site(spec, x_src)
        _site(spec, x_obs)
    if mode is None:
        return full_chain_two_point(spec, src, obs, x_src, x_obs, layers), False
    cone = plan_lightcone(x_src, x_obs, layers, mode)
    win = _window(spec, cone)
    if win is None or win[1] > w_max:
        return full_chain_two_point(spec, src, obs, x_src, x_obs, layers), False
    lo, n_sites, thermo = win
    q = spec.q
    ket = local_state(q, n_sites, {x_src - lo: src.state})
    bra = local_state(q, n_sites, {x_obs - lo: obs.state})
    ket = _window_evolve(ket, spec, lo, n_sites, cone.ket_layers, False, 1)
    bra = _window_evolve(bra, spec, lo, n_sites, cone.bra_layers, True, layers)
    return float(bra @ ket), thermo

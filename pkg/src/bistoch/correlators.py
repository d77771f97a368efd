"""Infinite-temperature correlation functions of diagonal traceless observables."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from bistoch._validation import check_rng
from bistoch.circuit import (
    CircuitSpec,
    _apply_pairs,
    _window,
    absorption_mode,
    evolve,
    layer_pairs,
    layer_parity,
    lightcone_contract,
    local_state,
    plan_lightcone,
    single_site_marginals,
)
from bistoch.exceptions import InvalidParameters, TheoremNotApplicable
from bistoch.gates import as_observable, check_conditions, traceless_basis

ZERO_TOL = 1e-12
FULL_CHAIN_MAX_DIM = 2 ** 22


def _resolve(spec, x):
    if spec.periodic:
        return x % spec.N
    if not 0 <= x < spec.N:
        raise InvalidParameters(f"site {x} outside open chain of {spec.N} sites")
    return x


def is_thermodynamic(spec, x_src, x_obs, layers, mode=None):
    """Whether the finite-chain amplitude equals the infinite-chain one."""
    mode = absorption_mode(spec.gate) if mode is None else mode
    if mode is None:
        return False
    if spec.periodic:
        delta = (x_obs - x_src) % spec.N
        if delta > spec.N // 2:
            delta -= spec.N
        x_obs = x_src + delta
    cone = plan_lightcone(x_src, x_obs, layers, mode)
    win = _window(spec, cone)
    return bool(win is not None and win[2])


def two_point(spec, d_src, d_obs, x, layers, origin=0):
    """``C(x, t)`` with the source at ``origin`` and the observer at ``origin + x``.

    ``layers`` counts half-periods; ``2 * t`` gives ``t`` full periods.
    """
    x_src = _resolve(spec, origin)
    x_obs = _resolve(spec, origin + x)
    value, _ = lightcone_contract(spec, x_src, x_obs, layers, d_src, d_obs)
    return value


@dataclass
class CorrelationGrid:
    """Entries ``(x, t, value, exact)``; ``t`` counts layers."""

    xs: np.ndarray
    ts: np.ndarray
    values: np.ndarray
    exact: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def value(self, x, t):
        hit = np.flatnonzero((self.xs == x) & (self.ts == t))
        if not hit.size:
            raise KeyError((x, t))
        return float(self.values[hit[0]])

    def max_abs(self, mask=None, exact_only=False):
        sel = np.ones(len(self), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if exact_only:
            sel &= self.exact
        return float(np.abs(self.values[sel]).max()) if sel.any() else 0.0

    def to_csv(self, fh=None):
        """Write ``x,t,value,exact_flag`` rows; returns the text if ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["x", "t", "value", "exact_flag"])
        for x, t, v, e in zip(self.xs, self.ts, self.values, self.exact):
            w.writerow([int(x), int(t), repr(float(v)), int(bool(e))])
        return out.getvalue() if fh is None else None


def correlation_grid(spec, d_src, d_obs, x_range, t_range, origin=0):
    """Two-point function on a grid of displacements and layer counts."""
    src = as_observable(d_src, spec.q)
    obs = as_observable(d_obs, spec.q)
    x_range = [int(x) for x in x_range]
    t_range = sorted(int(t) for t in t_range)
    if t_range and t_range[0] < 0:
        raise InvalidParameters("layer counts must be >= 0")
    x_src = _resolve(spec, origin)
    sites = [_resolve(spec, origin + x) for x in x_range]
    mode = absorption_mode(spec.gate)
    rows = []
    if spec.dim <= FULL_CHAIN_MAX_DIM:
        psi = local_state(spec.q, spec.N, {x_src: src.state})
        done = 0
        for t in t_range:
            psi = evolve(psi, spec, t - done, start=done + 1)
            done = t
            marg = single_site_marginals(psi, spec.q, spec.N)
            for x, site in zip(x_range, sites):
                v = float(marg[site] @ obs.state)
                rows.append((x, t, v, is_thermodynamic(spec, x_src, site, t, mode)))
    else:
        for t in t_range:
            for x, site in zip(x_range, sites):
                v, exact = lightcone_contract(spec, x_src, site, t, src, obs)
                rows.append((x, t, v, exact))
    xs, ts, vs, ex = (np.array(c) for c in zip(*rows)) if rows else ([],) * 4
    return CorrelationGrid(
        np.asarray(xs, dtype=int), np.asarray(ts, dtype=int), np.asarray(vs, dtype=float),
        np.asarray(ex, dtype=bool),
        metadata={"gate": spec.gate.name, "N": spec.N, "boundary": spec.boundary, "origin": origin,
                  "d_src": src.d.tolist(), "d_obs": obs.d.tolist()},
    )


@dataclass(frozen=True)
class MultiPointQuery:
    """Insertions ``(x_i, t_i)`` in time order with one observable each."""

    points: tuple
    observables: tuple

    def __post_init__(self):
        pts = tuple((int(x), int(t)) for x, t in self.points)
        if len(pts) != len(self.observables):
            raise InvalidParameters("need one observable per insertion")
        times = [t for _, t in pts]
        if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
            raise InvalidParameters("insertion times must be non-decreasing and >= 0")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "observables", tuple(as_observable(o) for o in self.observables))

    @property
    def unique_maximum(self):
        xs = [x for x, _ in self.points]
        return xs.count(max(xs)) == 1


def multi_point(spec, query):
    """``<-...-| O_n U(t_n, t_{n-1}) ... O_1 U(t_1, 0) |-...->``.

    Each insertion multiplies the chain vector by ``diag(d)`` on its site, so
    that a two-insertion query reproduces :func:`two_point` exactly.
    """
    q, n = spec.q, spec.N
    psi = local_state(q, n, {})
    done = 0
    for (x, t), obs in zip(query.points, query.observables):
        if not 0 <= x < n:
            raise InvalidParameters(f"insertion site {x} out of range for N={n}")
        if obs.q != q:
            raise InvalidParameters("observable dimension does not match circuit")
        psi = evolve(psi, spec, t - done, start=done + 1)
        done = t
        v = psi.reshape(q ** x, q, -1) * obs.d[None, :, None]
        psi = v.reshape(-1)
    return float(local_state(q, n, {}) @ psi)


def _window_layer(psi, spec, lo, n_sites, k, transpose):
    g = spec.gate.matrix.T if transpose else spec.gate.matrix
    pairs = layer_pairs(n_sites, layer_parity(k), periodic=False, offset=lo)
    return _apply_pairs(psi, g, spec.q, n_sites, pairs)


def autocorrelation(spec, d, layers, origin=None, return_exact=False, d_obs=None):
    """``C(0, t)`` for ``t = 0..layers`` (in layers).

    ``origin`` defaults to the right edge of an open chain and to site 0 of a
    ring. For gates with both flat absorptions the forward-evolved ket and
    backward-evolved bra live on the triangle left of the origin: ``C(t)`` is
    the overlap of the ket after ``ceil(t/2)`` layers with the bra after
    ``floor(t/2)`` layers, both grown incrementally.
    """
    src = as_observable(d, spec.q)
    obs = src if d_obs is None else as_observable(d_obs, spec.q)
    if origin is None:
        origin = 0 if spec.periodic else spec.N - 1
    x0 = _resolve(spec, origin)
    mode = absorption_mode(spec.gate)
    exact = np.array([is_thermodynamic(spec, x0, x0, t, mode) for t in range(layers + 1)])
    series = None
    if mode == "both":
        k_max = (layers + 1) // 2
        win = _window(spec, plan_lightcone(x0, x0, 2 * k_max, "both"))
        if win is not None:
            series = _triangle_series(spec, src, obs, x0, layers, win[0], win[1])
    if series is None:
        psi = local_state(spec.q, spec.N, {x0: src.state})
        bra = local_state(spec.q, spec.N, {x0: obs.state})
        series = [float(bra @ psi)]
        for k in range(1, layers + 1):
            psi = evolve(psi, spec, 1, start=k)
            series.append(float(bra @ psi))
        series = np.array(series)
    return (series, exact) if return_exact else series


def _triangle_series(spec, src, obs, x0, layers, lo, n_sites):
    q = spec.q
    ket = local_state(q, n_sites, {x0 - lo: src.state})
    bra = local_state(q, n_sites, {x0 - lo: obs.state})
    # bra families: backward from an even layer (even t) or from an odd layer (odd t)
    bras = {0: bra, 1: bra.copy()}
    out = np.empty(layers + 1)
    k_done = b_done = 0
    for t in range(layers + 1):
        k, b = (t + 1) // 2, t // 2
        if k > k_done:
            ket = _window_layer(ket, spec, lo, n_sites, k, False)
            k_done = k
        if b > b_done:
            for par in (0, 1):
                bras[par] = _window_layer(bras[par], spec, lo, n_sites, b + 1 + par, True)
            b_done = b
        out[t] = float(bras[t % 2] @ ket)
    return out


def autocorrelation_periods(spec, d, periods, origin=None, d_obs=None):
    """Autocorrelation sampled at full periods ``t = 0..periods``."""
    return autocorrelation(spec, d, 2 * periods, origin=origin, d_obs=d_obs)[::2]


def scar_state(q, n_sites, d):
    """``|0 ... 0 d>``: a fixed point of open-chain circuits whose ``u_0`` is the identity."""
    obs = as_observable(d, q)
    zero = np.zeros(q)
    zero[0] = 1.0
    return local_state(q, n_sites, {**{i: zero for i in range(n_sites - 1)}, n_sites - 1: obs.state})


def scar_plateau(spec, d):
    """Projection of the edge autocorrelation onto the scar state.

    Returns ``(plateau, residual)``; ``residual`` measures how far the scar is
    from being a left and right fixed point of one period.
    """
    scar = scar_state(spec.q, spec.N, d)
    probe = local_state(spec.q, spec.N, {spec.N - 1: as_observable(d, spec.q).state})
    res = max(float(np.abs(evolve(scar, spec, 2) - scar).max()),
              float(np.abs(evolve(scar, spec, 2, transpose=True, start=2) - scar).max()))
    return float((probe @ scar) ** 2 / (scar @ scar)), res


def long_time_value(spec, d, origin=None, tol=1e-15, max_periods=10000, chunk=64):
    """Autocorrelation after it stops changing by more than ``tol`` per period.

    Returns ``(value, periods)``.
    """
    obs = as_observable(d, spec.q)
    if origin is None:
        origin = 0 if spec.periodic else spec.N - 1
    x0 = _resolve(spec, origin)
    ket = local_state(spec.q, spec.N, {x0: obs.state})
    bra = ket.copy()
    prev = float(bra @ ket)
    for t in range(1, max_periods + 1):
        ket = evolve(ket, spec, 2)
        cur = float(bra @ ket)
        if abs(cur - prev) < tol:
            return cur, t
        prev = cur
    return prev, max_periods


# theorem verification --------------------------------------------------------

def random_unique_max_query(rng, q, sites, max_layers, n_max=4, basis=None):
    """Random insertion set whose largest site occurs exactly once."""
    basis = traceless_basis(q) if basis is None else basis
    n = int(rng.integers(2, n_max + 1))
    while True:
        xs = [int(v) for v in rng.choice(sites, size=n)]
        if xs.count(max(xs)) == 1:
            break
    ts = sorted(int(v) for v in rng.integers(0, max_layers + 1, size=n))
    obs = []
    for _ in range(n):
        coeffs = rng.normal(size=len(basis))
        obs.append(sum(c * b.d for c, b in zip(coeffs, basis)))
    return MultiPointQuery(tuple(zip(xs, ts)), tuple(obs))


def verify_theorems(gate, sizes=(12,), periods=5, n_multi=500, seed=0, origins=(0, 1),
                    require_conditions=True, n_max=4):
    """Check the vanishing of two- and multi-point functions numerically.

    Two-point grids run on rings (entries inside the exactness window) and
    open chains; multi-point queries run on open chains. Which claims are
    checked follows from the gate's conditions: CS gives ``C(x>0)=0``, BCS
    gives ``C(x<0)=0``, both give the multi-point statement. With
    ``require_conditions=False`` every claim is checked regardless, which is
    how a negative control is run.
    """
    rep = check_conditions(gate)
    if require_conditions and not (rep.cs_holds or rep.bcs_holds):
        raise TheoremNotApplicable("gate satisfies neither the CS nor the BCS condition")
    check_pos = rep.cs_holds or not require_conditions
    check_neg = rep.bcs_holds or not require_conditions
    check_multi = (rep.cs_holds and rep.bcs_holds) or not require_conditions
    rng = check_rng(seed)
    layers = 2 * periods
    basis = traceless_basis(gate.q)
    viol = {"x>0": 0.0, "x<0": 0.0, "multi": 0.0}
    counts = {"x>0": 0, "x<0": 0, "multi": 0}
    for n_sites in sizes:
        for boundary in ("periodic", "open"):
            spec = CircuitSpec(gate.q, n_sites, gate, boundary)
            for origin in origins:
                if boundary == "open":
                    origin = origin + n_sites // 2
                xr = [x for x in range(-n_sites // 2 + 1, n_sites // 2)
                      if boundary == "periodic" or 0 <= origin + x < n_sites]
                for db in basis:
                    grid = correlation_grid(spec, db, db, xr, range(layers + 1), origin)
                    ok = grid.exact if boundary == "periodic" else np.ones(len(grid), bool)
                    for key, mask in (("x>0", grid.xs > 0), ("x<0", grid.xs < 0)):
                        if (key == "x>0" and check_pos) or (key == "x<0" and check_neg):
                            sel = mask & ok
                            counts[key] += int(sel.sum())
                            viol[key] = max(viol[key], grid.max_abs(sel))
        if check_multi and n_multi:
            spec = CircuitSpec(gate.q, n_sites, gate, "open")
            for _ in range(n_multi):
                query = random_unique_max_query(rng, gate.q, np.arange(n_sites), layers, n_max, basis)
                viol["multi"] = max(viol["multi"], abs(multi_point(spec, query)))
                counts["multi"] += 1
    checked = [k for k, n in counts.items() if n]
    max_violation = max((viol[k] for k in checked), default=0.0)
    return {
        "gate": gate.name,
        "cs": rep.cs_holds,
        "bcs": rep.bcs_holds,
        "checked": checked,
        "counts": counts,
        "violations": {k: viol[k] for k in checked},
        "max_violation": max_violation,
        "passed": bool(max_violation < ZERO_TOL),
    }

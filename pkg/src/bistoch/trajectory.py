"""Monte-Carlo trajectories of probabilistic brickwork circuits.

A gate with nonnegative entries and unit column sums is a Markov kernel:
the pair configuration ``(c, t)`` jumps to ``(c', t')`` with probability
``U[(c', t'), (c, t)]``. For a controlled gate this means the target value
``j`` moves to ``j'`` with probability ``u_i[j', j]`` given control ``i``.
"""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from bistoch.circuit import apply_layer, layer_pairs, layer_parity
from bistoch.exceptions import InvalidParameters, NotSamplable
from bistoch.gates import EPS_NONNEG, TAU_COND, as_observable

CHUNK = 8192


def check_samplable(gate, tol=TAU_COND):
    m = gate.matrix
    if m.min() < -EPS_NONNEG:
        raise NotSamplable(f"gate has a negative entry ({m.min():.3g})")
    dev = float(np.abs(m.sum(axis=0) - 1.0).max())
    if dev > tol:
        raise NotSamplable(f"gate columns do not sum to one (deviation {dev:.3g})")
    return np.clip(m, 0.0, None)


def _stream(seed, chunk):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


def _step_pair(conf, cdf, q, c, t, rng):
    idx = conf[:, c] * q + conf[:, t]
    u = rng.random(len(conf))
    new = (u[:, None] >= cdf[:, idx].T).sum(axis=1)
    new = np.minimum(new, q * q - 1)
    conf[:, c] = new // q
    conf[:, t] = new % q


def sample_trajectories(spec, layers, n, rng, conf=None):
    """Evolve ``n`` configurations (uniform by default) through ``layers`` layers."""
    q = spec.q
    cdf = np.cumsum(check_samplable(spec.gate), axis=0)
    if conf is None:
        conf = rng.integers(0, q, size=(n, spec.N))
    conf = np.array(conf, dtype=np.int64)
    history = [conf.copy()]
    for k in range(1, layers + 1):
        for c, t in layer_pairs(spec.N, layer_parity(k), spec.periodic):
            _step_pair(conf, cdf, q, c, t, rng)
        history.append(conf.copy())
    return history


def _chunk_sums(spec, d_src, d_obs, x_src, x_obs, layers, seed, chunk, n):
    rng = _stream(seed, chunk)
    q = spec.q
    cdf = np.cumsum(check_samplable(spec.gate), axis=0)
    conf = rng.integers(0, q, size=(n, spec.N))
    w = d_src[conf[:, x_src]]
    for k in range(1, layers + 1):
        for c, t in layer_pairs(spec.N, layer_parity(k), spec.periodic):
            _step_pair(conf, cdf, q, c, t, rng)
    v = w * d_obs[conf[:, x_obs]]
    return float(v.sum()), float((v * v).sum())


def sample_two_point(spec, d, x, layers, n_samples, seed=0, origin=0, d_obs=None, threads=1):
    """Estimate ``E[d(s_origin(0)) d(s_{origin+x}(t))]`` over uniform initial states.

    Returns ``(estimate, std_error)``. Samples are drawn in fixed chunks, each
    from its own Philox stream keyed by ``(seed, chunk index)``, so the result
    does not depend on ``threads``.
    """
    if n_samples < 2:
        raise InvalidParameters("need at least two samples")
    if layers < 0:
        raise InvalidParameters("layers must be >= 0")
    check_samplable(spec.gate)
    src = as_observable(d, spec.q).d
    obs = src if d_obs is None else as_observable(d_obs, spec.q).d
    x_src = origin % spec.N if spec.periodic else origin
    x_obs = (origin + x) % spec.N if spec.periodic else origin + x
    for site in (x_src, x_obs):
        if not 0 <= site < spec.N:
            raise InvalidParameters(f"site {site} outside open chain of {spec.N} sites")
    sizes = [min(CHUNK, n_samples - k) for k in range(0, n_samples, CHUNK)]
    jobs = [(spec, src, obs, x_src, x_obs, layers, seed, i, n) for i, n in enumerate(sizes)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: _chunk_sums(*a), jobs))
    else:
        parts = [_chunk_sums(*a) for a in jobs]
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / n_samples
    var = max(s2 / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return mean, math.sqrt(var / n_samples)


def layer_transition_matrix(spec, parity):
    """Exact one-layer kernel ``T[s', s]`` assembled from the sampler's pair rule."""
    q, n = spec.q, spec.N
    probs = check_samplable(spec.gate)
    dim = q ** n
    confs = np.array(np.unravel_index(np.arange(dim), (q,) * n)).T
    dist = np.zeros((dim, dim))
    for s, conf in enumerate(confs):
        out = {tuple(conf): 1.0}
        for c, t in layer_pairs(n, parity, spec.periodic):
            nxt = {}
            for cfg, w in out.items():
                col = probs[:, cfg[c] * q + cfg[t]]
                for new in np.flatnonzero(col):
                    g = list(cfg)
                    g[c], g[t] = divmod(int(new), q)
                    key = tuple(g)
                    nxt[key] = nxt.get(key, 0.0) + w * col[new]
            out = nxt
        for cfg, w in out.items():
            dist[np.ravel_multi_index(cfg, (q,) * n), s] += w
    return dist


def transition_self_test(spec):
    """Max deviation between the sampler's kernel and ``apply_layer`` on delta states."""
    worst = 0.0
    eye = np.eye(spec.dim)
    for parity in ("odd", "even"):
        kernel = layer_transition_matrix(spec, parity)
        exact = np.column_stack([apply_layer(eye[:, s], spec, parity) for s in range(spec.dim)])
        worst = max(worst, float(np.abs(kernel - exact).max()))
    return worst

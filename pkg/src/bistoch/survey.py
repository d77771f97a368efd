"""Exhaustive survey of controlled permutation gates."""

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from bistoch.circuit import CircuitSpec
from bistoch.correlators import autocorrelation
from bistoch.decay import CLASSES, CONSTANT, EXPONENTIAL, IDENTICALLY_ZERO, OTHER, fit_decay
from bistoch.gates import check_bcs, check_cs, make_gate, traceless_basis
from bistoch.schmidt import operator_schmidt

# the least decaying behaviour decides a gate's overall class
SEVERITY = {IDENTICALLY_ZERO: 0, EXPONENTIAL: 1, OTHER: 2, CONSTANT: 3}


def permutations_of(q):
    return list(itertools.permutations(range(q)))


def enumerate_controlled_permutations(q):
    """All ``(q!)^q`` controlled permutation gates, ordered by gate id.

    Returns ``(gate_id, gate)`` pairs; ``gate_id[i]`` indexes
    ``itertools.permutations(range(q))`` for control value ``i``.
    """
    perms = permutations_of(q)
    out = []
    for gid in itertools.product(range(len(perms)), repeat=q):
        gate = make_gate("controlled_permutation", q, perms=[perms[k] for k in gid])
        out.append((gid, gate))
    return out


@dataclass(frozen=True)
class SurveyRecord:
    gate_id: tuple
    perms: tuple
    origin_parity: str
    classification: str
    rate: float
    plateau: float
    r: int
    cs: bool
    bcs: bool
    exact: bool

    def row(self):
        return [
            "-".join(map(str, self.gate_id)),
            "|".join("".join(map(str, p)) for p in self.perms),
            self.classification,
            repr(float(self.rate)),
            repr(float(self.plateau)),
            self.r,
            self.origin_parity,
        ]


def correlation_matrix_series(spec, periods, origin, basis=None):
    """``A_kl(t)`` over pairs of traceless basis observables, sampled per period."""
    basis = traceless_basis(spec.q) if basis is None else basis
    k = len(basis)
    out = np.empty((periods + 1, k, k))
    exact = None
    for a, da in enumerate(basis):
        for b, db in enumerate(basis):
            ser, ex = autocorrelation(spec, da, 2 * periods, origin=origin, return_exact=True, d_obs=db)
            out[:, a, b] = ser[::2]
            exact = ex[::2] if exact is None else exact & ex[::2]
    return out, exact


def classify_series(series, **fit_params):
    return fit_decay(series, **fit_params)


def survey_gate(gid, gate, N=10, periods=8, origins=None, boundary="open", **fit_params):
    """Records for one gate, one per origin.

    The autocorrelation is summarized by the Frobenius norm of the matrix of
    cross-correlations between traceless basis observables, which does not
    depend on how the local states are labeled.
    """
    q = gate.q
    origins = (N - 1, N - 2) if origins is None else origins
    spec = CircuitSpec(q, N, gate, boundary)
    r = operator_schmidt(gate).rank
    perms = tuple(tuple(int(v) for v in np.argmax(b, axis=0)) for b in gate.blocks)
    cs, bcs = check_cs(gate), check_bcs(gate)
    records = []
    for origin in origins:
        mats, exact = correlation_matrix_series(spec, periods, origin)
        norms = np.sqrt((mats ** 2).sum(axis=(1, 2)))
        fit = classify_series(norms, **fit_params)
        records.append(SurveyRecord(
            tuple(gid), perms, "odd" if origin % 2 else "even", fit.classification,
            fit.rate, fit.plateau, r, cs, bcs, bool(exact.all()),
        ))
    return records


def gate_class(records):
    return max((rec.classification for rec in records), key=SEVERITY.__getitem__)


@dataclass
class Atlas:
    records: list
    q: int
    N: int
    periods: int

    def by_gate(self):
        groups = {}
        for rec in self.records:
            groups.setdefault(rec.gate_id, []).append(rec)
        return groups

    def gate_classes(self):
        return {gid: gate_class(recs) for gid, recs in self.by_gate().items()}

    def summary(self):
        per_gate = self.gate_classes()
        return {
            "q": self.q,
            "N": self.N,
            "T": self.periods,
            "gates": len(per_gate),
            "records": len(self.records),
            "gate_counts": {c: sum(v == c for v in per_gate.values()) for c in CLASSES},
            "record_counts": {c: sum(r.classification == c for r in self.records) for c in CLASSES},
            "ranks": sorted({r.r for r in self.records}),
        }

    def to_csv(self, fh=None):
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["gate_id", "perms", "class", "rate", "plateau", "r", "origin_parity"])
        for rec in self.records:
            w.writerow(rec.row())
        return out.getvalue() if fh is None else None


def classify_all(q, N=10, periods=8, origins=None, threads=1, gates=None, **fit_params):
    """Run :func:`survey_gate` over every controlled permutation gate."""
    gates = enumerate_controlled_permutations(q) if gates is None else gates

    def job(item):
        return survey_gate(item[0], item[1], N, periods, origins, **fit_params)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, gates))
    else:
        parts = [job(g) for g in gates]
    return Atlas([rec for part in parts for rec in part], q, N, periods)


def relabel(gate, perm):
    """Conjugate every block by a common permutation and permute the controls."""
    from bistoch.gates import ControlledGate, permutation_matrix

    p = permutation_matrix(perm)
    blocks = [None] * gate.q
    for i, b in enumerate(gate.blocks):
        blocks[perm[i]] = p @ b @ p.T
    return ControlledGate(blocks, name=f"relabel({gate.name})")


def n_gates(q):
    return math.factorial(q) ** q

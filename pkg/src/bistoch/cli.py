"""Command-line entry point: ``bistoch <subcommand> [options]``."""

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from bistoch.exceptions import BistochError

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj):
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def csv_text(header, rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return out.getvalue()


def parse_range(text):
    """``a..b`` (inclusive) or a comma list of integers."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        a, b = int(a), int(b)
        if b < a:
            raise UsageError(f"empty range {text!r}")
        return list(range(a, b + 1))
    return [int(v) for v in text.split(",") if v]


def parse_vector(text):
    return np.array([float(v) for v in text.split(",")])


def _threads(args):
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("BISTOCH_THREADS")
    return max(1, int(env)) if env else 1


def _gate(args):
    from bistoch.gates import load_gate, make_gate

    if getattr(args, "gate", None):
        return load_gate(args.gate)
    family = args.family or "averaged_haar"
    kwargs = {}
    if args.p is not None:
        kwargs["p"] = args.p
    if args.s is not None:
        kwargs["s"] = args.s
    if args.perms:
        kwargs["perms"] = [tuple(int(c) for c in part) for part in args.perms.split(",")]
    return make_gate(family, args.q, **kwargs)


def _observable(args, q):
    from bistoch.gates import traceless_basis

    if getattr(args, "d", None):
        return parse_vector(args.d)
    return traceless_basis(q)[0].d


def _spec(args, gate):
    from bistoch.circuit import CircuitSpec

    return CircuitSpec(gate.q, args.N, gate, args.boundary)


# subcommands -------------------------------------------------------------------

def cmd_check(args):
    from bistoch.gates import check_conditions

    gate = _gate(args)
    rep = check_conditions(gate).to_json_dict()
    rep["probabilistic"] = gate.probabilistic
    rep["q"] = gate.q
    if gate.q == 2:
        from bistoch.haar import check_hadamard_relation

        rep["hadamard"] = check_hadamard_relation(gate)
    if args.format == "csv":
        return csv_text(["cs", "bcs", "probabilistic"], [[rep["cs"], rep["bcs"], rep["probabilistic"]]])
    return dumps(rep)


def cmd_factorize(args):
    from bistoch.schmidt import cs_factorize, verify_bistochastic_refinement

    gate = _gate(args)
    fact = cs_factorize(gate)
    rep = fact.to_json_dict(gate, verify_bistochastic_refinement(fact, gate))
    if args.format == "csv":
        return csv_text(["r", "residual", "bistochastic"], [[rep["r"], rep["residual"], rep["bistochastic"]]])
    return dumps(rep)


def cmd_correlate(args):
    from bistoch.correlators import correlation_grid

    gate = _gate(args)
    spec = _spec(args, gate)
    d = _observable(args, gate.q)
    origin = args.origin if args.origin is not None else (0 if spec.periodic else spec.N // 2)
    xs = parse_range(args.x) if args.x else list(range(-(spec.N // 2) + 1, spec.N // 2))
    if not spec.periodic:
        xs = [x for x in xs if 0 <= origin + x < spec.N]
    grid = correlation_grid(spec, d, d, xs, range(2 * args.t + 1), origin)
    if args.format == "json":
        return dumps({"meta": grid.metadata, "x": grid.xs, "t": grid.ts, "value": grid.values,
                      "exact_flag": grid.exact})
    return grid.to_csv()


def cmd_autocorr(args):
    from bistoch.correlators import autocorrelation
    from bistoch.decay import fit_decay

    gate = _gate(args)
    spec = _spec(args, gate)
    d = _observable(args, gate.q)
    series, exact = autocorrelation(spec, d, 2 * args.t, origin=args.origin, return_exact=True)
    fit = fit_decay(series[::2])
    if args.fit_output:
        with open(args.fit_output, "w") as fh:
            fh.write(dumps(fit.to_json_dict()))
    if args.format == "json":
        return dumps({"t": list(range(len(series))), "value": series, "exact_flag": exact,
                      "fit": fit.to_json_dict()})
    return csv_text(["t", "value", "exact_flag"],
                    [[t, float(v), int(e)] for t, (v, e) in enumerate(zip(series, exact))])


def cmd_multipoint(args):
    from bistoch.correlators import MultiPointQuery, multi_point

    gate = _gate(args)
    spec = _spec(args, gate)
    points, obs = [], []
    for item in args.insert:
        parts = item.split(":")
        if len(parts) != 3:
            raise UsageError(f"--insert expects X:T:d0,d1,..., got {item!r}")
        points.append((int(parts[0]), int(parts[1])))
        obs.append(parse_vector(parts[2]))
    query = MultiPointQuery(tuple(points), tuple(obs))
    value = multi_point(spec, query)
    if args.format == "csv":
        return csv_text(["value", "unique_maximum"], [[value, query.unique_maximum]])
    return dumps({"value": value, "unique_maximum": query.unique_maximum, "points": points})


def cmd_haar_reduce(args):
    from bistoch.gates import make_gate
    from bistoch.haar import haar_average_folded, project_diagonal

    res = haar_average_folded(args.samples, seed=args.seed)
    projected = project_diagonal(res.analytic)
    equal = bool(np.array_equal(projected, make_gate("averaged_haar").matrix))
    rep = {
        "samples": args.samples,
        "seed": args.seed,
        "distance": res.distance,
        "tolerance": 5.0 / math.sqrt(args.samples),
        "analytic": res.analytic.real,
        "estimate_real": res.estimate.real,
        "estimate_imag_max": float(np.abs(res.estimate.imag).max()),
        "projected": projected,
        "projected_equals_averaged_haar": equal,
    }
    if args.format == "csv":
        return csv_text(["samples", "distance", "projected_equals_averaged_haar"],
                        [[args.samples, res.distance, equal]])
    return dumps(rep)


def cmd_tilted_east(args):
    from bistoch.haar import tilted_east_average

    D = None
    if args.D:
        D = np.exp(1j * parse_vector(args.D))
    res = tilted_east_average(args.beta, args.J, D, method=args.method, order=args.order,
                              samples=args.samples, seed=args.seed)
    rep = res.to_json_dict()
    u0, u1 = res.as_tilted_east_blocks()
    rep["blocks"] = [u0, u1]
    if args.format == "csv":
        return csv_text(["p", "exp_minus_s", "residual"], [[res.p, res.tilt, res.residual]])
    return dumps(rep)


def cmd_mc(args):
    from bistoch.circuit import absorption_mode
    from bistoch.correlators import two_point
    from bistoch.trajectory import sample_two_point

    gate = _gate(args)
    spec = _spec(args, gate)
    d = _observable(args, gate.q)
    est, err = sample_two_point(spec, d, args.x, 2 * args.t, args.samples, seed=args.seed,
                                origin=args.origin, threads=_threads(args))
    exact = None
    if spec.dim <= 2 ** 22 or absorption_mode(gate) is not None:
        exact = two_point(spec, d, d, args.x, 2 * args.t, origin=args.origin)
    if args.format == "json":
        return dumps({"estimate": est, "std_error": err, "exact": exact, "samples": args.samples})
    return csv_text(["x", "t", "estimate", "std_error", "exact"], [[args.x, args.t, est, err, exact]])


def cmd_survey(args):
    from bistoch.survey import classify_all

    atlas = classify_all(args.q, N=args.N, periods=args.T, threads=_threads(args))
    summary = atlas.summary()
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(dumps(summary))
    if args.format == "json":
        return dumps(summary)
    return atlas.to_csv()


def cmd_verify(args):
    from bistoch.correlators import verify_theorems

    gate = _gate(args)
    rep = verify_theorems(gate, sizes=tuple(args.sizes), periods=args.t, n_multi=args.multi,
                          seed=args.seed, require_conditions=not args.force)
    text = dumps(rep) if args.format == "json" else csv_text(
        ["claim", "checked", "max_violation"], [[k, rep["counts"][k], v] for k, v in rep["violations"].items()])
    return text, (EXIT_OK if rep["passed"] else EXIT_VERIFY)


# parser --------------------------------------------------------------------------

def _add_gate_args(p):
    g = p.add_argument_group("gate")
    g.add_argument("--family", help="named gate family (identity, cnot, averaged_haar, tilted_east, "
                                    "controlled_permutation)")
    g.add_argument("--gate", metavar="FILE", help="gate JSON file ({q, blocks} or {q, matrix})")
    g.add_argument("--q", type=int, default=2, help="local dimension for named families")
    g.add_argument("--p", type=float, help="tilted_east flip probability")
    g.add_argument("--s", type=float, help="tilted_east tilting")
    g.add_argument("--perms", help="controlled_permutation images, e.g. 012,120,201")


def _add_chain_args(p, N=12, boundary="periodic", t=5):
    p.add_argument("--N", type=int, default=N, help="number of sites (even)")
    p.add_argument("--boundary", choices=("periodic", "open"), default=boundary)
    p.add_argument("--t", type=int, default=t, help="depth in full periods")
    p.add_argument("--d", help="observable coefficients, e.g. 1,-1 (default: first traceless basis vector)")


def _add_common(p, default_format="json"):
    p.add_argument("--format", choices=("json", "csv"), default=default_format)
    p.add_argument("--output", metavar="FILE", help="write output here instead of stdout")
    p.add_argument("--threads", type=int, help="worker cap (falls back to BISTOCH_THREADS)")


def build_parser():
    parser = _Parser(prog="bistoch", description="Controlled (bi)stochastic brickwork circuits.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("check", help="condition report for a gate")
    _add_gate_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("factorize", help="controlled-stochastic factorization")
    _add_gate_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("correlate", help="two-point grid C(x, t)")
    _add_gate_args(p)
    _add_chain_args(p, boundary="open")
    p.add_argument("--x", help="displacements a..b or comma list")
    p.add_argument("--origin", type=int, help="source site (default: 0 on a ring, N/2 on an open chain)")
    _add_common(p, "csv")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("autocorr", help="autocorrelation series C(0, t) with decay fit")
    _add_gate_args(p)
    _add_chain_args(p, N=10, boundary="open", t=8)
    p.add_argument("--origin", type=int, help="source site (default: right edge of an open chain)")
    p.add_argument("--fit-output", metavar="FILE", help="also write the decay fit as JSON")
    _add_common(p, "csv")
    p.set_defaults(func=cmd_autocorr)

    p = sub.add_parser("multipoint", help="multi-point correlation")
    _add_gate_args(p)
    _add_chain_args(p, N=10, boundary="open")
    p.add_argument("--insert", action="append", required=True, metavar="X:T:d",
                   help="insertion at site X after T layers with coefficients d (repeatable)")
    _add_common(p)
    p.set_defaults(func=cmd_multipoint)

    p = sub.add_parser("haar-reduce", help="Haar-averaged folded gate and its projection")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_haar_reduce)

    p = sub.add_parser("tilted-east", help="U(1)-averaged tilted gate vs closed form")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--J", type=float, required=True)
    p.add_argument("--D", help="four phases of the diagonal unitary D (radians)")
    p.add_argument("--method", choices=("quadrature", "mc"), default="quadrature")
    p.add_argument("--order", type=int, default=16, help="trapezoid points per phase")
    p.add_argument("--samples", type=int, default=100000, help="samples for --method mc")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_tilted_east)

    p = sub.add_parser("mc", help="trajectory Monte-Carlo estimate of C(x, t)")
    _add_gate_args(p)
    _add_chain_args(p, N=12, boundary="periodic", t=1)
    p.add_argument("--x", type=int, default=0)
    p.add_argument("--origin", type=int, default=0)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p, "csv")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("survey", help="classify all controlled permutation gates")
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--N", type=int, default=10)
    p.add_argument("--T", type=int, default=8, help="depth in full periods")
    p.add_argument("--summary", metavar="FILE", help="also write the summary JSON")
    _add_common(p, "csv")
    p.set_defaults(func=cmd_survey)

    p = sub.add_parser("verify", help="numerical check of the vanishing theorems")
    _add_gate_args(p)
    p.add_argument("--sizes", type=int, nargs="+", default=[12])
    p.add_argument("--t", type=int, default=5, help="depth in full periods")
    p.add_argument("--multi", type=int, default=500, help="random multi-point queries per size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="check every claim even if the conditions fail")
    _add_common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def _normalize_argv(argv):
    # let "--x -5..5" through: argparse would read "-5..5" as an option
    out = []
    it = iter(argv)
    for a in it:
        if a in ("--x", "--d", "--D"):
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_normalize_argv(argv))
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("missing subcommand")
        result = args.func(args)
    except UsageError as exc:
        print(f"bistoch: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BistochError, ValueError, OSError) as exc:
        print(f"bistoch: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text, code = result if isinstance(result, tuple) else (result, EXIT_OK)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    linecap bounds   --erasure EPS --M M --N N --L 1..10
    linecap figure   era1|era3|era2 [--out FILE]
    linecap simulate --scheme repetition|rlnc|plan ...
    linecap reduce   --links "bsc(0.1),identity(2)" [--out plan.json]

Exit codes: 0 success, 1 domain or runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from linecap import bats, bounds
from linecap.channels import parse_links
from linecap.errors import LinecapError
from linecap.reduction import LineReductionPlan, LinkNotReducibleError, reduce_line
from linecap import simulator

FIGURE_DEFAULTS = {
    "era1": (2, 3, 4),
    "era3": (2, 4, 8, 16, 32),
    "era2": (2, 4, 8, 16),
}


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def write_csv(fh, header, rows):
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(fmt(v) for v in row) + "\n")


def parse_range(text: str):
    """``"5"`` or ``"1..10"`` (inclusive)."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or A..B, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"empty or non-positive range {text!r}")
    return range(lo, hi + 1)


def parse_int_list(text: str):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("list must contain positive integers")
    return vals


# --------------------------------------------------------------------------
# bounds


def bounds_rows(eps, M, N, Ls, q=256, T=1024, alphabet_size=None):
    if alphabet_size is not None:
        la = math.log2(alphabet_size)
        lo = math.log2(alphabet_size + 1)
        params = bounds.BatchParams(M, N, la, lo, lo)
    else:
        params = bounds.BatchParams.for_packets(M, N, q, T)
    rows = []
    for L in Ls:
        rows.append((
            L,
            bounds.pec_ub(params, L, eps),
            bounds.canonical_ub(params, L, eps),
            bounds.general_ub(params, L, eps),
            bounds.rep_rate(N, L, eps, params.log_alphabet),
        ))
    return ("L", "pec_ub", "canonical_ub", "general_ub", "rep_rate"), rows


def cmd_bounds(args, out):
    header, rows = bounds_rows(args.erasure, args.M, args.N, args.L, args.q, args.T, args.alphabet_size)
    write_csv(out, header, rows)


# --------------------------------------------------------------------------
# figures


def figure_rows(fig, eps=0.2, q=256, T=1024, L_max=1000, Ms=None):
    Ms = tuple(Ms) if Ms else FIGURE_DEFAULTS[fig]
    Ls = np.arange(1, L_max + 1)
    cols = {}
    if fig == "era1":
        for M in Ms:
            params = bounds.BatchParams.for_packets(M, M, q, T)
            cols[f"bats{M}"] = bats.bats_rate_curve(M, M, L_max, eps, q, T)[1:]
            cols[f"ub{M}"] = [bounds.pec_ub(params, int(L), eps) for L in Ls]
        order = [f"bats{M}" for M in Ms] + [f"ub{M}" for M in Ms]
    elif fig == "era3":
        for M in Ms:
            cols[f"nstar{M}"] = bats.optimal_n_curve(M, L_max, eps, q, T)[0]
        order = [f"nstar{M}" for M in Ms]
    elif fig == "era2":
        for M in Ms:
            n_star, rate = bats.optimal_n_curve(M, L_max, eps, q, T)
            cols[f"nstar{M}"] = n_star
            cols[f"bats{M}"] = rate
            cols[f"ub{M}"] = [
                bounds.pec_ub(bounds.BatchParams.for_packets(M, int(n), q, T), int(L), eps)
                for L, n in zip(Ls, n_star)
            ]
        order = [f"nstar{M}" for M in Ms] + [f"bats{M}" for M in Ms] + [f"ub{M}" for M in Ms]
    else:
        raise ValueError(fig)
    header = ("L",) + tuple(order)
    rows = [(int(L),) + tuple(cols[c][i] for c in order) for i, L in enumerate(Ls)]
    return header, rows


def cmd_figure(args, out):
    header, rows = figure_rows(args.figure, args.eps, args.q, args.T, args.L_max, args.M)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(fh, header, rows)
        out.write(f"wrote {len(rows)} rows to {args.out}\n")
    else:
        write_csv(out, header, rows)


# --------------------------------------------------------------------------
# simulate / reduce


def _load_plan(path):
    with open(path) as fh:
        data = json.load(fh)
    return simulator.MatrixPlan.from_dict(data)


def cmd_simulate(args, out):
    if args.scheme == "rlnc":
        rep = simulator.simulate_random_linear(
            args.eps, args.M, args.N, args.L, args.q, args.trials, args.seed, T=args.T, threads=args.threads
        )
    else:
        links = parse_links(args.links)
        if args.scheme == "repetition":
            rep = simulator.simulate_repetition(
                links, args.N, args.trials, args.seed,
                simulator.Repetition(args.alphabet_size), threads=args.threads,
            )
        else:
            plan = _load_plan(args.plan)
            rep = simulator.simulate_plan(plan, links, args.N, args.trials, args.seed, threads=args.threads)
    out.write(rep.to_text())


def cmd_reduce(args, out):
    links = parse_links(args.links)
    plan = reduce_line(links)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(plan.to_json())
    out.write(f"links={len(links)}\n")
    out.write(f"L0={plan.L0}\n")
    out.write(f"rho={fmt(plan.rho)}\n")
    out.write(f"kinds={','.join(plan.kinds)}\n")
    out.write(f"residual={fmt(plan.residual)}\n")


# --------------------------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _probability(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="linecap", description="Batched-code capacity tools for line networks.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="upper bounds and repetition rate per L")
    b.add_argument("--erasure", type=_probability, required=True, help="erasure probability")
    b.add_argument("--M", type=_positive_int, required=True)
    b.add_argument("--N", type=_positive_int, required=True)
    b.add_argument("--L", type=parse_range, required=True, help="L or A..B")
    b.add_argument("--q", type=int, default=256)
    b.add_argument("--T", type=_positive_int, default=1024)
    b.add_argument("--alphabet-size", type=int, default=None,
                   help="plain symbol alphabet instead of F_q^T packets")

    f = sub.add_parser("figure", help="CSV data for the erasure-network figures")
    f.add_argument("figure", choices=sorted(FIGURE_DEFAULTS))
    f.add_argument("--out", default=None)
    f.add_argument("--eps", type=_probability, default=0.2)
    f.add_argument("--q", type=int, default=256)
    f.add_argument("--T", type=_positive_int, default=1024)
    f.add_argument("--L-max", type=_positive_int, default=1000)
    f.add_argument("--M", type=parse_int_list, default=None, help="comma-separated batch sizes")

    s = sub.add_parser("simulate", help="Monte Carlo run of a recoding scheme")
    s.add_argument("--scheme", choices=("repetition", "rlnc", "plan"), required=True)
    s.add_argument("--links", default=None, help='e.g. "erasure(2,0.2)x10"')
    s.add_argument("--N", type=_positive_int, default=1)
    s.add_argument("--trials", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--M", type=_positive_int, default=1)
    s.add_argument("--q", type=int, default=2)
    s.add_argument("--T", type=_positive_int, default=1024)
    s.add_argument("--eps", type=_probability, default=0.0)
    s.add_argument("--L", type=int, default=1)
    s.add_argument("--plan", default=None, help="JSON plan file (reduce --out output)")
    s.add_argument("--alphabet-size", type=int, default=None)
    s.add_argument("--threads", type=_positive_int, default=None)

    r = sub.add_parser("reduce", help="reduction plan turning a line into U_2 cascades")
    r.add_argument("--links", required=True)
    r.add_argument("--out", default=None)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate":
        if args.scheme != "rlnc" and not (args.links and args.links.strip()):
            parser.error("--links is required for this scheme")
        if args.scheme == "plan" and not args.plan:
            parser.error("--plan is required for --scheme plan")
        if args.scheme == "rlnc" and args.L < 0:
            parser.error("--L must be >= 0")
    if args.command == "reduce" and not args.links.strip():
        parser.error("--links must name at least one channel")
    handlers = {"bounds": cmd_bounds, "figure": cmd_figure, "simulate": cmd_simulate, "reduce": cmd_reduce}
    try:
        handlers[args.command](args, out)
    except LinkNotReducibleError as exc:
        print(f"linecap: link {exc.index} is not reducible: {exc}", file=sys.stderr)
        return 1
    except (LinecapError, OSError, json.JSONDecodeError) as exc:
        print(f"linecap: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

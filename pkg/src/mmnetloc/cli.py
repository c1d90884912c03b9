"""Command line: ``mmnetloc generate | solve | bench``.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .baseline_bb import BBConfig, bb_solve
from .graph import (NetworkFileError, corner_anchors, generate_geometric_network,
                    generate_measurements, load_network, save_network)
from .mm import SolverConfig, perturbed_truth, random_uniform, solve
from .node_sim import simulate

log = logging.getLogger("mmnetloc")


class UsageError(ValueError):
    pass


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v
    return parse


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative: {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmnetloc",
        description="Distributed MM sensor network localization and its benchmark.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("generate", help="draw a random geometric network with measurements",
                       description="Draw a connected random geometric network in the unit "
                                   "box, generate noisy ranges and write a network file.")
    g.add_argument("--n", type=_positive(int), required=True, help="number of sensors")
    g.add_argument("--p", type=int, choices=(2, 3), default=2, help="spatial dimension (default 2)")
    knob = g.add_mutually_exclusive_group()
    knob.add_argument("--radius", type=_positive(float), help="sensor communication radius")
    knob.add_argument("--target-degree", type=_positive(float),
                      help="calibrate the radius to this mean degree (default 6)")
    g.add_argument("--anchors", choices=("corners", "none"), default="corners",
                   help="anchor placement: unit-box corners or no anchors (default corners)")
    g.add_argument("--anchor-range", type=_positive(float),
                   help="sensor-anchor ranging distance (default: the sensor radius)")
    g.add_argument("--sigma", type=_nonneg_float, default=0.01,
                   help="range noise standard deviation (default 0.01)")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--out", default="network.json", help="output file (default network.json)")

    s = sub.add_parser("solve", help="localize one network instance",
                       description="Run MM, its message-passing simulation, or the BB "
                                   "baseline on a network file and write estimate and trace.")
    s.add_argument("--network", required=True, help="network file from 'generate'")
    s.add_argument("--method", choices=("mm", "mm-sim", "bb"), default="mm",
                   help="mm: centralized MM; mm-sim: per-node message passing; bb: BB baseline")
    s.add_argument("--init", default="perturbed-truth:0.1",
                   help="random | truth | perturbed-truth:<std> | file:<path> "
                        "(default perturbed-truth:0.1)")
    s.add_argument("--sigma", type=_nonneg_float,
                   help="regenerate measurements with this noise std instead of the file's")
    s.add_argument("--seed", type=int, default=0,
                   help="seed for regenerated measurements and the initializer (default 0)")
    s.add_argument("--out", default="solve_out", help="output directory (default solve_out)")
    s.add_argument("--max-iters", type=_positive(int), help="iteration cap (default 2000 MM, 100 BB)")
    s.add_argument("--tol", type=_nonneg_float, default=1e-9,
                   help="MM relative cost-decrease stopping tolerance (default 1e-9)")
    s.add_argument("--lipschitz", type=_positive(float),
                   help="override the MM Lipschitz constant (must not be below the bound)")
    s.add_argument("--T", type=_positive(int), default=20, help="BB consensus rounds (default 20)")
    s.add_argument("--bb-variant", choices=("bb1", "bb2"), default="bb1",
                   help="BB step formula (default bb1)")

    b = sub.add_parser("bench", help="Monte-Carlo comparison of MM and BB",
                       description="Run the Monte-Carlo experiment and write summary.csv, "
                                   "curve files and a text report.")
    b.add_argument("--spec", help="experiment spec JSON file; flags below override it")
    b.add_argument("--trials", type=_positive(int), help="Monte-Carlo trials per sigma (default 100)")
    b.add_argument("--sigma", type=_nonneg_float, action="append",
                   help="noise std; repeat for several (default 0.01 0.05 0.1)")
    b.add_argument("--seed", type=int, help="master seed (default 2015)")
    b.add_argument("--out", help="output directory (default bench_out)")
    b.add_argument("--init", choices=bench.INITIALIZERS, help="initializer (default perturbed-truth)")
    b.add_argument("--init-std", type=_nonneg_float, help="perturbed-truth std (default 0.1)")
    b.add_argument("--n", type=_positive(int), help="number of sensors (default 50)")
    b.add_argument("--anchor-range", type=_positive(float),
                   help="sensor-anchor ranging distance (default 2.0: all corners)")
    b.add_argument("--mm-max-iters", type=_positive(int), help="MM iteration cap (default 2000)")
    b.add_argument("--bb-max-iters", type=_positive(int), help="BB iteration cap (default 100)")
    b.add_argument("--T", type=_positive(int), help="BB consensus rounds (default 20)")
    b.add_argument("--workers", type=_positive(int),
                   help="parallel trial processes (default $MMNETLOC_THREADS or CPU count)")
    b.add_argument("--figures", action="store_true", help="also render fig_<sigma>.png files")
    return parser


def cmd_generate(args) -> int:
    target = args.target_degree if args.radius is None else None
    if args.radius is None and target is None:
        target = 6.0
    anchors = corner_anchors(args.p) if args.anchors == "corners" else np.zeros((0, args.p))
    net = generate_geometric_network(args.n, args.p, radius=args.radius,
                                     anchor_positions=anchors, anchor_range=args.anchor_range,
                                     rng_seed=args.seed, target_degree=target)
    meas = generate_measurements(net, args.sigma, args.seed)
    save_network(args.out, net, meas)
    print(f"wrote {args.out}: n={net.n} edges={net.m} mean degree={2 * net.m / net.n:.3f} "
          f"anchor links={net.n_links}")
    return 0


def parse_init(text: str, net, rng) -> np.ndarray:
    kind, _, arg = text.partition(":")
    if kind == "random":
        return random_uniform(net, rng)
    if kind == "truth":
        if net.true_positions is None:
            raise UsageError("--init truth needs true positions in the network file")
        return np.array(net.true_positions)
    if kind == "perturbed-truth":
        try:
            std = float(arg) if arg else 0.1
        except ValueError:
            raise UsageError(f"bad std in --init {text!r}") from None
        if net.true_positions is None:
            raise UsageError("--init perturbed-truth needs true positions in the network file")
        return perturbed_truth(net, std, rng)
    if kind == "file":
        return read_estimate(arg, net)
    raise UsageError(f"unknown --init {text!r}")


def read_estimate(path, net) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read init file {path}: {exc.strerror}") from None
    try:
        body = [[float(v) for v in row[1:]] for row in rows[1:] if row]
        x = np.array(body, dtype=float)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if x.shape != (net.n, net.p):
        raise UsageError(f"{path}: expected {net.n} rows of {net.p} coordinates")
    return x


def write_estimate(path, x) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["sensor"] + [f"x{k}" for k in range(x.shape[1])])
        for i, row in enumerate(x):
            out.writerow([i] + [repr(float(v)) for v in row])


def cmd_solve(args) -> int:
    net, meas = load_network(args.network)
    if args.sigma is not None:
        meas = generate_measurements(net, args.sigma, args.seed)
    elif meas is None:
        raise UsageError(f"{args.network} holds no measurements; pass --sigma to generate them")
    rng = np.random.default_rng([args.seed, 1])
    x0 = parse_init(args.init, net, rng)

    messages = None
    if args.method == "bb":
        cfg = BBConfig(T=args.T, max_iters=args.max_iters or 100, variant=args.bb_variant)
        x_hat, trace = bb_solve(net, meas, x0, cfg)
    else:
        cfg = SolverConfig(max_iters=args.max_iters or 2000, tol_rel_cost=args.tol,
                           lipschitz_override=args.lipschitz)
        if args.method == "mm":
            x_hat, trace = solve(net, meas, x0, cfg)
        else:
            x_hat, trace, messages = simulate(net, meas, x0, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if messages is not None:
        messages.write_csv(out / "messages.csv")
    write_estimate(out / "estimate.csv", x_hat)
    trace.write_csv(out / "trace.csv")
    mpe = "" if trace.mpe[-1] is None else f" mpe={trace.mpe[-1]:.6g}"
    print(f"{args.method}: {trace.n_iters} iterations, cost/n={trace.cost_per_sensor[-1]:.6g}"
          f"{mpe}, comm={trace.comm_scalars[-1]} scalars -> {out}")
    return 0


def cmd_bench(args) -> int:
    spec = bench.ExperimentSpec.from_json(args.spec) if args.spec else bench.ExperimentSpec()
    doc = spec.to_dict()
    overrides = {
        "trials": args.trials, "seed": args.seed, "out_dir": args.out,
        "init": args.init, "init_std": args.init_std,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.sigma:
        doc["sigmas"] = args.sigma
    if args.figures:
        doc["figures"] = True
    if args.n is not None:
        doc["network"]["n"] = args.n
    if args.anchor_range is not None:
        doc["network"]["anchor_range"] = args.anchor_range
    if args.mm_max_iters is not None:
        doc["mm"]["max_iters"] = args.mm_max_iters
    if args.bb_max_iters is not None:
        doc["bb"]["max_iters"] = args.bb_max_iters
    if args.T is not None:
        doc["bb"]["T"] = args.T
    spec = bench.ExperimentSpec.from_dict(doc)
    result = bench.run_experiment(spec, workers=args.workers)
    sys.stdout.write(bench.render_report(spec, result.network, result.summary))
    print(f"wrote {len(result.files)} files to {spec.out_dir}")
    return 0


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, bench.SpecError, NetworkFileError) as exc:
        print(f"mmnetloc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"mmnetloc {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, FloatingPointError) as exc:
        print(f"mmnetloc {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Monte-Carlo accuracy/communication experiment.

One network is drawn from the master seed and kept fixed; every trial draws
fresh measurement noise and a fresh initial point, then runs both the MM
algorithm and the BB baseline from that same start.  Outputs:

``summary.csv``
    sigma, method, mpe, final_cost_per_sensor, iters, comm_scalars
``curve_<method>_<sigma>.csv``
    iter, comm_scalars, mean_cost_per_sensor, mean_mpe (trial means at
    matched iteration index; finished trials hold their final value)

The default initializer is the truth perturbed by Gaussian noise of
std 0.1, standing in for a convex-relaxation first stage.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baseline_bb import BBConfig, bb_solve
from .graph import (Network, corner_anchors, generate_geometric_network,
                    generate_measurements, save_network)
from .mm import SolverConfig, perturbed_truth, random_uniform, solve

METHODS = ("mm", "bb")
INITIALIZERS = ("perturbed-truth", "random", "truth")


class SpecError(ValueError):
    """Invalid experiment specification."""


@dataclass
class NetworkConfig:
    n: int = 50
    p: int = 2
    target_degree: float | None = 6.0
    radius: float | None = None
    anchors: str = "corners"
    # >= the unit-square diagonal: every sensor ranges to every corner anchor
    anchor_range: float | None = 2.0


@dataclass
class ExperimentSpec:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    sigmas: tuple[float, ...] = (0.01, 0.05, 0.1)
    trials: int = 100
    init: str = "perturbed-truth"
    init_std: float = 0.1
    mm: SolverConfig = field(default_factory=SolverConfig)
    bb: BBConfig = field(default_factory=lambda: BBConfig(max_iters=100))
    out_dir: str = "bench_out"
    seed: int = 2015
    figures: bool = False

    def __post_init__(self):
        self.sigmas = tuple(float(s) for s in self.sigmas)
        if self.trials < 1:
            raise SpecError("trials must be >= 1")
        if not self.sigmas:
            raise SpecError("need at least one sigma")
        if any(s < 0 for s in self.sigmas):
            raise SpecError("sigmas must be nonnegative")
        if self.init not in INITIALIZERS:
            raise SpecError(f"init must be one of {INITIALIZERS}, got {self.init!r}")
        if self.init_std < 0:
            raise SpecError("init_std must be nonnegative")
        if self.network.anchors not in ("corners", "none"):
            raise SpecError("network.anchors must be 'corners' or 'none'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigmas"] = list(self.sigmas)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentSpec:
        if not isinstance(doc, dict):
            raise SpecError("experiment spec must be a JSON object")
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        try:
            if "network" in doc:
                doc["network"] = NetworkConfig(**doc["network"])
            if "mm" in doc:
                doc["mm"] = SolverConfig(**doc["mm"])
            if "bb" in doc:
                doc["bb"] = BBConfig(**doc["bb"])
            return cls(**doc)
        except SpecError:
            raise
        except (TypeError, ValueError) as exc:
            raise SpecError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> ExperimentSpec:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        except OSError as exc:
            raise SpecError(f"{path}: {exc.strerror}") from exc
        return cls.from_dict(doc)


def mpe(estimates, truth) -> float:
    """Mean positioning error per sensor over all trials.

    ``estimates`` has shape (trials, n, p); ``truth`` has shape (n, p).
    """
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 2:
        est = est[None]
    truth = np.asarray(truth, dtype=float)
    trials, n = est.shape[:2]
    return float(np.linalg.norm(est - truth[None], axis=2).sum() / (n * trials))


def build_network(spec: ExperimentSpec) -> Network:
    cfg = spec.network
    anchors = corner_anchors(cfg.p) if cfg.anchors == "corners" else np.zeros((0, cfg.p))
    return generate_geometric_network(
        cfg.n, cfg.p, radius=cfg.radius, anchor_positions=anchors,
        anchor_range=cfg.anchor_range, rng_seed=spec.seed,
        target_degree=cfg.target_degree)


def trial_seeds(master: int, sigma_index: int, trial: int) -> tuple[int, np.random.Generator]:
    """Measurement seed and initializer stream owned by one trial."""
    ss = np.random.SeedSequence([master, sigma_index, trial])
    meas_seed = int(ss.generate_state(1, dtype=np.uint32)[0])
    return meas_seed, np.random.default_rng(ss.spawn(1)[0])


def initial_point(net: Network, init: str, std: float, rng: np.random.Generator) -> np.ndarray:
    if init == "perturbed-truth":
        return perturbed_truth(net, std, rng)
    if init == "random":
        return random_uniform(net, rng)
    return np.array(net.true_positions)


@dataclass
class TrialResult:
    x: dict[str, np.ndarray]
    cost: dict[str, np.ndarray]
    err: dict[str, np.ndarray]
    iters: dict[str, int]


def run_trial(net: Network, spec: ExperimentSpec, sigma_index: int, trial: int) -> TrialResult:
    sigma = spec.sigmas[sigma_index]
    meas_seed, rng = trial_seeds(spec.seed, sigma_index, trial)
    meas = generate_measurements(net, sigma, meas_seed)
    x0 = initial_point(net, spec.init, spec.init_std, rng)
    x_mm, tr_mm = solve(net, meas, x0, spec.mm)
    x_bb, tr_bb = bb_solve(net, meas, x0, spec.bb)
    out = TrialResult({}, {}, {}, {})
    for method, x, tr in (("mm", x_mm, tr_mm), ("bb", x_bb, tr_bb)):
        out.x[method] = x
        out.cost[method] = np.array(tr.cost_per_sensor)
        out.err[method] = np.array(tr.mpe, dtype=float)
        out.iters[method] = tr.n_iters
    return out


def _trial_job(args):
    return run_trial(*args)


def worker_count() -> int:
    env = os.environ.get("MMNETLOC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SpecError(f"MMNETLOC_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _pad(rows: list[np.ndarray]) -> np.ndarray:
    width = max(len(r) for r in rows)
    return np.array([np.concatenate([r, np.full(width - len(r), r[-1])]) for r in rows])


@dataclass
class Curve:
    iters: np.ndarray
    comm_scalars: np.ndarray
    mean_cost_per_sensor: np.ndarray
    mean_mpe: np.ndarray


@dataclass
class BenchResult:
    spec: ExperimentSpec
    network: Network
    summary: list[dict]
    curves: dict[tuple[str, float], Curve]
    files: list[Path]


def per_iteration_comm(net: Network, method: str, spec: ExperimentSpec) -> int:
    if method == "mm":
        return net.p * net.n
    return net.n * (2 * spec.bb.T + net.p)


def comm_to_reach(curve: Curve, level: float) -> int | None:
    """First cumulative scalar count at which the mean cost is <= level."""
    hit = np.flatnonzero(curve.mean_cost_per_sensor <= level)
    return int(curve.comm_scalars[hit[0]]) if len(hit) else None


def sigma_label(sigma: float) -> str:
    return repr(float(sigma))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> BenchResult:
    """Run every (sigma, trial) pair and write the result files."""
    net = build_network(spec)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(net, spec, k, t) for k in range(len(spec.sigmas)) for t in range(spec.trials)]
    workers = worker_count() if workers is None else max(1, workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_trial_job(j) for j in jobs]

    summary, curves, files = [], {}, []
    for k, sigma in enumerate(spec.sigmas):
        block = results[k * spec.trials:(k + 1) * spec.trials]
        for method in METHODS:
            xs = np.array([r.x[method] for r in block])
            cost = _pad([r.cost[method] for r in block])
            err = _pad([r.err[method] for r in block])
            iters = np.arange(cost.shape[1])
            step = per_iteration_comm(net, method, spec)
            curve = Curve(iters, iters * step, cost.mean(axis=0), err.mean(axis=0))
            curves[(method, sigma)] = curve
            mean_iters = float(np.mean([r.iters[method] for r in block]))
            summary.append({
                "sigma": sigma,
                "method": method,
                "mpe": mpe(xs, net.true_positions),
                "final_cost_per_sensor": float(np.mean([r.cost[method][-1] for r in block])),
                "iters": mean_iters,
                "comm_scalars": mean_iters * step,
            })
            path = out_dir / f"curve_{method}_{sigma_label(sigma)}.csv"
            _write_csv(path, ["iter", "comm_scalars", "mean_cost_per_sensor", "mean_mpe"],
                       [[_num(i), _num(c), _num(f), _num(e)] for i, c, f, e in
                        zip(curve.iters, curve.comm_scalars, curve.mean_cost_per_sensor,
                            curve.mean_mpe)])
            files.append(path)

    path = out_dir / "summary.csv"
    cols = ["sigma", "method", "mpe", "final_cost_per_sensor", "iters", "comm_scalars"]
    _write_csv(path, cols, [[row["method"] if c == "method" else _num(row[c]) for c in cols]
                            for row in summary])
    files.append(path)

    path = out_dir / "network.json"
    save_network(path, net)
    files.append(path)
    path = out_dir / "experiment.json"
    path.write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.append(path)
    path = out_dir / "report.txt"
    path.write_text(render_report(spec, net, summary), encoding="utf-8")
    files.append(path)

    if spec.figures:
        from .plotting import plot_sigma_panels
        for sigma in spec.sigmas:
            path = out_dir / f"fig_{sigma_label(sigma)}.png"
            plot_sigma_panels({m: curves[(m, sigma)] for m in METHODS}, sigma, path)
            files.append(path)
    return BenchResult(spec, net, summary, curves, files)


def render_report(spec: ExperimentSpec, net: Network, summary: list[dict]) -> str:
    init = spec.init if spec.init != "perturbed-truth" else \
        f"perturbed truth, std {spec.init_std} (substitute for a convex-relaxation initializer)"
    lines = [
        f"network: n={net.n} p={net.p} edges={net.m} mean degree={2 * net.m / net.n:.3f} "
        f"anchor links={net.n_links}",
        f"trials per sigma: {spec.trials}   master seed: {spec.seed}",
        f"initializer: {init}",
        f"MM: max_iters={spec.mm.max_iters} tol_rel_cost={spec.mm.tol_rel_cost}",
        f"BB: T={spec.bb.T} max_iters={spec.bb.max_iters} variant={spec.bb.variant}",
        "",
        f"{'sigma':>8} {'method':>6} {'mpe':>10} {'cost/n':>12} {'iters':>8} {'comm':>10}",
    ]
    for row in summary:
        lines.append(f"{row['sigma']:>8g} {row['method']:>6} {row['mpe']:>10.4f} "
                     f"{row['final_cost_per_sensor']:>12.4e} {row['iters']:>8.1f} "
                     f"{row['comm_scalars']:>10.0f}")
    return "\n".join(lines) + "\n"

"""Centralized reference for the majorization-minimization recursion.

One iteration is the projected gradient step

    z+ = P(z - grad f(z) / L)

on the lifted quadratic cost, with ``L = 2 * max degree + max anchors + 2``.
The step is written per sensor, in the same arithmetic order the
message-passing simulation uses, so both produce bit-identical iterates.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .cost import StateZ, as_positions, cost_original, cost_z, reduce_to_x
from .graph import Measurements, Network, degree_stats
from .projections import project_rows

STOP_WINDOW = 10


@dataclass
class SolverConfig:
    max_iters: int = 2000
    tol_rel_cost: float = 1e-9
    lipschitz_override: float | None = None
    allow_unsafe_lipschitz: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol_rel_cost < 0:
            raise ValueError("tol_rel_cost must be >= 0")
        if self.lipschitz_override is not None and not self.lipschitz_override > 0:
            raise ValueError("lipschitz_override must be positive")


@dataclass
class RunTrace:
    """Per-iteration record; entry 0 is the initial point."""

    iters: list[int] = field(default_factory=list)
    cost_per_sensor: list[float] = field(default_factory=list)
    cost_z: list[float] = field(default_factory=list)
    comm_scalars: list[int] = field(default_factory=list)
    mpe: list[float | None] = field(default_factory=list)

    def record(self, it, cost_per_sensor, cz, comm, mpe=None):
        self.iters.append(int(it))
        self.cost_per_sensor.append(float(cost_per_sensor))
        self.cost_z.append(float(cz))
        self.comm_scalars.append(int(comm))
        self.mpe.append(None if mpe is None else float(mpe))

    def __len__(self):
        return len(self.iters)

    @property
    def n_iters(self) -> int:
        return self.iters[-1] if self.iters else 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["iter", "comm_scalars", "cost_per_sensor", "cost_z", "mpe"])
            for row in zip(self.iters, self.comm_scalars, self.cost_per_sensor,
                           self.cost_z, self.mpe):
                it, comm, c, cz, e = row
                out.writerow([it, comm, repr(c), repr(cz), "" if e is None else repr(e)])


def lipschitz_bound(net: Network) -> float:
    """Gradient Lipschitz bound ``2 * max degree + max |anchors_i| + 2``."""
    dmax, amax = degree_stats(net)
    return float(2 * dmax + amax + 2)


def resolve_lipschitz(net: Network, cfg: SolverConfig) -> float:
    bound = lipschitz_bound(net)
    if cfg.lipschitz_override is None:
        return bound
    if cfg.lipschitz_override < bound and not cfg.allow_unsafe_lipschitz:
        raise ValueError(
            f"lipschitz_override {cfg.lipschitz_override} is below the bound {bound}; "
            "set allow_unsafe_lipschitz to use it anyway")
    return float(cfg.lipschitz_override)


def node_weights(net: Network, L: float) -> np.ndarray:
    """Self weight ``(L - degree_i - |anchors_i|) / L`` of each sensor."""
    return (L - net.degrees.astype(float) - net.anchor_counts.astype(float)) / L


@lru_cache(maxsize=16)
def _interleaved(net: Network):
    # contribution order per sensor = ascending edge index, matching the
    # order each simulated node walks its incident edges
    m = net.m
    dest = np.empty(2 * m, dtype=np.int64)
    other = np.empty(2 * m, dtype=np.int64)
    sign = np.empty(2 * m)
    dest[0::2], dest[1::2] = net.edges[:, 0], net.edges[:, 1]
    other[0::2], other[1::2] = net.edges[:, 1], net.edges[:, 0]
    sign[0::2], sign[1::2] = 1.0, -1.0
    edge = np.repeat(np.arange(m), 2)
    return dest, other, sign, edge


def mm_step(net: Network, meas: Measurements, z: StateZ, L: float) -> StateZ:
    """One majorization-minimization (projected gradient) step."""
    z.check(net)
    bound = lipschitz_bound(net)
    if L < bound:
        warnings.warn(f"L={L} is below the Lipschitz bound {bound}; descent not guaranteed",
                      stacklevel=2)
    x, y, w = z.x, z.y, z.w
    dest, other, sign, edge = _interleaved(net)

    nbr = np.zeros_like(x)
    np.add.at(nbr, dest, x[other] + sign[:, None] * y[edge])
    anc = np.zeros_like(x)
    np.add.at(anc, net.link_sensor, w + net.alpha)
    x_new = node_weights(net, L)[:, None] * x + nbr / L + anc / L

    keep = (L - 1.0) / L
    y_new = project_rows(keep * y + (x[net.edges[:, 0]] - x[net.edges[:, 1]]) / L, meas.d)
    w_new = project_rows(keep * w + (x[net.link_sensor] - net.alpha) / L, meas.r)
    return StateZ(x_new, y_new, w_new)


def should_stop(costs: list[float], tol: float, window: int = STOP_WINDOW,
                floor: float = 0.0) -> bool:
    """True once the relative decrease stayed below ``tol`` for ``window`` steps.

    Costs at or below ``floor`` count as converged: there the sequence is
    rounding noise and its relative changes mean nothing.
    """
    if len(costs) <= window:
        return False
    for prev, cur in zip(costs[-window - 1:-1], costs[-window:]):
        rel = (prev - cur) / prev if prev > floor else 0.0
        if rel >= tol:
            return False
    return True


def cost_floor(meas: Measurements) -> float:
    """Rounding level of the cost, about ``eps**2`` times the squared ranges."""
    scale = float(np.sum(meas.d ** 2) + np.sum(meas.r ** 2))
    return 1e3 * np.finfo(float).eps ** 2 * max(scale, 1.0)


def mean_error(net: Network, x: np.ndarray) -> float | None:
    if net.true_positions is None:
        return None
    return float(np.mean(np.linalg.norm(x - net.true_positions, axis=1)))


def trace_point(net, meas, z: StateZ):
    return cost_original(net, meas, z.x) / net.n, cost_z(net, meas, z), mean_error(net, z.x)


def solve(net: Network, meas: Measurements, x0, cfg: SolverConfig | None = None):
    """Run the MM recursion from ``x0``.

    Returns
    -------
    x_hat : ndarray, shape (n, p)
    trace : RunTrace
        Communication advances by ``p * n`` scalars per iteration.
    """
    cfg = cfg or SolverConfig()
    meas.check(net)
    L = resolve_lipschitz(net, cfg)
    z = reduce_to_x(net, meas, as_positions(net, x0))
    per_iter = net.p * net.n
    floor = cost_floor(meas)

    trace = RunTrace()
    c, cz, e = trace_point(net, meas, z)
    trace.record(0, c, cz, 0, e)
    for t in range(1, cfg.max_iters + 1):
        z = mm_step(net, meas, z, L)
        c, cz, e = trace_point(net, meas, z)
        trace.record(t, c, cz, t * per_iter, e)
        if should_stop(trace.cost_z, cfg.tol_rel_cost, floor=floor):
            break
    return z.x, trace


def perturbed_truth(net: Network, std: float, rng: np.random.Generator) -> np.ndarray:
    if net.true_positions is None:
        raise ValueError("perturbed-truth initialization needs true positions")
    return net.true_positions + rng.normal(0.0, std, size=(net.n, net.p))


def random_uniform(net: Network, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(net.n, net.p))

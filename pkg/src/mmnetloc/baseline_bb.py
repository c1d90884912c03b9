"""Gradient descent on the range cost with Barzilai-Borwein steps.

This is the comparison method: each iteration every node broadcasts its
position (``p`` scalars), takes a local gradient step, and the two inner
products of the BB step are estimated by ``T`` rounds of Metropolis-weight
average consensus (2 scalars per node per round).  Per iteration that costs
``n * (2T + p)`` scalars.  There is no line search, so the cost is not
monotone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cost import as_positions, cost_original, edge_differences
from .graph import Measurements, Network
from .mm import RunTrace, lipschitz_bound, mean_error

log = logging.getLogger(__name__)


@dataclass
class BBConfig:
    T: int = 20
    max_iters: int = 500
    fallback_step: float | None = None
    epsilon_guard: float = 1e-12
    variant: str = "bb1"
    exact_consensus: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.fallback_step is not None and not self.fallback_step > 0:
            raise ValueError("fallback_step must be positive")
        if self.variant not in ("bb1", "bb2"):
            raise ValueError(f"unknown BB variant {self.variant!r}")


def grad_original(net: Network, meas: Measurements, x, epsilon_guard: float = 1e-12) -> np.ndarray:
    """Gradient of the range cost; coincident pairs contribute zero."""
    x = as_positions(net, x)
    diff = edge_differences(net, x)
    dist = np.linalg.norm(diff, axis=1)
    coef = np.zeros_like(dist)
    ok = dist >= epsilon_guard
    coef[ok] = 1.0 - meas.d[ok] / dist[ok]
    ge = coef[:, None] * diff

    adiff = x[net.link_sensor] - net.alpha
    adist = np.linalg.norm(adiff, axis=1)
    acoef = np.zeros_like(adist)
    aok = adist >= epsilon_guard
    acoef[aok] = 1.0 - meas.r[aok] / adist[aok]

    g = np.zeros_like(x)
    np.add.at(g, net.edges[:, 0], ge)
    np.subtract.at(g, net.edges[:, 1], ge)
    np.add.at(g, net.link_sensor, acoef[:, None] * adiff)
    return g


def metropolis_edge_weights(net: Network) -> np.ndarray:
    deg = net.degrees
    return 1.0 / (1.0 + np.maximum(deg[net.edges[:, 0]], deg[net.edges[:, 1]]))


def average_consensus(net: Network, values: np.ndarray, rounds: int,
                      weights: np.ndarray | None = None) -> np.ndarray:
    """``rounds`` synchronous Metropolis averaging steps on the columns of ``values``."""
    if weights is None:
        weights = metropolis_edge_weights(net)
    v = np.array(values, dtype=float)
    i, j = net.edges[:, 0], net.edges[:, 1]
    for _ in range(rounds):
        flow = weights[:, None] * (v[j] - v[i])
        nxt = v.copy()
        np.add.at(nxt, i, flow)
        np.subtract.at(nxt, j, flow)
        v = nxt
    return v


def bb_steps(net: Network, s: np.ndarray, gdiff: np.ndarray, cfg: BBConfig,
             fallback: float) -> np.ndarray:
    """Per-node BB step sizes from the local iterate and gradient differences."""
    if cfg.variant == "bb1":
        num_local = np.sum(s * s, axis=1)
        den_local = np.sum(s * gdiff, axis=1)
    else:
        num_local = np.sum(s * gdiff, axis=1)
        den_local = np.sum(gdiff * gdiff, axis=1)
    local = np.stack([num_local, den_local], axis=1)
    if cfg.exact_consensus:
        est = np.broadcast_to(local.mean(axis=0), local.shape)
    else:
        est = average_consensus(net, local, cfg.T)
    num, den = est[:, 0], est[:, 1]
    ss_scale = num if cfg.variant == "bb1" else den
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = num / den
    bad = ~np.isfinite(steps) | (den <= 1e-12 * np.abs(ss_scale)) | (steps <= 0)
    if np.any(bad):
        log.debug("BB fallback step at %d nodes", int(bad.sum()))
        steps = np.where(bad, fallback, steps)
    return steps


def bb_solve(net: Network, meas: Measurements, x0, cfg: BBConfig | None = None):
    """Run BB gradient descent from ``x0``; returns ``(x_hat, trace)``.

    The trace's ``cost_z`` column holds the total range cost (the lifted
    cost at its best feasible edge variables equals it).
    """
    cfg = cfg or BBConfig()
    meas.check(net)
    fallback = cfg.fallback_step or 1.0 / lipschitz_bound(net)
    per_iter = net.n * (2 * cfg.T + net.p)

    x = as_positions(net, x0).copy()
    trace = RunTrace()
    c = cost_original(net, meas, x)
    trace.record(0, c / net.n, c, 0, mean_error(net, x))

    g = grad_original(net, meas, x, cfg.epsilon_guard)
    steps = np.full(net.n, fallback)
    for t in range(1, cfg.max_iters + 1):
        x_new = x - steps[:, None] * g
        if not np.all(np.isfinite(x_new)):
            raise FloatingPointError(f"BB iterate diverged at iteration {t}")
        g_new = grad_original(net, meas, x_new, cfg.epsilon_guard)
        steps = bb_steps(net, x_new - x, g_new - g, cfg, fallback)
        x, g = x_new, g_new
        c = cost_original(net, meas, x)
        trace.record(t, c / net.n, c, t * per_iter, mean_error(net, x))
    return x, trace

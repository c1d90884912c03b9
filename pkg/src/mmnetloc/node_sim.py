"""Synchronous message-passing simulation of the distributed MM algorithm.

Every sensor is a :class:`Node` holding only its own position, its copies of
the incident edge variables and its anchor variables.  Neighbor positions
arrive through an inbox that is refilled once per round by broadcasts, and
every cross-node read goes through :meth:`Node.neighbor_x` or
:meth:`Node.anchor`, which audit the access and refuse anything outside the
node's neighborhood.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .cost import StateZ, as_positions
from .graph import Measurements, Network
from .mm import (RunTrace, SolverConfig, cost_floor, lipschitz_bound, should_stop,
                 trace_point)
from .projections import project_rows


class LocalityViolation(RuntimeError):
    """A node tried to read state it has no link to."""


@dataclass
class MessageLog:
    """Broadcasts per round.

    Round 0 is the setup exchange of the initial positions; rounds 1..T are
    the per-iteration broadcasts.  ``setup_scalars`` counts the Lipschitz
    max-consensus traffic, kept out of the per-iteration totals.
    """

    rounds: list[int] = field(default_factory=list)
    senders: list[int] = field(default_factory=list)
    receivers: list[tuple[int, ...]] = field(default_factory=list)
    scalars: list[int] = field(default_factory=list)
    setup_scalars: int = 0
    consensus_rounds: int = 0
    reads: set = field(default_factory=set)

    def add(self, rnd: int, sender: int, receivers, scalars: int):
        self.rounds.append(rnd)
        self.senders.append(sender)
        self.receivers.append(tuple(receivers))
        self.scalars.append(scalars)

    def scalars_per_round(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for rnd, s in zip(self.rounds, self.scalars):
            out[rnd] = out.get(rnd, 0) + s
        return out

    def total_scalars(self, include_setup: bool = False) -> int:
        return sum(s for rnd, s in zip(self.rounds, self.scalars) if include_setup or rnd > 0)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["round", "sender", "scalars"])
            for row in zip(self.rounds, self.senders, self.scalars):
                out.writerow(row)


class Node:
    """Local state and update rule of one sensor."""

    def __init__(self, i: int, net: Network, meas: Measurements, audit: set):
        self.i = i
        self.p = net.p
        self.neighbors = frozenset(net.neighbors[i])
        self.incident = net.incident_edges[i]
        lo, hi = net.link_offsets[i], net.link_offsets[i + 1]
        self.anchor_ids = tuple(net.anchor_links[i])
        self._anchor_pos = {k: net.anchors[k] for k in self.anchor_ids}
        self.d = np.array([meas.d[e] for e, _, _ in self.incident])
        self.r = np.array(meas.r[lo:hi])
        self.degree = len(self.incident)
        self.n_anchors = len(self.anchor_ids)
        self._audit = audit
        self.x = np.zeros(self.p)
        self.y = np.zeros((self.degree, self.p))
        self.w = np.zeros((self.n_anchors, self.p))
        self.inbox: dict[int, np.ndarray] = {}
        self.L = None
        self.b = None

    def neighbor_x(self, j: int) -> np.ndarray:
        if j not in self.neighbors:
            raise LocalityViolation(f"node {self.i} read position of non-neighbor {j}")
        self._audit.add(("sensor", self.i, j))
        return self.inbox[j]

    def anchor(self, k: int) -> np.ndarray:
        if k not in self._anchor_pos:
            raise LocalityViolation(f"node {self.i} read unlinked anchor {k}")
        self._audit.add(("anchor", self.i, k))
        return self._anchor_pos[k]

    def set_lipschitz(self, L: float):
        self.L = float(L)
        self.b = (self.L - float(self.degree) - float(self.n_anchors)) / self.L

    def initialize(self, x0: np.ndarray):
        self.x = np.array(x0, dtype=float)

    def init_edges(self):
        """Project current differences onto the measured spheres."""
        if self.degree:
            diffs = np.array([s * (self.x - self.neighbor_x(j)) for _, j, s in self.incident])
            self.y = project_rows(diffs, self.d)
        if self.n_anchors:
            diffs = np.array([self.x - self.anchor(k) for k in self.anchor_ids])
            self.w = project_rows(diffs, self.r)

    def step(self):
        """Compute the next local state from the current state and inbox."""
        L, x = self.L, self.x
        nbr = np.zeros(self.p)
        for q, (_, j, s) in enumerate(self.incident):
            nbr = nbr + (self.neighbor_x(j) + s * self.y[q])
        anc = np.zeros(self.p)
        for q, k in enumerate(self.anchor_ids):
            anc = anc + (self.w[q] + self.anchor(k))
        x_new = self.b * x + nbr / L + anc / L

        keep = (L - 1.0) / L
        y_new, w_new = self.y, self.w
        if self.degree:
            diffs = np.array([s * (x - self.neighbor_x(j)) for _, j, s in self.incident])
            y_new = project_rows(keep * self.y + diffs / L, self.d)
        if self.n_anchors:
            diffs = np.array([x - self.anchor(k) for k in self.anchor_ids])
            w_new = project_rows(keep * self.w + diffs / L, self.r)
        return x_new, y_new, w_new


class Simulation:
    """Drives nodes in synchronous rounds with double-buffered inboxes."""

    def __init__(self, net: Network, meas: Measurements):
        meas.check(net)
        self.net = net
        self.meas = meas
        self.log = MessageLog()
        self.nodes = [Node(i, net, meas, self.log.reads) for i in range(net.n)]

    def broadcast(self, rnd: int):
        # every inbox is rebuilt from the senders' current positions only
        outgoing = {node.i: node.x.copy() for node in self.nodes}
        for node in self.nodes:
            node.inbox = {j: outgoing[j] for j in node.neighbors}
        for node in self.nodes:
            self.log.add(rnd, node.i, sorted(node.neighbors), node.p)

    def round(self):
        updates = [node.step() for node in self.nodes]
        for node, (x, y, w) in zip(self.nodes, updates):
            node.x, node.y, node.w = x, y, w

    def assemble(self) -> StateZ:
        """Observer view of the global state (tail copy of every edge)."""
        net = self.net
        z = StateZ.zeros(net)
        for node in self.nodes:
            z.x[node.i] = node.x
            for q, (e, _, s) in enumerate(node.incident):
                if s > 0:
                    z.y[e] = node.y[q]
            lo = net.link_offsets[node.i]
            z.w[lo:lo + node.n_anchors] = node.w
        return z


def max_consensus_L(net: Network, rounds: int) -> np.ndarray:
    """Per-node Lipschitz estimates after ``rounds`` of max flooding.

    Each node starts from its own (degree, anchor count) and keeps the
    componentwise max over itself and its neighbors' previous values.
    Agreement on the global bound is guaranteed once ``rounds`` reaches the
    graph diameter; earlier, nodes may disagree.
    """
    deg = net.degrees.astype(np.int64).copy()
    anc = net.anchor_counts.astype(np.int64).copy()
    for _ in range(rounds):
        new_deg, new_anc = deg.copy(), anc.copy()
        for i in range(net.n):
            for j in net.neighbors[i]:
                new_deg[i] = max(new_deg[i], deg[j])
                new_anc[i] = max(new_anc[i], anc[j])
        deg, anc = new_deg, new_anc
    return (2 * deg + anc + 2).astype(float)


def simulate(net: Network, meas: Measurements, x0, cfg: SolverConfig | None = None):
    """Message-passing run of the MM recursion.

    Returns ``(x_hat, trace, log)``; ``x_hat`` and ``trace`` match
    :func:`mmnetloc.mm.solve` exactly.
    """
    cfg = cfg or SolverConfig()
    sim = Simulation(net, meas)
    x0 = as_positions(net, x0)

    if cfg.lipschitz_override is not None:
        from .mm import resolve_lipschitz
        Ls = np.full(net.n, resolve_lipschitz(net, cfg))
    else:
        Ls = max_consensus_L(net, net.n)
        sim.log.consensus_rounds = net.n
        sim.log.setup_scalars = 2 * net.n * net.n
        if np.any(Ls != lipschitz_bound(net)):
            raise RuntimeError("max-consensus did not reach agreement on L")
    for node, L in zip(sim.nodes, Ls):
        node.set_lipschitz(L)
        node.initialize(x0[node.i])

    sim.broadcast(0)
    for node in sim.nodes:
        node.init_edges()

    per_iter = net.p * net.n
    floor = cost_floor(meas)
    trace = RunTrace()
    c, cz, e = trace_point(net, meas, sim.assemble())
    trace.record(0, c, cz, 0, e)
    for t in range(1, cfg.max_iters + 1):
        sim.round()
        sim.broadcast(t)
        c, cz, e = trace_point(net, meas, sim.assemble())
        trace.record(t, c, cz, t * per_iter, e)
        if should_stop(trace.cost_z, cfg.tol_rel_cost, floor=floor):
            break
    x_hat = np.array([node.x for node in sim.nodes])
    return x_hat, trace, sim.log

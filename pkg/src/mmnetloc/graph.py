"""Sensor network topology, range measurements and the network file format.

A :class:`Network` is immutable once built.  Edges are stored with the
canonical orientation ``i < j``; the oriented incidence matrix puts ``+1`` at
the tail ``i`` and ``-1`` at the head ``j`` of every edge.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

MAX_CONNECTIVITY_ATTEMPTS = 1000


class ConnectivityError(RuntimeError):
    """No connected network could be drawn within the attempt budget."""


class NetworkFileError(ValueError):
    """Malformed network file.

    Carries the offending ``field`` (dotted path) and, when it can be
    located, the 1-based ``line`` in the source document.
    """

    def __init__(self, message: str, path=None, field: str | None = None,
                 line: int | None = None):
        self.path = None if path is None else str(path)
        self.field = field
        self.line = line
        where = []
        if self.path:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = ", ".join(where) + ": " if where else ""
        super().__init__(prefix + message)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class IncidenceMap:
    """Oriented arc-node incidence bookkeeping for a network's edges.

    Row ``e`` of the implied matrix ``C`` has ``+1`` in column ``tail[e]`` and
    ``-1`` in column ``head[e]``.  ``C`` itself is only built on request
    (:meth:`dense`), for small test graphs.
    """

    def __init__(self, n: int, edges: np.ndarray):
        self.n = n
        self.tail = _readonly(np.array(edges[:, 0], dtype=np.int64))
        self.head = _readonly(np.array(edges[:, 1], dtype=np.int64))
        self._row = {(int(i), int(j)): e for e, (i, j) in enumerate(edges)}

    def __len__(self) -> int:
        return len(self.tail)

    def row(self, i: int, j: int) -> int:
        """Row index of the undirected edge {i, j}."""
        key = (i, j) if i < j else (j, i)
        return self._row[key]

    def sign(self, e: int, i: int) -> int:
        if self.tail[e] == i:
            return 1
        if self.head[e] == i:
            return -1
        return 0

    def dense(self) -> np.ndarray:
        C = np.zeros((len(self), self.n))
        rows = np.arange(len(self))
        C[rows, self.tail] = 1.0
        C[rows, self.head] = -1.0
        return C


@dataclass(frozen=True, eq=False)
class Network:
    """Undirected connected sensor graph plus anchors.

    Parameters
    ----------
    n : int
        Number of sensors.
    p : int
        Spatial dimension, 2 or 3.
    edges : array_like, shape (m, 2)
        Sensor pairs ``(i, j)`` with ``i < j``, sorted, no duplicates.
    anchors : array_like, shape (K, p)
        Anchor positions.
    anchor_links : sequence of sequences
        ``anchor_links[i]`` lists the anchors sensor ``i`` measures.
    true_positions : array_like, shape (n, p), optional
        Ground truth, used for measurement generation and evaluation only.
    """

    n: int
    p: int
    edges: np.ndarray
    anchors: np.ndarray
    anchor_links: tuple[tuple[int, ...], ...]
    true_positions: np.ndarray | None = None

    def __post_init__(self):
        n, p = int(self.n), int(self.p)
        if n < 1:
            raise ValueError("network needs at least one sensor")
        if p not in (2, 3):
            raise ValueError(f"dimension p must be 2 or 3, got {p}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        anchors = np.asarray(self.anchors, dtype=float).reshape(-1, p)
        links = tuple(tuple(int(k) for k in lk) for lk in self.anchor_links)
        if len(links) != n:
            raise ValueError(f"anchor_links has {len(links)} entries, expected {n}")
        for i, lk in enumerate(links):
            if any(a >= b for a, b in zip(lk, lk[1:])):
                raise ValueError(f"sensor {i} anchor list must be strictly increasing")
            if lk and (lk[0] < 0 or lk[-1] >= len(anchors)):
                raise ValueError(f"sensor {i} links to an unknown anchor")
        if len(edges):
            if np.any(edges < 0) or np.any(edges >= n):
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loop in edge list")
            if np.any(edges[:, 0] > edges[:, 1]):
                raise ValueError("edges must be stored with i < j")
            key = edges[:, 0] * n + edges[:, 1]
            if np.any(key[1:] == key[:-1]):
                raise ValueError("duplicate edge")
            if np.any(key[1:] < key[:-1]):
                raise ValueError("edges must be sorted lexicographically")
        if not _is_connected(n, edges):
            raise ValueError("sensor graph is not connected")
        truth = None
        if self.true_positions is not None:
            truth = np.array(self.true_positions, dtype=float).reshape(n, p)
            truth = _readonly(truth)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "anchors", _readonly(anchors.copy()))
        object.__setattr__(self, "anchor_links", links)
        object.__setattr__(self, "true_positions", truth)

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def incidence(self) -> IncidenceMap:
        return IncidenceMap(self.n, self.edges)

    @cached_property
    def degrees(self) -> np.ndarray:
        return _readonly(np.bincount(self.edges.ravel(), minlength=self.n))

    @cached_property
    def anchor_counts(self) -> np.ndarray:
        return _readonly(np.array([len(lk) for lk in self.anchor_links], dtype=np.int64))

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(int(j))
            nbrs[j].append(int(i))
        return tuple(tuple(sorted(v)) for v in nbrs)

    @cached_property
    def incident_edges(self) -> tuple[tuple[tuple[int, int, int], ...], ...]:
        """Per sensor, ``(edge, other endpoint, sign)`` in ascending edge order."""
        inc: list[list[tuple[int, int, int]]] = [[] for _ in range(self.n)]
        for e, (i, j) in enumerate(self.edges):
            inc[i].append((e, int(j), 1))
            inc[j].append((e, int(i), -1))
        return tuple(tuple(v) for v in inc)

    @cached_property
    def link_sensor(self) -> np.ndarray:
        """Sensor index of every anchor link, links ordered by (sensor, anchor)."""
        return _readonly(np.repeat(np.arange(self.n), self.anchor_counts))

    @cached_property
    def link_anchor(self) -> np.ndarray:
        return _readonly(np.array([k for lk in self.anchor_links for k in lk], dtype=np.int64))

    @property
    def n_links(self) -> int:
        return len(self.link_anchor)

    @cached_property
    def link_offsets(self) -> np.ndarray:
        """``link_offsets[i]:link_offsets[i+1]`` slices sensor i's links."""
        return _readonly(np.concatenate([[0], np.cumsum(self.anchor_counts)]))

    @cached_property
    def alpha(self) -> np.ndarray:
        """Anchor position per link, shape (n_links, p)."""
        return _readonly(self.anchors[self.link_anchor].reshape(-1, self.p))

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        A[self.edges[:, 0], self.edges[:, 1]] = 1.0
        A[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return A

    def laplacian(self) -> np.ndarray:
        return np.diag(self.degrees.astype(float)) - self.adjacency()

    def same_as(self, other: Network) -> bool:
        """Bit-exact structural and positional equality."""
        if (self.n, self.p, self.anchor_links) != (other.n, other.p, other.anchor_links):
            return False
        if not (np.array_equal(self.edges, other.edges)
                and np.array_equal(self.anchors, other.anchors)):
            return False
        if (self.true_positions is None) != (other.true_positions is None):
            return False
        return self.true_positions is None or np.array_equal(
            self.true_positions, other.true_positions)


@dataclass(frozen=True, eq=False)
class Measurements:
    """Noisy ranges: ``d`` per edge (network edge order), ``r`` per anchor link."""

    d: np.ndarray
    r: np.ndarray
    sigma: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        d = np.array(self.d, dtype=float).ravel()
        r = np.array(self.r, dtype=float).ravel()
        if np.any(~np.isfinite(d)) or np.any(d < 0):
            raise ValueError("sensor ranges d must be finite and nonnegative")
        if np.any(~np.isfinite(r)) or np.any(r < 0):
            raise ValueError("anchor ranges r must be finite and nonnegative")
        object.__setattr__(self, "d", _readonly(d))
        object.__setattr__(self, "r", _readonly(r))
        object.__setattr__(self, "sigma", float(self.sigma))

    def check(self, net: Network) -> None:
        if len(self.d) != net.m or len(self.r) != net.n_links:
            raise ValueError(
                f"measurements sized ({len(self.d)}, {len(self.r)}) do not match "
                f"network ({net.m} edges, {net.n_links} anchor links)")

    def range(self, net: Network, i: int, j: int) -> float:
        return float(self.d[net.incidence.row(i, j)])

    def same_as(self, other: Measurements) -> bool:
        return (np.array_equal(self.d, other.d) and np.array_equal(self.r, other.r)
                and self.sigma == other.sigma and self.seed == other.seed)


def _is_connected(n: int, edges: np.ndarray) -> bool:
    if n == 1:
        return True
    if len(edges) == 0:
        return False
    adj = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp == 1


def corner_anchors(p: int = 2) -> np.ndarray:
    """Vertices of the unit square (p=2) or cube (p=3)."""
    return np.array(list(product((0.0, 1.0), repeat=p)))


def _pair_distances(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(positions)
    iu, ju = np.triu_indices(n, k=1)
    dist = np.linalg.norm(positions[iu] - positions[ju], axis=1)
    return np.stack([iu, ju], axis=1), dist


def calibrate_radius(positions: np.ndarray, target_degree: float) -> float:
    """Smallest radius whose disc graph has mean degree closest to the target.

    Bisects over the sorted pairwise distances (mean degree is a step
    function of the radius, so the search is over its jump points).
    """
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    if n < 2:
        raise ValueError("need at least two sensors to calibrate a radius")
    _, dist = _pair_distances(positions)
    dist = np.sort(dist)

    def mean_degree(k: int) -> float:
        return 2.0 * (k + 1) / n

    lo, hi = 0, len(dist) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if mean_degree(mid) < target_degree:
            lo = mid + 1
        else:
            hi = mid
    if lo > 0 and abs(mean_degree(lo - 1) - target_degree) < abs(mean_degree(lo) - target_degree):
        lo -= 1
    return float(dist[lo])


def _build(n, p, positions, radius, anchors, anchor_range) -> tuple[np.ndarray, list]:
    if n > 1:
        pairs, dist = _pair_distances(positions)
        edges = pairs[dist <= radius]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    links = []
    for i in range(n):
        da = np.linalg.norm(anchors - positions[i], axis=1) if len(anchors) else np.zeros(0)
        links.append(tuple(int(k) for k in np.flatnonzero(da <= anchor_range)))
    return edges, links


def generate_geometric_network(n: int, p: int = 2, radius: float | None = None,
                               anchor_positions: Sequence | None = None,
                               anchor_range: float | None = None,
                               rng_seed: int = 0, *,
                               target_degree: float | None = None,
                               max_attempts: int = MAX_CONNECTIVITY_ATTEMPTS) -> Network:
    """Random geometric network with sensors uniform in the unit box.

    Exactly one of ``radius`` or ``target_degree`` must be given; with a
    target degree the radius is calibrated on each draw.  ``anchor_range``
    defaults to the (final) sensor radius.  Draws are repeated, each from a
    seed derived from ``(rng_seed, attempt)``, until the graph is connected.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if (radius is None) == (target_degree is None):
        raise ValueError("give exactly one of radius or target_degree")
    if radius is not None and radius <= 0:
        raise ValueError("radius must be positive")
    if target_degree is not None and target_degree <= 0:
        raise ValueError("target_degree must be positive")
    anchors = (corner_anchors(p) if anchor_positions is None
               else np.asarray(anchor_positions, dtype=float).reshape(-1, p))

    for attempt in range(max_attempts):
        rng = np.random.default_rng([rng_seed, attempt])
        positions = rng.uniform(0.0, 1.0, size=(n, p))
        r = radius
        if target_degree is not None:
            r = calibrate_radius(positions, target_degree) if n > 1 else 1.0
        a_range = r if anchor_range is None else anchor_range
        edges, links = _build(n, p, positions, r, anchors, a_range)
        if _is_connected(n, edges):
            return Network(n, p, edges, anchors, tuple(links), positions)
    knob = f"radius {radius}" if radius is not None else f"target degree {target_degree}"
    raise ConnectivityError(
        f"no connected network after {max_attempts} draws; {knob} is too small for n={n}")


def generate_measurements(net: Network, sigma: float, rng_seed: int = 0) -> Measurements:
    """Ranges ``|true distance + N(0, sigma^2)|`` for every edge and anchor link."""
    if net.true_positions is None:
        raise ValueError("network has no true positions to measure")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    x = net.true_positions
    rng = np.random.default_rng(rng_seed)
    exact_d = np.linalg.norm(x[net.edges[:, 0]] - x[net.edges[:, 1]], axis=1)
    exact_r = np.linalg.norm(x[net.link_sensor] - net.alpha, axis=1)
    nu = rng.normal(0.0, sigma, size=net.m) if sigma > 0 else np.zeros(net.m)
    eta = rng.normal(0.0, sigma, size=net.n_links) if sigma > 0 else np.zeros(net.n_links)
    return Measurements(np.abs(exact_d + nu), np.abs(exact_r + eta), sigma, rng_seed)


def degree_stats(net: Network) -> tuple[int, int]:
    """``(max node degree, max anchors linked to one sensor)``."""
    return int(net.degrees.max(initial=0)), int(net.anchor_counts.max(initial=0))


# --------------------------------------------------------------------------
# file format

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            raise ValueError("non-finite value cannot be stored")
        return "%.17g" % v
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _dump_document(doc: dict) -> str:
    lines = ["{"]
    items = list(doc.items())
    for k, (key, value) in enumerate(items):
        sep = "," if k < len(items) - 1 else ""
        if isinstance(value, (list, tuple, np.ndarray)) and len(value) and \
                isinstance(value[0], (list, tuple, np.ndarray)):
            rows = [f"    {_fmt(row)}" for row in value]
            lines.append(f"  {json.dumps(key)}: [")
            lines.append(",\n".join(rows))
            lines.append(f"  ]{sep}")
        else:
            lines.append(f"  {json.dumps(key)}: {_fmt(value)}{sep}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def network_document(net: Network, meas: Measurements | None = None) -> dict:
    r = None
    if meas is not None:
        meas.check(net)
        off = net.link_offsets
        r = [list(meas.r[off[i]:off[i + 1]]) for i in range(net.n)]
    return {
        "n": net.n,
        "p": net.p,
        "positions": None if net.true_positions is None else net.true_positions,
        "edges": net.edges,
        "anchors": net.anchors,
        "anchor_links": [list(lk) for lk in net.anchor_links],
        "d": None if meas is None else meas.d,
        "r": r,
        "sigma": None if meas is None else meas.sigma,
        "seed": None if meas is None else meas.seed,
    }


def dumps_network(net: Network, meas: Measurements | None = None) -> str:
    return _dump_document(network_document(net, meas))


def save_network(path, net: Network, meas: Measurements | None = None) -> None:
    Path(path).write_text(dumps_network(net, meas), encoding="utf-8")


def _line_of(text: str, key: str) -> int | None:
    needle = json.dumps(key) + ":"
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def loads_network(text: str, path=None) -> tuple[Network, Measurements | None]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFileError(exc.msg, path, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise NetworkFileError("top level must be an object", path, line=1)

    def fail(key, msg):
        return NetworkFileError(msg, path, field=key, line=_line_of(text, key.split(".")[0]))

    for key in ("p", "edges", "anchors", "anchor_links"):
        if key not in doc:
            raise fail(key, "missing required field")
    positions = doc.get("positions")
    n = doc.get("n", None if positions is None else len(positions))
    if n is None:
        n = len(doc["anchor_links"])
    try:
        p = int(doc["p"])
        edges = np.array(doc["edges"], dtype=np.int64).reshape(-1, 2)
        anchors = np.array(doc["anchors"], dtype=float).reshape(-1, p)
    except (TypeError, ValueError) as exc:
        raise fail("edges", f"bad array: {exc}") from exc
    try:
        net = Network(int(n), p, edges, anchors,
                      tuple(tuple(lk) for lk in doc["anchor_links"]), positions)
    except (TypeError, ValueError) as exc:
        key = "positions" if "position" in str(exc) else "edges"
        if "anchor" in str(exc):
            key = "anchor_links"
        raise fail(key, str(exc)) from exc

    if doc.get("d") is None and doc.get("r") is None:
        return net, None
    d = doc.get("d") or []
    r_nested = doc.get("r") or [[] for _ in range(net.n)]
    if len(d) != net.m:
        raise fail("d", f"{len(d)} ranges for {net.m} edges")
    if len(r_nested) != net.n or any(len(ri) != len(lk) for ri, lk in zip(r_nested, net.anchor_links)):
        raise fail("r", "anchor ranges do not match anchor_links")
    for e, v in enumerate(d):
        if not isinstance(v, (int, float)) or not v >= 0:
            raise fail("d", f"entry {e} must be a nonnegative number, got {v!r}")
    r_flat = [v for ri in r_nested for v in ri]
    for e, v in enumerate(r_flat):
        if not isinstance(v, (int, float)) or not v >= 0:
            raise fail("r", f"entry {e} must be a nonnegative number, got {v!r}")
    sigma = doc.get("sigma") or 0.0
    meas = Measurements(np.array(d, dtype=float), np.array(r_flat, dtype=float),
                        float(sigma), doc.get("seed"))
    return net, meas


def load_network(path) -> tuple[Network, Measurements | None]:
    """Read a network file written by :func:`save_network`."""
    path = Path(path)
    return loads_network(path.read_text(encoding="utf-8"), path)

"""Maximum-likelihood localization cost and its lifted quadratic form.

The lifted variable ``z = (x, y, w)`` carries one position per sensor, one
``y`` per edge (canonical orientation) and one ``w`` per anchor link.  With
``A = C kron I_p`` and ``E`` the anchor-link selector,

    f(z) = 1/2 ||A x - y||^2 + 1/2 ||E x - alpha - w||^2,

minimised over ``||y_e|| = d_e`` and ``||w_l|| = r_l``.  Everything here is
matrix-free: work is O(edges + links) and ``M`` is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Measurements, Network
from .projections import project_rows


class ShapeError(ValueError):
    pass


@dataclass
class StateZ:
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray

    @classmethod
    def zeros(cls, net: Network) -> StateZ:
        p = net.p
        return cls(np.zeros((net.n, p)), np.zeros((net.m, p)), np.zeros((net.n_links, p)))

    @classmethod
    def from_flat(cls, net: Network, v: np.ndarray) -> StateZ:
        v = np.asarray(v, dtype=float)
        p = net.p
        a, b = net.n * p, (net.n + net.m) * p
        if v.shape != (b + net.n_links * p,):
            raise ShapeError(f"flat state has shape {v.shape}, expected ({b + net.n_links * p},)")
        return cls(v[:a].reshape(-1, p).copy(), v[a:b].reshape(-1, p).copy(),
                   v[b:].reshape(-1, p).copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.y.ravel(), self.w.ravel()])

    def copy(self) -> StateZ:
        return StateZ(self.x.copy(), self.y.copy(), self.w.copy())

    def check(self, net: Network) -> None:
        p = net.p
        want = ((net.n, p), (net.m, p), (net.n_links, p))
        got = (self.x.shape, self.y.shape, self.w.shape)
        if got != want:
            raise ShapeError(f"state blocks {got} do not match network {want}")


def as_positions(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size != net.n * net.p:
        raise ShapeError(f"expected {net.n * net.p} position entries, got {x.size}")
    return x.reshape(net.n, net.p)


def edge_differences(net: Network, x: np.ndarray) -> np.ndarray:
    """``A x``: tail minus head for every edge."""
    return x[net.edges[:, 0]] - x[net.edges[:, 1]]


def cost_original(net: Network, meas: Measurements, x) -> float:
    """Sum of half squared range residuals over edges and anchor links."""
    x = as_positions(net, x)
    de = np.linalg.norm(edge_differences(net, x), axis=1) - meas.d
    da = np.linalg.norm(x[net.link_sensor] - net.alpha, axis=1) - meas.r
    return 0.5 * float(de @ de) + 0.5 * float(da @ da)


def _residuals(net: Network, z: StateZ) -> tuple[np.ndarray, np.ndarray]:
    z.check(net)
    ry = edge_differences(net, z.x) - z.y
    rw = z.x[net.link_sensor] - net.alpha - z.w
    return ry, rw


def cost_z(net: Network, meas: Measurements, z: StateZ) -> float:
    ry, rw = _residuals(net, z)
    return 0.5 * float(np.sum(ry * ry)) + 0.5 * float(np.sum(rw * rw))


def scatter_edges(net: Network, vals: np.ndarray) -> np.ndarray:
    """``A^T v``: add each edge row at its tail, subtract it at its head."""
    out = np.zeros((net.n, vals.shape[1]))
    np.add.at(out, net.edges[:, 0], vals)
    np.subtract.at(out, net.edges[:, 1], vals)
    return out


def scatter_links(net: Network, vals: np.ndarray) -> np.ndarray:
    """``E^T v``: add each link row to its sensor."""
    out = np.zeros((net.n, vals.shape[1]))
    np.add.at(out, net.link_sensor, vals)
    return out


def grad_z(net: Network, meas: Measurements, z: StateZ) -> StateZ:
    """``M z - b`` as a state with the same block layout."""
    ry, rw = _residuals(net, z)
    gx = scatter_edges(net, ry) + scatter_links(net, rw)
    return StateZ(gx, -ry, -rw)


def reduce_to_x(net: Network, meas: Measurements, x) -> StateZ:
    """Best feasible ``(y, w)`` for fixed positions: radial projections."""
    x = as_positions(net, x).copy()
    y = project_rows(edge_differences(net, x), meas.d)
    w = project_rows(x[net.link_sensor] - net.alpha, meas.r)
    return StateZ(x, y, w)


def project_z(net: Network, meas: Measurements, z: StateZ) -> StateZ:
    """Projection onto the feasible set; the position block is free."""
    return StateZ(z.x.copy(), project_rows(z.y, meas.d), project_rows(z.w, meas.r))

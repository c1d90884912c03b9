"""Independent reference computations used by the tests.

Nothing here calls the library's matrix-free kernels: the lifted quadratic
is assembled densely from the incidence and selector matrices.
"""

import numpy as np

from mmnetloc.graph import Network, generate_geometric_network, generate_measurements


def random_instance(seed, n_range=(2, 10), p=None, sigma=0.05, anchor_range=0.6,
                    target_degree=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    p = int(rng.integers(2, 4)) if p is None else p
    deg = target_degree
    if deg is None:
        # sparser graphs rarely connect once n grows
        deg = max(1.0, min(n - 1.0, float(rng.uniform(2.5, 5.0)) + 0.1 * n))
    net = generate_geometric_network(n, p, target_degree=deg, rng_seed=seed,
                                     anchor_range=anchor_range)
    meas = generate_measurements(net, sigma, seed + 1)
    return net, meas, rng


def incidence_dense(net: Network) -> np.ndarray:
    C = np.zeros((net.m, net.n))
    for e, (i, j) in enumerate(net.edges):
        C[e, i], C[e, j] = 1.0, -1.0
    return C


def selector_dense(net: Network) -> np.ndarray:
    S = np.zeros((net.n_links, net.n))
    row = 0
    for i, links in enumerate(net.anchor_links):
        for _ in links:
            S[row, i] = 1.0
            row += 1
    return S


def dense_system(net: Network):
    """Return ``(M, b, alpha)`` for the lifted quadratic in z = (x, y, w)."""
    p = net.p
    I = np.eye(p)
    A = np.kron(incidence_dense(net), I)
    E = np.kron(selector_dense(net), I)
    alpha = np.array([net.anchors[k] for links in net.anchor_links for k in links]).reshape(-1)
    ny, nw = A.shape[0], E.shape[0]
    G1 = np.hstack([A, -np.eye(ny), np.zeros((ny, nw))])
    G2 = np.hstack([E, np.zeros((nw, ny)), -np.eye(nw)])
    M = G1.T @ G1 + G2.T @ G2
    b = G2.T @ alpha
    return M, b, alpha


def dense_cost(M, b, alpha, z):
    return 0.5 * z @ M @ z - b @ z + 0.5 * alpha @ alpha


def power_iteration(M, iters=5000, seed=0):
    v = np.random.default_rng(seed).normal(size=M.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        u = M @ v
        lam = float(v @ u)
        nrm = np.linalg.norm(u)
        if nrm == 0:
            return 0.0
        v = u / nrm
    return lam


def sphere_project_loop(v, radius):
    nrm = np.sqrt(sum(c * c for c in v))
    if nrm == 0:
        out = np.zeros_like(v)
        out[0] = radius
        return out
    return np.array([radius * c / nrm for c in v])


def dense_mm_step(net, meas, M, b, zflat, L):
    """Projected gradient step assembled from the dense quadratic."""
    p = net.p
    g = M @ zflat - b
    u = zflat - g / L
    nx, ny = net.n * p, net.m * p
    out = u.copy()
    for e in range(net.m):
        sl = slice(nx + e * p, nx + (e + 1) * p)
        out[sl] = sphere_project_loop(u[sl], meas.d[e])
    for l in range(net.n_links):
        sl = slice(nx + ny + l * p, nx + ny + (l + 1) * p)
        out[sl] = sphere_project_loop(u[sl], meas.r[l])
    return out


def central_diff(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[k] += h
        xm[k] -= h
        gf[k] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * h)
    return g


def plain_bb(grad, x0, step0, iters):
    """Centralized BB1 gradient descent with exact global inner products."""
    x = np.array(x0, dtype=float)
    g = grad(x)
    step = step0
    xs = [x.copy()]
    for _ in range(iters):
        x_new = x - step * g
        g_new = grad(x_new)
        s, yv = (x_new - x).ravel(), (g_new - g).ravel()
        ss, sy = float(s @ s), float(s @ yv)
        step = ss / sy if sy > 1e-12 * ss else step0
        x, g = x_new, g_new
        xs.append(x.copy())
    return xs

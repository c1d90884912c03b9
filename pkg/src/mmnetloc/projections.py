"""Euclidean projection onto spheres ``{v : ||v|| = radius}``."""

from __future__ import annotations

import numpy as np


def _row_norms(V: np.ndarray) -> np.ndarray:
    # explicit sum of squares keeps the reduction order identical for any row count
    return np.sqrt((V * V).sum(axis=1))


def project_rows(V: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Project each row of ``V`` onto the sphere of the matching radius.

    Zero rows go to ``radius * e1``.  A zero radius gives the zero vector.
    """
    V = np.asarray(V, dtype=float)
    radii = np.asarray(radii, dtype=float)
    norms = _row_norms(V)
    out = np.zeros_like(V)
    nz = norms > 0
    out[nz] = V[nz] * (radii[nz] / norms[nz])[:, None]
    if not nz.all():
        out[~nz, 0] = radii[~nz]
    return out


def project_sphere(v, radius: float, tie_break=None) -> np.ndarray:
    """Nearest point to ``v`` on the sphere of the given radius.

    Parameters
    ----------
    v : array_like, shape (p,)
    radius : float
        Nonnegative sphere radius.
    tie_break : array_like, shape (p,), optional
        Unit vector returned (scaled) when ``v`` is zero; defaults to e1.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    v = np.asarray(v, dtype=float)
    if tie_break is not None and not np.any(v):
        return float(radius) * np.asarray(tie_break, dtype=float)
    return project_rows(v[None, :], np.array([radius]))[0]

"""Distances and direction cosines between the UAV, the IRS and ground users.

All functions accept either single points of shape ``(3,)`` or stacks of
points of shape ``(..., 3)`` and broadcast in the usual numpy way.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .errors import DegenerateGeometry

__all__ = [
    "DirectionCosines",
    "as_vec3",
    "dist",
    "horizontal_dist",
    "angles_uav_irs",
    "angles_irs_user",
]


class DirectionCosines(NamedTuple):
    """Elevation sine plus horizontal sine/cosine of a link direction."""

    sin_theta: np.ndarray
    sin_xi: np.ndarray
    cos_xi: np.ndarray


def as_vec3(p: ArrayLike) -> np.ndarray:
    """Convert to a float array whose last axis has length three."""
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1:] != (3,):
        raise ValueError(f"expected trailing dimension 3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coordinates must be finite")
    return arr


def dist(p: ArrayLike, q: ArrayLike) -> np.ndarray | float:
    """Euclidean distance between points (broadcast over leading axes)."""
    d = np.linalg.norm(as_vec3(p) - as_vec3(q), axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def horizontal_dist(p: ArrayLike, q: ArrayLike) -> np.ndarray | float:
    """Distance between the projections of two points onto the ground plane."""
    diff = as_vec3(p)[..., :2] - as_vec3(q)[..., :2]
    d = np.hypot(diff[..., 0], diff[..., 1])
    return float(d) if np.ndim(d) == 0 else d


def _check_horizontal(h: np.ndarray, what: str) -> None:
    if np.any(np.asarray(h) == 0.0):
        raise DegenerateGeometry(f"zero horizontal separation between {what}")


def angles_uav_irs(q: ArrayLike, w_r: ArrayLike) -> DirectionCosines:
    """Angles of arrival at the IRS for a UAV at ``q``.

    ``sin_theta = (z - H_R)/d``, ``sin_xi = (x_R - x)/h`` and
    ``cos_xi = (y - y_R)/h`` where ``h`` is the horizontal range.
    """
    q = as_vec3(q)
    w_r = as_vec3(w_r)
    h = np.asarray(horizontal_dist(q, w_r))
    _check_horizontal(h, "UAV and IRS")
    d = np.asarray(dist(q, w_r))
    return DirectionCosines(
        sin_theta=(q[..., 2] - w_r[..., 2]) / d,
        sin_xi=(w_r[..., 0] - q[..., 0]) / h,
        cos_xi=(q[..., 1] - w_r[..., 1]) / h,
    )


def angles_irs_user(w_r: ArrayLike, w_k: ArrayLike) -> DirectionCosines:
    """Angles of departure from the IRS towards a ground user at ``w_k``.

    ``sin_theta = H_R/d``, ``sin_xi = (x_k - x_R)/h`` and
    ``cos_xi = (y_k - y_R)/h``.
    """
    w_r = as_vec3(w_r)
    w_k = as_vec3(w_k)
    h = np.asarray(horizontal_dist(w_r, w_k))
    _check_horizontal(h, "IRS and user")
    d = np.asarray(dist(w_r, w_k))
    return DirectionCosines(
        sin_theta=(w_r[..., 2] - w_k[..., 2]) / d,
        sin_xi=(w_k[..., 0] - w_r[..., 0]) / h,
        cos_xi=(w_k[..., 1] - w_r[..., 1]) / h,
    )

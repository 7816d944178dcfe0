"""Rotation algebra and the two geometric augmentations.

Angles are degrees at the public interfaces (matching the sensor format)
and radians internally.  Orientation uses intrinsic ZYX Euler angles:
``R = Rz(e1) @ Ry(e2) @ Rx(e3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sequence import SensorSequence, get_layout

GIMBAL_EPS = 1e-9
HAND_FIT_DOWNSAMPLE = 50


class VerticalBoundaryError(ValueError):
    """The optimal hand separator is vertical (y = mx + b cannot represent
    it); callers should skip hand inversion for the offending sequence."""


# ---------------------------------------------------------------------------
# ROT / ROT^-1
# ---------------------------------------------------------------------------

def euler_to_matrix(euler_deg: np.ndarray) -> np.ndarray:
    """Batched intrinsic-ZYX Euler angles (degrees, shape (...,3)) to matrices."""
    e = np.deg2rad(np.asarray(euler_deg, dtype=np.float64))
    c1, c2, c3 = np.cos(e[..., 0]), np.cos(e[..., 1]), np.cos(e[..., 2])
    s1, s2, s3 = np.sin(e[..., 0]), np.sin(e[..., 1]), np.sin(e[..., 2])
    r = np.empty(e.shape[:-1] + (3, 3), dtype=np.float64)
    r[..., 0, 0] = c1 * c2
    r[..., 0, 1] = c1 * s2 * s3 - s1 * c3
    r[..., 0, 2] = c1 * s2 * c3 + s1 * s3
    r[..., 1, 0] = s1 * c2
    r[..., 1, 1] = s1 * s2 * s3 + c1 * c3
    r[..., 1, 2] = s1 * s2 * c3 - c1 * s3
    r[..., 2, 0] = -s2
    r[..., 2, 1] = c2 * s3
    r[..., 2, 2] = c2 * c3
    return r


def matrix_to_euler(r: np.ndarray) -> np.ndarray:
    """Batched ZYX Euler extraction (degrees).

    Not a mathematical inverse of ``euler_to_matrix``: the mapping between
    representations is many-to-one, and hand inversion deliberately feeds
    improper (det = -1) matrices through this extraction.  At gimbal lock
    (|r[2,0]| = 1) e3 is conventionally zeroed and the z-rotation folded
    into e1.
    """
    r = np.asarray(r, dtype=np.float64)
    s2 = np.clip(-r[..., 2, 0], -1.0, 1.0)
    e2 = np.arcsin(s2)
    locked = np.abs(s2) > 1.0 - GIMBAL_EPS
    e1 = np.where(locked,
                  np.arctan2(-r[..., 0, 1], r[..., 1, 1]),
                  np.arctan2(r[..., 1, 0], r[..., 0, 0]))
    e3 = np.where(locked, 0.0, np.arctan2(r[..., 2, 1], r[..., 2, 2]))
    return np.degrees(np.stack([e1, e2, e3], axis=-1))


def rot(euler_deg) -> np.ndarray:
    """ROT: one Euler-angle triple (degrees) to a 3x3 rotation matrix."""
    return euler_to_matrix(np.asarray(euler_deg, dtype=np.float64).reshape(3))


def rot_inv(r) -> np.ndarray:
    """ROT^-1: one 3x3 matrix to Euler angles (degrees); properness not required."""
    return matrix_to_euler(np.asarray(r, dtype=np.float64).reshape(3, 3))


def reflection_2d(phi: float) -> np.ndarray:
    """Reflection across the line through the origin at angle phi (radians)."""
    c, s = math.cos(2.0 * phi), math.sin(2.0 * phi)
    return np.array([[c, s], [s, -c]], dtype=np.float64)


def reflection_3d(phi: float) -> np.ndarray:
    """2-d reflection extended to 3-d with the z axis preserved (det = -1)."""
    c, s = math.cos(2.0 * phi), math.sin(2.0 * phi)
    return np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, 1.0]], dtype=np.float64)


# ---------------------------------------------------------------------------
# Reflection-line fit (linear max-margin separator in the xy plane)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReflectionLine:
    m: float  # slope
    b: float  # intercept, mm

    @property
    def phi(self) -> float:
        """Angle with the x axis, radians, in (-pi/2, pi/2)."""
        return math.atan(self.m)


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; robust to duplicate/collinear/degenerate input."""
    pts = np.unique(np.asarray(pts, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _closest_point_on_segment(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a
    t = np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
    return a + t * ab


def _hull_closest_pair(hull_a: np.ndarray, hull_b: np.ndarray):
    """Closest points between two disjoint convex polygons (brute force)."""
    def segments(hull):
        if len(hull) == 1:
            return [(hull[0], hull[0])]
        return [(hull[i], hull[(i + 1) % len(hull)]) for i in range(len(hull))]

    best = (np.inf, None, None)
    for p in hull_a:
        for a, b in segments(hull_b):
            q = _closest_point_on_segment(p, a, b)
            d = float(np.hypot(*(p - q)))
            if d < best[0]:
                best = (d, p, q)
    for q in hull_b:
        for a, b in segments(hull_a):
            p = _closest_point_on_segment(q, a, b)
            d = float(np.hypot(*(p - q)))
            if d < best[0]:
                best = (d, p, q)
    return best


def _soft_margin_subgradient(x: np.ndarray, y: np.ndarray, iters: int = 10_000):
    """Deterministic full-batch subgradient descent on the soft-margin primal
    (C = 1, so lambda = 1/n), with tail averaging.  Returns (w, b)."""
    n = len(x)
    lam = 1.0 / n
    w = np.zeros(2)
    b = 0.0
    w_sum = np.zeros(2)
    b_sum = 0.0
    tail = iters // 2
    for t in range(1, iters + 1):
        eta = 1.0 / (lam * t)
        margins = y * (x @ w + b)
        viol = margins < 1.0
        gw = lam * w
        gb = 0.0
        if viol.any():
            gw = gw - (y[viol, None] * x[viol]).sum(axis=0) / n
            gb = -float(y[viol].sum()) / n
        w = w - eta * gw
        b = b - eta * gb
        if t > iters - tail:
            w_sum += w
            b_sum += b
    return w_sum / tail, b_sum / tail


def fit_reflection_line(left_xy, right_xy) -> ReflectionLine:
    """Maximum-margin line separating the two hands' xy centroid clouds.

    A deterministic soft-margin subgradient pass finds the separating
    direction; when it strictly separates the sets, the exact maximum-margin
    midline is recovered from the closest pair between the convex hulls
    (the two are equivalent for separable data, and the hull step removes
    the first-order method's slow tail).  Raises VerticalBoundaryError when
    the optimal boundary has unbounded slope.
    """
    left = np.asarray(left_xy, dtype=np.float64).reshape(-1, 2)
    right = np.asarray(right_xy, dtype=np.float64).reshape(-1, 2)
    if len(left) == 0 or len(right) == 0:
        raise ValueError("both hands need at least one point")

    pts = np.concatenate([left, right])
    labels = np.concatenate([np.ones(len(left)), -np.ones(len(right))])
    center = pts.mean(axis=0)
    scale = float(pts.std()) or 1.0  # isotropic, so the margin geometry is kept
    z = (pts - center) / scale

    w, b_fit = _soft_margin_subgradient(z, labels)
    normal, offset = w, b_fit

    scores = z @ w
    lo = scores[labels > 0].min()
    hi = scores[labels < 0].max()
    if lo > hi:  # strictly separated along w: refine exactly via the hulls
        dist, p, q = _hull_closest_pair(_convex_hull(z[labels > 0]),
                                        _convex_hull(z[labels < 0]))
        if dist > 1e-12:
            normal = p - q
            offset = -float(normal @ (p + q)) / 2.0
        else:
            offset = -(lo + hi) / 2.0
    norm = float(np.hypot(*normal))
    if norm == 0.0:
        raise VerticalBoundaryError("degenerate separator (zero normal)")
    if abs(normal[1]) <= 1e-9 * norm:
        raise VerticalBoundaryError(
            "optimal hand separator is vertical; skip hand inversion here")
    # normal . z + offset = 0, back in original coordinates
    m = -normal[0] / normal[1]
    b = (-offset / normal[1]) * scale + center[1] - m * center[0]
    return ReflectionLine(m=float(m), b=float(b))


# ---------------------------------------------------------------------------
# World Frame Rotation
# ---------------------------------------------------------------------------

def rotate_world(seq: SensorSequence, euler_deg) -> SensorSequence:
    """Apply one explicit world rotation to every sensor pose: positions are
    left-multiplied and orientations left-composed by rot(euler_deg)."""
    r_aug = rot(euler_deg)
    out = seq.copy()
    lay = seq.layout_info
    for s in range(lay.sensor_count):
        pos = out.channels[:, lay.position_cols(s)]
        out.channels[:, lay.position_cols(s)] = pos @ r_aug.T
        eul = out.channels[:, lay.euler_cols(s)]
        rmats = euler_to_matrix(eul)
        out.channels[:, lay.euler_cols(s)] = matrix_to_euler(r_aug @ rmats)
    return out


def world_frame_rotation(seq: SensorSequence, theta_max: float,
                         rng: np.random.Generator) -> SensorSequence:
    """Rotate every sensor pose by one random augmentation matrix.

    Three Euler angles are drawn uniformly from [-theta_max, theta_max];
    labels are untouched.
    """
    if theta_max < 0:
        raise ValueError("theta_max must be >= 0")
    return rotate_world(seq, rng.uniform(-theta_max, theta_max, size=3))


# ---------------------------------------------------------------------------
# Hand Inversion
# ---------------------------------------------------------------------------

def hand_centroids(seq: SensorSequence) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame mean position of the left- and right-hand sensors."""
    lay = seq.layout_info
    left = np.mean([seq.positions(s) for s in lay.left], axis=0)
    right = np.mean([seq.positions(s) for s in lay.right], axis=0)
    return left, right


def fit_hand_reflection(seq: SensorSequence,
                        downsample: int = HAND_FIT_DOWNSAMPLE) -> ReflectionLine:
    """Fit the reflection line from the sequence's own (un-augmented) data."""
    left, right = hand_centroids(seq)
    return fit_reflection_line(left[::downsample, :2], right[::downsample, :2])


def hand_inversion(seq: SensorSequence,
                   line: ReflectionLine | None = None) -> SensorSequence:
    """Mirror the procedure across the hand-separating plane and swap hands.

    Positions have the intercept removed from y, are reflected by
    Ref3D(phi), and get the intercept back (z is preserved exactly).
    Orientations are right-multiplied by Ref3D(phi) and converted back to
    Euler angles; the resulting matrices are improper, which the extraction
    accepts.  Finally the left/right sensor channel blocks are exchanged.
    """
    if line is None:
        line = fit_hand_reflection(seq)
    ref3 = reflection_3d(line.phi)
    out = seq.copy()
    lay = seq.layout_info
    for s in range(lay.sensor_count):
        pos = out.channels[:, lay.position_cols(s)].copy()
        pos[:, 1] -= line.b
        pos = pos @ ref3.T
        pos[:, 1] += line.b
        out.channels[:, lay.position_cols(s)] = pos
        eul = out.channels[:, lay.euler_cols(s)]
        rmats = euler_to_matrix(eul)
        out.channels[:, lay.euler_cols(s)] = matrix_to_euler(rmats @ ref3)
    for ls, rs in zip(lay.left, lay.right):
        lcols = slice(ls * lay.block, (ls + 1) * lay.block)
        rcols = slice(rs * lay.block, (rs + 1) * lay.block)
        tmp = out.channels[:, lcols].copy()
        out.channels[:, lcols] = out.channels[:, rcols]
        out.channels[:, rcols] = tmp
    return out

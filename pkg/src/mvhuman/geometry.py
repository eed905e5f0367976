"""Pinhole cameras, DLT triangulation, Umeyama alignment and rotation utilities.

Conventions: pixels are (u, v) with u to the right and v down; the camera
looks along +z of its own frame. ``Camera.cam_to_world`` maps camera-frame
points to world; world-to-camera is always formed as (R^T, -R^T t).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BehindCameraError, DegenerateGeometryError, GeometryError

MIN_DEPTH = 1e-9
N_FREQ = 16
RAY_EMBED_DIM = 3 * (1 + 2 * N_FREQ)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def contains(self, px):
        px = np.asarray(px)
        return (px[..., 0] > 0) & (px[..., 0] < self.width) & (px[..., 1] > 0) & (px[..., 1] < self.height)


@dataclass(frozen=True)
class PoseSE3:
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("R is not a proper rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def inverse(self):
        return PoseSE3(self.R.T, -self.R.T @ self.t)

    def apply(self, pts):
        return np.asarray(pts) @ self.R.T + self.t

    def compose(self, other):
        """self after other."""
        return PoseSE3(self.R @ other.R, self.R @ other.t + self.t)


@dataclass(frozen=True)
class Camera:
    intrinsics: Intrinsics
    cam_to_world: PoseSE3

    @property
    def center(self):
        return self.cam_to_world.t

    @property
    def world_to_cam(self):
        return self.cam_to_world.inverse()

    def to_cam(self, pts_world):
        R, t = self.cam_to_world.R, self.cam_to_world.t
        return (np.asarray(pts_world) - t) @ R

    def to_world(self, pts_cam):
        return self.cam_to_world.apply(pts_cam)

    @property
    def P(self):
        w2c = self.world_to_cam
        return self.intrinsics.K @ np.hstack([w2c.R, w2c.t[:, None]])

    def to_dict(self):
        k = self.intrinsics
        return {
            "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "width": k.width, "height": k.height,
            "R": self.cam_to_world.R.reshape(-1).tolist(),
            "t": self.cam_to_world.t.tolist(),
            "convention": "cam_to_world",
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("convention", "cam_to_world") != "cam_to_world":
            raise ValueError(f"unsupported camera convention {d['convention']!r}")
        intr = Intrinsics(d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"])
        return cls(intr, PoseSE3(np.reshape(d["R"], (3, 3)), np.asarray(d["t"])))


@dataclass(frozen=True)
class Sim3:
    s: float
    R: np.ndarray
    t: np.ndarray

    def apply(self, pts):
        return self.s * np.asarray(pts) @ self.R.T + self.t


def project_cam(pts_cam, intr):
    pts_cam = np.asarray(pts_cam, dtype=float)
    z = pts_cam[..., 2]
    return np.stack([intr.fx * pts_cam[..., 0] / z + intr.cx, intr.fy * pts_cam[..., 1] / z + intr.cy], axis=-1)


def project(point_world, cam):
    pc = cam.to_cam(point_world)
    if np.any(pc[..., 2] <= MIN_DEPTH):
        raise BehindCameraError(f"point at camera depth {np.min(pc[..., 2]):.3g} is behind the camera")
    return project_cam(pc, cam.intrinsics)


def backproject_cam(pixel, depth, intr):
    pixel = np.asarray(pixel, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise GeometryError("depth must be positive")
    x = (pixel[..., 0] - intr.cx) / intr.fx * depth
    y = (pixel[..., 1] - intr.cy) / intr.fy * depth
    return np.stack([x, y, np.broadcast_to(depth, x.shape)], axis=-1)


def backproject(pixel, depth, cam):
    return cam.to_world(backproject_cam(pixel, depth, cam.intrinsics))


def fourier_ray_embedding(pixel, intr):
    """Unit camera-frame ray per pixel, then per axis [r, sin(2^k pi r), cos(2^k pi r)], k < 16."""
    pixel = np.asarray(pixel, dtype=float)
    ray = np.stack([(pixel[..., 0] - intr.cx) / intr.fx, (pixel[..., 1] - intr.cy) / intr.fy,
                    np.ones(pixel.shape[:-1])], axis=-1)
    ray /= np.linalg.norm(ray, axis=-1, keepdims=True)
    ang = ray[..., :, None] * (np.pi * 2.0 ** np.arange(N_FREQ))
    per_axis = np.concatenate([ray[..., :, None], np.sin(ang), np.cos(ang)], axis=-1)
    return per_axis.reshape(pixel.shape[:-1] + (RAY_EMBED_DIM,))


# -- SVD ---------------------------------------------------------------------

def jacobi_svd(a, tol=1e-12, max_sweeps=100):
    """One-sided (Hestenes) Jacobi SVD of a tall matrix: a = U diag(s) Vt.

    Column pairs are rotated until the largest normalised inner product in a
    sweep drops below ``tol``; singular values come back in descending order.
    """
    u = np.array(a, dtype=float)
    n = u.shape[1]
    v = np.eye(n)
    tiny = np.finfo(float).eps
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = u[:, i] @ u[:, i]
                beta = u[:, j] @ u[:, j]
                gamma = u[:, i] @ u[:, j]
                if alpha == 0.0 or beta == 0.0:
                    continue
                rel = abs(gamma) / np.sqrt(alpha * beta)
                off = max(off, rel)
                if rel <= tiny:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                ui, uj = u[:, i].copy(), u[:, j].copy()
                u[:, i], u[:, j] = c * ui - s * uj, s * ui + c * uj
                vi, vj = v[:, i].copy(), v[:, j].copy()
                v[:, i], v[:, j] = c * vi - s * vj, s * vi + c * vj
        if off < tol:
            break
    sv = np.linalg.norm(u, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, u, v = sv[order], u[:, order], v[:, order]
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(sv > 0, u / sv, 0.0)
    return u, sv, v.T


# -- triangulation ------------------------------------------------------------

DEGENERATE_RATIO = 0.99


class Triangulation(NamedTuple):
    point: np.ndarray
    residual_px: float
    singular_values: np.ndarray


def dlt_frame(observations):
    """Conditioning frame (c, d) with X = c + d Y: camera centroid and RMS center distance.

    A rigid motion of the whole rig moves c with it and leaves d unchanged, so
    the conditioned system changes by an orthogonal map and the solution moves
    exactly with the rig.
    """
    centers = np.array([cam.center for cam, _ in observations])
    c = centers.mean(axis=0)
    d = float(np.sqrt(((centers - c) ** 2).sum(axis=1).mean()))
    return c, (d if d > 1e-12 else 1.0)


def dlt_system(observations, frame=None):
    c, d = frame if frame is not None else (np.zeros(3), 1.0)
    N = np.eye(4)
    N[:3, :3] *= d
    N[:3, 3] = c
    rows = []
    for cam, px in observations:
        P = cam.P @ N
        u, v = float(px[0]), float(px[1])
        for r in (u * P[2] - P[0], v * P[2] - P[1]):
            rows.append(r / np.linalg.norm(r))
    return np.array(rows)


def triangulate_dlt(observations):
    """Linear triangulation from >= 2 (Camera, pixel) pairs via the SVD null vector."""
    if len(observations) < 2:
        raise GeometryError("triangulation needs at least two observations")
    c, d = dlt_frame(observations)
    A = dlt_system(observations, (c, d))
    _, sv, vt = jacobi_svd(A)
    if sv[2] <= 1e-12 * sv[0] or sv[3] / sv[2] > DEGENERATE_RATIO:
        raise DegenerateGeometryError(f"rank-deficient DLT system (singular values {sv})")
    X = vt[-1]
    if abs(X[3]) < 1e-12 * np.linalg.norm(X):
        raise DegenerateGeometryError("homogeneous coordinate vanished (point at infinity)")
    point = c + d * X[:3] / X[3]
    errs = []
    for cam, px in observations:
        pc = cam.to_cam(point)
        errs.append(np.linalg.norm(project_cam(pc, cam.intrinsics) - np.asarray(px, dtype=float)))
    return Triangulation(point, float(np.mean(errs)), sv)


# -- alignment ----------------------------------------------------------------

def umeyama_align(src, dst, with_scale=True):
    """Least-squares s, R, t with s R src + t ~ dst; reflections are excluded."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("src and dst must both be N x 3")
    n = src.shape[0]
    if n < 3:
        raise DegenerateGeometryError("alignment needs at least three points")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    spread = np.linalg.svd(xs, compute_uv=False)
    if spread[1] <= 1e-10 * max(spread[0], 1e-300):
        raise DegenerateGeometryError("source points are collinear or coincident")
    cov = xd.T @ xs / n
    U, D, Vt = np.linalg.svd(cov)
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = (U * S) @ Vt
    s = float((D * S).sum() / ((xs * xs).sum() / n)) if with_scale else 1.0
    return Sim3(s, R, mu_d - s * R @ mu_s)


# -- rotations ----------------------------------------------------------------

def rotation_angle_deg(Ra, Rb):
    """Geodesic angle of Ra^T Rb in degrees.

    Equal to arccos((tr - 1) / 2) but evaluated with atan2 so that tiny angles
    keep full precision.
    """
    M = np.asarray(Ra).T @ np.asarray(Rb)
    cos = np.clip((np.trace(M) - 1.0) / 2.0, -1.0, 1.0)
    w = np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    sin = 0.5 * np.linalg.norm(w)
    return float(np.degrees(np.arctan2(sin, cos)))


def axis_angle(vec):
    """Rodrigues map from an axis-angle 3-vector (radians) to a rotation matrix."""
    vec = np.asarray(vec, dtype=float)
    theta = np.linalg.norm(vec)
    if theta < 1e-15:
        return np.eye(3)
    k = vec / theta
    Kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * Kx + (1 - np.cos(theta)) * Kx @ Kx


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    R = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
    u, _, vt = np.linalg.svd(R)
    return u @ vt


def look_at(center, target, up=(0.0, 0.0, 1.0)):
    """Camera-to-world pose at ``center`` whose +z axis points at ``target`` (image v runs down)."""
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    if np.linalg.norm(x) < 1e-9:
        raise GeometryError("viewing direction parallel to up vector")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return PoseSE3(np.stack([x, y, z], axis=1), center)

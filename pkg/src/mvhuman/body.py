"""A 13-joint articulated skeleton with a 4-coefficient bone-length shape space.

Canonical body frame is z-up. Joint 0 is the pelvis root; its rotation is the
global orientation. Each bone is rotated by the accumulated rotation of its
parent joint, so leaf rotations (ankles, wrists) do not move any joint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ShapeRangeError
from .geometry import backproject_cam

JOINT_NAMES = (
    "pelvis",
    "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle",
    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
)
PARENTS = (-1, 0, 0, 1, 2, 3, 4, 0, 0, 7, 8, 9, 10)
N_JOINTS = len(JOINT_NAMES)
N_BETA = 4
# shoulders, elbows, wrists, hips, knees, ankles
COMMON12 = tuple(range(1, 13))
VERTEX_OFFSET = 0.10
MEAN_DIST = 5.0

_REST = np.array([
    [0.0, 0.0, 0.0],
    [0.10, 0.0, -0.06], [-0.10, 0.0, -0.06],
    [0.01, 0.0, -0.42], [-0.01, 0.0, -0.42],
    [0.0, -0.02, -0.40], [0.0, -0.02, -0.40],
    [0.18, 0.0, 0.50], [-0.18, 0.0, 0.50],
    [0.05, 0.0, -0.27], [-0.05, 0.0, -0.27],
    [0.02, 0.05, -0.25], [-0.02, 0.05, -0.25],
])

# rows: overall size, leg/torso ratio, arm length, width; columns: bones 1..12
_SHAPE = np.zeros((N_BETA, N_JOINTS - 1))
_SHAPE[0, :] = 0.05
_SHAPE[1, [2, 3, 4, 5]] = 0.04
_SHAPE[1, [6, 7]] = -0.03
_SHAPE[2, [8, 9, 10, 11]] = 0.05
_SHAPE[3, [0, 1]] = 0.08
_SHAPE[3, [6, 7]] = 0.04


@dataclass(frozen=True)
class KinematicTree:
    parents: tuple = PARENTS
    rest_offsets: np.ndarray = field(default_factory=lambda: _REST.copy())
    shape_basis: np.ndarray = field(default_factory=lambda: _SHAPE.copy())

    def __post_init__(self):
        roots = [i for i, p in enumerate(self.parents) if p < 0]
        if roots != [0]:
            raise ValueError("tree must have exactly one root at index 0")
        if any(p >= i for i, p in enumerate(self.parents) if i > 0):
            raise ValueError("parent index must precede child index")
        if np.any(np.linalg.norm(self.rest_offsets[1:], axis=1) <= 0):
            raise ValueError("rest bone lengths must be positive")

    @property
    def n_joints(self):
        return len(self.parents)

    @property
    def bone_normals(self):
        n = np.cross(self.rest_offsets[1:], np.array([0.0, 1.0, 0.0]))
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def shaped_lengths(self, beta):
        scale = 1.0 + np.asarray(beta, dtype=float) @ self.shape_basis
        return np.linalg.norm(self.rest_offsets[1:], axis=1) * scale


DEFAULT_TREE = KinematicTree()


@dataclass
class BodyParams:
    theta: np.ndarray
    beta: np.ndarray
    dist: float = MEAN_DIST
    transl: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_dict(self):
        return {
            "theta": self.theta.reshape(-1, 9).tolist(),
            "beta": np.asarray(self.beta).tolist(),
            "dist": float(self.dist),
            "transl": np.asarray(self.transl).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.reshape(d["theta"], (-1, 3, 3)), np.asarray(d["beta"], dtype=float),
                   float(d["dist"]), np.asarray(d["transl"], dtype=float))

    def copy(self):
        return BodyParams(self.theta.copy(), self.beta.copy(), float(self.dist), self.transl.copy())


def mean_params(tree=DEFAULT_TREE):
    return BodyParams(np.tile(np.eye(3), (tree.n_joints, 1, 1)), np.zeros(N_BETA), MEAN_DIST, np.zeros(3))


def fk_var(tree, theta, beta, with_vertices=False):
    """Differentiable forward kinematics on ``Var`` inputs.

    Returns root-relative joints (J x 3) and, if requested, the 24 surface
    samples: two per bone at the bone midpoint offset +-10 cm along a fixed
    canonical normal.
    """
    theta, beta = ad.as_var(theta), ad.as_var(beta)
    scale = 1.0 + ad.matmul(beta, tree.shape_basis)
    if np.any(scale.data <= 0):
        raise ShapeRangeError(f"shape coefficients give non-positive bone lengths: {scale.data.min():.3g}")
    offsets = ad.mul(tree.rest_offsets[1:], ad.reshape(scale, (-1, 1)))
    rots = [theta[0]]
    pos = [ad.Var(np.zeros(3))]
    verts = []
    normals = tree.bone_normals
    for k in range(1, tree.n_joints):
        j = tree.parents[k]
        off = offsets[k - 1]
        pos.append(pos[j] + ad.matmul(rots[j], off))
        rots.append(ad.matmul(rots[j], theta[k]))
        if with_vertices:
            mid = pos[j] + ad.matmul(rots[j], off * 0.5)
            side = ad.matmul(rots[j], normals[k - 1] * VERTEX_OFFSET)
            verts.extend([mid + side, mid - side])
    joints = ad.stack(pos, axis=0)
    if with_vertices:
        return joints, ad.stack(verts, axis=0)
    return joints


def forward_kinematics(tree, params, with_vertices=False):
    out = fk_var(tree, params.theta, params.beta, with_vertices)
    if with_vertices:
        return out[0].data, out[1].data
    return out.data


def body_vertices(tree, params):
    return forward_kinematics(tree, params, with_vertices=True)[1]


def place_in_camera(joints_rel, pixel, dist, intr):
    """Root translation = back-projection of the detection pixel at depth ``dist``."""
    return np.asarray(joints_rel) + backproject_cam(pixel, dist, intr)


def params_in_camera(world_params, cam):
    """Re-express world-frame body parameters in a camera frame."""
    theta = world_params.theta.copy()
    theta[0] = cam.cam_to_world.R.T @ theta[0]
    transl = cam.to_cam(world_params.transl)
    return BodyParams(theta, world_params.beta.copy(), float(transl[2]), transl)


def world_joints(tree, params, with_vertices=False):
    """World-frame joints for parameters whose theta[0] and transl are world-frame."""
    if with_vertices:
        j, v = forward_kinematics(tree, params, True)
        return j + params.transl, v + params.transl
    return forward_kinematics(tree, params) + params.transl

"""Human head: context grid, multi-view injection, cross-attention decoding,
parameter regression, and the supervision losses.

All losses return raw (unweighted) components; ``total_loss`` applies the
weights and the 2D curriculum.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from . import body as B
from .autodiff import Var
from .geometry import MIN_DEPTH, RAY_EMBED_DIM, fourier_ray_embedding
from .nn import MLP, Linear, Module, MultiHeadAttention, make_rng

FOCAL_CLAMP = 1e-6
ALPHA_INIT = -3.5
TWO_D_TERMS = ("j2d", "v2d", "crossview_j2d")


@dataclass
class LossWeights:
    bce: float = 0.01
    offset: float = 1.0
    rotmat: float = 0.1
    shape: float = 1.0
    dist: float = 1.0
    transl: float = 1.0
    j3d: float = 100.0
    v3d: float = 100.0
    j2d: float = 1.0
    v2d: float = 1.0
    assign: float = 1.0
    contra: float = 1.0
    crossview_j3d: float = 10.0
    crossview_j2d: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be non-negative")

    def as_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass
class HeadConfig:
    dim: int = 32
    heads: int = 4
    hidden: int = 64
    scene_dim: int = 8
    n_joints: int = B.N_JOINTS
    seed: int = 1


def inv_softplus(y):
    return float(y + np.log(-np.expm1(-y)))


class ParamVars(NamedTuple):
    theta: Var   # J x 3 x 3
    beta: Var    # 4
    dist: Var    # scalar
    transl: Var  # 3

    def to_params(self):
        return B.BodyParams(self.theta.data.copy(), self.beta.data.copy(),
                            float(self.dist.data), self.transl.data.copy())


class HumanHead(Module):
    def __init__(self, cfg=None):
        cfg = cfg or HeadConfig()
        self.cfg = cfg
        rng = make_rng(cfg.seed)
        D, J = cfg.dim, cfg.n_joints
        self.scene_proj = Linear(cfg.scene_dim, D, rng, bias=False)
        self.ctx_proj = Linear(2 * D + RAY_EMBED_DIM, D, rng)
        self.det_head = Linear(D, 1, rng)
        self.off_head = Linear(D, 2, rng)
        self.alpha = ad.parameter(np.array(ALPHA_INIT))
        self.proj_kv = Linear(D, D, rng)
        self.proj_q = Linear(D, D, rng)
        self.det_proj = Linear(D + 9 * J + B.N_BETA + 1, D, rng)
        self.decoder = MultiHeadAttention(D, cfg.heads, rng)
        self.m_pose = MLP(D, cfg.hidden, 9 * J, rng)
        self.m_shape = MLP(D, cfg.hidden, B.N_BETA, rng)
        self.m_cam = MLP(D, cfg.hidden, 1, rng)
        for m in (self.m_pose, self.m_shape, self.m_cam):
            m.fc2.zero_()


# -- stages -----------------------------------------------------------------------

def cell_centers(grid, intr):
    cw, ch = intr.width / grid, intr.height / grid
    uu, vv = np.meshgrid((np.arange(grid) + 0.5) * cw, (np.arange(grid) + 0.5) * ch)
    return np.stack([uu, vv], axis=-1)


def align_scene_grid(scene_feats, grid):
    """Nearest-index resampling of an S x S scene grid onto the G x G human grid."""
    S = scene_feats.shape[0]
    if S % grid:
        raise ValueError(f"scene grid {S} is not an integer multiple of human grid {grid}")
    r = S // grid
    idx = np.arange(grid) * r + r // 2
    return scene_feats[np.ix_(idx, idx)]


def build_context(human_feats, scene_feats, intr, head):
    """Per-cell ctx_proj([human; scene_proj(scene); ray]) flattened to (G*G) x D."""
    human_feats = np.asarray(human_feats, dtype=float)
    G = human_feats.shape[0]
    scene = align_scene_grid(np.asarray(scene_feats, dtype=float), G)
    ray = fourier_ray_embedding(cell_centers(G, intr), intr)
    sp = head.scene_proj(scene.reshape(G * G, -1))
    cat = ad.concat([ad.as_var(human_feats.reshape(G * G, -1)), sp, ad.as_var(ray.reshape(G * G, -1))], axis=1)
    return head.ctx_proj(cat)


def inject_multiview(C, f_agg, head):
    """C~ = C + sigmoid(alpha) * Proj_kv(f_agg) on every cell; q_mv = Proj_q(f_agg)."""
    gate = ad.sigmoid(head.alpha)
    delta = head.proj_kv(f_agg) * gate
    return ad.as_var(C) + ad.reshape(delta, (1, -1)), head.proj_q(f_agg)


def detection_query(z, means, head):
    theta = np.asarray(means.theta).reshape(-1)
    extra = np.concatenate([theta, np.asarray(means.beta), [float(means.dist)]])
    return head.det_proj(ad.concat([ad.as_var(z), ad.as_var(extra)], axis=0))


def decode(q_det, q_mv, C_tilde, head):
    """Cross-attend [q_det; q_mv] over the context cells; q_final is the sum of both outputs."""
    q = ad.stack([ad.as_var(q_det), ad.as_var(q_mv)], axis=0)
    att, _ = head.decoder(q, C_tilde, C_tilde)
    return ad.vsum(q + att, axis=0)


def predict_params(q_final, means, head, pixel, intr):
    """Additive residuals on ``means``; rotations projected back onto SO(3)."""
    J = head.cfg.n_joints
    dtheta = ad.reshape(head.m_pose(q_final), (J, 3, 3))
    theta = ad.polar(dtheta + np.asarray(means.theta))
    beta = head.m_shape(q_final) + np.asarray(means.beta)
    dist = ad.softplus(head.m_cam(q_final)[0] + inv_softplus(float(means.dist)))
    ray = np.array([(pixel[0] - intr.cx) / intr.fx, (pixel[1] - intr.cy) / intr.fy, 1.0])
    transl = dist * ray
    return ParamVars(theta, beta, dist, transl)


def predict_heat(C, head):
    """Per-cell detection probability and sub-cell offset from a context grid."""
    G = int(round(np.sqrt(C.shape[0])))
    heat = ad.sigmoid(head.det_head(C)).reshape(G, G)
    off = head.off_head(C).reshape(G, G, 2)
    return heat, off


# -- losses ------------------------------------------------------------------------

def loss_detection(pred_heat, gt_heat):
    """Modified focal loss normalized by the number of peak cells (1 if none)."""
    p = ad.clip(ad.as_var(pred_heat), FOCAL_CLAMP, 1.0 - FOCAL_CLAMP)
    gt = np.asarray(gt_heat, dtype=float)
    pos = gt >= 1.0
    n_pos = max(int(pos.sum()), 1)
    one_m = 1.0 - p
    pos_term = ad.square(one_m) * ad.log(p)
    neg_term = ad.square(p) * ad.log(one_m) * ((1.0 - gt) ** 4)
    total = ad.vsum(ad.mul(pos_term, pos.astype(float))) + ad.vsum(ad.mul(neg_term, (~pos).astype(float)))
    return total * (-1.0 / n_pos)


def loss_offset(pred_offset, gt_offset, gt_heat):
    """Mean over peak cells of the per-cell L1 offset error."""
    pos = np.asarray(gt_heat) >= 1.0
    if not pos.any():
        return Var(0.0)
    diff = ad.vabs(ad.as_var(pred_offset) - np.asarray(gt_offset))
    return ad.vsum(ad.mul(diff, pos[..., None].astype(float))) * (1.0 / pos.sum())


def param_terms(pred, gt):
    """Raw L1 terms: rotation matrices element-wise, shape, dist, translation."""
    return {
        "rotmat": ad.vsum(ad.vabs(ad.as_var(pred.theta) - np.asarray(gt.theta))),
        "shape": ad.vsum(ad.vabs(ad.as_var(pred.beta) - np.asarray(gt.beta))),
        "dist": ad.vabs(ad.as_var(pred.dist) - float(gt.dist)),
        "transl": ad.vsum(ad.vabs(ad.as_var(pred.transl) - np.asarray(gt.transl))),
    }


def loss_param(pred, gt, w):
    t = param_terms(pred, gt)
    return t["rotmat"] * w.rotmat + t["shape"] * w.shape + t["dist"] * w.dist + t["transl"] * w.transl


def _root_rel_l1(pred, gt, pred_root, gt_root):
    """Mean over points of the L1 error after subtracting each side's pelvis."""
    pred = ad.as_var(pred) - ad.reshape(ad.as_var(pred_root), (1, 3))
    gt = np.asarray(gt) - np.asarray(gt_root).reshape(1, 3)
    return ad.vsum(ad.vabs(pred - gt)) * (1.0 / gt.shape[0])


def terms_3d(pred_joints, gt_joints, pred_verts=None, gt_verts=None):
    pj = ad.as_var(pred_joints)
    gj = np.asarray(gt_joints)
    out = {"j3d": _root_rel_l1(pj, gj, pj[0], gj[0])}
    if pred_verts is not None:
        out["v3d"] = _root_rel_l1(pred_verts, gt_verts, pj[0], gj[0])
    return out


def loss_3d(pred_joints, gt_joints, w, pred_verts=None, gt_verts=None):
    t = terms_3d(pred_joints, gt_joints, pred_verts, gt_verts)
    out = t["j3d"] * w.j3d
    if "v3d" in t:
        out = out + t["v3d"] * w.v3d
    return out


def project_var(pts_cam, intr):
    pts = ad.as_var(pts_cam)
    z = pts[:, 2]
    u = pts[:, 0] / z * intr.fx + intr.cx
    v = pts[:, 1] / z * intr.fy + intr.cy
    return ad.stack([u, v], axis=1)


def masked_2d_l1(pred_cam, gt_2d, intr):
    """Mean over valid points of per-point L1 pixel error; (term, any_valid).

    A point is valid when its GT lies inside the image and the prediction has
    positive depth.
    """
    pred = ad.as_var(pred_cam)
    gt_2d = np.asarray(gt_2d, dtype=float)
    valid = intr.contains(gt_2d) & (pred.data[:, 2] > MIN_DEPTH)
    if not valid.any():
        return Var(0.0), False
    idx = np.flatnonzero(valid)
    proj = project_var(pred[idx], intr)
    return ad.vsum(ad.vabs(proj - gt_2d[idx])) * (1.0 / len(idx)), True


def terms_2d(pred_joints_cam, gt_joints_2d, intr, pred_verts_cam=None, gt_verts_2d=None):
    out = {"j2d": masked_2d_l1(pred_joints_cam, gt_joints_2d, intr)[0]}
    if pred_verts_cam is not None:
        out["v2d"] = masked_2d_l1(pred_verts_cam, gt_verts_2d, intr)[0]
    return out


def loss_2d(pred_joints_cam, gt_joints_2d, intr, w, pred_verts_cam=None, gt_verts_2d=None):
    t = terms_2d(pred_joints_cam, gt_joints_2d, intr, pred_verts_cam, gt_verts_2d)
    out = t["j2d"] * w.j2d
    if "v2d" in t:
        out = out + t["v2d"] * w.v2d
    return out


def crossview_terms(pred_joints_ref, ref_cam, targets):
    """Move reference-view camera-frame joints into each other view and compare.

    ``targets``: list of (camera, gt camera-frame joints J x 3, gt pixels J x 2).
    Returns averaged {"crossview_j3d", "crossview_j2d"} or None without targets.
    """
    if not targets:
        return None
    pj = ad.as_var(pred_joints_ref)
    Rr, tr = ref_cam.cam_to_world.R, ref_cam.cam_to_world.t
    world = ad.matmul(pj, Rr.T) + tr
    j3d, j2d = [], []
    for cam, gt_cam, gt_px in targets:
        Rv, tv = cam.cam_to_world.R, cam.cam_to_world.t
        pv = ad.matmul(world - tv, Rv)
        j3d.append(_root_rel_l1(pv, gt_cam, pv[0], np.asarray(gt_cam)[0]))
        j2d.append(masked_2d_l1(pv, gt_px, cam.intrinsics)[0])
    n = 1.0 / len(targets)
    return {"crossview_j3d": sum(j3d[1:], j3d[0]) * n, "crossview_j2d": sum(j2d[1:], j2d[0]) * n}


def loss_crossview_reproj(pred_joints_ref, ref_cam, targets, w):
    t = crossview_terms(pred_joints_ref, ref_cam, targets)
    if t is None:
        return Var(0.0)
    return t["crossview_j3d"] * w.crossview_j3d + t["crossview_j2d"] * w.crossview_j2d


def total_loss(terms, w, epoch=None, curriculum_epoch=2):
    """Weighted sum over the named raw terms in a fixed order.

    2D terms are dropped while ``epoch < curriculum_epoch``.
    """
    wd = w.as_dict()
    total = Var(0.0)
    for name in wd:
        if name not in terms:
            continue
        lam = wd[name]
        if epoch is not None and epoch < curriculum_epoch and name in TWO_D_TERMS:
            lam = 0.0
        if lam == 0.0:
            continue
        total = total + ad.as_var(terms[name]) * lam
    return total

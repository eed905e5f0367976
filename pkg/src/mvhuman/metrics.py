"""Human pose metrics under three alignment regimes, camera metrics, and
association scores.

Alignment of camera sets uses the camera centers when at least three of them
are non-collinear; otherwise each camera also contributes its three axis tips
(center + L * column of R), with L = 1 m for SE(3) and L = RMS center spread of
each set for Sim(3), so the alignment stays well posed for one or two cameras. Such reports carry
``low_confidence = True`` (and an INFO log line): every metric is still a
number, but the camera alignment rests on the predicted orientations too.

The closed-form fits minimize squared error while the metrics report mean
Euclidean error. Each coarser alignment therefore also tries the transform of
the next finer regime (SE(3) is a special Sim(3); the group fit is a candidate
for every person) and keeps whichever gives the smaller reported error. This
makes PA <= GA <= W and s-TE <= TE hold exactly.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import body as B
from .errors import AlignmentError, DegenerateGeometryError
from .geometry import Sim3, rotation_angle_deg, umeyama_align
from .hungarian import hungarian_match

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("w_mpjpe", "ga_mpjpe", "pa_mpjpe", "te", "s_te", "ae", "rra_at_10", "cca_at_10", "s_cca_at_10")


@dataclass
class MetricReport:
    w_mpjpe: float
    ga_mpjpe: float
    pa_mpjpe: float
    te: float
    s_te: float
    ae: float
    rra_at_10: float
    cca_at_10: float
    s_cca_at_10: float
    low_confidence: bool = field(default=False, compare=False)   # camera alignment fell back to axis points

    def as_dict(self):
        return {k: getattr(self, k) for k in METRIC_COLUMNS}


@dataclass
class EvalPair:
    pred: object   # WorldScene
    gt: object     # WorldScene
    matches: list  # (pred index, gt index)
    joints: tuple = tuple(range(B.N_JOINTS))


# -- alignment helpers --------------------------------------------------------------

def _noncollinear(pts):
    if len(pts) < 3:
        return False
    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    return sv[1] > 1e-6 * max(sv[0], 1e-12)


def _axis_points(cams, length):
    pts = []
    for c in cams:
        R, t = c.cam_to_world.R, c.cam_to_world.t
        pts.append(t)
        pts.extend(t + length * R[:, k] for k in range(3))
    return np.array(pts)


def _rms_spread(centers):
    if len(centers) < 2:
        return 1.0
    return float(np.sqrt(((centers - centers.mean(axis=0)) ** 2).sum(axis=1).mean()))


def align_cameras(pred_cams, gt_cams, with_scale):
    """Transform taking predicted camera layout onto GT (Sim3; s = 1 for SE3)."""
    if len(pred_cams) != len(gt_cams) or not pred_cams:
        raise AlignmentError("camera lists must be non-empty and of equal length")
    pc = np.array([c.center for c in pred_cams])
    gc = np.array([c.center for c in gt_cams])
    if _noncollinear(gc) and _noncollinear(pc):
        src, dst = pc, gc
    else:
        lp = _rms_spread(pc) if with_scale else 1.0
        lg = _rms_spread(gc) if with_scale else 1.0
        src, dst = _axis_points(pred_cams, lp), _axis_points(gt_cams, lg)
    try:
        return umeyama_align(src, dst, with_scale)
    except DegenerateGeometryError as exc:
        raise AlignmentError(f"camera alignment is degenerate: {exc}") from exc


def _mean_err(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1).mean())


def _best(candidates, P, G):
    """(error, transform) of the candidate with the lowest mean error; ties keep the first."""
    best = None
    for T in candidates:
        e = _mean_err(T.apply(P), G)
        if best is None or e < best[0]:
            best = (e, T)
    return best


# -- correspondence -------------------------------------------------------------------

def match_persons(pred, gt, transform=None):
    """Hungarian on pelvis distance (after ``transform`` of the prediction)."""
    if not pred.persons or not gt.persons:
        return []
    pp = np.array([p.joints[0] for p in pred.persons])
    if transform is not None:
        pp = transform.apply(pp)
    gp = np.array([p.joints[0] for p in gt.persons])
    cost = np.linalg.norm(pp[:, None] - gp[None], axis=-1)
    cols = hungarian_match(cost).cols
    return [(i, int(j)) for i, j in enumerate(cols) if j >= 0]


def make_pair(pred, gt, joints=None):
    T = align_cameras(pred.cameras, gt.cameras, with_scale=False)
    return EvalPair(pred, gt, match_persons(pred, gt, T), tuple(joints or range(B.N_JOINTS)))


def _stacked(pair):
    J = list(pair.joints)
    P = [pair.pred.persons[i].joints[J] for i, _ in pair.matches]
    G = [pair.gt.persons[j].joints[J] for _, j in pair.matches]
    return P, G


# -- human metrics ------------------------------------------------------------------

def w_mpjpe(pair):
    T = align_cameras(pair.pred.cameras, pair.gt.cameras, with_scale=False)
    P, G = _stacked(pair)
    if not P:
        return float("nan")
    return _mean_err(T.apply(np.concatenate(P)), np.concatenate(G))


def _group_transform(pair, P, G):
    """Sim(3) over all matched joints, or the camera-derived SE(3) when that scores lower."""
    if len(P) < 3:
        raise AlignmentError("group alignment needs at least 3 joints")
    try:
        S = umeyama_align(P, G, with_scale=True)
    except DegenerateGeometryError as exc:
        raise AlignmentError(str(exc)) from exc
    return _best([S, align_cameras(pair.pred.cameras, pair.gt.cameras, with_scale=False)], P, G)


def ga_mpjpe(pair):
    P, G = _stacked(pair)
    if not P:
        return float("nan")
    return _group_transform(pair, np.concatenate(P), np.concatenate(G))[0]


def pa_mpjpe(pair):
    """Mean over persons of the per-person Sim(3)-aligned error; degenerate persons are skipped."""
    P, G = _stacked(pair)
    if not P:
        return float("nan")
    try:
        group = [_group_transform(pair, np.concatenate(P), np.concatenate(G))[1]]
    except AlignmentError:
        group = []
    errs = []
    for p, g in zip(P, G):
        try:
            cands = [umeyama_align(p, g, with_scale=True)] + group
        except DegenerateGeometryError:
            continue
        errs.append(_best(cands, p, g)[0])
    return float(np.mean(errs)) if errs else float("nan")


# -- camera metrics -----------------------------------------------------------------

def relative_rotation_errors(pred_cams, gt_cams):
    out = []
    for i, j in itertools.combinations(range(len(gt_cams)), 2):
        Rp = pred_cams[i].cam_to_world.R.T @ pred_cams[j].cam_to_world.R
        Rg = gt_cams[i].cam_to_world.R.T @ gt_cams[j].cam_to_world.R
        out.append(rotation_angle_deg(Rp, Rg))
    return np.array(out)


def _center_alignments(pc, gc):
    """SE(3) and Sim(3) transforms for the camera centers (Sim(3) may fall back to SE(3))."""
    gcent = np.array([c.center for c in gc])
    pcent = np.array([c.center for c in pc])
    se3 = align_cameras(pc, gc, False)
    sim3 = _best([align_cameras(pc, gc, True), se3], pcent, gcent)[1]
    return se3, sim3, pcent, gcent


def camera_errors(pair):
    """(TE, s-TE, AE): center errors after SE(3)/Sim(3) alignment; mean relative-rotation error."""
    pc, gc = pair.pred.cameras, pair.gt.cameras
    if len(gc) < 2:
        return 0.0, 0.0, 0.0
    se3, sim3, pcent, gcent = _center_alignments(pc, gc)
    te = _mean_err(se3.apply(pcent), gcent)
    ste = _mean_err(sim3.apply(pcent), gcent)
    return te, ste, float(relative_rotation_errors(pc, gc).mean())


def rra(pair, tau_deg=10.0):
    errs = relative_rotation_errors(pair.pred.cameras, pair.gt.cameras)
    return float(np.mean(errs < tau_deg)) if errs.size else 1.0


def scene_scale(gt_cams):
    c = np.array([x.center for x in gt_cams])
    if len(c) < 2:
        return 1.0
    return float(max(np.linalg.norm(a - b) for a, b in itertools.combinations(c, 2)))


def cca(pair, tau_pct=10.0, scaled=False):
    pc, gc = pair.pred.cameras, pair.gt.cameras
    se3, sim3, pcent, gcent = _center_alignments(pc, gc)
    T = sim3 if scaled else se3
    err = np.linalg.norm(T.apply(pcent) - gcent, axis=1)
    return float(np.mean(err < tau_pct / 100.0 * scene_scale(gc)))


def evaluate(pred, gt, joints=None):
    pair = make_pair(pred, gt, joints)
    te, ste, ae = camera_errors(pair)
    low = not all(_noncollinear(np.array([c.center for c in cams])) for cams in (pred.cameras, gt.cameras))
    if low:
        log.info("fewer than 3 non-collinear cameras: alignment uses camera axes, metrics are low confidence")
    return MetricReport(w_mpjpe(pair), ga_mpjpe(pair), pa_mpjpe(pair), te, ste, ae,
                        rra(pair), cca(pair), cca(pair, scaled=True), low)


# -- association scores -------------------------------------------------------------

def association_accuracy(pred_ids, gt_ids):
    """Fraction of detections whose predicted cluster maps to their GT person
    under the overlap-maximizing one-to-one cluster matching."""
    pred_ids, gt_ids = np.asarray(pred_ids), np.asarray(gt_ids)
    if pred_ids.size == 0:
        return 1.0
    pc, gp = np.unique(pred_ids), np.unique(gt_ids)
    M = np.zeros((len(gp), len(pc)))
    np.add.at(M, (np.searchsorted(gp, gt_ids), np.searchsorted(pc, pred_ids)), 1.0)
    cols = hungarian_match(-M).cols
    return float(sum(M[r, c] for r, c in enumerate(cols) if c >= 0) / pred_ids.size)


def association_f1(pred_ids, gt_ids):
    """Pairwise F1 over detection pairs declared to be the same person."""
    pred_ids, gt_ids = np.asarray(pred_ids), np.asarray(gt_ids)
    iu = np.triu_indices(len(pred_ids), k=1)
    ps = (pred_ids[:, None] == pred_ids[None, :])[iu]
    gs = (gt_ids[:, None] == gt_ids[None, :])[iu]
    tp = float(np.sum(ps & gs))
    if ps.sum() == 0 and gs.sum() == 0:
        return 1.0
    denom = ps.sum() + gs.sum()
    return 2.0 * tp / denom if denom else 1.0


def transform_world(scene, T):
    """Apply a rigid/similarity transform to every camera and person of a WorldScene copy."""
    from .assembly import WorldPerson, WorldScene
    from .geometry import Camera, PoseSE3
    cams = [Camera(c.intrinsics, PoseSE3(T.R @ c.cam_to_world.R, T.apply(c.cam_to_world.t))) for c in scene.cameras]
    persons = [WorldPerson(p.person_id, T.apply(p.joints), p.ref_view, p.params, list(p.source_views), p.refined)
               for p in scene.persons]
    return WorldScene(cams, persons, scene.scale, list(scene.assignments))


__all__ = [
    "METRIC_COLUMNS", "MetricReport", "EvalPair", "Sim3", "align_cameras", "make_pair", "match_persons",
    "w_mpjpe", "ga_mpjpe", "pa_mpjpe", "camera_errors", "rra", "cca", "scene_scale", "evaluate",
    "association_accuracy", "association_f1", "transform_world",
]

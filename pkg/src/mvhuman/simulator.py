"""Synthetic multi-view, multi-person scenes.

The simulator stands in for the image backbones. It plants cameras on a ring,
posed skeletons with identities, and renders per-view detections carrying:

* a fused feature vector (identity signal mixed with view and geometry nuisance),
* a noisy monocular body estimate as a human branch would produce it, whose
  depth lives in a scale-ambiguous frame (true depth / planted scale),
* GT heatmap and sub-cell offset grids, and a metric depth grid per view.

Every random draw comes from one PCG64 stream seeded by ``spec.seed`` and is
consumed in a fixed order, so a spec maps to a bit-identical scene.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import body as B
from .errors import GeometryError
from .geometry import Camera, Intrinsics, PoseSE3, axis_angle, backproject_cam, look_at, project_cam
from .nn import make_rng

SCENE_FORMAT = "mvhuman.scene"
SCENE_VERSION = 1

# fixed projections shared by all scenes (independent of the scene seed)
_GEO_SEED = 20240601
BACKGROUND_DEPTH = 20.0
TORSO_RADIUS = 0.18
LIMB_RADIUS = 0.10


@dataclass
class SceneSpec:
    num_persons: int | list = field(default_factory=lambda: [2, 6])
    num_views: int = 4
    image_width: int = 640
    image_height: int = 480
    focal_range: tuple = (450.0, 550.0)
    ring_radius: float = 5.0
    radius_jitter: float = 0.5
    camera_height: float = 1.6
    height_jitter: float = 0.4
    azimuth_jitter_deg: float = 15.0
    person_spread: float = 1.5
    min_person_gap: float = 0.8
    max_joint_angle_deg: float = 45.0
    max_beta: float = 2.0
    pixel_noise: float = 1.0
    depth_noise: float = 0.05
    pose_noise_deg: float = 5.0
    cam_rot_noise_deg: float = 1.0
    cam_trans_noise: float = 0.05
    feature_dim: int = 32
    rho: float = 0.8
    sigma_f: float = 0.2
    occlusion_prob: float = 0.0
    global_scale: float = 1.3
    grid_size: int = 8
    depth_stride: int = 10
    scene_grid: int = 16
    scene_feature_dim: int = 8
    seed: int = 0

    def __post_init__(self):
        for name in ("pixel_noise", "depth_noise", "pose_noise_deg", "cam_rot_noise_deg",
                     "cam_trans_noise", "sigma_f"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not 1 <= self.num_views <= 8:
            raise ValueError("num_views must be in 1..8")
        if not 0.0 <= self.occlusion_prob <= 1.0:
            raise ValueError("occlusion_prob must lie in [0, 1]")
        if self.global_scale <= 0:
            raise ValueError("global_scale must be positive")
        if self.image_width % self.depth_stride or self.image_height % self.depth_stride:
            raise ValueError("depth_stride must divide the image size")
        if isinstance(self.num_persons, (list, tuple)):
            self.num_persons = [int(x) for x in self.num_persons]
            if len(self.num_persons) != 2 or not 1 <= self.num_persons[0] <= self.num_persons[1]:
                raise ValueError("num_persons range must be [lo, hi] with 1 <= lo <= hi")
        elif int(self.num_persons) < 1:
            raise ValueError("num_persons must be >= 1")
        self.focal_range = tuple(float(f) for f in self.focal_range)

    @classmethod
    def noiseless(cls, **kw):
        base = dict(pixel_noise=0.0, depth_noise=0.0, pose_noise_deg=0.0, cam_rot_noise_deg=0.0,
                    cam_trans_noise=0.0, rho=1.0, sigma_f=0.0, occlusion_prob=0.0)
        base.update(kw)
        return cls(**base)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["focal_range"] = list(self.focal_range)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown scene spec keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Detection:
    view_id: int
    index: int
    person_id: int
    pixel: np.ndarray
    confidence: float
    feature: np.ndarray
    mono: B.BodyParams  # camera-frame estimate; dist/transl in the human branch's scale

    def to_dict(self):
        return {"view_id": self.view_id, "index": self.index, "person_id": self.person_id,
                "pixel": self.pixel.tolist(), "confidence": float(self.confidence),
                "feature": self.feature, "mono": self.mono.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["view_id"]), int(d["index"]), int(d["person_id"]),
                   np.asarray(d["pixel"], dtype=float), float(d["confidence"]),
                   np.asarray(d["feature"], dtype=float), B.BodyParams.from_dict(d["mono"]))


@dataclass
class ViewData:
    view_id: int
    detections: list
    heatmap: np.ndarray
    offsets: np.ndarray
    depth_grid: np.ndarray

    def to_dict(self):
        return {"view_id": self.view_id, "detections": [d.to_dict() for d in self.detections],
                "heatmap": self.heatmap, "offsets": self.offsets, "depth_grid": self.depth_grid}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["view_id"]), [Detection.from_dict(x) for x in d["detections"]],
                   np.asarray(d["heatmap"], dtype=float), np.asarray(d["offsets"], dtype=float),
                   np.asarray(d["depth_grid"], dtype=float))


@dataclass
class PersonGT:
    person_id: int
    params: B.BodyParams  # world frame: theta[0] is world orientation, transl world pelvis
    joints: np.ndarray
    vertices: np.ndarray

    def to_dict(self):
        return {"person_id": self.person_id, "params": self.params.to_dict(),
                "joints": self.joints, "vertices": self.vertices}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["person_id"]), B.BodyParams.from_dict(d["params"]),
                   np.asarray(d["joints"], dtype=float), np.asarray(d["vertices"], dtype=float))


@dataclass
class GroundTruthScene:
    spec: SceneSpec
    cameras: list          # GT cameras
    pred_cameras: list     # what the scene branch reports (perturbed GT)
    persons: list
    views: list

    # -- convenience -------------------------------------------------------
    @property
    def num_views(self):
        return len(self.cameras)

    def person(self, pid):
        for p in self.persons:
            if p.person_id == pid:
                return p
        raise KeyError(pid)

    def detections(self):
        """All detections, view-major then index order."""
        return [d for v in self.views for d in v.detections]

    def correspondence(self):
        out = {}
        for d in self.detections():
            out.setdefault(d.person_id, []).append((d.view_id, d.index))
        return out

    def counts(self):
        return [len(v.detections) for v in self.views]

    def gt_in_view(self, pid, view_id):
        """GT camera-frame params, joints and 24 surface points of a person in a view."""
        p = self.person(pid)
        cam = self.cameras[view_id]
        params = B.params_in_camera(p.params, cam)
        return params, cam.to_cam(p.joints), cam.to_cam(p.vertices)

    def to_dict(self):
        return {
            "format": SCENE_FORMAT, "version": SCENE_VERSION,
            "spec": self.spec.to_dict(),
            "cameras": [c.to_dict() for c in self.cameras],
            "pred_cameras": [c.to_dict() for c in self.pred_cameras],
            "persons": [p.to_dict() for p in self.persons],
            "views": [v.to_dict() for v in self.views],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != SCENE_FORMAT:
            raise ValueError(f"not a scene document: format={d.get('format')!r}")
        if d.get("version") != SCENE_VERSION:
            raise ValueError(f"unsupported scene version {d.get('version')}")
        return cls(SceneSpec.from_dict(d["spec"]),
                   [Camera.from_dict(c) for c in d["cameras"]],
                   [Camera.from_dict(c) for c in d["pred_cameras"]],
                   [PersonGT.from_dict(p) for p in d["persons"]],
                   [ViewData.from_dict(v) for v in d["views"]])


# -- sampling ------------------------------------------------------------------

def _sample_count(spec, rng):
    if isinstance(spec.num_persons, list):
        lo, hi = spec.num_persons
        return int(rng.integers(lo, hi + 1))
    return int(spec.num_persons)


def _sample_positions(n, spec, rng):
    pts = []
    for _ in range(10000):
        if len(pts) == n:
            break
        r = spec.person_spread * np.sqrt(rng.uniform())
        a = rng.uniform(0, 2 * np.pi)
        p = np.array([r * np.cos(a), r * np.sin(a)])
        if all(np.linalg.norm(p - q) >= spec.min_person_gap for q in pts):
            pts.append(p)
    if len(pts) < n:
        raise GeometryError(f"cannot place {n} persons {spec.min_person_gap} m apart")
    return np.array(pts)


def _random_axis(rng):
    a = rng.normal(size=3)
    return a / np.linalg.norm(a)


def _sample_person(pid, xy, spec, rng, tree):
    theta = np.empty((tree.n_joints, 3, 3))
    theta[0] = axis_angle([0.0, 0.0, rng.uniform(-np.pi, np.pi)])
    lim = np.radians(spec.max_joint_angle_deg)
    for k in range(1, tree.n_joints):
        theta[k] = axis_angle(_random_axis(rng) * rng.uniform(-lim, lim))
    beta = rng.uniform(-spec.max_beta, spec.max_beta, size=B.N_BETA)
    rel = B.forward_kinematics(tree, B.BodyParams(theta, beta))
    height = -rel[:, 2].min() + 0.05
    params = B.BodyParams(theta, beta, B.MEAN_DIST, np.array([xy[0], xy[1], height]))
    joints, verts = B.world_joints(tree, params, with_vertices=True)
    return PersonGT(pid, params, joints, verts)


def _sample_cameras(spec, rng, centroid):
    cams = []
    base = rng.uniform(0, 2 * np.pi)
    jit = np.radians(spec.azimuth_jitter_deg)
    for v in range(spec.num_views):
        az = base + 2 * np.pi * v / spec.num_views + rng.uniform(-jit, jit)
        r = spec.ring_radius + rng.uniform(-spec.radius_jitter, spec.radius_jitter)
        h = spec.camera_height + rng.uniform(-spec.height_jitter, spec.height_jitter)
        center = np.array([centroid[0] + r * np.cos(az), centroid[1] + r * np.sin(az), h])
        f = rng.uniform(*spec.focal_range)
        intr = Intrinsics(f, f, spec.image_width / 2, spec.image_height / 2,
                          spec.image_width, spec.image_height)
        cams.append(Camera(intr, look_at(center, centroid)))
    return cams


def _perturb_camera(cam, spec, rng):
    R = cam.cam_to_world.R @ axis_angle(_random_axis(rng) * np.radians(spec.cam_rot_noise_deg) * abs(rng.normal()))
    t = cam.cam_to_world.t + rng.normal(size=3) * spec.cam_trans_noise
    if spec.cam_rot_noise_deg == 0:
        return Camera(cam.intrinsics, PoseSE3(cam.cam_to_world.R.copy(), t))  # re-orthonormalizing would cost ulps
    u, _, vt = np.linalg.svd(R)
    return Camera(cam.intrinsics, PoseSE3(u @ vt, t))


# -- rendering ------------------------------------------------------------------

def _grid_cells(spec):
    return spec.image_width / spec.grid_size, spec.image_height / spec.grid_size


def render_heatmap(pixels, spec):
    """Gaussian splats (sigma one cell, peak 1) and sub-cell offsets at center cells.

    Offsets are in cell units: pixel / cell_size - (cell_index + 0.5), stored as
    (du, dv) at [row, col] = [v cell, u cell].
    """
    g = spec.grid_size
    cw, ch = _grid_cells(spec)
    heat = np.zeros((g, g))
    off = np.zeros((g, g, 2))
    rows, cols = np.mgrid[0:g, 0:g]
    for px in pixels:
        cu = min(int(px[0] // cw), g - 1)
        cv = min(int(px[1] // ch), g - 1)
        heat = np.maximum(heat, np.exp(-((cols - cu) ** 2 + (rows - cv) ** 2) / 2.0))
        off[cv, cu] = [px[0] / cw - (cu + 0.5), px[1] / ch - (cv + 0.5)]
    return heat, off


def _segment_dist(p, a, b):
    """Distances from points p (M x 2) to segments a[k]-b[k] (S x 2): M x S."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    rel = p[:, None, :] - a[None]
    t = np.einsum("msj,sj->ms", rel, ab) / np.where(denom > 1e-12, denom, 1.0)
    t = np.where(denom > 1e-12, np.clip(t, 0.0, 1.0), 0.0)
    d = rel - t[..., None] * ab[None]
    return np.sqrt(np.einsum("msj,msj->ms", d, d))


def render_depth(cam, persons, spec, tree=B.DEFAULT_TREE):
    """Metric depth per stride cell: each person's silhouette holds its pelvis depth.

    The silhouette is the union of a pelvis-to-shoulders torso capsule and one
    capsule per bone; nearer persons overwrite farther ones.
    """
    s = spec.depth_stride
    gw, gh = spec.image_width // s, spec.image_height // s
    uu, vv = np.meshgrid((np.arange(gw) + 0.5) * s, (np.arange(gh) + 0.5) * s)
    centers = np.stack([uu.ravel(), vv.ravel()], axis=1)
    depth = np.full(gw * gh, BACKGROUND_DEPTH)
    f = cam.intrinsics.fx
    parents = np.array(tree.parents[1:])
    radii = np.array([TORSO_RADIUS] + [LIMB_RADIUS] * (tree.n_joints - 1))
    for p in persons:
        jc = cam.to_cam(p.joints)
        z0 = jc[0, 2]
        if z0 <= 0.1 or np.any(jc[:, 2] <= 0.05):
            continue
        px = project_cam(jc, cam.intrinsics)
        a = np.vstack([px[:1], px[parents]])
        b = np.vstack([0.5 * (px[7] + px[8])[None], px[1:]])
        rad = f * radii / z0
        lo, hi = px.min(axis=0) - rad.max(), px.max(axis=0) + rad.max()
        box = np.flatnonzero(np.all((centers >= lo) & (centers <= hi), axis=1))
        if box.size == 0:
            continue
        inside = (_segment_dist(centers[box], a, b) <= rad).any(axis=1)
        hit = box[inside & (z0 < depth[box])]
        depth[hit] = z0
    return depth.reshape(gh, gw)


# -- features --------------------------------------------------------------------

def _geometry_projection(dim):
    rng = make_rng(_GEO_SEED + dim)
    return rng.normal(size=(dim, 3)) / np.sqrt(3.0)


def geometry_code(pixel, depth, spec):
    """g(pixel, depth): fixed linear code of normalized image position and log depth."""
    x = np.array([pixel[0] / spec.image_width - 0.5, pixel[1] / spec.image_height - 0.5,
                  np.log(max(depth, 1e-6) / B.MEAN_DIST)])
    return _geometry_projection(spec.feature_dim) @ x


def synthesize_features(identity, view_noise, pixel, depth, spec, rng):
    """z = normalize(rho e_id + (1 - rho) n_view + sigma_f (xi + g(pixel, depth)))."""
    xi = rng.normal(size=spec.feature_dim) / np.sqrt(spec.feature_dim)
    z = spec.rho * identity + (1.0 - spec.rho) * view_noise + spec.sigma_f * (xi + geometry_code(pixel, depth, spec))
    n = np.linalg.norm(z)
    return z / n if n > 1e-12 else z


def occlusion_mask(visible, prob, rng):
    """Drop each visible (person, view) entry with probability ``prob``; keep >= 1 per person."""
    visible = np.asarray(visible, dtype=bool)
    drop = rng.uniform(size=visible.shape) < prob
    keep = visible & ~drop
    for p in range(visible.shape[0]):
        if visible[p].any() and not keep[p].any():
            cand = np.flatnonzero(visible[p])
            keep[p, cand[rng.integers(len(cand))]] = True
    return keep


# -- main entry ---------------------------------------------------------------------

def _visible(cam, person, spec):
    pc = cam.to_cam(person.joints[0])
    if pc[2] <= 0.1:
        return False, None
    px = project_cam(pc, cam.intrinsics)
    margin = 4 * spec.pixel_noise + 1.0
    ok = margin < px[0] < spec.image_width - margin and margin < px[1] < spec.image_height - margin
    return ok, px


def _mono_estimate(person, cam, pixel, spec, rng, tree):
    params = B.params_in_camera(person.params, cam)
    noise = np.radians(spec.pose_noise_deg)
    theta = params.theta.copy()
    for k in range(tree.n_joints):
        theta[k] = theta[k] @ axis_angle(_random_axis(rng) * noise * abs(rng.normal()))
    eps = np.clip(rng.normal(), -3.0, 3.0)
    dist = params.dist / spec.global_scale * max(1.0 + spec.depth_noise * eps, 0.2)
    transl = backproject_cam(pixel, dist, cam.intrinsics)
    return B.BodyParams(theta, params.beta.copy(), float(dist), transl)


def generate_scene(spec, tree=B.DEFAULT_TREE, max_attempts=10):
    rng = make_rng(spec.seed)
    for attempt in range(max_attempts):
        try:
            return _generate(spec, rng, tree)
        except GeometryError:
            continue
    raise GeometryError(f"could not generate a feasible scene in {max_attempts} attempts (seed {spec.seed})")


def _generate(spec, rng, tree):
    n = _sample_count(spec, rng)
    xy = _sample_positions(n, spec, rng)
    persons = [_sample_person(i, xy[i], spec, rng, tree) for i in range(n)]
    centroid = np.mean([p.joints[0] for p in persons], axis=0)
    cams = _sample_cameras(spec, rng, centroid)
    pred_cams = [_perturb_camera(c, spec, rng) for c in cams]

    vis = np.zeros((n, len(cams)), dtype=bool)
    true_px = {}
    for i, p in enumerate(persons):
        for v, c in enumerate(cams):
            ok, px = _visible(c, p, spec)
            vis[i, v] = ok
            if ok:
                true_px[i, v] = px
    if not vis.any(axis=1).all():
        raise GeometryError("a person is not visible in any view")
    keep = occlusion_mask(vis, spec.occlusion_prob, rng) if spec.occlusion_prob > 0 else vis

    identities = rng.normal(size=(n, spec.feature_dim))
    identities /= np.linalg.norm(identities, axis=1, keepdims=True)
    view_noise = rng.normal(size=(len(cams), spec.feature_dim))
    view_noise /= np.linalg.norm(view_noise, axis=1, keepdims=True)

    views = []
    for v, cam in enumerate(cams):
        ids = [i for i in range(n) if keep[i, v]]
        order = rng.permutation(len(ids))
        dets = []
        for idx, j in enumerate(order):
            i = ids[j]
            noise = np.clip(rng.normal(size=2) * spec.pixel_noise, -4 * spec.pixel_noise, 4 * spec.pixel_noise)
            px = true_px[i, v] + noise
            conf = float(rng.uniform(0.5, 1.0))
            mono = _mono_estimate(persons[i], cam, px, spec, rng, tree)
            feat = synthesize_features(identities[i], view_noise[v], px, mono.dist, spec, rng)
            dets.append(Detection(v, idx, persons[i].person_id, px, conf, feat, mono))
        heat, off = render_heatmap([d.pixel for d in dets], spec)
        depth = render_depth(cam, persons, spec, tree)
        views.append(ViewData(v, dets, heat, off, depth))
    return GroundTruthScene(spec, cams, pred_cams, persons, views)


def apply_occlusion(scene, prob, rng):
    """Drop whole detections independently per (person, view); each person keeps one view."""
    pids = [p.person_id for p in scene.persons]
    row = {pid: i for i, pid in enumerate(pids)}
    vis = np.zeros((len(pids), scene.num_views), dtype=bool)
    for d in scene.detections():
        vis[row[d.person_id], d.view_id] = True
    keep = occlusion_mask(vis, prob, rng)
    views = []
    for v in scene.views:
        kept = [d for d in v.detections if keep[row[d.person_id], v.view_id]]
        dets = [dataclasses.replace(d, index=k) for k, d in enumerate(kept)]
        heat, off = render_heatmap([d.pixel for d in dets], scene.spec)
        views.append(ViewData(v.view_id, dets, heat, off, v.depth_grid.copy()))
    return dataclasses.replace(scene, views=views)


# -- derived grids used by the human head ---------------------------------------

def human_feature_grid(view, spec):
    """G x G x D grid with each detection's feature written at its center cell."""
    g = spec.grid_size
    cw, ch = _grid_cells(spec)
    grid = np.zeros((g, g, spec.feature_dim))
    for d in view.detections:
        cu = min(int(d.pixel[0] // cw), g - 1)
        cv = min(int(d.pixel[1] // ch), g - 1)
        grid[cv, cu] += d.feature
    return grid


def scene_feature_grid(view, spec):
    """S x S x Ds grid: fixed random code of the median log depth in each cell."""
    s = spec.scene_grid
    depth = view.depth_grid
    gh, gw = depth.shape
    if gh % s or gw % s:
        raise ValueError(f"depth grid {depth.shape} is not an integer multiple of scene grid {s}")
    blocks = depth.reshape(s, gh // s, s, gw // s).transpose(0, 2, 1, 3).reshape(s, s, -1)
    z = np.log(np.median(blocks, axis=-1) / B.MEAN_DIST)
    w = make_rng(_GEO_SEED - 1).normal(size=(2, spec.scene_feature_dim))
    return np.tanh(np.stack([z, np.ones_like(z)], axis=-1) @ w)


def subset_views(scene, keep):
    """Sub-scene restricted to the listed views (re-indexed in the given order).

    Persons left without any detection are removed from the GT as well.
    """
    keep = list(keep)
    views = []
    for new, old in enumerate(keep):
        v = scene.views[old]
        dets = [dataclasses.replace(d, view_id=new) for d in v.detections]
        views.append(ViewData(new, dets, v.heatmap, v.offsets, v.depth_grid))
    seen = {d.person_id for v in views for d in v.detections}
    spec = scene.spec.replace(num_views=len(keep))
    return GroundTruthScene(spec, [scene.cameras[i] for i in keep], [scene.pred_cameras[i] for i in keep],
                            [p for p in scene.persons if p.person_id in seen], views)

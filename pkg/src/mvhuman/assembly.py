"""Human-scene reconstruction at inference time.

Human depths are brought into the scene frame by one global scale (median of
scene-depth / human-depth ratios at pelvis pixels); persons seen in at least
two views then have their pelvis re-estimated by DLT and the whole skeleton is
shifted rigidly by the correction.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import body as B
from .errors import DegenerateGeometryError
from .geometry import Camera, triangulate_dlt

log = logging.getLogger(__name__)

PREDICTION_FORMAT = "mvhuman.prediction"
PREDICTION_VERSION = 1


@dataclass
class WorldPerson:
    person_id: int
    joints: np.ndarray                  # J x 3 world
    ref_view: int = -1
    params: B.BodyParams | None = None  # camera-frame params in ref_view (scale applied)
    source_views: list = field(default_factory=list)
    refined: bool = False

    def to_dict(self):
        d = {"person_id": self.person_id, "ref_view": self.ref_view, "joints": self.joints,
             "source_views": list(self.source_views), "refined": bool(self.refined)}
        d["params"] = None if self.params is None else self.params.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        params = None if d.get("params") is None else B.BodyParams.from_dict(d["params"])
        return cls(int(d["person_id"]), np.asarray(d["joints"], dtype=float), int(d["ref_view"]),
                   params, [int(v) for v in d["source_views"]], bool(d["refined"]))


@dataclass
class WorldScene:
    cameras: list
    persons: list
    scale: float = 1.0
    assignments: list = field(default_factory=list)  # per detection {view_id, index, person_id, max_attention}

    def __post_init__(self):
        if not self.cameras:
            raise ValueError("a world scene needs at least one camera")

    def to_dict(self):
        return {"format": PREDICTION_FORMAT, "version": PREDICTION_VERSION,
                "scale": float(self.scale),
                "cameras": [c.to_dict() for c in self.cameras],
                "persons": [p.to_dict() for p in self.persons],
                "assignments": self.assignments}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != PREDICTION_FORMAT:
            raise ValueError(f"not a prediction document: format={d.get('format')!r}")
        if d.get("version") != PREDICTION_VERSION:
            raise ValueError(f"unsupported prediction version {d.get('version')}")
        return cls([Camera.from_dict(c) for c in d["cameras"]],
                   [WorldPerson.from_dict(p) for p in d["persons"]],
                   float(d["scale"]), list(d.get("assignments", [])))


def gt_world_scene(scene):
    persons = [WorldPerson(p.person_id, p.joints.copy(), -1, p.params.copy()) for p in scene.persons]
    return WorldScene(list(scene.cameras), persons, 1.0)


# -- scale ----------------------------------------------------------------------

def pelvis_depth_sample(depth_grid, pixel, stride, window=5):
    """Median of valid (finite, positive) depths in a window around the pixel's cell.

    Returns None when the window holds no valid depth.
    """
    if window % 2 == 0:
        raise ValueError("window must be odd")
    depth_grid = np.asarray(depth_grid, dtype=float)
    gh, gw = depth_grid.shape
    c = int(np.clip(pixel[0] // stride, 0, gw - 1))
    r = int(np.clip(pixel[1] // stride, 0, gh - 1))
    h = window // 2
    win = depth_grid[max(r - h, 0):r + h + 1, max(c - h, 0):c + h + 1].ravel()
    win = win[np.isfinite(win) & (win > 0)]
    if win.size == 0:
        return None
    return float(np.median(win))


def global_scale(pairs):
    """s = median(z_scene / z_human) over valid pairs; 1.0 with a warning if none."""
    ratios = [zs / zh for zs, zh in pairs
              if zs is not None and zh is not None and np.isfinite(zs) and np.isfinite(zh) and zs > 0 and zh > 0]
    if not ratios:
        warnings.warn("no valid depth pairs for global scale; using 1.0")
        return 1.0
    return float(np.median(ratios))


# -- triangulation ----------------------------------------------------------------

def to_camera_space(point_world, cam):
    return cam.to_cam(point_world)


def triangulate_persons(scene, observations, cams):
    """Refine pelvises by DLT in place.

    ``observations``: person_id -> list of (view_id, pelvis pixel). Persons with
    fewer than two distinct views are untouched; degenerate systems keep the
    original placement. Returns the ids that were refined.
    """
    refined = []
    for person in scene.persons:
        obs = observations.get(person.person_id, [])
        views = sorted({v for v, _ in obs})
        if len(views) < 2:
            continue
        try:
            tri = triangulate_dlt([(cams[v], px) for v, px in obs])
        except DegenerateGeometryError as exc:
            log.info("person %s: triangulation skipped (%s)", person.person_id, exc)
            continue
        delta = tri.point - person.joints[0]
        person.joints = person.joints + delta
        person.refined = True
        if person.params is not None and person.ref_view >= 0:
            t_cam = to_camera_space(tri.point, cams[person.ref_view])
            person.params.transl = t_cam
            person.params.dist = float(t_cam[2])
        refined.append(person.person_id)
    return refined

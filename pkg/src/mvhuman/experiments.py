"""Paired-seed ablations and view-count sweeps on the synthetic benchmark."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import gt_world_scene
from .association import scene_tokens
from .metrics import association_accuracy, association_f1, evaluate
from .pipeline import InferConfig, TrainConfig, infer_scene, train
from .simulator import SceneSpec, generate_scene, subset_views

ABLATION_COLUMNS = ("condition", "seed", "assoc_acc", "assoc_f1", "w_mpjpe", "ga_mpjpe", "pa_mpjpe")
SWEEP_COLUMNS = ("seed", "num_views", "w_mpjpe", "ga_mpjpe", "pa_mpjpe")


@dataclass
class AblationConfig:
    seeds: list = field(default_factory=lambda: list(range(10)))
    n_train: int = 100           # per curriculum stage
    epochs: int = 2              # per curriculum stage
    n_eval: int = 20
    views: list = field(default_factory=lambda: [1, 2, 3, 4])
    train_head: bool = True
    detach_agg: bool = False     # end-to-end: without its own losses the association still gets head gradients
    with_no_reproj: bool = False
    eval_spec: dict = field(default_factory=dict)   # overrides of the noisy benchmark spec


def scene_scores(scene, model, icfg):
    world = infer_scene(scene, model, icfg)
    ids = [a["person_id"] for a in world.assignments]
    labels = scene_tokens(scene).labels
    rep = evaluate(world, gt_world_scene(scene))
    return {"assoc_acc": association_accuracy(ids, labels), "assoc_f1": association_f1(ids, labels),
            "w_mpjpe": rep.w_mpjpe, "ga_mpjpe": rep.ga_mpjpe, "pa_mpjpe": rep.pa_mpjpe}


def _mean_rows(rows):
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


def eval_scenes(seed, n, overrides=None):
    base = SceneSpec(**(overrides or {}))
    return [generate_scene(base.replace(seed=2_000_000 + 1000 * seed + i)) for i in range(n)]


def run_seed(seed, cfg):
    """All ablation rows and view-sweep rows for one paired seed."""
    tcfg = TrainConfig(n_easy=cfg.n_train, n_hard=cfg.n_train, n_heldout=0, epochs_easy=cfg.epochs,
                       epochs_hard=cfg.epochs, train_head=cfg.train_head, detach_agg=cfg.detach_agg, seed=seed,
                       heldout_seed=3_000_000 + 1000 * seed)
    easy = [generate_scene(SceneSpec(rho=tcfg.rho_easy, seed=100_000 * (seed + 1) + i)) for i in range(cfg.n_train)]
    hard = [generate_scene(SceneSpec(rho=tcfg.rho_hard, seed=100_000 * (seed + 1) + 50_000 + i))
            for i in range(cfg.n_train)]
    scenes = eval_scenes(seed, cfg.n_eval, cfg.eval_spec)
    variants = {"full": tcfg,
                "no_assign_no_contra": TrainConfig(**{**tcfg.__dict__, "no_assign": True, "no_contra": True})}
    if cfg.with_no_reproj:
        variants["no_reproj"] = TrainConfig(**{**tcfg.__dict__, "no_reproj": True})
    models = {name: train(c, easy=easy, hard=hard, heldout=[])[0] for name, c in variants.items()}

    rows = []
    for name, model in models.items():
        rows.append({"condition": name, "seed": seed,
                     **_mean_rows([scene_scores(s, model, InferConfig()) for s in scenes])})
    rows.append({"condition": "no_triangulation", "seed": seed,
                 **_mean_rows([scene_scores(s, models["full"], InferConfig(triangulate=False)) for s in scenes])})
    sweep = []
    for k in cfg.views:
        subs = [subset_views(s, range(min(k, s.num_views))) for s in scenes]
        m = _mean_rows([scene_scores(s, models["full"], InferConfig()) for s in subs])
        sweep.append({"seed": seed, "num_views": k, "w_mpjpe": m["w_mpjpe"], "ga_mpjpe": m["ga_mpjpe"],
                      "pa_mpjpe": m["pa_mpjpe"]})
    return rows, sweep


def trend_checks(ablation_rows, sweep_rows):
    """Per-seed directional checks; returns {name: (wins, total)}."""
    by = {}
    for r in ablation_rows:
        by.setdefault(r["seed"], {})[r["condition"]] = r
    seeds = sorted(by)
    assoc = sum(by[s]["full"]["assoc_f1"] > by[s]["no_assign_no_contra"]["assoc_f1"]
                and by[s]["full"]["ga_mpjpe"] < by[s]["no_assign_no_contra"]["ga_mpjpe"] for s in seeds)
    tri = sum(by[s]["no_triangulation"]["w_mpjpe"] > by[s]["full"]["w_mpjpe"] for s in seeds)
    sw = {}
    for r in sweep_rows:
        sw.setdefault(r["seed"], {})[r["num_views"]] = r["w_mpjpe"]
    views_ok = 0
    for s, d in sw.items():
        ks = sorted(d)
        drops = [d[a] - d[b] for a, b in zip(ks, ks[1:])]
        views_ok += (d.get(1, np.inf) > d.get(2, -np.inf) >= d.get(4, np.inf)
                     and len(drops) > 0 and drops[0] == max(drops))
    return {"assoc_losses": (assoc, len(seeds)), "triangulation": (tri, len(seeds)),
            "view_count": (views_ok, len(sw))}

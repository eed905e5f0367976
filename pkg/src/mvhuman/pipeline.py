"""End-to-end inference and toy training on simulator scenes."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import body as B
from .assembly import WorldPerson, WorldScene, global_scale, pelvis_depth_sample, triangulate_persons
from .association import (AssocConfig, AssociationModel, gt_assignment, loss_assign, loss_contrastive,
                          match_queries, scene_tokens)
from .autodiff import GradTape, Var
from .geometry import project_cam
from .head import (HeadConfig, HumanHead, LossWeights, build_context, crossview_terms, decode,
                   detection_query, inject_multiview, loss_detection, loss_offset, param_terms,
                   predict_heat, predict_params, terms_2d, terms_3d, total_loss)
from .metrics import association_accuracy, association_f1
from .optim import OptimizerState, optimizer_step, warmup_cosine
from .simulator import SceneSpec, generate_scene, human_feature_grid, scene_feature_grid

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "mvhuman.checkpoint"
CHECKPOINT_VERSION = 1


# -- model bundle & checkpoints ------------------------------------------------------

@dataclass
class Model:
    assoc: AssociationModel
    head: HumanHead

    @classmethod
    def create(cls, assoc_cfg=None, head_cfg=None):
        return cls(AssociationModel(assoc_cfg or AssocConfig()), HumanHead(head_cfg or HeadConfig()))

    def named_parameters(self):
        yield from self.assoc.named_parameters("assoc.")
        yield from self.head.named_parameters("head.")

    def to_dict(self):
        return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "assoc_config": dataclasses.asdict(self.assoc.cfg),
                "head_config": dataclasses.asdict(self.head.cfg),
                "params": {name: p.data.copy() for name, p in self.named_parameters()}}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a checkpoint document: format={d.get('format')!r}")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        m = cls.create(AssocConfig(**d["assoc_config"]), HeadConfig(**d["head_config"]))
        params = d["params"]
        a = {k[len("assoc."):]: v for k, v in params.items() if k.startswith("assoc.")}
        h = {k[len("head."):]: v for k, v in params.items() if k.startswith("head.")}
        m.assoc.load_state_dict(a)
        m.head.load_state_dict(h)
        return m


# -- inference ----------------------------------------------------------------------

@dataclass
class InferConfig:
    triangulate: bool = True
    scale_first: bool = True
    head_mode: str = "monocular"     # "monocular" (human-branch estimate) or "learned"
    use_pred_cameras: bool = True
    depth_window: int = 5


class _ContextCache:
    def __init__(self, scene, head, cams):
        self.scene, self.head, self.cams, self.cache = scene, head, cams, {}

    def __call__(self, v):
        if v not in self.cache:
            view = self.scene.views[v]
            spec = self.scene.spec
            self.cache[v] = build_context(human_feature_grid(view, spec), scene_feature_grid(view, spec),
                                          self.cams[v].intrinsics, self.head)
        return self.cache[v]


def run_head(head, ctx, f_agg_q, feature, means, pixel, intr):
    C_tilde, q_mv = inject_multiview(ctx, f_agg_q, head)
    q_final = decode(detection_query(feature, means, head), q_mv, C_tilde, head)
    return predict_params(q_final, means, head, pixel, intr)


def _choose_decode_token(members, tokens, ref_view, seed_tok):
    in_ref = [t for t in members if tokens.view_ids[t] == ref_view]
    if seed_tok in in_ref:
        return seed_tok
    pool = in_ref or list(members)
    return max(pool, key=lambda t: (tokens.confidence[t], -t))


def _scale_params(p, s):
    return B.BodyParams(p.theta.copy(), p.beta.copy(), float(p.dist * s), p.transl * s)


def infer_scene(scene, model, cfg=None):
    cfg = cfg or InferConfig()
    tokens = scene_tokens(scene)
    dets = scene.detections()
    cams = scene.pred_cameras if cfg.use_pred_cameras else scene.cameras
    stride = scene.spec.depth_stride
    out = model.assoc(tokens, scene.num_views)
    A = out.A.data
    ctx = _ContextCache(scene, model.head, cams) if cfg.head_mode == "learned" else None

    per_person = []
    pairs = []
    for q in out.active:
        members = np.flatnonzero(out.identities == q).tolist()
        estimates = {}
        for t in members:
            d = dets[t]
            if cfg.head_mode == "learned":
                pv = run_head(model.head, ctx(d.view_id), out.f_agg[q], d.feature, d.mono, d.pixel,
                              cams[d.view_id].intrinsics)
                estimates[t] = pv.to_params()
            elif cfg.head_mode == "monocular":
                estimates[t] = d.mono.copy()
            else:
                raise ValueError(f"unknown head mode {cfg.head_mode!r}")
            z_scene = pelvis_depth_sample(scene.views[d.view_id].depth_grid, d.pixel, stride, cfg.depth_window)
            pairs.append((z_scene, estimates[t].dist))
        seed_tok = int(out.seeds[q]) if q < len(out.seeds) else -1
        dec = _choose_decode_token(members, tokens, out.ref_view, seed_tok)
        obs = {}
        for t in members:
            v = int(tokens.view_ids[t])
            if v not in obs or tokens.confidence[t] > tokens.confidence[obs[v]]:
                obs[v] = t
        per_person.append((q, dec, estimates[dec], [(v, dets[t].pixel) for v, t in sorted(obs.items())]))

    s = global_scale(pairs)
    persons, observations = [], {}

    def place(params, view):
        rel = B.forward_kinematics(B.DEFAULT_TREE, params)
        return cams[view].to_world(rel + params.transl)

    for q, dec, params, obs in per_person:
        v = int(tokens.view_ids[dec])
        p = _scale_params(params, s) if cfg.scale_first else params.copy()
        persons.append(WorldPerson(int(q), place(p, v), v, p, [o[0] for o in obs], False))
        observations[int(q)] = obs
    world = WorldScene(list(cams), persons, s)
    if cfg.triangulate:
        triangulate_persons(world, observations, cams)
    if not cfg.scale_first:
        for person in world.persons:
            if not person.refined:
                person.params = _scale_params(person.params, s)
                person.joints = place(person.params, person.ref_view)
    world.assignments = [
        {"view_id": int(tokens.view_ids[n]), "index": int(tokens.indices[n]),
         "person_id": int(out.identities[n]), "max_attention": float(A[out.identities[n], n])}
        for n in range(len(tokens))]
    return world


# -- training -------------------------------------------------------------------------

@dataclass
class TrainConfig:
    n_easy: int = 200
    n_hard: int = 200
    n_heldout: int = 100
    epochs_easy: int = 2
    epochs_hard: int = 2
    rho_easy: float = 0.95
    rho_hard: float = 0.7
    lr: float = 3e-3
    weight_decay: float = 1e-4
    warmup: int = 100
    curriculum_epoch: int = 2
    train_head: bool = True
    detach_agg: bool = True
    no_assign: bool = False
    no_contra: bool = False
    no_reproj: bool = False
    seed: int = 0
    heldout_seed: int = 1_000_000
    weights: LossWeights = field(default_factory=LossWeights)

    def effective_weights(self):
        w = self.weights
        kw = {}
        if self.no_assign:
            kw["assign"] = 0.0
        if self.no_contra:
            kw["contra"] = 0.0
        if self.no_reproj:
            kw.update(crossview_j3d=0.0, crossview_j2d=0.0)
        return w.replace(**kw)


def _gt_targets(scene, pid, view, cam_list):
    params, joints, verts = scene.gt_in_view(pid, view)
    intr = cam_list[view].intrinsics
    return params, joints, verts, project_cam(joints, intr), project_cam(verts, intr)


def scene_terms(scene, model, train_head=True, tokens=None, detach_agg=True):
    """Raw loss terms for one scene (GT cameras), averaged over persons/views."""
    tokens = tokens or scene_tokens(scene)
    out = model.assoc(tokens, scene.num_views)
    G, pids = gt_assignment(tokens.labels)
    terms = {}
    la, matched = loss_assign(out.A, G)
    terms["assign"] = la
    terms["contra"] = loss_contrastive(out.h, tokens.labels, tokens.view_ids, model.assoc.cfg.tau)[0]
    if not train_head:
        return out, terms
    head = model.head
    f_agg = Var(out.f_agg.data) if detach_agg else out.f_agg
    cams = scene.cameras
    dets = scene.detections()
    ctx = _ContextCache(scene, head, cams)
    views = [v.view_id for v in scene.views if v.detections]
    bce, off = [], []
    for v in views:
        heat, offs = predict_heat(ctx(v), head)
        bce.append(loss_detection(heat, scene.views[v].heatmap))
        off.append(loss_offset(offs, scene.views[v].offsets, scene.views[v].heatmap))
    terms["bce"] = sum(bce[1:], bce[0]) * (1.0 / len(bce))
    terms["offset"] = sum(off[1:], off[0]) * (1.0 / len(off))

    acc = {}
    n_persons = 0
    for r, q in enumerate(matched):
        if q < 0:
            continue
        pid = pids[r]
        toks = np.flatnonzero(tokens.labels == pid).tolist()
        dec = _choose_decode_token(toks, tokens, out.ref_view, int(out.seeds[q]) if q < len(out.seeds) else -1)
        d = dets[dec]
        v = d.view_id
        pv = run_head(head, ctx(v), f_agg[q], d.feature, d.mono, d.pixel, cams[v].intrinsics)
        rel_j, rel_v = B.fk_var(B.DEFAULT_TREE, pv.theta, pv.beta, with_vertices=True)
        pj = rel_j + ad.reshape(pv.transl, (1, 3))
        pverts = rel_v + ad.reshape(pv.transl, (1, 3))
        gparams, gj, gv, gj2, gv2 = _gt_targets(scene, pid, v, cams)
        t = dict(param_terms(pv, gparams))
        t.update(terms_3d(pj, gj, pverts, gv))
        t.update(terms_2d(pj, gj2, cams[v].intrinsics, pverts, gv2))
        others = sorted({int(tokens.view_ids[k]) for k in toks} - {v})
        targets = []
        for ov in others:
            _, oj, _, oj2, _ = _gt_targets(scene, pid, ov, cams)
            targets.append((cams[ov], oj, oj2))
        cv = crossview_terms(pj, cams[v], targets)
        if cv is not None:
            t.update(cv)
        for k, val in t.items():
            acc.setdefault(k, []).append(val)
        n_persons += 1
    for k, vals in acc.items():
        terms[k] = sum(vals[1:], vals[0]) * (1.0 / len(vals))
    return out, terms


def _benchmark_scenes(n, rho, seed0):
    return [generate_scene(SceneSpec(rho=rho, seed=seed0 + i)) for i in range(n)]


def heldout_scores(model, scenes):
    """Mean association accuracy and F1; NaN for an empty held-out split."""
    if not scenes:
        return float("nan"), float("nan")
    accs, f1s = [], []
    for sc in scenes:
        tokens = scene_tokens(sc)
        ids = model.assoc(tokens, sc.num_views).identities
        accs.append(association_accuracy(ids, tokens.labels))
        f1s.append(association_f1(ids, tokens.labels))
    return float(np.mean(accs)), float(np.mean(f1s))


def _restore(named, snapshot):
    for n, p in named.items():
        p.data[...] = snapshot[n]


def train(cfg, model=None, easy=None, hard=None, heldout=None, progress=None):
    """Two-stage toy curriculum; returns (model, per-epoch rows).

    Raises FloatingPointError on a non-finite loss or gradient; ``model`` is then
    rolled back to the last parameters that produced a finite loss.
    """
    model = model or Model.create(AssocConfig(seed=cfg.seed), HeadConfig(seed=cfg.seed + 1))
    easy = easy if easy is not None else _benchmark_scenes(cfg.n_easy, cfg.rho_easy, cfg.seed * 10_000)
    hard = hard if hard is not None else _benchmark_scenes(cfg.n_hard, cfg.rho_hard, cfg.seed * 10_000 + 5_000)
    heldout = heldout if heldout is not None else _benchmark_scenes(cfg.n_heldout, 0.8, cfg.heldout_seed)
    w = cfg.effective_weights()
    named = dict(model.named_parameters())
    state = OptimizerState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    stages = [("easy", easy, cfg.epochs_easy), ("hard", hard, cfg.epochs_hard)]
    total_steps = sum(len(s) * e for _, s, e in stages)
    rows, step, epoch = [], 0, 0
    order_rng = np.random.Generator(np.random.PCG64(cfg.seed))
    token_cache = {}
    last_good = {n: p.data.copy() for n, p in named.items()}
    for stage, scenes, n_epochs in stages:
        for _ in range(n_epochs):
            t0 = time.perf_counter()
            sums = {}
            for i in order_rng.permutation(len(scenes)):
                sc = scenes[i]
                key = (stage, int(i))
                if key not in token_cache:
                    token_cache[key] = scene_tokens(sc)
                state.lr = warmup_cosine(step, total_steps, cfg.lr, cfg.warmup, floor=min(1e-8, cfg.lr))
                step += 1
                for p in named.values():
                    p.grad = None
                try:
                    with GradTape() as tape, np.errstate(over="ignore", invalid="ignore"):
                        _, terms = scene_terms(sc, model, cfg.train_head, token_cache[key], cfg.detach_agg)
                        loss = total_loss(terms, w, epoch, cfg.curriculum_epoch)
                    finite = bool(np.isfinite(loss.data))
                except ValueError as exc:       # non-finite attention reaches the matcher first
                    if "non-finite" not in str(exc):
                        raise
                    finite = False
                if not finite:
                    _restore(named, last_good)
                    raise FloatingPointError(f"non-finite loss at step {step} ({stage} epoch {epoch})")
                if loss.requires_grad:
                    tape.backward(loss)
                last_good = {n: p.data.copy() for n, p in named.items()}
                try:
                    optimizer_step({n: p.data for n, p in named.items()}, {n: p.grad for n, p in named.items()},
                                   state)
                except FloatingPointError:
                    _restore(named, last_good)
                    raise
                for k, v in terms.items():
                    sums[k] = sums.get(k, 0.0) + float(ad.as_var(v).data)
                sums["total"] = sums.get("total", 0.0) + float(loss.data)
            acc, f1 = heldout_scores(model, heldout)
            row = {"epoch": epoch, "stage": stage, "lr": state.lr}
            row.update({k: v / len(scenes) for k, v in sorted(sums.items())})
            row.update(heldout_acc=acc, heldout_f1=f1)
            rows.append(row)
            if progress:
                progress(row, time.perf_counter() - t0)
            epoch += 1
    return model, rows

"""Command-line entry point: gen, train-assoc, infer, eval, ablate, report.

Every subcommand resolves its settings as built-in defaults < YAML config file
(``--config``) < explicit command-line flags, and writes the resolved settings
to ``effective_config.json`` in its output directory. Payload files (scenes,
predictions, checkpoints, CSV tables) depend only on that configuration; wall
clock values are confined to ``manifest.txt`` and ``timing.csv``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import logging
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import codec
from .assembly import WorldScene, gt_world_scene
from .association import AssocConfig, scene_tokens
from .experiments import ABLATION_COLUMNS, SWEEP_COLUMNS, AblationConfig, run_seed, trend_checks
from .head import HeadConfig, LossWeights
from .metrics import METRIC_COLUMNS, association_accuracy, association_f1, evaluate
from .pipeline import InferConfig, Model, TrainConfig, infer_scene, train
from .simulator import GroundTruthScene, SceneSpec, generate_scene, subset_views

log = logging.getLogger("mvhuman")

EFFECTIVE_CONFIG = "effective_config.json"
MANIFEST = "manifest.txt"
TIMING = "timing.csv"
CHECKPOINT = "checkpoint.bin"
LAST_GOOD = "checkpoint_last_good.bin"
SCENE_COLUMNS = ("scene",) + METRIC_COLUMNS + ("assoc_acc", "assoc_f1")
REPORT_COLUMNS = ("metric", "condition", "seed", "value")
TIMING_RUNS, TIMING_WARMUP = 5, 1


class CLIError(Exception):
    """User-facing failure; reported on stderr with a nonzero exit code."""


# -- run configs ----------------------------------------------------------------------

@dataclass
class GenConfig:
    out: str = "scenes"
    n: int = 10
    seed: int = 0
    jobs: int = 1
    spec: dict = field(default_factory=dict)    # SceneSpec overrides


@dataclass
class TrainAssocConfig:
    out: str = "train"
    seed: int = 0
    n_easy: int = 200
    n_hard: int = 200
    n_heldout: int = 100
    epochs_easy: int = 2
    epochs_hard: int = 2
    lr: float = 3e-3
    weight_decay: float = 1e-4
    train_head: bool = True
    detach_agg: bool = True       # head gradients stop at the aggregated features
    no_assign: bool = False
    no_contra: bool = False
    no_reproj: bool = False
    weights: dict = field(default_factory=dict)  # LossWeights overrides


@dataclass
class InferRunConfig:
    scenes: str = "scenes"
    out: str = "pred"
    checkpoint: str = ""
    assoc_mode: str = ""          # "" keeps the checkpoint's mode; "cosine" needs no checkpoint
    head_mode: str = "monocular"
    no_triangulation: bool = False
    use_gt_cameras: bool = False
    jobs: int = 1


@dataclass
class EvalConfig:
    scenes: str = "scenes"
    out: str = "eval"
    pred: str = ""                # prediction directory (single-condition evaluation)
    views: list = field(default_factory=list)   # view-count sweep; runs inference itself
    checkpoint: str = ""
    assoc_mode: str = ""
    head_mode: str = "monocular"
    no_triangulation: bool = False
    jobs: int = 1


@dataclass
class AblateConfig:
    out: str = "ablate"
    seeds: list = field(default_factory=lambda: list(range(10)))
    n_train: int = 100
    epochs: int = 2
    n_eval: int = 20
    views: list = field(default_factory=lambda: [1, 2, 3, 4])
    train_head: bool = True
    detach_agg: bool = False      # end-to-end training in both arms of each pair
    no_reproj: bool = False       # also train and report a no_reproj row
    jobs: int = 1
    spec: dict = field(default_factory=dict)


@dataclass
class ReportConfig:
    inputs: list = field(default_factory=list)
    out: str = "report"


CONFIGS = {"gen": GenConfig, "train-assoc": TrainAssocConfig, "infer": InferRunConfig,
           "eval": EvalConfig, "ablate": AblateConfig, "report": ReportConfig}


def resolve_config(cls, file_values, cli_values):
    """defaults < file < CLI; unknown file keys are an error."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(file_values) - names
    if unknown:
        raise CLIError(f"unknown config keys for this subcommand: {sorted(unknown)}")
    merged = dataclasses.asdict(cls())
    for src in (file_values, {k: v for k, v in cli_values.items() if v is not None}):
        for k, v in src.items():
            if k in ("spec", "weights") and isinstance(v, dict):
                merged[k] = {**merged[k], **v}
            else:
                merged[k] = v
    return cls(**merged)


def load_config_file(path):
    if not path:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise CLIError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CLIError(f"config file {path} must hold a key-value mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def parse_assignments(items):
    """['a=1', 'b=[1, 2]'] -> {'a': 1, 'b': [1, 2]} with YAML value parsing."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise CLIError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip().replace("-", "_")] = yaml.safe_load(v)
    return out


def parse_int_list(text):
    if text is None:
        return None
    vals = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            vals.extend(range(int(lo), int(hi) + 1))
        elif part:
            vals.append(int(part))
    return vals


# -- IO helpers -------------------------------------------------------------------------

def _outdir(path):
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"cannot create output directory {p}: {exc}") from exc
    return p


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def write_effective_config(outdir, command, cfg):
    write_json(Path(outdir) / EFFECTIVE_CONFIG, {"command": command, **dataclasses.asdict(cfg)})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _scene_files(directory):
    d = Path(directory)
    if not d.is_dir():
        raise CLIError(f"scene directory {d} does not exist")
    files = sorted(p for p in d.iterdir() if p.name.startswith("scene_") and p.suffix in (".json", ".bin"))
    if not files:
        raise CLIError(f"no scene files in {d}")
    return files


def load_scene(path):
    try:
        return GroundTruthScene.from_dict(codec.load(path))
    except (OSError, ValueError, KeyError) as exc:
        raise CLIError(f"cannot read scene {path}: {exc}") from exc


def load_prediction(path):
    try:
        return WorldScene.from_dict(codec.load(path))
    except (OSError, ValueError, KeyError) as exc:
        raise CLIError(f"cannot read prediction {path}: {exc}") from exc


def load_model(checkpoint, assoc_mode=""):
    if checkpoint:
        path = Path(checkpoint)
        if not path.is_file():
            raise CLIError(f"checkpoint {path} not found")
        try:
            model = Model.from_dict(codec.load(path))
        except (OSError, ValueError, KeyError) as exc:
            raise CLIError(f"cannot read checkpoint {path}: {exc}") from exc
    elif assoc_mode == "cosine":
        model = Model.create(AssocConfig(mode="cosine"))
    else:
        raise CLIError("a --checkpoint is required unless --assoc-mode cosine is given")
    if assoc_mode:
        model.assoc.cfg.mode = assoc_mode
    return model


def median_time(fn, runs=TIMING_RUNS, warmup=TIMING_WARMUP):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def _pool_map(fn, items, jobs):
    """Ordered map, in-process for jobs <= 1."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# -- gen ----------------------------------------------------------------------------------

def _gen_one(job):
    spec_dict, seed, path = job
    scene = generate_scene(SceneSpec.from_dict({**spec_dict, "seed": seed}))
    return codec.save(scene.to_dict(), path)


def cmd_gen(cfg):
    out = _outdir(cfg.out)
    try:
        spec = SceneSpec.from_dict(dict(cfg.spec))
    except (TypeError, ValueError) as exc:
        raise CLIError(f"invalid scene spec: {exc}") from exc
    base = spec.to_dict()
    jobs = [(base, cfg.seed + i, str(out / f"scene_{i:04d}.json")) for i in range(cfg.n)]
    try:
        hashes = _pool_map(_gen_one, jobs, cfg.jobs)
    except OSError as exc:
        raise CLIError(f"writing scenes failed: {exc}") from exc
    lines = [f"# mvhuman gen {_dt.datetime.now(_dt.timezone.utc).isoformat()} n={cfg.n} seed={cfg.seed}"]
    lines += [f"{h}  {Path(p).name}" for h, (_, _, p) in zip(hashes, jobs)]
    (out / MANIFEST).write_text("\n".join(lines) + "\n")
    write_effective_config(out, "gen", cfg)
    print("\n".join(lines))
    return 0


# -- train-assoc ---------------------------------------------------------------------------

def train_config(cfg):
    try:
        weights = LossWeights().replace(**cfg.weights)
    except TypeError as exc:
        raise CLIError(f"invalid loss weight override: {exc}") from exc
    return TrainConfig(n_easy=cfg.n_easy, n_hard=cfg.n_hard, n_heldout=cfg.n_heldout,
                       epochs_easy=cfg.epochs_easy, epochs_hard=cfg.epochs_hard, lr=cfg.lr,
                       weight_decay=cfg.weight_decay, train_head=cfg.train_head,
                       detach_agg=cfg.detach_agg, no_assign=cfg.no_assign,
                       no_contra=cfg.no_contra, no_reproj=cfg.no_reproj, seed=cfg.seed, weights=weights)


def cmd_train_assoc(cfg):
    out = _outdir(cfg.out)
    write_effective_config(out, "train-assoc", cfg)
    tcfg = train_config(cfg)
    model = Model.create(AssocConfig(seed=tcfg.seed), HeadConfig(seed=tcfg.seed + 1))
    timings = []

    def progress(row, seconds):
        timings.append((row["epoch"], seconds))
        log.info("epoch %d (%s): total %.4f heldout_acc %.4f", row["epoch"], row["stage"], row["total"],
                 row["heldout_acc"])

    try:
        model, rows = train(tcfg, model, progress=progress)
    except FloatingPointError as exc:
        codec.save(model.to_dict(), out / LAST_GOOD)
        raise CLIError(f"training aborted: {exc}; last good checkpoint written to {out / LAST_GOOD}") from exc
    codec.save(model.to_dict(), out / CHECKPOINT)
    columns = list(rows[0]) if rows else ["epoch"]
    write_csv(out / "loss_curve.csv", columns, rows)
    write_csv(out / TIMING, ("epoch", "seconds"), [{"epoch": e, "seconds": s} for e, s in timings])
    if rows:
        print(f"final heldout_acc={rows[-1]['heldout_acc']:.4f} heldout_f1={rows[-1]['heldout_f1']:.4f}")
    return 0


# -- infer --------------------------------------------------------------------------------

def _infer_cfg(cfg):
    if cfg.head_mode not in ("monocular", "learned"):
        raise CLIError(f"unknown head mode {cfg.head_mode!r}")
    return InferConfig(triangulate=not cfg.no_triangulation, head_mode=cfg.head_mode,
                       use_pred_cameras=not getattr(cfg, "use_gt_cameras", False))


def _infer_one(job):
    scene_path, out_path, checkpoint, assoc_mode, icfg = job
    model = load_model(checkpoint, assoc_mode)
    world = infer_scene(load_scene(scene_path), model, icfg)
    codec.save(world.to_dict(), out_path)
    return Path(out_path).name


def cmd_infer(cfg):
    load_model(cfg.checkpoint, cfg.assoc_mode)      # fail early on a missing checkpoint
    files = _scene_files(cfg.scenes)
    out = _outdir(cfg.out)
    icfg = _infer_cfg(cfg)
    jobs = [(str(f), str(out / f.name.replace("scene_", "pred_", 1)), cfg.checkpoint, cfg.assoc_mode, icfg)
            for f in files]
    names = _pool_map(_infer_one, jobs, cfg.jobs)
    write_effective_config(out, "infer", cfg)
    print(f"wrote {len(names)} predictions to {out}")
    return 0


# -- eval ---------------------------------------------------------------------------------

def scene_row(name, pred, scene):
    gt = gt_world_scene(scene)
    if len(pred.cameras) != len(gt.cameras):
        raise CLIError(f"{name}: prediction has {len(pred.cameras)} cameras, scene has {len(gt.cameras)}")
    rep = evaluate(pred, gt).as_dict()
    labels = scene_tokens(scene).labels
    ids = [a["person_id"] for a in pred.assignments]
    if len(ids) != len(labels):
        raise CLIError(f"{name}: prediction assigns {len(ids)} detections, scene has {len(labels)}")
    return {"scene": name, **rep, "assoc_acc": association_accuracy(ids, labels),
            "assoc_f1": association_f1(ids, labels)}


def _mean_row(rows, extra):
    cols = [c for c in SCENE_COLUMNS if c != "scene"]
    return {**extra, **{c: float(np.nanmean([r[c] for r in rows])) if rows else float("nan") for c in cols}}


def _eval_pred_one(job):
    scene_path, pred_path = job
    scene, pred = load_scene(scene_path), load_prediction(pred_path)
    name = Path(scene_path).stem
    row = scene_row(name, pred, scene)
    return row, median_time(lambda: evaluate(pred, gt_world_scene(scene)))


def _eval_sweep_one(job):
    scene_path, views, checkpoint, assoc_mode, icfg = job
    scene = load_scene(scene_path)
    model = load_model(checkpoint, assoc_mode)
    out = []
    for k in views:
        sub = subset_views(scene, range(min(k, scene.num_views)))
        pred = infer_scene(sub, model, icfg)
        row = scene_row(Path(scene_path).stem, pred, sub)
        out.append((k, row, median_time(lambda: infer_scene(sub, model, icfg))))
    return out


def cmd_eval(cfg):
    files = _scene_files(cfg.scenes)
    out = _outdir(cfg.out)
    if cfg.views:
        load_model(cfg.checkpoint, cfg.assoc_mode)
        icfg = _infer_cfg(cfg)
        results = _pool_map(_eval_sweep_one, [(str(f), list(cfg.views), cfg.checkpoint, cfg.assoc_mode, icfg)
                                               for f in files], cfg.jobs)
        per_scene, timing, summary = [], [], []
        for k in cfg.views:
            rows = []
            for res in results:
                for kk, row, sec in res:
                    if kk == k:
                        rows.append(row)
                        per_scene.append({"num_views": k, **row})
                        timing.append({"num_views": k, "scene": row["scene"], "seconds": sec})
            summary.append(_mean_row(rows, {"num_views": k}))
        write_csv(out / "sweep.csv", ("num_views",) + SCENE_COLUMNS[1:], summary)
        write_csv(out / "per_scene.csv", ("num_views",) + SCENE_COLUMNS, per_scene)
        write_csv(out / TIMING, ("num_views", "scene", "seconds"), timing)
    else:
        if not cfg.pred:
            raise CLIError("eval needs --pred (prediction directory) or --views (sweep)")
        pred_dir = Path(cfg.pred)
        jobs = []
        for f in files:
            p = pred_dir / f.name.replace("scene_", "pred_", 1)
            if not p.is_file():
                raise CLIError(f"missing prediction {p} for scene {f.name}")
            jobs.append((str(f), str(p)))
        results = _pool_map(_eval_pred_one, jobs, cfg.jobs)
        rows = [r for r, _ in results]
        write_csv(out / "metrics.csv", SCENE_COLUMNS[1:], [_mean_row(rows, {})])
        write_csv(out / "per_scene.csv", SCENE_COLUMNS, rows)
        write_csv(out / TIMING, ("scene", "seconds"), [{"scene": r["scene"], "seconds": s} for r, s in results])
    write_effective_config(out, "eval", cfg)
    print(f"evaluated {len(files)} scenes into {out}")
    return 0


# -- ablate --------------------------------------------------------------------------------

def _ablate_one(job):
    seed, acfg = job
    return run_seed(seed, acfg)


def cmd_ablate(cfg):
    out = _outdir(cfg.out)
    acfg = AblationConfig(seeds=list(cfg.seeds), n_train=cfg.n_train, epochs=cfg.epochs, n_eval=cfg.n_eval,
                          views=list(cfg.views), train_head=cfg.train_head, detach_agg=cfg.detach_agg,
                          with_no_reproj=cfg.no_reproj,
                          eval_spec=dict(cfg.spec))
    results = _pool_map(_ablate_one, [(s, acfg) for s in acfg.seeds], cfg.jobs)
    rows = [r for res, _ in results for r in res]
    sweep = [r for _, sw in results for r in sw]
    write_csv(out / "ablation.csv", ABLATION_COLUMNS, rows)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, sweep)
    trends = {k: {"wins": w, "total": t} for k, (w, t) in trend_checks(rows, sweep).items()}
    write_json(out / "trends.json", trends)
    write_effective_config(out, "ablate", cfg)
    for k, v in trends.items():
        print(f"{k}: {v['wins']}/{v['total']} seeds")
    return 0


# -- report --------------------------------------------------------------------------------

def long_rows(path):
    """Flatten one of our CSV tables into (metric, condition, seed, value) rows."""
    rows = read_csv(path)
    if not rows:
        return []
    cols = list(rows[0])
    out = []
    for i, r in enumerate(rows):
        if "condition" in cols:
            cond, seed = r["condition"], r.get("seed", "")
        elif "num_views" in cols:
            cond, seed = f"views={r['num_views']}", r.get("seed", r.get("scene", ""))
        elif "scene" in cols:
            cond, seed = Path(path).stem, r["scene"]
        else:
            cond, seed = Path(path).stem, ""
        for c in cols:
            if c in ("condition", "seed", "num_views", "scene", "stage"):
                continue
            try:
                val = float(r[c])
            except ValueError:
                continue
            out.append({"metric": c, "condition": cond, "seed": seed, "value": val})
    return out


def cmd_report(cfg):
    if not cfg.inputs:
        raise CLIError("report needs at least one input CSV")
    out = _outdir(cfg.out)
    rows = []
    for p in cfg.inputs:
        if not Path(p).is_file():
            raise CLIError(f"input table {p} not found")
        rows.extend(long_rows(p))
    write_csv(out / "report.csv", REPORT_COLUMNS, rows)
    write_effective_config(out, "report", cfg)
    print(f"wrote {len(rows)} rows to {out / 'report.csv'}")
    return 0


COMMANDS = {"gen": cmd_gen, "train-assoc": cmd_train_assoc, "infer": cmd_infer, "eval": cmd_eval,
            "ablate": cmd_ablate, "report": cmd_report}


# -- argument parsing -------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="mvhuman", description="Multi-view human-scene toy experiments.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--config", help="YAML file with keys named like the long flags")
        p.add_argument("--out", help="output directory")
        if jobs:
            p.add_argument("--jobs", type=int, help="worker processes for scene-level parallelism")
        return p

    def flag(p, name, help_):
        # argparse reads any "--no-..." spelling of an optional boolean as the negation,
        # so flags that are themselves named "--no-x" are plain switches
        if name.startswith("--no-"):
            p.add_argument(name, action="store_true", default=None, help=help_)
        else:
            p.add_argument(name, action=argparse.BooleanOptionalAction, default=None, help=help_)

    p = common(sub.add_parser("gen", help="generate synthetic scenes"), jobs=True)
    p.add_argument("--n", type=int, help="number of scenes (default 10)")
    p.add_argument("--seed", type=int, help="seed of the first scene; scene i uses seed+i")
    p.add_argument("--spec", action="append", metavar="KEY=VALUE", help="scene spec override (repeatable)")

    p = common(sub.add_parser("train-assoc", help="train the association model on the toy curriculum"))
    p.add_argument("--seed", type=int)
    for name in ("n-easy", "n-hard", "n-heldout", "epochs-easy", "epochs-hard"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    flag(p, "--train-head", "also train the human head (default on)")
    flag(p, "--detach-agg", "stop head gradients at the aggregated features (default on)")
    flag(p, "--no-assign", "drop the assignment loss")
    flag(p, "--no-contra", "drop the contrastive loss")
    flag(p, "--no-reproj", "drop the cross-view reprojection terms")
    p.add_argument("--weight", action="append", dest="weights", metavar="TERM=VALUE",
                   help="loss weight override (repeatable)")

    for name, help_ in (("infer", "run inference on a scene directory"),
                        ("eval", "evaluate predictions, or sweep view counts")):
        p = common(sub.add_parser(name, help=help_), jobs=True)
        p.add_argument("--scenes", help="directory of scene_*.json files")
        p.add_argument("--checkpoint", help="checkpoint written by train-assoc")
        p.add_argument("--assoc-mode", choices=["learned", "cosine"], help="override the association mode")
        p.add_argument("--head-mode", choices=["monocular", "learned"])
        flag(p, "--no-triangulation", "skip multi-view pelvis triangulation")
        if name == "infer":
            flag(p, "--use-gt-cameras", "assemble with ground-truth instead of predicted cameras")
        else:
            p.add_argument("--pred", help="directory of pred_*.json files")
            p.add_argument("--views", help="view-count sweep, e.g. 1,2,3,4 or 1-4")

    p = common(sub.add_parser("ablate", help="paired-seed ablation table and view sweep"), jobs=True)
    p.add_argument("--seeds", help="seed list, e.g. 0-9")
    p.add_argument("--n-train", type=int, help="scenes per curriculum stage")
    p.add_argument("--epochs", type=int, help="epochs per curriculum stage")
    p.add_argument("--n-eval", type=int)
    p.add_argument("--views", help="view-count sweep")
    flag(p, "--train-head", "train the human head too (default on)")
    flag(p, "--detach-agg", "stop head gradients at the aggregated features (default off)")
    flag(p, "--no-reproj", "add a no_reproj row")
    p.add_argument("--spec", action="append", metavar="KEY=VALUE", help="evaluation scene spec override")

    p = common(sub.add_parser("report", help="long-format CSV for plotting"))
    p.add_argument("inputs", nargs="*", help="CSV tables written by eval/ablate/train-assoc")
    return ap


def config_from_args(args):
    cls = CONFIGS[args.command]
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    for key in ("spec", "weights"):
        if key in values:
            values[key] = parse_assignments(values[key]) if values[key] else None
    for key in ("views", "seeds"):
        if key in values:
            values[key] = parse_int_list(values[key])
    if args.command == "report" and not values.get("inputs"):
        values["inputs"] = None
    file_values = load_config_file(args.config)
    for key in ("views", "seeds"):
        if isinstance(file_values.get(key), str):
            file_values[key] = parse_int_list(file_values[key])
    return resolve_config(cls, file_values, values)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

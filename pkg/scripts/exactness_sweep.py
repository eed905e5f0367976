"""Noiseless scenes through inference: worst human metric, association accuracy and scale recovery.

    python3 scripts/exactness_sweep.py --n 200 --views 1-8 --scales 1.3,1.7
"""

import argparse
import itertools

import numpy as np

from mvhuman.assembly import gt_world_scene
from mvhuman.association import AssocConfig, scene_tokens
from mvhuman.cli import parse_int_list
from mvhuman.metrics import association_accuracy, evaluate
from mvhuman.pipeline import Model, infer_scene
from mvhuman.simulator import SceneSpec, generate_scene


def cli():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--views", default="4")
    ap.add_argument("--scales", default="1.3")
    ap.add_argument("--seed", type=int, default=50_000)
    args = ap.parse_args()
    model = Model.create(AssocConfig(mode="cosine"))
    combos = list(itertools.product(parse_int_list(args.views), [float(s) for s in args.scales.split(",")]))
    print(f"{'views':>5} {'scale':>6} {'max_mpjpe':>10} {'acc=1':>6} {'scale_bitwise':>14} {'max_ulp':>9}")
    for views, scale in combos:
        worst, acc_ok, exact, ulps = 0.0, 0, 0, 0.0
        for i in range(args.n):
            scene = generate_scene(SceneSpec.noiseless(seed=args.seed + i, num_views=views, global_scale=scale))
            world = infer_scene(scene, model)
            m = evaluate(world, gt_world_scene(scene))
            worst = max(worst, m.w_mpjpe, m.ga_mpjpe, m.pa_mpjpe)
            ids = [a["person_id"] for a in world.assignments]
            acc_ok += association_accuracy(ids, scene_tokens(scene).labels) == 1.0
            exact += world.scale == scale
            ulps = max(ulps, abs(world.scale - scale) / np.spacing(scale))
        print(f"{views:5d} {scale:6.2f} {worst:10.2e} {acc_ok:6d} {exact:14d} {ulps:9.3g}")


if __name__ == "__main__":
    cli()

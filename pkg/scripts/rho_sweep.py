"""Association accuracy and F1 as the identity signal rho goes from 0 to 1.

Compares the cosine baseline, an untrained learned model and a random labeling
on default-spec scenes.

    python3 scripts/rho_sweep.py --seeds 50
"""

import argparse

import numpy as np

from mvhuman.association import AssocConfig, AssociationModel, scene_tokens, select_active_queries
from mvhuman.metrics import association_accuracy, association_f1
from mvhuman.simulator import SceneSpec, generate_scene


def cli():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--rhos", default="0,0.2,0.4,0.6,0.8,1.0")
    args = ap.parse_args()
    models = {"cosine": AssociationModel(AssocConfig(mode="cosine")), "learned": AssociationModel(AssocConfig())}
    rng = np.random.default_rng(0)
    print(f"{'rho':>5} " + " ".join(f"{name + '_acc':>12} {name + '_f1':>11}" for name in [*models, "random"]))
    for rho in (float(x) for x in args.rhos.split(",")):
        acc = {k: [] for k in [*models, "random"]}
        f1 = {k: [] for k in acc}
        for seed in range(args.seeds):
            scene = generate_scene(SceneSpec(seed=seed, rho=rho))
            tok = scene_tokens(scene)
            preds = {k: m(tok, scene.num_views).identities for k, m in models.items()}
            P = select_active_queries(AssocConfig().max_queries, tok.counts(scene.num_views))
            preds["random"] = rng.integers(0, P, len(tok))
            for k, ids in preds.items():
                acc[k].append(association_accuracy(ids, tok.labels))
                f1[k].append(association_f1(ids, tok.labels))
        print(f"{rho:5.2f} " + " ".join(f"{np.mean(acc[k]):12.4f} {np.mean(f1[k]):11.4f}" for k in acc))


if __name__ == "__main__":
    cli()

"""Run the whole CLI chain into one directory: gen, train-assoc, infer, eval, view sweep, ablate, report.

    python3 scripts/run_all.py --out runs/demo            # about 10 minutes on one core
    python3 scripts/run_all.py --out runs/quick --quick   # under a minute
"""

import argparse
import sys
from pathlib import Path

from mvhuman.cli import main


def run(argv):
    print("$ mvhuman " + " ".join(argv), flush=True)
    code = main(argv)
    if code != 0:
        sys.exit(code)


def cli():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/demo")
    ap.add_argument("--quick", action="store_true", help="tiny sizes for a smoke run")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    jobs = ["--jobs", str(args.jobs)]
    n_scenes = "5" if args.quick else "50"
    train = (["--n-easy", "10", "--n-hard", "10", "--n-heldout", "5", "--epochs-easy", "1", "--epochs-hard", "1"]
             if args.quick else [])
    ablate = (["--seeds", "0-1", "--n-train", "4", "--epochs", "1", "--n-eval", "3"] if args.quick
              else ["--seeds", "0-9"])

    run(["gen", "--out", str(out / "scenes"), "--n", n_scenes, "--seed", "7000", *jobs])
    run(["train-assoc", "--out", str(out / "train"), *train])
    ckpt = str(out / "train" / "checkpoint.bin")
    for name, extra in (("pred", []), ("pred_no_tri", ["--no-triangulation"])):
        run(["infer", "--scenes", str(out / "scenes"), "--out", str(out / name), "--checkpoint", ckpt,
             *extra, *jobs])
        run(["eval", "--scenes", str(out / "scenes"), "--pred", str(out / name), "--out", str(out / f"eval_{name}"),
             *jobs])
    run(["eval", "--scenes", str(out / "scenes"), "--views", "1-4", "--checkpoint", ckpt,
         "--out", str(out / "eval_views"), *jobs])
    run(["ablate", "--out", str(out / "ablate"), *ablate, *jobs])
    run(["report", str(out / "eval_pred" / "per_scene.csv"), str(out / "eval_views" / "sweep.csv"),
         str(out / "ablate" / "ablation.csv"), str(out / "ablate" / "sweep.csv"),
         str(out / "train" / "loss_curve.csv"), "--out", str(out / "report")])


if __name__ == "__main__":
    cli()

"""End-to-end desk run through the command line: data, features, training, forecasts, calibration, scores.

    python3 scripts/desk_pipeline.py --out runs/desk [--epochs 30]
"""

import argparse
import sys
from pathlib import Path

from rainkit.cli import run


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    man = out / "feat/manifest.json"
    ckpt = out / "run/model.ckpt"
    steps = [
        ["synth", "--out", out / "raw", "--t", 400, "--step-days", 2, "--nwp-members", 11, "--seed", args.seed],
        ["features", "--manifest", out / "raw/manifest.json", "--out", out / "feat"],
        ["train", "--manifest", man, "--out", out / "run", "--epochs", args.epochs, "--lr", 3e-3, "--batch-size", 32, "--base-width", 8, "--seed", args.seed],
        ["predict", "--manifest", man, "--checkpoint", ckpt, "--split", "train", "--out", out / "unet_train"],
        ["predict", "--manifest", man, "--checkpoint", ckpt, "--split", "val", "--out", out / "unet_val"],
        ["predict", "--manifest", man, "--checkpoint", ckpt, "--split", "test", "--out", out / "unet_test"],
        ["clim", "--manifest", man, "--split", "test", "--out", out / "clim"],
        ["uq-fit", "--forecast", out / "unet_train", "--out", out / "idr.gidr"],
        ["uq-predict", "--fit", out / "idr.gidr", "--forecast", out / "unet_test", "--out", out / "cdfs.json"],
        ["hybrid-fit", "--unet", out / "unet_val", "--manifest", man, "--out", out / "beta.json"],
        ["hybrid-apply", "--unet", out / "unet_test", "--manifest", man, "--beta", out / "beta.json", "--out", out / "hyb"],
        ["score", "mae", "--forecast", out / "unet_test", "--out", out / "scores/unet"],
        ["score", "crps", "--forecast", out / "unet_test", "--cdfs", out / "cdfs.json", "--out", out / "scores/unet"],
        ["score", "crps", "--forecast", out / "clim", "--out", out / "scores/clim"],
        ["score", "crps", "--forecast", out / "hyb", "--out", out / "scores/hyb"],
        ["score", "skill", "--model", out / "scores/unet/crps.csv", "--clim", out / "scores/clim/crps.csv", "--out", out / "scores/skill_unet"],
        ["score", "skill", "--model", out / "scores/hyb/crps.csv", "--clim", out / "scores/clim/crps.csv", "--out", out / "scores/skill_hyb"],
        ["score", "bias", "--forecast", out / "unet_test", "--out", out / "scores/bias_unet.csv"],
        ["score", "bias", "--forecast", out / "hyb", "--out", out / "scores/bias_hyb.csv"],
        ["score", "chi2", out / "scores/bias_unet.csv", out / "scores/bias_hyb.csv", "--out", out / "scores/chi2.json"],
        ["heatmap", "--csv", out / "scores/skill_unet/skill.csv", "--out", out / "scores/skill_unet.pgm"],
    ]
    for tau in (0.5, 10):
        for name in ("unet_test", "clim", "hyb"):
            steps.append(["score", "prf1", "--forecast", out / name, "--tau", tau, "--out", out / f"scores/prf1_{name}"])
    for argv in steps:
        argv = [str(a) for a in argv]
        print("$ rainkit", " ".join(argv), flush=True)
        code = run(argv)
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``rainkit <subcommand> ...``.

Exit codes: 0 success, 64 usage / unknown subcommand, 65 invalid input,
70 numeric failure, 74 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .climatology import ClimatologyTable, NoClimatologyData, clim_forecasts
from .dataset import ManifestError, SplitSpec, default_split, fit_normalizer, load_manifest, split_dataset
from .easyuq import InvalidCDF, crps_ensemble, idr_fit_grid, idr_predict, load_idr_grid, save_idr_grid
from .forecasts import ForecastSet, load_cdf_set, load_forecast_set, save_cdf_set
from .gtf import FormatError
from .hybrid import BlendWeight, blend, blend_ensemble, fit_beta
from .importance import (
    GibbsConfig,
    NonFiniteLoss,
    gibbs_run,
    sensitivity,
    write_chain_csv,
    write_means_json,
    write_ranking_csv,
)
from .scoring import (
    AlignmentError,
    ScoreMap,
    bias_histogram,
    chi2_homogeneity,
    crps_map,
    crps_map_from_scores,
    mae_map,
    prf1,
    read_histogram_csv,
    read_score_csv,
    skill_map,
    write_heatmap,
    write_histogram_csv,
    write_score_csv,
    write_summary,
)
from .synth import SynthConfig, add_features, synth_generate
from .unet import ConfigError, TrainConfig, TrainingError, UNetConfig, build, load_checkpoint, save_checkpoint, train

log = logging.getLogger("rainkit")

EX_OK = 0
EX_USAGE = 64
EX_DATAERR = 65
EX_SOFTWARE = 70
EX_IOERR = 74

DATA_ENV = "RAINKIT_DATA"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _record(out: Path, args: argparse.Namespace) -> None:
    """Reproducibility record next to every command's output."""
    out = out if out.suffix == "" else out.parent
    out.mkdir(parents=True, exist_ok=True)
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    record = {"command": args.command, "args": resolved, "version": __version__, "python": platform.python_version(), "numpy": np.__version__}
    name = f"run_{args.command}{'_' + args.kind if getattr(args, 'kind', None) else ''}.json"
    (out / name).write_text(json.dumps(record, indent=1, default=str))


def _split_spec(T: int, args) -> SplitSpec:
    if args.n_test is None and args.n_val is None:
        return default_split(T)
    n_val = args.n_val or 0
    n_test = args.n_test or 0
    return SplitSpec(T - n_val - n_test, n_val, n_test)


def _split_dates(manifest, spec: SplitSpec, which: str):
    train_d, val_d, test_d = split_dataset(manifest, spec)
    return {"train": train_d, "val": val_d, "test": test_d, "all": list(manifest.dates)}[which]


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed, T=args.t, K=args.k, H=args.height, W=args.width,
        step_days=args.step_days, lead_time_hours=args.lead_time, nwp_members=args.nwp_members,
    )
    manifest = synth_generate(args.out, cfg, with_features=False)
    print(f"wrote {manifest.T} dates, {len(manifest.variables)} raw channels to {args.out}/manifest.json")
    _record(Path(args.out), args)
    return EX_OK


def cmd_features(args) -> int:
    manifest = load_manifest(args.manifest)
    new = add_features(manifest, args.out)
    print(f"wrote {len(new.variables)}-channel cubes to {args.out}/manifest.json")
    _record(Path(args.out), args)
    return EX_OK


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    spec = _split_spec(manifest.T, args)
    train_d, val_d, _ = split_dataset(manifest, spec)
    x_train = manifest.load_inputs(train_d)
    normalizer = fit_normalizer(x_train)
    xt, yt = normalizer.apply(x_train), manifest.load_targets(train_d)
    xv = normalizer.apply(manifest.load_inputs(val_d)) if val_d else None
    yv = manifest.load_targets(val_d) if val_d else None
    cfg = UNetConfig(in_channels=len(manifest.variables), base_width=args.base_width, depth=args.depth)
    cfg.check_spatial(*manifest.shape)
    model = build(cfg, seed=args.seed)
    tcfg = TrainConfig(lr=args.lr, weight_decay=args.weight_decay, batch_size=args.batch_size,
                       max_epochs=args.epochs, patience=args.patience, seed=args.seed)
    result = train(model, xt, yt, tcfg, xv, yv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "model.ckpt", normalizer=normalizer, epoch=result.best_epoch,
                    val_loss=result.best_loss, split=[spec.n_train, spec.n_val, spec.n_test],
                    variables=list(manifest.variables))
    with open(out / "history.csv", "w") as fh:
        fh.write("epoch,train_l1,val_l1,lr\n")
        for e, tl in enumerate(result.train_loss):
            vl = result.val_loss[e] if result.val_loss else ""
            fh.write(f"{e},{tl!r},{vl!r},{result.lr[e]!r}\n")
    print(f"best epoch {result.best_epoch}, monitored L1 {result.best_loss:.4f}; checkpoint {out / 'model.ckpt'}")
    _record(out, args)
    return EX_OK


def _load_model(args, manifest):
    model, header = load_checkpoint(args.checkpoint)
    if model.config.in_channels != len(manifest.variables):
        raise ConfigError(f"checkpoint expects {model.config.in_channels} channels, manifest has {len(manifest.variables)}")
    spec = SplitSpec(*header["split"]) if header.get("split") else default_split(manifest.T)
    return model, header["normalizer"], spec


def cmd_predict(args) -> int:
    manifest = load_manifest(args.manifest)
    model, normalizer, spec = _load_model(args, manifest)
    dates = _split_dates(manifest, spec, args.split)
    x = normalizer.apply(manifest.load_inputs(dates))
    preds = model.predict(x)
    truth = manifest.load_targets(dates) if manifest.targets else None
    ForecastSet("UNET", dates, preds, truth).save(args.out)
    print(f"wrote {len(dates)} predictions to {args.out}")
    _record(Path(args.out), args)
    return EX_OK


def cmd_clim(args) -> int:
    manifest = load_manifest(args.manifest)
    spec = _split_spec(manifest.T, args)
    dates = _split_dates(manifest, spec, args.split)
    table = ClimatologyTable(list(manifest.dates), manifest.load_targets())
    point, members = clim_forecasts(table, dates)
    ForecastSet("CLIM", dates, point.astype(np.float32), manifest.load_targets(dates), members).save(args.out)
    print(f"wrote climatology for {len(dates)} dates to {args.out}")
    _record(Path(args.out), args)
    return EX_OK


def cmd_uq_fit(args) -> int:
    fs = load_forecast_set(args.forecast)
    fits = idr_fit_grid(fs.predictions, fs.require_truth())
    save_idr_grid(fits, args.out)
    print(f"fitted {len(fits) * len(fits[0])} pixel models on {len(fs.dates)} dates -> {args.out}")
    _record(Path(args.out), args)
    return EX_OK


def cmd_uq_predict(args) -> int:
    fits = load_idr_grid(args.fit)
    fs = load_forecast_set(args.forecast)
    t, h, w = fs.predictions.shape
    if (h, w) != (len(fits), len(fits[0])):
        raise AlignmentError("forecast grid does not match the fitted grid")
    cdfs = [[[idr_predict(fits[i][j], fs.predictions[k, i, j]) for j in range(w)] for i in range(h)] for k in range(t)]
    save_cdf_set(args.out, fs.dates, cdfs)
    print(f"wrote {t * h * w} predictive CDFs to {args.out}")
    _record(Path(args.out), args)
    return EX_OK


def _nwp_for(manifest, dates):
    members = [m.astype(np.float64) for m in manifest.load_nwp(dates)]
    return members, np.stack([m.mean(axis=0) for m in members])


def cmd_hybrid_fit(args) -> int:
    unet = load_forecast_set(args.unet)
    manifest = load_manifest(args.manifest)
    _, nwp_point = _nwp_for(manifest, unet.dates)
    weight = fit_beta(unet.require_truth(), unet.predictions, nwp_point, split=args.split_name)
    Path(args.out).write_text(json.dumps(weight.__dict__, indent=1))
    print(f"beta = {weight.beta:.6f} over {weight.n} pairs ({weight.split})")
    _record(Path(args.out), args)
    return EX_OK


def cmd_hybrid_apply(args) -> int:
    unet = load_forecast_set(args.unet)
    manifest = load_manifest(args.manifest)
    weight = BlendWeight(**json.loads(Path(args.beta).read_text()))
    members, nwp_point = _nwp_for(manifest, unet.dates)
    point = blend(unet.predictions, nwp_point, weight.beta)
    hyb = [blend_ensemble(u, m, weight.beta).astype(np.float32) for u, m in zip(unet.predictions, members)]
    ForecastSet("HYB", unet.dates, point.astype(np.float32), unet.truth, hyb).save(args.out)
    print(f"wrote hybrid forecasts (beta={weight.beta:.4f}) to {args.out}")
    _record(Path(args.out), args)
    return EX_OK


def cmd_score(args) -> int:
    out = Path(args.out) if args.out else None
    kind = args.kind
    if kind == "chi2":
        stat, p = chi2_homogeneity(read_histogram_csv(args.inputs[0]), read_histogram_csv(args.inputs[1]))
        print(f"S={stat:.2f} p={p:.6g}")
        if out:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps({"S": stat, "p_value": p, "dof": 5}, indent=1))
            _record(out, args)
        return EX_OK
    if kind == "skill":
        result = skill_map(read_score_csv(args.model), read_score_csv(args.clim))
        print(f"skill mean={result.skill.mean:.4f} sd={result.skill.sd:.4f} flagged={int(result.flagged.sum())}")
        if out:
            out.mkdir(parents=True, exist_ok=True)
            write_score_csv(result.skill, out / "skill.csv")
            write_score_csv(ScoreMap(result.ternary.astype(float)), out / "skill_ternary.csv")
            write_summary(result.skill, out / "skill_summary.json")
            _record(out, args)
        return EX_OK

    fs = load_forecast_set(args.forecast)
    truth = fs.require_truth()
    if kind == "mae":
        score = mae_map(fs.predictions, truth)
    elif kind == "crps":
        if args.cdfs:
            dates, grids = load_cdf_set(args.cdfs)
            if dates != fs.dates:
                raise AlignmentError("CDF set dates do not match the forecast set")
            score = crps_map(grids, truth)
        elif fs.members is not None:
            score = crps_map_from_scores(np.stack([crps_ensemble(m, y) for m, y in zip(fs.members, truth)]))
        else:
            score = mae_map(fs.predictions, truth)
    elif kind == "prf1":
        res = prf1(fs.predictions, truth, args.tau)
        print(f"tau={args.tau}: P={res.P:.4f} R={res.R:.4f} F1={res.F1:.4f} undefined={res.undefined}")
        if out:
            out.mkdir(parents=True, exist_ok=True)
            for name, arr in (("precision", res.precision), ("recall", res.recall), ("f1", res.f1)):
                write_score_csv(ScoreMap(arr), out / f"{name}_{args.tau:g}.csv")
            (out / f"prf1_{args.tau:g}.json").write_text(
                json.dumps({"tau": args.tau, "P": res.P, "R": res.R, "F1": res.F1, "undefined": res.undefined}, indent=1)
            )
            _record(out, args)
        return EX_OK
    elif kind == "bias":
        hist = bias_histogram(fs.predictions, truth)
        print(" ".join(f"{c}" for c in hist.counts))
        if out:
            out.parent.mkdir(parents=True, exist_ok=True)
            write_histogram_csv(hist, out)
            _record(out, args)
        return EX_OK
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(kind)
    print(f"{kind} mean={score.mean:.4f} sd={score.sd:.4f}")
    if out:
        out.mkdir(parents=True, exist_ok=True)
        write_score_csv(score, out / f"{kind}.csv")
        write_summary(score, out / f"{kind}_summary.json")
        _record(out, args)
    return EX_OK


def cmd_importance(args) -> int:
    manifest = load_manifest(args.manifest)
    model, normalizer, spec = _load_model(args, manifest)
    dates = _split_dates(manifest, spec, args.split)
    x = normalizer.apply(manifest.load_inputs(dates))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = list(manifest.variables)
    if args.kind == "gibbs":
        cfg = GibbsConfig(r=args.r, sigma2=args.sigma2, epochs=args.epochs, burn_in=args.burn_in, seed=args.seed, scan=args.scan)
        chain = gibbs_run(model, x, manifest.load_targets(dates), cfg, names)
        write_chain_csv(chain, out / "chain.csv")
        write_means_json(chain, out / "posterior_means.json")
        ranking = chain.ranking(args.top)
        write_ranking_csv(ranking, out / "top.csv")
    else:
        scores = sensitivity(model, x)
        ranking = sorted(zip(names, scores.tolist()), key=lambda kv: -kv[1])[: args.top]
        write_ranking_csv(ranking, out / "sensitivity.csv")
    for i, (name, value) in enumerate(ranking, 1):
        print(f"{i:3d} {name:>10s} {value:.4f}")
    _record(out, args)
    return EX_OK


def cmd_heatmap(args) -> int:
    score = read_score_csv(args.csv)
    scale = write_heatmap(score.values, args.out)
    print(f"wrote {args.out} (min={scale['min']:.4g}, max={scale['max']:.4g})")
    _record(Path(args.out), args)
    return EX_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rainkit", description="Rainfall forecasting and verification toolkit")
    p.add_argument("--threads", type=int, default=1, help="worker threads (recorded; 1 keeps runs bit-reproducible)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--out", default=os.environ.get(DATA_ENV, "data"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--t", type=int, default=40)
    s.add_argument("--k", type=int, default=6, help="model input channels incl. COS and SIN")
    s.add_argument("--height", type=int, default=16)
    s.add_argument("--width", type=int, default=16)
    s.add_argument("--step-days", type=int, default=5)
    s.add_argument("--lead-time", type=int, default=12)
    s.add_argument("--nwp-members", type=int, default=51)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("features", help="append COS/SIN seasonal channels")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    def split_args(sp):
        sp.add_argument("--n-val", type=int)
        sp.add_argument("--n-test", type=int)

    s = sub.add_parser("train", help="train the U-Net with the summed L1 loss")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    split_args(s)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--weight-decay", type=float, default=1e-4)
    s.add_argument("--batch-size", type=int, default=256)
    s.add_argument("--patience", type=int, default=100)
    s.add_argument("--base-width", type=int, default=8)
    s.add_argument("--depth", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="run a checkpoint on a split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("clim", help="climatology forecasts for a split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    split_args(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_clim)

    s = sub.add_parser("uq-fit", help="fit per-pixel isotonic distributional regression")
    s.add_argument("--forecast", required=True, help="forecast set with truth (training or validation split)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_uq_fit)

    s = sub.add_parser("uq-predict", help="predictive CDFs for point forecasts")
    s.add_argument("--fit", required=True)
    s.add_argument("--forecast", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_uq_predict)

    s = sub.add_parser("hybrid-fit", help="fit the U-Net/NWP blend weight")
    s.add_argument("--unet", required=True)
    s.add_argument("--manifest", required=True, help="manifest listing NWP ensembles")
    s.add_argument("--split-name", default="val", help="label recorded with the weight")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_hybrid_fit)

    s = sub.add_parser("hybrid-apply", help="blend U-Net forecasts with every NWP member")
    s.add_argument("--unet", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--beta", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_hybrid_apply)

    s = sub.add_parser("score", help="verification scores")
    s.add_argument("kind", choices=["mae", "crps", "skill", "prf1", "bias", "chi2"])
    s.add_argument("inputs", nargs="*", help="two histogram CSVs for chi2")
    s.add_argument("--forecast")
    s.add_argument("--cdfs")
    s.add_argument("--model", help="model CRPS csv (skill)")
    s.add_argument("--clim", help="climatology CRPS csv (skill)")
    s.add_argument("--tau", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("importance", help="input-variable importance")
    s.add_argument("kind", choices=["gibbs", "sensitivity"])
    s.add_argument("--manifest", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    s.add_argument("--r", type=float, default=3.76)
    s.add_argument("--sigma2", type=float, default=0.01)
    s.add_argument("--epochs", type=int, default=1000)
    s.add_argument("--burn-in", type=int, default=950)
    s.add_argument("--scan", choices=["sequential", "random"], default="sequential")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--top", type=int, default=30)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_importance)

    s = sub.add_parser("heatmap", help="grayscale PGM of a score map CSV")
    s.add_argument("--csv", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_heatmap)
    return p


def _validate(args) -> None:
    if args.command == "score":
        need = {"chi2": [], "skill": ["model", "clim"]}.get(args.kind, ["forecast"])
        missing = [f"--{n}" for n in need if getattr(args, n) is None]
        if missing:
            raise UsageError(f"score {args.kind} requires {', '.join(missing)}")
        if args.kind == "chi2" and len(args.inputs) != 2:
            raise UsageError("score chi2 takes exactly two histogram CSV paths")


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        _validate(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EX_IOERR
    except (FloatingPointError, TrainingError, NonFiniteLoss, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EX_SOFTWARE
    except (FormatError, ManifestError, ConfigError, InvalidCDF, AlignmentError, NoClimatologyData, ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EX_DATAERR
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EX_IOERR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

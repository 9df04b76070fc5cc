"""Synthetic stand-in for reanalysis predictors and satellite rainfall.

Rainfall is a clamped function of raw channels 1 and 2 plus the COS seasonal
channel, so the relevant inputs are known by construction.  All other
channels are decoys.
"""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataset import DatasetManifest, grid_axes, latitude_grid, make_seasonal_features
from .gtf import write_grid_file

SEASONAL_NAMES = ("COS", "SIN")
SIGNAL_CHANNELS = (1, 2)


@dataclass
class SynthConfig:
    seed: int = 0
    T: int = 40
    K: int = 6  # model input channels, COS and SIN included
    H: int = 16
    W: int = 16
    start: dt.date = dt.date(2000, 6, 1)
    step_days: int = 5
    lead_time_hours: int = 12
    nwp_members: int = 51
    noise: float = 0.1

    def __post_init__(self):
        if min(self.T, self.H, self.W, self.step_days, self.lead_time_hours) <= 0:
            raise ValueError("counts must be positive")
        if self.K < 5:
            raise ValueError("K must be at least 5 (three raw channels plus COS and SIN)")
        if self.nwp_members < 0:
            raise ValueError("nwp_members must be nonnegative")


@dataclass
class SynthData:
    dates: list[dt.date]
    variables: list[str]  # all K channel names
    inputs: np.ndarray  # (T, K, H, W) raw units, seasonal channels last
    rain: np.ndarray  # (T, H, W) mm
    nwp: np.ndarray | None  # (T, M, H, W)
    lat: np.ndarray
    lon: np.ndarray

    @property
    def relevant(self) -> list[int]:
        """Indices of the channels the rainfall depends on."""
        return [*SIGNAL_CHANNELS, self.variables.index("COS")]


def raw_names(n: int) -> list[str]:
    return [f"v{k}" for k in range(n)]


def _smooth_field(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    sigma = max(h, w) / 8.0
    f = gaussian_filter(rng.standard_normal((h, w)), sigma=sigma, mode="wrap")
    sd = f.std()
    return f / sd if sd > 0 else f


def synth_arrays(cfg: SynthConfig) -> SynthData:
    rng = np.random.default_rng(cfg.seed)
    n_raw = cfg.K - 2
    lat, lon = grid_axes(cfg.H, cfg.W)
    lat_grid = latitude_grid(lat, cfg.W)
    lat_scale = float(np.max(np.abs(lat)))
    dates = [cfg.start + dt.timedelta(days=cfg.step_days * t) for t in range(cfg.T)]

    inputs = np.empty((cfg.T, cfg.K, cfg.H, cfg.W), dtype=np.float32)
    rain = np.empty((cfg.T, cfg.H, cfg.W), dtype=np.float32)
    for t, date in enumerate(dates):
        for k in range(n_raw):
            inputs[t, k] = 3.0 * _smooth_field(rng, cfg.H, cfg.W) + 10.0 * k
        cos_f, sin_f = make_seasonal_features(date, lat_grid)
        inputs[t, n_raw], inputs[t, n_raw + 1] = cos_f, sin_f
        f1 = (inputs[t, 1] - 10.0) / 3.0
        f2 = (inputs[t, 2] - 20.0) / 3.0
        signal = 1.0 * f1 + 0.8 * f2 + 1.5 * cos_f / lat_scale + 0.5
        noise = cfg.noise * rng.standard_normal((cfg.H, cfg.W))
        rain[t] = 4.0 * np.maximum(signal + noise, 0.0)

    nwp = None
    if cfg.nwp_members:
        nwp = np.empty((cfg.T, cfg.nwp_members, cfg.H, cfg.W), dtype=np.float32)
        for t in range(cfg.T):
            common = 0.8 * _smooth_field(rng, cfg.H, cfg.W)
            for m in range(cfg.nwp_members):
                member = rain[t] + 0.5 + common + 0.6 * _smooth_field(rng, cfg.H, cfg.W)
                nwp[t, m] = np.maximum(member, 0.0)

    variables = raw_names(n_raw) + list(SEASONAL_NAMES)
    return SynthData(dates, variables, inputs, rain, nwp, lat, lon)


def synth_generate(out_dir: str | Path, cfg: SynthConfig, with_features: bool = False) -> DatasetManifest:
    """Write a synthetic dataset under ``out_dir`` and return its manifest.

    Input files hold the raw predictors only unless ``with_features`` is set,
    in which case COS and SIN are appended as the last two channels.
    """
    out = Path(out_dir)
    (out / "inputs").mkdir(parents=True, exist_ok=True)
    (out / "rain").mkdir(exist_ok=True)
    data = synth_arrays(cfg)
    n_keep = cfg.K if with_features else cfg.K - 2
    files, targets, nwp = {}, {}, {}
    if data.nwp is not None:
        (out / "nwp").mkdir(exist_ok=True)
    for t, date in enumerate(data.dates):
        tag = date.isoformat()
        files[date] = f"inputs/{tag}.gtf"
        targets[date] = f"rain/{tag}.gtf"
        write_grid_file(data.inputs[t, :n_keep], out / files[date])
        write_grid_file(data.rain[t], out / targets[date])
        if data.nwp is not None:
            nwp[date] = f"nwp/{tag}.gtf"
            write_grid_file(data.nwp[t], out / nwp[date])
    manifest = DatasetManifest(
        dates=data.dates,
        lead_time_hours=cfg.lead_time_hours,
        variables=data.variables[:n_keep],
        lat=data.lat,
        lon=data.lon,
        files=files,
        targets=targets,
        nwp=nwp,
        root=out,
    )
    manifest.save(out / "manifest.json")
    return manifest


def add_features(manifest: DatasetManifest, out_dir: str | Path) -> DatasetManifest:
    """Append COS and SIN channels to every input cube, writing a new manifest."""
    if any(name in manifest.variables for name in SEASONAL_NAMES):
        raise ValueError("manifest already contains seasonal channels")
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    lat_grid = latitude_grid(manifest.lat, len(manifest.lon))
    files = {}
    for date in manifest.dates:
        cube = manifest.load_inputs([date])[0]
        cos_f, sin_f = make_seasonal_features(date, lat_grid)
        full = np.concatenate([cube, cos_f[None].astype(np.float32), sin_f[None].astype(np.float32)])
        files[date] = f"features/{date.isoformat()}.gtf"
        write_grid_file(full, out / files[date])

    def rebase(mapping):
        base = out.resolve()
        return {d: os.path.relpath(manifest.path(p).resolve(), base) for d, p in mapping.items()}

    new = DatasetManifest(
        dates=list(manifest.dates),
        lead_time_hours=manifest.lead_time_hours,
        variables=list(manifest.variables) + list(SEASONAL_NAMES),
        lat=manifest.lat,
        lon=manifest.lon,
        files=files,
        targets=rebase(manifest.targets),
        nwp=rebase(manifest.nwp),
        root=out,
    )
    new.save(out / "manifest.json")
    return new

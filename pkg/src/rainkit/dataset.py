"""Grid data model, dataset manifests, seasonal features, normalization and splits."""

from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .gtf import read_grid_file

# Pixel-centre latitude/longitude box of the study area (degrees N / degrees E).
LAT_RANGE = (4.3, 11.6)
LON_RANGE = (-3.8, 1.8)

STD_FLOOR = 1e-8


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class GridField:
    values: np.ndarray
    lat: np.ndarray
    lon: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"field must be 2D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        if len(self.lat) != values.shape[0] or len(self.lon) != values.shape[1]:
            raise ValueError("lat/lon lengths do not match field shape")
        for name, axis in (("lat", self.lat), ("lon", self.lon)):
            d = np.diff(np.asarray(axis, dtype=float))
            if len(d) and not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError(f"{name} must be strictly monotone")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class InputCube:
    values: np.ndarray  # (K, H, W)
    channel_names: tuple[str, ...]

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError(f"cube must be 3D, got shape {self.values.shape}")
        if len(self.channel_names) != self.values.shape[0]:
            raise ValueError("channel_names length does not match channel count")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ValueError("channel_names must be unique")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    def field(self, k: int, lat: np.ndarray, lon: np.ndarray) -> GridField:
        return GridField(self.values[k], lat, lon)


def grid_axes(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-centre latitudes (north to south) and longitudes (west to east)."""
    lat_lo, lat_hi = LAT_RANGE
    lon_lo, lon_hi = LON_RANGE
    dlat = (lat_hi - lat_lo) / height
    dlon = (lon_hi - lon_lo) / width
    lat = lat_hi - (np.arange(height) + 0.5) * dlat
    lon = lon_lo + (np.arange(width) + 0.5) * dlon
    return lat, lon


# ---------------------------------------------------------------------------
# seasonal features


def day_of_year(date: dt.date) -> int:
    """Day of year in 1..365; Feb 29 shares day 59 with Feb 28."""
    if date.month == 2 and date.day == 29:
        return 59
    doy = date.timetuple().tm_yday
    if _is_leap(date.year) and doy > 59:
        doy -= 1
    return doy


def _is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def seasonal_from_day(day: int, lat_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if not 1 <= day <= 365:
        raise ValueError(f"day must lie in 1..365, got {day}")
    lat_grid = np.asarray(lat_grid, dtype=np.float64)
    if not np.all(np.isfinite(lat_grid)):
        raise ValueError("lat_grid must be finite")
    phase = 2.0 * np.pi * day / 365.0
    return np.cos(phase) * lat_grid, np.sin(phase) * lat_grid


def make_seasonal_features(date: dt.date, lat_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """COS and SIN seasonal channels: cos/sin of the annual phase scaled by latitude.

    ``lat_grid`` is the per-pixel latitude (an (H, W) array, or anything
    broadcastable to it).
    """
    return seasonal_from_day(day_of_year(date), lat_grid)


def latitude_grid(lat: np.ndarray, width: int) -> np.ndarray:
    return np.repeat(np.asarray(lat, dtype=np.float64)[:, None], width, axis=1)


# ---------------------------------------------------------------------------
# normalization


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, cubes: np.ndarray, dtype=np.float32) -> np.ndarray:
        """Normalize (K, H, W) or (N, K, H, W) arrays channelwise; computed in float64."""
        shape = (-1, 1, 1)
        out = (np.asarray(cubes, dtype=np.float64) - self.mean.reshape(shape)) / self.std.reshape(shape)
        return out.astype(dtype, copy=False)

    def invert(self, cubes: np.ndarray) -> np.ndarray:
        shape = (-1, 1, 1)
        return np.asarray(cubes, dtype=np.float64) * self.std.reshape(shape) + self.mean.reshape(shape)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))

    @classmethod
    def identity(cls, channels: int) -> "Normalizer":
        return cls(np.zeros(channels), np.ones(channels))


def fit_normalizer(train_cubes: np.ndarray | Sequence[np.ndarray]) -> Normalizer:
    cubes = np.asarray(train_cubes, dtype=np.float64)
    if cubes.ndim != 4 or cubes.shape[0] == 0:
        raise ValueError("need a non-empty (N, K, H, W) stack of training cubes")
    if cubes.shape[0] < 2:
        raise ValueError("need at least 2 training cubes")
    mean = cubes.mean(axis=(0, 2, 3))
    std = cubes.std(axis=(0, 2, 3))
    return Normalizer(mean, np.maximum(std, STD_FLOOR))


def apply_normalizer(normalizer: Normalizer, cube: np.ndarray) -> np.ndarray:
    return normalizer.apply(cube)


# ---------------------------------------------------------------------------
# manifests and splits


@dataclass
class DatasetManifest:
    dates: list[dt.date]
    lead_time_hours: int
    variables: list[str]
    lat: np.ndarray
    lon: np.ndarray
    files: dict[dt.date, str]
    targets: dict[dt.date, str] = field(default_factory=dict)
    nwp: dict[dt.date, str] = field(default_factory=dict)
    root: Path = Path(".")

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ManifestError("dates must be strictly increasing")
        if self.lead_time_hours <= 0:
            raise ManifestError("lead_time_hours must be positive")
        if len(set(self.variables)) != len(self.variables):
            raise ManifestError("variable names must be unique")
        missing = [d for d in self.dates if d not in self.files]
        if missing:
            raise ManifestError(f"no input file listed for {missing[0].isoformat()}")

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.lat), len(self.lon)

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def load_inputs(self, dates: Iterable[dt.date] | None = None) -> np.ndarray:
        dates = self.dates if dates is None else list(dates)
        cubes = [read_grid_file(self.path(self.files[d])) for d in dates]
        out = np.stack(cubes) if cubes else np.zeros((0, len(self.variables)) + self.shape, np.float32)
        if out.shape[1] != len(self.variables):
            raise ManifestError(
                f"input files hold {out.shape[1]} channels, manifest declares {len(self.variables)}"
            )
        return out

    def load_targets(self, dates: Iterable[dt.date] | None = None) -> np.ndarray:
        dates = self.dates if dates is None else list(dates)
        if any(d not in self.targets for d in dates):
            raise ManifestError("manifest has no rainfall targets for some requested dates")
        return np.stack([read_grid_file(self.path(self.targets[d])) for d in dates])

    def load_nwp(self, dates: Iterable[dt.date] | None = None) -> list[np.ndarray]:
        dates = self.dates if dates is None else list(dates)
        if any(d not in self.nwp for d in dates):
            raise ManifestError("manifest has no NWP ensemble for some requested dates")
        return [read_grid_file(self.path(self.nwp[d])) for d in dates]

    def to_json(self) -> dict:
        out = {
            "dates": [d.isoformat() for d in self.dates],
            "lead_time_hours": self.lead_time_hours,
            "variables": list(self.variables),
            "lat": [float(v) for v in self.lat],
            "lon": [float(v) for v in self.lon],
            "files": {d.isoformat(): p for d, p in self.files.items()},
        }
        if self.targets:
            out["targets"] = {d.isoformat(): p for d, p in self.targets.items()}
        if self.nwp:
            out["nwp"] = {d.isoformat(): p for d, p in self.nwp.items()}
        return out

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)


def _date_map(raw: Mapping[str, str]) -> dict[dt.date, str]:
    return {dt.date.fromisoformat(k): v for k, v in raw.items()}


def load_manifest(path: str | os.PathLike, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    try:
        manifest = DatasetManifest(
            dates=[dt.date.fromisoformat(d) for d in raw["dates"]],
            lead_time_hours=int(raw["lead_time_hours"]),
            variables=list(raw["variables"]),
            lat=np.asarray(raw["lat"], dtype=np.float64),
            lon=np.asarray(raw["lon"], dtype=np.float64),
            files=_date_map(raw["files"]),
            targets=_date_map(raw.get("targets", {})),
            nwp=_date_map(raw.get("nwp", {})),
            root=path.parent,
        )
    except KeyError as exc:
        raise ManifestError(f"{path}: missing field {exc}") from exc
    if check_files:
        for mapping in (manifest.files, manifest.targets, manifest.nwp):
            for d, rel in mapping.items():
                if not manifest.path(rel).is_file():
                    raise ManifestError(f"file for {d.isoformat()} does not exist: {rel}")
    return manifest


@dataclass(frozen=True)
class SplitSpec:
    n_train: int
    n_val: int
    n_test: int

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ValueError("split sizes must be nonnegative")

    @property
    def total(self) -> int:
        return self.n_train + self.n_val + self.n_test


# Sizes used for the 21-year study window.
FULL_SCALE_SPLIT = SplitSpec(7636, 100, 55)


def split_dates(dates: Sequence[dt.date], spec: SplitSpec) -> tuple[list, list, list]:
    """Chronological split: train first, then validation, test is the final block."""
    if spec.total != len(dates):
        raise ValueError(f"split sizes sum to {spec.total}, dataset has T={len(dates)}")
    dates = list(dates)
    a, b = spec.n_train, spec.n_train + spec.n_val
    return dates[:a], dates[a:b], dates[b:]


def split_dataset(manifest: DatasetManifest, spec: SplitSpec) -> tuple[list, list, list]:
    return split_dates(manifest.dates, spec)


def default_split(T: int, val_fraction: float = 0.1, test_fraction: float = 0.2) -> SplitSpec:
    """A desk-scale chronological split for synthetic datasets."""
    n_test = max(1, int(round(T * test_fraction)))
    n_val = max(1, int(round(T * val_fraction))) if T >= 4 else 0
    return SplitSpec(T - n_val - n_test, n_val, n_test)

"""On-disk forecast sets and CDF sets.

A forecast set is a directory holding ``forecast.json``::

    {"model": str, "dates": [iso...], "predictions": "pred.gtf",
     "truth": "truth.gtf" | null, "members": {iso: path} | null}

``pred.gtf`` and ``truth.gtf`` are (T, H, W) GTF1 stacks; each member file
is an (M, H, W) ensemble for one date.  A CDF set is a JSON file listing
one discrete CDF per (date, row, col) in that order.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .easyuq import DiscreteCDF
from .gtf import read_grid_file, write_grid_file

INDEX = "forecast.json"


@dataclass
class ForecastSet:
    model: str
    dates: list[dt.date]
    predictions: np.ndarray  # (T, H, W)
    truth: Optional[np.ndarray] = None
    members: Optional[list[np.ndarray]] = None  # per date (M, H, W)

    def __post_init__(self):
        if self.predictions.ndim != 3 or len(self.dates) != self.predictions.shape[0]:
            raise ValueError("predictions must be (T, H, W) aligned with dates")
        if self.truth is not None and self.truth.shape != self.predictions.shape:
            raise ValueError("truth must match predictions in shape")
        if self.members is not None:
            if len(self.members) != len(self.dates):
                raise ValueError("one member stack per date is required")
            for m in self.members:
                if m.shape[1:] != self.predictions.shape[1:]:
                    raise ValueError("member grids must match the prediction grid")

    def require_truth(self) -> np.ndarray:
        if self.truth is None:
            raise ValueError(f"forecast set {self.model!r} carries no ground truth")
        return self.truth

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        index = {"model": self.model, "dates": [d.isoformat() for d in self.dates], "predictions": "pred.gtf"}
        write_grid_file(self.predictions, out / "pred.gtf")
        index["truth"] = None
        if self.truth is not None:
            write_grid_file(self.truth, out / "truth.gtf")
            index["truth"] = "truth.gtf"
        index["members"] = None
        if self.members is not None:
            (out / "members").mkdir(exist_ok=True)
            index["members"] = {}
            for d, m in zip(self.dates, self.members):
                rel = f"members/{d.isoformat()}.gtf"
                write_grid_file(m, out / rel)
                index["members"][d.isoformat()] = rel
        (out / INDEX).write_text(json.dumps(index, indent=1))
        return out


def load_forecast_set(directory) -> ForecastSet:
    root = Path(directory)
    if root.is_file():
        root = root.parent
    index = json.loads((root / INDEX).read_text())
    dates = [dt.date.fromisoformat(d) for d in index["dates"]]
    members = None
    if index.get("members"):
        members = [read_grid_file(root / index["members"][d.isoformat()]) for d in dates]
    truth = read_grid_file(root / index["truth"]) if index.get("truth") else None
    preds = read_grid_file(root / index["predictions"])
    if preds.ndim == 2:
        preds = preds[None]
        truth = truth[None] if truth is not None else None
    return ForecastSet(index["model"], dates, preds, truth, members)


def save_cdf_set(path, dates, cdfs) -> None:
    """``cdfs[t][i][j]`` is a DiscreteCDF; floats are written with full precision."""
    h, w = len(cdfs[0]), len(cdfs[0][0])
    flat = [[c.atoms.tolist(), c.cum.tolist()] for grid in cdfs for row in grid for c in row]
    payload = {"dates": [d.isoformat() for d in dates], "height": h, "width": w, "cdfs": flat}
    Path(path).write_text(json.dumps(payload))


def load_cdf_set(path) -> tuple[list[dt.date], list[list[list[DiscreteCDF]]]]:
    payload = json.loads(Path(path).read_text())
    dates = [dt.date.fromisoformat(d) for d in payload["dates"]]
    h, w = payload["height"], payload["width"]
    flat = [DiscreteCDF(np.array(a), np.array(c)) for a, c in payload["cdfs"]]
    if len(flat) != len(dates) * h * w:
        raise ValueError(f"{path}: expected {len(dates) * h * w} CDFs, found {len(flat)}")
    grids = [[flat[(t * h + i) * w : (t * h + i + 1) * w] for i in range(h)] for t in range(len(dates))]
    return dates, grids

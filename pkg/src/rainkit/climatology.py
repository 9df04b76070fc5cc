"""Climatology reference forecast from earlier years' rainfall in a +-2 day calendar window."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import day_of_year
from .easyuq import DiscreteCDF

HALF_WINDOW = 2
YEAR_DAYS = 365


class NoClimatologyData(LookupError):
    pass


@dataclass
class ClimatologyTable:
    dates: list[dt.date]
    rain: np.ndarray  # (T, H, W), mm

    def __post_init__(self):
        self.rain = np.asarray(self.rain)
        if self.rain.ndim != 3 or self.rain.shape[0] != len(self.dates):
            raise ValueError("rain must be (T, H, W) aligned with dates")
        if np.any(self.rain < 0):
            raise ValueError("historical rainfall must be nonnegative")
        self._doy = np.array([day_of_year(d) for d in self.dates])
        self._year = np.array([d.year for d in self.dates])

    def window_indices(self, date: dt.date) -> np.ndarray:
        """Indices of history dates from strictly earlier years within the calendar window."""
        center = day_of_year(date)
        d = (self._doy - center) % YEAR_DAYS
        near = (d <= HALF_WINDOW) | (d >= YEAR_DAYS - HALF_WINDOW)
        return np.flatnonzero(near & (self._year < date.year))

    def members(self, date: dt.date) -> np.ndarray:
        """The climatological ensemble (M, H, W) for a forecast date."""
        idx = self.window_indices(date)
        if idx.size == 0:
            raise NoClimatologyData(f"no earlier-year history within +-{HALF_WINDOW} days of {date.isoformat()}")
        return self.rain[idx]

    def mean_map(self, date: dt.date) -> np.ndarray:
        return self.members(date).astype(np.float64).mean(axis=0)


def clim_mean(table: ClimatologyTable, date: dt.date, pixel: tuple[int, int]) -> float:
    i, j = pixel
    return float(table.members(date)[:, i, j].astype(np.float64).mean())


def clim_cdf(table: ClimatologyTable, date: dt.date, pixel: tuple[int, int]) -> DiscreteCDF:
    i, j = pixel
    return DiscreteCDF.from_samples(table.members(date)[:, i, j])


def clim_forecasts(table: ClimatologyTable, dates: Sequence[dt.date]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Point forecasts (T, H, W) and ensembles (one (M_t, H, W) per date) for many dates."""
    members = [table.members(d) for d in dates]
    return np.stack([m.astype(np.float64).mean(axis=0) for m in members]), members

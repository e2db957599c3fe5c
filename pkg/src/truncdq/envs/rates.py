"""Day-of-week x half-hour arrival rate tables (arrivals per hour)."""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

import numpy as np

DAYS = 7
BINS = 48


class RateTableError(ValueError):
    pass


def load_rate_table(path) -> np.ndarray:
    """Read a ``day,bin,rate`` CSV into a dense (7, 48) array.

    Every (day, bin) cell must appear exactly once; errors name the CSV row
    (header is row 1).
    """
    table = np.full((DAYS, BINS), np.nan)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["day", "bin", "rate"]:
            raise RateTableError("row 1: expected header 'day,bin,rate'")
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise RateTableError(f"row {rownum}: expected 3 fields, got {len(row)}")
            try:
                day, b, rate = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise RateTableError(f"row {rownum}: {exc}") from None
            if not 0 <= day < DAYS:
                raise RateTableError(f"row {rownum}: day {day} outside 0..6")
            if not 0 <= b < BINS:
                raise RateTableError(f"row {rownum}: bin {b} outside 0..47")
            if not np.isfinite(rate) or rate < 0:
                raise RateTableError(f"row {rownum}: rate must be finite and >= 0")
            if not np.isnan(table[day, b]):
                raise RateTableError(f"row {rownum}: duplicate cell day={day}, bin={b}")
            table[day, b] = rate
    missing = np.argwhere(np.isnan(table))
    if len(missing):
        d, b = missing[0]
        raise RateTableError(f"missing cell day={d}, bin={b} ({len(missing)} cells missing)")
    return table


def write_rate_table(table: np.ndarray, path) -> None:
    table = np.asarray(table)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "bin", "rate"])
        for d in range(DAYS):
            for b in range(BINS):
                w.writerow([d, b, f"{table[d, b]:.4f}"])


def synthetic_rate_table() -> np.ndarray:
    """Bimodal daily profile (late-morning and evening peaks), quieter weekends.

    Day 0 is Sunday; days 0 and 6 are the weekend.
    """
    hours = (np.arange(BINS) + 0.5) / 2.0
    weekday = 0.8 + 2.2 * np.exp(-(((hours - 11.0) / 2.5) ** 2)) + 1.6 * np.exp(-(((hours - 19.0) / 2.5) ** 2))
    weekend = 0.7 + 1.4 * np.exp(-(((hours - 13.0) / 3.0) ** 2)) + 1.2 * np.exp(-(((hours - 20.0) / 2.5) ** 2))
    table = np.tile(weekday, (DAYS, 1))
    table[0] = weekend
    table[6] = weekend
    # Mondays run hot
    table[1] *= 1.1
    return np.round(table, 4)


def default_rate_table() -> np.ndarray:
    """The bundled synthetic table shipped with the package."""
    ref = resources.files("truncdq.envs") / "data" / "default_rates.csv"
    with resources.as_file(ref) as path:
        return load_rate_table(Path(path))

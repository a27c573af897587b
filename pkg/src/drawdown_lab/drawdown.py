"""Forward maximum-drawdown targets from per-security price histories.

Maximum drawdown is the largest peak-to-trough fractional loss, reported as a
positive number in [0, 1). The forward target attached to month t covers
prices observed strictly after t's month end, through the month end of
t + horizon, so the prediction month never sees its own window.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .panel import MonthStamp

logger = logging.getLogger(__name__)


def max_drawdown(prices: Sequence[float]) -> float:
    """Largest fractional peak-to-trough loss over an ordered price series.

    Single linear scan: tracks the running maximum and the worst loss from it.
    Returns 0.0 for a non-decreasing series; always < 1 for positive prices.
    """
    p = np.asarray(prices, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("max_drawdown needs at least 2 price observations")
    if not np.all(p > 0.0) or not np.all(np.isfinite(p)):
        raise ValueError("prices must be positive and finite")
    peak = p[0]
    worst = 0.0
    for x in p[1:]:
        if x > peak:
            peak = x
        else:
            dd = (peak - x) / peak
            if dd > worst:
                worst = dd
    return float(worst)


@dataclass(frozen=True)
class PriceSeries:
    """Ordered positive price observations for one security."""

    security: str
    timestamps: tuple
    prices: np.ndarray

    def __post_init__(self):
        ts = tuple(self.timestamps)
        p = np.asarray(self.prices, dtype=float)
        if len(ts) != p.size:
            raise ValueError("timestamps and prices must have equal length")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"timestamps for {self.security} must be strictly increasing")
        if p.size and (not np.all(p > 0.0) or not np.all(np.isfinite(p))):
            raise ValueError(f"prices for {self.security} must be positive and finite")
        p.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", p)

    def window(self, after: dt.date, through: dt.date) -> np.ndarray:
        """Prices with timestamp in (after, through]."""
        ts = self.timestamps
        mask = [(t > after) and (t <= through) for t in ts]
        return self.prices[np.array(mask, dtype=bool)] if ts else self.prices[:0]


@dataclass(frozen=True)
class DrawdownTarget:
    security: str
    month: MonthStamp
    mdd: float
    window: tuple  # (start exclusive, end inclusive)

    def __post_init__(self):
        if not 0.0 <= self.mdd < 1.0:
            raise ValueError(f"mdd {self.mdd} outside [0, 1)")


def forward_mdd_panel(
    series: Mapping[str, PriceSeries],
    months: Sequence[MonthStamp],
    horizon_months: int = 12,
    securities: Sequence[str] | None = None,
) -> list[DrawdownTarget]:
    """Forward maximum drawdown per (security, month) over the next ``horizon_months``.

    A month emits a target only when its window has at least two observations
    and the window's final month is covered by data, so the last
    ``horizon_months`` of the sample produce no targets. Securities requested
    but absent from ``series`` are skipped (counted in a warning).
    """
    if horizon_months < 1:
        raise ValueError("horizon_months must be >= 1")
    if securities is None:
        securities = sorted(series.keys())
    targets: list[DrawdownTarget] = []
    n_skipped = 0
    for sid in securities:
        ps = series.get(sid)
        if ps is None:
            n_skipped += 1
            continue
        ts = ps.timestamps
        if not ts:
            continue
        for m in months:
            start = m.month_end()
            final_month = m.plus(horizon_months)
            end = final_month.month_end()
            w = ps.window(start, end)
            if w.size < 2:
                continue
            # full coverage: the window must reach into its final month
            tail = [t for t in ts if start < t <= end]
            last = tail[-1]
            if MonthStamp.from_date(last) != final_month:
                continue
            targets.append(DrawdownTarget(sid, m, max_drawdown(w), (start, end)))
    if n_skipped:
        logger.warning("forward_mdd_panel: %d securities had no price series", n_skipped)
    return targets


def targets_as_mapping(targets: Sequence[DrawdownTarget]) -> dict:
    return {(t.security, t.month): t.mdd for t in targets}


def load_prices_csv(path) -> dict[str, PriceSeries]:
    """Read a price CSV (security_id, date, price); per-security rows must be in order."""
    frame = pd.read_csv(path, dtype={"security_id": str})
    for col in ("security_id", "date", "price"):
        if col not in frame.columns:
            raise ValueError(f"price CSV is missing required column {col!r}")
    out: dict[str, PriceSeries] = {}
    for sid, grp in frame.groupby("security_id", sort=True):
        dates = [dt.date.fromisoformat(str(d)) for d in grp["date"]]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError(f"price rows for {sid} are out of order or duplicated")
        out[str(sid)] = PriceSeries(str(sid), tuple(dates), grp["price"].to_numpy(dtype=float))
    return out


def save_targets_csv(targets: Sequence[DrawdownTarget], path) -> None:
    pd.DataFrame.from_records(
        [
            {
                "security_id": t.security,
                "date": t.month.month_end().isoformat(),
                "mdd": t.mdd,
            }
            for t in targets
        ]
    ).to_csv(path, index=False)

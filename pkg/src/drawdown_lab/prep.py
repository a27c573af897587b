"""Preprocessing chain: universe filters, lags, per-date z-scoring, imputation,
one-hot encoding. The orchestrated order is fixed (filters -> lags -> zscore ->
impute -> encode); :func:`preprocess` rejects any other ordering.

Every transform is a pure per-date function of the panel, so outputs do not
depend on evaluation schedule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .panel import FeatureSpec, PanelDataset

logger = logging.getLogger(__name__)

PREP_STAGES = ("filters", "lags", "zscore", "impute", "encode")


@dataclass(frozen=True)
class FilterPolicy:
    """Universe filter thresholds applied before any value transform."""

    min_consecutive_months: int = 1
    drop_smallest_fraction: float = 0.0
    require_positive: tuple = ()

    def __post_init__(self):
        if self.min_consecutive_months < 1:
            raise ValueError("min_consecutive_months must be >= 1")
        if not 0.0 <= self.drop_smallest_fraction < 1.0:
            raise ValueError("drop_smallest_fraction must lie in [0, 1)")
        object.__setattr__(self, "require_positive", tuple(self.require_positive))


@dataclass(frozen=True)
class ImputePolicy:
    """Cross-sectional imputation statistics, computed per date, never pooled."""

    numeric: str = "mean"
    categorical: str = "median"

    def __post_init__(self):
        if self.numeric != "mean" or self.categorical != "median":
            raise ValueError("supported policy: numeric mean / categorical median")


def _longest_run(flags: np.ndarray) -> int:
    best = run = 0
    for f in flags:
        run = run + 1 if f else 0
        best = max(best, run)
    return best


def apply_filters(ds: PanelDataset, policy: FilterPolicy, size_feature: Optional[str] = None) -> PanelDataset:
    """Drop rows per date (positivity, smallest-size fraction), then securities
    lacking a long-enough consecutive presence run.

    Missing values never trigger the positivity or size filters; imputation
    handles them later in the chain.
    """
    present = np.array(ds.present)
    for name in policy.require_positive:
        k = ds.feature_index(name)
        col = ds.values[:, :, k]
        bad = present & np.isfinite(col) & (col <= 0.0)
        present &= ~bad
    if policy.drop_smallest_fraction > 0.0:
        if size_feature is None:
            raise ValueError("drop_smallest_fraction > 0 requires a size_feature")
        k = ds.feature_index(size_feature)
        for j in range(len(ds.months)):
            live = np.where(present[:, j])[0]
            if live.size == 0:
                continue
            n_drop = math.ceil(live.size * policy.drop_smallest_fraction)
            # ties broken by security id so the drop set is deterministic
            with_size = [(ds.values[i, j, k], ds.securities[i], i) for i in live if np.isfinite(ds.values[i, j, k])]
            with_size.sort()
            for _, _, i in with_size[:n_drop]:
                present[i, j] = False
    if policy.min_consecutive_months > 1:
        for i in range(len(ds.securities)):
            if _longest_run(present[i]) < policy.min_consecutive_months:
                present[i, :] = False
    if not present.any():
        raise ValueError("filters removed every row from the panel")
    values = np.array(ds.values)
    target = np.array(ds.target)
    values[~present] = np.nan
    target[~present] = np.nan
    keep = np.where(present.any(axis=1))[0]
    return ds.replace(
        securities=tuple(ds.securities[i] for i in keep),
        values=values[keep],
        present=present[keep],
        target=target[keep],
    )


def apply_lags(ds: PanelDataset) -> PanelDataset:
    """Shift each column back by its own lag: the value shown at month t was
    observed at t - lag_months. Months with no lagged source become missing.
    Row presence and targets are untouched."""
    values = np.array(ds.values)
    M = len(ds.months)
    for k, f in enumerate(ds.features):
        lag = f.lag_months
        if lag == 0:
            continue
        col = np.full(values.shape[:2], np.nan)
        if lag < M:
            col[:, lag:] = ds.values[:, : M - lag, k]
        values[:, :, k] = col
    values[~ds.present] = np.nan
    return ds.replace(values=values)


def zscore_by_date(ds: PanelDataset) -> PanelDataset:
    """Standardize each continuous column within each date using the present
    values only (population standard deviation). Binary and categorical columns
    pass through. A zero-variance date-column maps to zeros."""
    values = np.array(ds.values)
    for k, f in enumerate(ds.features):
        if f.kind != "continuous":
            continue
        for j in range(len(ds.months)):
            col = values[:, j, k]
            live = ds.present[:, j] & np.isfinite(col)
            if not live.any():
                continue
            x = col[live]
            mu = x.mean()
            sd = x.std()
            if sd <= 0.0:
                col[live] = 0.0
            else:
                col[live] = (x - mu) / sd
            values[:, j, k] = col
    return ds.replace(values=values)


def impute(ds: PanelDataset, policy: ImputePolicy = ImputePolicy()) -> PanelDataset:
    """Fill missing cells per date: numeric with the cross-sectional mean,
    binary/categorical with the cross-sectional median (lower value on ties).

    A column with no present value on a date falls back to 0 for numeric and
    the most common value over prior dates for categorical/binary (0 if none);
    both fallbacks are logged.
    """
    values = np.array(ds.values)
    for k, f in enumerate(ds.features):
        numeric = f.kind == "continuous"
        for j in range(len(ds.months)):
            rows = ds.present[:, j]
            if not rows.any():
                continue
            col = values[:, j, k]
            holes = rows & np.isnan(col)
            if not holes.any():
                continue
            known = col[rows & np.isfinite(col)]
            if known.size:
                if numeric:
                    fill = known.mean()
                else:
                    fill = float(np.sort(known)[(known.size - 1) // 2])
            else:
                if numeric:
                    fill = 0.0
                else:
                    prior = values[:, :j, k][ds.present[:, :j]]
                    prior = prior[np.isfinite(prior)]
                    if prior.size:
                        cats, counts = np.unique(prior, return_counts=True)
                        fill = float(cats[np.argmax(counts)])
                    else:
                        fill = 0.0
                logger.info(
                    "impute: column %s empty on %s, filled with %s", f.name, ds.months[j], fill
                )
            col[holes] = fill
            values[:, j, k] = col
    return ds.replace(values=values)


def encode_categoricals(ds: PanelDataset) -> PanelDataset:
    """Replace each categorical column by one indicator column per category.

    Indicator columns are named ``<name>=<code>`` and inherit the source
    column's lag and groups. Codes outside 0..cardinality-1 produce an all-zero
    block. Indicators are binary and are never z-scored.
    """
    if not any(f.kind == "categorical" for f in ds.features):
        return ds
    new_feats: list[FeatureSpec] = []
    cols: list[np.ndarray] = []
    for k, f in enumerate(ds.features):
        col = ds.values[:, :, k]
        if f.kind != "categorical":
            new_feats.append(f)
            cols.append(col)
            continue
        codes = np.where(np.isfinite(col), np.rint(col), np.nan)
        for c in range(f.cardinality):
            ind = np.where(np.isnan(codes), np.nan, (codes == c).astype(float))
            new_feats.append(
                FeatureSpec(
                    name=f"{f.name}={c}",
                    kind="binary",
                    lag_months=f.lag_months,
                    groups=f.groups,
                )
            )
            cols.append(ind)
    values = np.stack(cols, axis=2)
    values[~ds.present] = np.nan
    return ds.replace(features=tuple(new_feats), values=values)


def encoded_feature_blocks(names: Sequence[str]) -> dict[str, list[int]]:
    """Group one-hot indicator columns back to their source feature.

    Columns named ``<source>=<code>`` form one block; every other column is its
    own block. Used so importance shuffles an encoded categorical jointly.
    """
    blocks: dict[str, list[int]] = {}
    for idx, name in enumerate(names):
        source = name.split("=", 1)[0] if "=" in name else name
        blocks.setdefault(source, []).append(idx)
    return blocks


@dataclass
class PrepSettings:
    filter_policy: Optional[FilterPolicy] = None
    size_feature: Optional[str] = None
    impute_policy: ImputePolicy = field(default_factory=ImputePolicy)
    stages: tuple = PREP_STAGES


def preprocess(ds: PanelDataset, settings: Optional[PrepSettings] = None) -> tuple[PanelDataset, pd.DataFrame]:
    """Run the preprocessing chain in its one legal order and collect an audit.

    ``settings.stages`` may omit stages but must preserve the canonical
    relative order; anything else is rejected. Returns the transformed panel
    and a per-date audit frame (rows filtered, cells imputed).
    """
    if settings is None:
        settings = PrepSettings()
    stages = tuple(settings.stages)
    expected = [s for s in PREP_STAGES if s in stages]
    if list(stages) != expected or len(set(stages)) != len(stages):
        raise ValueError(
            f"preprocessing stages must follow {PREP_STAGES}, got {stages}"
        )
    audit: list[dict] = []
    months = ds.months

    def _count_missing(d: PanelDataset) -> np.ndarray:
        return d.missing_mask.sum(axis=(0, 2))

    for stage in stages:
        if stage == "filters":
            if settings.filter_policy is None:
                continue
            before = ds.present.sum(axis=0)
            ds = apply_filters(ds, settings.filter_policy, settings.size_feature)
            after = np.zeros(len(months), dtype=int)
            offset = months.index(ds.months[0]) if ds.months[0] in months else 0
            after[offset : offset + len(ds.months)] = ds.present.sum(axis=0)
            for j, m in enumerate(months):
                dropped = int(before[j] - after[j])
                if dropped:
                    audit.append({"date": str(m), "stage": "filters", "count": dropped})
        elif stage == "lags":
            ds = apply_lags(ds)
        elif stage == "zscore":
            ds = zscore_by_date(ds)
        elif stage == "impute":
            before = _count_missing(ds)
            ds = impute(ds, settings.impute_policy)
            after = _count_missing(ds)
            for j, m in enumerate(ds.months):
                filled = int(before[j] - after[j])
                if filled:
                    audit.append({"date": str(m), "stage": "impute", "count": filled})
        elif stage == "encode":
            ds = encode_categoricals(ds)
    frame = pd.DataFrame(audit, columns=["date", "stage", "count"])
    return ds, frame

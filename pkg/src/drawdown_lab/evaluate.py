"""Out-of-sample evaluation: accuracy (MAE), agreement (concordance
correlation), per-date metric series, predicted-quantile tables, and signed
permutation feature importance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np


def mean_absolute_error(y, y_pred) -> float:
    y = np.asarray(y, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y.size == 0 or y.size != y_pred.size:
        raise ValueError(f"length mismatch or empty input: {y.size} vs {y_pred.size}")
    return float(np.mean(np.abs(y - y_pred)))


def concordance_correlation(y, y_pred) -> float:
    """Lin's concordance correlation coefficient with population moments:
    2*cov / ((mean shift)^2 + var_y + var_pred), in [-1, 1].

    Degenerate inputs: two constant vectors score 1 when equal-mean, 0
    otherwise; one constant vector scores 0.
    """
    y = np.asarray(y, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y.size < 2 or y.size != y_pred.size:
        raise ValueError("concordance needs two equal-length vectors of size >= 2")
    const_y = np.all(y == y[0])
    const_p = np.all(y_pred == y_pred[0])
    if const_y and const_p:
        return 1.0 if y[0] == y_pred[0] else 0.0
    if const_y or const_p:
        return 0.0  # a constant vector carries no concordance
    mu_y, mu_p = y.mean(), y_pred.mean()
    var_y = float(np.mean((y - mu_y) ** 2))
    var_p = float(np.mean((y_pred - mu_p) ** 2))
    cov = float(np.mean((y - mu_y) * (y_pred - mu_p)))
    denom = (mu_y - mu_p) ** 2 + var_y + var_p
    if denom == 0.0:
        return 0.0  # spreads too small to measure at float precision
    return float(2.0 * cov / denom)


@dataclass(frozen=True)
class PerDateMetric:
    month: object
    mae: float
    ccc: float  # NaN when the cross-section is too small
    n: int


@dataclass(frozen=True)
class MetricReport:
    mae: float
    ccc: float
    n: int
    per_date: tuple = ()
    top_quartile: Optional[dict] = None
    bottom_quartile: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {"mae": self.mae, "ccc": self.ccc, "n": self.n}
        if self.top_quartile is not None:
            d["top_quartile"] = self.top_quartile
        if self.bottom_quartile is not None:
            d["bottom_quartile"] = self.bottom_quartile
        return d


def per_date_metrics(months: Sequence, y, y_pred) -> list[PerDateMetric]:
    """Metrics within each date's cross-section, in chronological order."""
    y = np.asarray(y, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if len(months) != y.size or y.size != y_pred.size:
        raise ValueError("months, y and y_pred must align")
    out = []
    for m in sorted(set(months)):
        rows = np.array([mm == m for mm in months])
        n = int(rows.sum())
        mae = mean_absolute_error(y[rows], y_pred[rows])
        ccc = concordance_correlation(y[rows], y_pred[rows]) if n >= 2 else float("nan")
        out.append(PerDateMetric(m, mae, ccc, n))
    return out


def metric_report(y, y_pred, months: Sequence, size=None) -> MetricReport:
    """Overall + per-date metrics; with per-date ``size`` values, adds the top
    and bottom size-quartile breakdown (quartiles formed within each date)."""
    y = np.asarray(y, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    report = MetricReport(
        mae=mean_absolute_error(y, y_pred),
        ccc=concordance_correlation(y, y_pred),
        n=y.size,
        per_date=tuple(per_date_metrics(months, y, y_pred)),
    )
    if size is None:
        return report
    size = np.asarray(size, dtype=float).ravel()
    top = np.zeros(y.size, dtype=bool)
    bottom = np.zeros(y.size, dtype=bool)
    for m in set(months):
        rows = np.flatnonzero(np.array([mm == m for mm in months]))
        if rows.size < 4:
            continue
        q1, q3 = np.quantile(size[rows], [0.25, 0.75])
        bottom[rows[size[rows] <= q1]] = True
        top[rows[size[rows] >= q3]] = True

    def _sub(mask):
        if mask.sum() < 2:
            return None
        return {
            "mae": mean_absolute_error(y[mask], y_pred[mask]),
            "ccc": concordance_correlation(y[mask], y_pred[mask]),
            "n": int(mask.sum()),
        }

    return MetricReport(
        mae=report.mae, ccc=report.ccc, n=report.n, per_date=report.per_date,
        top_quartile=_sub(top), bottom_quartile=_sub(bottom),
    )


@dataclass(frozen=True)
class QuantileRow:
    window: object
    group: int  # 1 = lowest predicted drawdown
    n: int
    mean: float
    std: float
    deciles: tuple  # realized 10%..90% points


def quantile_analysis(windows: Sequence, y, y_pred, n_groups: int = 10) -> list[QuantileRow]:
    """Sort each window's rows by prediction and split into near-equal groups
    (remainder spread to the lowest groups); summarize realized values per group."""
    y = np.asarray(y, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if len(windows) != y.size or y.size != y_pred.size:
        raise ValueError("windows, y and y_pred must align")
    if n_groups < 2:
        raise ValueError("n_groups must be >= 2")
    out = []
    for w in sorted(set(windows)):
        rows = np.flatnonzero(np.array([ww == w for ww in windows]))
        if rows.size < n_groups:
            raise ValueError(f"window {w} has {rows.size} rows, fewer than {n_groups} groups")
        order = rows[np.argsort(y_pred[rows], kind="stable")]
        base, rem = divmod(order.size, n_groups)
        start = 0
        for g in range(n_groups):
            size = base + (1 if g < rem else 0)
            grp = order[start : start + size]
            start += size
            vals = y[grp]
            out.append(
                QuantileRow(
                    window=w,
                    group=g + 1,
                    n=size,
                    mean=float(vals.mean()),
                    std=float(vals.std()),
                    deciles=tuple(float(q) for q in np.quantile(vals, np.arange(1, 10) / 10.0)),
                )
            )
    return out


@dataclass(frozen=True)
class ImportanceEntry:
    feature: str
    score: float  # mean performance degradation across repeats
    stderr: float
    sign: str  # "+" or "-": direction of the prediction/feature relationship
    rank: int


def _relationship_sign(feature_values: np.ndarray, baseline_pred: np.ndarray) -> str:
    x = feature_values - feature_values.mean()
    slope = float(x @ (baseline_pred - baseline_pred.mean()))
    return "-" if slope < 0 else "+"


def permutation_importance(
    model,
    X,
    y,
    months: Sequence,
    feature_names: Optional[Sequence[str]] = None,
    metric: str = "mae",
    repeats: int = 5,
    seed: int = 0,
    groups: Optional[Mapping[str, Sequence[int]]] = None,
) -> list[ImportanceEntry]:
    """Within-date permutation importance with a relationship sign.

    Shuffling a feature inside each date preserves its cross-sectional
    distribution exactly. Degradation is metric(permuted) - metric(baseline)
    for MAE and baseline - permuted for concordance, so larger is always more
    important. One-hot blocks (see ``groups``) are permuted jointly; their sign
    comes from regressing baseline predictions on the block's category codes.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if metric not in ("mae", "ccc"):
        raise ValueError(f"unknown metric {metric!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(X.shape[1])]
    if groups is None:
        groups = {name: [j] for j, name in enumerate(feature_names)}

    month_rows = [np.flatnonzero(np.array([mm == m for mm in months])) for m in sorted(set(months))]
    baseline_pred = model.predict(X)

    def _score(pred):
        if metric == "mae":
            return mean_absolute_error(y, pred)
        return concordance_correlation(y, pred)

    baseline = _score(baseline_pred)
    names = list(groups.keys())
    seeds = np.random.SeedSequence(seed).spawn(len(names) * repeats)
    results = []
    for gi, name in enumerate(names):
        cols = list(groups[name])
        scores = []
        for rep in range(repeats):
            rng = np.random.default_rng(seeds[gi * repeats + rep])
            Xp = X.copy()
            for rows in month_rows:
                Xp[np.ix_(rows, cols)] = X[np.ix_(rng.permutation(rows), cols)]
            permuted = _score(model.predict(Xp))
            scores.append(permuted - baseline if metric == "mae" else baseline - permuted)
        scores = np.asarray(scores)
        stderr = float(scores.std(ddof=1) / math.sqrt(repeats)) if repeats > 1 else 0.0
        if len(cols) == 1:
            raw = X[:, cols[0]]
        else:
            raw = np.argmax(X[:, cols], axis=1).astype(float)
        results.append(
            (name, float(scores.mean()), stderr, _relationship_sign(raw, baseline_pred))
        )
    order = sorted(range(len(results)), key=lambda i: (-results[i][1], results[i][0]))
    entries = []
    for rank, i in enumerate(order, start=1):
        name, score, stderr, sign = results[i]
        entries.append(ImportanceEntry(name, score, stderr, sign, rank))
    return entries

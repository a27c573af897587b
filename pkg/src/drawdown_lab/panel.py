"""Pooled (security, month) panel: time axis, feature metadata, dataset container.

The panel is stored densely as a (security, month, feature) value cube over a
contiguous month range. A boolean ``present`` mask marks which (security, month)
observations actually exist; feature-level missingness is encoded as NaN inside
``values``. All operations return new datasets; instances are never mutated.
"""

from __future__ import annotations

import calendar
import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FEATURE_KINDS = ("continuous", "binary", "categorical")

GROUP_TAGS = ("FC", "trimmed_FC", "refined_ESG", "ESG_aggregate", "ESG_single")

# Industry-standard trimmed characteristic set used by the column-group loader
# fallback when no feature metadata is supplied.
TRIMMED_FC_NAMES = (
    "sector", "bm", "retvol", "beta", "mve", "roeq", "roaq",
    "mom1m", "mom6m", "mom12m", "mom36m", "ep",
)


@dataclass(frozen=True, order=True)
class MonthStamp:
    """A calendar month. Ordering and month arithmetic are exact."""

    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @property
    def index(self) -> int:
        return self.year * 12 + self.month - 1

    def plus(self, n: int) -> "MonthStamp":
        i = self.index + n
        return MonthStamp(i // 12, i % 12 + 1)

    def month_end(self) -> dt.date:
        return dt.date(self.year, self.month, calendar.monthrange(self.year, self.month)[1])

    @classmethod
    def from_index(cls, i: int) -> "MonthStamp":
        return cls(i // 12, i % 12 + 1)

    @classmethod
    def from_date(cls, d: dt.date) -> "MonthStamp":
        return cls(d.year, d.month)

    @classmethod
    def parse(cls, s: str) -> "MonthStamp":
        parts = str(s).strip().split("-")
        if len(parts) < 2:
            raise ValueError(f"cannot parse month from {s!r}; expected YYYY-MM or YYYY-MM-DD")
        return cls(int(parts[0]), int(parts[1]))

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_range(start: MonthStamp, end: MonthStamp) -> list[MonthStamp]:
    """Inclusive contiguous month range."""
    if end < start:
        raise ValueError(f"month range end {end} precedes start {start}")
    return [MonthStamp.from_index(i) for i in range(start.index, end.index + 1)]


@dataclass(frozen=True)
class FeatureSpec:
    """Per-column metadata: value kind, availability lag, and group membership.

    ``lag_months`` is how far back the value shown at month t was observed
    (accounting data is typically 6, return-derived signals 1, ESG scores 2).
    ``groups`` controls which feature-set cases select the column.
    """

    name: str
    kind: str = "continuous"
    lag_months: int = 0
    groups: frozenset = field(default_factory=lambda: frozenset({"FC"}))
    cardinality: Optional[int] = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("feature name must be non-empty")
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.lag_months < 0:
            raise ValueError("lag_months must be >= 0")
        if self.kind == "categorical":
            if self.cardinality is None or self.cardinality < 2:
                raise ValueError("categorical features need cardinality >= 2")
        elif self.cardinality is not None:
            raise ValueError("cardinality is only valid for categorical features")
        object.__setattr__(self, "groups", frozenset(self.groups))
        unknown = self.groups - set(GROUP_TAGS)
        if unknown:
            raise ValueError(f"unknown group tags {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "kind": self.kind,
            "lag_months": self.lag_months,
            "groups": sorted(self.groups),
        }
        if self.cardinality is not None:
            d["cardinality"] = self.cardinality
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSpec":
        return cls(
            name=d["name"],
            kind=d.get("kind", "continuous"),
            lag_months=int(d.get("lag_months", 0)),
            groups=frozenset(d.get("groups", ["FC"])),
            cardinality=d.get("cardinality"),
        )


class StackedPanel(NamedTuple):
    """Design matrix plus row bookkeeping emitted by :meth:`PanelDataset.stack`."""

    X: np.ndarray
    y: np.ndarray
    index: list  # list of (security_id, MonthStamp)
    n_excluded: int


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Immutable aligned panel of features and forward-drawdown targets.

    values : (S, M, F) float64, NaN marks a missing feature cell
    present : (S, M) bool, True where the (security, month) observation exists
    target : (S, M) float64 in [0, 1), NaN where no target is attached
    """

    securities: tuple
    months: tuple
    features: tuple
    values: np.ndarray
    present: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        S, M, F = len(self.securities), len(self.months), len(self.features)
        if len(set(self.securities)) != S:
            raise ValueError("security ids must be unique")
        if any(not s for s in self.securities):
            raise ValueError("security ids must be non-empty")
        idx = [m.index for m in self.months]
        if idx != list(range(idx[0], idx[0] + M)):
            raise ValueError("months must be a contiguous ascending range")
        names = [f.name for f in self.features]
        if len(set(names)) != F:
            raise ValueError("feature names must be unique")
        if self.values.shape != (S, M, F):
            raise ValueError(f"values shape {self.values.shape} != {(S, M, F)}")
        if self.present.shape != (S, M) or self.target.shape != (S, M):
            raise ValueError("present/target must have shape (S, M)")
        if not np.all(np.isnan(self.values[~self.present])):
            raise ValueError("absent rows must hold NaN values")
        finite_target = self.target[~np.isnan(self.target)]
        if finite_target.size and (finite_target.min() < 0.0 or finite_target.max() >= 1.0):
            raise ValueError("targets must lie in [0, 1)")
        vals = self.values[self.present]
        if np.any(np.isinf(vals)):
            raise ValueError("present feature values must be finite or NaN")
        for arr in (self.values, self.present, self.target):
            arr.flags.writeable = False

    # -- construction -------------------------------------------------------

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[tuple],
        features: Sequence[FeatureSpec],
    ) -> "PanelDataset":
        """Build a panel from (security_id, MonthStamp, feature dict, target) rows.

        The month axis becomes the contiguous hull of observed months; feature
        dict entries may omit columns or hold None/NaN for missing cells.
        """
        rows = list(rows)
        if not rows:
            raise ValueError("cannot build a panel from zero rows")
        features = tuple(features)
        sids = sorted({r[0] for r in rows})
        lo = min(r[1] for r in rows)
        hi = max(r[1] for r in rows)
        months = tuple(month_range(lo, hi))
        sid_pos = {s: i for i, s in enumerate(sids)}
        m_pos = {m: j for j, m in enumerate(months)}
        name_pos = {f.name: k for k, f in enumerate(features)}

        S, M, F = len(sids), len(months), len(features)
        values = np.full((S, M, F), np.nan)
        present = np.zeros((S, M), dtype=bool)
        target = np.full((S, M), np.nan)
        seen = set()
        for sid, month, feats, tgt in rows:
            key = (sid, month)
            if key in seen:
                raise ValueError(f"duplicate (security, month) row {key}")
            seen.add(key)
            i, j = sid_pos[sid], m_pos[month]
            present[i, j] = True
            for name, v in (feats or {}).items():
                if name not in name_pos:
                    raise ValueError(f"row references unknown feature {name!r}")
                if v is not None:
                    values[i, j, name_pos[name]] = v
            if tgt is not None and not (isinstance(tgt, float) and np.isnan(tgt)):
                target[i, j] = tgt
        return cls(tuple(sids), months, features, values, present, target)

    # -- basic accessors -----------------------------------------------------

    @property
    def missing_mask(self) -> np.ndarray:
        """True where a present row's feature cell is missing."""
        return np.isnan(self.values) & self.present[:, :, None]

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"no feature named {name!r}") from None

    def n_rows(self) -> int:
        return int(self.present.sum())

    def replace(self, **kw) -> "PanelDataset":
        base = dict(
            securities=self.securities, months=self.months, features=self.features,
            values=self.values, present=self.present, target=self.target,
        )
        base.update(kw)
        for key in ("values", "present", "target"):
            if key in kw:
                base[key] = np.array(kw[key])
        return PanelDataset(**base)

    # -- operations ----------------------------------------------------------

    def select_columns(self, groups: Iterable[str]) -> "PanelDataset":
        """Keep exactly the features whose group tags intersect ``groups``."""
        wanted = frozenset(groups)
        unknown = wanted - set(GROUP_TAGS)
        if unknown:
            raise ValueError(f"unknown group tags {sorted(unknown)}")
        keep = [k for k, f in enumerate(self.features) if f.groups & wanted]
        if not keep:
            raise ValueError(f"no features match groups {sorted(wanted)}")
        return self.replace(
            features=tuple(self.features[k] for k in keep),
            values=self.values[:, :, keep],
        )

    def slice_months(self, start: MonthStamp, end: MonthStamp) -> "PanelDataset":
        """Restrict to months in [start, end]; securities left empty are dropped."""
        if end < start:
            raise ValueError(f"slice end {end} precedes start {start}")
        lo = max(start, self.months[0])
        hi = min(end, self.months[-1])
        if hi < lo:
            raise ValueError(
                f"slice [{start}, {end}] does not intersect panel range "
                f"[{self.months[0]}, {self.months[-1]}]"
            )
        j0 = lo.index - self.months[0].index
        j1 = hi.index - self.months[0].index + 1
        present = self.present[:, j0:j1]
        keep = np.where(present.any(axis=1))[0]
        if keep.size == 0:
            raise ValueError(f"slice [{start}, {end}] contains no observations")
        return self.replace(
            securities=tuple(self.securities[i] for i in keep),
            months=tuple(self.months[j0:j1]),
            values=self.values[keep, j0:j1, :],
            present=present[keep],
            target=self.target[keep, j0:j1],
        )

    def stack(self) -> StackedPanel:
        """Flatten to a pooled design matrix over rows with a target.

        Rows are ordered month-major, then by ascending security id, so every
        downstream fit sees a deterministic ordering. Rows without a target are
        excluded and counted. Categorical columns must be one-hot encoded first.
        """
        for f in self.features:
            if f.kind == "categorical":
                raise ValueError(
                    f"categorical feature {f.name!r} must be one-hot encoded before stacking"
                )
        has_target = self.present & ~np.isnan(self.target)
        n_excluded = int(self.present.sum() - has_target.sum())
        rows_X, rows_y, index = [], [], []
        for j, m in enumerate(self.months):
            live = np.where(has_target[:, j])[0]
            for i in live:
                rows_X.append(self.values[i, j, :])
                rows_y.append(self.target[i, j])
                index.append((self.securities[i], m))
        if rows_X:
            X = np.array(rows_X)
            y = np.array(rows_y)
        else:
            X = np.empty((0, len(self.features)))
            y = np.empty(0)
        if n_excluded:
            logger.info("stack: excluded %d rows lacking targets", n_excluded)
        return StackedPanel(X, y, index, n_excluded)

    def lookup(self, security: str, month: MonthStamp) -> np.ndarray:
        """Feature vector for one (security, month) observation."""
        i = self.securities.index(security)
        j = month.index - self.months[0].index
        if not (0 <= j < len(self.months)) or not self.present[i, j]:
            raise KeyError(f"no observation for ({security}, {month})")
        return self.values[i, j, :]

    def with_targets(self, targets: Mapping[tuple, float]) -> "PanelDataset":
        """Attach targets keyed by (security_id, MonthStamp); others stay NaN."""
        target = np.full(self.target.shape, np.nan)
        m0 = self.months[0].index
        sid_pos = {s: i for i, s in enumerate(self.securities)}
        n_outside = 0
        for (sid, month), v in targets.items():
            i = sid_pos.get(sid)
            j = month.index - m0
            if i is None or not (0 <= j < len(self.months)) or not self.present[i, j]:
                n_outside += 1
                continue
            target[i, j] = v
        if n_outside:
            logger.info("with_targets: %d targets fell outside the panel", n_outside)
        return self.replace(target=target)


# -- CSV interface -----------------------------------------------------------


def load_panel_csv(path, features: Optional[Sequence[FeatureSpec]] = None) -> PanelDataset:
    """Read a panel CSV: security_id, date (YYYY-MM-DD), feature columns, [target].

    Empty cells are missing. Without explicit metadata every column is treated
    as continuous with lag 0, grouped FC (plus trimmed_FC for the industry-
    standard dozen names).
    """
    frame = pd.read_csv(path, dtype={"security_id": str})
    for col in ("security_id", "date"):
        if col not in frame.columns:
            raise ValueError(f"panel CSV is missing required column {col!r}")
    feat_cols = [c for c in frame.columns if c not in ("security_id", "date", "target")]
    if features is None:
        features = [
            FeatureSpec(
                name=c,
                groups=frozenset({"FC", "trimmed_FC"}) if c in TRIMMED_FC_NAMES else frozenset({"FC"}),
            )
            for c in feat_cols
        ]
    else:
        known = {f.name for f in features}
        extra = [c for c in feat_cols if c not in known]
        if extra:
            raise ValueError(f"panel CSV has columns absent from feature metadata: {extra}")
        features = [f for f in features if f.name in feat_cols]
    has_target = "target" in frame.columns
    rows = []
    for rec in frame.itertuples(index=False):
        d = rec._asdict()
        month = MonthStamp.parse(d["date"])
        feats = {c: (None if pd.isna(d[c]) else float(d[c])) for c in feat_cols}
        tgt = None
        if has_target and not pd.isna(d["target"]):
            tgt = float(d["target"])
        rows.append((d["security_id"], month, feats, tgt))
    return PanelDataset.from_rows(rows, features)


def save_panel_csv(ds: PanelDataset, path) -> None:
    """Write the panel in the one-row-per-observation CSV layout."""
    records = []
    for i, sid in enumerate(ds.securities):
        for j, m in enumerate(ds.months):
            if not ds.present[i, j]:
                continue
            rec = {"security_id": sid, "date": m.month_end().isoformat()}
            for k, f in enumerate(ds.features):
                v = ds.values[i, j, k]
                rec[f.name] = v if np.isfinite(v) else None
            if not np.isnan(ds.target[i, j]):
                rec["target"] = ds.target[i, j]
            records.append(rec)
    pd.DataFrame.from_records(records).to_csv(path, index=False)


def load_feature_specs(path) -> list[FeatureSpec]:
    """Read the feature-metadata sidecar JSON ({"features": [...]})."""
    import json

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return [FeatureSpec.from_dict(d) for d in doc["features"]]


def save_feature_specs(features: Sequence[FeatureSpec], path) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"features": [f.to_dict() for f in features]}, fh, indent=2, sort_keys=True)
        fh.write("\n")

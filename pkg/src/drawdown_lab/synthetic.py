"""Seeded synthetic panel + daily price generator for desk-scale verification.

Each security's log price traces one V-shaped dip per month (fall to mid-month,
recover by month end) whose depth is a planted function of that security's
slowly moving features, optionally with Brownian observation noise on top and a
crisis window that multiplies depths. Forward maximum drawdown over a
multi-month window is therefore genuinely predictable from current features:
linearly when only linear coefficients are planted, non-linearly when
interaction terms are planted.

Pure geometric noise could not support this: the realized drawdown of a random
walk has irreducible dispersion comparable to its level, which caps attainable
agreement well below the recovery targets the verification suite asserts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .drawdown import PriceSeries
from .panel import FeatureSpec, MonthStamp, PanelDataset, month_range

DAYS_PER_MONTH = 21

# default feature naming: a few industry-standard characteristic names first
# (so trimmed-set selection works on synthetic panels), generic fillers after
_NAMED = ("mve", "retvol", "beta", "bm", "mom12m", "ep")


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the generated world; everything derives from ``seed``."""

    n_securities: int = 50
    n_months: int = 120
    n_features: int = 10
    linear_coefficients: tuple = (-0.6, 0.8, 0.35, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    interactions: tuple = ()  # (feature_i, feature_j, coefficient)
    noise_level: float = 0.0  # annualized Brownian wiggle on log prices
    missing_fraction: float = 0.0
    crisis_months: Optional[tuple] = None  # ("YYYY-MM", "YYYY-MM") inclusive
    crisis_multiplier: float = 3.0
    seed: int = 0
    start_month: str = "1980-01"
    feature_persistence: float = 0.999  # month-over-month AR(1) coefficient
    depth_base: float = 0.30  # log-depth of the monthly dip at zero signal
    depth_scale: float = 0.12
    n_sectors: int = 0  # adds a categorical sector column when > 0
    sector_effect: float = 0.0
    n_esg: int = 0  # adds a refined/aggregate/single ESG block when > 0
    esg_effect: float = -0.05

    def __post_init__(self):
        if min(self.n_securities, self.n_months, self.n_features) < 1:
            raise ValueError("counts must be >= 1")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")
        if len(self.linear_coefficients) != self.n_features:
            raise ValueError("linear_coefficients must have one entry per feature")
        object.__setattr__(self, "linear_coefficients", tuple(self.linear_coefficients))
        object.__setattr__(self, "interactions", tuple(tuple(t) for t in self.interactions))
        if self.crisis_months is not None:
            object.__setattr__(self, "crisis_months", tuple(self.crisis_months))


def feature_names(spec: SyntheticSpec) -> list[str]:
    names = list(_NAMED[: min(len(_NAMED), spec.n_features)])
    names += [f"x{k:02d}" for k in range(len(names), spec.n_features)]
    return names


def feature_specs(spec: SyntheticSpec) -> list[FeatureSpec]:
    trimmed = set(_NAMED)
    specs = [
        FeatureSpec(
            name=n,
            kind="continuous",
            lag_months=1,
            groups=frozenset({"FC", "trimmed_FC"}) if n in trimmed else frozenset({"FC"}),
        )
        for n in feature_names(spec)
    ]
    if spec.n_sectors > 0:
        specs.append(
            FeatureSpec(
                name="sector", kind="categorical", lag_months=1,
                groups=frozenset({"FC", "trimmed_FC"}), cardinality=spec.n_sectors,
            )
        )
    if spec.n_esg > 0:
        for k in range(12):
            specs.append(FeatureSpec(f"esg_r{k:02d}", "continuous", 2, frozenset({"refined_ESG"})))
        for tag in ("esg_e", "esg_s", "esg_g"):
            specs.append(FeatureSpec(tag, "continuous", 2, frozenset({"ESG_aggregate"})))
        specs.append(FeatureSpec("esg", "continuous", 2, frozenset({"ESG_single"})))
    return specs


@dataclass
class SyntheticWorld:
    spec: SyntheticSpec
    panel: PanelDataset
    prices: dict  # security_id -> PriceSeries
    depths: np.ndarray  # (S, M) planted log dip depth per month


def _crisis_mask(spec: SyntheticSpec, months: Sequence[MonthStamp]) -> np.ndarray:
    mask = np.zeros(len(months), dtype=bool)
    if spec.crisis_months is not None:
        lo = MonthStamp.parse(spec.crisis_months[0])
        hi = MonthStamp.parse(spec.crisis_months[1])
        mask = np.array([lo <= m <= hi for m in months])
    return mask


def generate_world(spec: SyntheticSpec) -> SyntheticWorld:
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    S, M, F = spec.n_securities, spec.n_months, spec.n_features
    months = month_range(MonthStamp.parse(spec.start_month), MonthStamp.parse(spec.start_month).plus(M - 1))

    rho = spec.feature_persistence
    innov = np.sqrt(max(0.0, 1.0 - rho * rho))
    x = np.empty((S, M, F))
    x[:, 0, :] = rng.standard_normal((S, F))
    for t in range(1, M):
        x[:, t, :] = rho * x[:, t - 1, :] + innov * rng.standard_normal((S, F))

    signal = np.tensordot(x, np.asarray(spec.linear_coefficients), axes=([2], [0]))
    for i, j, c in spec.interactions:
        signal = signal + c * x[:, :, i] * x[:, :, j]

    sector = None
    if spec.n_sectors > 0:
        sector = rng.integers(0, spec.n_sectors, size=S)
        if spec.sector_effect:
            offsets = np.linspace(-1.0, 1.0, spec.n_sectors) * spec.sector_effect
            signal = signal + offsets[sector][:, None]

    esg = None
    if spec.n_esg > 0:
        esg_latent = rng.standard_normal(S)
        esg = {
            "latent": esg_latent,
            "refined": esg_latent[:, None] + 0.4 * rng.standard_normal((S, 12)),
        }
        esg["aggregate"] = np.stack(
            [esg["refined"][:, k::3].mean(axis=1) for k in range(3)], axis=1
        )
        esg["single"] = esg["aggregate"].mean(axis=1)
        signal = signal + spec.esg_effect * esg_latent[:, None]

    depths = np.clip(spec.depth_base + spec.depth_scale * signal, 0.02, 3.0)
    depths = depths * np.where(_crisis_mask(spec, months), spec.crisis_multiplier, 1.0)[None, :]

    # daily V profile: peak on day 1, trough mid-month, back to peak on day 21,
    # so every month in a forward window exposes its full dip
    half = DAYS_PER_MONTH // 2
    shape = np.concatenate(
        [np.linspace(0.0, 1.0, half + 1), np.linspace(1.0, 0.0, DAYS_PER_MONTH - half)[1:]]
    )
    sigma_daily = spec.noise_level / np.sqrt(252.0)
    levels = rng.uniform(np.log(10.0), np.log(500.0), size=S)
    prices: dict[str, PriceSeries] = {}
    sids = [f"S{i:04d}" for i in range(S)]
    dates = [
        m.month_end().replace(day=d + 1)
        for m in months
        for d in range(DAYS_PER_MONTH)
    ]
    for i, sid in enumerate(sids):
        dip = -np.outer(depths[i], shape).ravel()  # (M * days,)
        noise = sigma_daily * np.cumsum(rng.standard_normal(M * DAYS_PER_MONTH)) if sigma_daily > 0 else 0.0
        logp = levels[i] + dip + noise
        prices[sid] = PriceSeries(sid, tuple(dates), np.exp(logp))

    values_cols = [x[:, :, k] for k in range(F)]
    specs = feature_specs(spec)
    if sector is not None:
        values_cols.append(np.tile(sector[:, None], (1, M)).astype(float))
    if esg is not None:
        for k in range(12):
            values_cols.append(np.tile(esg["refined"][:, k][:, None], (1, M)))
        for k in range(3):
            values_cols.append(np.tile(esg["aggregate"][:, k][:, None], (1, M)))
        values_cols.append(np.tile(esg["single"][:, None], (1, M)))
    values = np.stack(values_cols, axis=2)

    if spec.missing_fraction > 0.0:
        holes = rng.uniform(size=values.shape) < spec.missing_fraction
        values = np.where(holes, np.nan, values)

    panel = PanelDataset(
        securities=tuple(sids),
        months=tuple(months),
        features=tuple(specs),
        values=values,
        present=np.ones((S, M), dtype=bool),
        target=np.full((S, M), np.nan),
    )
    return SyntheticWorld(spec=spec, panel=panel, prices=prices, depths=depths)


def crisis_affected_months(spec: SyntheticSpec, horizon_months: int = 12) -> set:
    """Prediction months whose forward window intersects the crisis window."""
    if spec.crisis_months is None:
        return set()
    lo = MonthStamp.parse(spec.crisis_months[0])
    hi = MonthStamp.parse(spec.crisis_months[1])
    return {
        MonthStamp.from_index(i)
        for i in range(lo.index - horizon_months, hi.index)
    }


def write_world(world: SyntheticWorld, panel_path, prices_path, features_path=None) -> None:
    """Emit the world as the CSV/JSON artifacts the experiment runner ingests."""
    import pandas as pd

    from .panel import save_feature_specs, save_panel_csv

    save_panel_csv(world.panel, panel_path)
    rows = []
    for sid in sorted(world.prices):
        ps = world.prices[sid]
        for t, p in zip(ps.timestamps, ps.prices):
            rows.append({"security_id": sid, "date": t.isoformat(), "price": p})
    pd.DataFrame.from_records(rows).to_csv(prices_path, index=False)
    if features_path is not None:
        save_feature_specs(world.panel.features, features_path)

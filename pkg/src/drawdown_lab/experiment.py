"""Experiment orchestration: walk-forward split protocol, feature-set cases,
grid tuning, guarded end-to-end runs, and report artifacts.

A run is fully deterministic given (config, seed): every random component
draws its seed from the master seed through a documented derivation, and all
report files are written with stable ordering.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import prep
from .decompose import PartialLeastSquaresRegression, PrincipalComponentRegression
from .drawdown import forward_mdd_panel, load_prices_csv, targets_as_mapping
from .evaluate import (
    concordance_correlation,
    mean_absolute_error,
    metric_report,
    permutation_importance,
    quantile_analysis,
)
from .linear import ElasticNetRegression, LassoRegression, LinearRegression, RidgeRegression
from .mlp import MLPRegressor
from .panel import FeatureSpec, MonthStamp, load_feature_specs, load_panel_csv
from .trees import GradientBoostingRegressor, RandomForestRegressor

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "DRAWDOWN_LAB_SEED"

MODEL_CLASSES = {
    "ols": LinearRegression,
    "lasso": LassoRegression,
    "ridge": RidgeRegression,
    "enet": ElasticNetRegression,
    "pls": PartialLeastSquaresRegression,
    "pcr": PrincipalComponentRegression,
    "rf": RandomForestRegressor,
    "xgboost": GradientBoostingRegressor,
    "mlp": MLPRegressor,
}
MODEL_KEYS = tuple(MODEL_CLASSES)
NONLINEAR_KEYS = ("rf", "xgboost", "mlp")
SEEDED_KEYS = ("rf", "xgboost", "mlp")

CASE_GROUPS = {
    "FC0": {"FC"},
    "FC": {"FC"},
    "FC+refined_ESG": {"FC", "refined_ESG"},
    "FC+E/S/G": {"FC", "ESG_aggregate"},
    "FC+ESG": {"FC", "ESG_single"},
    "trimmed_FC": {"trimmed_FC"},
    "trimmed_FC+refined_ESG": {"trimmed_FC", "refined_ESG"},
    "trimmed_FC+E/S/G": {"trimmed_FC", "ESG_aggregate"},
    "trimmed_FC+ESG": {"trimmed_FC", "ESG_single"},
}

DEFAULT_GRIDS = {
    "ols": {},
    "lasso": {"penalty": [1e-5, 1e-4, 1e-3]},
    "ridge": {"penalty": [1e-4, 1e-3, 1e-2]},
    "enet": {"l1_penalty": [1e-5, 1e-4], "l2_penalty": [1e-4, 1e-3]},
    "pls": {"n_components": [1, 2, 4]},
    "pcr": {"n_components": [2, 4, 10]},
    "rf": {"n_trees": [60], "max_depth": [7], "row_fraction": [0.7], "min_leaf": [5]},
    "xgboost": {"n_rounds": [150], "learning_rate": [0.1], "max_depth": [3], "leaf_penalty": [1.0]},
    "mlp": {"hidden_widths": [[32, 16]], "learning_rate": [3e-2], "epochs": [150]},
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class ProtocolError(RuntimeError):
    """A lookahead or split-overlap guard fired."""


def _parse_range(pair) -> tuple[MonthStamp, MonthStamp]:
    lo, hi = MonthStamp.parse(pair[0]), MonthStamp.parse(pair[1])
    if hi < lo:
        raise ConfigError(f"month range {pair} is reversed")
    return lo, hi


@dataclass(frozen=True)
class SplitSpec:
    """Chronologically ordered train / optional validation / test month ranges."""

    train: tuple
    test: tuple
    validation: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "train", _parse_range(self.train))
        object.__setattr__(self, "test", _parse_range(self.test))
        if self.validation is not None:
            object.__setattr__(self, "validation", _parse_range(self.validation))
        spans = [("train", self.train)]
        if self.validation is not None:
            spans.append(("validation", self.validation))
        spans.append(("test", self.test))
        for (na, a), (nb, b) in zip(spans, spans[1:]):
            if not a[1] < b[0]:
                raise ConfigError(f"{na} range {a} must end before {nb} range {b} begins")

    def to_dict(self) -> dict:
        d = {
            "train": [str(self.train[0]), str(self.train[1])],
            "test": [str(self.test[0]), str(self.test[1])],
        }
        if self.validation is not None:
            d["validation"] = [str(self.validation[0]), str(self.validation[1])]
        return d


SPLIT_PRESETS = {
    # long protocol: validation-tuned, test window spanning the stress years
    "long": SplitSpec(train=("1980-01", "1999-04"), validation=("1999-05", "2007-03"), test=("2007-04", "2018-06")),
    # same protocol with the shorter test end date
    "long-2017": SplitSpec(train=("1980-01", "1999-04"), validation=("1999-05", "2007-03"), test=("2007-04", "2017-06")),
    # short-history protocol: no validation, stress years inside training
    "esg": SplitSpec(train=("1980-01", "2013-06"), test=("2014-07", "2018-06")),
}


@dataclass
class ExperimentConfig:
    panel_csv: str
    prices_csv: Optional[str]
    split: SplitSpec
    case: str = "FC0"
    models: tuple = MODEL_KEYS
    grids: dict = field(default_factory=dict)
    horizon_months: int = 12
    seed: int = 0
    output_dir: str = "runs/out"
    features_json: Optional[str] = None
    hyperparams_from: Optional[str] = None
    tune_metric: str = "mae"
    final_fit_window: str = "train"
    size_feature: str = "mve"
    min_consecutive_months: int = 1
    drop_smallest_fraction: float = 0.0
    require_positive: tuple = ()
    importance_repeats: int = 5
    price_kind: str = "unspecified"

    def __post_init__(self):
        self.models = tuple(self.models)
        self.require_positive = tuple(self.require_positive)
        if self.case not in CASE_GROUPS:
            raise ConfigError(f"unknown case {self.case!r}; expected one of {sorted(CASE_GROUPS)}")
        unknown = [m for m in self.models if m not in MODEL_KEYS]
        if unknown:
            raise ConfigError(f"unknown models {unknown}; expected among {MODEL_KEYS}")
        if not self.models:
            raise ConfigError("at least one model is required")
        if self.horizon_months < 1:
            raise ConfigError("horizon_months must be >= 1")
        if self.tune_metric not in ("mae", "ccc"):
            raise ConfigError("tune_metric must be 'mae' or 'ccc'")
        if self.final_fit_window not in ("train", "pre_test"):
            raise ConfigError("final_fit_window must be 'train' or 'pre_test'")
        if self.esg_mode:
            bad = [m for m in self.models if m not in NONLINEAR_KEYS]
            if bad:
                raise ConfigError(
                    f"case {self.case!r} follows the short-history protocol restricted to "
                    f"non-linear models {NONLINEAR_KEYS}; remove {bad}"
                )
            if self.split.validation is not None:
                raise ConfigError(f"case {self.case!r} must not carry a validation split")
            if not self.hyperparams_from:
                raise ConfigError(
                    f"case {self.case!r} skips tuning and requires hyperparams_from "
                    "(a prior run's hyperparams.json)"
                )
        else:
            if self.split.validation is None:
                raise ConfigError("case FC0 requires a validation split for tuning")

    @property
    def esg_mode(self) -> bool:
        """Every case except FC0 runs the short-history protocol."""
        return self.case != "FC0"

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        data = doc.get("data", {})
        split_doc = doc.get("split", {})
        if "preset" in split_doc:
            if split_doc["preset"] not in SPLIT_PRESETS:
                raise ConfigError(f"unknown split preset {split_doc['preset']!r}")
            split = SPLIT_PRESETS[split_doc["preset"]]
        else:
            try:
                split = SplitSpec(
                    train=split_doc["train"],
                    test=split_doc["test"],
                    validation=split_doc.get("validation"),
                )
            except KeyError as e:
                raise ConfigError(f"split section is missing {e}") from None
        models_doc = doc.get("models", {})
        case_doc = doc.get("case", {})
        return cls(
            panel_csv=data.get("panel_csv", ""),
            prices_csv=data.get("prices_csv"),
            features_json=data.get("features_json"),
            price_kind=data.get("price_kind", "unspecified"),
            split=split,
            case=case_doc.get("name", "FC0") if isinstance(case_doc, dict) else str(case_doc),
            models=tuple(models_doc.get("names", MODEL_KEYS)),
            hyperparams_from=models_doc.get("hyperparams_from"),
            grids=doc.get("grids", {}),
            horizon_months=int(data.get("horizon_months", 12)),
            seed=int(doc.get("seed", 0)),
            output_dir=doc.get("output_dir", "runs/out"),
            tune_metric=models_doc.get("tune_metric", "mae"),
            final_fit_window=models_doc.get("final_fit_window", "train"),
            size_feature=data.get("size_feature", "mve"),
            min_consecutive_months=int(data.get("min_consecutive_months", 1)),
            drop_smallest_fraction=float(data.get("drop_smallest_fraction", 0.0)),
            require_positive=tuple(data.get("require_positive", ())),
            importance_repeats=int(models_doc.get("importance_repeats", 5)),
        )

    def to_dict(self) -> dict:
        return {
            "data": {
                "panel_csv": self.panel_csv,
                "prices_csv": self.prices_csv,
                "features_json": self.features_json,
                "price_kind": self.price_kind,
                "horizon_months": self.horizon_months,
                "size_feature": self.size_feature,
                "min_consecutive_months": self.min_consecutive_months,
                "drop_smallest_fraction": self.drop_smallest_fraction,
                "require_positive": list(self.require_positive),
            },
            "case": {"name": self.case},
            "models": {
                "names": list(self.models),
                "hyperparams_from": self.hyperparams_from,
                "tune_metric": self.tune_metric,
                "final_fit_window": self.final_fit_window,
                "importance_repeats": self.importance_repeats,
            },
            "split": self.split.to_dict(),
            "grids": self.grids,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


# -- seeding ------------------------------------------------------------------


def derived_seed(master: int, *tags) -> int:
    """Stable child seed: master entropy extended with hashed string tags."""
    words = [int(master) & 0xFFFFFFFF]
    for tag in tags:
        digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
        words.append(int.from_bytes(digest[:4], "big"))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# -- guards -------------------------------------------------------------------


def assert_no_lookahead(features: Sequence[FeatureSpec], horizon_months: int) -> None:
    """Every feature must come from the prediction month or earlier, and the
    target window must begin strictly after the prediction month."""
    bad = [f.name for f in features if f.lag_months < 0]
    if bad:
        raise ProtocolError(f"features with negative lags would peek ahead: {bad}")
    if horizon_months < 1:
        raise ProtocolError("target horizon must start strictly after the prediction month")


def assert_split_disjoint(split: SplitSpec, index_by_part: dict) -> None:
    """No (security, month) row may appear in more than one split part."""
    seen: dict = {}
    for part, index in index_by_part.items():
        for key in index:
            if key in seen and seen[key] != part:
                raise ProtocolError(f"row {key} appears in both {seen[key]} and {part}")
            seen[key] = part


# -- tuning -------------------------------------------------------------------


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product in key order; a degenerate grid yields one empty point."""
    if not grid:
        return [{}]
    keys = list(grid.keys())
    combos = itertools.product(*(grid[k] for k in keys))
    return [dict(zip(keys, combo)) for combo in combos]


def make_model(key: str, params: dict, master_seed: int):
    cls = MODEL_CLASSES[key]
    params = dict(params)
    if "hidden_widths" in params:
        params["hidden_widths"] = tuple(params["hidden_widths"])
    if key in SEEDED_KEYS and "seed" not in params:
        params["seed"] = derived_seed(master_seed, "model", key)
    return cls(**params)


def tune(
    key: str,
    grid: dict,
    X_train,
    y_train,
    X_val,
    y_val,
    metric: str = "mae",
    master_seed: int = 0,
):
    """Exhaustive grid search on the validation split; first point wins ties.

    Returns (best params, score log). Lower MAE is better; higher concordance
    is better (internally negated so the comparison is uniform).
    """
    points = expand_grid(grid)
    if not points:
        raise ConfigError(f"empty hyperparameter grid for {key}")
    best_params, best_score = None, np.inf
    log = []
    for params in points:
        model = make_model(key, params, master_seed)
        model.fit(X_train, y_train)
        pred = model.predict(X_val)
        if metric == "mae":
            score = mean_absolute_error(y_val, pred)
        else:
            score = -concordance_correlation(y_val, pred)
        log.append({"params": params, "score": float(score)})
        if score < best_score:
            best_params, best_score = params, score
    return best_params, log


# -- run ----------------------------------------------------------------------


@dataclass
class RunResult:
    output_dir: Path
    metrics: dict
    hyperparams: dict


def _stage(name):
    """Decorator-free stage wrapper used by run_experiment."""

    class _Ctx:
        def __init__(self):
            self.name = name

        def __enter__(self):
            logger.info("stage %s", name)
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Ctx()


def prepare_matrices(cfg: ExperimentConfig):
    """Ingest, build targets, preprocess, select the case columns, and stack
    each split. Returns a dict with per-split matrices plus column metadata."""
    with _stage("ingest"):
        features = load_feature_specs(cfg.features_json) if cfg.features_json else None
        panel = load_panel_csv(cfg.panel_csv, features)
    with _stage("guards"):
        assert_no_lookahead(panel.features, cfg.horizon_months)
    with _stage("filters"):
        policy = prep.FilterPolicy(
            min_consecutive_months=cfg.min_consecutive_months,
            drop_smallest_fraction=cfg.drop_smallest_fraction,
            require_positive=cfg.require_positive,
        )
        panel, audit = prep.preprocess(
            panel,
            prep.PrepSettings(filter_policy=policy, size_feature=cfg.size_feature, stages=("filters",)),
        )
    with _stage("target_join"):
        if cfg.prices_csv:
            prices = load_prices_csv(cfg.prices_csv)
            targets = forward_mdd_panel(prices, list(panel.months), cfg.horizon_months)
            panel = panel.with_targets(targets_as_mapping(targets))
        elif not np.any(~np.isnan(panel.target)):
            raise ConfigError("no prices_csv given and the panel carries no target column")
    with _stage("preprocess"):
        panel, audit2 = prep.preprocess(
            panel, prep.PrepSettings(stages=("lags", "zscore", "impute", "encode"))
        )
        audit = pd.concat([audit, audit2], ignore_index=True)
    with _stage("case_columns"):
        groups = CASE_GROUPS[cfg.case]
        missing = [
            g for g in sorted(groups)
            if not any(g in f.groups for f in panel.features)
        ]
        if missing:
            raise ConfigError(
                f"case {cfg.case!r} needs columns in groups {missing}, none found in the panel"
            )
        selected = panel.select_columns(groups)
    with _stage("split"):
        parts = {}
        ranges = {"train": cfg.split.train, "test": cfg.split.test}
        if cfg.split.validation is not None:
            ranges["validation"] = cfg.split.validation
        for part, (lo, hi) in ranges.items():
            stacked = selected.slice_months(lo, hi).stack()
            if stacked.y.size == 0:
                raise ConfigError(f"{part} split [{lo}, {hi}] contains no target rows")
            parts[part] = stacked
        assert_split_disjoint(cfg.split, {p: s.index for p, s in parts.items()})
    names = selected.feature_names
    blocks = prep.encoded_feature_blocks(names)
    size_col = names.index(cfg.size_feature) if cfg.size_feature in names else None
    return {
        "parts": parts,
        "feature_names": names,
        "blocks": blocks,
        "size_col": size_col,
        "audit": audit,
        "panel": selected,
    }


def _fit_window_matrices(cfg, parts, panel):
    """Final-fit rows: the train split by default; with ``pre_test`` every
    target row strictly before the test window (note forward target windows of
    the extra months may then overlap test outcomes)."""
    if cfg.final_fit_window == "pre_test":
        stacked = panel.slice_months(cfg.split.train[0], cfg.split.test[0].plus(-1)).stack()
        return stacked.X, stacked.y
    return parts["train"].X, parts["train"].y


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "models").mkdir(exist_ok=True)

    handler = logging.FileHandler(out / "audit.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    root = logging.getLogger("drawdown_lab")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    try:
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            cfg.seed = int(env_seed)
            logger.info("seed overridden from %s: %d", SEED_ENV_VAR, cfg.seed)
        data = prepare_matrices(cfg)
        parts = data["parts"]
        data["audit"].to_csv(out / "prep_audit.csv", index=False)

        prior = None
        if cfg.hyperparams_from:
            with _stage("hyperparams_from"):
                with open(cfg.hyperparams_from, "r", encoding="utf-8") as fh:
                    prior = json.load(fh)

        metrics_doc: dict = {}
        hyper_doc: dict = {}
        importance_doc: dict = {}
        per_date_rows = []
        quantile_rows = []
        test = parts["test"]
        test_months = [m for _, m in test.index]
        size = test.X[:, data["size_col"]] if data["size_col"] is not None else None

        for key in cfg.models:
            with _stage(f"model:{key}"):
                if cfg.esg_mode:
                    if key not in prior:
                        raise ConfigError(
                            f"hyperparams_from artifact has no entry for {key!r}"
                        )
                    chosen = prior[key]["chosen"]
                    score_log = []
                else:
                    grid = cfg.grids.get(key, DEFAULT_GRIDS[key])
                    chosen, score_log = tune(
                        key, grid,
                        parts["train"].X, parts["train"].y,
                        parts["validation"].X, parts["validation"].y,
                        metric=cfg.tune_metric, master_seed=cfg.seed,
                    )
                hyper_doc[key] = {"chosen": chosen, "grid_scores": score_log}
                X_fit, y_fit = _fit_window_matrices(cfg, parts, data["panel"])
                model = make_model(key, chosen, cfg.seed)
                model.fit(X_fit, y_fit)
                pred = model.predict(test.X)

                report = metric_report(test.y, pred, test_months, size=size)
                metrics_doc[key] = report.to_dict()
                metrics_doc[key]["hyperparameters"] = chosen
                for pm in report.per_date:
                    per_date_rows.append(
                        {"model": key, "date": str(pm.month), "mae": pm.mae, "ccc": pm.ccc, "n": pm.n}
                    )
                n_groups = 10
                min_date_rows = min(pm.n for pm in report.per_date)
                if min_date_rows >= n_groups:
                    for qr in quantile_analysis(test_months, test.y, pred, n_groups):
                        row = {
                            "model": key, "window": str(qr.window), "group": qr.group,
                            "n": qr.n, "mean": qr.mean, "std": qr.std,
                        }
                        row.update({f"p{10 * (i + 1)}": v for i, v in enumerate(qr.deciles)})
                        quantile_rows.append(row)
                entries = permutation_importance(
                    model, test.X, test.y, test_months,
                    feature_names=data["feature_names"],
                    metric="mae",
                    repeats=cfg.importance_repeats,
                    seed=derived_seed(cfg.seed, "importance", key),
                    groups=data["blocks"],
                )
                importance_doc[key] = [
                    {"feature": e.feature, "score": e.score, "stderr": e.stderr,
                     "sign": e.sign, "rank": e.rank}
                    for e in entries
                ]
                save_model(model, key, out / "models" / f"{key}.json")

        with _stage("reports"):
            resolved = cfg.to_dict()
            resolved["n_rows"] = {p: int(s.y.size) for p, s in parts.items()}
            _write_json(out / "config-resolved.json", resolved)
            _write_json(out / "metrics.json", {"case": cfg.case, "seed": cfg.seed, "models": metrics_doc})
            _write_json(out / "importance.json", importance_doc)
            _write_json(out / "hyperparams.json", hyper_doc)
            pd.DataFrame(per_date_rows).to_csv(out / "per_date.csv", index=False)
            pd.DataFrame(quantile_rows).to_csv(out / "quantiles.csv", index=False)
        return RunResult(out, metrics_doc, hyper_doc)
    finally:
        root.removeHandler(handler)
        handler.close()


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- model persistence ---------------------------------------------------------


def save_model(model, key: str, path) -> None:
    _write_json(path, {"model": key, "state": model.to_dict()})


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    key = doc["model"]
    if key not in MODEL_CLASSES:
        raise ValueError(f"unknown model key {key!r}")
    return MODEL_CLASSES[key].from_dict(doc["state"]), key

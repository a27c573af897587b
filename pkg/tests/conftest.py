import numpy as np
import pytest

from drawdown_lab.panel import FeatureSpec, MonthStamp, PanelDataset


def month(s: str) -> MonthStamp:
    return MonthStamp.parse(s)


def make_panel(rows, features=None):
    """Panel from (sid, 'YYYY-MM', {feature: value}, target) tuples."""
    if features is None:
        names = sorted({k for _, _, feats, _ in rows for k in (feats or {})})
        features = [FeatureSpec(n) for n in names]
    parsed = [(sid, month(m), feats, tgt) for sid, m, feats, tgt in rows]
    return PanelDataset.from_rows(parsed, features)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def toy_regression(n=50, p=5, seed=0, noise=0.1):
    """Random linear problem with a known coefficient vector."""
    gen = np.random.default_rng(seed)
    X = gen.standard_normal((n, p))
    beta = gen.standard_normal(p)
    y = 0.5 + X @ beta + noise * gen.standard_normal(n)
    return X, y, beta

import numpy as np
import pytest

from drawdown_lab.drawdown import forward_mdd_panel, load_prices_csv, targets_as_mapping
from drawdown_lab.panel import load_feature_specs, load_panel_csv
from drawdown_lab.synthetic import (
    SyntheticSpec,
    crisis_affected_months,
    generate_world,
    write_world,
)

from conftest import month


class TestSyntheticWorld:
    def test_deterministic_given_seed(self):
        a = generate_world(SyntheticSpec(seed=5, n_securities=5, n_months=24))
        b = generate_world(SyntheticSpec(seed=5, n_securities=5, n_months=24))
        assert np.array_equal(a.panel.values, b.panel.values, equal_nan=True)
        assert np.array_equal(a.prices["S0000"].prices, b.prices["S0000"].prices)

    def test_different_seeds_differ(self):
        a = generate_world(SyntheticSpec(seed=1, n_securities=5, n_months=24))
        b = generate_world(SyntheticSpec(seed=2, n_securities=5, n_months=24))
        assert not np.array_equal(a.panel.values, b.panel.values, equal_nan=True)

    def test_prices_positive_and_ordered(self):
        world = generate_world(SyntheticSpec(seed=3, n_securities=4, n_months=18))
        for ps in world.prices.values():
            assert np.all(ps.prices > 0)
            assert all(a < b for a, b in zip(ps.timestamps, ps.timestamps[1:]))

    def test_missing_fraction_within_band(self):
        spec = SyntheticSpec(seed=4, n_securities=40, n_months=60, missing_fraction=0.10)
        world = generate_world(spec)
        frac = np.isnan(world.panel.values).mean()
        assert abs(frac - 0.10) < 0.005

    def test_targets_lie_in_unit_interval(self):
        spec = SyntheticSpec(seed=6, n_securities=8, n_months=36, noise_level=0.1)
        world = generate_world(spec)
        targets = forward_mdd_panel(world.prices, list(world.panel.months), 12)
        assert targets
        for t in targets:
            assert 0.0 <= t.mdd < 1.0

    def test_noiseless_target_equals_planted_depth(self):
        # with no Brownian noise the window drawdown is exactly 1 - exp(-max depth)
        spec = SyntheticSpec(seed=7, n_securities=3, n_months=30)
        world = generate_world(spec)
        targets = targets_as_mapping(forward_mdd_panel(world.prices, list(world.panel.months), 12))
        sid = "S0001"
        i = world.panel.securities.index(sid)
        for j, m in enumerate(world.panel.months[:18]):
            expected = 1.0 - np.exp(-world.depths[i, j + 1 : j + 13].max())
            assert targets[(sid, m)] == pytest.approx(expected, abs=1e-12)

    def test_crisis_multiplies_depths(self):
        calm = generate_world(SyntheticSpec(seed=8, n_securities=4, n_months=24))
        stressed = generate_world(
            SyntheticSpec(seed=8, n_securities=4, n_months=24,
                          crisis_months=("1981-01", "1981-03"), crisis_multiplier=3.0)
        )
        j = [str(m) for m in calm.panel.months].index("1981-02")
        assert np.allclose(stressed.depths[:, j], 3.0 * calm.depths[:, j])
        assert np.allclose(stressed.depths[:, 0], calm.depths[:, 0])

    def test_affected_months_helper(self):
        spec = SyntheticSpec(crisis_months=("1988-01", "1988-03"))
        affected = crisis_affected_months(spec, horizon_months=12)
        assert month("1987-01") in affected
        assert month("1988-02") in affected
        assert month("1988-03") not in affected  # its window starts after the crisis
        assert month("1986-12") not in affected

    def test_esg_and_sector_blocks(self):
        spec = SyntheticSpec(seed=9, n_securities=6, n_months=20, n_sectors=3, n_esg=1)
        world = generate_world(spec)
        names = world.panel.feature_names
        assert "sector" in names and "esg" in names and "esg_e" in names
        specs = {f.name: f for f in world.panel.features}
        assert specs["sector"].kind == "categorical"
        assert specs["esg"].groups == frozenset({"ESG_single"})
        assert specs["esg"].lag_months == 2

    def test_write_world_artifacts_load_back(self, tmp_path):
        spec = SyntheticSpec(seed=10, n_securities=5, n_months=20, missing_fraction=0.05)
        world = generate_world(spec)
        write_world(world, tmp_path / "panel.csv", tmp_path / "prices.csv", tmp_path / "features.json")
        feats = load_feature_specs(tmp_path / "features.json")
        panel = load_panel_csv(tmp_path / "panel.csv", feats)
        prices = load_prices_csv(tmp_path / "prices.csv")
        assert panel.securities == world.panel.securities
        assert len(prices) == 5
        assert [f.name for f in feats] == world.panel.feature_names

    def test_coefficient_length_validated(self):
        with pytest.raises(ValueError, match="one entry per feature"):
            SyntheticSpec(n_features=4, linear_coefficients=(1.0, 2.0))

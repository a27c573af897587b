import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drawdown_lab.evaluate import (
    concordance_correlation,
    mean_absolute_error,
    metric_report,
    per_date_metrics,
    permutation_importance,
    quantile_analysis,
)
from drawdown_lab.linear import LinearRegression

finite_vec = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=2, max_size=30
)


class TestMae:
    def test_perfect_fit(self):
        y = np.array([0.1, 0.2, 0.3])
        assert mean_absolute_error(y, y) == 0.0

    def test_hand_arithmetic(self):
        assert mean_absolute_error([0.1, 0.3], [0.2, 0.2]) == pytest.approx(0.1, abs=1e-15)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mean_absolute_error([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            mean_absolute_error([], [])

    @given(finite_vec, st.floats(min_value=-5, max_value=5, allow_nan=False))
    @settings(max_examples=50, deadline=None)
    def test_translation_properties(self, y, c):
        y = np.asarray(y)
        assert mean_absolute_error(y, y + c) == pytest.approx(abs(c), abs=1e-9)
        shifted = mean_absolute_error(y, y * 0.5 + c)
        base = mean_absolute_error(y, y * 0.5)
        assert shifted <= base + abs(c) + 1e-9


class TestCcc:
    def test_perfect_match(self):
        y = np.array([1.0, 2.0, 3.0])
        assert concordance_correlation(y, y) == pytest.approx(1.0)

    def test_constant_prediction_scores_zero(self):
        assert concordance_correlation([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == 0.0

    def test_worked_example(self):
        # population variances 1.25, correlation 1, mean shift 0.5:
        # 2 * 1.25 / (0.25 + 1.25 + 1.25) = 0.909090...
        y = [1.0, 2.0, 3.0, 4.0]
        y_hat = [1.5, 2.5, 3.5, 4.5]
        assert concordance_correlation(y, y_hat) == pytest.approx(0.90909090909, abs=1e-4)

    def test_degenerate_definitions(self):
        assert concordance_correlation([2.0, 2.0], [2.0, 2.0]) == 1.0
        assert concordance_correlation([2.0, 2.0], [3.0, 3.0]) == 0.0

    def test_symmetry(self, rng):
        y = rng.standard_normal(40)
        z = rng.standard_normal(40)
        assert concordance_correlation(y, z) == pytest.approx(concordance_correlation(z, y), abs=1e-14)

    @given(finite_vec, finite_vec)
    @settings(max_examples=60, deadline=None)
    def test_never_exceeds_pearson_magnitude(self, a, b):
        n = min(len(a), len(b))
        y = np.asarray(a[:n])
        z = np.asarray(b[:n])
        ccc = concordance_correlation(y, z)
        assert -1.0 - 1e-12 <= ccc <= 1.0 + 1e-12
        if y.std() > 1e-9 and z.std() > 1e-9:
            rho = np.corrcoef(y, z)[0, 1]
            assert abs(ccc) <= abs(rho) + 1e-9

    @given(
        finite_vec,
        st.floats(min_value=0.01, max_value=10),
        st.floats(min_value=-5, max_value=5),
    )
    @settings(max_examples=50, deadline=None)
    def test_affine_invariance(self, y, a, b):
        y = np.asarray(y)
        z = np.asarray(y) * 0.7 + 0.1  # some comparison vector
        base = concordance_correlation(y, z)
        mapped = concordance_correlation(a * y + b, a * z + b)
        assert mapped == pytest.approx(base, abs=1e-7)


class TestPerDate:
    def test_single_date_equals_overall(self, rng):
        y = rng.uniform(0, 1, 20)
        p = y + 0.05
        out = per_date_metrics(["2000-01"] * 20, y, p)
        assert len(out) == 1
        assert out[0].mae == pytest.approx(mean_absolute_error(y, p))
        assert out[0].ccc == pytest.approx(concordance_correlation(y, p))
        assert out[0].n == 20

    def test_perfect_date_scores_cleanly(self, rng):
        y = np.concatenate([rng.uniform(0, 1, 10), rng.uniform(0, 1, 10)])
        p = y.copy()
        p[10:] += 0.2
        months = ["2000-01"] * 10 + ["2000-02"] * 10
        out = {m.month: m for m in per_date_metrics(months, y, p)}
        assert out["2000-01"].mae == 0.0
        assert out["2000-01"].ccc == pytest.approx(1.0)

    def test_scaled_stress_date_doubles_mae_but_keeps_agreement(self, rng):
        base = rng.uniform(0.1, 0.4, 50)
        pred = base + 0.02 * rng.standard_normal(50)
        y = np.concatenate([base, base * 2.0])  # stress date: targets double
        p = np.concatenate([pred, pred])
        months = ["2008-01"] * 50 + ["2008-09"] * 50
        out = {m.month: m for m in per_date_metrics(months, y, p)}
        assert out["2008-09"].mae > 1.8 * out["2008-01"].mae
        assert out["2008-09"].ccc > 0.0

    def test_counts_sum_to_overall(self, rng):
        months = ["2000-01"] * 7 + ["2000-02"] * 5 + ["2000-03"] * 9
        y = rng.uniform(0, 1, 21)
        report = metric_report(y, y + 0.1, months)
        assert sum(pm.n for pm in report.per_date) == report.n == 21

    def test_quartile_breakdown(self, rng):
        months = ["2000-01"] * 40 + ["2000-02"] * 40
        y = rng.uniform(0, 1, 80)
        size = rng.standard_normal(80)
        report = metric_report(y, y + 0.05, months, size=size)
        assert report.top_quartile["n"] >= 20
        assert report.bottom_quartile["n"] >= 20
        assert report.top_quartile["mae"] == pytest.approx(0.05, abs=1e-9)


class TestQuantiles:
    def test_perfect_predictions_sort_groups(self, rng):
        y = rng.uniform(0, 1, 200)
        rows = quantile_analysis(["w"] * 200, y, y, n_groups=10)
        means = [r.mean for r in rows]
        assert means == sorted(means)
        assert all(rows[i].group == i + 1 for i in range(10))

    def test_remainder_spread_to_lowest_groups(self, rng):
        y = rng.uniform(0, 1, 103)
        rows = quantile_analysis(["w"] * 103, y, y, n_groups=10)
        assert [r.n for r in rows] == [11, 11, 11, 10, 10, 10, 10, 10, 10, 10]

    def test_too_few_rows_names_window(self):
        with pytest.raises(ValueError, match="2001-05"):
            quantile_analysis(["2001-05"] * 5, np.zeros(5), np.zeros(5), n_groups=10)

    def test_independent_predictions_show_no_structure(self, rng):
        y = rng.uniform(0, 1, 2000)
        p = rng.uniform(0, 1, 2000)  # unrelated
        rows = quantile_analysis(["w"] * 2000, y, p, n_groups=10)
        means = np.array([r.mean for r in rows])
        se = np.array([r.std / np.sqrt(r.n) for r in rows])
        grand = y.mean()
        assert np.all(np.abs(means - grand) < 2.5 * se)

    def test_deciles_are_ordered(self, rng):
        y = rng.uniform(0, 1, 120)
        rows = quantile_analysis(["w"] * 120, y, y + 0.1 * rng.standard_normal(120))
        for r in rows:
            assert list(r.deciles) == sorted(r.deciles)


def linear_model(coef, intercept=0.0):
    return LinearRegression.from_dict({"intercept": intercept, "coef": list(coef)})


class TestPermutationImportance:
    def _panel(self, rng, n_dates=6, per_date=60):
        months = []
        for d in range(n_dates):
            months += [f"2000-{d + 1:02d}"] * per_date
        n = n_dates * per_date
        X = rng.standard_normal((n, 3))
        return X, months

    def test_planted_feature_ranks_first_noise_scores_zero(self, rng):
        X, months = self._panel(rng)
        y = 2.0 * X[:, 0] + 0.2 * rng.standard_normal(len(X))
        model = linear_model([2.0, 0.0, 0.3])
        entries = permutation_importance(model, X, y, months, ["signal", "noise", "weak"],
                                         repeats=10, seed=3)
        by_name = {e.feature: e for e in entries}
        assert by_name["signal"].rank == 1
        assert by_name["signal"].score > 0
        assert abs(by_name["noise"].score) <= 2 * max(by_name["noise"].stderr, 1e-12)

    def test_negative_relationship_gets_minus_sign(self, rng):
        X, months = self._panel(rng)
        y = -1.5 * X[:, 1] + 0.1 * rng.standard_normal(len(X))
        model = linear_model([0.0, -1.5, 0.0])
        entries = permutation_importance(model, X, y, months, ["a", "size", "c"], repeats=5, seed=1)
        by_name = {e.feature: e for e in entries}
        assert by_name["size"].sign == "-"
        assert by_name["size"].rank == 1

    def test_ignored_feature_changes_nothing(self, rng):
        X, months = self._panel(rng)
        y = X[:, 0]
        model = linear_model([1.0, 0.0, 0.0])
        base = model.predict(X)
        Xp = X.copy()
        Xp[:, 1] = rng.permutation(X[:, 1])
        assert np.max(np.abs(model.predict(Xp) - base)) < 1e-12
        entries = permutation_importance(model, X, y, months, ["s", "dead", "d2"], repeats=3, seed=0)
        by_name = {e.feature: e for e in entries}
        assert by_name["dead"].score == 0.0
        assert by_name["dead"].stderr == 0.0

    def test_onehot_block_permuted_jointly(self, rng):
        # categorical block: indicator pair (x1, x2) one-hot of a 2-way code
        n = 300
        code = rng.integers(0, 2, n)
        base_feature = rng.standard_normal(n)
        X = np.column_stack([base_feature, (code == 0).astype(float), (code == 1).astype(float)])
        y = 0.5 * base_feature + (code == 1) * 1.0
        model = linear_model([0.5, 0.0, 1.0])
        months = ["2000-01"] * n
        entries = permutation_importance(
            model, X, y, months, ["f", "sector=0", "sector=1"],
            groups={"f": [0], "sector": [1, 2]}, repeats=5, seed=7,
        )
        names = {e.feature for e in entries}
        assert names == {"f", "sector"}
        # a jointly permuted block keeps rows one-hot
        by_name = {e.feature: e for e in entries}
        assert by_name["sector"].score > 0

    def test_ccc_metric_direction(self, rng):
        X, months = self._panel(rng)
        y = X[:, 0] + 0.05 * rng.standard_normal(len(X))
        model = linear_model([1.0, 0.0, 0.0])
        entries = permutation_importance(model, X, y, months, metric="ccc", repeats=4, seed=2)
        top = min(entries, key=lambda e: e.rank)
        assert top.feature == "x0"
        assert top.score > 0  # baseline concordance minus permuted concordance

    def test_deterministic_given_seed(self, rng):
        X, months = self._panel(rng, n_dates=3, per_date=30)
        y = X[:, 0]
        model = linear_model([1.0, 0.2, -0.1])
        a = permutation_importance(model, X, y, months, repeats=4, seed=9)
        b = permutation_importance(model, X, y, months, repeats=4, seed=9)
        assert a == b

import numpy as np
import pytest

from drawdown_lab.base import ConvergenceError
from drawdown_lab.linear import (
    ElasticNetRegression,
    LassoRegression,
    LinearRegression,
    RidgeRegression,
    lasso_deactivation_threshold,
)

from conftest import toy_regression


def normal_equations_ols(X, y):
    """Independent oracle: solve (D'D) b = D'y on the intercept-augmented design."""
    D = np.column_stack([np.ones(len(y)), X])
    b = np.linalg.solve(D.T @ D, D.T @ y)
    return b[0], b[1:]


def normal_equations_ridge(X, y, penalty):
    """Closed form on centered data: (Xc'Xc + n*penalty*I)^-1 Xc'yc."""
    n, p = X.shape
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    beta = np.linalg.solve(Xc.T @ Xc + n * penalty * np.eye(p), Xc.T @ yc)
    return float(y.mean() - X.mean(axis=0) @ beta), beta


def enet_objective(X, y, intercept, beta, l1, l2):
    r = y - intercept - X @ beta
    return r @ r / len(y) + l1 * np.abs(beta).sum() + l2 * beta @ beta


class TestOls:
    def test_exact_linear_data(self):
        X = np.arange(1.0, 8.0).reshape(-1, 1)
        model = LinearRegression().fit(X, 2.0 * X[:, 0])
        assert model.coef_[0] == pytest.approx(2.0, abs=1e-10)
        assert model.intercept_ == pytest.approx(0.0, abs=1e-10)

    def test_pure_noise_gives_mean_intercept(self, rng):
        X = rng.standard_normal((200, 3))
        X -= X.mean(axis=0)
        y = rng.standard_normal(200)
        model = LinearRegression().fit(X, y)
        assert model.intercept_ == pytest.approx(y.mean(), abs=0.05)
        assert np.all(np.abs(model.coef_) < 0.2)

    def test_matches_normal_equations(self):
        X, y, _ = toy_regression(n=50, p=5, seed=3)
        model = LinearRegression().fit(X, y)
        b0, beta = normal_equations_ols(X, y)
        assert model.intercept_ == pytest.approx(b0, abs=1e-8)
        assert np.allclose(model.coef_, beta, atol=1e-8)

    def test_training_residuals_orthogonal_to_design(self):
        X, y, _ = toy_regression(n=60, p=4, seed=7)
        model = LinearRegression().fit(X, y)
        r = y - model.predict(X)
        assert np.all(np.abs(X.T @ r) < 1e-8)
        assert abs(r.sum()) < 1e-8

    def test_rank_deficient_flags_and_warns(self):
        X = np.column_stack([np.ones(10), np.ones(10)])
        y = np.arange(10.0)
        with pytest.warns(UserWarning, match="rank deficient"):
            model = LinearRegression().fit(X, y)
        assert model.rank_deficient_

    def test_predict_width_mismatch(self):
        X, y, _ = toy_regression()
        model = LinearRegression().fit(X, y)
        with pytest.raises(ValueError, match="features"):
            model.predict(X[:, :3])


class TestRidge:
    def test_zero_penalty_equals_ols(self):
        X, y, _ = toy_regression(n=40, p=6, seed=11)
        ols = LinearRegression().fit(X, y)
        ridge = RidgeRegression(penalty=0.0).fit(X, y)
        assert np.allclose(ridge.coef_, ols.coef_, atol=1e-8)
        assert ridge.intercept_ == pytest.approx(ols.intercept_, abs=1e-8)

    def test_huge_penalty_shrinks_to_mean(self, rng):
        X = rng.standard_normal((80, 5))
        X = (X - X.mean(axis=0)) / X.std(axis=0)
        y = rng.standard_normal(80) + 3.0
        model = RidgeRegression(penalty=1e9).fit(X, y)
        assert np.linalg.norm(model.coef_) < 1e-3
        assert model.intercept_ == pytest.approx(y.mean(), abs=1e-3)

    def test_matches_closed_form_on_twenty_problems(self):
        for seed in range(20):
            X, y, _ = toy_regression(n=50, p=10, seed=seed, noise=0.3)
            model = RidgeRegression(penalty=0.1).fit(X, y)
            b0, beta = normal_equations_ridge(X, y, 0.1)
            assert np.allclose(model.coef_, beta, atol=1e-8), f"seed {seed}"
            assert model.intercept_ == pytest.approx(b0, abs=1e-8)

    def test_negative_penalty_rejected(self):
        X, y, _ = toy_regression()
        with pytest.raises(ValueError):
            RidgeRegression(penalty=-1.0).fit(X, y)

    def test_norm_shrinks_monotonically(self):
        X, y, _ = toy_regression(n=60, p=8, seed=5)
        norms = [
            np.linalg.norm(RidgeRegression(penalty=lam).fit(X, y).coef_)
            for lam in (0.0, 0.01, 0.1, 1.0, 10.0)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))


def orthonormal_problem(seed=0, n=40, p=6):
    """Zero-mean orthonormal columns (QR of a centered matrix) so the
    soft-threshold closed form holds exactly."""
    gen = np.random.default_rng(seed)
    raw = gen.standard_normal((n, p))
    raw -= raw.mean(axis=0)
    Q, _ = np.linalg.qr(raw)
    y = gen.standard_normal(n) + 0.5
    return Q, y


class TestLasso:
    def test_zero_penalty_equals_ols(self):
        X, y, _ = toy_regression(n=50, p=5, seed=2)
        lasso = LassoRegression(penalty=0.0, tol=1e-12).fit(X, y)
        ols = LinearRegression().fit(X, y)
        assert np.allclose(lasso.coef_, ols.coef_, atol=1e-6)

    def test_deactivation_threshold(self):
        X, y, _ = toy_regression(n=50, p=5, seed=4)
        lam_max = lasso_deactivation_threshold(X, y)
        at = LassoRegression(penalty=lam_max * 1.0001).fit(X, y)
        assert np.all(at.coef_ == 0.0)
        below = LassoRegression(penalty=lam_max * 0.99).fit(X, y)
        assert np.any(below.coef_ != 0.0)

    def test_orthonormal_soft_threshold_oracle(self):
        Q, y = orthonormal_problem(seed=9)
        n = len(y)
        lam = 0.02
        beta_ols = Q.T @ (y - y.mean())
        expected = np.sign(beta_ols) * np.maximum(np.abs(beta_ols) - n * lam / 2.0, 0.0)
        model = LassoRegression(penalty=lam, tol=1e-12).fit(Q, y)
        assert np.allclose(model.coef_, expected, atol=1e-10)

    def test_kkt_conditions_at_convergence(self):
        X, y, _ = toy_regression(n=80, p=10, seed=6, noise=0.5)
        lam = 0.05
        model = LassoRegression(penalty=lam).fit(X, y)
        r = y - model.predict(X)
        corr = 2.0 * X.T @ r / len(y)
        for j in range(X.shape[1]):
            if model.coef_[j] == 0.0:
                assert abs(corr[j]) <= lam + 1e-6
            else:
                assert corr[j] == pytest.approx(lam * np.sign(model.coef_[j]), abs=1e-6)

    def test_objective_non_increasing(self):
        X, y, _ = toy_regression(n=60, p=8, seed=8)
        model = LassoRegression(penalty=0.01).fit(X, y)
        path = model.objective_path_
        assert all(a >= b - 1e-12 for a, b in zip(path, path[1:]))

    def test_path_continuity(self):
        X, y, _ = toy_regression(n=60, p=8, seed=10)
        lam = 0.05
        a = LassoRegression(penalty=lam, tol=1e-10).fit(X, y)
        b = LassoRegression(penalty=lam * (1 + 1e-6), tol=1e-10).fit(X, y)
        assert np.linalg.norm(a.coef_ - b.coef_) <= 1e-3

    def test_non_convergence_carries_last_iterate(self):
        X, y, _ = toy_regression(n=50, p=5, seed=12)
        with pytest.raises(ConvergenceError) as exc:
            LassoRegression(penalty=1e-6, tol=1e-14, max_iter=1).fit(X, y)
        assert "coef" in exc.value.state

    def test_serialization_round_trip(self):
        X, y, _ = toy_regression(n=50, p=5, seed=13)
        model = LassoRegression(penalty=0.01).fit(X, y)
        clone = LassoRegression.from_dict(model.to_dict())
        assert np.array_equal(clone.predict(X), model.predict(X))


class TestElasticNet:
    def test_l2_zero_equals_lasso(self):
        X, y, _ = toy_regression(n=50, p=6, seed=14)
        enet = ElasticNetRegression(l1_penalty=0.02, l2_penalty=0.0).fit(X, y)
        lasso = LassoRegression(penalty=0.02).fit(X, y)
        assert np.array_equal(enet.coef_, lasso.coef_)
        assert enet.intercept_ == lasso.intercept_

    def test_l1_zero_equals_ridge(self):
        X, y, _ = toy_regression(n=50, p=6, seed=15)
        enet = ElasticNetRegression(l1_penalty=0.0, l2_penalty=0.05, tol=1e-13).fit(X, y)
        ridge = RidgeRegression(penalty=0.05).fit(X, y)
        assert np.allclose(enet.coef_, ridge.coef_, atol=1e-8)
        assert enet.intercept_ == pytest.approx(ridge.intercept_, abs=1e-8)

    def test_optimality_against_endpoint_solutions(self):
        X, y, _ = toy_regression(n=40, p=6, seed=16, noise=0.4)
        l1, l2 = 0.05, 0.05
        enet = ElasticNetRegression(l1_penalty=l1, l2_penalty=l2).fit(X, y)
        own = enet_objective(X, y, enet.intercept_, enet.coef_, l1, l2)
        lasso = LassoRegression(penalty=l1).fit(X, y)
        ridge = RidgeRegression(penalty=l2).fit(X, y)
        assert own <= enet_objective(X, y, lasso.intercept_, lasso.coef_, l1, l2) + 1e-10
        assert own <= enet_objective(X, y, ridge.intercept_, ridge.coef_, l1, l2) + 1e-10

    def test_kkt_for_zero_coefficients(self):
        X, y, _ = toy_regression(n=70, p=9, seed=17, noise=0.6)
        l1, l2 = 0.08, 0.02
        model = ElasticNetRegression(l1_penalty=l1, l2_penalty=l2).fit(X, y)
        r = y - model.predict(X)
        corr = 2.0 * X.T @ r / len(y)
        for j in np.flatnonzero(model.coef_ == 0.0):
            assert abs(corr[j]) <= l1 + 1e-6


class TestPredictContracts:
    def test_zero_coefficients_constant_output(self):
        model = LinearRegression.from_dict({"intercept": 0.7, "coef": [0.0, 0.0]})
        out = model.predict(np.random.default_rng(0).standard_normal((5, 2)))
        assert np.array_equal(out, np.full(5, 0.7))

    def test_identity_passthrough(self):
        model = LinearRegression.from_dict({"intercept": 0.0, "coef": [1.0]})
        X = np.arange(4.0).reshape(-1, 1)
        assert np.array_equal(model.predict(X), X[:, 0])

    def test_non_finite_input_rejected(self):
        model = LinearRegression.from_dict({"intercept": 0.0, "coef": [1.0]})
        with pytest.raises(ValueError, match="non-finite"):
            model.predict(np.array([[np.nan]]))

"""Linear regressors under the pooled mean-squared loss (1/NT) * sum residual^2.

The L1/L1+L2 problems are solved by cyclic coordinate descent with
soft-thresholding; the intercept is never penalized. Features are expected to
arrive standardized (the prep chain z-scores per date); fits do not rescale.
"""

from __future__ import annotations

import warnings

import numpy as np

from .base import BaseEstimator, ConvergenceError, check_array, check_is_fitted, check_n_features, check_X_y


def _soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def _coordinate_descent(Xc, yc, l1, l2, tol, max_iter):
    """Cyclic coordinate descent on centered data.

    Minimizes (1/n)||yc - Xc b||^2 + l1*sum|b_j| + l2*sum b_j^2. Returns the
    coefficient vector, sweep count, convergence flag and the objective value
    after every full sweep (non-increasing by construction).
    """
    n, p = Xc.shape
    col_sq = np.einsum("ij,ij->j", Xc, Xc)
    denom = 2.0 * col_sq / n + 2.0 * l2
    beta = np.zeros(p)
    resid = yc.copy()
    objective_path = []
    converged = False
    n_iter = 0
    for sweep in range(max_iter):
        n_iter = sweep + 1
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] <= 0.0:
                continue
            old = beta[j]
            rho = 2.0 * (Xc[:, j] @ resid + col_sq[j] * old) / n
            new = _soft_threshold(rho, l1) / denom[j]
            if new != old:
                resid += Xc[:, j] * (old - new)
                beta[j] = new
                delta = abs(new - old)
                if delta > max_delta:
                    max_delta = delta
        objective_path.append(
            float(resid @ resid / n + l1 * np.abs(beta).sum() + l2 * beta @ beta)
        )
        if max_delta < tol:
            converged = True
            break
    return beta, n_iter, converged, objective_path


class LinearRegression(BaseEstimator):
    """Ordinary least squares; minimum-norm solution when rank deficient."""

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        design = np.column_stack([np.ones(X.shape[0]), X])
        sol, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        self.rank_deficient_ = rank < design.shape[1]
        if self.rank_deficient_:
            warnings.warn("design matrix is rank deficient; returning the minimum-norm solution")
        self.intercept_ = float(sol[0])
        self.coef_ = sol[1:]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        check_n_features(self, X)
        return self.intercept_ + X @ self.coef_

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept_,
            "coef": self.coef_.tolist(),
            "penalty": {"kind": "none"},
            "rank_deficient": bool(self.rank_deficient_),
        }

    @classmethod
    def from_dict(cls, d) -> "LinearRegression":
        m = cls()
        m.intercept_ = float(d["intercept"])
        m.coef_ = np.asarray(d["coef"], dtype=float)
        m.rank_deficient_ = bool(d.get("rank_deficient", False))
        m.n_features_in_ = m.coef_.size
        return m


class RidgeRegression(BaseEstimator):
    """L2-penalized least squares: (1/n)*sum r^2 + penalty*sum b_j^2.

    Solved as an augmented least-squares system on centered data, which equals
    the normal-equations solution (X'X + n*penalty*I)^-1 X'y.
    """

    def __init__(self, penalty: float = 0.0):
        self.penalty = penalty

    def fit(self, X, y):
        if self.penalty < 0:
            raise ValueError("penalty must be non-negative")
        X, y = check_X_y(X, y)
        n, p = X.shape
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
        Xc = X - x_mean
        yc = y - y_mean
        if self.penalty > 0:
            aug = np.vstack([Xc, np.sqrt(n * self.penalty) * np.eye(p)])
            rhs = np.concatenate([yc, np.zeros(p)])
        else:
            aug, rhs = Xc, yc
        self.coef_ = np.linalg.lstsq(aug, rhs, rcond=None)[0]
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        self.n_features_in_ = p
        return self

    predict = LinearRegression.predict

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept_,
            "coef": self.coef_.tolist(),
            "penalty": {"kind": "l2", "penalty": self.penalty},
        }

    @classmethod
    def from_dict(cls, d) -> "RidgeRegression":
        m = cls(penalty=float(d["penalty"]["penalty"]))
        m.intercept_ = float(d["intercept"])
        m.coef_ = np.asarray(d["coef"], dtype=float)
        m.n_features_in_ = m.coef_.size
        return m


class _CoordinateDescentRegressor(BaseEstimator):
    """Shared fit machinery for the L1 and L1+L2 penalized regressions."""

    def _penalties(self) -> tuple[float, float]:
        raise NotImplementedError

    def fit(self, X, y):
        l1, l2 = self._penalties()
        if l1 < 0 or l2 < 0:
            raise ValueError("penalties must be non-negative")
        X, y = check_X_y(X, y)
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
        beta, n_iter, converged, path = _coordinate_descent(
            X - x_mean, y - y_mean, l1, l2, self.tol, self.max_iter
        )
        intercept = float(y_mean - x_mean @ beta)
        if not converged:
            raise ConvergenceError(
                f"coordinate descent did not converge in {self.max_iter} sweeps",
                coef=beta,
                intercept=intercept,
                n_iter=n_iter,
            )
        self.coef_ = beta
        self.intercept_ = intercept
        self.n_iter_ = n_iter
        self.objective_path_ = path
        self.n_features_in_ = X.shape[1]
        return self

    predict = LinearRegression.predict

    def to_dict(self) -> dict:
        l1, l2 = self._penalties()
        return {
            "intercept": self.intercept_,
            "coef": self.coef_.tolist(),
            "penalty": {"kind": "l1+l2" if l2 else "l1", "l1": l1, "l2": l2},
            "n_iter": self.n_iter_,
            "converged": True,
        }


class LassoRegression(_CoordinateDescentRegressor):
    """L1-penalized least squares: (1/n)*sum r^2 + penalty*sum |b_j|."""

    def __init__(self, penalty: float = 0.0, tol: float = 1e-7, max_iter: int = 10000):
        self.penalty = penalty
        self.tol = tol
        self.max_iter = max_iter

    def _penalties(self):
        return self.penalty, 0.0

    @classmethod
    def from_dict(cls, d) -> "LassoRegression":
        m = cls(penalty=float(d["penalty"]["l1"]))
        m.intercept_ = float(d["intercept"])
        m.coef_ = np.asarray(d["coef"], dtype=float)
        m.n_iter_ = int(d.get("n_iter", 0))
        m.n_features_in_ = m.coef_.size
        return m


class ElasticNetRegression(_CoordinateDescentRegressor):
    """L1+L2 penalized least squares with separate penalty weights."""

    def __init__(
        self,
        l1_penalty: float = 0.0,
        l2_penalty: float = 0.0,
        tol: float = 1e-7,
        max_iter: int = 10000,
    ):
        self.l1_penalty = l1_penalty
        self.l2_penalty = l2_penalty
        self.tol = tol
        self.max_iter = max_iter

    def _penalties(self):
        return self.l1_penalty, self.l2_penalty

    @classmethod
    def from_dict(cls, d) -> "ElasticNetRegression":
        m = cls(l1_penalty=float(d["penalty"]["l1"]), l2_penalty=float(d["penalty"]["l2"]))
        m.intercept_ = float(d["intercept"])
        m.coef_ = np.asarray(d["coef"], dtype=float)
        m.n_iter_ = int(d.get("n_iter", 0))
        m.n_features_in_ = m.coef_.size
        return m


def lasso_deactivation_threshold(X, y) -> float:
    """Smallest L1 penalty at which every coefficient is exactly zero:
    (2/n) * max_j |X_j' (y - mean(y))|."""
    X, y = check_X_y(X, y)
    return float(2.0 * np.max(np.abs(X.T @ (y - y.mean()))) / X.shape[0])

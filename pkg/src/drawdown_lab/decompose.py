"""Dimension-reduction regressions: principal components and partial least squares.

Both center X (and y) internally and regress on K derived component scores.
PCR picks directions by explained variance alone; PLS builds each component
from univariate target slopes, then orthogonalizes and repeats.
"""

from __future__ import annotations

import numpy as np

from .base import BaseEstimator, check_array, check_is_fitted, check_n_features, check_X_y

_EPS = 1e-12


class _ReducedRegressor(BaseEstimator):
    method = ""

    def __init__(self, n_components: int = 1):
        self.n_components = n_components

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        check_n_features(self, X)
        if self.weights_.shape[1] == 0:
            return np.full(X.shape[0], self.intercept_)
        scores = (X - self.x_mean_) @ self.weights_
        return self.intercept_ + scores @ self.component_coef_

    def transform(self, X):
        """Component scores for new rows (centered projection)."""
        check_is_fitted(self, "weights_")
        X = check_array(X)
        check_n_features(self, X)
        return (X - self.x_mean_) @ self.weights_

    def _finalize(self, X, y, weights):
        """Regress the original target on the component scores."""
        scores = (X - self.x_mean_) @ weights
        design = np.column_stack([np.ones(X.shape[0]), scores])
        sol = np.linalg.lstsq(design, y, rcond=None)[0]
        self.weights_ = weights
        self.intercept_ = float(sol[0])
        self.component_coef_ = sol[1:]
        self.n_features_in_ = X.shape[1]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_components": int(self.weights_.shape[1]),
            "weights": self.weights_.tolist(),
            "component_coef": self.component_coef_.tolist(),
            "intercept": self.intercept_,
            "x_mean": self.x_mean_.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(n_components=int(d["n_components"]))
        m.weights_ = np.asarray(d["weights"], dtype=float)
        if m.weights_.ndim == 1:
            m.weights_ = m.weights_.reshape(-1, max(int(d["n_components"]), 0))
        m.component_coef_ = np.asarray(d["component_coef"], dtype=float)
        m.intercept_ = float(d["intercept"])
        m.x_mean_ = np.asarray(d["x_mean"], dtype=float)
        m.n_features_in_ = m.x_mean_.size
        return m


class PrincipalComponentRegression(_ReducedRegressor):
    """Two-step fit: eigendecompose the predictor covariance, keep the top-K
    directions by explained variance (the target plays no role), then regress
    the target on the component scores."""

    method = "pcr"

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        n, p = X.shape
        K = self.n_components
        self.x_mean_ = X.mean(axis=0)
        Xc = X - self.x_mean_
        rank = int(np.linalg.matrix_rank(Xc))
        if not 1 <= K <= rank:
            raise ValueError(
                f"n_components must lie in 1..{rank} (achievable rank), got {K}"
            )
        eigvals, eigvecs = np.linalg.eigh(Xc.T @ Xc / n)
        order = np.argsort(-eigvals, kind="stable")[:K]
        W = eigvecs[:, order]
        # deterministic orientation: first non-negligible coordinate positive
        for k in range(W.shape[1]):
            col = W[:, k]
            nz = np.flatnonzero(np.abs(col) > 1e-12)
            if nz.size and col[nz[0]] < 0:
                W[:, k] = -col
        self.eigenvalues_ = eigvals[order]
        self._finalize(X, y, W)
        return self


class PartialLeastSquaresRegression(_ReducedRegressor):
    """Supervised reduction: each component weights predictors by their
    univariate slope against the (orthogonalized) target, so the strongest
    single-feature predictors dominate; the target and predictors are then
    orthogonalized against the component and the step repeats.

    Stops early with ``degenerate_stop_`` set if a component has no variance
    (e.g. the target is orthogonal to every predictor).
    """

    method = "pls"

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        n, p = X.shape
        K = self.n_components
        if not 1 <= K <= p:
            raise ValueError(f"n_components must lie in 1..{p}, got {K}")
        self.x_mean_ = X.mean(axis=0)
        Xk = X - self.x_mean_
        yk = y - y.mean()
        rotation = np.eye(p)  # maps centered X to the current orthogonalized set
        weight_cols = []
        self.degenerate_stop_ = False
        for _ in range(K):
            col_sq = np.einsum("ij,ij->j", Xk, Xk)
            slopes = np.divide(
                Xk.T @ yk, col_sq, out=np.zeros(p), where=col_sq > _EPS
            )
            norm = np.linalg.norm(slopes)
            if norm <= _EPS:
                self.degenerate_stop_ = True
                break
            w_local = slopes / norm
            comp = Xk @ w_local
            comp_sq = comp @ comp
            if comp_sq <= _EPS:
                self.degenerate_stop_ = True
                break
            w_global = rotation @ w_local
            weight_cols.append(w_global)
            loading = Xk.T @ comp / comp_sq
            Xk = Xk - np.outer(comp, loading)
            yk = yk - comp * (comp @ yk) / comp_sq
            rotation = rotation - np.outer(w_global, loading)
        W = np.column_stack(weight_cols) if weight_cols else np.zeros((p, 0))
        self.effective_components_ = W.shape[1]
        self._finalize(X, y, W)
        return self

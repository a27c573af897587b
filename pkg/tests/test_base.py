import numpy as np
import pytest

from drawdown_lab.base import BaseEstimator, check_array, check_X_y
from drawdown_lab.linear import RidgeRegression
from drawdown_lab.trees import RandomForestRegressor


class TestEstimatorProtocol:
    def test_get_params_reflects_constructor(self):
        model = RandomForestRegressor(n_trees=7, max_depth=3, seed=11)
        params = model.get_params()
        assert params["n_trees"] == 7
        assert params["max_depth"] == 3
        assert set(params) == {
            "n_trees", "row_fraction", "feature_subset", "max_depth", "min_leaf", "seed",
        }

    def test_set_params_round_trip(self):
        model = RidgeRegression(penalty=0.1)
        model.set_params(penalty=0.5)
        assert model.get_params() == {"penalty": 0.5}

    def test_set_params_rejects_unknown(self):
        with pytest.raises(ValueError, match="invalid parameter"):
            RidgeRegression().set_params(nope=1)

    def test_clone_by_params(self):
        # the protocol grid-search tooling relies on: type(m)(**m.get_params())
        model = RandomForestRegressor(n_trees=4, seed=2)
        clone = type(model)(**model.get_params())
        assert clone.get_params() == model.get_params()

    def test_repr_shows_params(self):
        assert "penalty=0.25" in repr(RidgeRegression(penalty=0.25))


class TestValidation:
    def test_check_array_promotes_1d(self):
        out = check_array([1.0, 2.0])
        assert out.shape == (2, 1)

    def test_check_array_rejects_nan(self):
        with pytest.raises(ValueError, match="non-finite"):
            check_array(np.array([[np.nan]]))

    def test_check_X_y_length_mismatch(self):
        with pytest.raises(ValueError, match="rows"):
            check_X_y(np.zeros((3, 2)), np.zeros(4))

    def test_param_names_skip_self_only(self):
        class Toy(BaseEstimator):
            def __init__(self, a=1, b=2):
                self.a = a
                self.b = b

        assert Toy._param_names() == ["a", "b"]

import numpy as np
import pytest
from sklearn.base import clone

from foss.estimator import FoSSRegressor


def tiny_data(n=8, t_obs=6, t_fut=4, seed=0):
    """Constant-velocity trajectories centered at the last observed point."""
    rng = np.random.default_rng(seed)
    v = rng.normal(scale=0.5, size=(n, 1, 2))
    t = np.arange(-t_obs + 1, 1).reshape(1, t_obs, 1)
    x = v * t + rng.normal(scale=0.01, size=(n, t_obs, 2))
    tf = np.arange(1, t_fut + 1).reshape(1, t_fut, 1)
    y = v * tf
    return x, y


def make_est(**kw):
    base = dict(t_obs=6, t_fut=4, d_model=4, k=2, ssm_state=2,
                epochs=3, batch_size=4, seed=0)
    base.update(kw)
    return FoSSRegressor(**base)


class TestSklearnProtocol:
    def test_get_set_params_roundtrip(self):
        est = make_est(lam=0.5)
        params = est.get_params()
        assert params["lam"] == 0.5 and params["d_model"] == 4
        est.set_params(lam=0.2)
        assert est.lam == 0.2

    def test_clone_preserves_params(self):
        est = make_est(identity_helix=True)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_unfitted_predict_raises(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            make_est().predict(np.zeros((1, 6, 2)))


class TestFitPredict:
    def test_shapes(self):
        x, y = tiny_data()
        est = make_est().fit(x, y)
        pred = est.predict(x)
        assert pred.shape == (8, 4, 2)
        traj, probs = est.predict_candidates(x)
        assert traj.shape == (8, 2, 4, 2)
        assert probs.shape == (8, 2)
        assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-12)

    def test_training_reduces_loss(self):
        x, y = tiny_data()
        est = make_est(epochs=25).fit(x, y)
        assert est.loss_history_[-1] < est.loss_history_[0]

    def test_deterministic_for_fixed_seed(self):
        x, y = tiny_data()
        a = make_est().fit(x, y).predict(x)
        b = make_est().fit(x, y).predict(x)
        assert np.array_equal(a, b)

    def test_score_is_negative_displacement(self):
        x, y = tiny_data()
        est = make_est().fit(x, y)
        want = -np.linalg.norm(est.predict(x) - y, axis=-1).mean()
        assert abs(est.score(x, y) - want) < 1e-12


class TestValidation:
    def test_bad_shapes_rejected(self):
        est = make_est()
        with pytest.raises(ValueError, match="X must have shape"):
            est.fit(np.zeros((4, 5, 2)), np.zeros((4, 4, 2)))
        with pytest.raises(ValueError, match="y must have shape"):
            est.fit(np.zeros((4, 6, 2)), np.zeros((4, 5, 2)))

    def test_non_finite_rejected(self):
        est = make_est()
        x = np.zeros((2, 6, 2))
        x[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            est.fit(x, np.zeros((2, 4, 2)))

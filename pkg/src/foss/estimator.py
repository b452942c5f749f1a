"""scikit-learn style estimator facade over the predictor.

``FoSSRegressor.fit(X, y)`` takes observed trajectories ``X`` of shape
(n_samples, t_obs, 2) and futures ``y`` of shape (n_samples, t_fut, 2) in a
common frame (callers typically center each sample at its last observed
position) and trains the full model with the standard recipe.  ``predict``
returns the probability-weighted fused future; ``predict_candidates`` exposes
all K modes with their probabilities.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import tensor as tt
from .model import FoSS, FoSSConfig
from .tensor import Tensor
from .train import Adam, OptimizerConfig, clip_gradients


class FoSSRegressor(BaseEstimator):
    def __init__(self, t_obs: int = 20, t_fut: int = 30, d_model: int = 32,
                 k: int = 6, lam: float = 0.1, ssm_state: int = 16,
                 epochs: int = 50, batch_size: int = 32, lr: float = 0.001,
                 clip_norm: float = 1.0, seed: int = 0,
                 disable_fd_branch: bool = False, identity_helix: bool = False,
                 identity_fourier_ssm: bool = False,
                 concat_mlp_fusion: bool = False):
        self.t_obs = t_obs
        self.t_fut = t_fut
        self.d_model = d_model
        self.k = k
        self.lam = lam
        self.ssm_state = ssm_state
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.clip_norm = clip_norm
        self.seed = seed
        self.disable_fd_branch = disable_fd_branch
        self.identity_helix = identity_helix
        self.identity_fourier_ssm = identity_fourier_ssm
        self.concat_mlp_fusion = concat_mlp_fusion

    # -- helpers -------------------------------------------------------------
    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1] != self.t_obs or X.shape[2] != 2:
            raise ValueError(
                f"X must have shape (n_samples, {self.t_obs}, 2), got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        return X

    def _check_y(self, y, n: int) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (n, self.t_fut, 2):
            raise ValueError(
                f"y must have shape ({n}, {self.t_fut}, 2), got {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite values")
        return y

    def _build(self) -> FoSS:
        cfg = FoSSConfig(
            t_obs=self.t_obs, t_fut=self.t_fut, d_model=self.d_model,
            k=self.k, lam=self.lam, ssm_state=self.ssm_state,
            disable_fd_branch=self.disable_fd_branch,
            identity_helix=self.identity_helix,
            identity_fourier_ssm=self.identity_fourier_ssm,
            concat_mlp_fusion=self.concat_mlp_fusion)
        return FoSS(cfg, seed=self.seed)

    # -- sklearn API ---------------------------------------------------------
    def fit(self, X, y):
        X = self._check_X(X)
        y = self._check_y(y, X.shape[0])
        self.model_ = self._build()
        params = self.model_.params()
        opt = Adam(params, OptimizerConfig(lr=self.lr))
        rng = np.random.default_rng(self.seed)
        n = X.shape[0]
        history = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            batches = 0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                opt.zero_grad()
                _, y_final = self.model_(Tensor(X[idx]))
                lb = self.model_.loss(y_final, Tensor(y[idx]))
                tt.backward(lb.l_total)
                clip_gradients(params, self.clip_norm)
                opt.step()
                epoch_loss += lb.l_total.item()
                batches += 1
            history.append(epoch_loss / batches)
        self.loss_history_ = history
        return self

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        X = self._check_X(X)
        with tt.no_grad():
            _, y_final = self.model_(Tensor(X))
        return y_final.data

    def predict_candidates(self, X) -> tuple[np.ndarray, np.ndarray]:
        """All K modes: (n, K, t_fut, 2) trajectories and (n, K) probabilities."""
        self._require_fitted()
        X = self._check_X(X)
        with tt.no_grad():
            cands, _ = self.model_(Tensor(X))
        return cands.trajectories.data, cands.probabilities.data

    def score(self, X, y) -> float:
        """Negative mean L2 displacement of the fused prediction."""
        y = self._check_y(y, np.asarray(X).shape[0])
        err = np.linalg.norm(self.predict(X) - y, axis=-1).mean()
        return -float(err)

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this FoSSRegressor instance is not fitted yet")

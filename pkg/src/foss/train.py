"""Training loop: adaptive-moment updates, gradient clipping, plateau schedule.

Scenarios are centered at the last observed position before they reach the
model, so the network always predicts displacements from the current pose;
the displacement metrics are translation-invariant, so validation scores are
computed in the centered frame directly.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint, metrics, tensor as tt
from .datagen import Scenario
from .model import FoSS
from .tensor import Parameter, Tensor


class TrainingAbort(RuntimeError):
    """The loss became non-finite; message carries epoch/step context."""


@dataclass
class OptimizerConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise tt.ConfigurationError("lr must be > 0")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    clip_norm: float = 1.0
    patience: int = 5
    factor: float = 0.1
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise tt.ConfigurationError("factor must be in (0, 1)")
        if self.patience < 1:
            raise tt.ConfigurationError("patience must be >= 1")


class Adam:
    """Bias-corrected adaptive-moment estimation over named parameters."""

    def __init__(self, params: list[Parameter], config: OptimizerConfig):
        self.params = params
        self.config = config
        self.lr = config.lr
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in params}
        self.v = {p.name: np.zeros_like(p.data) for p in params}

    def step(self) -> None:
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for p in self.params:
            g = p.grad
            m = self.m[p.name] = c.beta1 * self.m[p.name] + (1 - c.beta1) * g
            v = self.v[p.name] = c.beta2 * self.v[p.name] + (1 - c.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = np.zeros_like(p.data)


def clip_gradients(params: list[Parameter], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad = p.grad * scale
    return total


class PlateauScheduler:
    """Multiply lr by ``factor`` after ``patience`` epochs without strict
    improvement of the monitored metric (lower is better)."""

    def __init__(self, optimizer: Adam, patience: int, factor: float):
        self.optimizer = optimizer
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.stale = 0

    def update(self, metric: float) -> bool:
        if metric < self.best:
            self.best = metric
            self.stale = 0
            return False
        self.stale += 1
        if self.stale >= self.patience:
            self.optimizer.lr *= self.factor
            self.stale = 0
            return True
        return False


def center_scenarios(scenarios: list[Scenario]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack scenarios into arrays centered at the last observed position.

    Returns (X, Y, offsets) with shapes (N, T_obs, 2), (N, T_fut, 2), (N, 2).
    """
    offsets = np.stack([s.observed[-1] for s in scenarios])
    x = np.stack([s.observed for s in scenarios]) - offsets[:, None, :]
    y = np.stack([s.future for s in scenarios]) - offsets[:, None, :]
    return x, y, offsets


def evaluate_model(model: FoSS, scenarios: list[Scenario], k: int,
                  batch_size: int = 256) -> metrics.EvalReport:
    """Batched no-grad evaluation in the centered frame."""
    if not scenarios:
        raise tt.ConfigurationError("cannot evaluate an empty scenario set")
    x, y, _ = center_scenarios(scenarios)
    sets, truths = [], []
    with tt.no_grad():
        for i in range(0, len(scenarios), batch_size):
            cands, _ = model(Tensor(x[i:i + batch_size].astype(model.dtype)))
            for j in range(cands.probabilities.shape[0]):
                sets.append((cands.trajectories.data[j], cands.probabilities.data[j]))
                truths.append(y[i + j])
    return metrics.evaluate_candidate_sets(sets, truths, k=k)


LOG_HEADER = "epoch,l_time,l_freq,l_total,val_minade,lr"


def train(model: FoSS, train_scenarios: list[Scenario],
          val_scenarios: list[Scenario], config: TrainConfig,
          log_path: str | None = None,
          checkpoint_path: str | None = None) -> list[dict]:
    """Mini-batch training; returns per-epoch history rows.

    Logs CSV to ``log_path`` and saves the best-by-validation checkpoint to
    ``checkpoint_path`` whenever val minADE strictly improves.
    """
    if not train_scenarios:
        raise tt.ConfigurationError("empty training split")
    params = model.params()
    opt = Adam(params, config.optimizer)
    sched = PlateauScheduler(opt, config.patience, config.factor)
    rng = np.random.default_rng(config.seed)
    x_all, y_all, _ = center_scenarios(train_scenarios)
    n = len(train_scenarios)
    history: list[dict] = []
    best_val = np.inf
    log_fh = open(log_path, "w") if log_path else None
    if log_fh:
        log_fh.write(LOG_HEADER + "\n")
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            sums = {"l_time": 0.0, "l_freq": 0.0, "l_total": 0.0}
            batches = 0
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                opt.zero_grad()
                _, y_final = model(Tensor(x_all[idx].astype(model.dtype)))
                lb = model.loss(y_final, Tensor(y_all[idx].astype(model.dtype)))
                loss_val = lb.l_total.item()
                if not np.isfinite(loss_val):
                    raise TrainingAbort(
                        f"non-finite loss at epoch {epoch}, batch {batches}")
                tt.backward(lb.l_total)
                clip_gradients(params, config.clip_norm)
                opt.step()
                sums["l_time"] += lb.l_time.item()
                sums["l_freq"] += lb.l_freq.item()
                sums["l_total"] += loss_val
                batches += 1
            row = {
                "epoch": epoch,
                "l_time": sums["l_time"] / batches,
                "l_freq": sums["l_freq"] / batches,
                "l_total": sums["l_total"] / batches,
                "val_minade": np.nan,
                "lr": opt.lr,
            }
            if val_scenarios:
                report = evaluate_model(model, val_scenarios, k=model.config.k)
                row["val_minade"] = report.minade_k
                if report.minade_k < best_val:
                    best_val = report.minade_k
                    if checkpoint_path:
                        checkpoint.save_model(
                            checkpoint_path, model,
                            {"config": dataclasses.asdict(model.config),
                             "epoch": epoch, "best_val_minade": best_val})
                sched.update(report.minade_k)
            history.append(row)
            if log_fh:
                log_fh.write(
                    f"{row['epoch']},{row['l_time']:.10f},{row['l_freq']:.10f},"
                    f"{row['l_total']:.10f},{row['val_minade']:.10f},"
                    f"{row['lr']:.10g}\n")
                log_fh.flush()
    finally:
        if log_fh:
            log_fh.close()
    return history

"""Motion-prediction metrics over candidate sets.

All functions take plain numpy arrays: ``trajectories`` is (K, T, 2),
``probabilities`` is (K,), ground truth is (T, 2).  A scenario is a miss when
its best final displacement is strictly greater than 2.0 m; a displacement of
exactly 2.0 m is a hit.  b-minFDE adds the Brier penalty (1 - p)^2 of the
candidate attaining the minimum FDE.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .tensor import ConfigurationError

MISS_THRESHOLD = 2.0  # meters, strict inequality


def _check(trajectories: np.ndarray, y_true: np.ndarray) -> None:
    if trajectories.ndim != 3 or trajectories.shape[1:] != y_true.shape:
        raise ConfigurationError(
            f"candidate shape {trajectories.shape} does not match "
            f"ground truth {y_true.shape}")


def minade(trajectories: np.ndarray, y_true: np.ndarray) -> float:
    """min over k of the mean per-step Euclidean distance."""
    _check(trajectories, y_true)
    dist = np.linalg.norm(trajectories - y_true[None], axis=-1)
    return float(dist.mean(axis=-1).min())


def minfde(trajectories: np.ndarray, y_true: np.ndarray) -> float:
    """min over k of the final-step Euclidean distance."""
    _check(trajectories, y_true)
    return float(np.linalg.norm(trajectories[:, -1] - y_true[-1], axis=-1).min())


def is_miss(trajectories: np.ndarray, y_true: np.ndarray) -> bool:
    return minfde(trajectories, y_true) > MISS_THRESHOLD


def miss_rate(per_scenario_minfde: np.ndarray) -> float:
    """Fraction of scenarios whose best final displacement exceeds 2.0 m."""
    d = np.asarray(per_scenario_minfde, dtype=np.float64)
    return float(np.mean(d > MISS_THRESHOLD))


def b_minfde(trajectories: np.ndarray, probabilities: np.ndarray,
             y_true: np.ndarray) -> float:
    """minFDE plus (1 - p)^2 for the candidate attaining it."""
    _check(trajectories, y_true)
    fde = np.linalg.norm(trajectories[:, -1] - y_true[-1], axis=-1)
    k_star = int(np.argmin(fde))
    return float(fde[k_star] + (1.0 - probabilities[k_star]) ** 2)


@dataclass
class EvalReport:
    minade_k: float
    minfde_k: float
    mr_k: float
    b_minfde_k: float
    k: int
    n_scenarios: int

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @staticmethod
    def csv_header() -> str:
        return "minade_k,minfde_k,mr_k,b_minfde_k,k,n_scenarios"

    def to_csv_row(self) -> str:
        return (f"{self.minade_k:.6f},{self.minfde_k:.6f},{self.mr_k:.6f},"
                f"{self.b_minfde_k:.6f},{self.k},{self.n_scenarios}")


def evaluate_candidate_sets(candidate_sets, truths, k: int) -> EvalReport:
    """Aggregate the four metrics over (trajectories, probabilities) pairs.

    ``k=1`` restricts each set to its argmax-probability candidate.  Sums use
    numpy's pairwise reduction, so the result is deterministic regardless of
    how callers parallelize the per-scenario work.
    """
    if not candidate_sets:
        raise ConfigurationError("cannot evaluate an empty scenario set")
    ades, fdes, bfdes = [], [], []
    for (traj, probs), y_true in zip(candidate_sets, truths):
        traj = np.asarray(traj, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        if k == 1 and traj.shape[0] > 1:
            best = int(np.argmax(probs))
            traj, probs = traj[best:best + 1], probs[best:best + 1]
        elif traj.shape[0] != k:
            raise ConfigurationError(
                f"candidate set has {traj.shape[0]} trajectories, expected {k}")
        ades.append(minade(traj, y_true))
        fdes.append(minfde(traj, y_true))
        bfdes.append(b_minfde(traj, probs, y_true))
    n = len(ades)
    return EvalReport(
        minade_k=float(np.sum(ades) / n),
        minfde_k=float(np.sum(fdes) / n),
        mr_k=miss_rate(np.array(fdes)),
        b_minfde_k=float(np.sum(bfdes) / n),
        k=k, n_scenarios=n)

"""Synthetic trajectory scenarios: four driving motifs plus JSON-lines I/O.

Randomness comes from an explicit SplitMix64 generator (not the platform
default) so fixed seeds give bit-identical datasets across runs and platforms.
Each scenario is generated from its own stream, seeded by mixing the global
seed with the scenario index, which makes generation order-independent.

Motifs:
    straight    constant velocity along a random heading
    turn        constant-curvature arc
    u_turn      arc whose displacement headings sweep exactly pi
    lane_change constant longitudinal speed with a sigmoid lateral offset

Zero-mean i.i.d. Gaussian noise is added to every position afterwards.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ConfigurationError

MOTIFS = ("straight", "turn", "lane_change", "u_turn")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class ScenarioFormatError(ValueError):
    """A scenario file line failed to parse."""


class ScenarioDataError(ValueError):
    """A parsed scenario violates a data invariant."""


def _mix64(z: int) -> int:
    """SplitMix64 output function (Steele, Lea & Flood 2014 constants)."""
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Minimal 64-bit SplitMix generator with uniform/normal helpers."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        return _mix64(self.state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53 random bits -> [0, 1) with full double precision.
        u = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return lo + (hi - lo) * u

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] (inclusive)."""
        return lo + self.next_u64() % (hi - lo + 1)

    def normal(self, sigma: float = 1.0) -> float:
        if self._spare_normal is not None:
            z, self._spare_normal = self._spare_normal, None
            return sigma * z
        # Box-Muller; the uniform is offset away from zero for the log.
        u1 = ((self.next_u64() >> 11) + 1) * (1.0 / (1 << 53))
        u2 = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return sigma * r * math.cos(2.0 * math.pi * u2)


def scenario_seed(global_seed: int, index: int) -> int:
    """Per-scenario stream seed; mixing keeps streams order-independent."""
    return _mix64((global_seed & _MASK64) ^ _mix64(index & _MASK64))


@dataclass
class MotifParams:
    speed: float = 8.0              # m/s
    curvature: float = 0.05        # 1/m, turn and u_turn
    lateral_offset: float = 3.0    # m, lane_change
    transition_steps: int = 15     # lane_change ramp length in steps
    noise_sigma: float = 0.05      # m

    def __post_init__(self):
        if self.speed <= 0:
            raise ConfigurationError(f"speed must be > 0, got {self.speed}")
        if self.noise_sigma < 0:
            raise ConfigurationError(
                f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.transition_steps < 1:
            raise ConfigurationError("transition_steps must be >= 1")


@dataclass
class Scenario:
    id: str
    dt: float
    motif: str
    observed: np.ndarray   # (T_obs, 2) meters
    future: np.ndarray     # (T_fut, 2) meters
    split: str = "train"

    def positions(self) -> np.ndarray:
        return np.concatenate([self.observed, self.future], axis=0)


MAX_STEP_DISPLACEMENT = 5.0  # m; sanity bound at urban speeds


def _clean_positions(motif: str, params: MotifParams, n: int, dt: float,
                     heading0: float) -> np.ndarray:
    v = params.speed
    if motif == "straight":
        t = np.arange(n) * (v * dt)
        xy = np.stack([t, np.zeros(n)], axis=-1)
    elif motif in ("turn", "u_turn"):
        if motif == "turn":
            if params.curvature == 0.0:
                raise ConfigurationError("turn requires nonzero curvature")
            dtheta = params.curvature * v * dt
        else:
            # n-1 displacements; first-to-last displacement heading gap is
            # (n-2) increments, pinned to exactly pi.
            if n < 3:
                raise ConfigurationError("u_turn needs at least 3 steps")
            dtheta = math.pi / (n - 2)
            if params.curvature < 0:
                dtheta = -dtheta
        steps = np.arange(n - 1)
        headings = steps * dtheta
        disp = v * dt * np.stack([np.cos(headings), np.sin(headings)], axis=-1)
        xy = np.concatenate([np.zeros((1, 2)), np.cumsum(disp, axis=0)], axis=0)
    elif motif == "lane_change":
        x = np.arange(n) * (v * dt)
        # sigmoid ramp covering ~96% of the offset across transition_steps
        mid = (n - 1) / 2.0
        alpha = 8.0 / params.transition_steps
        y = params.lateral_offset / (1.0 + np.exp(-alpha * (np.arange(n) - mid)))
        xy = np.stack([x, y], axis=-1)
    else:
        raise ConfigurationError(f"unknown motif {motif!r}")
    c, s = math.cos(heading0), math.sin(heading0)
    rot = np.array([[c, s], [-s, c]])
    return xy @ rot


def generate_scenario(motif: str, params: MotifParams, seed: int,
                      t_obs: int = 20, t_fut: int = 30, dt: float = 0.1,
                      scenario_id: str | None = None) -> Scenario:
    """One noisy trajectory; deterministic for a fixed seed."""
    rng = SplitMix64(seed)
    heading0 = rng.uniform(0.0, 2.0 * math.pi)
    n = t_obs + t_fut
    xy = _clean_positions(motif, params, n, dt, heading0)
    if params.noise_sigma > 0:
        noise = np.array([[rng.normal(params.noise_sigma) for _ in range(2)]
                          for _ in range(n)])
        xy = xy + noise
    return Scenario(id=scenario_id or f"s{seed:016x}", dt=dt, motif=motif,
                    observed=xy[:t_obs], future=xy[t_obs:])


def sample_params(motif: str, rng: SplitMix64,
                  noise_sigma: float = 0.05) -> MotifParams:
    """Draw motif parameters from fixed desk-scale ranges."""
    speed = rng.uniform(3.0, 12.0)
    sign = 1.0 if rng.next_u64() % 2 == 0 else -1.0
    return MotifParams(
        speed=speed,
        curvature=sign * rng.uniform(0.02, 0.10),
        lateral_offset=sign * rng.uniform(2.0, 4.0),
        transition_steps=rng.randint(10, 25),
        noise_sigma=noise_sigma,
    )


def generate_dataset(counts: dict[str, int], seed: int, path: str,
                     t_obs: int = 20, t_fut: int = 30, dt: float = 0.1,
                     noise_sigma: float = 0.05) -> list[Scenario]:
    """Generate, assign 70/15/15 splits by seeded shuffle, and write JSONL."""
    for motif in counts:
        if motif not in MOTIFS:
            raise ConfigurationError(f"unknown motif {motif!r}")
    scenarios: list[Scenario] = []
    index = 0
    for motif in MOTIFS:
        for _ in range(counts.get(motif, 0)):
            s = scenario_seed(seed, index)
            params = sample_params(motif, SplitMix64(_mix64(s)), noise_sigma)
            scenarios.append(generate_scenario(
                motif, params, s, t_obs, t_fut, dt,
                scenario_id=f"{motif}-{index:05d}"))
            index += 1

    order = list(range(len(scenarios)))
    shuffle_rng = SplitMix64(_mix64(seed ^ 0xD15EA5E))
    for i in range(len(order) - 1, 0, -1):          # Fisher-Yates
        j = shuffle_rng.next_u64() % (i + 1)
        order[i], order[j] = order[j], order[i]
    n = len(order)
    n_train, n_val = int(0.70 * n), int(0.15 * n)
    for rank, idx in enumerate(order):
        if rank < n_train:
            scenarios[idx].split = "train"
        elif rank < n_train + n_val:
            scenarios[idx].split = "val"
        else:
            scenarios[idx].split = "test"

    with open(path, "w", encoding="utf-8") as fh:
        for s in scenarios:
            fh.write(_to_json_line(s) + "\n")
    return scenarios


def _to_json_line(s: Scenario) -> str:
    rec = {
        "id": s.id,
        "dt": s.dt,
        "motif": s.motif,
        "observed": [[round(float(x), 6), round(float(y), 6)]
                     for x, y in s.observed],
        "future": [[round(float(x), 6), round(float(y), 6)]
                   for x, y in s.future],
        "split": s.split,
    }
    return json.dumps(rec, separators=(",", ":"))


def load_scenarios(path: str) -> list[Scenario]:
    """Order-preserving load with per-line parse and invariant checks."""
    out: list[Scenario] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                s = Scenario(id=rec["id"], dt=float(rec["dt"]),
                             motif=rec["motif"],
                             observed=np.asarray(rec["observed"], dtype=np.float64),
                             future=np.asarray(rec["future"], dtype=np.float64),
                             split=rec["split"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ScenarioFormatError(
                    f"{path}:{lineno}: malformed scenario line: {exc}") from exc
            _validate(s, reference=out[0] if out else None)
            out.append(s)
    return out


def _validate(s: Scenario, reference: Scenario | None) -> None:
    if s.motif not in MOTIFS:
        raise ScenarioDataError(f"scenario {s.id}: unknown motif {s.motif!r}")
    if s.split not in ("train", "val", "test"):
        raise ScenarioDataError(f"scenario {s.id}: unknown split {s.split!r}")
    if s.observed.ndim != 2 or s.observed.shape[1] != 2 \
            or s.future.ndim != 2 or s.future.shape[1] != 2:
        raise ScenarioDataError(f"scenario {s.id}: positions must be (T, 2)")
    if reference is not None and (
            s.observed.shape != reference.observed.shape
            or s.future.shape != reference.future.shape):
        raise ScenarioDataError(
            f"scenario {s.id}: horizon differs from the first record")
    disp = np.linalg.norm(np.diff(s.positions(), axis=0), axis=-1)
    if disp.size and disp.max() > MAX_STEP_DISPLACEMENT:
        raise ScenarioDataError(
            f"scenario {s.id}: step displacement {disp.max():.3f} m exceeds "
            f"{MAX_STEP_DISPLACEMENT} m")


def split_scenarios(scenarios: list[Scenario]) -> dict[str, list[Scenario]]:
    out: dict[str, list[Scenario]] = {"train": [], "val": [], "test": []}
    for s in scenarios:
        out[s.split].append(s)
    return out

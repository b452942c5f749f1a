"""Input-dependent selective state-space scan.

Per-step matrices A_t, B_t, C_t, D_t are regenerated at every step from the
current input and its local depthwise-convolutional features, then a single
left-to-right recurrence

    y(t)   = C_t h(t) + D_t x(t)
    h(t+1) = A_t * h(t) + B_t x(t)

is run in O(T * n * max(d_in, p)).  A_t is diagonal and squashed into (0, 1)
via exp(-softplus(raw)), which keeps the recurrence stable for arbitrary
generator weights; the normalized state LayerNorm(SiLU(h)) by default replaces
h for both the next step and the read-out (switchable to read-out only).

The dense unrolled oracle at the bottom is a deliberately naive reference with
full (non-diagonal) transition matrices, used by the equivalence tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .layers import MLP, LayerNorm
from .tensor import Parameter, Tensor


class NumericalStabilityError(ArithmeticError):
    """The scan state became NaN/Inf."""


@dataclass
class SelectiveSSMConfig:
    n: int
    d_in: int
    p: int
    conv_width: int = 3
    generator_hidden: int = 16
    norm_recurrence: bool = True  # False: normalized state feeds read-out only

    def __post_init__(self):
        if self.conv_width % 2 == 0:
            raise tt.ConfigurationError(
                f"conv_width must be odd, got {self.conv_width}")
        if min(self.n, self.d_in, self.p, self.generator_hidden) < 1:
            raise tt.ConfigurationError("all SSM sizes must be >= 1")


@dataclass
class SSMStepParams:
    """Explicit per-step matrices; A may be a length-n diagonal or n x n."""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray


def squash_transition(raw: Tensor) -> Tensor:
    """Map unconstrained values strictly into (0, 1): exp(-softplus(raw)).

    The softplus output is clamped to [1e-9, 60] so the result can neither
    round up to 1.0 nor underflow to 0.0 in float64.
    """
    return tt.exp(-tt.clip(tt.softplus(raw), 1e-9, 60.0))


class SelectiveSSM:
    """Selective scan layer with MLP parameter generators."""

    def __init__(self, name: str, config: SelectiveSSMConfig,
                 rng: np.random.Generator, dtype=np.float64):
        self.config = config
        n, d, p, hid = config.n, config.d_in, config.p, config.generator_hidden
        self.conv_kernel = Parameter(
            f"{name}.conv", _delta_kernel(config.conv_width, d, dtype))
        self.f_a = MLP(f"{name}.fA", 2 * d, hid, n, rng, dtype)
        self.f_b = MLP(f"{name}.fB", 2 * d, hid, n * d, rng, dtype)
        self.f_c = MLP(f"{name}.fC", 2 * d, hid, p * n, rng, dtype)
        self.f_d = MLP(f"{name}.fD", 2 * d, hid, p * d, rng, dtype)
        self.state_norm = LayerNorm(f"{name}.state_norm", n, dtype)

    def params(self) -> list[Parameter]:
        out = [self.conv_kernel]
        for m in (self.f_a, self.f_b, self.f_c, self.f_d):
            out += m.params()
        return out + self.state_norm.params()

    # -- parameter generation ------------------------------------------------
    def local_features(self, x: Tensor) -> Tensor:
        """Depthwise same-length convolution of the input sequence."""
        return tt.conv1d(x, self.conv_kernel, mode="depthwise")

    def generate_all_step_params(self, x: Tensor):
        """Per-step (A, B, C, D) for the whole sequence at once.

        ``x`` is (B, T, d_in); returns tensors (B, T, n), (B, T, n*d),
        (B, T, p*n), (B, T, p*d) with A already squashed into (0, 1).
        """
        z = tt.concat([x, self.local_features(x)], axis=-1)
        a = squash_transition(self.f_a(z))
        return a, self.f_b(z), self.f_c(z), self.f_d(z)

    def generate_step_params(self, x_t: np.ndarray, x_tilde_t: np.ndarray) -> SSMStepParams:
        """Explicit matrices for a single step (inspection/testing surface)."""
        cfg = self.config
        z = Tensor(np.concatenate([x_t, x_tilde_t])[None, :])
        with tt.no_grad():
            a = squash_transition(self.f_a(z)).data[0]
            b = self.f_b(z).data[0].reshape(cfg.n, cfg.d_in)
            c = self.f_c(z).data[0].reshape(cfg.p, cfg.n)
            d = self.f_d(z).data[0].reshape(cfg.p, cfg.d_in)
        return SSMStepParams(A=a, B=b, C=c, D=d)

    # -- the scan ------------------------------------------------------------
    def scan(self, x: Tensor, h0: Tensor | None = None,
             normalize: bool = True) -> Tensor:
        """Run the selective recurrence over (B, T, d_in) or (T, d_in) input.

        ``normalize=False`` disables the per-step state normalization entirely
        (the mode the dense oracle reproduces).
        """
        squeeze = x.ndim == 2
        if squeeze:
            x = tt.reshape(x, (1,) + x.shape)
        cfg = self.config
        bsz, t_len, _ = x.shape
        a_all, b_all, c_all, d_all = self.generate_all_step_params(x)

        if h0 is None:
            h0 = Tensor(np.zeros((bsz, cfg.n, 1), dtype=x.dtype))
        read = h0
        prop = h0
        outputs = []
        for t in range(t_len):
            x_t = tt.reshape(tt.narrow(x, -2, t, 1), (bsz, cfg.d_in, 1))
            a_t = tt.reshape(tt.narrow(a_all, -2, t, 1), (bsz, cfg.n, 1))
            b_t = tt.reshape(tt.narrow(b_all, -2, t, 1), (bsz, cfg.n, cfg.d_in))
            c_t = tt.reshape(tt.narrow(c_all, -2, t, 1), (bsz, cfg.p, cfg.n))
            d_t = tt.reshape(tt.narrow(d_all, -2, t, 1), (bsz, cfg.p, cfg.d_in))

            y_t = tt.matmul(c_t, read) + tt.matmul(d_t, x_t)
            outputs.append(tt.reshape(y_t, (bsz, 1, cfg.p)))

            raw = a_t * prop + tt.matmul(b_t, x_t)
            if not np.all(np.isfinite(raw.data)):
                raise NumericalStabilityError(f"non-finite state at step {t}")
            if normalize:
                flat = tt.reshape(raw, (bsz, 1, cfg.n))
                normed = tt.reshape(self.state_norm(tt.silu(flat)), (bsz, cfg.n, 1))
                read = normed
                prop = normed if cfg.norm_recurrence else raw
            else:
                read = raw
                prop = raw
        out = tt.concat(outputs, axis=-2)
        return tt.reshape(out, out.shape[1:]) if squeeze else out


def scan_with_params(step_params: list[SSMStepParams], x: np.ndarray,
                     h0: np.ndarray | None = None) -> np.ndarray:
    """Scan with frozen explicit per-step diagonal parameters, no normalization.

    Companion to :class:`SelectiveSSM.scan` for oracle comparisons; ``x`` is
    (T, d_in), A entries are diagonal vectors.
    """
    t_len = x.shape[0]
    n = step_params[0].A.shape[0]
    h = np.zeros(n, dtype=x.dtype) if h0 is None else h0.astype(x.dtype)
    ys = []
    for t in range(t_len):
        sp = step_params[t]
        ys.append(sp.C @ h + sp.D @ x[t])
        h = sp.A * h + sp.B @ x[t]
        if not np.all(np.isfinite(h)):
            raise NumericalStabilityError(f"non-finite state at step {t}")
    return np.stack(ys)


def dense_unroll_oracle(step_params: list[SSMStepParams], x: np.ndarray,
                        h0: np.ndarray | None = None) -> np.ndarray:
    """Literal recurrence with full matrices and no normalization."""
    t_len = x.shape[0]
    a0 = np.asarray(step_params[0].A)
    n = a0.shape[-1]
    h = np.zeros(n, dtype=np.float64) if h0 is None else np.asarray(h0, dtype=np.float64)
    ys = []
    for t in range(t_len):
        sp = step_params[t]
        a = np.asarray(sp.A)
        ys.append(np.asarray(sp.C) @ h + np.asarray(sp.D) @ x[t])
        ah = np.diag(a) @ h if a.ndim == 1 else a @ h
        h = ah + np.asarray(sp.B) @ x[t]
    return np.stack(ys)


def _delta_kernel(width: int, channels: int, dtype) -> np.ndarray:
    """Identity (delta) initialization for a depthwise kernel."""
    k = np.zeros((width, channels), dtype=dtype)
    k[width // 2, :] = 1.0
    return k

"""Full dual-branch trajectory predictor.

Pipeline: per-step embedding -> time branch (selective scan) in parallel with
the frequency branch -> cross-attention fusion (queries from the time stream,
keys/values from the frequency stream, residual + LayerNorm) -> learnable-query
decoding into K candidate futures with probabilities -> probability-weighted
candidate fusion -> L1 loss in the time domain plus a weighted L1 loss between
the unitary spectra of prediction and ground truth.

Ablation switches (frequency branch off, identity helix, identity spectral
processing, concat+MLP fusion, channel-scan-only path, normalization feeding
the read-out only) change the computation path but never tensor shapes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import spectral, tensor as tt
from .fd_branch import FDBranch, FDBranchConfig
from .layers import CrossAttention, LayerNorm, Linear, MLP
from .ssm import SelectiveSSM, SelectiveSSMConfig
from .tensor import Parameter, Tensor


@dataclass
class FoSSConfig:
    t_obs: int = 20
    t_fut: int = 30
    d_raw: int = 2
    d_model: int = 32
    k: int = 6
    lam: float = 0.1           # frequency-loss weight
    ssm_state: int = 16
    ssm_hidden: int = 16
    conv_width: int = 3
    decoder_hidden: int = 64
    # ablation switches
    disable_fd_branch: bool = False
    identity_helix: bool = False
    identity_fourier_ssm: bool = False
    concat_mlp_fusion: bool = False
    specevolve_prose_mode: bool = False
    eq7_output_only: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise tt.ConfigurationError("candidate count k must be >= 1")
        if self.lam < 0:
            raise tt.ConfigurationError("lam must be >= 0")
        if self.t_obs < 1 or self.t_fut < 1:
            raise tt.ConfigurationError("t_obs and t_fut must be >= 1")


@dataclass
class CandidateSet:
    """K candidate futures with a probability per candidate.

    ``trajectories`` is (..., K, T_fut, 2) and ``probabilities`` (..., K),
    non-negative and summing to 1 over the K axis.
    """
    trajectories: Tensor
    probabilities: Tensor


@dataclass
class LossBreakdown:
    l_time: Tensor
    l_freq: Tensor
    l_total: Tensor


def trajectory_loss(y_pred: Tensor, y_true: Tensor, lam: float) -> LossBreakdown:
    """Mean-L1 time loss + lam * mean-L1 spectral loss.

    The spectral term transforms each output dimension over the future horizon
    and averages |d re| + |d im| over the same entry count as the time term,
    so a constant offset c yields l_time = |c| and l_freq = |c| / sqrt(T_fut).
    """
    if y_pred.shape != y_true.shape:
        raise tt.DimensionError(
            f"prediction shape {y_pred.shape} != target shape {y_true.shape}")
    diff = y_pred - y_true
    l_time = tt.tmean(tt.absolute(diff))
    fp = spectral.dft_forward(y_pred)
    ft = spectral.dft_forward(y_true)
    n = diff.data.size
    l_freq = (tt.tsum(tt.absolute(fp.re - ft.re))
              + tt.tsum(tt.absolute(fp.im - ft.im))) * (1.0 / n)
    return LossBreakdown(l_time=l_time, l_freq=l_freq,
                         l_total=l_time + lam * l_freq)


class FoSS:
    """Dual-branch predictor with multimodal query decoding."""

    def __init__(self, config: FoSSConfig, seed: int = 0, dtype=np.float64):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        c = config.d_model
        self.embed_linear = Linear("embed.linear", config.d_raw, c, rng, dtype)
        self.embed_norm = LayerNorm("embed.norm", c, dtype)
        self.td_ssm = SelectiveSSM(
            "td",
            SelectiveSSMConfig(n=config.ssm_state, d_in=c, p=c,
                               conv_width=config.conv_width,
                               generator_hidden=config.ssm_hidden,
                               norm_recurrence=not config.eq7_output_only),
            rng, dtype)
        self.fd = FDBranch(
            "fd",
            FDBranchConfig(d_model=c, seq_len=config.t_obs,
                           dwconv_width=config.conv_width,
                           ssm_state=config.ssm_state,
                           ssm_hidden=config.ssm_hidden,
                           identity_helix=config.identity_helix,
                           identity_fourier_ssm=config.identity_fourier_ssm,
                           prose_channel_scan=config.specevolve_prose_mode),
            rng, dtype)
        self.fuse_attn = CrossAttention("fuse.attn", c, rng, dtype)
        self.fuse_norm = LayerNorm("fuse.norm", c, dtype)
        self.fuse_mlp = MLP("fuse.mlp", 2 * c, 2 * c, c, rng, dtype)
        self.queries = Parameter(
            "decoder.queries",
            rng.normal(0.0, 1.0 / np.sqrt(c), size=(config.k, c)).astype(dtype))
        self.dec_attn = CrossAttention("decoder.attn", c, rng, dtype)
        self.traj_head = MLP("decoder.traj", c, config.decoder_hidden,
                             config.t_fut * 2, rng, dtype)
        self.score_head = MLP("decoder.score", c, config.decoder_hidden, 1, rng, dtype)

    # -- parameters ----------------------------------------------------------
    def params(self) -> list[Parameter]:
        out = self.embed_linear.params() + self.embed_norm.params()
        out += self.td_ssm.params() + self.fd.params()
        out += self.fuse_attn.params() + self.fuse_norm.params() + self.fuse_mlp.params()
        out += [self.queries] + self.dec_attn.params()
        out += self.traj_head.params() + self.score_head.params()
        names = [p.name for p in out]
        assert len(names) == len(set(names))
        return out

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params())

    # -- stages --------------------------------------------------------------
    def embed(self, x: Tensor) -> Tensor:
        return self.embed_norm(self.embed_linear(x))

    def td_branch(self, e: Tensor) -> Tensor:
        return self.td_ssm.scan(e)

    def fuse(self, y_time: Tensor, f_freq: Tensor) -> Tensor:
        if y_time.shape != f_freq.shape:
            raise tt.DimensionError(
                f"branch shapes differ: {y_time.shape} vs {f_freq.shape}")
        return self.fuse_norm(y_time + self.fuse_attn(y_time, f_freq))

    def fuse_concat_mlp(self, y_time: Tensor, f_freq: Tensor) -> Tensor:
        return self.fuse_mlp(tt.concat([y_time, f_freq], axis=-1))

    def decode_candidates(self, z: Tensor) -> CandidateSet:
        cfg = self.config
        z_attn = self.dec_attn(self.queries, z)            # (B, K, C)
        bsz = z_attn.shape[0]
        traj = tt.reshape(self.traj_head(z_attn), (bsz, cfg.k, cfg.t_fut, 2))
        logits = tt.reshape(self.score_head(z_attn), (bsz, cfg.k))
        return CandidateSet(trajectories=traj,
                            probabilities=tt.softmax(logits, axis=-1))

    def fuse_candidates(self, cands: CandidateSet) -> Tensor:
        p = cands.probabilities
        w = tt.reshape(p, p.shape + (1, 1))
        return tt.tsum(cands.trajectories * w, axis=-3)

    # -- end to end ----------------------------------------------------------
    def forward(self, x: Tensor) -> tuple[CandidateSet, Tensor]:
        squeeze = x.ndim == 2
        if squeeze:
            x = tt.reshape(x, (1,) + x.shape)
        e = self.embed(x)
        y_time = self.td_branch(e)
        if self.config.disable_fd_branch:
            f_freq = Tensor(np.zeros(e.shape, dtype=e.dtype))
        else:
            f_freq = self.fd(e)
        if self.config.concat_mlp_fusion:
            z = self.fuse_concat_mlp(y_time, f_freq)
        else:
            z = self.fuse(y_time, f_freq)
        cands = self.decode_candidates(z)
        y_final = self.fuse_candidates(cands)
        if squeeze:
            cands = CandidateSet(
                trajectories=tt.reshape(cands.trajectories, cands.trajectories.shape[1:]),
                probabilities=tt.reshape(cands.probabilities, cands.probabilities.shape[1:]))
            y_final = tt.reshape(y_final, y_final.shape[1:])
        return cands, y_final

    def __call__(self, x: Tensor) -> tuple[CandidateSet, Tensor]:
        return self.forward(x)

    def loss(self, y_final: Tensor, y_true: Tensor) -> LossBreakdown:
        return trajectory_loss(y_final, y_true, self.config.lam)

    def predict(self, x: np.ndarray, winner_take_all: bool = False) -> np.ndarray:
        """Point prediction for a single observed trajectory (T_obs, 2)."""
        with tt.no_grad():
            cands, y_final = self.forward(Tensor(np.asarray(x, dtype=self.dtype)))
            if not winner_take_all:
                return y_final.data
            k_star = int(np.argmax(cands.probabilities.data))
            return cands.trajectories.data[k_star]

"""Frequency branch: spatial spectral interaction and channel spectral evolution.

Two submodules share one LayerNorm-ed input F_l of shape (L, C):

* coarse-to-fine path: DFT along the sequence axis, polar split, helix
  reordering of amplitude and phase, a DWConv -> SiLU -> selective scan ->
  LayerNorm stack over the reordered sequences, inverse reordering, inverse
  DFT, and an output gate by SiLU(F_l).
* spectral-evolution path: global average pooling over L, DFT along the
  channel axis, magnitude-ordered channel scan, a selective scan over the
  reordered channel spectrum, inverse transform, then two element-wise gates
  producing the enhanced representation broadcast back over L.

Outputs are concatenated on the channel axis and linearly projected back to C.
Processed spectra are generally not conjugate-symmetric anymore, so the
inverse transforms take the real part without the symmetry check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import helix, spectral, tensor as tt
from .layers import LayerNorm, Linear
from .ssm import SelectiveSSM, SelectiveSSMConfig, _delta_kernel
from .tensor import Parameter, Tensor


@dataclass
class FDBranchConfig:
    d_model: int
    seq_len: int
    dwconv_width: int = 3
    ssm_state: int = 8
    ssm_hidden: int = 16
    identity_helix: bool = False        # replace the helix permutation with identity
    identity_fourier_ssm: bool = False  # bypass both spectral processing stacks
    prose_channel_scan: bool = False    # channel path: reorder + inverse only, no scan
    separate_streams: bool = False      # amplitude/phase get their own stacks

    def __post_init__(self):
        if self.d_model < 1 or self.seq_len < 1:
            raise tt.ConfigurationError("d_model and seq_len must be >= 1")
        if self.dwconv_width % 2 == 0:
            raise tt.ConfigurationError("dwconv_width must be odd")


@dataclass
class FDFeatures:
    """Intermediate branch activations, kept for inspection/tests."""
    spatial: Tensor     # gated coarse-to-fine output, (B, L, C)
    enhanced: Tensor    # channel-evolution output, (B, L, C)
    fused: Tensor       # projected concatenation, (B, L, C)


class _SpectrumStack:
    """DWConv -> SiLU -> selective scan -> LayerNorm over a (B, T, W) stream."""

    def __init__(self, name: str, width: int, config: FDBranchConfig,
                 rng: np.random.Generator, dtype):
        self.kernel = Parameter(f"{name}.dwconv",
                                _delta_kernel(config.dwconv_width, width, dtype))
        self.ssm = SelectiveSSM(
            f"{name}.ssm",
            SelectiveSSMConfig(n=config.ssm_state, d_in=width, p=width,
                               generator_hidden=config.ssm_hidden),
            rng, dtype)
        self.norm = LayerNorm(f"{name}.norm", width, dtype)

    def __call__(self, z: Tensor) -> Tensor:
        z = tt.silu(tt.conv1d(z, self.kernel, mode="depthwise"))
        return self.norm(self.ssm.scan(z))

    def params(self):
        return [self.kernel] + self.ssm.params() + self.norm.params()


class FDBranch:
    def __init__(self, name: str, config: FDBranchConfig,
                 rng: np.random.Generator, dtype=np.float64):
        self.config = config
        c, l = config.d_model, config.seq_len
        self.input_norm = LayerNorm(f"{name}.input_norm", c, dtype)
        self.perm = (helix.identity_permutation(l) if config.identity_helix
                     else helix.build_helix_permutation(l))
        if config.separate_streams:
            self.amp_stack = _SpectrumStack(f"{name}.amp", c, config, rng, dtype)
            self.phase_stack = _SpectrumStack(f"{name}.phase", c, config, rng, dtype)
            self.joint_stack = None
        else:
            self.joint_stack = _SpectrumStack(f"{name}.joint", 2 * c, config, rng, dtype)
        self.channel_ssm = SelectiveSSM(
            f"{name}.channel_ssm",
            SelectiveSSMConfig(n=config.ssm_state, d_in=2, p=2,
                               generator_hidden=config.ssm_hidden),
            rng, dtype)
        self.proj = Linear(f"{name}.proj", 2 * c, c, rng, dtype)

    def params(self) -> list[Parameter]:
        out = self.input_norm.params()
        if self.joint_stack is not None:
            out += self.joint_stack.params()
        else:
            out += self.amp_stack.params() + self.phase_stack.params()
        return out + self.channel_ssm.params() + self.proj.params()

    # -- submodules ----------------------------------------------------------
    def coarse2fine(self, f_l: Tensor) -> Tensor:
        """Spatial spectral interaction over the normalized input (B, L, C)."""
        c = self.config.d_model
        spec = spectral.dft_forward(f_l)
        pol = spectral.to_polar(spec)
        amp = helix.apply(self.perm, pol.amplitude)
        phase = helix.apply(self.perm, pol.phase)
        if not self.config.identity_fourier_ssm:
            if self.joint_stack is not None:
                z = self.joint_stack(tt.concat([amp, phase], axis=-1))
                amp, phase = tt.narrow(z, -1, 0, c), tt.narrow(z, -1, c, c)
            else:
                amp = self.amp_stack(amp)
                phase = self.phase_stack(phase)
        amp = helix.invert_apply(self.perm, amp)
        phase = helix.invert_apply(self.perm, phase)
        rec = spectral.from_polar(spectral.PolarSpectrum(amp, phase))
        processed = spectral.dft_inverse(rec, check_symmetry=False)
        return processed * tt.silu(f_l)

    def specevolve(self, f_l: Tensor) -> Tensor:
        """Channel spectral evolution over the normalized input (B, L, C)."""
        bsz, _, c = f_l.shape
        f_g = tt.tmean(f_l, axis=-2)                      # (B, C)
        col = tt.reshape(f_g, (bsz, c, 1))
        spec = spectral.dft_forward(col)
        scan = helix.channel_scan_order(spec)
        pol = spectral.to_polar(spec)
        amp = helix.apply_channel_order(scan, pol.amplitude)
        phase = helix.apply_channel_order(scan, pol.phase)
        if not (self.config.identity_fourier_ssm or self.config.prose_channel_scan):
            z = self.channel_ssm.scan(tt.concat([amp, phase], axis=-1))
            amp, phase = tt.narrow(z, -1, 0, 1), tt.narrow(z, -1, 1, 1)
        amp = helix.invert_channel_order(scan, amp)
        phase = helix.invert_channel_order(scan, phase)
        rec = spectral.from_polar(spectral.PolarSpectrum(amp, phase))
        processed = tt.reshape(spectral.dft_inverse(rec, check_symmetry=False),
                               (bsz, 1, c))
        gate = processed * tt.silu(tt.reshape(f_g, (bsz, 1, c)))
        return gate * f_l

    def forward(self, x_embedded: Tensor) -> FDFeatures:
        """Full branch over an embedded sequence (B, L, C) or (L, C)."""
        squeeze = x_embedded.ndim == 2
        if squeeze:
            x_embedded = tt.reshape(x_embedded, (1,) + x_embedded.shape)
        f_l = self.input_norm(x_embedded)
        spatial = self.coarse2fine(f_l)
        enhanced = self.specevolve(f_l)
        fused = self.proj(tt.concat([spatial, enhanced], axis=-1))
        if squeeze:
            spatial = tt.reshape(spatial, spatial.shape[1:])
            enhanced = tt.reshape(enhanced, enhanced.shape[1:])
            fused = tt.reshape(fused, fused.shape[1:])
        return FDFeatures(spatial=spatial, enhanced=enhanced, fused=fused)

    def __call__(self, x_embedded: Tensor) -> Tensor:
        return self.forward(x_embedded).fused

"""Unitary discrete Fourier transform and polar decomposition.

The transform is normalized by 1/sqrt(T) in both directions, so it is unitary
(Parseval holds exactly) and forward/inverse compose to the identity.  Complex
values are carried as paired real tensors (re, im); the transform is then a
constant real-linear map and gradients flow through it without special cases.

Forward/backward use numpy's FFT (exact for arbitrary T, no padding games);
the O(T^2) summation oracle lives in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .tensor import Tensor

#: amplitudes below this are treated as zero: phase pinned to 0, phase/amplitude
#: gradients suppressed (the angle is undefined at the origin).
AMPLITUDE_GUARD = 1e-12


class SpectralConsistencyError(ValueError):
    """Inverse transform of a supposedly real-signal spectrum left a large
    imaginary residue (corrupted or asymmetric spectrum)."""


@dataclass
class ComplexSeq:
    """Complex spectrum as paired real tensors of identical shape (..., T, d)."""
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise tt.DimensionError(
                f"re/im shapes differ: {self.re.shape} vs {self.im.shape}")


@dataclass
class PolarSpectrum:
    """Per-frequency amplitude (>= 0) and phase (radians in (-pi, pi])."""
    amplitude: Tensor
    phase: Tensor


def dft_forward(x: Tensor) -> ComplexSeq:
    """Unitary DFT along the second-to-last axis, independently per feature dim.

    F(w) = (1/sqrt(T)) * sum_t x(t) exp(-2j*pi*t*w/T)
    """
    t = x.shape[-2]
    scale = 1.0 / np.sqrt(t)
    f = np.fft.fft(x.data, axis=-2) * scale

    def backward_re(g):
        return (np.real(np.fft.ifft(g, axis=-2)).astype(x.dtype) * (t * scale),)

    def backward_im(g):
        return (np.imag(np.fft.ifft(g, axis=-2)).astype(x.dtype) * (-t * scale),)

    re = tt._node(np.real(f).astype(x.dtype), (x,), backward_re)
    im = tt._node(np.imag(f).astype(x.dtype), (x,), backward_im)
    return ComplexSeq(re, im)


def dft_inverse(f: ComplexSeq, check_symmetry: bool = True,
                residue_tol: float = 1e-6) -> Tensor:
    """Inverse unitary DFT; returns the real part of the reconstruction.

    With ``check_symmetry`` the imaginary residue must stay below
    ``residue_tol`` (a spectrum that came from a real signal reconstructs to a
    real signal); processed spectra that are deliberately asymmetric should
    pass ``check_symmetry=False``.
    """
    t = f.re.shape[-2]
    scale = np.sqrt(t)
    rec = np.fft.ifft(f.re.data + 1j * f.im.data, axis=-2) * scale
    if check_symmetry:
        residue = float(np.max(np.abs(np.imag(rec)))) if rec.size else 0.0
        if residue > residue_tol:
            raise SpectralConsistencyError(
                f"imaginary residue {residue:.3e} exceeds {residue_tol:.1e}")
    dtype = f.re.dtype
    data = np.real(rec).astype(dtype)

    def backward(g):
        gf = np.fft.fft(g, axis=-2) / scale
        return (np.real(gf).astype(dtype), np.imag(gf).astype(dtype))

    return tt._node(data, (f.re, f.im), backward)


def to_polar(f: ComplexSeq) -> PolarSpectrum:
    """amplitude = sqrt(re^2 + im^2); phase = atan2(im, re), pinned to 0 (with
    zero gradient) wherever amplitude < AMPLITUDE_GUARD."""
    re, im = f.re, f.im
    amp_data = np.hypot(re.data, im.data)
    live = amp_data >= AMPLITUDE_GUARD
    safe_amp = np.where(live, amp_data, 1.0)

    def amp_backward(g):
        return (g * np.where(live, re.data / safe_amp, 0.0),
                g * np.where(live, im.data / safe_amp, 0.0))

    amplitude = tt._node(amp_data, (re, im), amp_backward)

    phase_data = np.where(live, np.arctan2(im.data, re.data), 0.0).astype(re.dtype)
    sq = np.where(live, amp_data * amp_data, 1.0)

    def phase_backward(g):
        return (g * np.where(live, -im.data / sq, 0.0),
                g * np.where(live, re.data / sq, 0.0))

    phase = tt._node(phase_data, (re, im), phase_backward)
    return PolarSpectrum(amplitude, phase)


def from_polar(p: PolarSpectrum) -> ComplexSeq:
    """re = A cos(P), im = A sin(P)."""
    return ComplexSeq(p.amplitude * tt.cos(p.phase),
                      p.amplitude * tt.sin(p.phase))

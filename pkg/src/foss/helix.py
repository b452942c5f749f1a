"""Progressive helix reordering of spectra and the channel magnitude scan.

A 1-D spectrum of length T is conceptually laid out row-major on a G x G grid
(G = ceil(sqrt(T)), tail cells empty), circularly shifted so the DC
coefficient sits at the grid center, then traversed outward by ascending
spectral radius with row-major tie-break.  The result is a fixed permutation:
low frequencies first, high frequencies last, no learnable parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .tensor import Tensor
from .spectral import ComplexSeq


@dataclass(frozen=True)
class HelixPermutation:
    """Spiral-order index map over T frequency slots.

    ``pi[s]`` is the original frequency index placed at output position s;
    ``pi_inv`` undoes it; ``radii`` is the non-decreasing radius of each
    traversal step.
    """
    T: int
    G: int
    center: tuple[int, int]
    pi: np.ndarray
    pi_inv: np.ndarray
    radii: np.ndarray


@dataclass(frozen=True)
class ChannelScanOrder:
    """Per-sample channel permutation sorted by ascending spectral magnitude.

    ``order`` has shape (..., C): leading axes are batch axes, the last axis
    is the permutation for that sample.  ``key`` holds the sorted magnitudes.
    """
    C: int
    order: np.ndarray
    key: np.ndarray


def build_helix_permutation(T: int) -> HelixPermutation:
    """Construct the DC-centered outward-spiral permutation for length T."""
    if T < 1:
        raise tt.ConfigurationError(f"sequence length must be >= 1, got {T}")
    g = math.isqrt(T)
    if g * g < T:
        g += 1
    shift = g // 2
    idx = np.arange(T)
    # Row-major grid cell of each index, then circular shift so DC -> center.
    u = (idx // g + shift) % g
    v = (idx % g + shift) % g
    r = np.hypot(u.astype(np.float64) - shift, v.astype(np.float64) - shift)
    order = np.lexsort((v, u, r))
    pi = idx[order]
    pi_inv = np.empty(T, dtype=np.intp)
    pi_inv[pi] = np.arange(T)
    return HelixPermutation(T=T, G=g, center=(shift, shift), pi=pi,
                            pi_inv=pi_inv, radii=r[order])


def identity_permutation(T: int) -> HelixPermutation:
    """Trivial ordering, used by the helix-ablation path."""
    idx = np.arange(T)
    return HelixPermutation(T=T, G=T, center=(0, 0), pi=idx.copy(),
                            pi_inv=idx.copy(), radii=np.zeros(T))


def apply(perm: HelixPermutation, seq: Tensor) -> Tensor:
    """out[s] = seq[pi[s]] along the second-to-last axis."""
    if seq.shape[-2] != perm.T:
        raise tt.DimensionError(
            f"sequence length {seq.shape[-2]} does not match permutation T={perm.T}")
    return tt.gather(seq, perm.pi, axis=-2)


def invert_apply(perm: HelixPermutation, seq: Tensor) -> Tensor:
    """out[pi[s]] = seq[s]; exact inverse of :func:`apply`."""
    if seq.shape[-2] != perm.T:
        raise tt.DimensionError(
            f"sequence length {seq.shape[-2]} does not match permutation T={perm.T}")
    return tt.gather(seq, perm.pi_inv, axis=-2)


def channel_scan_order(spectrum: ComplexSeq) -> ChannelScanOrder:
    """Sort channel-spectrum slots by ascending magnitude, ties by index.

    The input is a per-channel spectrum with shape (..., C, 1); orders are
    computed independently per leading (batch) slice.  The resulting
    permutation is a constant during differentiation — gradients flow through
    the gathered values only.
    """
    mag = np.hypot(spectrum.re.data, spectrum.im.data)[..., 0]
    c = mag.shape[-1]
    order = np.argsort(mag, axis=-1, kind="stable").astype(np.intp)
    return ChannelScanOrder(C=c, order=order,
                            key=np.take_along_axis(mag, order, axis=-1))


def apply_channel_order(scan: ChannelScanOrder, seq: Tensor) -> Tensor:
    """out[..., s, :] = seq[..., order[..., s], :]."""
    if seq.shape[-2] != scan.C:
        raise tt.DimensionError(
            f"channel count {seq.shape[-2]} does not match scan C={scan.C}")
    return tt.take_along(seq, scan.order[..., None], axis=-2)


def invert_channel_order(scan: ChannelScanOrder, seq: Tensor) -> Tensor:
    """Undo :func:`apply_channel_order`."""
    if seq.shape[-2] != scan.C:
        raise tt.DimensionError(
            f"channel count {seq.shape[-2]} does not match scan C={scan.C}")
    inv = np.argsort(scan.order, axis=-1, kind="stable").astype(np.intp)
    return tt.take_along(seq, inv[..., None], axis=-2)

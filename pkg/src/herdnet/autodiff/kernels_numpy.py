"""Pure-numpy implementations of the temporal convolution hot kernels.

All kernels work on batched, already-padded inputs laid out as (batch,
channels, width) float64 C-contiguous arrays. The kernel tensor is
(out_channels, in_channels, 3). The compiled module in ``_speedups.pyx``
implements the same three functions with identical semantics.
"""

import numpy as np


def conv1x3_fwd(xp: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Cross-correlate ``xp`` (b, c, wp) with ``w`` (o, c, 3) at ``stride``."""
    b, c, wp = xp.shape
    o = w.shape[0]
    wout = (wp - 3) // stride + 1
    y = np.zeros((b, o, wout), dtype=np.float64)
    for k in range(3):
        tap = xp[:, :, k : k + stride * wout : stride]
        y += np.einsum("bcw,oc->bow", tap, w[:, :, k])
    return y


def conv1x3_bwd_input(gy: np.ndarray, w: np.ndarray, stride: int, wp: int) -> np.ndarray:
    """Gradient of conv1x3_fwd w.r.t. the padded input."""
    b, o, wout = gy.shape
    c = w.shape[1]
    gx = np.zeros((b, c, wp), dtype=np.float64)
    for k in range(3):
        gx[:, :, k : k + stride * wout : stride] += np.einsum("bow,oc->bcw", gy, w[:, :, k])
    return gx


def conv1x3_bwd_weight(gy: np.ndarray, xp: np.ndarray, stride: int) -> np.ndarray:
    """Gradient of conv1x3_fwd w.r.t. the kernel."""
    b, o, wout = gy.shape
    c = xp.shape[1]
    gw = np.empty((o, c, 3), dtype=np.float64)
    for k in range(3):
        tap = xp[:, :, k : k + stride * wout : stride]
        gw[:, :, k] = np.einsum("bow,bcw->oc", gy, tap)
    return gw

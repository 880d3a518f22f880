"""Prediction thresholding and the parallel per-detector syndrome update.

Classification never dequantizes: the Pauli class is an integer argmax
(ties resolve to the lowest channel, identity first) and the two binary
channels compare against the integer threshold derived from the output
layer's quantization parameters. The syndrome update is purely local:
every residual detector bit is the raw bit XORed with the accepted
predictions in its fixed neighborhood, so all detectors update in
parallel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..code_model import HOOK_DELTA
from .model import QuantizedModel
from .tensors import TensorCodec


@dataclass
class CompressedErrors:
    """Accepted predictions per anchor cell: channels [X, Z, M, H]."""

    x: np.ndarray
    z: np.ndarray
    m: np.ndarray
    h: np.ndarray

    @property
    def rounds(self):
        return self.x.shape[2]


def classify(pred: np.ndarray, theta_int: int) -> CompressedErrors:
    """PredictionTensor -> compressed [X, Z, M, H] booleans.

    Channels 0-3 go through argmax (a Y call sets both X and Z bits);
    channels 4 and 5 fire when the integer logit exceeds theta_int.
    """
    pauli = np.argmax(pred[..., 0:4], axis=-1)
    return CompressedErrors(
        x=(pauli == 1) | (pauli == 2),
        z=(pauli == 3) | (pauli == 2),
        m=pred[..., 4] > theta_int,
        h=pred[..., 5] > theta_int,
    )


def _shift2(arr, dx, dy):
    """Shift a (X, Y, T) array by (dx, dy) with zero fill."""
    out = np.zeros_like(arr)
    W, H = arr.shape[0], arr.shape[1]
    xs_src = slice(max(0, -dx), min(W, W - dx))
    xs_dst = slice(max(0, dx), min(W, W + dx))
    ys_src = slice(max(0, -dy), min(H, H - dy))
    ys_dst = slice(max(0, dy), min(H, H + dy))
    out[xs_dst, ys_dst] = arr[xs_src, ys_src]
    return out


def post_process(comp: CompressedErrors, raw: np.ndarray,
                 codec: TensorCodec, t0: int = 0):
    """Apply accepted predictions to a raw syndrome window.

    raw is the embedded (alpha+1, beta+1, T, 2) tensor; t0 is the absolute
    round of the window start (anchor validity near the stream end depends
    on it). Returns (residual tensor, local logical mask).

    Every residual bit is computed independently: raw XOR the measurement
    bits at (t, t-1), the hook bits at the cell and at the hook-displaced
    cell one round earlier, and the Pauli bits of the up-to-four adjacent
    data anchors.
    """
    T = comp.rounds
    gamma = codec.gamma
    # anchors that map to no mechanism are ignored
    t_ok = (t0 + np.arange(T) < gamma - 1)[None, None, :]
    m_ok = comp.m & codec.m_valid[:, :, None] & t_ok
    h_ok = comp.h & codec.h_valid[:, :, None] & t_ok
    x_ok = comp.x & codec.pauli_valid[:, :, None]
    z_ok = comp.z & codec.pauli_valid[:, :, None]

    flips = np.zeros((codec.width, codec.height, T, 2), dtype=bool)
    for c, bits in ((0, x_ok), (1, z_ok)):
        # a data Pauli flips its adjacent detectors of the other parity:
        # anchors at the 2x2 block up-left of the detector
        agg = np.zeros_like(bits)
        for dx in (0, 1):
            for dy in (0, 1):
                agg ^= _shift2(bits, dx, dy)
        flips[..., c] ^= agg
    for c in (0, 1):
        basis = "Z" if c == 0 else "X"
        sel = (codec.channel == c)[:, :, None]
        m_here = m_ok & sel
        agg = m_here.copy()
        agg[:, :, 1:] ^= m_here[:, :, :-1]
        flips[..., c] ^= agg
        h_here = h_ok & sel
        agg = h_here.copy()
        ddx, ddy = HOOK_DELTA[basis]
        shifted = _shift2(h_here, ddx, ddy)
        agg[:, :, 1:] ^= shifted[:, :, :-1]
        flips[..., c] ^= agg

    # only cells that host a detector of the channel's parity can fire
    host = np.zeros((codec.width, codec.height, 2), dtype=bool)
    for c in (0, 1):
        host[:, :, c] = codec.real_det & (codec.channel == c)
    fired = (raw == 1) ^ flips
    fired &= host[:, :, None, :]
    residual = np.broadcast_to(
        codec.base[:, :, None, :], raw.shape).copy()
    residual[fired] = 1

    local_mask = np.uint64(0)
    for bits, masks in ((x_ok, codec.mask_x), (z_ok, codec.mask_z),
                        (h_ok, codec.mask_h)):
        sel = masks[:, :, None] * bits.astype(np.uint64)
        local_mask ^= np.bitwise_xor.reduce(sel, axis=None)
    return residual, int(local_mask)


def residual_ratio(raw: np.ndarray, residual: np.ndarray) -> tuple:
    """(set bits after, set bits before) over real detector cells."""
    return int(np.count_nonzero(residual == 1)), int(
        np.count_nonzero(raw == 1))

"""Pure-integer convolution kernels and the 3-stage streaming pipeline.

All arithmetic is int64 accumulation over int8 weights and uint8/int8
activations with fixed-point requantization, so results are bit-exact
across platforms.

Spatial semantics: the input grid is extended once by the receptive-field
radius (3 cells) with zeros and the conv stack then runs in valid mode, so
a board that receives a 3-cell halo of neighbor data computes exactly the
global result on its own tile with no per-layer exchange. Temporal
semantics are same-style per stage: missing rounds at the stream ends
contribute nothing, and the streaming path emits each output round with a
fixed three-round pipeline delay, flushing the tail without extra idle
rounds. Streaming and whole-volume paths are bit-identical.
"""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from .model import QuantLayer, QuantizedModel

HALO = 3     # receptive-field radius of the three stacked 3x3x3 layers


def _requant(acc, layer: QuantLayer, in_scale: float) -> np.ndarray:
    m0, shift = layer.requant_params(in_scale)
    v = acc.astype(np.int64) * m0
    v = (v + (1 << (shift - 1))) >> shift
    v = v + layer.act_zp
    if layer.relu:
        np.maximum(v, layer.act_zp, out=v)
        return np.clip(v, 0, 255).astype(np.int64)
    return np.clip(v, -128, 127).astype(np.int64)


def conv_layer_volume(layer: QuantLayer, x: np.ndarray,
                      in_zp: int) -> np.ndarray:
    """One conv layer over (B, C, T, Y, X): valid in space, zero-padded
    (same) in time."""
    kt, ky, kx = layer.ksize
    B, C, T, H, W = x.shape
    pt = kt // 2
    xs = x.astype(np.int64) - in_zp
    xp = np.zeros((B, C, T + 2 * pt, H, W), dtype=np.int64)
    xp[:, :, pt:pt + T] = xs
    Ho, Wo = H - (ky - 1), W - (kx - 1)
    acc = np.zeros((B, layer.out_ch, T, Ho, Wo), dtype=np.int64)
    wmat = layer.weights.astype(np.int64)
    for dt in range(kt):
        for dy in range(ky):
            for dx in range(kx):
                sl = xp[:, :, dt:dt + T, dy:dy + Ho, dx:dx + Wo]
                acc += np.einsum("oi,bityx->botyx",
                                 wmat[:, :, dt, dy, dx], sl)
    acc += layer.bias.astype(np.int64)[None, :, None, None, None]
    return acc


def infer_volume(model: QuantizedModel, tensor: np.ndarray,
                 pre_padded: bool = False) -> np.ndarray:
    """Whole-volume integer inference.

    tensor: (alpha+1, beta+1, T, 2), optionally with a leading batch axis.
    When pre_padded, the spatial extension (own data plus halo) is already
    part of the input, as a board sees it after the exchange.
    """
    squeeze = tensor.ndim == 4
    if squeeze:
        tensor = tensor[None]
    x = np.ascontiguousarray(np.transpose(
        tensor, (0, 4, 3, 2, 1))).astype(np.int64)   # (B, C, T, Y, X)
    if not pre_padded:
        B, C, T, H, W = x.shape
        xp = np.zeros((B, C, T, H + 2 * HALO, W + 2 * HALO), dtype=np.int64)
        xp[:, :, :, HALO:HALO + H, HALO:HALO + W] = x
        x = xp
    in_scale, in_zp = model.input_scale, model.input_zp
    for layer in model.layers:
        acc = conv_layer_volume(layer, x, in_zp)
        x = _requant(acc, layer, in_scale)
        in_scale, in_zp = layer.act_scale, layer.act_zp
    out = np.transpose(x, (0, 4, 3, 2, 1))
    return out[0] if squeeze else out


class StreamingPipeline:
    """Round-by-round inference: three conv stages chained through rolling
    3-round buffers, the 1x1x1 head fused into the last stage."""

    def __init__(self, model: QuantizedModel, width: int, height: int,
                 pre_padded: bool = False):
        self.model = model
        self.width = width
        self.height = height
        self.pre_padded = pre_padded
        self._stages = []
        in_scale, in_zp = model.input_scale, model.input_zp
        for layer in model.layers[:3]:
            self._stages.append(_ConvStage(layer, in_scale, in_zp))
            in_scale, in_zp = layer.act_scale, layer.act_zp
        self._head = model.layers[3]
        self._head_in = (in_scale, in_zp)
        self.rounds_in = 0
        self.rounds_out = 0

    def _head_apply(self, r):
        w = self._head.weights.astype(np.int64)[:, :, 0, 0, 0]
        in_scale, in_zp = self._head_in
        acc = np.einsum("oi,iyx->oyx", w, r - in_zp)
        acc += self._head.bias.astype(np.int64)[:, None, None]
        return _requant(acc, self._head, in_scale)

    def _ingest(self, round_plane):
        r = np.transpose(round_plane, (2, 1, 0)).astype(np.int64)  # (C,Y,X)
        if not self.pre_padded:
            C, H, W = r.shape
            rp = np.zeros((C, H + 2 * HALO, W + 2 * HALO), dtype=np.int64)
            rp[:, HALO:HALO + H, HALO:HALO + W] = r
            r = rp
        return r

    def _advance(self, rounds):
        for stage in self._stages:
            nxt = []
            for r in rounds:
                nxt.extend(stage.push(r))
            rounds = nxt
        return [self._head_apply(r) for r in rounds]

    def push(self, round_plane: np.ndarray) -> list:
        """Feed one (alpha+1, beta+1, 2) input round; returns 0 or more
        completed (alpha+1, beta+1, 6) prediction rounds."""
        self.rounds_in += 1
        out = self._advance([self._ingest(round_plane)])
        self.rounds_out += len(out)
        return [np.transpose(o, (2, 1, 0)) for o in out]

    def flush(self) -> list:
        """End of stream: emit the trailing rounds immediately."""
        rounds = []
        for stage in self._stages:
            nxt = []
            for r in rounds:
                nxt.extend(stage.push(r))
            nxt.extend(stage.flush())
            rounds = nxt
        out = [self._head_apply(r) for r in rounds]
        self.rounds_out += len(out)
        return [np.transpose(o, (2, 1, 0)) for o in out]


class _ConvStage:
    def __init__(self, layer: QuantLayer, in_scale: float, in_zp: int):
        self.layer = layer
        self.in_scale = in_scale
        self.in_zp = in_zp
        self._buf = []          # up to 3 most recent input rounds
        self._t = 0             # input rounds seen

    def _conv_center(self, prev, cur, nxt):
        layer = self.layer
        C, H, W = cur.shape
        Ho, Wo = H - 2, W - 2
        acc = np.zeros((layer.out_ch, Ho, Wo), dtype=np.int64)
        wmat = layer.weights.astype(np.int64)
        for dt, r in enumerate((prev, cur, nxt)):
            if r is None:
                continue        # time padding contributes nothing
            rs = r - self.in_zp
            for dy in range(3):
                for dx in range(3):
                    acc += np.einsum(
                        "oi,iyx->oyx", wmat[:, :, dt, dy, dx],
                        rs[:, dy:dy + Ho, dx:dx + Wo])
        acc += layer.bias.astype(np.int64)[:, None, None]
        return _requant(acc, self.layer, self.in_scale)

    def push(self, r) -> list:
        self._buf.append(r)
        self._t += 1
        out = []
        if self._t >= 2:
            # output round t-1 uses inputs (t-2, t-1, t)
            prev = self._buf[-3] if self._t >= 3 else None
            out.append(self._conv_center(prev, self._buf[-2],
                                         self._buf[-1]))
        if len(self._buf) > 3:
            self._buf.pop(0)
        return out

    def flush(self) -> list:
        if self._t == 0:
            return []
        if self._t == 1:
            return [self._conv_center(None, self._buf[-1], None)]
        return [self._conv_center(self._buf[-2], self._buf[-1], None)]

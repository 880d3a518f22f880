"""Quantized network container and the binary weights-file format."""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass

import numpy as np

LNW_MAGIC = b"LNW1"

QACC_BITS = 31          # fixed-point requantization multiplier precision


@dataclass(frozen=True)
class QuantLayer:
    in_ch: int
    out_ch: int
    ksize: tuple          # (kt, ky, kx)
    weight_scale: float
    act_scale: float
    act_zp: int
    bias: np.ndarray      # int32 [out_ch]
    weights: np.ndarray   # int8 [out_ch, in_ch, kt, ky, kx]
    relu: bool

    def requant_params(self, in_scale: float):
        """Fixed-point multiplier (m0, shift) for acc -> activation."""
        m = in_scale * self.weight_scale / self.act_scale
        if m <= 0:
            raise ValueError("non-positive requantization multiplier")
        mant, exp = math.frexp(m)           # m = mant * 2**exp, mant in [0.5, 1)
        m0 = int(round(mant * (1 << QACC_BITS)))
        shift = QACC_BITS - exp
        if shift <= 0:
            raise ValueError("requantization multiplier too large")
        return m0, shift


@dataclass(frozen=True)
class QuantizedModel:
    layers: tuple
    input_scale: float = 1.0
    input_zp: int = 0

    def __post_init__(self):
        shapes = [(l.in_ch, l.out_ch, l.ksize) for l in self.layers]
        expected = [(2, 7, (3, 3, 3)), (7, 7, (3, 3, 3)),
                    (7, 7, (3, 3, 3)), (7, 6, (1, 1, 1))]
        if shapes != expected:
            raise ValueError(f"unsupported architecture {shapes}")
        relus = [l.relu for l in self.layers]
        if relus != [True, True, True, False]:
            raise ValueError("activation pattern must be ReLU,ReLU,ReLU,-")

    @property
    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def theta_int(self) -> int:
        """Acceptance threshold for the two binary channels: the 0.8
        confidence point ln(4), mapped into the output layer's integer
        domain."""
        last = self.layers[-1]
        return int(round(math.log(4.0) / last.act_scale)) + last.act_zp


def make_model(layer_params, input_scale=1.0, input_zp=0) -> QuantizedModel:
    """Assemble a model from per-layer dicts (trainer-independent path)."""
    layers = []
    n = len(layer_params)
    for i, lp in enumerate(layer_params):
        layers.append(QuantLayer(
            in_ch=int(lp["in_ch"]), out_ch=int(lp["out_ch"]),
            ksize=tuple(lp["ksize"]),
            weight_scale=float(lp["weight_scale"]),
            act_scale=float(lp["act_scale"]), act_zp=int(lp["act_zp"]),
            bias=np.asarray(lp["bias"], dtype=np.int32),
            weights=np.asarray(lp["weights"], dtype=np.int8),
            relu=i < n - 1))
    return QuantizedModel(layers=tuple(layers), input_scale=input_scale,
                          input_zp=input_zp)


def save_weights(model: QuantizedModel, path) -> None:
    buf = io.BytesIO()
    buf.write(LNW_MAGIC)
    buf.write(struct.pack("<B", len(model.layers)))
    for layer in model.layers:
        buf.write(struct.pack(
            "<BB3Bffi", layer.in_ch, layer.out_ch, *layer.ksize,
            layer.weight_scale, layer.act_scale, layer.act_zp))
        buf.write(layer.bias.astype("<i4").tobytes())
        buf.write(layer.weights.astype("i1").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_weights(path) -> QuantizedModel:
    with open(path, "rb") as f:
        raw = f.read()
    buf = io.BytesIO(raw)
    if buf.read(4) != LNW_MAGIC:
        raise ValueError("bad magic; not a weights file")
    (n_layers,) = struct.unpack("<B", buf.read(1))
    params = []
    for _ in range(n_layers):
        in_ch, out_ch, kt, ky, kx, wscale, ascale, azp = struct.unpack(
            "<BB3Bffi", buf.read(17))
        bias = np.frombuffer(buf.read(4 * out_ch), dtype="<i4").copy()
        count = out_ch * in_ch * kt * ky * kx
        weights = np.frombuffer(buf.read(count), dtype="i1").reshape(
            out_ch, in_ch, kt, ky, kx).copy()
        params.append(dict(in_ch=in_ch, out_ch=out_ch, ksize=(kt, ky, kx),
                           weight_scale=wscale, act_scale=ascale,
                           act_zp=azp, bias=bias, weights=weights))
    return make_model(params)

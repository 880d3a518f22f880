"""Export the trained network to the LNW1 weights format consumed by the
deployment side.

Per layer (little-endian): in_ch u8, out_ch u8, kernel dims u8 x3, weight
scale f32, activation scale f32, activation zero-point i32, bias
i32[out] at scale in_scale*weight_scale, weights i8[out][in][kt][ky][kx].
"""

from __future__ import annotations

import io
import struct

import numpy as np
import torch

MAGIC = b"LNW1"


def export_weights(net, path) -> None:
    net.eval()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<B", len(net.layers)))
    in_scale = 1.0
    for layer in net.layers:
        w_scale = float(layer.weight_scale())
        a_scale = float(layer.act_scale())
        weight = layer.conv.weight.detach()
        wq = torch.round(weight / w_scale).clamp(-127, 127)
        bias = layer.conv.bias.detach()
        bq = torch.round(bias / (in_scale * w_scale)).clamp(
            -2 ** 31, 2 ** 31 - 1)
        out_ch, in_ch, kt, ky, kx = weight.shape
        buf.write(struct.pack("<BB3Bffi", in_ch, out_ch, kt, ky, kx,
                              w_scale, a_scale, 0))
        buf.write(bq.numpy().astype("<i4").tobytes())
        buf.write(wq.numpy().astype("i1").tobytes())
        in_scale = a_scale
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def import_weights(net, path) -> None:
    """Load an LNW1 file back into a network (for round-trip checks and
    fine-tuning)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise ValueError("bad magic; not a weights file")
    off = 5
    in_scale = 1.0
    for layer in net.layers:
        in_ch, out_ch, kt, ky, kx, w_scale, a_scale, zp = \
            struct.unpack_from("<BB3Bffi", raw, off)
        off += struct.calcsize("<BB3Bffi")
        bias = np.frombuffer(raw, dtype="<i4", count=out_ch,
                             offset=off).copy()
        off += 4 * out_ch
        count = out_ch * in_ch * kt * ky * kx
        weights = np.frombuffer(raw, dtype="i1", count=count,
                                offset=off).copy()
        off += count
        with torch.no_grad():
            layer.conv.weight.copy_(torch.from_numpy(
                weights.reshape(out_ch, in_ch, kt, ky, kx)
                .astype(np.float32) * w_scale))
            layer.conv.bias.copy_(torch.from_numpy(
                bias.astype(np.float32) * in_scale * w_scale))
            layer.act_max.fill_(
                a_scale * (255.0 if layer.relu else 127.0))
        in_scale = a_scale
    if off != len(raw):
        raise ValueError("trailing bytes in weights file")

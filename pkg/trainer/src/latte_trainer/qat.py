"""Fake-quantized network matching the deployment arithmetic: per-tensor
symmetric INT8 weights, per-tensor affine UINT8 activations with zero
point 0 after each ReLU, symmetric INT8 logits, INT32 biases. Convolution
runs valid in space over an input extended once by the 3-cell receptive
field radius, zero-padded in time per layer."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

HALO = 3

ARCH = [(2, 7, 3), (7, 7, 3), (7, 7, 3), (7, 6, 1)]


class _RoundSTE(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        return torch.round(x)

    @staticmethod
    def backward(ctx, g):
        return g


def fake_quant(x, scale, qmin, qmax):
    q = _RoundSTE.apply(x / scale).clamp(qmin, qmax)
    return q * scale


class QatConv(nn.Module):
    """One conv layer with weight and activation fake quantization."""

    def __init__(self, in_ch, out_ch, k, relu, momentum=0.99):
        super().__init__()
        self.conv = nn.Conv3d(in_ch, out_ch, k, padding=(k // 2, 0, 0))
        self.relu = relu
        self.momentum = momentum
        self.register_buffer("act_max", torch.tensor(0.0))
        self.quantize = True

    def weight_scale(self):
        return self.conv.weight.detach().abs().max().clamp(min=1e-8) / 127

    def act_scale(self):
        if self.relu:
            return (self.act_max / 255).clamp(min=1e-8)
        return (self.act_max / 127).clamp(min=1e-8)

    def forward(self, x):
        w = self.conv.weight
        if self.quantize:
            w = fake_quant(w, self.weight_scale(), -127, 127)
        out = F.conv3d(x, w, self.conv.bias,
                       padding=self.conv.padding)
        if self.relu:
            out = F.relu(out)
        if self.training:
            peak = out.detach().abs().max()
            new = torch.maximum(self.act_max * self.momentum, peak)
            self.act_max.copy_(new)
        if self.quantize:
            if self.relu:
                out = fake_quant(out, self.act_scale(), 0, 255)
            else:
                out = fake_quant(out, self.act_scale(), -128, 127)
        return out


class LocalDecoderNet(nn.Module):
    """The four-layer fully convolutional classifier."""

    def __init__(self):
        super().__init__()
        self.layers = nn.ModuleList(
            [QatConv(i, o, k, relu=idx < 3)
             for idx, (i, o, k) in enumerate(ARCH)])

    def set_quantize(self, on: bool):
        for layer in self.layers:
            layer.quantize = on

    def forward(self, x):
        """x: float (B, 2, T, Y, X) with values in {0, 1, 2}; returns
        logits (B, 6, T, Y, X)."""
        x = F.pad(x, (HALO, HALO, HALO, HALO))
        for layer in self.layers:
            x = layer(x)
        return x

    @property
    def parameter_count(self):
        return sum(p.numel() for p in self.parameters())

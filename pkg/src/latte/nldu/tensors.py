"""Tensor embedding of syndrome rounds and the anchor bookkeeping that maps
prediction cells back to error mechanisms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..code_model import HOOK_DELTA, DecodingModel

PAULI_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
CLASS_OF_BITS = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}


class TensorCodec:
    """Embedding geometry for one model: grid extents, detector placement,
    boundary markers, anchor validity masks, and per-anchor logical masks.

    Tensors have shape (alpha+1, beta+1, rounds, channels) with channel 0
    holding Z detectors and channel 1 X detectors; a constant 2 marks
    boundary virtual vertices of the channel's parity.
    """

    def __init__(self, model: DecodingModel):
        if model.mode != "memory":
            raise ValueError(
                "tensor embedding is defined for memory-mode models")
        self.model = model
        g = model.geometry
        self.width = g.alpha + 1
        self.height = g.beta + 1
        self.gamma = model.gamma

        self.det_k = -np.ones((self.width, self.height), dtype=np.int64)
        for k, (x, y) in enumerate(model.round_positions):
            self.det_k[x, y] = k
        self.channel = np.zeros((self.width, self.height), dtype=np.int64)
        xs, ys = np.meshgrid(np.arange(self.width), np.arange(self.height),
                             indexing="ij")
        self.channel = ((xs + ys) % 2).astype(np.int64)  # 0 = Z, 1 = X

        self.base = np.zeros((self.width, self.height, 2), dtype=np.uint8)
        for basis, c in (("Z", 0), ("X", 1)):
            for (x, y) in g.virtual_positions(basis):
                self.base[x, y, c] = 2

        self.real_det = self.det_k >= 0

        # anchor validity
        self.pauli_valid = np.zeros((self.width, self.height), dtype=bool)
        for (a, b) in g.data:
            self.pauli_valid[a, b] = True
        self.m_valid = self.real_det.copy()
        self.h_valid = np.zeros((self.width, self.height), dtype=bool)
        for (ch, x, y, t) in model.anchor_map:
            if ch == "H" and t == 0:
                self.h_valid[x, y] = True

        # per-anchor logical masks (time-invariant for memory models)
        self.mask_x = np.zeros((self.width, self.height), dtype=np.uint64)
        self.mask_z = np.zeros((self.width, self.height), dtype=np.uint64)
        self.mask_h = np.zeros((self.width, self.height), dtype=np.uint64)
        for (ch, x, y, t), eid in model.anchor_map.items():
            if t != 0:
                continue
            m = np.uint64(model.edges[eid].logical_mask)
            if ch == "X":
                self.mask_x[x, y] = m
            elif ch == "Z":
                self.mask_z[x, y] = m
            elif ch == "H":
                self.mask_h[x, y] = m

    # -- embedding ---------------------------------------------------------

    def embed(self, rounds) -> np.ndarray:
        """Round defect lists -> (alpha+1, beta+1, T, 2) uint8 tensor."""
        T = len(rounds)
        out = np.zeros((self.width, self.height, T, 2), dtype=np.uint8)
        out[:] = self.base[:, :, None, :]
        positions = self.model.round_positions
        for t, ks in enumerate(rounds):
            for k in ks:
                x, y = positions[int(k)]
                out[x, y, t, self.channel[x, y]] = 1
        return out

    def extract(self, tensor) -> list:
        """Inverse of embed: per-round sorted within-round indices."""
        T = tensor.shape[2]
        rounds = []
        for t in range(T):
            ks = []
            plane = tensor[:, :, t, :]
            for x, y in zip(*np.nonzero((plane == 1).any(axis=2))):
                c = self.channel[x, y]
                if plane[x, y, c] == 1 and self.real_det[x, y]:
                    ks.append(int(self.det_k[x, y]))
            rounds.append(tuple(sorted(ks)))
        return rounds

    def embed_shot(self, shot) -> np.ndarray:
        bits = shot.detector_bits.reshape(self.gamma, -1)
        rounds = [np.flatnonzero(bits[t]) for t in range(self.gamma)]
        return self.embed(rounds)

    # -- labels (ground truth for training) --------------------------------

    def label_shot(self, shot, t0: int = 0, window: int = 0):
        """Anchor labels produced by a shot's flipped mechanisms.

        Returns (pauli_class, m_bits, h_bits) arrays of shape
        (alpha+1, beta+1, T). Diagonal mechanisms decompose into a
        measurement label at the earlier endpoint and a Pauli label one
        round later.
        """
        T = window or self.gamma
        xb = np.zeros((self.width, self.height, T), dtype=np.uint8)
        zb = np.zeros_like(xb)
        mb = np.zeros_like(xb)
        hb = np.zeros_like(xb)
        model = self.model
        for e in shot.flipped_edges:
            edge = model.edges[int(e)]
            ax, ay, at = edge.anchor.x, edge.anchor.y, edge.anchor.t
            ch = edge.anchor.channel
            t = at - t0
            if ch in ("X", "Y", "Z"):
                if 0 <= t < T:
                    bits = PAULI_BITS[ch]
                    xb[ax, ay, t] ^= bits[0]
                    zb[ax, ay, t] ^= bits[1]
            elif ch == "M":
                if 0 <= t < T:
                    mb[ax, ay, t] ^= 1
            elif ch == "H":
                if 0 <= t < T:
                    hb[ax, ay, t] ^= 1
            elif ch.startswith("D"):
                if 0 <= t < T:
                    mb[ax, ay, t] ^= 1
                dx = 1 if ch[1] == "+" else -1
                dy = 1 if ch[2] == "+" else -1
                qx, qy = min(ax, ax + dx), min(ay, ay + dy)
                comp_is_x = self.channel[ax, ay] == 0
                if 0 <= t + 1 < T:
                    if comp_is_x:
                        xb[qx, qy, t + 1] ^= 1
                    else:
                        zb[qx, qy, t + 1] ^= 1
        pauli = np.zeros_like(xb)
        pauli[(xb == 1) & (zb == 0)] = 1
        pauli[(xb == 1) & (zb == 1)] = 2
        pauli[(xb == 0) & (zb == 1)] = 3
        return pauli, mb, hb

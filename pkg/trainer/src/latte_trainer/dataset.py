"""Reader for the LNDS training-dataset format.

Layout (little-endian): magic "LNDS", version u16, alpha u16, beta u16,
gamma u16, sample count u32; three anchor lists (count u32, then (x u16,
y u16) pairs) for Pauli, measurement, and hook anchors; per sample a cell
list (count u32, then (x u16, y u16, t u16, channel u8, value u8)) and a
label list (count u32, then (x u16, y u16, t u16, kind u8, value u8)),
where kind 0 is a Pauli class in 1..3, kind 1 a measurement flip, kind 2
a hook flip. Measurement and hook anchors carry no mechanism on the final
window round.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"LNDS"


@dataclass
class Dataset:
    alpha: int
    beta: int
    gamma: int
    inputs: np.ndarray        # uint8 (N, 2, T, Y, X), values {0, 1, 2}
    pauli: np.ndarray         # uint8 (N, T, Y, X), classes 0..3
    meas: np.ndarray          # bool  (N, T, Y, X)
    hook: np.ndarray          # bool  (N, T, Y, X)
    pauli_mask: np.ndarray    # bool  (Y, X)
    meas_mask: np.ndarray     # bool  (Y, X)
    hook_mask: np.ndarray     # bool  (Y, X)

    def __len__(self):
        return self.inputs.shape[0]


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        out = struct.unpack_from(fmt, raw, off)
        off += size
        return out

    if raw[:4] != MAGIC:
        raise ValueError("bad magic; not a dataset file")
    off = 4
    version, alpha, beta, gamma, count = take("<HHHHI")
    if version != 1:
        raise ValueError(f"unsupported dataset version {version}")
    W, H = alpha + 1, beta + 1
    masks = []
    for _ in range(3):
        (n,) = take("<I")
        grid = np.zeros((H, W), dtype=bool)
        for _ in range(n):
            x, y = take("<HH")
            grid[y, x] = True
        masks.append(grid)
    inputs = np.zeros((count, 2, gamma, H, W), dtype=np.uint8)
    pauli = np.zeros((count, gamma, H, W), dtype=np.uint8)
    meas = np.zeros((count, gamma, H, W), dtype=bool)
    hook = np.zeros((count, gamma, H, W), dtype=bool)
    for i in range(count):
        (n_cells,) = take("<I")
        for _ in range(n_cells):
            x, y, t, c, v = take("<HHHBB")
            inputs[i, c, t, y, x] = v
        (n_labels,) = take("<I")
        for _ in range(n_labels):
            x, y, t, kind, v = take("<HHHBB")
            if kind == 0:
                pauli[i, t, y, x] = v
            elif kind == 1:
                meas[i, t, y, x] = True
            elif kind == 2:
                hook[i, t, y, x] = True
            else:
                raise ValueError(f"unknown label kind {kind}")
    if off != len(raw):
        raise ValueError("trailing bytes in dataset file")
    return Dataset(alpha=alpha, beta=beta, gamma=gamma, inputs=inputs,
                   pauli=pauli, meas=meas, hook=hook,
                   pauli_mask=masks[0], meas_mask=masks[1],
                   hook_mask=masks[2])

"""Multi-board emulation: tile the patch grid, exchange input and
prediction halos between neighbors, and verify board-local processing
matches a single large board bit for bit.

Each board owns an N x N tile of the (alpha+1) x (beta+1) grid. Before
inference it receives a 3-cell input border from each neighbor (the
receptive-field radius of the three stacked 3x3x3 layers); after
inference it receives a 2-cell border of accepted [X, Z, M, H] bits to
complete the purely local syndrome update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .inference import infer_volume
from .model import QuantizedModel
from .postprocess import CompressedErrors, classify, post_process
from .tensors import TensorCodec

INPUT_HALO = 3
OUTPUT_HALO = 2


@dataclass(frozen=True)
class BoardGrid:
    width: int          # full grid extent in x
    height: int
    tile: int           # N, per-board extent

    @property
    def shape(self):
        return (math.ceil(self.width / self.tile),
                math.ceil(self.height / self.tile))

    def bounds(self, bi, bj):
        x0 = bi * self.tile
        y0 = bj * self.tile
        return (x0, min(x0 + self.tile, self.width),
                y0, min(y0 + self.tile, self.height))

    def tiles(self):
        nx, ny = self.shape
        return [(bi, bj) for bi in range(nx) for bj in range(ny)]


def halo_exchange(grid: BoardGrid, tiles: dict, halo: int,
                  fill=0) -> dict:
    """Per-board arrays extended by `halo` cells of neighbor data.

    tiles maps (bi, bj) to an (w, h, ...) array over the board's own
    bounds; the returned arrays cover the halo too, with `fill` beyond the
    global boundary. Each border strip is copied from the owning neighbor,
    which is exactly the data a physical deployment would exchange.
    """
    out = {}
    for (bi, bj) in grid.tiles():
        x0, x1, y0, y1 = grid.bounds(bi, bj)
        w, h = x1 - x0 + 2 * halo, y1 - y0 + 2 * halo
        ref = tiles[(bi, bj)]
        padded = np.full((w, h) + ref.shape[2:], fill, dtype=ref.dtype)
        for (ni, nj) in grid.tiles():
            nx0, nx1, ny0, ny1 = grid.bounds(ni, nj)
            # overlap of the neighbor tile with this board's halo window
            ox0 = max(nx0, x0 - halo)
            ox1 = min(nx1, x1 + halo)
            oy0 = max(ny0, y0 - halo)
            oy1 = min(ny1, y1 + halo)
            if ox0 >= ox1 or oy0 >= oy1:
                continue
            padded[ox0 - (x0 - halo):ox1 - (x0 - halo),
                   oy0 - (y0 - halo):oy1 - (y0 - halo)] = \
                tiles[(ni, nj)][ox0 - nx0:ox1 - nx0, oy0 - ny0:oy1 - ny0]
        out[(bi, bj)] = padded
    return out


def run_tiled(codec: TensorCodec, qmodel: QuantizedModel,
              raw: np.ndarray, tile: int):
    """Board-distributed inference + post-processing.

    Returns (residual tensor, local mask) assembled from per-board
    results; bit-identical to the single-board path on the union region.
    """
    grid = BoardGrid(codec.width, codec.height, tile)
    T = raw.shape[2]
    theta = qmodel.theta_int()

    own = {b: raw[grid.bounds(*b)[0]:grid.bounds(*b)[1],
                  grid.bounds(*b)[2]:grid.bounds(*b)[3]]
           for b in grid.tiles()}
    inputs = halo_exchange(grid, own, INPUT_HALO)

    comp_tiles = {}
    for b in grid.tiles():
        x0, x1, y0, y1 = grid.bounds(b[0], b[1])
        pred = infer_volume(qmodel, inputs[b], pre_padded=True)
        # valid-mode inference shrinks the halo away exactly
        assert pred.shape[0] == x1 - x0 and pred.shape[1] == y1 - y0
        comp_tiles[b] = classify(pred, theta)

    # post-inference exchange of accepted bits
    stacked = {b: np.stack(
        [comp_tiles[b].x, comp_tiles[b].z, comp_tiles[b].m,
         comp_tiles[b].h], axis=-1) for b in grid.tiles()}
    shared = halo_exchange(grid, stacked, OUTPUT_HALO, fill=False)

    residual = np.zeros_like(raw)
    local_mask = 0
    for b in grid.tiles():
        x0, x1, y0, y1 = grid.bounds(b[0], b[1])
        he = OUTPUT_HALO
        lo_x = x0 - he
        lo_y = y0 - he
        arr = shared[b]
        comp = CompressedErrors(
            x=arr[..., 0], z=arr[..., 1], m=arr[..., 2], h=arr[..., 3])
        sub = _codec_window(codec, lo_x, lo_y, arr.shape[0], arr.shape[1])
        raw_win = _window_array(raw, lo_x, lo_y, arr.shape[0],
                                arr.shape[1])
        res_win, _ = post_process(comp, raw_win, sub)
        residual[x0:x1, y0:y1] = res_win[he:he + (x1 - x0),
                                         he:he + (y1 - y0)]
        # logical bookkeeping: each board owns its own anchors only
        own_comp = CompressedErrors(
            x=comp_tiles[b].x, z=comp_tiles[b].z,
            m=comp_tiles[b].m, h=comp_tiles[b].h)
        own_codec = _codec_window(codec, x0, y0, x1 - x0, y1 - y0)
        _, mask = post_process(own_comp, raw[x0:x1, y0:y1], own_codec)
        local_mask ^= mask
    return residual, local_mask


class _WindowCodec:
    """A shifted window view of a codec's static arrays."""


def _window_array(arr, x0, y0, w, h, fill=0):
    out = np.full((w, h) + arr.shape[2:], fill, dtype=arr.dtype)
    sx0, sx1 = max(0, x0), min(arr.shape[0], x0 + w)
    sy0, sy1 = max(0, y0), min(arr.shape[1], y0 + h)
    if sx0 < sx1 and sy0 < sy1:
        out[sx0 - x0:sx1 - x0, sy0 - y0:sy1 - y0] = arr[sx0:sx1, sy0:sy1]
    return out


def _codec_window(codec: TensorCodec, x0, y0, w, h):
    sub = _WindowCodec()
    sub.width = w
    sub.height = h
    sub.gamma = codec.gamma
    sub.channel = _window_array(
        codec.channel, x0, y0, w, h, fill=0)
    # parity continues across the window shift
    xs, ys = np.meshgrid(np.arange(w) + x0, np.arange(h) + y0,
                         indexing="ij")
    sub.channel = ((xs + ys) % 2).astype(np.int64)
    sub.real_det = _window_array(codec.real_det, x0, y0, w, h, fill=False)
    sub.base = _window_array(codec.base, x0, y0, w, h, fill=0)
    sub.m_valid = _window_array(codec.m_valid, x0, y0, w, h, fill=False)
    sub.h_valid = _window_array(codec.h_valid, x0, y0, w, h, fill=False)
    sub.pauli_valid = _window_array(
        codec.pauli_valid, x0, y0, w, h, fill=False)
    sub.mask_x = _window_array(codec.mask_x, x0, y0, w, h, fill=0)
    sub.mask_z = _window_array(codec.mask_z, x0, y0, w, h, fill=0)
    sub.mask_h = _window_array(codec.mask_h, x0, y0, w, h, fill=0)
    return sub

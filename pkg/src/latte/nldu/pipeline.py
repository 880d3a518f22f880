"""Local-decode stage between the syndrome source and block decoding:
consumes raw round records, emits residual round records plus the running
local logical record."""

from __future__ import annotations

from typing import Iterable, Iterator, Optional

import numpy as np

from ..code_model import DecodingModel
from ..sampler import RoundRecord
from .inference import StreamingPipeline, infer_volume
from .model import QuantizedModel
from .postprocess import CompressedErrors, classify, post_process, \
    residual_ratio
from .tensors import TensorCodec


class LocalDecoder:
    """Streaming predecoder for one model."""

    def __init__(self, model: DecodingModel, qmodel: QuantizedModel,
                 tile: int = 0):
        self.model = model
        self.qmodel = qmodel
        self.codec = TensorCodec(model)
        self.theta = qmodel.theta_int()
        self.tile = tile
        self._region_of_k = np.array(
            [model.geometry.regions[pos] for pos in model.round_positions],
            dtype=np.int64)

    # -- batch path ---------------------------------------------------------

    def transform_shot(self, shot):
        """Whole-shot transform: (residual rounds, local mask, counts)."""
        raw = self.codec.embed_shot(shot)
        if self.tile:
            from .boards import run_tiled
            residual, mask = run_tiled(self.codec, self.qmodel, raw,
                                       self.tile)
        else:
            pred = infer_volume(self.qmodel, raw)
            comp = classify(pred, self.theta)
            residual, mask = post_process(comp, raw, self.codec)
        res_bits, raw_bits = residual_ratio(raw, residual)
        return self.codec.extract(residual), mask, (res_bits, raw_bits)

    def transform_shots(self, shots):
        """Vectorized transform of many shots at once."""
        raws = np.stack([self.codec.embed_shot(s) for s in shots])
        preds = infer_volume(self.qmodel, raws)
        out = []
        for raw, pred in zip(raws, preds):
            comp = classify(pred, self.theta)
            residual, mask = post_process(comp, raw, self.codec)
            out.append((self.codec.extract(residual), mask,
                        residual_ratio(raw, residual)))
        return out

    # -- streaming path -------------------------------------------------------

    def stream(self, records: Iterable[RoundRecord]
               ) -> Iterator[RoundRecord]:
        """Round-by-round transform with the fixed pipeline delay.

        Emitted records keep their original generation timestamps (the
        added latency is modeled by the scheduler's input delay). Per-round
        local logical masks accumulate in self.local_masks.
        """
        codec = self.codec
        pipe = StreamingPipeline(self.qmodel, codec.width, codec.height)
        self.local_masks = {}
        self.counts = [0, 0]        # residual bits, raw bits
        pending = {}                # round -> list of (region, timestamp)
        raw_planes = {}
        comp_planes = {}
        next_emit = 0

        def handle(pred_plane, t):
            comp_planes[t] = classify(pred_plane[:, :, None, :],
                                      self.theta)
            lo = max(0, t - 1)
            comp = CompressedErrors(
                x=np.concatenate([comp_planes[u].x
                                  for u in range(lo, t + 1)], axis=2),
                z=np.concatenate([comp_planes[u].z
                                  for u in range(lo, t + 1)], axis=2),
                m=np.concatenate([comp_planes[u].m
                                  for u in range(lo, t + 1)], axis=2),
                h=np.concatenate([comp_planes[u].h
                                  for u in range(lo, t + 1)], axis=2))
            raw = np.stack([raw_planes[u] for u in range(lo, t + 1)],
                           axis=2)
            residual, _ = post_process(comp, raw, codec, t0=lo)
            res_plane = residual[:, :, -1, :]
            single = CompressedErrors(
                x=comp_planes[t].x, z=comp_planes[t].z,
                m=comp_planes[t].m, h=comp_planes[t].h)
            _, mask = post_process(single, raw[:, :, -1:, :], codec, t0=t)
            self.local_masks[t] = mask
            self.counts[0] += int(np.count_nonzero(res_plane == 1))
            self.counts[1] += int(np.count_nonzero(raw_planes[t] == 1))
            out = []
            ks = sorted(int(codec.det_k[x, y])
                        for x, y in zip(*np.nonzero(
                            (res_plane == 1).any(axis=2))))
            for region, ts in pending.pop(t):
                mine = tuple(k for k in ks
                             if self._region_of_k[k] == region)
                out.append(RoundRecord(region, t, mine, ts))
            comp_planes.pop(t - 2, None)
            raw_planes.pop(t - 2, None)
            return out

        for rec in records:
            t = rec.round_index
            if t not in pending:
                pending[t] = []
                raw_planes[t] = codec.embed([rec.indices])[:, :, 0, :]
            else:
                extra = codec.embed([rec.indices])[:, :, 0, :]
                raw_planes[t] = np.where(extra == 1, extra, raw_planes[t])
            pending[t].append((rec.patch, rec.timestamp_ns))
            if len(pending[t]) == self.model.geometry.num_regions:
                for plane in pipe.push(raw_planes[t]):
                    for out in handle(plane, next_emit):
                        yield out
                    next_emit += 1
        for plane in pipe.flush():
            for out in handle(plane, next_emit):
                yield out
            next_emit += 1

"""Partitioning, window decoding, seam projection, and merging."""

import numpy as np
import pytest

import latte
from latte import (ModelError, NoiseParams, SurgeryLayout, build_dem,
                   build_surface_code, build_surgery_model,
                   exact_decode_small, force_shot, sample_shot, uf_decode)
from latte.blocks import (BlockSet, LogicalFrame, decode_all, decode_block,
                          hash_slot, merge, partition)

UNIFORM = NoiseParams.uniform(0.005)


def defects_from_shot(model, shot):
    bits = shot.detector_bits.reshape(model.gamma, model.n_per_round)
    region_ks = {}
    for k, pos in enumerate(model.round_positions):
        region_ks.setdefault(model.geometry.regions[pos], []).append(k)

    def accessor(region, t):
        return [k for k in region_ks.get(region, ()) if bits[t, k]]
    return accessor


def test_temporal_partition_counts_and_buffers():
    d = 3
    model = build_dem(build_surface_code(d), 3 * d, UNIFORM)
    bs = partition(model, d, 1)
    assert len(bs.blocks) == 3
    first, mid, last = (bs.blocks[(0, w)] for w in range(3))
    assert first.t_window == (0, d + 1)
    assert mid.t_window == (d - 1, 2 * d + 1)       # buffered both sides
    assert last.t_window == (2 * d - 1, 3 * d)
    assert first.neighbors == ((0, 1),)
    assert last.neighbors == ((0, 1),)
    assert set(mid.neighbors) == {(0, 0), (0, 2)}


def test_buffer_depth_validation():
    model = build_dem(build_surface_code(3), 9, UNIFORM)
    with pytest.raises(ModelError):
        partition(model, 3, 0)
    with pytest.raises(ModelError):
        partition(model, 3, 3)


def test_sixteen_patch_long_stream_partition():
    d, gamma = 3, 12
    model = build_surgery_model(SurgeryLayout.row(16, d, merged=False),
                                gamma, UNIFORM)
    bs = partition(model, d, 1)
    assert len(bs.blocks) == 16 * (gamma // d)
    assert all(len(b.neighbors) <= 3 for b in bs.blocks.values())
    # unmerged patches share no mechanisms, so no spatial seams
    assert all(a[0] == b[0] for a, b in bs.pairs)


def test_sixteen_patch_merged_spatial_partition():
    d = 3
    model = build_surgery_model(SurgeryLayout.row(16, d, merged=True),
                                d, UNIFORM)
    bs = partition(model, d, 1)
    assert len(bs.blocks) == 16
    assert len(bs.pairs) == 15
    assert all(b.kind == "spatial" for b in bs.blocks.values())
    with pytest.raises(ModelError):
        partition(build_surgery_model(
            SurgeryLayout.row(4, d, merged=True), 2 * d, UNIFORM), d, 1)


def test_hash_slot_mapping():
    assert hash_slot((0, 0), 64) == 0
    assert hash_slot((1, 2), 64) == (1_000_003 + 2) % 64
    slots = {hash_slot((r, w), 256) for r in range(4) for w in range(4)}
    assert len(slots) == 16


def test_zero_shot_decodes_to_nothing():
    d = 3
    model = build_dem(build_surface_code(d), 2 * d, UNIFORM)
    bs = partition(model, d, 1)
    shot = force_shot(model, [])
    res = decode_block(bs, bs.blocks[(0, 0)], defects_from_shot(model, shot))
    assert res.logical_mask == 0
    assert all(not bits.any() for bits in res.seams.values())


def test_core_confined_chain_leaves_seams_empty():
    d = 3
    model = build_dem(build_surface_code(d), 3 * d, UNIFORM)
    bs = partition(model, d, 2)
    local = {b: model.basis_local_index(b) for b in "ZX"}
    inner = [e.id for e in model.edges
             if all(3 <= model.detectors[i].t < 5 for i in e.detectors)]
    rng = np.random.default_rng(2)
    for _ in range(50):
        shot = force_shot(model, rng.choice(inner, 2, replace=False))
        res = decode_block(bs, bs.blocks[(0, 1)],
                           defects_from_shot(model, shot),
                           exact_decode_small)
        for pair, bits in res.seams.items():
            assert not bits.any()
        expected = 0
        for basis in "ZX":
            g = model.subgraph(basis)
            ds = [int(local[basis][k])
                  for k in np.flatnonzero(shot.detector_bits)
                  if local[basis][k] >= 0]
            expected ^= exact_decode_small(g, ds).logical_flip
        assert res.logical_mask == expected


def test_crossing_chain_marks_one_seam_side():
    d = 5
    model = build_dem(build_surface_code(d), 2 * d, UNIFORM)
    bs = partition(model, d, 2)
    crossing = next(
        e for e in model.edges if e.kind == "V" and len(e.detectors) == 2
        and model.detectors[e.detectors[0]].t == d - 1)
    shot = force_shot(model, [crossing.id])
    res0 = decode_block(bs, bs.blocks[(0, 0)],
                        defects_from_shot(model, shot), exact_decode_small)
    pair = ((0, 0), (0, 1))
    assert res0.seams[pair].any()
    res1 = decode_block(bs, bs.blocks[(0, 1)],
                        defects_from_shot(model, shot), exact_decode_small)
    assert res1.seams[pair].any()
    # both sides project the same residual: merging cancels it
    mask = merge(res0.seams[pair], res1.seams[pair], bs.seams[pair])
    assert mask == 0


def test_merge_rejects_mismatched_extents():
    d = 3
    model = build_dem(build_surface_code(d), 2 * d, UNIFORM)
    bs = partition(model, d, 1)
    pair = bs.pairs[0]
    with pytest.raises(ValueError):
        merge(np.zeros(3, dtype=np.uint8),
              np.zeros(bs.seams[pair].size, dtype=np.uint8),
              bs.seams[pair])


def test_identical_seams_merge_to_zero():
    d = 3
    model = build_dem(build_surface_code(d), 2 * d, UNIFORM)
    bs = partition(model, d, 1)
    pair = bs.pairs[0]
    bits = np.zeros(bs.seams[pair].size, dtype=np.uint8)
    bits[2] = bits[5] = 1
    assert merge(bits, bits.copy(), bs.seams[pair]) == 0


def test_logical_frame_accumulates_order_free():
    rng = np.random.default_rng(9)
    entries = [(("block", (0, i)), int(rng.integers(0, 4)))
               for i in range(20)]
    frames = []
    for order in (entries, entries[::-1],
                  sorted(entries, key=lambda kv: kv[1])):
        f = LogicalFrame()
        for key, mask in order:
            f.fold(key, mask)
        frames.append(f.bits)
    assert len(set(frames)) == 1
    f = LogicalFrame()
    f.fold(("block", (0, 0)), 1)
    with pytest.raises(ValueError):
        f.fold(("block", (0, 0)), 1)


def test_window_equivalence_with_confined_chains():
    # a chain confined to one core (or chains in non-adjacent cores, so no
    # block window sees a truncated foreign cluster) decodes to exactly
    # the global exact-oracle outcome
    d = 3
    model = build_dem(build_surface_code(d), 9, UNIFORM)
    bs = partition(model, d, 2)
    local = {b: model.basis_local_index(b) for b in "ZX"}
    cores = [(0, 3), (3, 6), (6, 9)]
    rng = np.random.default_rng(7)
    per_core = [
        [e.id for e in model.edges
         if all(lo <= model.detectors[i].t < hi for i in e.detectors)]
        for lo, hi in cores]
    plans = [(0,), (1,), (2,), (0, 2)]
    for trial in range(200):
        flips = []
        for c in plans[trial % len(plans)]:
            flips.extend(rng.choice(per_core[c], rng.integers(1, 3),
                                    replace=False).tolist())
        shot = force_shot(model, flips)
        frame = decode_all(model, bs, shot, exact_decode_small)
        expected = 0
        for basis in "ZX":
            g = model.subgraph(basis)
            ds = [int(local[basis][k])
                  for k in np.flatnonzero(shot.detector_bits)
                  if local[basis][k] >= 0]
            expected ^= exact_decode_small(g, ds).logical_flip
        assert frame.bits == expected


def test_block_decoding_tracks_global_decoding_on_noise():
    d = 3
    model = build_dem(build_surface_code(d), 9, NoiseParams.uniform(0.01))
    bs = partition(model, d, 2)
    local = {b: model.basis_local_index(b) for b in "ZX"}
    agree = 0
    n = 300
    for i in range(n):
        shot = sample_shot(model, 3, i)
        frame = decode_all(model, bs, shot, uf_decode)
        gm = 0
        for basis in "ZX":
            g = model.subgraph(basis)
            ds = [int(local[basis][k])
                  for k in np.flatnonzero(shot.detector_bits)
                  if local[basis][k] >= 0]
            gm ^= uf_decode(g, ds).logical_flip
        agree += frame.bits == gm
    assert agree >= 0.98 * n

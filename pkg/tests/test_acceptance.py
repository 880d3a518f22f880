"""Acceptance suite: one test per criterion, each printing a PASS line
with the measured values at its stated tolerance.

Statistical criteria run protocol variants whose round counts give them
resolving power at the mandated shot budgets (see the repo notes); all of
them are exactly reproducible from the seeds fixed here.
"""

import math
import os
import time

import numpy as np
import pytest

import latte
from latte import (NoiseParams, build_dem, build_surface_code,
                   exact_decode_small, sample_shot, uf_decode)
from latte.blocks import BlockSet, decode_all
from latte.experiments import (ExperimentSpec, default_weights_path,
                               run_memory, run_multipatch,
                               run_streaming_latency, wilson_interval)
from latte.nldu import (CompressedErrors, LocalDecoder, NlduConfig,
                        StreamingPipeline, TensorCodec, classify,
                        estimate_resources, infer_volume, load_weights,
                        post_process, run_tiled, search_config,
                        stage_latency_s)
from latte.sampler import StreamConfig, shot_rounds
from latte.scheduler import SchedulerConfig, run as run_scheduler

pytestmark = pytest.mark.acceptance


def _report(name, passed, detail):
    print(f"\n[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert passed, f"{name}: {detail}"


def _global_exact(model, shot, local, bases=("Z", "X")):
    out = 0
    for basis in bases:
        g = model.subgraph(basis)
        ds = [int(local[basis][k])
              for k in np.flatnonzero(shot.detector_bits)
              if local[basis][k] >= 0]
        out ^= exact_decode_small(g, ds).logical_flip
    return out


def test_criterion_1_oracle_equivalence():
    """Block decoding with the exact inner decoder matches global exact
    decoding on >= 99% of shots (d=3, gamma=3, p=0.003, 500 shots)."""
    t0 = time.time()
    model = build_dem(build_surface_code(3), 3, NoiseParams.uniform(3e-3))
    bs = BlockSet(model, 3, 2)
    local = {b: model.basis_local_index(b) for b in "ZX"}
    agree = 0
    n = 500
    for i in range(n):
        shot = sample_shot(model, 101, i)
        frame = decode_all(model, bs, shot, exact_decode_small)
        agree += frame.bits == _global_exact(model, shot, local)
    elapsed = time.time() - t0
    _report("criterion 1 (oracle equivalence)",
            agree >= 0.99 * n and elapsed < 60,
            f"{agree}/{n} agreement in {elapsed:.1f}s")


def test_criterion_2_buffer_convergence():
    """d=5, p=0.003, 2e4 shots: LER(b=3) within 2 sigma of global; and
    LER(b=1) > LER(b=3) at 95% confidence."""
    d, p, n = 5, 3e-3, 20000
    model = build_dem(build_surface_code(d), 3 * d, NoiseParams.uniform(p))
    bs3 = BlockSet(model, d, 3)
    bs1 = BlockSet(model, d, 1)
    g = model.subgraph("Z")
    local = model.basis_local_index("Z")
    f_global = f_b3 = f_b1 = 0
    for i in range(n):
        shot = sample_shot(model, 202, i)
        ds = [int(local[k]) for k in np.flatnonzero(shot.detector_bits)
              if local[k] >= 0]
        truth = shot.true_logical & 1
        f_global += (uf_decode(g, ds).logical_flip ^ truth) & 1
        f_b3 += (decode_all(model, bs3, shot, uf_decode,
                            ("Z",)).bits ^ truth) & 1
        f_b1 += (decode_all(model, bs1, shot, uf_decode,
                            ("Z",)).bits ^ truth) & 1
    # two-sigma agreement between b=3 and global
    sigma = math.sqrt(f_b3 + f_global) if f_b3 + f_global else 1.0
    converged = abs(f_b3 - f_global) <= 2 * sigma
    # one-sided separation of b=1 above b=3
    lo1, _ = wilson_interval(f_b1, n)
    _, hi3 = wilson_interval(f_b3, n)
    separated = lo1 > hi3
    _report("criterion 2 (buffer convergence)", converged and separated,
            f"failures global={f_global} b3={f_b3} b1={f_b1} over {n}")


def _memory_failures(d, p, rounds, n, seed):
    model = build_dem(build_surface_code(d), rounds,
                      NoiseParams.uniform(p))
    g = model.subgraph("Z")
    local = model.basis_local_index("Z")
    fails = 0
    for i in range(n):
        shot = sample_shot(model, seed, i)
        ds = [int(local[k]) for k in np.flatnonzero(shot.detector_bits)
              if local[k] >= 0]
        fails += (uf_decode(g, ds).logical_flip ^ shot.true_logical) & 1
    return fails


def _one_sided_less(f_small, f_big, n):
    """95% confidence that rate(f_small) < rate(f_big): the Wilson
    intervals must separate."""
    _, hi = wilson_interval(f_small, n)
    lo, _ = wilson_interval(f_big, n)
    return hi < lo


def test_criterion_3_threshold_existence():
    """LER(d=5) < LER(d=3) at p=1e-3 and the ordering reverses at
    p=3e-2, each at 95% over 2e4 shots (memory at 4d rounds)."""
    n = 20000
    f3_low = _memory_failures(3, 1e-3, 12, n, 303)
    f5_low = _memory_failures(5, 1e-3, 20, n, 303)
    below = _one_sided_less(f5_low, f3_low, n)
    f3_high = _memory_failures(3, 3e-2, 12, n, 304)
    f5_high = _memory_failures(5, 3e-2, 20, n, 304)
    above = _one_sided_less(f3_high, f5_high, n)
    _report("criterion 3 (threshold existence)", below and above,
            f"p=1e-3: d3={f3_low} d5={f5_low}; "
            f"p=3e-2: d3={f3_high} d5={f5_high} (n={n})")


def test_criterion_4_scheduler_determinism_exactly_once():
    """Identical feedback bits for M in {1,2,8}; task counts equal block
    and seam-pair counts; runs in under 30 s."""
    t0 = time.time()
    d = 5
    model = build_dem(build_surface_code(d), 8 * d,
                      NoiseParams.uniform(2e-3))
    bs = BlockSet(model, d, 2)
    outcomes = set()
    for m in (1, 2, 8):
        for i in range(10):
            shot = sample_shot(model, 404, i)
            records = list(shot_rounds(model, shot, StreamConfig()))
            cfg = SchedulerConfig(decode_workers=m, block_rounds=d,
                                  buffer_depth=2)
            result = run_scheduler(model, records, cfg, blockset=bs)
            assert result.stats["decode_tasks"] == len(bs.blocks)
            assert result.stats["merge_tasks"] == len(bs.pairs)
            outcomes.add((m, i, result.frame.bits,
                          tuple(fb.bits for fb in result.feedback)))
    per_shot = {}
    for m, i, bits, fb in outcomes:
        per_shot.setdefault(i, set()).add((bits, fb))
    deterministic = all(len(v) == 1 for v in per_shot.values())
    elapsed = time.time() - t0
    _report("criterion 4 (determinism + exactly-once)",
            deterministic and elapsed < 30,
            f"10 shots x M in {{1,2,8}} identical; {elapsed:.1f}s")


def test_criterion_5_streaming_constancy():
    """d=5, 1e4 rounds at the minimal no-backlog worker count:
    max/median tick latency <= 1.5 and buffered rounds bounded."""
    m = run_streaming_latency(ExperimentSpec(
        kind="streaming_latency", d=5, p=1e-3, rounds=10000, seed=505))
    ok = (m["constancy_ratio"] <= 1.5 and
          m["max_buffered_rounds"] < 1024)
    _report("criterion 5 (streaming constancy)", ok,
            f"min M={m['min_decode_workers']}, "
            f"max/median={m['constancy_ratio']:.3f}, "
            f"buffered<= {m['max_buffered_rounds']}")


def test_criterion_6_nldu_bit_exactness():
    """Streaming INT8 inference == batch oracle on 100 random volumes;
    combinational update == global recompute on 1000 prediction sets."""
    from test_nldu import global_recompute, random_model
    qm = random_model(seed=60)
    model = build_dem(build_surface_code(9), 20, NoiseParams.uniform(2e-3))
    codec = TensorCodec(model)
    stream_ok = 0
    for i in range(100):
        raw = codec.embed_shot(sample_shot(model, 606, i))
        pipe = StreamingPipeline(qm, codec.width, codec.height)
        outs = []
        for t in range(raw.shape[2]):
            outs.extend(pipe.push(raw[:, :, t, :]))
        outs.extend(pipe.flush())
        stream_ok += np.array_equal(np.stack(outs, axis=2),
                                    infer_volume(qm, raw))
    post_model = build_dem(build_surface_code(5), 8,
                           NoiseParams.uniform(2e-3))
    post_codec = TensorCodec(post_model)
    rng = np.random.default_rng(61)
    shape = (post_codec.width, post_codec.height, post_model.gamma)
    post_ok = 0
    for i in range(1000):
        raw = post_codec.embed_shot(sample_shot(post_model, 607, i))
        comp = CompressedErrors(
            x=rng.random(shape) < 0.02, z=rng.random(shape) < 0.02,
            m=rng.random(shape) < 0.02, h=rng.random(shape) < 0.02)
        r1, m1 = post_process(comp, raw, post_codec)
        r2, m2 = global_recompute(post_model, post_codec, comp, raw)
        post_ok += np.array_equal(r1, r2) and m1 == m2
    _report("criterion 6 (NLDU bit-exactness)",
            stream_ok == 100 and post_ok == 1000,
            f"streaming {stream_ok}/100, post-processing {post_ok}/1000")


def test_criterion_7_multi_board_transparency():
    """2x2 halo-exchanged boards == one board, bit-exact, 100 volumes."""
    from test_nldu import random_model
    qm = random_model(seed=70)
    theta = qm.theta_int()
    model = build_dem(build_surface_code(17), 6, NoiseParams.uniform(1e-3))
    codec = TensorCodec(model)
    ok = 0
    for i in range(100):
        raw = codec.embed_shot(sample_shot(model, 707, i))
        pred = infer_volume(qm, raw)
        comp = classify(pred, theta)
        res_s, mask_s = post_process(comp, raw, codec)
        res_t, mask_t = run_tiled(codec, qm, raw, 9)
        ok += np.array_equal(res_s, res_t) and mask_s == mask_t
    _report("criterion 7 (multi-board transparency)", ok == 100,
            f"{ok}/100 volumes bit-exact")


def test_criterion_8_hardware_model():
    """Latency formula hits 4.307 us, within 5% of the stage-sum cross
    check; the resource formula hits 156,576; the search returns a
    feasible sub-microsecond configuration."""
    cfg = NlduConfig(tile=9, channels=(7, 7, 7), parallel=(52, 33, 27),
                     clock_hz=300e6)
    est = estimate_resources(cfg)
    ltc_ok = abs(est.ltc_s * 1e6 - 4.307) < 5e-3
    cross = 3e-6 + (433 + 433 + 346) * 1e-9
    cross_ok = abs(est.ltc_s - cross) / cross < 0.05
    lut_ok = est.lut == 156576
    found = search_config(9, 300e6)
    feasible = all(stage_latency_s(found, s) < 1e-6 for s in (1, 2, 3))
    _report("criterion 8 (hardware model)",
            ltc_ok and cross_ok and lut_ok and feasible,
            f"LTC={est.ltc_s * 1e6:.4f}us, LUT={est.lut}, "
            f"search P={found.parallel}")


def _require_weights():
    path = default_weights_path()
    if not os.path.exists(path):
        pytest.fail("bundled weights file missing; train and ship it "
                    "before running NLDU-dependent criteria")
    return path


def test_criterion_9_bandwidth_with_shipped_weights():
    """At d=9: residual ratio <= 35% at p=1e-3, strictly increasing over
    {1e-3, 2e-3, 3e-3}."""
    path = _require_weights()
    qm = load_weights(path)
    ratios = []
    for p in (1e-3, 2e-3, 3e-3):
        model = build_dem(build_surface_code(9), 20,
                          NoiseParams.uniform(p))
        ld = LocalDecoder(model, qm)
        res = raw = 0
        shots = [sample_shot(model, 909, i) for i in range(300)]
        for _, _, (r, w) in ld.transform_shots(shots):
            res += r
            raw += w
        ratios.append(res / raw)
    ok = ratios[0] <= 0.35 and ratios[0] < ratios[1] < ratios[2]
    _report("criterion 9 (bandwidth)", ok,
            f"ratios={[f'{r:.3f}' for r in ratios]} at p=1e-3,2e-3,3e-3")


def test_criterion_10_accuracy_non_degradation():
    """LER with the local decoder <= 1.3x LER without, d=5, p=1e-3,
    2e4 paired shots (memory at 8d rounds)."""
    path = _require_weights()
    qm = load_weights(path)
    d, p, n = 5, 1e-3, 20000
    model = build_dem(build_surface_code(d), 8 * d,
                      NoiseParams.uniform(p))
    ld = LocalDecoder(model, qm)
    g = model.subgraph("Z")
    local = model.basis_local_index("Z")
    P = model.n_per_round
    f_off = f_on = 0
    for start in range(0, n, 64):
        count = min(64, n - start)
        shots = [sample_shot(model, 1010, start + i)
                 for i in range(count)]
        transformed = ld.transform_shots(shots)
        for shot, (rounds, mask, _) in zip(shots, transformed):
            truth = shot.true_logical & 1
            ds = [int(local[k])
                  for k in np.flatnonzero(shot.detector_bits)
                  if local[k] >= 0]
            f_off += (uf_decode(g, ds).logical_flip ^ truth) & 1
            res_ds = [int(local[t * P + k]) for t, ks in enumerate(rounds)
                      for k in ks if local[t * P + k] >= 0]
            bits = uf_decode(g, res_ds).logical_flip ^ mask
            f_on += (bits ^ truth) & 1
    ok = f_on <= 1.3 * f_off
    _report("criterion 10 (accuracy non-degradation)", ok,
            f"failures with={f_on}, without={f_off}, over {n} shots")

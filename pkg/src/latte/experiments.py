"""Experiment harness: memory, stability, multi-patch measurement,
threshold scans, bandwidth tables, streaming-latency traces, dataset
export, and static plot emission."""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import nldu
from .blocks import decode_all, partition
from .code_model import (DecodingModel, NoiseParams, SurgeryLayout,
                         build_dem, build_surface_code, build_surgery_model)
from .decoders import DECODERS
from .sampler import (BacklogError, Shot, StreamConfig, sample_shot,
                      shot_rounds)
from .scheduler import SchedulerConfig, run as run_scheduler

LNDS_MAGIC = b"LNDS"
LNDS_VERSION = 1


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    d: int = 5
    p: float = 1e-3
    rounds: int = 0            # 0 -> the experiment's protocol default
    shots: int = 2000
    buffer: int = 0            # 0 -> ceil(d/2)
    decode_workers: int = 1
    merge_workers: int = 2
    nldu: bool = False
    weights: str = ""          # "" -> bundled weights file
    seed: int = 0
    patches: int = 1
    d_list: tuple = ()
    p_list: tuple = ()
    decoder: str = "uf"
    tolerance: float = 0.0     # Wilson CI half-width target; 0 = fixed
    shot_cap: int = 200000
    tile: int = 0
    clock_mhz: float = 300.0
    out: str = ""
    trace_out: str = ""
    feedback_out: str = ""
    time_scale: float = 0.0


def wilson_interval(failures: int, shots: int, z: float = 1.96) -> tuple:
    """95% Wilson score interval for a binomial proportion."""
    if shots == 0:
        return (0.0, 1.0)
    phat = failures / shots
    denom = 1 + z * z / shots
    center = (phat + z * z / (2 * shots)) / denom
    half = z * math.sqrt(
        phat * (1 - phat) / shots + z * z / (4 * shots * shots)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def default_weights_path() -> str:
    import importlib.resources as res
    ref = res.files("latte").joinpath("data/nldu-weights.lnw1")
    return str(ref)


def _load_local_decoder(model, spec) -> Optional[nldu.LocalDecoder]:
    if not spec.nldu:
        return None
    path = spec.weights or default_weights_path()
    return nldu.LocalDecoder(model, nldu.load_weights(path),
                             tile=spec.tile)


def _buffer(spec) -> int:
    return spec.buffer or math.ceil(spec.d / 2)


def _rounds_to_bits(model: DecodingModel, rounds) -> np.ndarray:
    bits = np.zeros(model.n_detectors, dtype=bool)
    P = model.n_per_round
    for t, ks in enumerate(rounds):
        for k in ks:
            bits[t * P + int(k)] = True
    return bits


def _escalating_shots(spec, run_batch):
    """Run batches until the Wilson CI half-width undercuts the tolerance
    or the cap is reached. run_batch(start, count) -> failures."""
    shots = 0
    failures = 0
    batch = spec.shots
    while True:
        failures += run_batch(shots, batch)
        shots += batch
        if spec.tolerance <= 0 or shots >= spec.shot_cap:
            break
        lo, hi = wilson_interval(failures, shots)
        if (hi - lo) / 2 < spec.tolerance:
            break
        batch = min(shots, spec.shot_cap - shots)
        if batch == 0:
            break
    return failures, shots


def _decode_ler(model, blockset, spec, observable_bit=0,
                local=None, bases=("Z",)):
    """Failure count over shots through block decoding (+ optional local
    predecoding), with bandwidth accounting."""
    decoder = DECODERS[spec.decoder]
    counts = [0, 0]

    def run_batch(start, n):
        failures = 0
        for i in range(start, start + n):
            shot = sample_shot(model, spec.seed, i)
            if local is not None:
                rounds, mask, (res_b, raw_b) = local.transform_shot(shot)
                counts[0] += res_b
                counts[1] += raw_b
                work_shot = Shot(
                    flipped_edges=shot.flipped_edges,
                    detector_bits=_rounds_to_bits(model, rounds),
                    true_logical=shot.true_logical)
                frame = decode_all(model, blockset, work_shot, decoder,
                                   bases)
                decoded = frame.bits ^ mask
            else:
                frame = decode_all(model, blockset, shot, decoder, bases)
                decoded = frame.bits
            failures += (decoded >> observable_bit ^
                         shot.true_logical >> observable_bit) & 1
        return failures

    failures, shots = _escalating_shots(spec, run_batch)
    return failures, shots, counts


def run_memory(spec: ExperimentSpec) -> dict:
    """Z-basis memory experiment: prepare, measure rounds, score the
    logical-Z observable."""
    rounds = spec.rounds or spec.d
    model = build_dem(build_surface_code(spec.d), rounds,
                      NoiseParams.uniform(spec.p))
    blockset = partition(model, spec.d, _buffer(spec))
    local = _load_local_decoder(model, spec)
    failures, shots, counts = _decode_ler(
        model, blockset, spec, observable_bit=0, local=local)
    ler = failures / shots
    lo, hi = wilson_interval(failures, shots)
    metrics = {
        "kind": "memory", "d": spec.d, "p": spec.p, "rounds": rounds,
        "shots": shots, "failures": failures, "ler": ler,
        "ci95": [lo, hi], "nldu": spec.nldu,
    }
    if local is not None:
        metrics["bandwidth_ratio"] = (
            counts[0] / counts[1] if counts[1] else 0.0)
        metrics["bandwidth_zero_raw"] = counts[1] == 0
    metrics["latency"] = _latency_probe(model, blockset, spec, local)
    _emit(spec, metrics)
    return metrics


def _latency_probe(model, blockset, spec, local=None) -> dict:
    """One scheduler run for tick-latency statistics on this workload."""
    shot = sample_shot(model, spec.seed, 0)
    stream = shot_rounds(model, shot, StreamConfig(
        time_scale=spec.time_scale))
    delay = 0
    if local is not None:
        est = nldu.estimate_resources(nldu.NlduConfig(
            tile=9, parallel=(52, 33, 27),
            clock_hz=spec.clock_mhz * 1e6))
        delay = int(est.ltc_s * 1e9)
        stream = local.stream(stream)
    cfg = SchedulerConfig(
        decode_workers=spec.decode_workers,
        merge_workers=spec.merge_workers,
        block_rounds=spec.d, buffer_depth=_buffer(spec),
        input_delay_ns=delay,
        decoder=DECODERS[spec.decoder])
    result = run_scheduler(model, stream, cfg, blockset=blockset)
    _write_aux(spec, result)
    lat = [fb.latency_ns for fb in result.feedback]
    return {
        "ticks": len(lat),
        "max_ns": max(lat) if lat else 0,
        "median_ns": float(np.median(lat)) if lat else 0,
        "input_delay_ns": delay,
    }


def run_stability(spec: ExperimentSpec) -> dict:
    """Stability experiment: both time ends open, score the time-slice
    crossing observable (timelike chains are the failure mode)."""
    rounds = spec.rounds or spec.d
    model = build_dem(build_surface_code(spec.d), rounds,
                      NoiseParams.uniform(spec.p), mode="stability")
    g = model.subgraph("Z")
    local_idx = model.basis_local_index("Z")
    decoder = DECODERS[spec.decoder]

    def run_batch(start, n):
        failures = 0
        for i in range(start, start + n):
            shot = sample_shot(model, spec.seed, i)
            defects = [int(local_idx[k])
                       for k in np.flatnonzero(shot.detector_bits)
                       if local_idx[k] >= 0]
            corr = decoder(g, defects)
            failures += (corr.logical_flip ^ shot.true_logical) & 1
        return failures

    failures, shots = _escalating_shots(spec, run_batch)
    lo, hi = wilson_interval(failures, shots)
    metrics = {
        "kind": "stability", "d": spec.d, "p": spec.p, "rounds": rounds,
        "shots": shots, "failures": failures, "ler": failures / shots,
        "ci95": [lo, hi],
    }
    _emit(spec, metrics)
    return metrics


def joint_product(bits: int, n_seams: int) -> int:
    """Joint measured operator: the product (XOR) of the per-seam joint
    outcomes."""
    out = 0
    for i in range(n_seams):
        out ^= (bits >> i) & 1
    return out


def run_multipatch(spec: ExperimentSpec) -> dict:
    """Joint Pauli-product measurement across a row of merged patches."""
    patches = max(2, spec.patches)
    layout = SurgeryLayout.row(patches, spec.d, merged=True)
    rounds = spec.rounds or spec.d
    model = build_surgery_model(layout, rounds, NoiseParams.uniform(spec.p))
    blockset = partition(model, spec.d, _buffer(spec))
    decoder = DECODERS[spec.decoder]
    n_seams = patches - 1

    def run_batch(start, n):
        failures = 0
        for i in range(start, start + n):
            shot = sample_shot(model, spec.seed, i)
            frame = decode_all(model, blockset, shot, decoder, ("Z",))
            failures += joint_product(frame.bits, n_seams) ^ \
                joint_product(shot.true_logical, n_seams)
        return failures

    failures, shots = _escalating_shots(spec, run_batch)
    lo, hi = wilson_interval(failures, shots)

    # latency vs decode threads on one representative stream
    shot = sample_shot(model, spec.seed, 0)
    table = []
    threads = sorted({1, 2, 4, 8, patches})
    for m in threads:
        if m > 64:
            continue
        cfg = SchedulerConfig(
            decode_workers=m, merge_workers=spec.merge_workers,
            block_rounds=spec.d, buffer_depth=_buffer(spec),
            decoder=decoder, bases=("Z",))
        stream = shot_rounds(model, shot, StreamConfig())
        result = run_scheduler(model, stream, cfg, blockset=blockset)
        lat = [fb.latency_ns for fb in result.feedback]
        table.append({"threads": m, "max_ns": max(lat),
                      "median_ns": float(np.median(lat))})
    metrics = {
        "kind": "multipatch", "patches": patches, "d": spec.d,
        "p": spec.p, "rounds": rounds, "shots": shots,
        "failures": failures, "ler": failures / shots, "ci95": [lo, hi],
        "latency_vs_threads": table,
    }
    _emit(spec, metrics)
    return metrics


def run_bandwidth(spec: ExperimentSpec) -> dict:
    """Residual-syndrome ratio after local decoding, per physical rate."""
    ps = spec.p_list or (spec.p,)
    rounds = spec.rounds or 4 * spec.d
    rows = []
    for p in ps:
        model = build_dem(build_surface_code(spec.d), rounds,
                          NoiseParams.uniform(p))
        local = _load_local_decoder(model, replace(spec, nldu=True))
        res_total = raw_total = 0
        for start in range(0, spec.shots, 64):
            n = min(64, spec.shots - start)
            shots = [sample_shot(model, spec.seed, start + i)
                     for i in range(n)]
            for _, _, (res_b, raw_b) in local.transform_shots(shots):
                res_total += res_b
                raw_total += raw_b
        ratio = res_total / raw_total if raw_total else 0.0
        rows.append({"p": p, "d": spec.d, "ratio": ratio,
                     "residual_bits": res_total, "raw_bits": raw_total,
                     "zero_raw": raw_total == 0})
    metrics = {"kind": "bandwidth", "rows": rows, "rounds": rounds,
               "shots": spec.shots}
    _emit(spec, metrics)
    return metrics


def run_streaming_latency(spec: ExperimentSpec) -> dict:
    """Long-stream run: minimum no-backlog worker count, tick-latency
    constancy, and decode-work comparison with/without local decoding."""
    rounds = spec.rounds or 10000
    model = build_dem(build_surface_code(spec.d), rounds,
                      NoiseParams.uniform(spec.p))
    blockset = partition(model, spec.d, _buffer(spec))
    shot = sample_shot(model, spec.seed, 0)
    local = _load_local_decoder(model, spec)

    def attempt(m):
        stream = shot_rounds(model, shot, StreamConfig())
        delay = 0
        if local is not None:
            delay = int(nldu.estimate_resources(nldu.NlduConfig(
                tile=9, parallel=(52, 33, 27))).ltc_s * 1e9)
            stream = local.stream(stream)
        cfg = SchedulerConfig(
            decode_workers=m, merge_workers=spec.merge_workers,
            block_rounds=spec.d, buffer_depth=_buffer(spec),
            input_delay_ns=delay, decoder=DECODERS[spec.decoder])
        try:
            return run_scheduler(model, stream, cfg, blockset=blockset)
        except BacklogError:
            return None

    min_m = None
    result = None
    for m in range(1, 65):
        result = attempt(m)
        if result is not None:
            min_m = m
            break
    lat = [fb.latency_ns for fb in result.feedback]
    metrics = {
        "kind": "streaming_latency", "d": spec.d, "p": spec.p,
        "rounds": rounds, "min_decode_workers": min_m,
        "nldu": spec.nldu,
        "tick_latency_max_ns": max(lat),
        "tick_latency_median_ns": float(np.median(lat)),
        "constancy_ratio": max(lat) / float(np.median(lat)),
        "max_buffered_rounds": result.stats["max_buffered"],
        "decode_defects_total": result.stats["defects_total"],
        "decode_matched_total": result.stats["matched_edges_total"],
        "latency_curve": [
            {"tick": fb.frontier_round, "latency_ns": fb.latency_ns}
            for fb in result.feedback[:: max(1, len(result.feedback)
                                             // 200)]],
    }
    _write_aux(spec, result)
    _emit(spec, metrics)
    return metrics


def run_threshold_scan(spec: ExperimentSpec) -> dict:
    """Memory LER over a (d, p) grid; rounds default to 4d per point so
    sub-threshold orderings resolve at moderate shot counts."""
    ds = spec.d_list or (3, 5)
    ps = spec.p_list or (1e-3, 3e-3, 1e-2, 3e-2)
    rows = []
    for d in ds:
        for p in ps:
            sub = replace(spec, kind="memory", d=d, p=p,
                          rounds=spec.rounds or 4 * d, out="",
                          trace_out="", feedback_out="")
            m = run_memory(sub)
            rows.append({"d": d, "p": p, "rounds": m["rounds"],
                         "shots": m["shots"], "failures": m["failures"],
                         "ler": m["ler"], "ci95": m["ci95"]})
    metrics = {"kind": "threshold_scan", "rows": rows}
    _emit(spec, metrics)
    return metrics


# -- dataset export ----------------------------------------------------------

def export_dataset(spec: ExperimentSpec, path: str) -> dict:
    """Write a training dataset: sparse syndrome windows plus ground-truth
    anchor labels derived from the sampled mechanisms."""
    rounds = spec.rounds or 12
    model = build_dem(build_surface_code(spec.d), rounds,
                      NoiseParams.uniform(spec.p))
    codec = nldu.TensorCodec(model)
    buf = io.BytesIO()
    buf.write(LNDS_MAGIC)
    buf.write(struct.pack("<HHHHI", LNDS_VERSION, model.alpha, model.beta,
                          rounds, spec.shots))
    for mask in (codec.pauli_valid, codec.m_valid, codec.h_valid):
        xs, ys = np.nonzero(mask)
        buf.write(struct.pack("<I", len(xs)))
        for x, y in zip(xs, ys):
            buf.write(struct.pack("<HH", x, y))
    for i in range(spec.shots):
        shot = sample_shot(model, spec.seed, i)
        raw = codec.embed_shot(shot)
        cells = np.argwhere(raw != 0)
        buf.write(struct.pack("<I", len(cells)))
        for (x, y, t, c) in cells:
            buf.write(struct.pack("<HHHBB", x, y, t, c, raw[x, y, t, c]))
        pauli, mb, hb = codec.label_shot(shot)
        recs = []
        for (x, y, t) in np.argwhere(pauli != 0):
            recs.append((x, y, t, 0, pauli[x, y, t]))
        for (x, y, t) in np.argwhere(mb != 0):
            recs.append((x, y, t, 1, 1))
        for (x, y, t) in np.argwhere(hb != 0):
            recs.append((x, y, t, 2, 1))
        buf.write(struct.pack("<I", len(recs)))
        for rec in recs:
            buf.write(struct.pack("<HHHBB", *rec))
    with open(path, "wb") as f:
        f.write(buf.getvalue())
    metrics = {"kind": "export_dataset", "path": path,
               "samples": spec.shots, "d": spec.d, "p": spec.p,
               "rounds": rounds}
    _emit(spec, metrics)
    return metrics


# -- output plumbing ---------------------------------------------------------

def _emit(spec, metrics) -> None:
    if spec.out:
        with open(spec.out, "w") as f:
            json.dump(metrics, f, indent=2)
            f.write("\n")


def _write_aux(spec, result) -> None:
    if spec.trace_out:
        with open(spec.trace_out, "w") as f:
            for ev in result.trace:
                f.write(json.dumps(ev) + "\n")
    if spec.feedback_out:
        with open(spec.feedback_out, "w") as f:
            w = csv.writer(f)
            w.writerow(["tick", "bits", "latency_ns"])
            for fb in result.feedback:
                w.writerow([fb.frontier_round, fb.bits, fb.latency_ns])


def plot_metrics(kind: str, metrics_path: str, out_path: str) -> None:
    """Render a saved metrics file to a static image."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(metrics_path) as f:
        metrics = json.load(f)
    fig, ax = plt.subplots(figsize=(6, 4))
    if kind == "threshold_scan" or metrics.get("kind") == "threshold_scan":
        rows = metrics["rows"]
        ds = sorted({r["d"] for r in rows})
        for d in ds:
            pts = sorted([r for r in rows if r["d"] == d],
                         key=lambda r: r["p"])
            ax.errorbar(
                [r["p"] for r in pts], [max(r["ler"], 1e-7) for r in pts],
                yerr=[[max(r["ler"] - r["ci95"][0], 0) for r in pts],
                      [max(r["ci95"][1] - r["ler"], 0) for r in pts]],
                marker="o", label=f"d={d}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("physical error rate")
        ax.set_ylabel("logical error rate")
    elif metrics.get("kind") == "bandwidth":
        rows = metrics["rows"]
        ax.plot([r["p"] for r in rows], [r["ratio"] for r in rows],
                marker="s")
        ax.set_xlabel("physical error rate")
        ax.set_ylabel("residual syndrome ratio")
    elif metrics.get("kind") == "streaming_latency":
        curve = metrics["latency_curve"]
        ax.plot([c["tick"] for c in curve],
                [c["latency_ns"] / 1000 for c in curve], marker=".")
        ax.set_xlabel("round")
        ax.set_ylabel("tick latency (us)")
    elif metrics.get("kind") == "multipatch":
        table = metrics["latency_vs_threads"]
        ax.plot([r["threads"] for r in table],
                [r["max_ns"] / 1000 for r in table], marker="o")
        ax.set_xlabel("decode threads")
        ax.set_ylabel("tick latency (us)")
    else:
        raise ValueError(f"no plot defined for {metrics.get('kind')!r}")
    ax.grid(True, which="both", ls=":", alpha=0.5)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)

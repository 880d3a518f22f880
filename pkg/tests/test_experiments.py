"""Experiment harness, CLI surface, and file outputs."""

import io
import json
import math
import struct

import numpy as np
import pytest

from latte.cli import load_config, main
from latte.experiments import (LNDS_MAGIC, ExperimentSpec, export_dataset,
                               joint_product, run_bandwidth, run_memory,
                               run_multipatch, run_stability,
                               run_streaming_latency, run_threshold_scan,
                               wilson_interval)


def test_wilson_interval_reference_values():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0
    assert hi == pytest.approx(0.0370, abs=2e-3)
    lo, hi = wilson_interval(5, 100)
    assert lo == pytest.approx(0.0215, abs=2e-3)
    assert hi == pytest.approx(0.1118, abs=3e-3)
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi


def test_memory_zero_noise_has_zero_ler():
    m = run_memory(ExperimentSpec(kind="memory", d=3, p=0.0, shots=200))
    assert m["failures"] == 0 and m["ler"] == 0.0


def test_memory_reproducible_from_seed():
    a = run_memory(ExperimentSpec(kind="memory", d=3, p=5e-3, shots=400,
                                  seed=7))
    b = run_memory(ExperimentSpec(kind="memory", d=3, p=5e-3, shots=400,
                                  seed=7, decode_workers=8))
    assert a["failures"] == b["failures"]
    assert a["ler"] == b["ler"]


def test_shot_escalation_stops_at_tolerance():
    m = run_memory(ExperimentSpec(kind="memory", d=3, p=2e-2, shots=200,
                                  tolerance=0.02, shot_cap=4000, seed=3))
    assert m["shots"] <= 4000
    lo, hi = m["ci95"]
    assert (hi - lo) / 2 < 0.02 or m["shots"] == 4000


def test_stability_zero_noise_and_rounds_ordering():
    z = run_stability(ExperimentSpec(kind="stability", d=3, p=0.0,
                                     rounds=5, shots=100))
    assert z["failures"] == 0
    short = run_stability(ExperimentSpec(
        kind="stability", d=3, p=1.5e-2, rounds=5, shots=6000, seed=5))
    long_ = run_stability(ExperimentSpec(
        kind="stability", d=3, p=1.5e-2, rounds=9, shots=6000, seed=5))
    assert long_["failures"] < short["failures"]


def test_multipatch_zero_noise_product_rule():
    m = run_multipatch(ExperimentSpec(kind="multipatch", d=3, p=0.0,
                                      shots=50, patches=4))
    assert m["failures"] == 0
    assert joint_product(0, 3) == 0
    assert joint_product(0b101, 3) == 0
    assert joint_product(0b100, 3) == 1
    table = m["latency_vs_threads"]
    lat = [row["max_ns"] for row in table]
    assert lat == sorted(lat, reverse=True)
    assert lat[-1] < lat[0]


def test_bandwidth_zero_rate_flagged(tmp_path):
    weights = tmp_path / "w.lnw1"
    _write_test_weights(weights)
    m = run_bandwidth(ExperimentSpec(
        kind="bandwidth", d=3, shots=5, rounds=6, p_list=(0.0,),
        weights=str(weights)))
    row = m["rows"][0]
    assert row["zero_raw"] and row["ratio"] == 0.0


def _write_test_weights(path):
    from latte.nldu import make_model, save_weights
    rng = np.random.default_rng(1)
    params = []
    for (i_c, o_c, ks) in [(2, 7, (3, 3, 3)), (7, 7, (3, 3, 3)),
                           (7, 7, (3, 3, 3)), (7, 6, (1, 1, 1))]:
        params.append(dict(
            in_ch=i_c, out_ch=o_c, ksize=ks, weight_scale=0.02,
            act_scale=0.1, act_zp=0,
            bias=rng.integers(-5, 5, o_c, dtype=np.int32),
            weights=rng.integers(-40, 40, (o_c, i_c) + ks,
                                 dtype=np.int8)))
    save_weights(make_model(params), path)


def test_streaming_latency_metrics_shape():
    m = run_streaming_latency(ExperimentSpec(
        kind="streaming_latency", d=3, p=1e-3, rounds=300, seed=2))
    assert m["min_decode_workers"] >= 1
    assert m["constancy_ratio"] >= 1.0
    assert m["max_buffered_rounds"] < 1024
    assert m["latency_curve"]


def test_threshold_scan_rows():
    m = run_threshold_scan(ExperimentSpec(
        kind="threshold_scan", shots=100, d_list=(3,), p_list=(1e-3,)))
    assert len(m["rows"]) == 1
    assert m["rows"][0]["rounds"] == 12


def test_export_dataset_round_trip(tmp_path):
    path = tmp_path / "train.lnds"
    spec = ExperimentSpec(kind="export_dataset", d=3, p=5e-3, rounds=6,
                          shots=4, seed=9)
    export_dataset(spec, str(path))
    raw = path.read_bytes()
    buf = io.BytesIO(raw)
    assert buf.read(4) == LNDS_MAGIC
    version, alpha, beta, gamma, count = struct.unpack("<HHHHI",
                                                       buf.read(12))
    assert (version, alpha, beta, gamma, count) == (1, 3, 3, 6, 4)
    masks = []
    for _ in range(3):
        (n,) = struct.unpack("<I", buf.read(4))
        masks.append([struct.unpack("<HH", buf.read(4)) for _ in range(n)])
    assert len(masks[0]) == 9            # one Pauli anchor per data qubit
    assert len(masks[1]) == 8            # one measurement anchor per stab
    for _ in range(count):
        (n_cells,) = struct.unpack("<I", buf.read(4))
        for _ in range(n_cells):
            x, y, t, c, v = struct.unpack("<HHHBB", buf.read(8))
            assert v in (1, 2) and c in (0, 1)
            assert x <= alpha and y <= beta and t < gamma
        (n_labels,) = struct.unpack("<I", buf.read(4))
        for _ in range(n_labels):
            x, y, t, kind, v = struct.unpack("<HHHBB", buf.read(8))
            assert kind in (0, 1, 2)
            assert 1 <= v <= 3 if kind == 0 else v == 1
    assert not buf.read(1)


def test_cli_memory_and_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("d = 3\np = 0.0\nshots = 50\nseed = 4\n")
    out = tmp_path / "metrics.json"
    rc = main(["memory", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    printed = json.loads(capsys.readouterr().out)
    saved = json.loads(out.read_text())
    assert printed == saved
    assert saved["ler"] == 0.0
    assert saved["d"] == 3
    # CLI flag overrides the config file
    rc = main(["memory", "--config", str(cfg), "--shots", "20"])
    printed = json.loads(capsys.readouterr().out)
    assert printed["shots"] == 20


def test_cli_hardware_commands(capsys):
    main(["estimate-hw"])
    est = json.loads(capsys.readouterr().out)
    assert est["lut"] == 156576
    main(["search-hw"])
    found = json.loads(capsys.readouterr().out)
    assert found["parallel"] == [17, 13, 9]


def test_cli_plot(tmp_path, capsys):
    out = tmp_path / "scan.json"
    main(["threshold-scan", "--shots", "50", "--d-list", "3",
          "--p-list", "0.001", "0.01", "--out", str(out)])
    capsys.readouterr()
    png = tmp_path / "scan.png"
    main(["plot", str(out), str(png)])
    assert png.stat().st_size > 0


def test_cli_trace_and_feedback_outputs(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    fb = tmp_path / "feedback.csv"
    main(["memory", "--d", "3", "--p", "0.002", "--shots", "30",
          "--rounds", "9", "--trace", str(trace), "--feedback", str(fb)])
    capsys.readouterr()
    lines = trace.read_text().strip().splitlines()
    assert lines and all("type" in json.loads(ln) for ln in lines)
    rows = fb.read_text().strip().splitlines()
    assert rows[0] == "tick,bits,latency_ns"
    assert len(rows) >= 2


def test_config_parser_values(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("d = 5\np = 1e-3  # comment\nnldu = true\n"
                   "p-list = 0.001, 0.002\nname = run1\n")
    out = load_config(str(cfg))
    assert out == {"d": 5, "p": 1e-3, "nldu": True,
                   "p_list": (0.001, 0.002), "name": "run1"}

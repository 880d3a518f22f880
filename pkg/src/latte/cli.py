"""Command-line harness for the experiment suite."""

from __future__ import annotations

import argparse
import json
import sys

from . import nldu
from .experiments import (ExperimentSpec, default_weights_path,
                          export_dataset, plot_metrics, run_bandwidth,
                          run_memory, run_multipatch, run_stability,
                          run_streaming_latency, run_threshold_scan)

_RUNNERS = {
    "memory": run_memory,
    "stability": run_stability,
    "multipatch": run_multipatch,
    "bandwidth": run_bandwidth,
    "stream-latency": run_streaming_latency,
    "threshold-scan": run_threshold_scan,
}

_KIND_OF = {
    "memory": "memory", "stability": "stability",
    "multipatch": "multipatch", "bandwidth": "bandwidth",
    "stream-latency": "streaming_latency",
    "threshold-scan": "threshold_scan",
}


def load_config(path: str) -> dict:
    """Flat key = value configuration file; '#' starts a comment."""
    out = {}
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = _parse_value(value)
    return out


def _parse_value(value: str):
    value = value.strip().strip('"').strip("'")
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    if "," in value:
        return tuple(_parse_value(v) for v in value.split(","))
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default="", help="key = value config file")
    p.add_argument("--d", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--rounds", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--buffer", type=int)
    p.add_argument("--decode-workers", type=int, dest="decode_workers")
    p.add_argument("--merge-workers", type=int, dest="merge_workers")
    p.add_argument("--nldu", action="store_true", default=None)
    p.add_argument("--no-nldu", dest="nldu", action="store_false")
    p.add_argument("--weights")
    p.add_argument("--seed", type=int)
    p.add_argument("--decoder", choices=("uf", "exact"))
    p.add_argument("--patches", type=int)
    p.add_argument("--d-list", dest="d_list", type=int, nargs="+")
    p.add_argument("--p-list", dest="p_list", type=float, nargs="+")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--shot-cap", dest="shot_cap", type=int)
    p.add_argument("--tile", type=int)
    p.add_argument("--out", help="metrics JSON path")
    p.add_argument("--trace", dest="trace_out",
                   help="event trace JSON-lines path")
    p.add_argument("--feedback", dest="feedback_out",
                   help="feedback log CSV path")


def _spec_from_args(kind: str, args: argparse.Namespace) -> ExperimentSpec:
    values = {}
    if getattr(args, "config", ""):
        values.update(load_config(args.config))
    for key in ("d", "p", "rounds", "shots", "buffer", "decode_workers",
                "merge_workers", "nldu", "weights", "seed", "decoder",
                "patches", "d_list", "p_list", "tolerance", "shot_cap",
                "tile", "out", "trace_out", "feedback_out"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = tuple(v) if isinstance(v, list) else v
    values.pop("kind", None)
    return ExperimentSpec(kind=kind, **values)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latte",
        description="Streaming block decoding experiments for the "
                    "surface code")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name)
        _add_common(p)
    p = sub.add_parser("export-dataset",
                       help="write an LNDS training dataset")
    _add_common(p)
    p.add_argument("path", help="output dataset file")

    p = sub.add_parser("estimate-hw", help="resource/latency model")
    p.add_argument("--tile", type=int, default=9)
    p.add_argument("--parallel", type=int, nargs=3, default=[52, 33, 27])
    p.add_argument("--clock-mhz", type=float, default=300.0)
    p.add_argument("--out")

    p = sub.add_parser("search-hw", help="design-space search")
    p.add_argument("--tile", type=int, default=9)
    p.add_argument("--clock-mhz", type=float, default=300.0)
    p.add_argument("--stage-budget-us", type=float, default=1.0)
    p.add_argument("--out")

    p = sub.add_parser("plot", help="render a metrics file")
    p.add_argument("metrics", help="metrics JSON produced by a run")
    p.add_argument("out", help="output image path")
    p.add_argument("--kind", default="")

    args = parser.parse_args(argv)
    if args.command in _RUNNERS:
        spec = _spec_from_args(_KIND_OF[args.command], args)
        metrics = _RUNNERS[args.command](spec)
        json.dump(metrics, sys.stdout, indent=2)
        print()
    elif args.command == "export-dataset":
        spec = _spec_from_args("export_dataset", args)
        metrics = export_dataset(spec, args.path)
        json.dump(metrics, sys.stdout, indent=2)
        print()
    elif args.command == "estimate-hw":
        cfg = nldu.NlduConfig(tile=args.tile,
                              parallel=tuple(args.parallel),
                              clock_hz=args.clock_mhz * 1e6)
        est = nldu.estimate_resources(cfg)
        metrics = {"lut": est.lut, "reg": est.reg, "ltc_us": est.ltc_s * 1e6}
        json.dump(metrics, sys.stdout, indent=2)
        print()
        if args.out:
            with open(args.out, "w") as f:
                json.dump(metrics, f, indent=2)
    elif args.command == "search-hw":
        cfg = nldu.search_config(args.tile, args.clock_mhz * 1e6,
                                 args.stage_budget_us * 1e-6)
        est = nldu.estimate_resources(cfg)
        metrics = {"parallel": list(cfg.parallel), "lut": est.lut,
                   "reg": est.reg, "ltc_us": est.ltc_s * 1e6}
        json.dump(metrics, sys.stdout, indent=2)
        print()
        if args.out:
            with open(args.out, "w") as f:
                json.dump(metrics, f, indent=2)
    elif args.command == "plot":
        plot_metrics(args.kind, args.metrics, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())

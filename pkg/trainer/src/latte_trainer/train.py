"""Curriculum training loop and evaluation metrics."""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np
import torch

from .dataset import Dataset, load_dataset
from .export import export_weights
from .loss import masked_loss
from .qat import LocalDecoderNet


def _batches(ds: Dataset, batch_size, steps, rng):
    n = len(ds)
    for _ in range(steps):
        idx = rng.integers(0, n, size=batch_size)
        yield (torch.from_numpy(ds.inputs[idx]).float(),
               torch.from_numpy(ds.pauli[idx].astype(np.int64)),
               torch.from_numpy(ds.meas[idx]),
               torch.from_numpy(ds.hook[idx]))


def train_curriculum(datasets, steps_per_stage=2000, batch_size=32,
                     lr=1e-3, seed=0, log_every=0, net=None):
    """Sequential stages over the given datasets (one per physical rate);
    returns the trained network."""
    torch.manual_seed(seed)
    net = net or LocalDecoderNet()
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    net.train()
    for stage, ds in enumerate(datasets):
        masks = (torch.from_numpy(ds.pauli_mask),
                 torch.from_numpy(ds.meas_mask),
                 torch.from_numpy(ds.hook_mask))
        for step, (x, pauli, meas, hook) in enumerate(
                _batches(ds, batch_size, steps_per_stage, rng)):
            opt.zero_grad()
            logits = net(x)
            loss = masked_loss(logits, pauli, meas, hook, *masks)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"loss diverged at stage {stage} step {step}: {loss}")
            loss.backward()
            opt.step()
            if log_every and step % log_every == 0:
                print(f"stage {stage} step {step}: loss {loss.item():.4f}",
                      flush=True)
    return net


@torch.no_grad()
def evaluate(net, ds: Dataset, threshold=0.8, batch=64):
    """Per-type accuracies, false-positive and false-negative rates."""
    net.eval()
    logit_thr = math.log(threshold / (1 - threshold))
    pauli_mask = torch.from_numpy(ds.pauli_mask)
    t_valid = torch.ones(ds.gamma, dtype=torch.bool)
    t_valid[-1] = False
    counts = {k: 0 for k in (
        "pauli_total", "pauli_correct", "pauli_neg", "pauli_fp",
        "pauli_pos", "pauli_fn", "meas_total", "meas_correct",
        "meas_neg", "meas_fp", "meas_pos", "meas_fn",
        "hook_total", "hook_correct", "hook_neg", "hook_fp",
        "hook_pos", "hook_fn")}
    for lo in range(0, len(ds), batch):
        hi = min(lo + batch, len(ds))
        x = torch.from_numpy(ds.inputs[lo:hi]).float()
        logits = net(x)
        sel = pauli_mask[None, None].expand(hi - lo, ds.gamma, -1, -1)
        pred = logits[:, 0:4].argmax(dim=1)[sel]
        true = torch.from_numpy(ds.pauli[lo:hi].astype(np.int64))[sel]
        counts["pauli_total"] += pred.numel()
        counts["pauli_correct"] += int((pred == true).sum())
        counts["pauli_neg"] += int((true == 0).sum())
        counts["pauli_fp"] += int(((true == 0) & (pred != 0)).sum())
        counts["pauli_pos"] += int((true != 0).sum())
        counts["pauli_fn"] += int(((true != 0) & (pred == 0)).sum())
        for name, channel, target, mask in (
                ("meas", 4, ds.meas, ds.meas_mask),
                ("hook", 5, ds.hook, ds.hook_mask)):
            sel = (torch.from_numpy(mask)[None, None]
                   & t_valid[None, :, None, None]).expand(
                       hi - lo, -1, -1, -1)
            pred = (logits[:, channel] > logit_thr)[sel]
            true = torch.from_numpy(target[lo:hi])[sel]
            counts[f"{name}_total"] += pred.numel()
            counts[f"{name}_correct"] += int((pred == true).sum())
            counts[f"{name}_neg"] += int((~true).sum())
            counts[f"{name}_fp"] += int((~true & pred).sum())
            counts[f"{name}_pos"] += int(true.sum())
            counts[f"{name}_fn"] += int((true & ~pred).sum())

    def rate(num, den):
        return num / den if den else 0.0

    return {
        "pauli_accuracy": rate(counts["pauli_correct"],
                               counts["pauli_total"]),
        "pauli_fp_rate": rate(counts["pauli_fp"], counts["pauli_neg"]),
        "pauli_fn_rate": rate(counts["pauli_fn"], counts["pauli_pos"]),
        "meas_accuracy": rate(counts["meas_correct"],
                              counts["meas_total"]),
        "meas_fp_rate": rate(counts["meas_fp"], counts["meas_neg"]),
        "meas_fn_rate": rate(counts["meas_fn"], counts["meas_pos"]),
        "hook_accuracy": rate(counts["hook_correct"],
                              counts["hook_total"]),
        "hook_fp_rate": rate(counts["hook_fp"], counts["hook_neg"]),
        "hook_fn_rate": rate(counts["hook_fn"], counts["hook_pos"]),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="latte-train",
        description="Quantization-aware curriculum training")
    ap.add_argument("--datasets", nargs="+", required=True,
                    help="one LNDS file per curriculum stage")
    ap.add_argument("--out", required=True, help="LNW1 output path")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eval", default="",
                    help="optional held-out LNDS file to report metrics on")
    ap.add_argument("--log-every", type=int, default=200)
    args = ap.parse_args(argv)

    datasets = [load_dataset(p) for p in args.datasets]
    net = train_curriculum(datasets, steps_per_stage=args.steps,
                           batch_size=args.batch, lr=args.lr,
                           seed=args.seed, log_every=args.log_every)
    export_weights(net, args.out)
    report = {"out": args.out,
              "parameters": int(net.parameter_count)}
    if args.eval:
        report["held_out"] = evaluate(net, load_dataset(args.eval))
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())

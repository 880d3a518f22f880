"""Resource and latency model of the streaming inference hardware, plus
the per-layer design-space search."""

from __future__ import annotations

import math
from dataclasses import dataclass

K0 = 2                  # input channels; fixed by the syndrome encoding
PIPELINE_DELAY_S = 3e-6  # fixed three-stage pipeline fill
CYCLES_PER_STEP = 28
MAX_PARALLEL = 90        # configurations examined per layer


class InfeasibleBudgetError(ValueError):
    """No parallelism setting meets the per-stage latency budget."""


@dataclass(frozen=True)
class NlduConfig:
    tile: int               # N, per-board patch extent
    channels: tuple = (7, 7, 7)       # K1..K3
    parallel: tuple = (1, 1, 1)       # P1..P3
    clock_hz: float = 300e6

    def __post_init__(self):
        if len(self.channels) != 3 or len(self.parallel) != 3:
            raise ValueError("three stages expected")
        if any(k < 1 for k in self.channels) or \
                any(p < 1 for p in self.parallel):
            raise ValueError("channel and parallelism counts must be >= 1")
        if self.tile < 1 or self.clock_hz <= 0:
            raise ValueError("invalid tile or clock")


@dataclass(frozen=True)
class ResourceEstimate:
    lut: int
    reg: int
    ltc_s: float


def _stage_cells(tile: int, stage: int) -> int:
    """Input extent of stage i (1-based): (N + 2*(3-i))^2."""
    return (tile + 2 * (3 - stage)) ** 2


def stage_latency_s(cfg: NlduConfig, stage: int) -> float:
    cells = _stage_cells(cfg.tile, stage)
    steps = math.ceil(cells / cfg.parallel[stage - 1])
    return CYCLES_PER_STEP / cfg.clock_hz * steps


def estimate_resources(cfg: NlduConfig) -> ResourceEstimate:
    """Empirical resource/latency formulas of the streaming engine."""
    ks = (K0,) + tuple(cfg.channels)
    lut = sum(7 * cfg.parallel[i] * (40 * ks[i] + 1) for i in range(3))
    lut += 16 * ks[3] * cfg.tile ** 2
    reg = sum(56 * cfg.parallel[i] * (1 + ks[i]) for i in range(3))
    reg += 16 * ks[3] * cfg.tile ** 2
    steps = 3 + sum(
        math.ceil(_stage_cells(cfg.tile, i + 1) / cfg.parallel[i])
        for i in range(3))
    ltc = PIPELINE_DELAY_S + CYCLES_PER_STEP / cfg.clock_hz * steps
    return ResourceEstimate(lut=int(lut), reg=int(reg), ltc_s=ltc)


def search_config(tile: int, clock_hz: float,
                  stage_budget_s: float = 1e-6,
                  channels: tuple = (7, 7, 7)) -> NlduConfig:
    """Smallest-resource parallelism meeting the per-stage budget.

    Scans up to MAX_PARALLEL settings per layer; resources grow
    monotonically with parallelism, so the first feasible setting per
    stage is the cheapest.
    """
    if stage_budget_s <= 3 * CYCLES_PER_STEP / clock_hz:
        raise InfeasibleBudgetError(
            f"budget {stage_budget_s} too small for the {clock_hz} Hz clock")
    parallel = []
    for stage in (1, 2, 3):
        cells = _stage_cells(tile, stage)
        chosen = None
        for p in range(1, MAX_PARALLEL + 1):
            steps = math.ceil(cells / p)
            if CYCLES_PER_STEP / clock_hz * steps < stage_budget_s:
                chosen = p
                break
        if chosen is None:
            raise InfeasibleBudgetError(
                f"stage {stage} cannot meet {stage_budget_s}s at "
                f"{clock_hz} Hz within {MAX_PARALLEL} lanes")
        parallel.append(chosen)
    return NlduConfig(tile=tile, channels=tuple(channels),
                      parallel=tuple(parallel), clock_hz=clock_hz)

"""Direction decision from two fitted additive noise models."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

from .domain import PairedSample
from .regression import AnmFit, RegressionConfig, fit_anm
from .seeding import BACKWARD_SEED_XOR, MASK64


class Outcome(str, Enum):
    X_CAUSES_Y = "X->Y"
    Y_CAUSES_X = "Y->X"
    BAD_FIT = "bad_fit"
    BOTH_POSSIBLE = "both_possible"

    def mirrored(self) -> Outcome:
        return {Outcome.X_CAUSES_Y: Outcome.Y_CAUSES_X,
                Outcome.Y_CAUSES_X: Outcome.X_CAUSES_Y}.get(self, self)


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    forward: AnmFit
    backward: AnmFit
    alpha: float


@dataclass(frozen=True)
class CurvePoint:
    n: int
    p_forward: float
    p_backward: float


def decide(forward: AnmFit, backward: AnmFit, alpha: float = 0.05) -> Verdict:
    fwd = forward.p_value > alpha
    bwd = backward.p_value > alpha
    if fwd and not bwd:
        outcome = Outcome.X_CAUSES_Y
    elif bwd and not fwd:
        outcome = Outcome.Y_CAUSES_X
    elif fwd and bwd:
        outcome = Outcome.BOTH_POSSIBLE
    else:
        outcome = Outcome.BAD_FIT
    return Verdict(outcome, forward, backward, alpha)


def backward_seed(seed: int) -> int:
    return (seed ^ BACKWARD_SEED_XOR) & MASK64


def infer_direction(sample: PairedSample, cfg: RegressionConfig | None = None) -> Verdict:
    """Fit X->Y and Y->X and apply the four-way decision rule.

    Each direction uses the declared domain of its response variable, so
    mixed integer/cyclic pairs need no special handling. The backward fit is
    seeded with ``seed ^ BACKWARD_SEED_XOR``.
    """
    cfg = cfg or RegressionConfig()
    forward = fit_anm(sample, cfg)
    backward = fit_anm(sample.swapped(), dataclasses.replace(cfg, seed=backward_seed(cfg.seed)))
    return decide(forward, backward, cfg.alpha)


def pvalue_curve(sample: PairedSample, grid, cfg: RegressionConfig | None = None) -> list[CurvePoint]:
    """Both p-values on the first n rows, for each n in ``grid``."""
    grid = [int(n) for n in grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be non-decreasing")
    for n in grid:
        if n > len(sample):
            raise ValueError(f"grid value {n} exceeds sample size {len(sample)}")
    out = []
    for n in grid:
        v = infer_direction(sample.head(n), cfg)
        out.append(CurvePoint(n, v.forward.p_value, v.backward.p_value))
    return out

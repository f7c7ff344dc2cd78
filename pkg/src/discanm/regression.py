"""Discrete regression by dependence minimization.

Fits ``Y = f(X) + N`` by coordinate descent over the function table: each
sweep visits the observed x values in a random order and sets f(x) to the
candidate value that makes the residuals least dependent on X. The loss is
the chi-square p-value of the X-by-residual contingency table (statistic
once p underflows). Sweeps stop when the residuals pass the independence
test, when a sweep changes nothing, or after ``max_sweeps``.

Only one row of the X-by-residual table changes when f(x) changes, so all
candidates for a coordinate are scored together from the row and column
sums of the current table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .domain import (
    FunctionTable,
    JointPmf,
    NoisePmf,
    PairedSample,
    canonicalize,
    empirical_joint,
    noise_pmf_from_residuals,
    residuals,
)
from .stats import DependenceScore, TestConfig, chi2_sf, independence_test

FULL_RANGE = "full"
TOP_K = "top"

_REL_TOL = 1e-9
_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class RegressionConfig:
    max_sweeps: int = 10
    alpha: float = 0.05
    candidate_mode: str = FULL_RANGE
    top_k: int = 5
    p_min: float = 1e-12
    n_perm: int = 10_000
    seed: int = 0
    fisher_fallback: bool = True
    mc_method: str = "patefield"

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.candidate_mode not in (FULL_RANGE, TOP_K):
            raise ValueError(f"unknown candidate mode {self.candidate_mode!r}")
        if self.candidate_mode == TOP_K and self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    def test_config(self) -> TestConfig:
        return TestConfig(
            n_perm=self.n_perm,
            seed=seeding.split(self.seed, 0x7E57),
            p_min=self.p_min,
            fisher_fallback=self.fisher_fallback,
            mc_method=self.mc_method,
        )


@dataclass(frozen=True)
class AnmFit:
    f: FunctionTable
    residuals: np.ndarray
    noise_pmf: NoisePmf
    p_value: float
    statistic: float
    method: str
    dm_evaluations: int
    sweeps_used: int
    accepted: bool
    score_trace: tuple[DependenceScore, ...] = field(default=(), repr=False)


def init_function(joint: JointPmf) -> FunctionTable:
    """Most frequent y for each x; ties go to the largest y."""
    w = np.asarray(joint.weights)
    entries = {}
    for i, x in enumerate(joint.x_values):
        row = w[i]
        best = max(row.tolist())
        j = max(k for k, v in enumerate(row.tolist()) if v == best)
        entries[x] = joint.y_values[j]
    return FunctionTable(entries, joint.y_domain)


def _full_range(joint: JointPmf) -> list[int]:
    if joint.y_domain.is_cyclic:
        return list(range(joint.y_domain.modulus))
    return list(range(min(joint.y_values), max(joint.y_values) + 1))


def candidate_values(joint: JointPmf, x: int, cfg: RegressionConfig | None = None) -> list[int]:
    """Values tried for f(x), ascending.

    Full range: every integer between min and max observed Y, or all of
    Z/mZ for a cyclic codomain. Top-k: the k most frequent y seen with this
    x (ties to larger y); if fewer than k were seen, the remainder is filled
    from the full range, nearest to the row's mode first, larger first on
    equal distance.
    """
    cfg = cfg or RegressionConfig()
    full = _full_range(joint)
    if cfg.candidate_mode == FULL_RANGE:
        return full
    i = joint.x_values.index(x)
    row = np.asarray(joint.weights)[i].tolist()
    seen = [(row[j], y) for j, y in enumerate(joint.y_values) if row[j] > 0]
    seen.sort(key=lambda t: (t[0], t[1]), reverse=True)
    chosen = [y for _, y in seen[: cfg.top_k]]
    if len(chosen) < cfg.top_k:
        mode = chosen[0]
        m = joint.y_domain.modulus if joint.y_domain.is_cyclic else None

        def dist(v):
            d = abs(v - mode)
            return min(d, m - d) if m else d

        rest = sorted((v for v in full if v not in chosen), key=lambda v: (dist(v), -v))
        chosen += rest[: cfg.top_k - len(chosen)]
    return sorted(chosen)


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _REL_TOL * max(abs(a), abs(b)) + 1e-300


class _Scorer:
    """Incremental chi-square scoring of the X-by-residual table."""

    def __init__(self, hist: np.ndarray, cyclic: bool, p_min: float):
        self.hist = hist.astype(np.int64)
        self.n_rows, self.width = hist.shape
        self.cyclic = cyclic
        self.n_cols = self.width if cyclic else 2 * self.width - 1
        self.rows = self.hist.sum(axis=1).astype(float)
        self.total = float(self.rows.sum())
        self.p_min = p_min

    def row_for(self, i: int, cands: np.ndarray) -> np.ndarray:
        j = np.arange(self.width)
        if self.cyclic:
            cols = np.mod(j[None, :] - cands[:, None], self.width)
        else:
            cols = j[None, :] - cands[:, None] + self.width - 1
        out = np.zeros((cands.size, self.n_cols))
        out[np.arange(cands.size)[:, None], cols] = self.hist[i][None, :]
        return out

    def table(self, f_idx: np.ndarray) -> np.ndarray:
        t = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            t[i] = self.row_for(i, f_idx[i : i + 1])[0]
        return t

    def _finish(self, s: np.ndarray, ncols: np.ndarray):
        stat = np.maximum(self.total * (s - 1.0), 0.0)
        dof = (self.n_rows - 1) * (ncols - 1)
        stat = np.where(dof > 0, stat, 0.0)
        return stat, chi2_sf(stat, dof)

    def score_table(self, t: np.ndarray):
        col = t.sum(axis=0)
        live = col > 0
        s = ((t[:, live] ** 2 / self.rows[:, None]) / col[live][None, :]).sum()
        stat, p = self._finish(np.array([s]), np.array([live.sum()]))
        return float(stat[0]), float(p[0])

    def score_candidates(self, t: np.ndarray, i: int, cands: np.ndarray):
        q = t**2 / self.rows[:, None]
        a = q.sum(axis=0) - q[i]
        base = t.sum(axis=0) - t[i]
        stats_, ps = [], []
        step = max(1, _CHUNK_CELLS // self.n_cols)
        for lo in range(0, cands.size, step):
            new = self.row_for(i, cands[lo : lo + step])
            col = base[None, :] + new
            num = a[None, :] + new**2 / self.rows[i]
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(col > 0, num / col, 0.0).sum(axis=1)
            st, p = self._finish(s, (col > 0).sum(axis=1))
            stats_.append(st)
            ps.append(p)
        return np.concatenate(stats_), np.concatenate(ps)

    def to_score(self, stat: float, p: float) -> DependenceScore:
        return DependenceScore.from_test(p, stat, self.p_min)


def _better(a: DependenceScore, b: DependenceScore) -> bool:
    """a strictly less dependent than b, beyond float noise."""
    if a.underflow != b.underflow:
        return not a.underflow
    va, vb = a.key[1], b.key[1]
    return va < vb and not _close(va, vb)


def _tied(a: DependenceScore, b: DependenceScore) -> bool:
    return a.underflow == b.underflow and _close(a.key[1], b.key[1])


def fit_anm(sample: PairedSample, cfg: RegressionConfig | None = None) -> AnmFit:
    """Fit Y = f(X) + N on ``sample`` with Y's declared domain as codomain."""
    cfg = cfg or RegressionConfig()
    joint = empirical_joint(sample)
    dom = sample.y_domain
    full = _full_range(joint)
    base = full[0]
    width = len(full)

    hist = np.zeros((len(joint.x_values), width), dtype=np.int64)
    for j, y in enumerate(joint.y_values):
        hist[:, y - base] += np.asarray(joint.weights)[:, j]

    scorer = _Scorer(hist, dom.is_cyclic, cfg.p_min)
    f0 = init_function(joint)
    f_idx = np.array([f0(x) - base for x in joint.x_values], dtype=np.int64)
    cands = [np.array([c - base for c in candidate_values(joint, x, cfg)], dtype=np.int64)
             for x in joint.x_values]

    x_codes = np.searchsorted(np.array(joint.x_values), sample.x)
    test_cfg = cfg.test_config()
    rng = np.random.Generator(np.random.PCG64(cfg.seed & seeding.MASK64))

    table = scorer.table(f_idx)
    current = scorer.to_score(*scorer.score_table(table))
    trace = [current]
    evaluations = 1
    sweeps = 0
    result = None

    def residual_vector():
        r = sample.y - (f_idx[x_codes] + base)
        return np.mod(r, dom.modulus) if dom.is_cyclic else r

    while True:
        sweeps += 1
        changed = False
        for i in rng.permutation(len(joint.x_values)):
            inc = int(f_idx[i])
            cand = cands[i] if inc in cands[i] else np.append(cands[i], inc)
            evaluations += int((cand != inc).sum())
            stat, p = scorer.score_candidates(table, i, cand)
            scores = [scorer.to_score(s, q) for s, q in zip(stat.tolist(), p.tolist())]
            inc_score = scores[int(np.flatnonzero(cand == inc)[0])]
            best = inc_score
            for sc in scores:
                if _better(sc, best):
                    best = sc
            if _tied(best, inc_score):
                continue
            pick = max(int(c) for c, sc in zip(cand.tolist(), scores) if _tied(sc, best))
            f_idx[i] = pick
            table[i] = scorer.row_for(i, np.array([pick]))[0]
            current = best
            trace.append(current)
            changed = True
        result = independence_test(x_codes, residual_vector(), test_cfg)
        if result.p_value > cfg.alpha or not changed or sweeps >= cfg.max_sweeps:
            break

    f = FunctionTable({x: int(f_idx[k]) + base for k, x in enumerate(joint.x_values)}, dom)
    raw = residuals(sample, f)
    f, noise = canonicalize(f, noise_pmf_from_residuals(raw.tolist(), dom))
    res = residuals(sample, f)
    res.setflags(write=False)
    # The canonical shift only relabels residual columns, so the last test
    # result is the test result for the canonical residuals.
    return AnmFit(
        f=f,
        residuals=res,
        noise_pmf=noise,
        p_value=result.p_value,
        statistic=result.statistic,
        method=result.method,
        dm_evaluations=evaluations,
        sweeps_used=sweeps,
        accepted=bool(result.p_value > cfg.alpha),
        score_trace=tuple(trace),
    )

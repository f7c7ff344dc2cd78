"""Contingency tables, Pearson's chi-square test and a Monte Carlo Fisher test.

The dependence measure used as a regression loss lives here as well: it is
the p-value of the independence test, falling back to the raw statistic once
the p-value drops below ``p_min``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import total_ordering

import numpy as np
from scipy import special, stats

CHI_SQUARE = "chi2"
FISHER_MC = "fisher_mc"

# Log-probabilities within 1e-7 of the observed one count as ties.
_LOGP_TOL = 1e-7


@dataclass(frozen=True)
class ContingencyTable:
    row_labels: tuple[int, ...]
    col_labels: tuple[int, ...]
    counts: np.ndarray
    total: int

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError("count matrix does not match labels")
        if (c < 0).any():
            raise ValueError("negative counts")
        if int(c.sum()) != self.total or self.total <= 0:
            raise ValueError("total must equal the (positive) sum of counts")
        if (c.sum(axis=1) == 0).any() or (c.sum(axis=0) == 0).any():
            raise ValueError("table has an all-zero row or column")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_counts(cls, counts) -> ContingencyTable:
        c = np.asarray(counts, dtype=np.int64)
        return cls(tuple(range(c.shape[0])), tuple(range(c.shape[1])), c, int(c.sum()))

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def dof(self) -> int:
        r, c = self.counts.shape
        return (r - 1) * (c - 1)

    def expected(self) -> np.ndarray:
        return np.outer(self.row_sums, self.col_sums) / self.total


@dataclass(frozen=True)
class TestResult:
    statistic: float
    dof: int
    p_value: float
    method: str = CHI_SQUARE

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class TestConfig:
    """Knobs for :func:`independence_test` and :func:`dependence_measure`.

    ``fisher_fallback=False`` disables the small-sample dispatch and always
    uses the asymptotic chi-square p-value.
    """

    n_perm: int = 10_000
    seed: int = 0
    p_min: float = 1e-12
    fisher_fallback: bool = True
    mc_method: str = "patefield"

    __test__ = False


@total_ordering
@dataclass(frozen=True)
class DependenceScore:
    """Orderable dependence; smaller means "more independent".

    Scores whose p-value did not underflow compare by p (larger p is
    smaller score). Any underflowed score is larger than every
    non-underflowed one, and underflowed scores compare by statistic.
    """

    underflow: bool
    primary: float
    fallback_stat: float

    @property
    def key(self) -> tuple[bool, float]:
        return (self.underflow, self.fallback_stat if self.underflow else self.primary)

    @property
    def p_value(self) -> float:
        return -self.primary

    def __lt__(self, other: DependenceScore) -> bool:
        return self.key < other.key

    def __eq__(self, other) -> bool:
        if not isinstance(other, DependenceScore):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    @classmethod
    def from_test(cls, p_value: float, statistic: float, p_min: float = 1e-12) -> DependenceScore:
        under = bool(p_value < p_min)
        return cls(under, -float(p_value), float(statistic))


def contingency_table(u, v) -> ContingencyTable:
    u = np.asarray(u, dtype=np.int64).reshape(-1)
    v = np.asarray(v, dtype=np.int64).reshape(-1)
    if u.size != v.size:
        raise ValueError(f"length mismatch: {u.size} vs {v.size}")
    if u.size == 0:
        raise ValueError("empty input")
    rows, ri = np.unique(u, return_inverse=True)
    cols, ci = np.unique(v, return_inverse=True)
    counts = np.zeros((rows.size, cols.size), dtype=np.int64)
    np.add.at(counts, (ri, ci), 1)
    return ContingencyTable(tuple(rows.tolist()), tuple(cols.tolist()), counts, int(u.size))


def chi_square_statistic(counts: np.ndarray) -> float:
    """Pearson statistic, exactly zero for tables that are outer products.

    Uses (o*T - r*c)^2 / (T*r*c), whose numerator is an exact integer.
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    r = counts.sum(axis=1)
    c = counts.sum(axis=0)
    rc = np.outer(r, c)
    dev = counts * total - rc
    denom = rc.astype(float) * total
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rc > 0, dev.astype(float) ** 2 / denom, 0.0)
    return float(terms.sum())


def chi2_sf(statistic, dof):
    """Upper tail of the chi-square distribution; p = 1 for dof = 0."""
    statistic = np.asarray(statistic, dtype=float)
    dof = np.asarray(dof)
    p = special.chdtrc(np.maximum(dof, 1), statistic)
    p = np.where(dof <= 0, 1.0, p)
    return np.clip(p, 0.0, 1.0)


def chi_square_test(t: ContingencyTable) -> TestResult:
    if t.dof == 0:
        return TestResult(0.0, 0, 1.0, CHI_SQUARE)
    stat = chi_square_statistic(t.counts)
    return TestResult(stat, t.dof, float(chi2_sf(stat, t.dof)), CHI_SQUARE)


def cochran_ok(t: ContingencyTable) -> bool:
    """True iff strictly more than 80% of expected counts exceed 5."""
    e = t.expected()
    return bool((e > 5).sum() > 0.8 * e.size)


def _log_table_prob(tables: np.ndarray, const: float) -> np.ndarray:
    # log P(table | margins) = const - sum log(n_ij!)
    return const - special.gammaln(tables + 1.0).sum(axis=(-2, -1))


def _sample_tables(t: ContingencyTable, n: int, rng: np.random.Generator, method: str) -> np.ndarray:
    if method == "patefield":
        return stats.random_table(t.row_sums, t.col_sums, seed=rng).rvs(n, method="patefield")
    if method == "permutation":
        rows = np.repeat(np.arange(t.counts.shape[0]), t.row_sums)
        cols = np.repeat(np.arange(t.counts.shape[1]), t.col_sums)
        perm = rng.permuted(np.tile(cols, (n, 1)), axis=1)
        ncell = t.counts.size
        codes = (np.arange(n)[:, None] * ncell + rows[None, :] * t.counts.shape[1] + perm).ravel()
        return np.bincount(codes, minlength=n * ncell).reshape(n, *t.counts.shape)
    raise ValueError(f"unknown Monte Carlo method {method!r}")


def fisher_exact_mc(
    t: ContingencyTable,
    n_perm: int = 10_000,
    seed: int = 0,
    method: str = "patefield",
    batch: int = 2_000,
) -> TestResult:
    """Monte Carlo Fisher (Freeman-Halton) test for an r x c table.

    Tables with the observed margins are drawn uniformly from the conditional
    (multiple hypergeometric) law, either by Patefield's algorithm or by
    permuting the column labels; both sample the same distribution. A table
    counts as extreme when its conditional probability is at most that of
    the observed table, so the estimate converges to Fisher's exact p.
    ``p = (1 + #extreme) / (n_perm + 1)``. The reported statistic is the
    Pearson chi-square of the observed table.
    """
    if n_perm < 1:
        raise ValueError("n_perm must be positive")
    stat = chi_square_statistic(t.counts) if t.dof > 0 else 0.0
    if t.dof == 0:
        return TestResult(0.0, 0, 1.0, FISHER_MC)
    const = (special.gammaln(t.row_sums + 1.0).sum() + special.gammaln(t.col_sums + 1.0).sum()
             - special.gammaln(t.total + 1.0))
    observed = _log_table_prob(t.counts.astype(float), const)
    threshold = observed + _LOGP_TOL
    rng = np.random.default_rng(seed)
    extreme = 0
    done = 0
    while done < n_perm:
        k = min(batch, n_perm - done)
        sims = _sample_tables(t, k, rng, method).astype(float)
        extreme += int((_log_table_prob(sims, const) <= threshold).sum())
        done += k
    p = (1 + extreme) / (n_perm + 1)
    return TestResult(stat, t.dof, float(p), FISHER_MC)


def independence_test(u, v, config: TestConfig | None = None) -> TestResult:
    """Chi-square test when Cochran's condition holds, Monte Carlo Fisher otherwise."""
    config = config or TestConfig()
    t = contingency_table(u, v)
    if t.dof == 0:
        return TestResult(0.0, 0, 1.0, CHI_SQUARE)
    if not config.fisher_fallback or cochran_ok(t):
        return chi_square_test(t)
    return fisher_exact_mc(t, config.n_perm, config.seed, config.mc_method)


def dependence_measure(u, v, config: TestConfig | None = None) -> DependenceScore:
    config = config or TestConfig()
    res = independence_test(u, v, config)
    return DependenceScore.from_test(res.p_value, res.statistic, config.p_min)

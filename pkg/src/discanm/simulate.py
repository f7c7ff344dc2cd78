"""Synthetic model families, samplers and the experiment runner.

Regressor families for the random integer suite (parameters drawn
uniformly from these ranges):

==================  ===============================================
categorical(4)      random masses on {1..4}
categorical(6)      random masses on {1..6}
binomial            n in [2, 10], p in [0.1, 0.9]
geometric           p in [0.3, 0.9], support {1, 2, ...}
hypergeometric      M in [6, 12], K and N in [2, M-2] (at least 3 support points)
negative binomial   n in [1, 5], p in [0.3, 0.9], support {0, 1, ...}
poisson             lambda in [1, 5]
==================  ===============================================

Noise for that suite has 2-5 contiguous offsets containing 0 with random
masses, and f(x) is uniform on {-7..7}. Heavy-tailed laws are
sampled exactly (inverse CDF); the pmf attached to the model for the
theory checks is cut where the CDF reaches 1 - 1e-6.

A random pmf on k points is a Dirichlet(1) draw (uniform on the simplex).

Seeds: model k of a suite uses ``split(seed, k)``; the model, the sample
and the regression then use ``split(model_seed, 1)``, ``split(.., 2)`` and
``split(.., 3)``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy import stats as sps

from . import seeding
from .domain import FunctionTable, NoisePmf, PairedSample, ValueDomain
from .inference import Outcome, infer_direction
from .regression import RegressionConfig
from .theory import AnmModel, backward_search, model_to_dict, nonidentifiable_example, theorem1_decomposition

FAMILIES_1A = ("categorical4", "categorical6", "binomial", "geometric",
               "hypergeometric", "negative_binomial", "poisson")
TRUNCATION = 1e-6
SUITES = ("DS1a", "DS1b", "DS2a", "DS2b", "DS3a", "DS3b")

NOISE_3A = {
    "N1": {-2: Fraction(5, 100), -1: Fraction(30, 100), 0: Fraction(30, 100),
           1: Fraction(30, 100), 2: Fraction(5, 100)},
    "N2": {-3: Fraction(5, 100), -2: Fraction(18, 100), -1: Fraction(18, 100),
           0: Fraction(18, 100), 1: Fraction(18, 100), 2: Fraction(18, 100),
           3: Fraction(5, 100)},
}


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & seeding.MASK64))


def _scipy_law(name: str, params: dict):
    if name == "binomial":
        return sps.binom(params["n"], params["p"])
    if name == "geometric":
        return sps.geom(params["p"])
    if name == "hypergeometric":
        return sps.hypergeom(params["M"], params["K"], params["N"])
    if name == "negative_binomial":
        return sps.nbinom(params["n"], params["p"])
    if name == "poisson":
        return sps.poisson(params["mu"])
    raise ValueError(f"unknown law {name!r}")


_FINITE_LAWS = ("binomial", "hypergeometric")


def _law_table(name: str, params: dict, upper_q: float) -> dict[int, float]:
    law = _scipy_law(name, params)
    lo, hi = law.support()
    if not math.isfinite(hi):
        hi = int(law.ppf(upper_q))
    xs = np.arange(int(lo), int(hi) + 1)
    pm = law.pmf(xs)
    return {int(x): float(p) for x, p in zip(xs, pm) if p > 0}


def _draw_law_params(name: str, rng: np.random.Generator) -> dict:
    if name == "binomial":
        return {"n": int(rng.integers(2, 11)), "p": float(rng.uniform(0.1, 0.9))}
    if name == "geometric":
        return {"p": float(rng.uniform(0.3, 0.9))}
    if name == "hypergeometric":
        M = int(rng.integers(6, 13))
        return {"M": M, "K": int(rng.integers(2, M - 1)), "N": int(rng.integers(2, M - 1))}
    if name == "negative_binomial":
        return {"n": int(rng.integers(1, 6)), "p": float(rng.uniform(0.3, 0.9))}
    if name == "poisson":
        return {"mu": float(rng.uniform(1.0, 5.0))}
    raise ValueError(name)


def _random_pmf(rng: np.random.Generator, k: int) -> list[float]:
    """Uniform draw from the probability simplex (Dirichlet(1))."""
    w = rng.dirichlet(np.ones(k))
    return (w / w.sum()).tolist()


def random_model(family: str, seed: int, m: int | None = None, m_tilde: int | None = None) -> AnmModel:
    """Draw a random model.

    ``family`` is ``"Integer1a"`` (random integer model), ``"Cyclic1b"``
    (cyclic, f non-constant) or ``"Support3b"`` (cyclic with the given
    support sizes, also with f non-constant: a constant f makes X and Y
    independent, where neither direction is wrong).
    """
    rng = _rng(seed)
    if family == "Integer1a":
        name = FAMILIES_1A[int(rng.integers(len(FAMILIES_1A)))]
        if name.startswith("categorical"):
            top = 4 if name == "categorical4" else 6
            support = list(range(1, top + 1))
            p_x = dict(zip(support, _random_pmf(rng, top)))
            law, truncated, f_domain = None, False, support
        else:
            params = _draw_law_params(name, rng)
            p_x = _law_table(name, params, 1 - TRUNCATION)
            # f must cover every value inverse-CDF sampling can return.
            f_domain = sorted(_law_table(name, params, 1 - 2.0**-53))
            law, truncated = (name, params), name not in _FINITE_LAWS
        f = FunctionTable({x: int(rng.integers(-7, 8)) for x in f_domain})
        s = int(rng.integers(2, 6))
        start = -int(rng.integers(0, s))
        noise = NoisePmf(tuple(range(start, start + s)), tuple(_random_pmf(rng, s)))
        return AnmModel(p_x, f, noise, x_law=law, truncated=truncated)

    if family in ("Cyclic1b", "Support3b"):
        if m is None or m_tilde is None:
            raise ValueError("cyclic families need m and m_tilde")
        xd, yd = ValueDomain.cyclic(m), ValueDomain.cyclic(m_tilde)
        p_x = dict(enumerate(_random_pmf(rng, m)))
        noise = NoisePmf(tuple(range(m_tilde)), tuple(_random_pmf(rng, m_tilde)), yd)
        while True:
            vals = rng.integers(0, m_tilde, size=m).tolist()
            if len(set(vals)) > 1:
                break
        f = FunctionTable(dict(enumerate(vals)), yd)
        return AnmModel(p_x, f, noise, xd, yd)

    raise ValueError(f"unknown family {family!r}")


def _round_half_up_square_half(x: int) -> int:
    return (x * x + 1) // 2


def paper_model(suite: str, *params) -> AnmModel:
    """The fixed models of the close-to-non-identifiable and runtime suites.

    ``paper_model("DS2a", r)`` for r in [-0.2, 0.2], ``paper_model("DS2b", r)``
    for r in [0.5, 0.8], ``paper_model("DS3a", "N1" | "N2", i)`` for odd i in
    [3, 19]. Rates given as floats are converted through their decimal
    representation, so 0.1 means exactly 1/10.
    """
    if suite == "DS2a":
        (r,) = params
        r = Fraction(str(r))
        if not -Fraction(1, 5) <= r <= Fraction(1, 5):
            raise ValueError("DS2a needs -0.2 <= r <= 0.2")
        half = r / 2
        p_x = {-3: Fraction(1, 10) + half, -1: Fraction(3, 10) - half,
               1: Fraction(15, 100) - half, 3: Fraction(45, 100) + half}
        f = FunctionTable({-3: 1, 1: 1, -1: 2, 3: 2})
        noise = NoisePmf.from_mapping({-2: Fraction(2, 10), 0: Fraction(5, 10), 2: Fraction(3, 10)})
        return AnmModel(p_x, f, noise)
    if suite == "DS2b":
        (r,) = params
        r = Fraction(str(r))
        if not Fraction(1, 2) <= r <= Fraction(4, 5):
            raise ValueError("DS2b needs 0.5 <= r <= 0.8")
        d = ValueDomain.cyclic(4)
        p_x = {0: Fraction(6, 10), 1: Fraction(1, 10), 2: Fraction(1, 10), 3: Fraction(2, 10)}
        noise = NoisePmf((0, 1, 2, 3), (r / 2, r / 2, Fraction(1, 2) - r / 2, Fraction(1, 2) - r / 2), d)
        return AnmModel(p_x, FunctionTable({x: x for x in range(4)}, d), noise, d, d)
    if suite == "DS3a":
        noise_id, i = params
        i = int(i)
        if noise_id not in NOISE_3A:
            raise ValueError(f"unknown noise {noise_id!r}; use N1 or N2")
        if i < 3 or i > 19 or i % 2 == 0:
            raise ValueError("DS3a needs odd i in [3, 19]")
        h = (i - 1) // 2
        xs = range(-h, h + 1)
        p_x = {x: Fraction(1, i) for x in xs}
        f = FunctionTable({x: _round_half_up_square_half(x) for x in xs})
        return AnmModel(p_x, f, NoisePmf.from_mapping(NOISE_3A[noise_id]))
    raise ValueError(f"no fixed model for suite {suite!r}")


def _inverse_cdf(values, masses, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(np.asarray([float(m) for m in masses]))
    cum[-1] = 1.0
    idx = np.searchsorted(cum, u, side="right")
    return np.asarray(values, dtype=np.int64)[np.minimum(idx, len(values) - 1)]


def sample_model(model: AnmModel, n: int, seed: int) -> PairedSample:
    """Draw n iid rows: x from p_x (or the exact law), noise independently."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    u_x = rng.random(n)
    u_n = rng.random(n)
    if model.x_law is not None:
        law = _scipy_law(*model.x_law)
        x = np.maximum(law.ppf(u_x), law.support()[0]).astype(np.int64)
    else:
        xs = list(model.p_x)
        x = _inverse_cdf(xs, [model.p_x[k] for k in xs], u_x)
    e = _inverse_cdf(model.noise.offsets, model.noise.mass, u_n)
    keys = np.array(model.f.support, dtype=np.int64)
    vals = np.array([model.f(k) for k in model.f.support], dtype=np.int64)
    pos = np.searchsorted(keys, x)
    if (pos >= keys.size).any() or (keys[np.minimum(pos, keys.size - 1)] != x).any():
        raise ValueError("sampled x outside the domain of f")
    y = vals[pos] + e
    return PairedSample(x, y, model.x_domain, model.y_domain)


@dataclass(frozen=True)
class SuiteSpec:
    suite_id: str
    params: tuple = ()
    n_models: int = 100
    n_samples: int = 1000
    alpha: float = 0.05
    seed: int = 0
    regression: RegressionConfig = field(default_factory=RegressionConfig)

    def __post_init__(self):
        if self.suite_id not in SUITES:
            raise ValueError(f"unknown suite {self.suite_id!r}")
        if self.n_models < 1 or self.n_samples < 1:
            raise ValueError("n_models and n_samples must be positive")
        if self.suite_id in ("DS1b", "DS3b") and len(self.params) != 2:
            raise ValueError(f"{self.suite_id} needs (m, m_tilde)")
        if self.suite_id in ("DS2a", "DS2b") and len(self.params) != 1:
            raise ValueError(f"{self.suite_id} needs (r,)")
        if self.suite_id == "DS3a" and len(self.params) != 2:
            raise ValueError("DS3a needs (noise_id, i)")
        if self.suite_id in ("DS2a", "DS2b", "DS3a"):
            paper_model(self.suite_id, *self.params)

    @property
    def label(self) -> str:
        return self.suite_id + ("(" + ",".join(map(str, self.params)) + ")" if self.params else "")


@dataclass(frozen=True)
class ModelRecord:
    index: int
    model_seed: int
    verdict: str
    result: str
    p_forward: float
    p_backward: float
    dm_forward: int
    dm_backward: int
    reversible: bool
    example: str | None
    model: dict = field(repr=False, default_factory=dict)


RESULT_KEYS = ("correct", "wrong", "both_possible", "bad_fit")
_RESULT_OF = {
    Outcome.X_CAUSES_Y: "correct",
    Outcome.Y_CAUSES_X: "wrong",
    Outcome.BOTH_POSSIBLE: "both_possible",
    Outcome.BAD_FIT: "bad_fit",
}


@dataclass(frozen=True)
class ExperimentSummary:
    spec: SuiteSpec
    counts: dict
    records: tuple[ModelRecord, ...]

    @property
    def proportions(self) -> dict:
        n = len(self.records)
        return {k: self.counts[k] / n for k in RESULT_KEYS}

    def to_dict(self, with_models: bool = False) -> dict:
        spec = asdict(self.spec)
        spec["params"] = list(self.spec.params)
        recs = []
        for r in self.records:
            d = asdict(r)
            if not with_models:
                d.pop("model")
            recs.append(d)
        return {
            "suite": self.spec.label,
            "spec": spec,
            "counts": dict(self.counts),
            "proportions": self.proportions,
            "records": recs,
        }

    def records_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in self.records:
            w.writerow([self.spec.label, r.index, r.model_seed, r.verdict, r.result,
                        repr(r.p_forward), repr(r.p_backward), r.dm_forward, r.dm_backward,
                        int(r.reversible), r.example or ""])
        return buf.getvalue()


RECORD_COLUMNS = ("suite_id", "model_index", "model_seed", "verdict", "result", "p_forward",
                  "p_backward", "dm_forward", "dm_backward", "reversible", "example")


def model_for(spec: SuiteSpec, k: int) -> AnmModel:
    model_seed = seeding.split(spec.seed, k)
    gen_seed = seeding.split(model_seed, 1)
    if spec.suite_id == "DS1a":
        return random_model("Integer1a", gen_seed)
    if spec.suite_id == "DS1b":
        return random_model("Cyclic1b", gen_seed, *spec.params)
    if spec.suite_id == "DS3b":
        return random_model("Support3b", gen_seed, *spec.params)
    return paper_model(spec.suite_id, *spec.params)


def is_reversible(model: AnmModel) -> bool:
    """Population-level reversibility via the matching exact oracle."""
    if model.x_domain.is_cyclic or model.y_domain.is_cyclic:
        return backward_search(model) is not None
    return theorem1_decomposition(model) is not None


def run_model(spec: SuiteSpec, k: int) -> ModelRecord:
    model_seed = seeding.split(spec.seed, k)
    model = model_for(spec, k)
    sample = sample_model(model, spec.n_samples, seeding.split(model_seed, 2))
    cfg = replace(spec.regression, alpha=spec.alpha, seed=seeding.split(model_seed, 3))
    v = infer_direction(sample, cfg)
    return ModelRecord(
        index=k,
        model_seed=model_seed,
        verdict=v.outcome.value,
        result=_RESULT_OF[v.outcome],
        p_forward=v.forward.p_value,
        p_backward=v.backward.p_value,
        dm_forward=v.forward.dm_evaluations,
        dm_backward=v.backward.dm_evaluations,
        reversible=is_reversible(model),
        example=nonidentifiable_example(model),
        model=model_to_dict(model),
    )


def _run_one(args):
    return run_model(*args)


def run_suite(spec: SuiteSpec, workers: int = 1) -> ExperimentSummary:
    """Simulate, fit and tabulate ``spec.n_models`` models (ground truth X -> Y)."""
    jobs = [(spec, k) for k in range(spec.n_models)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        records = [run_model(*j) for j in jobs]
    records.sort(key=lambda r: r.index)
    counts = {k: 0 for k in RESULT_KEYS}
    for r in records:
        counts[r.result] += 1
    return ExperimentSummary(spec, counts, tuple(records))

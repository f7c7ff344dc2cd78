"""End-to-end acceptance checks, one test per criterion, all at seed 0.

Run alone with ``pytest tests/test_acceptance.py -v -s``; a summary line per
criterion is printed at the end of the session either way.
"""

from __future__ import annotations

import itertools
import math
import random
import statistics
import time
from pathlib import Path

import pytest

from discanm import seeding
from discanm.cli import DataError, abalone_sample, fetch_dataset
from discanm.domain import empirical_joint
from discanm.inference import infer_direction
from discanm.regression import RegressionConfig, fit_anm
from discanm.simulate import SuiteSpec, paper_model, run_suite, sample_model
from discanm.stats import ContingencyTable, chi_square_test, fisher_exact_mc
from discanm.theory import backward_search, load_model, theorem1_decomposition
from test_stats import exact_pearson, fisher_2x2_exact, mp_chi2_sf
from test_theory import constructed_reversible_model, random_integer_model

SEED = 0
FIXTURES = Path(__file__).parent / "fixtures"


def test_criterion_1_integer_models(record_criterion):
    t0 = time.perf_counter()
    s = run_suite(SuiteSpec("DS1a", n_models=200, n_samples=1000, seed=SEED))
    elapsed = time.perf_counter() - t0
    p = s.proportions
    ok = (p["correct"] >= 0.85 and p["wrong"] <= 0.02 and 0.01 <= p["bad_fit"] <= 0.10
          and elapsed <= 600)
    record_criterion(1, ok, f"correct {p['correct']:.1%} wrong {p['wrong']:.1%} "
                            f"both {p['both_possible']:.1%} bad_fit {p['bad_fit']:.1%} in {elapsed:.0f}s")
    assert p["correct"] >= 0.85
    assert p["wrong"] <= 0.02
    assert 0.01 <= p["bad_fit"] <= 0.10
    assert elapsed <= 600


def test_criterion_2_cyclic_models(record_criterion):
    s = run_suite(SuiteSpec("DS1b", (3, 3), n_models=200, n_samples=2000, seed=SEED))
    p = s.proportions
    both = [r for r in s.records if r.result == "both_possible"]
    unmatched = [r.index for r in both if r.example is None]
    ok = p["correct"] >= 0.90 and p["wrong"] <= 0.01 and not unmatched
    record_criterion(2, ok, f"correct {p['correct']:.1%} wrong {p['wrong']:.1%} "
                            f"both {len(both)} (unmatched {unmatched}) bad_fit {p['bad_fit']:.1%}")
    assert p["correct"] >= 0.90
    assert p["wrong"] <= 0.01
    assert not unmatched, f"both-possible models matching no example: {unmatched}"


def test_criterion_3_ds2a_sweep(record_criterion):
    rates = {}
    for r in (-0.2, -0.1, 0.0, 0.1, 0.2):
        s = run_suite(SuiteSpec("DS2a", (r,), n_models=50, n_samples=400, seed=SEED))
        rates[r] = s.proportions
    ok = (all(rates[r]["correct"] >= 0.80 for r in (-0.2, 0.2))
          and all(p["wrong"] <= 0.05 for p in rates.values()))
    detail = " ".join(f"r={r:+.1f}:{p['correct']:.0%}/{p['wrong']:.0%}" for r, p in rates.items())
    record_criterion(3, ok, f"correct/wrong {detail}")
    for r in (-0.2, 0.2):
        assert rates[r]["correct"] >= 0.80
    for p in rates.values():
        assert p["wrong"] <= 0.05


def supported_functions(sample) -> int:
    """Number of functions whose graph lies inside the observed (x, y) pairs."""
    joint = empirical_joint(sample)
    return math.prod(int((row > 0).sum()) for row in joint.weights)


def test_criterion_4_ds3a_efficiency(record_criterion):
    model = paper_model("DS3a", "N1", 9)
    evals, sizes, recovered, exact = [], [], 0, 0
    for k in range(100):
        model_seed = seeding.split(SEED, k)
        sample = sample_model(model, 1000, seeding.split(model_seed, 2))
        fit = fit_anm(sample, RegressionConfig(seed=seeding.split(model_seed, 3)))
        evals.append(fit.dm_evaluations)
        sizes.append(supported_functions(sample))
        # N1 has tied modes at -1, 0, 1, so canonicalization may shift f by a constant.
        shifts = {fit.f(x) - model.f(x) for x in model.x_support}
        recovered += len(shifts) == 1
        exact += shifts == {0}
    med, space = statistics.median(evals), statistics.median(sizes)
    ok = med <= 1000 and space >= 1e6 and recovered >= 95
    record_criterion(4, ok, f"median dm_evaluations {med:.0f} (min {min(evals)}, max {max(evals)}) "
                            f"vs median {space:.2e} supported functions; recovered {recovered}/100 "
                            f"up to a constant ({exact} with zero shift)")
    assert med <= 1000
    assert space >= 1e6
    assert recovered >= 95


def test_criterion_5_ds3b_asymmetry(record_criterion):
    out = {}
    for dims in ((2, 10), (10, 2)):
        out[dims] = run_suite(SuiteSpec("DS3b", dims, n_models=100, n_samples=500, seed=SEED)).proportions
    ok = all(p["wrong"] == 0 for p in out.values())
    detail = " ".join(f"{d}: correct {p['correct']:.0%} wrong {p['wrong']:.0%}" for d, p in out.items())
    record_criterion(5, ok, detail)
    for p in out.values():
        assert p["wrong"] == 0


def test_criterion_6_decomposition_oracle(record_criterion):
    t0 = time.perf_counter()
    rng = random.Random(SEED)
    models = [random_integer_model(rng) for _ in range(70)]
    models += [constructed_reversible_model(rng, perturb=k % 3 == 0) for k in range(30)]
    mismatches = reversible = 0
    for m in models:
        a = theorem1_decomposition(m) is not None
        b = backward_search(m) is not None
        mismatches += a != b
        reversible += a
    shifted, ramp = load_model(FIXTURES / "shifted_classes_reversible.json"), load_model(FIXTURES / "ramp_identifiable.json")
    shifted_ok = theorem1_decomposition(shifted) is not None and backward_search(shifted) is not None
    ramp_ok = theorem1_decomposition(ramp) is None and backward_search(ramp) is None
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and shifted_ok and ramp_ok and elapsed <= 120
    record_criterion(6, ok, f"{mismatches} mismatches on {len(models)} models ({reversible} reversible); "
                            f"shifted-classes fixture reversible {shifted_ok}, ramp fixture not {ramp_ok}; {elapsed:.1f}s")
    assert mismatches == 0
    assert shifted_ok and ramp_ok
    assert elapsed <= 120


FIXED_TABLES = [
    [[10, 20], [20, 10]],
    [[12, 5, 9], [7, 14, 3]],
    [[30, 10, 5, 2], [8, 22, 13, 9], [4, 6, 19, 25]],
    [[100, 1], [1, 100]],
    [[6, 6], [6, 6]],
    [[50, 0, 7], [3, 41, 0], [0, 2, 60]],
]


def all_2x2_tables(max_total: int):
    for a, b, c, d in itertools.product(range(max_total + 1), repeat=4):
        if a + b + c + d <= max_total and a + b and c + d and a + c and b + d:
            yield a, b, c, d


def test_criterion_7_statistics(record_criterion):
    chi_fail = []
    for m in FIXED_TABLES:
        r = chi_square_test(ContingencyTable.from_counts(m))
        exact = exact_pearson(m)
        want_p = mp_chi2_sf(exact, r.dof)
        if abs(r.statistic - float(exact)) > 1e-10 or abs(r.p_value - want_p) > 1e-8:
            chi_fail.append(m)
    n_perm = 10_000
    outside, floor_bound, small_p = [], 0, 0
    tables = list(all_2x2_tables(20))
    cache: dict[tuple, float] = {}
    for k, (a, b, c, d) in enumerate(tables):
        # The exact p is invariant under row/column swaps and transposition.
        key = min([(a, b, c, d), (d, c, b, a), (b, a, d, c), (c, d, a, b),
                   (a, c, b, d), (d, b, c, a), (b, d, a, c), (c, a, d, b)])
        if key not in cache:
            cache[key] = fisher_2x2_exact(a, b, c, d)
        exact = cache[key]
        got = fisher_exact_mc(ContingencyTable.from_counts([[a, b], [c, d]]), n_perm,
                              seed=seeding.split(SEED, k)).p_value
        if abs(got - exact) > 3 * math.sqrt(exact * (1 - exact) / n_perm):
            outside.append((a, b, c, d))
            # (1 + k) / (n + 1) cannot go below 1/(n + 1).
            floor_bound += 1 / (n_perm + 1) - exact > 3 * math.sqrt(exact * (1 - exact) / n_perm)
            # Its +1 bias of about 1/(n + 1) is several SEs whenever p is near 1e-3 or below.
            small_p += exact <= 1e-3
    ok = not chi_fail and not outside
    record_criterion(7, ok, f"chi-square {len(FIXED_TABLES) - len(chi_fail)}/{len(FIXED_TABLES)} tables match; "
                            f"Fisher MC outside 3 SE on {len(outside)}/{len(tables)} tables "
                            f"({floor_bound} below the 1/(n_perm+1) floor, {small_p} with exact p <= 1e-3, "
                            f"{len(outside) - small_p} at larger p)")
    assert not chi_fail
    assert not outside, f"{len(outside)} tables outside 3 SE, e.g. {outside[:5]}"


def abalone_path():
    try:
        return fetch_dataset("abalone", timeout=20)
    except DataError as e:
        return e


@pytest.mark.network
def test_criterion_8_abalone(record_criterion):
    path = abalone_path()
    if isinstance(path, DataError):
        record_criterion(8, "SKIP", f"dataset unavailable offline ({path})")
        pytest.skip(f"abalone data unavailable: {path}")
    cfg = RegressionConfig(seed=SEED, fisher_fallback=False)
    res = {}
    for col in ("length", "diameter", "height"):
        v = infer_direction(abalone_sample(path, col), cfg)
        res[col] = (v.outcome.value, v.forward.p_value, v.backward.p_value)
    ok = (all(o == "X->Y" and pb <= 1e-10 for o, _, pb in res.values())
          and all(res[c][1] > 0.04 for c in ("length", "diameter")))
    record_criterion(8, ok, " ".join(f"{c}: {o} p_fwd {pf:.3g} p_bwd {pb:.3g}" for c, (o, pf, pb) in res.items()))
    for o, _, pb in res.values():
        assert o == "X->Y"
        assert pb <= 1e-10
    for c in ("length", "diameter"):
        assert res[c][1] > 0.04


def test_fisher_floor_is_the_formula_limit():
    # The smallest attainable MC p-value; used in the criterion 7 breakdown.
    t = ContingencyTable.from_counts([[0, 9], [11, 0]])
    assert fisher_exact_mc(t, 10_000, seed=1).p_value == pytest.approx(1 / 10_001)
    assert fisher_2x2_exact(0, 9, 11, 0) < 1e-5

from __future__ import annotations

import itertools
import json
import random
from fractions import Fraction as F
from pathlib import Path

import pytest

from discanm.domain import FunctionTable, NoisePmf, ValueDomain
from discanm.simulate import paper_model
from discanm.theory import (
    AnmModel,
    backward_search,
    divisibility_check,
    load_model,
    model_from_dict,
    model_to_dict,
    nonidentifiable_example,
    theorem1_decomposition,
    verify_backward,
)

FIXTURES = Path(__file__).parent / "fixtures"


def brute_force_reversible(model: AnmModel) -> bool:
    """Try every g: supp Y -> supp X and test X - g(Y) independent of Y exactly."""
    joint = model.joint_dict()
    xs = model.x_support
    ys = sorted({y for _, y in joint})
    dom = model.x_domain
    q = {y: sum(m for (_, yy), m in joint.items() if yy == y) for y in ys}
    for g in itertools.product(xs, repeat=len(ys)):
        gm = dict(zip(ys, g))
        resid: dict[tuple[int, int], F] = {}
        for (x, y), m in joint.items():
            key = (int(dom.normalize(x - gm[y])), y)
            resid[key] = resid.get(key, 0) + m
        offsets = {r for r, _ in resid}
        marg = {r: sum(resid.get((r, y), 0) for y in ys) for r in offsets}
        if all(resid.get((r, y), 0) == marg[r] * q[y] for r in offsets for y in ys):
            return True
    return False


def random_pmf(rng: random.Random, k: int) -> list[F]:
    w = [rng.randint(1, 9) for _ in range(k)]
    return [F(v, sum(w)) for v in w]


def random_integer_model(rng: random.Random) -> AnmModel:
    nx = rng.randint(1, 5)
    xs = sorted(rng.sample(range(0, 8), nx))
    ns = rng.randint(1, 3)
    offsets = sorted(rng.sample(range(-2, 3), ns))
    while True:
        f = {x: rng.randint(0, 4) for x in xs}
        ys = {f[x] + o for x in xs for o in offsets}
        if len(ys) <= 6:
            break
    return AnmModel(dict(zip(xs, random_pmf(rng, nx))), FunctionTable(f),
                    NoisePmf(tuple(offsets), tuple(random_pmf(rng, ns))))


def constructed_reversible_model(rng: random.Random, perturb: bool = False) -> AnmModel:
    """Shifted classes with rescaled masses and separated noise bands."""
    size = rng.randint(1, 2)
    base = sorted(rng.sample(range(0, 3), size))
    n_cls = rng.randint(1, 2) if size == 2 else rng.randint(1, 3)
    shifts = [0] + sorted(rng.sample(range(3, 7), n_cls - 1))
    ns = rng.randint(1, 2)
    offsets = sorted(rng.sample(range(-1, 2), ns))
    width = max(offsets) - min(offsets) + 1
    levels = [0]
    for _ in range(n_cls - 1):
        levels.append(levels[-1] + width + rng.randint(0, 2))
    rng.shuffle(levels)
    within = random_pmf(rng, size)
    cls_mass = random_pmf(rng, n_cls)
    p, f = {}, {}
    for d, lvl, cm in zip(shifts, levels, cls_mass):
        for x, w in zip(base, within):
            p[x + d] = cm * w
            f[x + d] = lvl
    if perturb and size == 2 and n_cls >= 2:
        x0, x1 = base[0] + shifts[1], base[1] + shifts[1]
        eps = min(p[x0], p[x1]) / 3
        p[x0] += eps
        p[x1] -= eps
    return AnmModel(p, FunctionTable(f), NoisePmf(tuple(offsets), tuple(random_pmf(rng, ns))))


def oracle_models(n_random=70, n_constructed=40):
    rng = random.Random(20240)
    out = [random_integer_model(rng) for _ in range(n_random)]
    out += [constructed_reversible_model(rng, perturb=k % 3 == 0) for k in range(n_constructed)]
    return out


def test_shifted_classes_fixture_reversible():
    model = load_model(FIXTURES / "shifted_classes_reversible.json")
    dec = theorem1_decomposition(model)
    assert dec is not None and len(dec.classes) == 2
    assert dec.shifts == (0, 1)
    assert backward_search(model) is not None
    assert divisibility_check(model)


def test_ramp_fixture_not_reversible():
    model = load_model(FIXTURES / "ramp_identifiable.json")
    assert backward_search(model) is None
    assert theorem1_decomposition(model) is None


def test_ds2a_reversible_only_at_zero():
    assert theorem1_decomposition(paper_model("DS2a", 0)) is not None
    assert backward_search(paper_model("DS2a", 0)) is not None
    for r in (-0.2, -0.1, 0.1, 0.2):
        assert theorem1_decomposition(paper_model("DS2a", r)) is None
        assert backward_search(paper_model("DS2a", r)) is None


def test_decomposition_matches_brute_force():
    models = oracle_models()
    assert len(models) >= 100
    reversible = 0
    for m in models:
        a = theorem1_decomposition(m) is not None
        b = backward_search(m) is not None
        assert a == b == brute_force_reversible(m), model_to_dict(m)
        reversible += a
    # The constructed half must actually exercise the positive branch.
    assert reversible >= 20


def test_backward_models_verify_and_divide():
    for m in oracle_models():
        bm = backward_search(m)
        if bm is not None:
            assert verify_backward(m, bm)
            assert bm.noise_tilde.is_canonical
            assert divisibility_check(m)


def test_example_1ii_uniform_noise():
    d = ValueDomain.cyclic(3)
    model = AnmModel({0: F(1, 2), 1: F(1, 3), 2: F(1, 6)}, FunctionTable({0: 0, 1: 2, 2: 2}, d),
                     NoisePmf((0, 1, 2), (F(1, 3),) * 3, d), d, d)
    bm = backward_search(model)
    assert bm is not None and verify_backward(model, bm)
    assert nonidentifiable_example(model) == "1(ii)"


def test_example_1i_constant_f():
    model = AnmModel({0: F(1, 5), 2: F(3, 5), 5: F(1, 5)}, FunctionTable({0: 4, 2: 4, 5: 4}),
                     NoisePmf.from_mapping({0: F(1, 2), 1: F(1, 4), 3: F(1, 4)}))
    bm = backward_search(model)
    assert bm is not None
    assert len(set(bm.g.as_dict().values())) == 1
    assert nonidentifiable_example(model) == "1(i)"


def test_point_mass_regressor():
    model = AnmModel({3: F(1)}, FunctionTable({3: 1}), NoisePmf.from_mapping({0: F(2, 3), 1: F(1, 3)}))
    bm = backward_search(model)
    assert bm is not None
    assert set(bm.g.as_dict().values()) == {3}
    assert bm.noise_tilde.as_dict() == {0: 1}


@pytest.mark.parametrize("m,a,b", [(3, 2, 1), (4, 3, 0), (5, 2, 3), (7, 3, 6)])
def test_example_2_bijective_affine(m, a, b):
    d = ValueDomain.cyclic(m)
    f = FunctionTable({x: (a * x + b) % m for x in range(m)}, d)
    noise = NoisePmf(tuple(range(m)), tuple(F(k + 1, m * (m + 1) // 2) for k in range(m)), d)
    model = AnmModel({x: F(1, m) for x in range(m)}, f, noise, d, d)
    bm = backward_search(model)
    assert bm is not None and verify_backward(model, bm)
    # g is f^-1 up to the canonical shift of the backward noise.
    inv = {f(x): x for x in range(m)}
    shifts = {(bm.g(y) - inv[y]) % m for y in range(m)}
    assert len(shifts) == 1
    assert nonidentifiable_example(model) == "2"


def test_generic_cyclic_model_not_reversible():
    d = ValueDomain.cyclic(3)
    model = AnmModel({0: F(1, 2), 1: F(1, 3), 2: F(1, 6)}, FunctionTable({0: 0, 1: 2, 2: 2}, d),
                     NoisePmf((0, 1, 2), (F(1, 2), F(3, 10), F(1, 5)), d), d, d)
    assert backward_search(model) is None
    assert nonidentifiable_example(model) is None


def test_divisibility_examples():
    model = AnmModel({0: F(1, 3), 1: F(1, 3), 2: F(1, 3)}, FunctionTable({0: 0, 1: 1, 2: 2}),
                     NoisePmf.from_mapping({0: F(1, 2), 1: F(1, 2)}))
    assert len(model.y_support) == 4
    assert not divisibility_check(model)
    d = ValueDomain.cyclic(3)
    full = AnmModel({0: F(1, 3), 1: F(1, 3), 2: F(1, 3)}, FunctionTable({0: 0, 1: 1, 2: 0}, d),
                    NoisePmf((0, 1, 2), (F(1, 2), F(1, 4), F(1, 4)), d), d, d)
    assert divisibility_check(full)


def test_float_models_use_tolerance():
    model = paper_model("DS2a", 0)
    as_float = model_from_dict(json.loads(json.dumps(
        {**model_to_dict(model),
         "p_x": {k: float(F(v)) for k, v in model_to_dict(model)["p_x"].items()},
         "noise": {k: float(F(v)) for k, v in model_to_dict(model)["noise"].items()}})))
    assert backward_search(as_float) is not None
    assert theorem1_decomposition(as_float) is not None


def test_enumeration_cap():
    model = load_model(FIXTURES / "ramp_identifiable.json")
    with pytest.raises(ValueError, match="enumeration too large"):
        backward_search(model, cap=2)


def test_decomposition_requires_integer_domains():
    d = ValueDomain.cyclic(3)
    model = AnmModel({0: F(1)}, FunctionTable({0: 0}, d), NoisePmf((0,), (F(1),), d), d, d)
    with pytest.raises(ValueError):
        theorem1_decomposition(model)


def test_fixture_round_trip(tmp_path):
    model = load_model(FIXTURES / "shifted_classes_reversible.json")
    path = tmp_path / "m.json"
    path.write_text(json.dumps(model_to_dict(model)))
    again = load_model(path)
    assert again.joint_dict() == model.joint_dict()


def test_model_validation():
    with pytest.raises(ValueError):
        AnmModel({0: F(1, 2)}, FunctionTable({0: 0}), NoisePmf((0,), (F(1),)))
    with pytest.raises(KeyError):
        AnmModel({0: F(1, 2), 1: F(1, 2)}, FunctionTable({0: 0}), NoisePmf((0,), (F(1),)))

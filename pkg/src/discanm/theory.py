"""Population-level reversibility checks on exact additive noise models.

``backward_search`` decides by brute force whether a joint distribution
generated by ``Y = f(X) + N`` also admits ``X = g(Y) + M`` with ``M``
independent of ``Y``. ``theorem1_decomposition`` decides the same question
for finite integer models through the shifted-class characterization, so
the two can be cross-checked. Masses may be Fractions (exact comparisons)
or floats (compared with an absolute tolerance of 1e-10).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .domain import FunctionTable, JointPmf, NoisePmf, ValueDomain, mode_offset

FLOAT_TOL = 1e-10
DEFAULT_CAP = 10**7


def _eq(a, b) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(float(a) - float(b)) <= FLOAT_TOL


def _positive(a) -> bool:
    return a > 0 if isinstance(a, Fraction) else float(a) > FLOAT_TOL


@dataclass(frozen=True)
class AnmModel:
    """Y = f(X) + N with N independent of X.

    ``p_x`` is the (possibly truncated) regressor pmf used for exact
    computations. ``x_law`` optionally names an untruncated sampling law,
    e.g. ``("poisson", {"mu": 2.0})``, which samplers prefer over ``p_x``.
    """

    p_x: Mapping[int, object]
    f: FunctionTable
    noise: NoisePmf
    x_domain: ValueDomain = field(default_factory=ValueDomain.integer)
    y_domain: ValueDomain = field(default_factory=ValueDomain.integer)
    x_law: tuple | None = None
    truncated: bool = False

    def __post_init__(self):
        px = {int(self.x_domain.normalize(int(k))): v for k, v in dict(self.p_x).items()}
        object.__setattr__(self, "p_x", dict(sorted(px.items())))
        for x in self.x_support:
            self.f(x)
        if self.noise.domain != self.y_domain:
            raise ValueError("noise must live in the domain of Y")
        if self.f.codomain != self.y_domain:
            raise ValueError("f must map into the domain of Y")
        tol = 1e-12 if not self.truncated else 1e-5
        for name, masses in (("p_x", list(self.p_x.values())), ("noise", list(self.noise.mass))):
            s = sum(masses)
            ok = s == 1 if all(isinstance(m, Fraction) for m in masses) else abs(float(s) - 1) <= tol
            if not ok:
                raise ValueError(f"{name} masses sum to {s}, not 1")

    @property
    def x_support(self) -> tuple[int, ...]:
        return tuple(x for x, p in self.p_x.items() if _positive(p))

    @property
    def noise_support(self) -> tuple[int, ...]:
        return tuple(o for o, m in zip(self.noise.offsets, self.noise.mass) if _positive(m))

    def joint_dict(self) -> dict[tuple[int, int], object]:
        out: dict[tuple[int, int], object] = {}
        for x in self.x_support:
            for o in self.noise_support:
                y = int(self.y_domain.normalize(self.f(x) + o))
                m = self.p_x[x] * self.noise(o)
                out[(x, y)] = out.get((x, y), 0) + m
        return out

    def joint(self) -> JointPmf:
        d = self.joint_dict()
        xs = sorted({x for x, _ in d})
        ys = sorted({y for _, y in d})
        exact = all(isinstance(v, Fraction) for v in d.values())
        w = np.zeros((len(xs), len(ys)), dtype=object if exact else float)
        if exact:
            w[:] = Fraction(0)
        for (x, y), m in d.items():
            w[xs.index(x), ys.index(y)] = m
        total = sum(w.ravel().tolist())
        return JointPmf(tuple(xs), tuple(ys), w, total, self.x_domain, self.y_domain)

    @property
    def y_support(self) -> tuple[int, ...]:
        q: dict[int, object] = {}
        for (_, y), m in self.joint_dict().items():
            q[y] = q.get(y, 0) + m
        return tuple(sorted(y for y, m in q.items() if _positive(m)))


@dataclass(frozen=True)
class BackwardModel:
    g: FunctionTable
    noise_tilde: NoisePmf


@dataclass(frozen=True)
class Decomposition:
    classes: tuple[tuple[int, ...], ...]
    shifts: tuple[int, ...]
    levels: tuple[int, ...]


def _conditionals(model: AnmModel):
    joint = model.joint_dict()
    q: dict[int, object] = {}
    for (x, y), m in joint.items():
        if _positive(m):
            q[y] = q.get(y, 0) + m
    cond: dict[int, dict[int, object]] = {y: {} for y in q}
    for (x, y), m in joint.items():
        if _positive(m):
            cond[y][x] = m / q[y]
    return dict(sorted(cond.items())), q


def _shifted(cond: Mapping[int, object], g: int, dom: ValueDomain) -> dict[int, object]:
    return {int(dom.normalize(x - g)): p for x, p in cond.items()}


def _same_dist(a: Mapping[int, object], b: Mapping[int, object]) -> bool:
    if set(a) != set(b):
        return False
    return all(_eq(a[k], b[k]) for k in a)


def backward_search(model: AnmModel, cap: int = DEFAULT_CAP) -> BackwardModel | None:
    """Find g with X - g(Y) independent of Y, or return None.

    Only g(y) in supp(X | Y=y) are tried. This loses nothing: if some g works
    with noise M, then g + j works with noise M - j for every j, and taking
    j as a mode of M puts g(y) + j inside supp(X | Y=y) for every y. Among
    the restricted functions the lexicographically smallest (in order of
    increasing y) is returned, re-centred so that the noise mode is at 0.
    """
    cond, _ = _conditionals(model)
    ys = list(cond)
    space = math.prod(len(c) for c in cond.values())
    if space > cap:
        raise ValueError(f"enumeration too large: {space} candidate functions > cap {cap}")
    dom = model.x_domain
    first = ys[0]
    for g0 in sorted(cond[first]):
        ref = _shifted(cond[first], g0, dom)
        g = {first: g0}
        for y in ys[1:]:
            hit = next((c for c in sorted(cond[y]) if _same_dist(_shifted(cond[y], c, dom), ref)), None)
            if hit is None:
                break
            g[y] = hit
        else:
            noise = NoisePmf.from_mapping(ref, dom)
            j = mode_offset(noise)
            noise = NoisePmf(tuple(o - j for o in noise.offsets), noise.mass, dom)
            return BackwardModel(FunctionTable({y: v + j for y, v in g.items()}, dom), noise)
    return None


def verify_backward(model: AnmModel, bm: BackwardModel) -> bool:
    """Check p(x) n(y - f(x)) == q(y) m(x - g(y)) on the whole support grid."""
    joint = model.joint_dict()
    _, q = _conditionals(model)
    xs = set(model.x_support) | {x for x, _ in joint}
    for y, qy in q.items():
        for x in xs | {int(model.x_domain.normalize(bm.g(y) + o)) for o in bm.noise_tilde.offsets}:
            lhs = joint.get((x, y), 0)
            rhs = qy * bm.noise_tilde(x - bm.g(y))
            if not _eq(lhs, rhs):
                return False
    return True


def theorem1_decomposition(model: AnmModel) -> Decomposition | None:
    """Shifted-class decomposition of supp X certifying reversibility.

    The classes are the level sets of f on supp X; they must be translates
    of the class with the smallest element, carry translated and rescaled
    copies of its mass, and have pairwise disjoint sets ``c_i + supp N``.
    """
    if model.x_domain.is_cyclic or model.y_domain.is_cyclic:
        raise ValueError("the decomposition criterion applies to integer domains only")
    supp = model.x_support
    by_level: dict[int, list[int]] = {}
    for x in supp:
        by_level.setdefault(model.f(x), []).append(x)
    classes = sorted((tuple(sorted(c)), lvl) for lvl, c in by_level.items())
    base, _ = classes[0]
    mass = model.p_x
    base_mass = sum(mass[x] for x in base)
    shifts = []
    for cls, _ in classes:
        d = cls[0] - base[0]
        if tuple(x + d for x in base) != cls:
            return None
        cls_mass = sum(mass[x] for x in cls)
        if not all(_eq(mass[x] * base_mass, mass[x - d] * cls_mass) for x in cls):
            return None
        shifts.append(d)
    noise = model.noise_support
    seen: set[int] = set()
    for _, lvl in classes:
        band = {lvl + h for h in noise}
        if band & seen:
            return None
        seen |= band
    return Decomposition(tuple(c for c, _ in classes), tuple(shifts), tuple(l for _, l in classes))


def divisibility_check(model: AnmModel) -> bool:
    """|supp Y| divides |supp X| * |supp N| (necessary for a backward model)."""
    return (len(model.x_support) * len(model.noise_support)) % len(model.y_support) == 0


# Distances to the exactly non-identifiable families; 0 means an exact instance.

def constant_f_distance(model: AnmModel) -> float:
    """Mass of X that must move for f to be constant on the support."""
    level_mass: dict[int, float] = {}
    for x in model.x_support:
        level_mass[model.f(x)] = level_mass.get(model.f(x), 0.0) + float(model.p_x[x])
    return 1.0 - max(level_mass.values())


def _tv_to_uniform(masses: Mapping[int, object], size: int) -> float:
    return 0.5 * sum(abs(float(masses.get(k, 0)) - 1.0 / size) for k in range(size))


def uniform_noise_distance(model: AnmModel) -> float:
    """Total variation from the noise to the uniform law on Z/mZ."""
    if not model.y_domain.is_cyclic:
        return math.inf
    return _tv_to_uniform(model.noise.as_dict(), model.y_domain.modulus)


def is_bijective_affine(f: FunctionTable, m: int) -> bool:
    if set(f.support) != set(range(m)):
        return False
    b = f(0)
    a = (f(1) - b) % m if m > 1 else 0
    return math.gcd(a, m) == 1 and all(f(x) == (a * x + b) % m for x in range(m))


def affine_uniform_distance(model: AnmModel) -> float:
    """Distance of X from uniform when f is a bijective affine map of Z/mZ."""
    if not (model.x_domain.is_cyclic and model.y_domain.is_cyclic):
        return math.inf
    m = model.x_domain.modulus
    if model.y_domain.modulus != m or not is_bijective_affine(model.f, m):
        return math.inf
    return _tv_to_uniform(model.p_x, m)


def nonidentifiable_example(model: AnmModel, tol: float = 0.05) -> str | None:
    """Name the closest reversible family within ``tol``: '1(i)', '1(ii)' or '2'."""
    dists = {
        "1(i)": constant_f_distance(model),
        "1(ii)": uniform_noise_distance(model),
        "2": affine_uniform_distance(model),
    }
    name, d = min(dists.items(), key=lambda kv: kv[1])
    return name if d <= tol else None


# Fixture text format (JSON):
#   {"x_domain": "integer" | "cyclic:<m>", "y_domain": ...,
#    "p_x": {"<x>": "num/den", ...}, "f": {"<x>": <int>, ...},
#    "noise": {"<offset>": "num/den", ...}}
# Masses may also be decimal strings or JSON numbers (then treated as floats).

def _parse_mass(v):
    if isinstance(v, str):
        return Fraction(v) if "/" in v or "." not in v else float(v)
    if isinstance(v, int):
        return Fraction(v)
    return float(v)


def _fmt_mass(v):
    return str(v) if isinstance(v, Fraction) else float(v)


def model_from_dict(d: Mapping) -> AnmModel:
    xd = ValueDomain.parse(d.get("x_domain", "integer"))
    yd = ValueDomain.parse(d.get("y_domain", "integer"))
    return AnmModel(
        p_x={int(k): _parse_mass(v) for k, v in d["p_x"].items()},
        f=FunctionTable({int(k): int(v) for k, v in d["f"].items()}, yd),
        noise=NoisePmf.from_mapping({int(k): _parse_mass(v) for k, v in d["noise"].items()}, yd),
        x_domain=xd,
        y_domain=yd,
    )


def model_to_dict(model: AnmModel) -> dict:
    return {
        "x_domain": str(model.x_domain),
        "y_domain": str(model.y_domain),
        "p_x": {str(k): _fmt_mass(v) for k, v in model.p_x.items()},
        "f": {str(k): v for k, v in model.f.as_dict().items()},
        "noise": {str(k): _fmt_mass(v) for k, v in model.noise.as_dict().items()},
    }


def load_model(path) -> AnmModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))

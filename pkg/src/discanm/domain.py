"""Value domains, paired samples, pmfs and residual bookkeeping.

Everything here is immutable after construction. Empirical masses are kept
as integer counts plus a total so that sums are exact; floats only appear
when a caller asks for them.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

INTEGER = "integer"
CYCLIC = "cyclic"


@dataclass(frozen=True)
class ValueDomain:
    """Either the integers or the ring Z/mZ."""

    kind: str = INTEGER
    modulus: int | None = None

    def __post_init__(self):
        if self.kind == INTEGER:
            if self.modulus is not None:
                raise ValueError("integer domain takes no modulus")
        elif self.kind == CYCLIC:
            if self.modulus is None or int(self.modulus) < 2:
                raise ValueError("cyclic domain needs a modulus >= 2")
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def integer(cls) -> ValueDomain:
        return cls(INTEGER)

    @classmethod
    def cyclic(cls, modulus: int) -> ValueDomain:
        return cls(CYCLIC, int(modulus))

    @classmethod
    def parse(cls, text: str) -> ValueDomain:
        """Parse ``"integer"`` or ``"cyclic:<m>"``."""
        text = text.strip().lower()
        if text in ("integer", "int", "z"):
            return cls.integer()
        if text.startswith("cyclic:"):
            return cls.cyclic(int(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse domain {text!r}; use 'integer' or 'cyclic:<m>'")

    @property
    def is_cyclic(self) -> bool:
        return self.kind == CYCLIC

    def normalize(self, values):
        """Reduce into [0, m) for cyclic domains; identity otherwise."""
        if not self.is_cyclic:
            return values
        if isinstance(values, np.ndarray):
            return np.mod(values, self.modulus)
        return int(values) % self.modulus

    def __str__(self) -> str:
        return f"cyclic:{self.modulus}" if self.is_cyclic else "integer"


def _frozen_int_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.int64).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PairedSample:
    """Ordered (x, y) observations together with the domain of each coordinate."""

    x: np.ndarray
    y: np.ndarray
    x_domain: ValueDomain = field(default_factory=ValueDomain.integer)
    y_domain: ValueDomain = field(default_factory=ValueDomain.integer)

    def __post_init__(self):
        x = _frozen_int_array(self.x_domain.normalize(np.asarray(self.x, dtype=np.int64)))
        y = _frozen_int_array(self.y_domain.normalize(np.asarray(self.y, dtype=np.int64)))
        if x.size == 0:
            raise ValueError("empty input")
        if x.shape != y.shape:
            raise ValueError("x and y must have the same length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_pairs(
        cls,
        rows: Iterable[tuple[int, int]],
        x_domain: ValueDomain | None = None,
        y_domain: ValueDomain | None = None,
    ) -> PairedSample:
        rows = list(rows)
        if not rows:
            raise ValueError("empty input")
        xs, ys = zip(*rows)
        return cls(
            np.array(xs), np.array(ys),
            x_domain or ValueDomain.integer(), y_domain or ValueDomain.integer(),
        )

    def __len__(self) -> int:
        return int(self.x.size)

    @property
    def rows(self) -> list[tuple[int, int]]:
        return list(zip(self.x.tolist(), self.y.tolist()))

    def swapped(self) -> PairedSample:
        return PairedSample(self.y, self.x, self.y_domain, self.x_domain)

    def head(self, n: int) -> PairedSample:
        if n < 1 or n > len(self):
            raise ValueError(f"prefix size {n} outside [1, {len(self)}]")
        return PairedSample(self.x[:n], self.y[:n], self.x_domain, self.y_domain)


@dataclass(frozen=True)
class JointPmf:
    """Probability mass on a finite (x, y) grid.

    ``weights`` is an integer count matrix for empirical pmfs (``total`` the
    sample size) or an object matrix of Fractions with ``total == 1`` for
    exact ones. Rows follow ``x_values``, columns ``y_values``.
    """

    x_values: tuple[int, ...]
    y_values: tuple[int, ...]
    weights: np.ndarray
    total: int | Fraction
    x_domain: ValueDomain = field(default_factory=ValueDomain.integer)
    y_domain: ValueDomain = field(default_factory=ValueDomain.integer)

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.shape != (len(self.x_values), len(self.y_values)):
            raise ValueError("weight matrix does not match the value grids")
        if sum(w.ravel().tolist()) != self.total:
            raise ValueError("weights do not sum to the total")

    def mass(self, x: int, y: int) -> Fraction:
        try:
            i = self.x_values.index(x)
            j = self.y_values.index(y)
        except ValueError:
            return Fraction(0)
        return Fraction(self.weights[i, j]) / Fraction(self.total)

    def mass_matrix(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float) / float(self.total)

    def as_dict(self) -> dict[tuple[int, int], Fraction]:
        out = {}
        for i, x in enumerate(self.x_values):
            for j, y in enumerate(self.y_values):
                if self.weights[i, j] != 0:
                    out[(x, y)] = Fraction(self.weights[i, j]) / Fraction(self.total)
        return out

    def p_x(self) -> dict[int, Fraction]:
        return {x: Fraction(sum(self.weights[i].tolist())) / Fraction(self.total)
                for i, x in enumerate(self.x_values)}

    def q_y(self) -> dict[int, Fraction]:
        return {y: Fraction(sum(self.weights[:, j].tolist())) / Fraction(self.total)
                for j, y in enumerate(self.y_values)}

    @property
    def x_support(self) -> tuple[int, ...]:
        return tuple(x for x, p in self.p_x().items() if p > 0)

    @property
    def y_support(self) -> tuple[int, ...]:
        return tuple(y for y, q in self.q_y().items() if q > 0)


def empirical_joint(sample: PairedSample) -> JointPmf:
    """Sample distribution: counts over observed values divided by N."""
    if len(sample) == 0:
        raise ValueError("empty input")
    xs, xi = np.unique(sample.x, return_inverse=True)
    ys, yi = np.unique(sample.y, return_inverse=True)
    counts = np.zeros((xs.size, ys.size), dtype=np.int64)
    np.add.at(counts, (xi, yi), 1)
    return JointPmf(
        tuple(xs.tolist()), tuple(ys.tolist()), counts, len(sample),
        sample.x_domain, sample.y_domain,
    )


@dataclass(frozen=True)
class NoisePmf:
    """Distribution of an additive noise term, keyed by offset."""

    offsets: tuple[int, ...]
    mass: tuple
    domain: ValueDomain = field(default_factory=ValueDomain.integer)

    def __post_init__(self):
        offsets = tuple(int(self.domain.normalize(o)) for o in self.offsets)
        if len(set(offsets)) != len(offsets):
            raise ValueError("noise offsets must be distinct")
        if len(offsets) != len(self.mass):
            raise ValueError("offsets and masses differ in length")
        if any(m < 0 for m in self.mass):
            raise ValueError("negative noise mass")
        order = sorted(range(len(offsets)), key=offsets.__getitem__)
        object.__setattr__(self, "offsets", tuple(offsets[k] for k in order))
        object.__setattr__(self, "mass", tuple(self.mass[k] for k in order))

    @classmethod
    def from_mapping(cls, masses: Mapping[int, object], domain: ValueDomain | None = None) -> NoisePmf:
        items = sorted(masses.items())
        return cls(tuple(k for k, _ in items), tuple(v for _, v in items), domain or ValueDomain.integer())

    def as_dict(self) -> dict[int, object]:
        return dict(zip(self.offsets, self.mass))

    def __call__(self, offset: int):
        return self.as_dict().get(int(self.domain.normalize(offset)), 0)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(o for o, m in zip(self.offsets, self.mass) if m > 0)

    @property
    def is_canonical(self) -> bool:
        return self(0) >= max(self.mass)


@dataclass(frozen=True)
class FunctionTable:
    """A finite map x -> f(x) with the codomain it lives in."""

    entries: Mapping[int, int]
    codomain: ValueDomain = field(default_factory=ValueDomain.integer)

    def __post_init__(self):
        clean = {int(k): int(self.codomain.normalize(int(v))) for k, v in dict(self.entries).items()}
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(clean.items()))))

    def __call__(self, x: int) -> int:
        try:
            return self.entries[int(x)]
        except KeyError:
            raise KeyError(f"function undefined at x={x}") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, FunctionTable):
            return NotImplemented
        return dict(self.entries) == dict(other.entries) and self.codomain == other.codomain

    def __hash__(self) -> int:
        return hash((tuple(self.entries.items()), self.codomain))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self.entries)

    def shifted(self, j: int) -> FunctionTable:
        return FunctionTable({x: v + j for x, v in self.entries.items()}, self.codomain)

    def as_dict(self) -> dict[int, int]:
        return dict(self.entries)


def residuals(sample: PairedSample, f: FunctionTable) -> np.ndarray:
    """y - f(x) per row, reduced mod m when the codomain is cyclic."""
    keys = np.fromiter(f.entries.keys(), dtype=np.int64, count=len(f.entries))
    vals = np.fromiter(f.entries.values(), dtype=np.int64, count=len(f.entries))
    pos = np.searchsorted(keys, sample.x)
    pos_ok = np.minimum(pos, max(keys.size - 1, 0))
    missing = (pos >= keys.size) | (keys[pos_ok] != sample.x) if keys.size else np.ones(len(sample), bool)
    if missing.any():
        bad = int(sample.x[np.argmax(missing)])
        raise KeyError(f"function undefined at x={bad}")
    r = sample.y - vals[pos_ok]
    if f.codomain.is_cyclic:
        r = np.mod(r, f.codomain.modulus)
    return r


def noise_pmf_from_residuals(res: Sequence[int], domain: ValueDomain) -> NoisePmf:
    """Exact empirical pmf (count/N as Fractions) of a residual vector."""
    res = [int(domain.normalize(int(r))) for r in res]
    if not res:
        raise ValueError("empty input")
    n = len(res)
    counts = Counter(res)
    return NoisePmf.from_mapping({k: Fraction(c, n) for k, c in counts.items()}, domain)


def _signed(offset: int, domain: ValueDomain) -> int:
    if domain.is_cyclic and offset > domain.modulus // 2:
        return offset - domain.modulus
    return offset


def mode_offset(noise: NoisePmf) -> int:
    """Most probable offset; ties go to the smallest |j|, then to positive j.

    For cyclic noise |j| is the distance to 0 around the ring.
    """
    best = max(noise.mass)
    tied = [o for o, m in zip(noise.offsets, noise.mass) if m == best]
    signed = [_signed(o, noise.domain) for o in tied]
    pick = min(signed, key=lambda s: (abs(s), s < 0))
    return int(noise.domain.normalize(pick))


def canonicalize(f: FunctionTable, residual_pmf: NoisePmf) -> tuple[FunctionTable, NoisePmf]:
    """Shift f by the residual mode so the noise puts its largest mass at 0."""
    j = mode_offset(residual_pmf)
    if j == 0:
        return f, residual_pmf
    shifted = NoisePmf(
        tuple(o - j for o in residual_pmf.offsets), residual_pmf.mass, residual_pmf.domain
    )
    return f.shifted(j), shifted

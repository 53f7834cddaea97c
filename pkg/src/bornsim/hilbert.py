"""Replicated product states in the permutation-symmetric count basis.

Every operator handled by this package is diagonal in the product basis and
the squared coefficient of a product basis vector depends only on how many
factors sit in each outcome.  States are therefore stored as count classes
``(n_1, ..., n_m)`` with multinomial masses instead of ``m**N`` amplitudes.

Probabilities are kept as exact :class:`fractions.Fraction` values.  Class
masses are exact rationals up to :data:`RATIONAL_MAX_N` replicas and are
evaluated in log-domain floating point beyond that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Complex, Rational, Real
from typing import Iterator, Sequence

from .errors import CapacityError, DomainError, NormalizationError

NORMALIZATION_TOL = 1e-12
ENUMERATION_CAP = 10**8
RATIONAL_MAX_N = 2000


def as_fraction(x) -> Fraction:
    """Convert a real scalar to an exact Fraction.

    Floats go through their shortest round-trip decimal, so ``0.2`` becomes
    ``1/5`` rather than the nearest binary double.  Strings accept anything
    :class:`Fraction` parses (``"1/3"``, ``"0.25"``, ``"1e-3"``).
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not probabilities")
    if isinstance(x, Rational):
        return Fraction(int(x.numerator), int(x.denominator))
    if isinstance(x, float):
        if not math.isfinite(x):
            raise DomainError(f"non-finite value {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, Real):
        return as_fraction(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Fraction")


def _modulus_squared(a) -> Fraction:
    # exact |a|^2 of the number actually stored (binary value for floats)
    if isinstance(a, (Fraction, int)) and not isinstance(a, bool):
        return Fraction(a) ** 2
    if isinstance(a, Rational):
        return Fraction(int(a.numerator), int(a.denominator)) ** 2
    if isinstance(a, Complex):
        z = complex(a)
        return Fraction(z.real) ** 2 + Fraction(z.imag) ** 2
    raise TypeError(f"unsupported amplitude type {type(a).__name__}")


def _normalize(probs: Sequence[Fraction], tol: float) -> tuple[Fraction, ...]:
    total = sum(probs, Fraction(0))
    if any(p < 0 for p in probs):
        raise NormalizationError("probabilities must be non-negative")
    if abs(float(total) - 1.0) > tol:
        raise NormalizationError(f"probabilities sum to {float(total)!r}, not 1")
    if total == 1:
        return tuple(probs)
    return tuple(p / total for p in probs)


@dataclass(frozen=True)
class OutcomeSpec:
    """Single-system state ``sum_i alpha_i |i>`` over ``m`` outcomes.

    ``probs`` holds the Born weights ``|alpha_i|**2`` as exact fractions that
    sum to exactly one.  Build instances with :meth:`from_amplitudes`,
    :meth:`from_probs` or :meth:`binary`.
    """

    amplitudes: tuple[complex, ...]
    probs: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.probs) < 2:
            raise DomainError("an outcome spec needs m >= 2 outcomes")
        if len(self.amplitudes) != len(self.probs):
            raise DomainError("amplitudes and probs differ in length")
        if sum(self.probs, Fraction(0)) != 1:
            raise NormalizationError("probs must sum to exactly 1")

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence, tol: float = NORMALIZATION_TOL) -> "OutcomeSpec":
        amps = tuple(amplitudes)
        probs = _normalize([_modulus_squared(a) for a in amps], tol)
        return cls(tuple(complex(a) for a in amps), probs)

    @classmethod
    def from_probs(cls, probs: Sequence, tol: float = NORMALIZATION_TOL) -> "OutcomeSpec":
        exact = _normalize([as_fraction(p) for p in probs], tol)
        amps = tuple(complex(math.sqrt(p)) for p in exact)
        return cls(amps, exact)

    @classmethod
    def binary(cls, p) -> "OutcomeSpec":
        """Two-outcome spec whose second ("up") outcome has probability ``p``."""
        p = as_fraction(p)
        if not 0 <= p <= 1:
            raise DomainError(f"p={p} outside [0, 1]")
        return cls.from_probs([1 - p, p])

    @property
    def m(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class ReplicaSpec:
    """``n`` identical copies of ``outcome_spec``."""

    outcome_spec: OutcomeSpec
    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise DomainError(f"replica count must be a positive integer, got {self.n!r}")

    @property
    def m(self) -> int:
        return self.outcome_spec.m

    @property
    def probs(self) -> tuple[Fraction, ...]:
        return self.outcome_spec.probs


class CountVector(tuple):
    """Occupation numbers ``(n_1, ..., n_m)`` of one permutation class."""

    __slots__ = ()

    def __new__(cls, counts):
        counts = tuple(counts)
        if any(isinstance(c, bool) or not isinstance(c, int) or c < 0 for c in counts):
            raise DomainError(f"counts must be non-negative integers: {counts}")
        return super().__new__(cls, counts)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(self)

    @property
    def n(self) -> int:
        return sum(self)


@dataclass(frozen=True)
class ClassWeight:
    count_vector: CountVector
    multiplicity: int
    weight: Fraction


def probabilities(spec: OutcomeSpec) -> tuple[Fraction, ...]:
    """Born probabilities ``|alpha_i|**2``; phases drop out."""
    return spec.probs


def multinomial(counts: Sequence[int]) -> int:
    """Multinomial coefficient ``N! / (n_1! ... n_m!)``."""
    total = 0
    result = 1
    for c in counts:
        total += c
        result *= math.comb(total, c)
    return result


def _check_counts(spec: ReplicaSpec, cv: Sequence[int]) -> CountVector:
    cv = cv if isinstance(cv, CountVector) else CountVector(cv)
    if len(cv) != spec.m:
        raise DomainError(f"count vector has {len(cv)} entries, spec has m={spec.m}")
    if cv.n != spec.n:
        raise DomainError(f"counts sum to {cv.n}, expected N={spec.n}")
    return cv


def class_weight(spec: ReplicaSpec, cv: Sequence[int]) -> ClassWeight:
    cv = _check_counts(spec, cv)
    mult = multinomial(cv)
    weight = Fraction(mult)
    for p, c in zip(spec.probs, cv):
        weight *= p**c
    return ClassWeight(cv, mult, weight)


def class_count(n: int, m: int) -> int:
    """Number of count classes, ``binom(n + m - 1, m - 1)``."""
    return math.comb(n + m - 1, m - 1)


def _compositions(n: int, m: int) -> Iterator[tuple[int, ...]]:
    if m == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, m - 1):
            yield (first,) + rest


def enumerate_classes(spec: ReplicaSpec, cap: int = ENUMERATION_CAP) -> Iterator[CountVector]:
    """Yield every count vector once, in ascending lexicographic order.

    Raises :class:`CapacityError` eagerly (before the first item) when the
    number of classes exceeds ``cap``.
    """
    total = class_count(spec.n, spec.m)
    if total > cap:
        raise CapacityError(
            f"{total} count classes exceed the enumeration cap {cap}; "
            "use the Hoeffding/Gaussian bounds or the log-domain paths"
        )
    return (CountVector(c) for c in _compositions(spec.n, spec.m))


def frequency_eigenvalue(cv: Sequence[int]) -> tuple[Fraction, ...]:
    cv = cv if isinstance(cv, CountVector) else CountVector(cv)
    n = cv.n
    if n == 0:
        raise DomainError("empty count vector has no frequency")
    return tuple(Fraction(c, n) for c in cv)


class ExactMasses:
    """Integer numerators of class masses over a shared denominator.

    With ``p_i = a_i / D`` every class mass is ``numerator(cv) / D**N``;
    summing numerators avoids a gcd per term.
    """

    def __init__(self, spec: ReplicaSpec):
        self.n = spec.n
        denom = 1
        for p in spec.probs:
            denom = math.lcm(denom, p.denominator)
        self.base = denom
        self.nums = tuple(p.numerator * (denom // p.denominator) for p in spec.probs)
        self.denominator = denom**spec.n
        self._fact = [1] * (spec.n + 1)
        for k in range(1, spec.n + 1):
            self._fact[k] = self._fact[k - 1] * k
        self._pows: list[dict[int, int]] = [{} for _ in self.nums]

    def _pow(self, i: int, c: int) -> int:
        cache = self._pows[i]
        v = cache.get(c)
        if v is None:
            v = cache[c] = self.nums[i] ** c
        return v

    def numerator(self, cv: Sequence[int]) -> int:
        fact = self._fact
        den = 1
        prod = 1
        for i, c in enumerate(cv):
            if c:
                den *= fact[c]
                prod *= self._pow(i, c)
        return fact[self.n] // den * prod

    def binary_terms(self) -> Iterator[tuple[int, int]]:
        """Yield ``(k, numerator)`` for m=2 classes ``(N-k, k)``, k = 0..N.

        Uses the ratio recurrence between neighbouring terms so each step
        costs one big-by-small multiply and one exact division.
        """
        if len(self.nums) != 2:
            raise DomainError("binary_terms needs m=2")
        a0, a1 = self.nums
        n = self.n
        if a0 == 0 or a1 == 0:
            hot = 0 if a1 == 0 else n
            for k in range(n + 1):
                yield k, (a0 + a1) ** n if k == hot else 0
            return
        term = a0**n
        yield 0, term
        for k in range(n):
            term = term * (n - k) * a1 // ((k + 1) * a0)
            yield k + 1, term


def log_class_weight(spec: ReplicaSpec, cv: Sequence[int]) -> float:
    """Natural log of a class mass in floating point (``-inf`` for zero)."""
    cv = _check_counts(spec, cv)
    out = math.lgamma(spec.n + 1)
    for p, c in zip(spec.probs, cv):
        if c == 0:
            continue
        if p == 0:
            return -math.inf
        out += c * math.log(p) - math.lgamma(c + 1)
    return out


def combined_outcome_probability(spec: ReplicaSpec, i: int) -> Fraction:
    """Quantum class mass times observer frequency, summed over classes.

    Equals ``p_i`` exactly; computed here the long way as a check on the
    class weights.
    """
    if not 0 <= i < spec.m:
        raise DomainError(f"outcome index {i} outside 0..{spec.m - 1}")
    masses = ExactMasses(spec)
    total = 0
    for cv in enumerate_classes(spec):
        if cv[i]:
            total += masses.numerator(cv) * cv[i]
    return Fraction(total, masses.denominator * spec.n)

"""Full tensor-product reference over all ``m**N`` product basis states.

This module never touches count classes or multinomial coefficients: it
walks digit strings one by one, so it serves as ground truth for the
count-basis code paths.  Only usable for small ``m**N``.

Index convention: site 1 is the most significant base-``m`` digit, so index
``k`` corresponds to ``itertools.product(range(m), repeat=N)`` order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import CapacityError
from .hilbert import ReplicaSpec

ORACLE_CAP = 10**6

Digits = tuple[int, ...]


@dataclass(frozen=True)
class FullStateVector:
    """Coefficients of a product state over every digit string.

    ``moduli_sq`` mirrors ``coefficients`` with exact squared moduli so that
    norms stay exact even when the amplitudes themselves are irrational
    (e.g. ``sqrt(1/3)``).
    """

    m: int
    n: int
    coefficients: np.ndarray
    moduli_sq: tuple[Fraction, ...]

    def digit_strings(self):
        return itertools.product(range(self.m), repeat=self.n)


def build_full_state(spec: ReplicaSpec, cap: int = ORACLE_CAP) -> FullStateVector:
    m, n = spec.m, spec.n
    if m**n > cap:
        raise CapacityError(f"m**N = {m**n} exceeds the oracle cap {cap}")
    amps = spec.outcome_spec.amplitudes
    probs = spec.probs
    coeffs = np.empty(m**n, dtype=complex)
    mods = []
    for k, digits in enumerate(itertools.product(range(m), repeat=n)):
        c = complex(1)
        w = Fraction(1)
        for d in digits:
            c *= amps[d]
            w *= probs[d]
        coeffs[k] = c
        mods.append(w)
    return FullStateVector(m, n, coeffs, tuple(mods))


def apply_diagonal(state: FullStateVector, eigenvalue: Callable[[Digits], Fraction]) -> FullStateVector:
    """Multiply every coefficient by its basis vector's (real) eigenvalue."""
    lam = [eigenvalue(d) for d in state.digit_strings()]
    coeffs = state.coefficients * np.array([float(x) for x in lam])
    mods = tuple(w * Fraction(x) ** 2 for w, x in zip(state.moduli_sq, lam))
    return FullStateVector(state.m, state.n, coeffs, mods)


def norm_squared(state: FullStateVector) -> Fraction:
    return sum(state.moduli_sq, Fraction(0))


def expectation(state: FullStateVector, eigenvalue: Callable[[Digits], Fraction]) -> Fraction:
    """``<psi|A|psi>`` for a diagonal ``A``, exactly."""
    return sum(
        (w * eigenvalue(d) for w, d in zip(state.moduli_sq, state.digit_strings())),
        Fraction(0),
    )


# Eigenvalue functions built straight from digit strings.

def frequency(i: int) -> Callable[[Digits], Fraction]:
    return lambda d: Fraction(d.count(i), len(d))


def shifted_frequency(i: int, p: Fraction) -> Callable[[Digits], Fraction]:
    return lambda d: Fraction(d.count(i), len(d)) - p


def confusion(probs: Sequence[Fraction], epsilon: Fraction) -> Callable[[Digits], Fraction]:
    """1 where any outcome frequency is farther than epsilon from its Born weight."""

    def value(d: Digits) -> Fraction:
        n = len(d)
        off = any(abs(Fraction(d.count(i), n) - p) > epsilon for i, p in enumerate(probs))
        return Fraction(int(off))

    return value


def second_moment(state: FullStateVector, probs: Sequence[Fraction], i: int, j: int) -> Fraction:
    """``<psi|(F_i - p_i)(F_j - p_j)|psi>``."""
    fi = shifted_frequency(i, probs[i])
    fj = shifted_frequency(j, probs[j])
    return expectation(state, lambda d: fi(d) * fj(d))


def up_count_order(n: int) -> list[int]:
    """Index permutation listing m=2 basis states by increasing up-count.

    Ties keep ascending index order, which reproduces the familiar N=3
    column ``(a^3, a^2 b, a^2 b, a^2 b, a b^2, a b^2, a b^2, b^3)``.
    """
    return sorted(range(2**n), key=lambda k: (bin(k).count("1"), k))

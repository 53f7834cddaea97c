"""Frequency-operator moments and confusion-operator norms.

The confusion operator projects onto count classes whose frequency vector
``n/N`` lies outside the closed hypercube ``|f_i - p_i| <= epsilon`` around
the Born probabilities.  Its squared norm on the replicated state is a
binomial (m=2) or multinomial tail mass.  This module evaluates that mass

* exactly, as a rational, for ``N <= RATIONAL_MAX_N``;
* in log-domain floating point for larger ``N`` (still an exact sum over
  classes, only the arithmetic is approximate);
* through the Hoeffding bound ``2 exp(-2 eps^2 N)`` (union bound
  ``2m exp(-2 eps^2 N)`` for m > 2);
* through the Gaussian/erfc approximations;
* and as a pure log10 bound for astronomically large ``N``.

Boundary points (``|f - p| == eps``) count as *not* confused and are
always decided with exact integer comparisons.
"""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Union

import numpy as np
from scipy.special import gammaln, log_ndtr, logsumexp, xlogy

from .errors import DomainError
from .hilbert import (
    ENUMERATION_CAP,
    RATIONAL_MAX_N,
    CountVector,
    ExactMasses,
    ReplicaSpec,
    as_fraction,
    enumerate_classes,
)

UNDERFLOW = 1e-300
LOG10_E = math.log10(math.e)

Exact = Union[Fraction, float]


@dataclass(frozen=True)
class ConfusionParams:
    """Frequency tolerance and boundary convention of the confusion operator.

    ``epsilon`` is stored as an exact Fraction (floats via their shortest
    decimal, so ``0.1`` is exactly ``1/10``).
    """

    epsilon: Fraction
    boundary_rule: str = "strict_outside"

    def __post_init__(self):
        eps = as_fraction(self.epsilon)
        if eps < 0:
            raise DomainError(f"epsilon must be non-negative, got {eps}")
        if self.boundary_rule != "strict_outside":
            raise DomainError(f"unknown boundary rule {self.boundary_rule!r}")
        object.__setattr__(self, "epsilon", eps)


@dataclass(frozen=True)
class TailResult:
    """One confusion-norm evaluation.

    Values that would fall below ``1e-300`` are left as ``None`` and only the
    matching ``log10_*`` field is populated.  ``regime`` names which
    representation of the exact value is authoritative.
    """

    exact: Optional[Exact]
    log10_exact: Optional[float]
    hoeffding: Optional[float]
    log10_hoeffding: float
    gaussian: Optional[float]
    log10_gaussian: float
    regime: str
    gaussian_limit: Optional[float] = None
    log10_gaussian_limit: Optional[float] = None


@dataclass(frozen=True)
class CovarianceMatrix:
    """Covariance of the frequency vector, ``C = C* / N**2``."""

    entries: tuple[tuple[Fraction, ...], ...]
    n: int = field(default=1)

    def as_array(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.entries])


def _log10_fraction(x: Fraction) -> float:
    if x == 0:
        return -math.inf
    return math.log10(x.numerator) - math.log10(x.denominator)


class _Boundary:
    """Exact test ``|n_i/N - p_i| > eps`` for some i, in integers."""

    def __init__(self, spec: ReplicaSpec, epsilon: Fraction):
        self.n = spec.n
        self.eps_num = epsilon.numerator
        self.eps_den = epsilon.denominator
        self.terms = [(p.numerator, p.denominator) for p in spec.probs]

    def outside(self, i: int, count: int) -> bool:
        pn, pd = self.terms[i]
        return abs(count * pd - self.n * pn) * self.eps_den > self.n * pd * self.eps_num

    def confused(self, cv) -> bool:
        return any(self.outside(i, c) for i, c in enumerate(cv))


def is_confused(spec: ReplicaSpec, params: ConfusionParams, cv) -> bool:
    return _Boundary(spec, params.epsilon).confused(cv)


def confused_classes(
    spec: ReplicaSpec, params: ConfusionParams, cap: int = ENUMERATION_CAP
) -> Iterator[CountVector]:
    """Count classes on which the confusion projector has eigenvalue 1."""
    test = _Boundary(spec, params.epsilon)
    return (cv for cv in enumerate_classes(spec, cap) if test.confused(cv))


# -- moments -----------------------------------------------------------------

def freq_variance(spec: ReplicaSpec) -> Fraction:
    """``||(F - p)|psi>||^2 = p(1-p)/N`` for two outcomes."""
    if spec.m != 2:
        raise DomainError("freq_variance needs m=2; use covariance_matrix for m > 2")
    p = spec.probs[1]
    return p * (1 - p) / spec.n


def covariance_matrix(spec: ReplicaSpec) -> CovarianceMatrix:
    probs = spec.probs
    n = spec.n
    rows = tuple(
        tuple((p_i * (1 - p_i) if i == j else -p_i * p_j) / n for j, p_j in enumerate(probs))
        for i, p_i in enumerate(probs)
    )
    return CovarianceMatrix(rows, n)


def class_second_moment(spec: ReplicaSpec, i: int, j: int, cap: int = ENUMERATION_CAP) -> Fraction:
    """``<(F_i - p_i)(F_j - p_j)>`` summed explicitly over count classes."""
    masses = ExactMasses(spec)
    n = spec.n
    pi, pj = spec.probs[i], spec.probs[j]
    total = Fraction(0)
    for cv in enumerate_classes(spec, cap):
        num = masses.numerator(cv)
        if num:
            total += num * (Fraction(cv[i], n) - pi) * (Fraction(cv[j], n) - pj)
    return total / masses.denominator


# -- exact tail masses -------------------------------------------------------

def _rational_tail(spec: ReplicaSpec, params: ConfusionParams, cap: int) -> Fraction:
    masses = ExactMasses(spec)
    test = _Boundary(spec, params.epsilon)
    total = 0
    if spec.m == 2:
        for k, num in masses.binary_terms():
            if num and test.outside(1, k):
                total += num
    else:
        for cv in enumerate_classes(spec, cap):
            if test.confused(cv):
                total += masses.numerator(cv)
    return Fraction(total, masses.denominator)


def _binary_outside_mask(spec: ReplicaSpec, epsilon: Fraction) -> np.ndarray:
    n = spec.n
    p = spec.probs[1]
    k = np.arange(n + 1)
    gap = np.abs(k / n - float(p)) - float(epsilon)
    mask = gap > 0
    # resolve near-boundary points exactly
    test = _Boundary(spec, epsilon)
    for idx in np.flatnonzero(np.abs(gap) <= 1e-9):
        mask[idx] = test.outside(1, int(idx))
    return mask


def _log_tail(spec: ReplicaSpec, params: ConfusionParams, cap: int) -> float:
    """Natural log of the tail mass, summed in floating point."""
    n = spec.n
    logp = [math.log(p) if p > 0 else -math.inf for p in spec.probs]
    if spec.m == 2:
        pf = [float(p) for p in spec.probs]
        k = np.arange(n + 1, dtype=float)
        logw = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        with np.errstate(divide="ignore"):
            logw = logw + xlogy(k, pf[1]) + xlogy(n - k, pf[0])
        mask = _binary_outside_mask(spec, params.epsilon)
        if not mask.any():
            return -math.inf
        return float(logsumexp(logw[mask]))
    test = _Boundary(spec, params.epsilon)
    lg = [math.lgamma(c + 1) for c in range(n + 1)]
    head = lg[n]
    terms = []
    for cv in enumerate_classes(spec, cap):
        if not test.confused(cv):
            continue
        lw = head
        for c, lp in zip(cv, logp):
            if c:
                lw += c * lp - lg[c]
        if lw > -math.inf:
            terms.append(lw)
    if not terms:
        return -math.inf
    return float(logsumexp(terms))


def _confusion_mass(
    spec: ReplicaSpec, params: ConfusionParams, rational_max_n: int, cap: int
) -> tuple[Optional[Exact], float, str]:
    if spec.n <= rational_max_n:
        value = _rational_tail(spec, params, cap)
        return value, _log10_fraction(value), "rational"
    log_mass = _log_tail(spec, params, cap)
    log10_mass = log_mass * LOG10_E
    value = math.exp(log_mass)
    if value < UNDERFLOW:
        return None, log10_mass, "log_domain"
    return value, log10_mass, "float"


# -- bounds and approximations -----------------------------------------------

def hoeffding_bound(spec: ReplicaSpec, params: ConfusionParams, log10: bool = False) -> float:
    """``2 exp(-2 eps^2 N)``; for m > 2 the per-coordinate union bound ``2m exp(...)``."""
    prefactor = 2 if spec.m == 2 else 2 * spec.m
    exponent = 2 * float(params.epsilon) ** 2 * spec.n
    if log10:
        return math.log10(prefactor) - exponent * LOG10_E
    return prefactor * math.exp(-exponent)


def _log10_erfc(x: float) -> float:
    if x == math.inf:
        return -math.inf
    if x < 5:
        return math.log10(math.erfc(x))
    return (math.log(2.0) + float(log_ndtr(-x * math.sqrt(2.0)))) * LOG10_E


def gaussian_approx(spec: ReplicaSpec, params: ConfusionParams, log10: bool = False) -> float:
    """Gaussian-tail approximation of the confusion norm.

    m=2: ``erfc(eps * sqrt(N / (2 p (1-p))))``.  m > 2: the isotropic
    hypercube form ``1 - (1 - erfc(eps sqrt(N)))**N``; see
    :func:`gaussian_limit` for its ``N erfc(eps sqrt(N))`` limit.
    """
    eps = float(params.epsilon)
    n = spec.n
    if spec.m == 2:
        p = float(spec.probs[1])
        var = p * (1 - p)
        if var == 0:
            x = 0.0 if eps == 0 else math.inf
        else:
            x = eps * math.sqrt(n / (2 * var))
        return _log10_erfc(x) if log10 else math.erfc(x)
    x = eps * math.sqrt(n)
    tail = math.erfc(x)
    value = -math.expm1(n * math.log1p(-tail)) if tail < 1 else 1.0
    if not log10:
        return value
    if value > UNDERFLOW:
        return math.log10(value)
    # N*erfc is tiny here, and 1-(1-t)^N = N t to first order
    return math.log10(n) + _log10_erfc(x)


def gaussian_limit(spec: ReplicaSpec, params: ConfusionParams, log10: bool = False) -> float:
    """``N erfc(eps sqrt(N))``, the large-N form of the m > 2 approximation."""
    x = float(params.epsilon) * math.sqrt(spec.n)
    if log10:
        return math.log10(spec.n) + _log10_erfc(x)
    return spec.n * math.erfc(x)


def _maybe(value: float) -> Optional[float]:
    return value if value >= UNDERFLOW or value == 0 else None


def confusion_norm_exact(
    spec: ReplicaSpec,
    params: ConfusionParams,
    rational_max_n: int = RATIONAL_MAX_N,
    cap: int = ENUMERATION_CAP,
) -> TailResult:
    """Exact confusion-norm tail sum, reported alongside its bounds."""
    exact, log10_exact, regime = _confusion_mass(spec, params, rational_max_n, cap)
    log10_h = hoeffding_bound(spec, params, log10=True)
    log10_g = gaussian_approx(spec, params, log10=True)
    extra = {}
    if spec.m > 2:
        log10_lim = gaussian_limit(spec, params, log10=True)
        extra = dict(
            gaussian_limit=_maybe(10.0**log10_lim) if log10_lim > -300 else None,
            log10_gaussian_limit=log10_lim,
        )
    return TailResult(
        exact=exact,
        log10_exact=log10_exact,
        hoeffding=_maybe(hoeffding_bound(spec, params)) if log10_h > -300 else None,
        log10_hoeffding=log10_h,
        gaussian=_maybe(gaussian_approx(spec, params)) if log10_g > -300 else None,
        log10_gaussian=log10_g,
        regime=regime,
        **extra,
    )


def happy_decomposition(
    spec: ReplicaSpec,
    params: ConfusionParams,
    rational_max_n: int = RATIONAL_MAX_N,
    cap: int = ENUMERATION_CAP,
) -> tuple[Exact, Exact]:
    """Squared norms of the confused and happy (complement) components."""
    exact, _, regime = _confusion_mass(spec, params, rational_max_n, cap)
    if exact is None:
        exact = 0.0
    return exact, 1 - exact


# -- astronomical N ----------------------------------------------------------

_HUGE_CONTEXT = decimal.Context(prec=34, Emax=decimal.MAX_EMAX, Emin=decimal.MIN_EMIN)


def _to_decimal(x) -> decimal.Decimal:
    if isinstance(x, decimal.Decimal):
        return x
    if isinstance(x, float):
        return decimal.Decimal(repr(x))
    return decimal.Decimal(str(x))


def log10_bound_huge_n(log10_N, epsilon_log10) -> decimal.Decimal:
    """log10 of ``2 exp(-2 eps^2 N)`` given only ``log10 N`` and ``log10 eps``.

    The exponent ``2 eps^2 N`` is formed as a power of ten inside a
    wide-exponent Decimal context, so N itself is never materialized.
    ``epsilon_log10 = -inf`` (eps = 0) gives ``log10(2)``.
    """
    ctx = _HUGE_CONTEXT
    log10_two = ctx.log10(decimal.Decimal(2))
    le = _to_decimal(epsilon_log10)
    ln = _to_decimal(log10_N)
    if le.is_infinite() and le < 0:
        return +log10_two
    if le.is_nan() or ln.is_nan() or ln.is_infinite():
        raise DomainError("log10_N must be finite and epsilon_log10 finite or -inf")
    log10_e = ctx.log10(ctx.exp(decimal.Decimal(1)))
    exponent_log10 = ctx.add(ctx.add(log10_two, ctx.multiply(2, le)), ln)
    exponent = ctx.power(decimal.Decimal(10), exponent_log10)
    return ctx.subtract(log10_two, ctx.multiply(exponent, log10_e))

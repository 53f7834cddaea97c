"""Monte-Carlo surrogate for the infinite collection of replicated experiments.

A *sphere* is a run of ``M`` experiment sites whose outcomes are read as an
ordered pattern.  A branch is modelled by drawing each site's outcome
independently with the Born probabilities; ``K`` spheres make up a
:class:`PatternHistogram`.

Randomness comes from numpy's counter-based Philox generator.  Spheres are
drawn in fixed-size chunks and chunk ``i`` uses the Philox key
``seed + (i << 64)``, so the output is bit-identical for a given seed no
matter how many worker threads run.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .errors import CapacityError, DomainError, InsufficientCountsError
from .hilbert import OutcomeSpec

PATTERN_CAP = 2**20
CHUNK_SIZE = 1 << 15
PRNG_ALGORITHM = "philox4x64-10"
PRNG_VERSION = f"numpy.random.Philox (numpy {np.__version__})"
OVERALL_ALPHA = 1e-3


def thread_count() -> int:
    raw = os.environ.get("BORNSIM_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SamplerConfig:
    spec: OutcomeSpec
    sphere_size: int
    sphere_count: int
    seed: int
    pattern_cap: int = PATTERN_CAP

    def __post_init__(self):
        if self.sphere_size < 1 or self.sphere_count < 1:
            raise DomainError("sphere size and count must be positive")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.spec.m**self.sphere_size > self.pattern_cap:
            raise CapacityError(
                f"m**M = {self.spec.m ** self.sphere_size} patterns exceed cap {self.pattern_cap}"
            )


@dataclass
class PatternHistogram:
    """Counts of length-``M`` outcome patterns, indexed by base-``m`` code.

    Site 1 is the most significant digit of the code.
    """

    m: int
    sphere_size: int
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def pattern(self, code: int) -> tuple[int, ...]:
        digits = []
        for _ in range(self.sphere_size):
            code, d = divmod(code, self.m)
            digits.append(d)
        return tuple(reversed(digits))

    def label(self, code: int) -> str:
        return "".join(str(d) for d in self.pattern(code)) if self.m <= 10 else ",".join(
            map(str, self.pattern(code))
        )

    def as_dict(self) -> dict[str, int]:
        return {self.label(int(c)): int(self.counts[c]) for c in np.flatnonzero(self.counts)}

    @classmethod
    def from_dict(cls, m: int, sphere_size: int, data: dict[str, int]) -> "PatternHistogram":
        counts = np.zeros(m**sphere_size, dtype=np.int64)
        for label, value in data.items():
            digits = [int(x) for x in (label.split(",") if "," in label else label)]
            if len(digits) != sphere_size or any(not 0 <= d < m for d in digits):
                raise DomainError(f"bad pattern label {label!r}")
            code = 0
            for d in digits:
                code = code * m + d
            counts[code] += int(value)
        return cls(m, sphere_size, counts)

    def __add__(self, other: "PatternHistogram") -> "PatternHistogram":
        if (self.m, self.sphere_size) != (other.m, other.sphere_size):
            raise DomainError("histograms differ in m or sphere size")
        return PatternHistogram(self.m, self.sphere_size, self.counts + other.counts)

    def digit_table(self) -> np.ndarray:
        """``(m**M, M)`` array of each code's digits."""
        codes = np.arange(self.m**self.sphere_size)
        powers = self.m ** np.arange(self.sphere_size - 1, -1, -1)
        return (codes[:, None] // powers[None, :]) % self.m

    def site_marginals(self) -> np.ndarray:
        """Empirical frequency of each outcome at each site, shape ``(M, m)``."""
        digits = self.digit_table()
        out = np.zeros((self.sphere_size, self.m))
        for s in range(self.m):
            out[:, s] = ((digits == s) * self.counts[:, None]).sum(axis=0)
        return out / max(self.total, 1)


def stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed + (index << 64)))


def _sample_chunk(cum: np.ndarray, powers: np.ndarray, minlength: int, seed: int, index: int, size: int):
    u = stream(seed, index).random((size, powers.size))
    outcomes = np.searchsorted(cum, u, side="right")
    codes = outcomes @ powers
    return np.bincount(codes, minlength=minlength)


def sample_branch_spheres(config: SamplerConfig, threads: Optional[int] = None) -> PatternHistogram:
    m, size = config.spec.m, config.sphere_size
    probs = np.array([float(p) for p in config.spec.probs])
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    powers = m ** np.arange(size - 1, -1, -1, dtype=np.int64)
    minlength = m**size
    chunks = [
        (i, min(CHUNK_SIZE, config.sphere_count - start))
        for i, start in enumerate(range(0, config.sphere_count, CHUNK_SIZE))
    ]
    workers = min(threads or thread_count(), len(chunks))

    def run(chunk):
        return _sample_chunk(cum, powers, minlength, config.seed, *chunk)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    counts = np.sum(parts, axis=0).astype(np.int64)
    return PatternHistogram(m, size, counts)


def pattern_probabilities(spec: OutcomeSpec, sphere_size: int) -> np.ndarray:
    """Born product probability of every pattern code."""
    p = np.array([float(x) for x in spec.probs])
    q = np.ones(1)
    for _ in range(sphere_size):
        q = np.kron(q, p)
    return q


@dataclass(frozen=True)
class PatternRow:
    code: int
    pattern: str
    observed: int
    expected_prob: float
    z: float
    flagged: bool


@dataclass(frozen=True)
class PatternReport:
    rows: tuple[PatternRow, ...]
    z_threshold: float
    tested: int
    flagged: int
    allowed: int
    impossible_seen: int
    passed: bool


def pattern_frequency_test(hist: PatternHistogram, spec: OutcomeSpec, z_threshold: float) -> PatternReport:
    """Per-pattern z-scores of empirical frequency against Born products.

    A pattern is flagged when ``|z| > z_threshold``.  The histogram passes
    when no impossible pattern occurs and the number of flagged patterns is
    within the ``1 - 1e-3`` binomial quantile of what the two-sided normal
    tail mass predicts for that many patterns.
    """
    if spec.m != hist.m:
        raise DomainError("histogram and spec disagree on m")
    total = hist.total
    if total == 0:
        raise InsufficientCountsError("empty histogram")
    q = pattern_probabilities(spec, hist.sphere_size)
    freq = hist.counts / total
    sigma = np.sqrt(q * (1 - q) / total)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, (freq - q) / sigma, np.where(freq == q, 0.0, np.inf))
    flagged = np.abs(z) > z_threshold
    testable = sigma > 0
    # untestable cells (q in {0, 1}) can only be flagged by an impossible count
    impossible = int(np.count_nonzero(flagged & ~testable))
    tested = int(np.count_nonzero(testable))
    tail = math.erfc(z_threshold / math.sqrt(2))
    allowed = int(stats.binom.isf(OVERALL_ALPHA, tested, tail)) if tested else 0
    n_flagged = int(np.count_nonzero(flagged))
    rows = tuple(
        PatternRow(int(c), hist.label(int(c)), int(hist.counts[c]), float(q[c]), float(z[c]), bool(flagged[c]))
        for c in range(q.size)
        if q[c] > 0 or hist.counts[c] > 0
    )
    passed = impossible == 0 and n_flagged <= allowed
    return PatternReport(rows, z_threshold, tested, n_flagged, allowed, impossible, passed)


@dataclass(frozen=True)
class HomogeneityResult:
    statistic: float
    dof: int
    p_value: float
    critical: float
    significance: float
    bins: int
    indistinguishable: bool


def _pool_columns(totals: np.ndarray, scale: float, min_expected: float) -> list[list[int]]:
    order = sorted(np.flatnonzero(totals), key=lambda c: (totals[c], c))
    bins: list[list[int]] = []
    current: list[int] = []
    acc = 0
    for c in order:
        current.append(int(c))
        acc += totals[c]
        if acc * scale >= min_expected:
            bins.append(current)
            current, acc = [], 0
    if current:
        if not bins:
            return []
        bins[-1].extend(current)
    return bins


def branch_indistinguishability_test(
    hist_a: PatternHistogram,
    hist_b: PatternHistogram,
    significance: float = 0.01,
    min_expected: float = 5.0,
) -> HomogeneityResult:
    """Two-sample chi-square homogeneity test between branch histograms.

    Rare patterns are pooled, smallest first, until every pooled cell has an
    expected count of at least ``min_expected`` in both samples.
    """
    if (hist_a.m, hist_a.sphere_size) != (hist_b.m, hist_b.sphere_size):
        raise DomainError("histograms differ in m or sphere size")
    a, b = hist_a.counts.astype(float), hist_b.counts.astype(float)
    n_a, n_b = a.sum(), b.sum()
    if n_a == 0 or n_b == 0:
        raise InsufficientCountsError("empty histogram")
    totals = a + b
    bins = _pool_columns(totals, min(n_a, n_b) / (n_a + n_b), min_expected)
    if len(bins) < 2:
        raise InsufficientCountsError("fewer than two cells left after pooling")
    obs = np.array([[a[cols].sum() for cols in bins], [b[cols].sum() for cols in bins]])
    col = obs.sum(axis=0)
    expected = np.outer([n_a, n_b], col) / (n_a + n_b)
    statistic = float(((obs - expected) ** 2 / expected).sum())
    dof = len(bins) - 1
    critical = float(stats.chi2.ppf(1 - significance, dof))
    p_value = float(stats.chi2.sf(statistic, dof))
    return HomogeneityResult(statistic, dof, p_value, critical, significance, len(bins), statistic < critical)


def permutation_symmetry_test(
    hist: PatternHistogram, significance: float = 0.01, min_expected: float = 5.0
) -> HomogeneityResult:
    """Chi-square check that patterns sharing a count vector are equally frequent.

    Each group with a mean count of at least ``min_expected`` contributes a
    uniform goodness-of-fit term; terms and degrees of freedom are summed.
    """
    digits = hist.digit_table()
    keys = [tuple(np.bincount(row, minlength=hist.m)) for row in digits]
    groups: dict[tuple, list[int]] = {}
    for code, key in enumerate(keys):
        groups.setdefault(key, []).append(code)
    statistic = 0.0
    dof = 0
    used = 0
    for codes in groups.values():
        if len(codes) < 2:
            continue
        obs = hist.counts[codes].astype(float)
        mean = obs.mean()
        if mean < min_expected:
            continue
        statistic += float(((obs - mean) ** 2).sum() / mean)
        dof += len(codes) - 1
        used += 1
    if dof == 0:
        raise InsufficientCountsError("no count-vector group has enough counts")
    critical = float(stats.chi2.ppf(1 - significance, dof))
    p_value = float(stats.chi2.sf(statistic, dof))
    return HomogeneityResult(statistic, dof, p_value, critical, significance, used, statistic < critical)

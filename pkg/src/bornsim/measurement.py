"""Von Neumann measurement, pointer-basis decoherence and mixed apparatus.

Apparatus microstates are integer ids laid out in disjoint ranges: with
``K`` ready microstates, ready state ``k`` has id ``k`` and the microstate
that records outcome ``s`` from it has id ``(s + 1) * K + k``.  The
measurement step maps ``|s>|k_r> -> |s>|k_s>``.

After the step only the ``m * K`` pairs ``(s, k_s)`` are populated per site,
so density matrices are written over that per-site pointer basis, local
index ``s * K + k``, site 1 most significant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import CapacityError, ContractViolation, DomainError, NormalizationError
from .hilbert import (
    NORMALIZATION_TOL,
    RATIONAL_MAX_N,
    OutcomeSpec,
    ReplicaSpec,
    as_fraction,
    class_weight,
    enumerate_classes,
    log_class_weight,
)
from .tails import ConfusionParams, is_confused

DENSE_CAP = 4096

Mass = Union[Fraction, float]
SiteState = dict[tuple[int, int], complex]


@dataclass(frozen=True)
class ApparatusModel:
    """Ready-state density matrix ``sum_k q_k |k_r><k_r|`` of one apparatus."""

    ready_probs: tuple[Fraction, ...]

    def __post_init__(self):
        probs = [as_fraction(q) for q in self.ready_probs]
        if not probs:
            raise DomainError("an apparatus needs at least one ready microstate")
        if any(q < 0 for q in probs):
            raise NormalizationError("ready probabilities must be non-negative")
        total = sum(probs, Fraction(0))
        if abs(float(total) - 1) > NORMALIZATION_TOL:
            raise NormalizationError(f"ready probabilities sum to {float(total)!r}")
        object.__setattr__(self, "ready_probs", tuple(q / total for q in probs))

    @classmethod
    def trivial(cls) -> "ApparatusModel":
        return cls((Fraction(1),))

    @classmethod
    def uniform(cls, count: int) -> "ApparatusModel":
        return cls(tuple(Fraction(1, count) for _ in range(count)))

    @property
    def microstate_count(self) -> int:
        return len(self.ready_probs)

    def ready_id(self, k: int) -> int:
        return k

    def record_id(self, outcome: int, k: int) -> int:
        return (outcome + 1) * self.microstate_count + k

    def recorded_outcome(self, apparatus_id: int) -> Optional[int]:
        """Outcome class an id belongs to, or None for a ready microstate."""
        cls_index = apparatus_id // self.microstate_count
        return None if cls_index == 0 else cls_index - 1


@dataclass(frozen=True)
class PointerProductState:
    """One product term: per-site ``(outcome, apparatus id)`` and an amplitude."""

    sites: tuple[tuple[int, int], ...]
    amplitude: complex

    def check(self, apparatus: ApparatusModel) -> None:
        for outcome, aid in self.sites:
            if apparatus.recorded_outcome(aid) != outcome:
                raise ContractViolation(f"apparatus id {aid} does not record outcome {outcome}")


def premeasurement_state(system: OutcomeSpec, ready: int, apparatus: ApparatusModel) -> SiteState:
    return {(s, apparatus.ready_id(ready)): a for s, a in enumerate(system.amplitudes) if a != 0}


def von_neumann_step(
    system: OutcomeSpec, ready: int, apparatus: Optional[ApparatusModel] = None
) -> SiteState:
    """``(sum_s a_s |s>)|k_r>  ->  sum_s a_s |s>|k_s>``."""
    apparatus = apparatus or ApparatusModel.trivial()
    if not 0 <= ready < apparatus.microstate_count:
        raise DomainError(f"ready microstate {ready} outside 0..{apparatus.microstate_count - 1}")
    before = premeasurement_state(system, ready, apparatus)
    return {(s, apparatus.record_id(s, aid)): a for (s, aid), a in before.items()}


def inner(a: Mapping, b: Mapping) -> complex:
    """``<a|b>`` for sparse states keyed by basis labels."""
    return sum((complex(a[key]).conjugate() * complex(v) for key, v in b.items() if key in a), 0j)


@dataclass(frozen=True)
class ReducedDensityMatrix:
    """N-site density matrix in the pointer basis.

    Exactly one of ``dense`` (a ``(mK)**N`` square matrix) or ``classes``
    (diagonal masses keyed by outcome count vector) is set.  The class form
    never stores off-diagonals; ``decohered`` records whether they are
    meant to be zero.
    """

    born: tuple[Fraction, ...]
    n: int
    apparatus: ApparatusModel
    dense: Optional[np.ndarray] = None
    classes: Optional[dict[tuple[int, ...], Mass]] = None
    decohered: bool = False

    @property
    def representation(self) -> str:
        return "dense" if self.dense is not None else "class"

    @property
    def m(self) -> int:
        return len(self.born)

    @property
    def trace(self) -> float:
        if self.dense is not None:
            return float(np.trace(self.dense).real)
        return float(sum(self.classes.values()))

    def is_diagonal(self) -> bool:
        if self.dense is None:
            return self.decohered
        off = self.dense - np.diag(np.diag(self.dense))
        return not np.any(off)


def _site_density(system: OutcomeSpec, apparatus: ApparatusModel) -> np.ndarray:
    # rho[(s, k), (t, k)] = q_k a_s conj(a_t); distinct ready states never mix
    m, k_count = system.m, apparatus.microstate_count
    real = all(complex(a).imag == 0 for a in system.amplitudes)
    dtype = float if real else complex
    amps = np.array([complex(a) for a in system.amplitudes])
    block = np.outer(amps, amps.conj())
    block = block.real if real else block
    q = np.array([float(x) for x in apparatus.ready_probs])
    rho = np.zeros((m, k_count, m, k_count), dtype=dtype)
    ks = np.arange(k_count)
    rho[:, ks, :, ks] = q[:, None, None] * block[None, :, :]
    return rho.reshape(m * k_count, m * k_count)


def dense_dimension(spec: ReplicaSpec, apparatus: ApparatusModel) -> int:
    return (spec.m * apparatus.microstate_count) ** spec.n


def evolve_replicated_measurement(
    spec: ReplicaSpec,
    apparatus: Optional[ApparatusModel] = None,
    path: str = "auto",
    dense_cap: int = DENSE_CAP,
    rational_max_n: int = RATIONAL_MAX_N,
) -> ReducedDensityMatrix:
    """Measure every replica with its own apparatus drawn from ``apparatus``.

    The mixture over microstate assignments weighted ``q_{k_1}...q_{k_N}``
    factorizes site by site, so the dense path is a Kronecker power of the
    single-site post-measurement density matrix.  The class path keeps only
    the diagonal, aggregated by outcome counts.
    """
    apparatus = apparatus or ApparatusModel.trivial()
    dim = dense_dimension(spec, apparatus)
    if path == "auto":
        path = "dense" if dim <= dense_cap else "class"
    if path == "dense":
        if dim > dense_cap:
            raise CapacityError(f"dense dimension {dim} exceeds cap {dense_cap}")
        site = _site_density(spec.outcome_spec, apparatus)
        rho = np.ones((1, 1), dtype=site.dtype)
        for _ in range(spec.n):
            rho = np.kron(rho, site)
        return ReducedDensityMatrix(spec.probs, spec.n, apparatus, dense=rho)
    if path != "class":
        raise DomainError(f"unknown path {path!r}")
    # outcome marginal of the per-site pointer diagonal p_s q_k
    marginal = tuple(
        sum((p * q for q in apparatus.ready_probs), Fraction(0)) for p in spec.probs
    )
    site_spec = ReplicaSpec(OutcomeSpec.from_probs(marginal), spec.n)
    classes: dict[tuple[int, ...], Mass] = {}
    exact = spec.n <= rational_max_n
    for cv in enumerate_classes(site_spec):
        if exact:
            classes[tuple(cv)] = class_weight(site_spec, cv).weight
        else:
            classes[tuple(cv)] = float(np.exp(log_class_weight(site_spec, cv)))
    return ReducedDensityMatrix(spec.probs, spec.n, apparatus, classes=classes)


def evolve_by_assignments(spec: ReplicaSpec, apparatus: ApparatusModel) -> np.ndarray:
    """Dense ``sum_assign q_{k_1}...q_{k_N} |psi'><psi'|`` built term by term.

    Reference route for :func:`evolve_replicated_measurement`; every
    microstate assignment is expanded into its product state explicitly.
    """
    k_count = apparatus.microstate_count
    local = spec.m * k_count
    dim = local**spec.n
    rho = np.zeros((dim, dim), dtype=complex)
    for assign in itertools.product(range(k_count), repeat=spec.n):
        weight = 1.0
        psi = np.ones(1, dtype=complex)
        for k in assign:
            weight *= float(apparatus.ready_probs[k])
            phi = np.zeros(local, dtype=complex)
            for (s, _aid), a in von_neumann_step(spec.outcome_spec, k, apparatus).items():
                phi[s * k_count + k] = a
            psi = np.kron(psi, phi)
        rho += weight * np.outer(psi, psi.conj())
    return rho


def decohere(rho: ReducedDensityMatrix) -> ReducedDensityMatrix:
    """Zero every off-diagonal pointer-basis entry; the diagonal is untouched."""
    if rho.dense is not None:
        return ReducedDensityMatrix(
            rho.born, rho.n, rho.apparatus, dense=np.diag(np.diag(rho.dense)), decohered=True
        )
    return ReducedDensityMatrix(rho.born, rho.n, rho.apparatus, classes=dict(rho.classes), decohered=True)


def _dense_class_masses(rho: ReducedDensityMatrix) -> dict[tuple[int, ...], float]:
    m, k_count = rho.m, rho.apparatus.microstate_count
    local = m * k_count
    diag = np.diag(rho.dense).real
    idx = np.arange(diag.size)
    counts = np.zeros((diag.size, m), dtype=np.int64)
    for _ in range(rho.n):
        outcome = (idx % local) // k_count
        counts[np.arange(diag.size), outcome] += 1
        idx = idx // local
    out: dict[tuple[int, ...], float] = {}
    for row, mass in zip(counts.tolist(), diag):
        key = tuple(row)
        out[key] = out.get(key, 0.0) + float(mass)
    return out


def pointer_class_frequencies(
    rho: ReducedDensityMatrix, params: ConfusionParams
) -> tuple[Mass, dict[tuple[int, ...], Mass]]:
    """Mass of pointer states whose outcome frequencies sit within epsilon of Born.

    Returns ``(within_mass, masses)`` where ``masses`` maps each outcome
    count vector to its total diagonal mass.
    """
    if not rho.is_diagonal():
        raise ContractViolation("pointer_class_frequencies needs a decohered (diagonal) rho")
    masses = _dense_class_masses(rho) if rho.dense is not None else dict(rho.classes)
    reference = ReplicaSpec(OutcomeSpec.from_probs(rho.born), rho.n)
    within: Mass = 0
    for cv, mass in masses.items():
        if not is_confused(reference, params, cv):
            within += mass
    return within, masses


def class_table(masses: Mapping[Sequence[int], Mass]) -> list[tuple[tuple[int, ...], Mass]]:
    return sorted((tuple(cv), mass) for cv, mass in masses.items())

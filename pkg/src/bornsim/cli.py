"""Command-line interface.

Every command prints one JSON object (snake_case keys) carrying a
``manifest`` that records the exact argv, so ``bornsim replay FILE``
reproduces the run.  ``fig1`` additionally writes a CSV file and a sidecar
``<csv>.manifest.json``.

Exit codes: 0 success, 2 usage error, 3 capacity exceeded, 4 a requested
statistical test failed, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import tempfile
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .errors import BornsimError, CapacityError, DomainError, NormalizationError
from .hilbert import RATIONAL_MAX_N, ExactMasses, OutcomeSpec, ReplicaSpec, as_fraction
from .measurement import (
    ApparatusModel,
    class_table,
    decohere,
    evolve_replicated_measurement,
    pointer_class_frequencies,
)
from .sampler import (
    PRNG_ALGORITHM,
    PRNG_VERSION,
    PatternHistogram,
    SamplerConfig,
    branch_indistinguishability_test,
    pattern_frequency_test,
    sample_branch_spheres,
)
from .tails import (
    ConfusionParams,
    confusion_norm_exact,
    covariance_matrix,
    freq_variance,
    gaussian_approx,
    gaussian_limit,
    hoeffding_bound,
    is_confused,
    log10_bound_huge_n,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CAPACITY = 3
EXIT_TEST_FAILED = 4


class UsageError(Exception):
    pass


# -- formatting ----------------------------------------------------------------

def fmt(value, exact: bool = False):
    """JSON-ready scalar: ``"num/den"`` for rationals under ``--exact``."""
    if value is None:
        return None
    if isinstance(value, Fraction):
        if exact:
            return f"{value.numerator}/{value.denominator}"
        return float(value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def csv_number(value, exact: bool = False) -> str:
    if isinstance(value, Fraction) and exact:
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".17g")


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".bornsim-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(value):
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def manifest(args: argparse.Namespace, argv: Sequence[str], backend: str, prng: Optional[dict] = None) -> dict:
    params = {k: _jsonable(v) for k, v in vars(args).items() if k != "func"}
    return {
        "command": args.command,
        "parameters": params,
        "argv": list(argv),
        "backend": backend,
        "prng": prng,
        "version": f"bornsim {__version__}",
        "platform": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "machine": platform.machine(),
        },
    }


def _finite(value):
    # strict JSON has no infinities; spell them as strings
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    return value


def dumps(payload: dict) -> str:
    return json.dumps(_finite(payload), indent=2, allow_nan=False) + "\n"


def emit(payload: dict, args: argparse.Namespace) -> None:
    text = dumps(payload)
    if getattr(args, "json_out", None):
        atomic_write(args.json_out, text)
    sys.stdout.write(text)


# -- argument helpers ----------------------------------------------------------

def fraction_arg(text: str) -> Fraction:
    try:
        return as_fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def fraction_list(text: str) -> list[Fraction]:
    return [fraction_arg(part) for part in text.split(",") if part.strip()]


def positive_int(text: str) -> int:
    try:
        value = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def seed_arg(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def add_probability_flags(parser: argparse.ArgumentParser, suffix: str = "", required: bool = True, default=None):
    group = parser.add_mutually_exclusive_group(required=required and default is None)
    dest = suffix.replace("-", "_")
    group.add_argument(f"--p{suffix}", dest=f"p{dest}", type=fraction_arg, default=default,
                       help="up-probability of a two-outcome system")
    group.add_argument(f"--probs{suffix}", dest=f"probs{dest}", type=fraction_list,
                       help="comma-separated outcome probabilities")


def outcome_spec(args, suffix: str = "") -> OutcomeSpec:
    p = getattr(args, f"p{suffix}")
    probs = getattr(args, f"probs{suffix}")
    if probs is not None:
        return OutcomeSpec.from_probs(probs)
    return OutcomeSpec.binary(p)


def backend_for(spec: ReplicaSpec, rational_max_n: int) -> str:
    return "rational" if spec.n <= rational_max_n else "float"


# -- commands ------------------------------------------------------------------

def cmd_freq(args, argv) -> int:
    spec = ReplicaSpec(outcome_spec(args), args.n)
    cov = covariance_matrix(spec)
    out: dict[str, Any] = {"n": spec.n, "probs": [fmt(p, args.exact) for p in spec.probs]}
    if spec.m == 2:
        out["variance"] = fmt(freq_variance(spec), args.exact)
    else:
        out["variance"] = [fmt(row[i], args.exact) for i, row in enumerate(cov.entries)]
        out["covariance_matrix"] = [[fmt(x, args.exact) for x in row] for row in cov.entries]
    out["manifest"] = manifest(args, argv, "rational")
    emit(out, args)
    return EXIT_OK


def cmd_confusion(args, argv) -> int:
    spec = ReplicaSpec(outcome_spec(args), args.n)
    params = ConfusionParams(args.epsilon)
    out: dict[str, Any] = {"n": spec.n, "m": spec.m, "epsilon": fmt(params.epsilon, args.exact), "mode": args.mode}
    backend = "float"
    if args.mode in ("exact", "all"):
        res = confusion_norm_exact(spec, params, rational_max_n=args.rational_max_n)
        backend = res.regime
        out["regime"] = res.regime
        if not args.log10:
            out["exact"] = fmt(res.exact, args.exact)
        out["log10_exact"] = res.log10_exact
    if args.mode in ("hoeffding", "all"):
        log_h = hoeffding_bound(spec, params, log10=True)
        if not args.log10:
            out["hoeffding"] = hoeffding_bound(spec, params) if log_h > -300 else None
        out["log10_hoeffding"] = log_h
    if args.mode in ("gauss", "all"):
        log_g = gaussian_approx(spec, params, log10=True)
        if not args.log10:
            out["gaussian"] = gaussian_approx(spec, params) if log_g > -300 else None
        out["log10_gaussian"] = log_g
        if spec.m > 2:
            log_l = gaussian_limit(spec, params, log10=True)
            if not args.log10:
                out["gaussian_limit"] = gaussian_limit(spec, params) if log_l > -300 else None
            out["log10_gaussian_limit"] = log_l
    out["manifest"] = manifest(args, argv, backend)
    emit(out, args)
    return EXIT_OK


def fig1_rows(p: Fraction, n: int, epsilon: Fraction):
    """``(n_up, f, mass, eigenvalue, indicator)`` for every up-count."""
    spec = ReplicaSpec(OutcomeSpec.binary(p), n)
    params = ConfusionParams(epsilon)
    masses = ExactMasses(spec)
    for k, num in masses.binary_terms():
        f = Fraction(k, n)
        yield k, f, Fraction(num, masses.denominator), f, int(is_confused(spec, params, (n - k, k)))


def cmd_fig1(args, argv) -> int:
    rows = list(fig1_rows(args.p, args.n, args.epsilon))
    lines = ["f,binomial_mass,frequency_eigenvalue,confusion_indicator"]
    for _k, f, mass, eig, ind in rows:
        lines.append(",".join([csv_number(f, args.exact), csv_number(mass, args.exact),
                               csv_number(eig, args.exact), str(ind)]))
    try:
        atomic_write(args.output, "\n".join(lines) + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write {args.output}: {exc}") from exc
    spec = ReplicaSpec(OutcomeSpec.binary(args.p), args.n)
    params = ConfusionParams(args.epsilon)
    confused = sum((mass for _k, _f, mass, _e, ind in rows if ind), Fraction(0))
    total = sum((mass for _k, _f, mass, _e, _i in rows), Fraction(0))
    man = manifest(args, argv, "rational")
    atomic_write(args.output + ".manifest.json", dumps(man))
    out = {
        "output": args.output,
        "rows": len(rows),
        "mass_sum": fmt(total, args.exact),
        "confusion_norm": fmt(confused, args.exact),
        "hoeffding": hoeffding_bound(spec, params),
        "gaussian": gaussian_approx(spec, params),
        "manifest": man,
    }
    emit(out, args)
    return EXIT_OK


def cmd_huge(args, argv) -> int:
    value = log10_bound_huge_n(args.log10_n, args.log10_epsilon)
    adjusted = value.adjusted()
    mantissa = float(value.scaleb(-adjusted))
    as_float = float(value)
    out = {
        "log10_n": args.log10_n,
        "log10_epsilon": args.log10_epsilon,
        "log10_bound": format(value, ".17e"),
        "log10_bound_mantissa": mantissa,
        "log10_bound_exponent": adjusted,
        "log10_bound_float": as_float if abs(as_float) != float("inf") else None,
        "manifest": manifest(args, argv, "log_domain"),
    }
    emit(out, args)
    return EXIT_OK


def cmd_decohere(args, argv) -> int:
    spec = ReplicaSpec(outcome_spec(args), args.n)
    if args.ready_probs is not None:
        if len(args.ready_probs) != args.microstates:
            raise UsageError("--ready-probs must list one value per microstate")
        apparatus = ApparatusModel(tuple(args.ready_probs))
    else:
        apparatus = ApparatusModel.uniform(args.microstates)
    rho = evolve_replicated_measurement(spec, apparatus, path=args.path, rational_max_n=args.rational_max_n)
    before = rho.trace
    rho = decohere(rho)
    within, masses = pointer_class_frequencies(rho, ConfusionParams(args.epsilon))
    backend = "float" if rho.representation == "dense" else backend_for(spec, args.rational_max_n)
    out = {
        "n": spec.n,
        "microstates": apparatus.microstate_count,
        "representation": rho.representation,
        "trace_before_decoherence": before,
        "trace": rho.trace,
        "within_epsilon_mass": fmt(within, args.exact),
        "class_table": [{"counts": list(cv), "mass": fmt(mass, args.exact)} for cv, mass in class_table(masses)],
        "manifest": manifest(args, argv, backend),
    }
    emit(out, args)
    return EXIT_OK


def histogram_payload(hist: PatternHistogram, spec: OutcomeSpec, seed: int) -> dict:
    return {
        "m": hist.m,
        "m_sphere": hist.sphere_size,
        "k": hist.total,
        "seed": seed,
        "probs": [f"{p.numerator}/{p.denominator}" for p in spec.probs],
        "counts": hist.as_dict(),
    }


def prng_record(*seeds: int) -> dict:
    return {"algorithm": PRNG_ALGORITHM, "implementation": PRNG_VERSION,
            "stream_rule": "key = seed + (chunk_index << 64)",
            "seeds": list(seeds)}


def cmd_sample(args, argv) -> int:
    spec = outcome_spec(args)
    config = SamplerConfig(spec, args.m_sphere, args.k, args.seed)
    hist = sample_branch_spheres(config)
    out = {"histogram": histogram_payload(hist, spec, args.seed)}
    out["manifest"] = manifest(args, argv, "float", prng_record(args.seed))
    if args.output:
        atomic_write(args.output, dumps(out))
    emit(out, args)
    return EXIT_OK


def report_payload(report) -> dict:
    return {
        "z_threshold": report.z_threshold,
        "tested": report.tested,
        "flagged": report.flagged,
        "allowed": report.allowed,
        "impossible_seen": report.impossible_seen,
        "passed": report.passed,
        "patterns": [
            {"pattern": r.pattern, "observed": r.observed, "expected_prob": r.expected_prob,
             "z": r.z if np.isfinite(r.z) else None, "flagged": r.flagged}
            for r in report.rows
        ],
    }


def cmd_pattern_test(args, argv) -> int:
    with open(args.input, encoding="utf-8") as fh:
        data = json.load(fh)
    data = data.get("histogram", data)
    hist = PatternHistogram.from_dict(int(data["m"]), int(data["m_sphere"]), data["counts"])
    if args.p is not None or args.probs is not None:
        spec = outcome_spec(args)
    else:
        spec = OutcomeSpec.from_probs([Fraction(x) for x in data["probs"]])
    report = pattern_frequency_test(hist, spec, args.z)
    out = report_payload(report)
    out["manifest"] = manifest(args, argv, "float")
    emit(out, args)
    return EXIT_OK if report.passed else EXIT_TEST_FAILED


def cmd_compare_branches(args, argv) -> int:
    spec_a = outcome_spec(args)
    spec_b = outcome_spec(args, "_b") if (args.p_b is not None or args.probs_b is not None) else spec_a
    hist_a = sample_branch_spheres(SamplerConfig(spec_a, args.m_sphere, args.k, args.seed_a))
    hist_b = sample_branch_spheres(SamplerConfig(spec_b, args.m_sphere, args.k, args.seed_b))
    res = branch_indistinguishability_test(hist_a, hist_b, args.significance)
    out = {
        "statistic": res.statistic,
        "dof": res.dof,
        "p_value": res.p_value,
        "critical_value": res.critical,
        "significance": res.significance,
        "pooled_cells": res.bins,
        "decision": "indistinguishable" if res.indistinguishable else "distinguishable",
    }
    if args.include_histograms:
        out["histogram_a"] = histogram_payload(hist_a, spec_a, args.seed_a)
        out["histogram_b"] = histogram_payload(hist_b, spec_b, args.seed_b)
    out["manifest"] = manifest(args, argv, "float", prng_record(args.seed_a, args.seed_b))
    emit(out, args)
    return EXIT_OK if res.indistinguishable else EXIT_TEST_FAILED


def cmd_replay(args, argv) -> int:
    with open(args.file, encoding="utf-8") as fh:
        data = json.load(fh)
    man = data.get("manifest", data)
    replay_argv = man.get("argv")
    if not isinstance(replay_argv, list) or not replay_argv or replay_argv[0] == "replay":
        raise UsageError(f"{args.file} holds no replayable manifest")
    return main(replay_argv)


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bornsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bornsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--json-out", help="also write the JSON result to this path")
        return p

    p = command("freq", cmd_freq, "frequency-operator variance / covariance matrix")
    add_probability_flags(p)
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--exact", action="store_true")

    p = command("confusion", cmd_confusion, "confusion-operator norm and its bounds")
    add_probability_flags(p)
    p.add_argument("--epsilon", type=fraction_arg, required=True)
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--mode", choices=("exact", "hoeffding", "gauss", "all"), default="all")
    p.add_argument("--log10", action="store_true", help="report log10 values only")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--rational-max-n", type=positive_int, default=RATIONAL_MAX_N)

    p = command("fig1", cmd_fig1, "binomial mass and operator spectra as CSV")
    p.add_argument("--p", type=fraction_arg, default=Fraction(1, 3))
    p.add_argument("--n", type=positive_int, default=500)
    p.add_argument("--epsilon", type=fraction_arg, default=Fraction(1, 10))
    p.add_argument("--output", default="fig1.csv")
    p.add_argument("--exact", action="store_true")

    p = command("huge", cmd_huge, "log10 Hoeffding bound for astronomically large N")
    p.add_argument("--log10-n", type=float, required=True)
    p.add_argument("--log10-epsilon", type=float, required=True, help="use -inf for epsilon = 0")

    p = command("decohere", cmd_decohere, "measurement + decoherence pointer statistics")
    add_probability_flags(p)
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--microstates", type=positive_int, default=1)
    p.add_argument("--ready-probs", type=fraction_list)
    p.add_argument("--epsilon", type=fraction_arg, required=True)
    p.add_argument("--path", choices=("auto", "dense", "class"), default="auto")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--rational-max-n", type=positive_int, default=RATIONAL_MAX_N)

    p = command("sample", cmd_sample, "sample sphere-pattern histogram of one branch")
    add_probability_flags(p)
    p.add_argument("--m-sphere", type=positive_int, required=True)
    p.add_argument("--k", type=positive_int, required=True)
    p.add_argument("--seed", type=seed_arg, required=True)
    p.add_argument("--output", help="write the histogram JSON here (input for pattern-test)")

    p = command("pattern-test", cmd_pattern_test, "z-test sampled patterns against Born products")
    p.add_argument("--input", required=True, help="histogram JSON written by `sample`")
    p.add_argument("--z", type=float, default=4.0)
    add_probability_flags(p, required=False)

    p = command("compare-branches", cmd_compare_branches, "two-sample chi-square across branches")
    add_probability_flags(p, default=Fraction(1, 3))
    add_probability_flags(p, suffix="-b", required=False)
    p.add_argument("--m-sphere", type=positive_int, default=8)
    p.add_argument("--k", type=positive_int, default=100_000)
    p.add_argument("--seed-a", type=seed_arg, required=True)
    p.add_argument("--seed-b", type=seed_arg, required=True)
    p.add_argument("--significance", type=float, default=0.01)
    p.add_argument("--include-histograms", action="store_true")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.set_defaults(func=cmd_replay)
    p.add_argument("file")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except CapacityError as exc:
        print(f"bornsim: capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (UsageError, DomainError, NormalizationError) as exc:
        print(f"bornsim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BornsimError, OSError, ValueError, KeyError) as exc:
        print(f"bornsim: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

import csv
import json
import math
from fractions import Fraction

import pytest

from bornsim.cli import atomic_write, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


class TestFreq:
    def test_reference_variance(self, capsys):
        code, out = run(capsys, "freq", "--p", "0.3333333333", "--n", "500")
        assert code == 0
        assert out["variance"] == pytest.approx(4.4444e-4, rel=1e-4)
        assert out["manifest"]["command"] == "freq"

    def test_zero(self, capsys):
        assert run(capsys, "freq", "--p", "0", "--n", "10")[1]["variance"] == 0

    def test_multinomial(self, capsys):
        out = run(capsys, "freq", "--probs", "0.5,0.25,0.25", "--n", "4")[1]
        assert out["covariance_matrix"][0][0] == pytest.approx(0.0625)

    def test_exact_rationals(self, capsys):
        out = run(capsys, "freq", "--p", "1/3", "--n", "500", "--exact")[1]
        assert out["variance"] == "1/2250"

    def test_flags_mutually_exclusive(self, capsys):
        assert main(["freq", "--p", "0.5", "--probs", "0.5,0.5", "--n", "3"]) == 2

    @pytest.mark.parametrize("argv", [["freq", "--n", "3"], ["freq", "--p", "x", "--n", "3"],
                                      ["freq", "--p", "0.5", "--n", "0"], ["nope"]])
    def test_usage_errors(self, argv):
        assert main(argv) == 2

    def test_unnormalized(self):
        assert main(["freq", "--probs", "0.5,0.6", "--n", "3"]) == 2


class TestConfusion:
    def test_hoeffding(self, capsys):
        out = run(capsys, "confusion", "--p", "0.33333", "--epsilon", "0.1", "--n", "500", "--mode", "hoeffding")[1]
        assert out["hoeffding"] == pytest.approx(9.08e-5, rel=1e-3)

    def test_large_epsilon(self, capsys):
        out = run(capsys, "confusion", "--p", "0.5", "--epsilon", "1.5", "--n", "10", "--mode", "exact")[1]
        assert out["exact"] == 0

    def test_five_ninths(self, capsys):
        out = run(capsys, "confusion", "--p", "0.333333", "--epsilon", "0.2", "--n", "3", "--mode", "exact")[1]
        assert out["exact"] == pytest.approx(0.555556, abs=1e-6)
        out = run(capsys, "confusion", "--p", "1/3", "--epsilon", "1/5", "--n", "3", "--mode", "exact", "--exact")[1]
        assert out["exact"] == "5/9"

    def test_log10_only(self, capsys):
        out = run(capsys, "confusion", "--p", "1/3", "--epsilon", "0.2", "--n", "100000", "--log10")[1]
        assert "exact" not in out and "hoeffding" not in out
        assert out["log10_exact"] < out["log10_hoeffding"] < -300
        assert out["regime"] == "log_domain"

    def test_capacity_exit(self):
        assert main(["confusion", "--probs", "0.25,0.25,0.25,0.25", "--epsilon", "0.1",
                     "--n", "2000", "--mode", "exact"]) == 3


class TestFig1:
    def read(self, path):
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))

    def test_defaults(self, capsys, tmp_path):
        path = tmp_path / "fig1.csv"
        code, out = run(capsys, "fig1", "--output", str(path))
        assert code == 0 and out["rows"] == 501
        rows = self.read(path)
        assert rows[0] == ["f", "binomial_mass", "frequency_eigenvalue", "confusion_indicator"]
        assert len(rows) == 502
        for n, row in enumerate(rows[1:]):
            assert int(row[3]) == int(abs(Fraction(n, 500) - Fraction(1, 3)) > Fraction(1, 10))
            assert float(row[0]) == float(row[2]) == n / 500
        assert math.fsum(float(r[1]) for r in rows[1:]) == pytest.approx(1, abs=1e-12)
        assert 0 < out["confusion_norm"] <= out["hoeffding"]
        raw = path.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")

    def test_sidecar_manifest(self, capsys, tmp_path):
        path = tmp_path / "f.csv"
        run(capsys, "fig1", "--output", str(path))
        man = json.loads((tmp_path / "f.csv.manifest.json").read_text())
        assert man["parameters"]["n"] == 500 and man["backend"] == "rational"

    def test_single_replica(self, capsys, tmp_path):
        path = tmp_path / "one.csv"
        run(capsys, "fig1", "--n", "1", "--output", str(path))
        rows = self.read(path)[1:]
        assert [float(r[2]) for r in rows] == [0.0, 1.0]

    def test_exact(self, capsys, tmp_path):
        path = tmp_path / "e.csv"
        run(capsys, "fig1", "--n", "3", "--epsilon", "1/5", "--exact", "--output", str(path))
        rows = self.read(path)[1:]
        assert [r[1] for r in rows] == ["8/27", "4/9", "2/9", "1/27"]
        assert [r[3] for r in rows] == ["1", "0", "1", "1"]
        assert sum(Fraction(r[1]) for r in rows) == 1

    def test_unwritable(self, tmp_path):
        assert main(["fig1", "--output", str(tmp_path / "missing" / "x.csv")]) == 2


class TestHuge:
    def test_astronomical_n(self, capsys):
        out = run(capsys, "huge", "--log10-n", "1000", "--log10-epsilon", "-100")[1]
        assert out["log10_bound_exponent"] == 799
        assert out["log10_bound_mantissa"] == pytest.approx(-8.686, abs=1e-3)
        assert out["log10_bound_float"] is None

    def test_cross_check(self, capsys):
        out = run(capsys, "huge", "--log10-n", "3", "--log10-epsilon", "-1")[1]
        assert out["log10_bound_float"] == pytest.approx(-8.385, abs=1e-3)
        conf = run(capsys, "confusion", "--p", "1/3", "--epsilon", "0.1", "--n", "1000", "--mode", "hoeffding")[1]
        assert out["log10_bound_float"] == pytest.approx(conf["log10_hoeffding"], abs=1e-9)

    def test_zero_epsilon(self, capsys):
        out = run(capsys, "huge", "--log10-n", "5", "--log10-epsilon=-inf")[1]
        assert out["log10_bound_float"] == pytest.approx(math.log10(2))


class TestDecohere:
    def test_trivial(self, capsys):
        out = run(capsys, "decohere", "--p", "0.333333", "--n", "3", "--microstates", "1", "--epsilon", "0.2")[1]
        assert out["within_epsilon_mass"] == pytest.approx(0.444444, abs=1e-6)
        assert out["trace"] == pytest.approx(1, abs=1e-12)

    def test_apparatus_independent(self, capsys):
        one = run(capsys, "decohere", "--p", "1/3", "--n", "4", "--epsilon", "0.2")[1]
        two = run(capsys, "decohere", "--p", "1/3", "--n", "4", "--microstates", "2",
                  "--ready-probs", "0.5,0.5", "--epsilon", "0.2")[1]
        assert two["within_epsilon_mass"] == pytest.approx(one["within_epsilon_mass"], abs=1e-12)

    def test_exact_class_path(self, capsys):
        out = run(capsys, "decohere", "--p", "1/3", "--n", "3", "--epsilon", "1/5", "--path", "class", "--exact")[1]
        assert out["within_epsilon_mass"] == "4/9"

    def test_ready_probs_length(self):
        assert main(["decohere", "--p", "0.5", "--n", "2", "--microstates", "3",
                     "--ready-probs", "0.5,0.5", "--epsilon", "0.1"]) == 2

    def test_dense_capacity(self):
        assert main(["decohere", "--p", "0.5", "--n", "20", "--path", "dense", "--epsilon", "0.1"]) == 3


class TestSampling:
    def test_deterministic(self, capsys):
        a = run(capsys, "sample", "--p", "0.3", "--m-sphere", "6", "--k", "5000", "--seed", "42")[1]
        b = run(capsys, "sample", "--p", "0.3", "--m-sphere", "6", "--k", "5000", "--seed", "42")[1]
        assert a == b
        assert a["manifest"]["prng"]["algorithm"] == "philox4x64-10"

    def test_sample_then_pattern_test(self, capsys, tmp_path):
        path = tmp_path / "h.json"
        assert main(["sample", "--p", "0.3", "--m-sphere", "8", "--k", "100000", "--seed", "1",
                     "--output", str(path)]) == 0
        capsys.readouterr()
        code, out = run(capsys, "pattern-test", "--input", str(path), "--z", "4")
        assert code == 0 and out["passed"]

    def test_pattern_test_failure_exit(self, capsys, tmp_path):
        path = tmp_path / "h.json"
        main(["sample", "--p", "0.3", "--m-sphere", "4", "--k", "100000", "--seed", "1", "--output", str(path)])
        capsys.readouterr()
        code, out = run(capsys, "pattern-test", "--input", str(path), "--p", "0.5")
        assert code == 4 and not out["passed"]

    def test_compare_same(self, capsys):
        code, out = run(capsys, "compare-branches", "--seed-a", "1", "--seed-b", "2", "--significance", "0.01")
        assert code == 0 and out["decision"] == "indistinguishable"

    def test_compare_different(self, capsys):
        code, out = run(capsys, "compare-branches", "--seed-a", "1", "--seed-b", "2", "--p-b", "0.5")
        assert code == 4 and out["decision"] == "distinguishable"

    def test_capacity(self):
        assert main(["sample", "--p", "0.5", "--m-sphere", "21", "--k", "10", "--seed", "1"]) == 3

    def test_thread_env_does_not_change_output(self, capsys, monkeypatch):
        monkeypatch.setenv("BORNSIM_THREADS", "1")
        a = run(capsys, "sample", "--p", "0.3", "--m-sphere", "5", "--k", "80000", "--seed", "7")[1]
        monkeypatch.setenv("BORNSIM_THREADS", "4")
        b = run(capsys, "sample", "--p", "0.3", "--m-sphere", "5", "--k", "80000", "--seed", "7")[1]
        assert a["histogram"] == b["histogram"]


class TestReplay:
    @pytest.mark.parametrize("argv", [
        ["confusion", "--p", "1/3", "--epsilon", "1/5", "--n", "30", "--exact"],
        ["sample", "--p", "0.3", "--m-sphere", "4", "--k", "3000", "--seed", "5"],
        ["decohere", "--p", "1/3", "--n", "3", "--microstates", "2", "--epsilon", "0.2"],
    ])
    def test_reproduces(self, capsys, tmp_path, argv):
        path = tmp_path / "run.json"
        assert main(argv + ["--json-out", str(path)]) == 0
        first = capsys.readouterr().out
        assert main(["replay", str(path)]) == 0
        assert capsys.readouterr().out == first

    def test_not_a_manifest(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("{}")
        assert main(["replay", str(path)]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["replay", str(tmp_path / "absent.json")]) == 1


def test_manifest_fields(capsys):
    man = run(capsys, "freq", "--p", "1/3", "--n", "5")[1]["manifest"]
    assert {"command", "parameters", "argv", "backend", "version"} <= man.keys()


def test_atomic_write_replaces(tmp_path):
    path = tmp_path / "out.txt"
    path.write_text("old")
    atomic_write(str(path), "new\n")
    assert path.read_text() == "new\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]

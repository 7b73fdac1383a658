import json
from fractions import Fraction as F

import pytest

from blockrand import moments, oracle
from blockrand.cli import run
from blockrand.formats import corpus_to_dict, dump_json, study_csv, table_to_dict
from blockrand.design import Assignment
from blockrand.outcomes import observe
from brute import table

ROWS = [[[1, 2], [3, 3], [0, 4], [2, 2], [5, 1]], [[1, 0], [2, 5], [3, 3], [4, 1]]]


@pytest.fixture
def files(tmp_path):
    design = tmp_path / "design.json"
    design.write_text(json.dumps({"r": 2, "block_sizes": [5, 4]}))
    small = tmp_path / "small.json"
    small.write_text(json.dumps({"r": 2, "block_sizes": [2, 4]}))
    tab = tmp_path / "table.json"
    tab.write_text(dump_json(table_to_dict(table(ROWS))))
    small_tab = tmp_path / "small_table.json"
    small_tab.write_text(dump_json(table_to_dict(table([[[1, 2], [3, 4]], [[0, 0], [1, 1], [2, 5], [3, 3]]]))))
    return tmp_path


def invoke(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestAssign:
    def test_byte_identical(self, files):
        a, b = files / "a.csv", files / "b.csv"
        for path in (a, b):
            assert run(["assign", "--design", str(files / "design.json"), "--seed", "1", "-o", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes().startswith(b"block_id,unit_index,treatment\n")
        assert b"\r" not in a.read_bytes()

    def test_env_seed_fallback(self, files, capsys, monkeypatch):
        _, explicit, _ = invoke(capsys, "assign", "--design", files / "design.json", "--seed", "42")
        monkeypatch.setenv("BLOCKRAND_SEED", "42")
        code, fallback, _ = invoke(capsys, "assign", "--design", files / "design.json")
        assert code == 0 and fallback == explicit

    def test_flag_overrides_env(self, files, capsys, monkeypatch):
        monkeypatch.setenv("BLOCKRAND_SEED", "not-a-number")
        code, _, _ = invoke(capsys, "assign", "--design", files / "design.json", "--seed", "3")
        assert code == 0

    def test_seed_required(self, files, capsys, monkeypatch):
        monkeypatch.delenv("BLOCKRAND_SEED", raising=False)
        code, _, err = invoke(capsys, "assign", "--design", files / "design.json")
        assert code == 1 and "--seed" in err

    def test_bad_env_seed(self, files, capsys, monkeypatch):
        monkeypatch.setenv("BLOCKRAND_SEED", "abc")
        code, _, err = invoke(capsys, "assign", "--design", files / "design.json")
        assert code == 1 and "BLOCKRAND_SEED" in err

    def test_complete_mode_balanced_overall(self, files, capsys):
        code, out, _ = invoke(capsys, "assign", "--design", files / "design.json", "--seed", "5", "--mode", "complete")
        labels = [int(line.split(",")[2]) for line in out.splitlines()[1:]]
        assert code == 0 and sorted([labels.count(1), labels.count(2)]) == [4, 5]


class TestEstimate:
    def test_roundtrip_with_table(self, files, capsys):
        csv_path = files / "a.csv"
        run(["assign", "--design", str(files / "design.json"), "--seed", "1", "-o", str(csv_path)])
        code, out, _ = invoke(
            capsys, "estimate", "--data", csv_path, "--design", files / "design.json",
            "--treatments", "1,2", "--table", files / "table.json", "--arithmetic", "rational",
        )
        assert code == 0
        report = json.loads(out)
        assert report["schema_version"] == 1
        assert [e["estimator"] for e in report["estimates"]] == ["diff", "ht"]
        assert all(isinstance(e["point"], str) for e in report["estimates"])

    def test_outcome_csv(self, files, capsys):
        t = table(ROWS)
        study = observe(t, Assignment(((1, 2, 1, 2, 1), (2, 1, 2, 1))))
        path = files / "study.csv"
        path.write_text(study_csv(study, exact=True))
        code, out, _ = invoke(
            capsys, "estimate", "--data", path, "--design", files / "design.json",
            "--treatments", "1,2", "--estimator", "diff", "--arithmetic", "rational",
        )
        from blockrand.estimators import sate_hat_diff, varhat_sate_diff

        est = json.loads(out)["estimates"][0]
        assert code == 0
        assert F(est["point"]) == sate_hat_diff(study, 1, 2)
        assert F(est["variance_estimate"]) == varhat_sate_diff(study, 1, 2)

    def test_outcomes_needed(self, files, capsys):
        csv_path = files / "a.csv"
        run(["assign", "--design", str(files / "design.json"), "--seed", "1", "-o", str(csv_path)])
        code, _, err = invoke(capsys, "estimate", "--data", csv_path, "--design", files / "design.json", "--treatments", "1,2")
        assert code == 1 and "--table" in err

    def test_small_block_variance_rejected(self, files, capsys):
        csv_path = files / "s.csv"
        run(["assign", "--design", str(files / "small.json"), "--seed", "1", "-o", str(csv_path)])
        args = ["estimate", "--data", csv_path, "--design", files / "small.json", "--treatments", "1,2",
                "--table", files / "small_table.json"]
        code, _, err = invoke(capsys, *args)
        assert code == 1 and "block sizes must be at least 2r" in err
        code, out, _ = invoke(capsys, *args, "--no-variance")
        assert code == 0 and json.loads(out)["estimates"][0]["variance_estimate"] is None

    def test_unbalanced_flag(self, files, capsys):
        path = files / "u.csv"
        lines = ["block_id,unit_index,treatment,outcome"]
        lines += [f"1,{k},{1 if k < 5 else 2},{k}" for k in range(1, 6)]
        lines += [f"2,{k},{1 + k % 2},{k}" for k in range(1, 5)]
        path.write_text("\n".join(lines) + "\n")
        code, out, _ = invoke(capsys, "estimate", "--data", path, "--design", files / "design.json",
                              "--treatments", "1,2", "--no-variance")
        assert code == 0
        assert all("unbalanced_assignment" in e["flags"] for e in json.loads(out)["estimates"])

    def test_bad_treatments(self, files, capsys):
        code, _, err = invoke(capsys, "estimate", "--data", files / "x.csv", "--design", files / "design.json",
                              "--treatments", "1-2")
        assert code == 1 and "--treatments" in err

    def test_text_format(self, files, capsys):
        csv_path = files / "a.csv"
        run(["assign", "--design", str(files / "design.json"), "--seed", "1", "-o", str(csv_path)])
        code, out, _ = invoke(capsys, "estimate", "--data", csv_path, "--design", files / "design.json",
                              "--treatments", "1,2", "--table", files / "table.json", "--format", "text")
        assert code == 0 and "schema_version: 1" in out and "estimator: ht" in out


class TestMoments:
    def test_rational_values(self, files, capsys):
        code, out, _ = invoke(capsys, "moments", "--table", files / "table.json", "--design", files / "design.json",
                              "--treatments", "1,2", "--arithmetic", "rational")
        report = json.loads(out)
        t = table(ROWS)
        assert code == 0 and report["schema_version"] == 1
        assert F(report["var_diff"]) == moments.var_sate_diff(t, 1, 2)
        assert F(report["var_star_ht"]) == moments.var_star(t, 1, 2, "ht")
        assert sum(F(b["var_ht"]) for b in report["per_block"]) == F(report["var_ht"])

    def test_design_mismatch(self, files, capsys):
        code, _, err = invoke(capsys, "moments", "--table", files / "table.json", "--design", files / "small.json",
                              "--treatments", "1,2")
        assert code == 1 and "does not match" in err

    def test_malformed_json(self, files, capsys):
        bad = files / "bad.json"
        bad.write_text('{"r": 2, "block_size": [4]}')
        code, _, err = invoke(capsys, "moments", "--table", files / "table.json", "--design", bad, "--treatments", "1,2")
        assert code == 1 and "block_size" in err

    def test_missing_file(self, files, capsys):
        code, _, err = invoke(capsys, "moments", "--table", files / "nope.json", "--design", files / "design.json",
                              "--treatments", "1,2")
        assert code == 1 and "cannot read" in err


class TestVerify:
    def _corpus(self, files):
        path = files / "corpus.json"
        cases = [c for c in oracle.default_corpus() if c.design.block_sizes in ((4,), (3, 4))][:6]
        path.write_text(dump_json(corpus_to_dict(cases)))
        return path

    def test_corpus_file_passes(self, files, capsys):
        code, out, err = invoke(capsys, "verify", "--corpus", self._corpus(files))
        report = json.loads(out)
        assert code == 0 and report["passed"] and report["schema_version"] == 1
        assert "PASS" in err
        assert all(isinstance(c["lhs"], str) for c in report["checks"])

    def test_identity_filter_and_text(self, files, capsys):
        code, out, _ = invoke(capsys, "verify", "--corpus", self._corpus(files), "--identity", "sate-unbiased",
                              "--format", "text")
        assert code == 0 and "sate-unbiased" in out and "sate-variance" not in out

    def test_failure_exit_code(self, files, capsys, monkeypatch):
        original = moments.var_sate_diff
        monkeypatch.setattr(moments, "var_sate_diff", lambda t, s, u, design=None: original(t, s, u) + 1)
        code, out, _ = invoke(capsys, "verify", "--corpus", self._corpus(files), "--identity", "sate-variance")
        assert code == 2 and not json.loads(out)["passed"]

    def test_unknown_identity(self, capsys):
        code, _, err = invoke(capsys, "verify", "--identity", "nope")
        assert code == 1 and "invalid choice" in err

    def test_default_corpus(self, capsys):
        code, out, _ = invoke(capsys, "verify", "--format", "text")
        assert code == 0 and out.strip().splitlines()[-1].startswith("PASS")


class TestSimulate:
    def args(self, files, *extra):
        return ["simulate", "--table", files / "table.json", "--design", files / "design.json",
                "--treatments", "1,2", "-R", "3000", *extra]

    def test_deterministic_and_worker_independent(self, files, capsys):
        _, a, _ = invoke(capsys, *self.args(files, "--seed", "7"))
        _, b, _ = invoke(capsys, *self.args(files, "--seed", "7", "--workers", "3", "--batch-size", "4096"))
        assert a == b
        report = json.loads(a)
        assert set(report["results"]) == {"diff", "ht", "varhat_diff", "varhat_ht"}
        assert {"delta", "var_diff", "var_ht", "var_star_diff", "var_star_ht"} <= set(report["theoretical"])
        assert report["comparison"]["divisible"] is False

    def test_seed_required(self, files, capsys, monkeypatch):
        monkeypatch.delenv("BLOCKRAND_SEED", raising=False)
        code, _, err = invoke(capsys, *self.args(files))
        assert code == 1 and "seed" in err

    def test_small_r(self, files, capsys):
        code, _, err = invoke(capsys, *self.args(files, "--seed", "1")[:-2], "-R", "1", "--seed", "1")
        assert code == 1 and "at least 2" in err

    def test_unknown_flag(self, files, capsys):
        code, _, err = invoke(capsys, *self.args(files, "--seed", "1", "--threads", "2"))
        assert code == 1 and "--threads" in err

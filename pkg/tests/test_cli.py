import csv
import io
import json
import subprocess
import sys

import pytest

from doublemetrics.cli import SUBCOMMANDS, run


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code, rep = run([str(a) for a in argv], stdout=out, stderr=err)
    return code, rep, out.getvalue(), err.getvalue()


@pytest.fixture
def fx(fixtures_dir):
    return lambda name: str(fixtures_dir / name)


# ---- exit codes ----------------------------------------------------------------

def test_validate_p3_ok(fx):
    code, rep, out, _ = call("validate", "--input", fx("p3_space.json"))
    assert code == 0 and rep.passed
    assert json.loads(out)["checks"][0]["passed"]


def test_validate_cross_ok(fx):
    code, rep, _, _ = call("validate", "--input", fx("p3_cross_ones.json"))
    assert code == 0
    assert [c["name"] for c in rep.checks] == ["metric axioms", "cross metric axioms"]


@pytest.mark.parametrize("name", ["p3_cross_bad.json", "p3_bad_triangle.json"])
def test_validate_failure_exit_1(fx, name):
    code, rep, out, err = call("validate", "--input", fx(name))
    assert code == 1 and not rep.passed
    assert "FAILED" in err
    failed = [c for c in json.loads(out)["checks"] if not c["passed"]]
    assert failed and failed[0]["detail"]


def test_unknown_subcommand_exit_2():
    code, rep, _, err = call("frobnicate")
    assert code == 2 and rep is None
    assert "unknown subcommand" in err


def test_missing_required_input_exit_2():
    assert call("compose")[0] == 2


def test_missing_file_exit_3(tmp_path):
    code, _, _, err = call("validate", "--input", tmp_path / "nope.json")
    assert code == 3 and "no such file" in err


def test_bad_json_reports_location(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"dist": [[0, 1],\n [1, 0]],, }')
    code, _, _, err = call("validate", "--input", p)
    assert code == 3
    assert ":2:" in err


def test_bad_number_exit_3(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"dist": [["0", "x"], ["1", "0"]]}))
    assert call("validate", "--input", p)[0] == 3


def test_invalid_cross_rejected_before_compute(fx):
    code, _, _, err = call("star", "--input", fx("p3_cross_bad.json"))
    assert code == 3 and "mixed triangle" in err


def test_invalid_prefix_map_exit_3(tmp_path):
    p = tmp_path / "map.json"
    p.write_text(json.dumps({"pairs": [{"u": "0", "v": "000", "C": 1}]}))
    code, _, _, err = call("tree-roundtrip", "--input", p, "--depth", 4)
    assert code == 3 and "depth change" in err


# ---- subcommand results ----------------------------------------------------------

def test_sphi_example1(fx):
    code, rep, _, _ = call("sphi-enumerate", "--input", fx("example1_sphi.json"))
    assert code == 0
    assert rep.results["alpha_class_count"] == 7
    assert rep.results["element_count"] == 17
    assert rep.results["semigroup_size"] == 209


@pytest.mark.parametrize("name,count", [("example2_n3_k1.json", 14), ("example2_n4_k2.json", 21)])
def test_sphi_example2(fx, name, count):
    code, rep, _, _ = call("sphi-enumerate", "--input", fx(name))
    assert code == 0 and rep.results["element_count"] == count


def test_tree_roundtrip_swap(fx):
    code, rep, _, _ = call("tree-roundtrip", "--input", fx("tree_swap.json"), "--depth", 6)
    assert code == 0
    assert rep.results["recovered = input"] is True


def test_tree_roundtrip_with_tree_file(fx):
    code, rep, _, _ = call("tree-roundtrip", "--input", fx("tree_mixed.json"), "--input2", fx("binary_tree_d8.json"))
    assert code == 0 and rep.results["recovered = input"] is True


def test_euclid_roundtrip(fx):
    code, rep, _, _ = call("euclid-roundtrip", "--input", fx("rotation_137.json"))
    assert code == 0 and rep.passed


def test_equivalence_and_csv_artifact(fx, tmp_path):
    out = tmp_path / "eq.json"
    code, rep, _, _ = call("equivalence", "--input", fx("line_family_A.json"), "--input2", fx("line_family_B.json"), "--out", out)
    assert code == 0
    assert json.loads(out.read_text())["results"]["status"] == "EQUIVALENT_AT_SCALE"
    rows = list(csv.reader((tmp_path / "eq.profile.csv").open()))
    assert rows[0] == ["scale", "threshold", "phi_forward", "phi_backward"]
    assert len(rows) > 1


def test_subset_metric_labels(fx):
    code, rep, _, _ = call("subset-metric", "--input", fx("p3_space.json"), "--subset", "a,c")
    assert code == 0
    assert rep.results["cross"] == [["1", "2", "3"], ["2", "3", "2"], ["3", "2", "1"]]


def test_corollary_subcommand():
    code, rep, _, _ = call("corollary-check", "--depth", 5)
    assert code == 0 and rep.passed


@pytest.mark.parametrize("sub", ["compose", "star", "idempotent"])
def test_seeded_algebra(sub):
    code, rep, _, _ = call(sub, "--seed", 3)
    assert code == 0 and rep.passed


def test_every_subcommand_dispatches():
    assert len(SUBCOMMANDS) == 15
    for sub in SUBCOMMANDS:
        # no inputs: either a usage error or a seeded/default run, never a crash
        code, _, _, _ = call(sub, "--seed", 1, "--depth", 3, "--rmax", 10)
        assert code in (0, 1, 2)


# ---- determinism, atomicity, config ---------------------------------------------------

@pytest.mark.parametrize("argv", [
    ("compose", "--input", "p3_cross_ones.json", "--input2", "p3_cross_ones.json"),
    ("sphi-enumerate", "--input", "example1_sphi.json"),
    ("tree-roundtrip", "--input", "tree_shift.json", "--depth", "6"),
    ("profile", "--input", "line_family_A.json", "--input2", "line_family_B.json"),
])
def test_payload_deterministic(fx, tmp_path, argv):
    argv = [fx(a) if a.endswith(".json") else a for a in argv]
    texts = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        assert call(*argv, "--out", out)[0] == 0
        doc = json.loads(out.read_text())
        doc.pop("duration_s")
        texts.append(json.dumps(doc, sort_keys=True))
    assert texts[0] == texts[1]


def test_no_output_on_malformed_input(fx, tmp_path):
    out = tmp_path / "r.json"
    assert call("star", "--input", fx("p3_cross_bad.json"), "--out", out)[0] == 3
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_existing_report_untouched_on_failure(fx, tmp_path):
    out = tmp_path / "r.json"
    out.write_text("previous")
    assert call("star", "--input", fx("p3_cross_bad.json"), "--out", out)[0] == 3
    assert out.read_text() == "previous"


def test_config_file_and_flag_override(fx, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"thresholds": [1, 3], "window": 2}))
    args = ("profile", "--input", fx("line_family_A.json"), "--input2", fx("line_family_B.json"), "--config", cfg)
    thresholds = lambda rep: sorted({row[1] for row in rep.results["rows"]})
    _, rep, _, _ = call(*args)
    assert thresholds(rep) == ["1", "3"]
    _, rep2, _, _ = call(*args, "--thresholds", "2")
    assert thresholds(rep2) == ["2"]
    assert rep.inputs_digest != rep2.inputs_digest


def test_bad_config_value(fx, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"window": "many"}))
    assert call("validate", "--input", fx("p3_space.json"), "--config", cfg)[0] == 3


def test_threads_env(fx, monkeypatch):
    monkeypatch.setenv("WORKBENCH_THREADS", "4")
    assert call("validate", "--input", fx("p3_space.json"))[0] == 0
    monkeypatch.setenv("WORKBENCH_THREADS", "zero")
    assert call("validate", "--input", fx("p3_space.json"))[0] == 3


def test_console_entry_point(fx):
    proc = subprocess.run(
        [sys.executable, "-m", "doublemetrics.cli", "validate", "--input", fx("p3_space.json")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["subcommand"] == "validate"

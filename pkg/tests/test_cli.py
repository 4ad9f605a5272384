import csv
import io
import json

import numpy as np
import pytest

from psyeval import cli
from psyeval.errors import SingularMatrixError

BASE = """\
[scale]
min_score = 1
max_score = 5
group_column = group

[efa]
replicates = 200

[simulate]
n = 300
likert_min = 1
likert_max = 5
dif_items = q2
dif_magnitude = 0.6

[fairness]
dichotomize_threshold = 4
"""


def _run(*argv):
    out = io.StringIO()
    return cli.run(list(argv), stdout=out), out.getvalue()


@pytest.fixture
def workspace(tmp_path):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(BASE, encoding="utf-8")
    rc, _ = _run("simulate", "--config", str(cfg), "--seed", "3", "--out-dir", str(tmp_path / "sim"))
    assert rc == cli.EXIT_OK
    return tmp_path, cfg, tmp_path / "sim" / "simulated.csv"


class TestExitCodes:
    def test_misspelled_config_key(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[efa]\nrotaton = varimax\n", encoding="utf-8")
        rc, _ = _run("simulate", "--config", str(cfg), "--out-dir", str(tmp_path))
        assert rc == cli.EXIT_USAGE

    def test_unknown_subcommand(self):
        assert _run("frobnicate")[0] == cli.EXIT_USAGE

    def test_missing_input_flag(self):
        assert _run("efa")[0] == cli.EXIT_USAGE

    def test_missing_input_file(self, workspace):
        tmp, cfg, _ = workspace
        rc, _ = _run("efa", "--config", str(cfg), "--input", str(tmp / "nope.csv"), "--out-dir", str(tmp))
        assert rc == cli.EXIT_DATA

    def test_out_of_range_score(self, workspace):
        tmp, cfg, _ = workspace
        data = tmp / "bad.csv"
        data.write_text("participant_id,q1,q2,group\na,1,9,x\nb,2,3,y\n", encoding="utf-8")
        rc, _ = _run("item-analysis", "--config", str(cfg), "--input", str(data), "--out-dir", str(tmp))
        assert rc == cli.EXIT_DATA

    def test_numerical_failure(self, workspace, monkeypatch):
        tmp, cfg, data = workspace

        def boom(*args, **kwargs):
            raise SingularMatrixError("forced")

        monkeypatch.setattr("psyeval.report.correlation_matrix", boom)
        rc, _ = _run("efa", "--config", str(cfg), "--input", str(data), "--out-dir", str(tmp))
        assert rc == cli.EXIT_NUMERIC


class TestSubcommands:
    @pytest.mark.parametrize(
        "command, key",
        [
            ("item-analysis", "item_analysis"),
            ("efa", "efa"),
            ("standardize", "standardization"),
            ("reliability", "reliability"),
            ("dif", "fairness"),
        ],
    )
    def test_json_output(self, workspace, command, key):
        tmp, cfg, data = workspace
        out_dir = tmp / command
        rc, stdout = _run(command, "--config", str(cfg), "--input", str(data), "--out-dir", str(out_dir), "--format", "json")
        assert rc == cli.EXIT_OK
        report = json.loads(stdout)
        assert report["command"] == command
        assert key in report
        assert (out_dir / f"{command}.json").read_text(encoding="utf-8") == stdout

    def test_efa_writes_scree(self, workspace):
        tmp, cfg, data = workspace
        rc, _ = _run("efa", "--config", str(cfg), "--input", str(data), "--out-dir", str(tmp / "e"))
        assert rc == cli.EXIT_OK
        with (tmp / "e" / "scree.csv").open(encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 12
        assert (tmp / "e" / "scree.svg").exists()

    def test_dif_flags_injected_item(self, workspace):
        tmp, cfg, data = workspace
        rc, stdout = _run("dif", "--config", str(cfg), "--input", str(data), "--out-dir", str(tmp), "--format", "json")
        assert rc == cli.EXIT_OK
        flagged = {d["item"] for d in json.loads(stdout)["fairness"]["dif"] if d["flagged"] and d["method"] == "mh"}
        assert "q2" in flagged

    def test_text_report(self, workspace):
        tmp, cfg, data = workspace
        rc, stdout = _run("report", "--config", str(cfg), "--input", str(data), "--out-dir", str(tmp / "r"))
        assert rc == cli.EXIT_OK
        for heading in ("Item analysis", "Reliability", "Fairness"):
            assert heading in stdout

    def test_retest_and_validity(self, tmp_path):
        cfg = tmp_path / "retest.ini"
        cfg.write_text(
            "[scale]\nmin_score = -100\nmax_score = 100\n[simulate]\nmodel = retest\nn = 500\nreliability = 0.8\n",
            encoding="utf-8",
        )
        sim = tmp_path / "sim"
        assert _run("simulate", "--config", str(cfg), "--out-dir", str(sim))[0] == cli.EXIT_OK
        args = ["--config", str(cfg), "--input", str(sim / "simulated.csv"), "--input2", str(sim / "simulated_retest.csv")]
        rc, stdout = _run("reliability", *args, "--out-dir", str(tmp_path), "--format", "json")
        assert rc == cli.EXIT_OK
        assert json.loads(stdout)["reliability"]["test_retest"]["value"] == pytest.approx(0.8, abs=0.06)
        rc, stdout = _run("validity", *args, "--out-dir", str(tmp_path), "--format", "json")
        assert rc == cli.EXIT_OK
        assert "concurrent" in json.loads(stdout)["validity"]

    def test_validity_without_sources(self, workspace):
        tmp, cfg, data = workspace
        rc, _ = _run("validity", "--config", str(cfg), "--input", str(data), "--out-dir", str(tmp))
        assert rc == cli.EXIT_USAGE


class TestDeterminism:
    def test_seed_controls_output(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(BASE, encoding="utf-8")
        outputs = []
        for run, seed in (("a", "5"), ("b", "5"), ("c", "6")):
            out = tmp_path / run
            _run("simulate", "--config", str(cfg), "--seed", seed, "--out-dir", str(out))
            _run("efa", "--config", str(cfg), "--input", str(out / "simulated.csv"), "--seed", seed, "--out-dir", str(out))
            outputs.append((out / "efa.json").read_bytes())
        assert outputs[0] == outputs[1]
        assert outputs[0] != outputs[2]

    def test_env_override_changes_sample_size(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(BASE, encoding="utf-8")
        monkeypatch.setenv("PSYEVAL_SIMULATE__N", "40")
        assert _run("simulate", "--config", str(cfg), "--out-dir", str(tmp_path))[0] == cli.EXIT_OK
        rows = (tmp_path / "simulated.csv").read_text(encoding="utf-8").strip().splitlines()
        assert len(rows) == 41
        spec = json.loads((tmp_path / "simulated.spec.json").read_text(encoding="utf-8"))
        assert spec["n"] == 40
        assert np.array(spec["loadings"]).shape == (12, 3)

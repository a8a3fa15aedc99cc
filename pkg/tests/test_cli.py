import pytest

from rdex_csop import cli


def test_list(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert "sphere-eq" in out and "D=2" in out


def test_verify_passes(capsys):
    assert cli.main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 9


def test_unknown_flag_exits_nonzero():
    with pytest.raises(SystemExit) as e:
        cli.main(["run", "--frobnicate"])
    assert e.value.code != 0


def test_run_rejects_unknown_problem_before_writing(tmp_path, capsys):
    out = tmp_path / "tr"
    code = cli.main(["run", "--problems", "nope", "--dim", "3", "--out", str(out)])
    assert code != 0 and not out.exists()
    assert "nope" in capsys.readouterr().err


def test_run_targets_stats_pipeline(tmp_path, capsys):
    out = tmp_path / "tr"
    args = ["run", "--problems", "sphere-eq,sphere-linear-ineq", "--dim", "3", "--runs", "3",
            "--max-fe", "1200", "--n0", "24", "--checkpoints", "40", "--out", str(out)]
    assert cli.main(args) == 0
    first = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    assert len(first) == 6
    assert cli.main(args) == 0  # everything resumed
    assert first == {p.name: p.read_bytes() for p in out.glob("*.csv")}
    assert cli.main(["targets", str(out), "--out", str(tmp_path / "t.csv")]) == 0
    stem = tmp_path / "rep"
    assert cli.main(["stats", f"A={out}", f"B={out}", "--targets", str(tmp_path / "t.csv"), "--out", str(stem)]) == 0
    text = (tmp_path / "rep.txt").read_text()
    assert "Friedman" in text and (tmp_path / "rep.csv").exists()
    assert "+" not in [line.split(",")[9] for line in (tmp_path / "rep.csv").read_text().splitlines()[1:]]


def test_stats_missing_dir(tmp_path, capsys):
    assert cli.main(["stats", f"A={tmp_path / 'no'}", f"B={tmp_path / 'no2'}"]) != 0

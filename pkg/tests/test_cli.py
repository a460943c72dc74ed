import json

import pytest

from smtforest.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--missing", "2"],
        ["simulate", "--nodes", "0"],
        ["simulate", "--bogus"],
        ["analyze-lc", "--clvl", "40"],
        ["analyze-direct", "--leaves", "1"],
        ["simulate", "--format", "xml"],
        [],
    ],
)
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


SIM = ["simulate", "--nodes", "400", "--weeks", "1", "--missing", "0.5", "--seed", "1"]


def test_simulate_is_byte_identical(capsys):
    _, a = run(capsys, *SIM)
    _, b = run(capsys, *SIM)
    assert a == b
    assert a.startswith("# smtforest simulate\n# seed: 1\n# config: ")
    lines = [line for line in a.splitlines() if not line.startswith("#")]
    assert "failed_repair_share" in lines[0] and len(lines) == 2


def test_simulate_json_and_plot(tmp_path, capsys):
    out = tmp_path / "sim.json"
    code, text = run(capsys, *SIM, "--format", "json", "--out", str(out), "--plot")
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["seed"] == 1 and doc["rows"][0]["missing_share"] == 0.5
    assert (tmp_path / "sim.png").stat().st_size > 1000
    assert "# figure" in text


def test_analyze_lc(capsys):
    code, text = run(capsys, "analyze-lc", "--clvl", "7", "--target", "0.10")
    assert code == 0
    assert "max m = 13" in text


def test_analyze_lc_monte_carlo_plot(tmp_path, capsys):
    out = tmp_path / "lc.csv"
    code, _ = run(capsys, "analyze-lc", "--clvl", "4", "7", "--m", "1", "8", "--trials", "2000", "--out", str(out), "--plot")
    assert code == 0
    body = out.read_text()
    assert "monte_carlo" in body and (tmp_path / "lc.png").exists()


def test_analyze_direct(tmp_path, capsys):
    out = tmp_path / "direct.csv"
    code, _ = run(capsys, "analyze-direct", "--leaves", "300", "--trials", "40", "--m", "1", "4", "--out", str(out), "--plot")
    assert code == 0
    rows = [line for line in out.read_text().splitlines() if not line.startswith("#")]
    assert rows[0].startswith("m,") and len(rows) == 3
    assert (tmp_path / "direct.png").exists()


def test_demo_prints_sizes(capsys):
    code, text = run(capsys, "demo", "--stub-crypto")
    assert code == 0
    assert "contact message: 115 B" in text
    assert "primer: 50 B" in text
    assert "LC_REPAIR_RESPONSE" in text and "POI_RESPONSE" in text and "CA_POI_RESPONSE" in text
    assert text.rstrip().endswith("all demo proofs valid: True")

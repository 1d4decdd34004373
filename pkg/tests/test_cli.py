import json
import subprocess
import sys
from pathlib import Path

import pytest

from finslercomp.cli import main
from finslercomp.errors import ConfigError
from finslercomp.scenarios import bundled_dir, list_scenarios, load_scenario

TINY = (Path(bundled_dir()) / "flat-torus.toml").read_text()
TINY = TINY.replace('id = "flat-torus"', 'id = "tiny"')
TINY = "\n".join(
    'checks = ["cor_1_2", "cor_1_3"]' if line.startswith("checks =") else line for line in TINY.splitlines()
)


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


def test_list_bundled(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 6
    assert any(line.startswith("sphere-point") for line in lines)


def test_list_filter(capsys):
    assert main(["list", "--check", "example_1_5"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert [line.split()[0] for line in out] == ["example-1-5-sweep"]
    assert len(list_scenarios("thm_4_8")) < len(list_scenarios())


def test_list_empty_filter(capsys):
    assert main(["list", "--check", "no_such_check"]) == 0
    assert capsys.readouterr().out == ""


def test_bundled_configs_parse():
    for p in sorted(Path(bundled_dir()).glob("*.toml")):
        sc = load_scenario(p)
        assert sc.id == p.stem
        assert sc.checks


@pytest.mark.parametrize(
    "edit",
    [
        lambda s: s.replace('family = "flat_torus"', 'family = "klein_bottle"'),
        lambda s: s.replace('"cor_1_2"', '"theorem_9_9"'),
        lambda s: s.replace("[metric]", "[metric"),
        lambda s: s.replace("axis = 0", "axis = 7"),
    ],
    ids=["unknown-family", "unknown-check", "syntax", "bad-submanifold"],
)
def test_corrupted_config(tmp_path, edit, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(edit(TINY))
    with pytest.raises(ConfigError):
        load_scenario(p)
    out = tmp_path / "out"
    assert main(["run", str(p), "--out-dir", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())


def test_bad_flags(tiny, tmp_path):
    assert main(["run", str(tiny), "--workers", "0", "--out-dir", str(tmp_path / "o")]) == 2
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == 2


def test_run_and_determinism(tiny, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(tiny), "--out-dir", str(a)]) == 0
    assert main(["run", str(tiny), "--out-dir", str(b), "--workers", "2"]) == 0
    ra = (a / "tiny.report.json").read_bytes()
    assert ra == (b / "tiny.report.json").read_bytes()
    rep = json.loads(ra)
    assert all(r["passed"] for r in rep["rows"])
    assert (a / "tiny.margins.csv").read_text().splitlines()[0].startswith("check")
    # every row says which inputs were sampled
    assert all("conditional" in r and "sampled" in r for r in rep["rows"])


def test_seed_changes_samples(tiny, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", str(tiny), "--out-dir", str(a), "--seed", "1"])
    main(["run", str(tiny), "--out-dir", str(b), "--seed", "2"])
    assert (a / "tiny.report.json").read_bytes() != (b / "tiny.report.json").read_bytes()


def test_failing_check_still_writes_report(tmp_path, capsys):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY.replace("injectivity = 0.5", "injectivity = 0.01"))
    out = tmp_path / "out"
    assert main(["run", str(p), "--out-dir", str(out)]) == 1
    rep = json.loads((out / "tiny.report.json").read_text())
    failed = [r["check"] for r in rep["rows"] if not r["passed"]]
    assert failed and all(c.startswith("cor_1_3") for c in failed)
    assert "FAIL" in capsys.readouterr().out


def test_tolerance_scale(tmp_path):
    # a larger tolerance cannot turn the failing injectivity row (margin ~ -0.26) into a pass
    p = tmp_path / "tiny.toml"
    p.write_text(TINY.replace("injectivity = 0.5", "injectivity = 0.01"))
    assert main(["run", str(p), "--out-dir", str(tmp_path / "o"), "--tolerance-scale", "10"]) == 1


def test_module_entry_point(tiny, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "finslercomp", "run", str(tiny), "--out-dir", str(tmp_path / "o")],
        capture_output=True, text=True, timeout=600,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("PASS tiny")

import os
import stat

import pytest

from diffdomain import __version__
from diffdomain.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, main
from diffdomain.config import OUTPUT_ENV
from diffdomain.io import read_sweep_csv

TINY = """
[grid]
nx = 16
[time]
steps = 8
[sweep]
epsilons = ["1/8", "1/16"]
"""


@pytest.fixture
def cfg(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_run(cfg, tmp_path, capsys):
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o"), "--epsilon", "1/16"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "epsilon=0.0625" in out and "l2_error=" in out
    assert (tmp_path / "o" / "run_eps0.0625.csv").is_file()


def test_sweep_writes_table(cfg, tmp_path, capsys):
    csv = tmp_path / "t.csv"
    assert main(["sweep", str(cfg), "--csv", str(csv), "--output-dir", str(tmp_path / "o")]) == EXIT_OK
    assert len(read_sweep_csv(csv).reports) == 2
    assert "H1 error" in capsys.readouterr().out


def test_env_var_sets_output(cfg, tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["sweep", str(cfg)]) == EXIT_OK
    assert (tmp_path / "env" / "sweep.csv").is_file()


@pytest.mark.parametrize("what, fmt", [("omega", "csv"), ("error", "vtk")])
def test_field(cfg, tmp_path, what, fmt):
    out = tmp_path / f"f.{fmt}"
    assert main(["field", str(cfg), "--what", what, "--format", fmt, "--out", str(out)]) == EXIT_OK
    assert out.stat().st_size > 0


def test_verify_subset(capsys):
    assert main(["verify", "--check", "temporal-order", "--check", "volume"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("PASS") and lines[1].startswith("PASS")
    assert lines[-1].startswith("2/2")


def test_verify_failure_code(monkeypatch):
    from diffdomain import verify

    monkeypatch.setitem(verify.CHECKS, "always-fails", lambda: verify.CheckResult("x", 1.0, 0.0, False))
    assert main(["verify", "--check", "always-fails"]) == EXIT_CHECK_FAILED


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["run", "no-such-preset"],
    ["run", "quick_table1_circle", "--epsilon", "0"],
    ["run", "quick_table1_circle", "--epsilon", "1/2"],
    ["run", "quick_table1_circle", "--workers", "0"],
    ["verify", "--check", "nope"],
])
def test_config_errors(argv):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_CONFIG


def test_solver_failure(cfg, tmp_path):
    cfg.write_text(TINY + "[solver]\nmax_iter = 1\npreconditioner = \"none\"\n")
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == EXIT_SOLVER


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores permission bits")
def test_unwritable_output_permissions(cfg, tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(stat.S_IRUSR | stat.S_IXUSR)
    assert main(["sweep", str(cfg), "--output-dir", str(ro / "x")]) == EXIT_IO


def test_output_path_is_a_file(cfg, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["sweep", str(cfg), "--output-dir", str(blocker / "sub")]) == EXIT_IO

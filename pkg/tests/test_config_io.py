import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import expit

from diffdomain.config import (OUTPUT_ENV, ExperimentConfig, check_halving, from_mapping, load_config,
                               parse_epsilon, preset_names)
from diffdomain.errors import ConfigurationError, OutputError
from diffdomain.experiment import dump_field, run_single, run_sweep
from diffdomain.fem import StructuredGrid
from diffdomain.io import (FieldDump, SweepWriter, ensure_directory, read_field_csv, read_sweep_csv, read_vtk,
                           write_sweep_csv, write_vtk)
from diffdomain.norms import ErrorReport, SweepResult

TINY = {
    "grid": {"nx": 16},
    "time": {"steps": 8},
    "sweep": {"epsilons": ["1/8", "1/16"]},
}


def tiny(tmp_path, **extra):
    raw = {**TINY, "output": {"dir": str(tmp_path / "out"), "format": extra.pop("fmt", "csv")}}
    raw.update(extra)
    return from_mapping(raw, env={})


class TestConfig:
    def test_presets_load(self):
        names = preset_names()
        assert {"table1_circle", "table2_flower", "quick_table1_circle"} <= set(names)
        for name in names:
            cfg = load_config(name, env={})
            assert cfg.source == f"preset:{name}"
            check_halving(cfg.epsilons)

    def test_full_scale_preset(self):
        cfg = load_config("table1_circle", env={})
        assert (cfg.nx, cfg.ny, cfg.steps, cfg.T) == (512, 512, 512, 0.5)
        assert cfg.epsilons == (1 / 8, 1 / 16, 1 / 32, 1 / 64)

    @pytest.mark.parametrize("raw, value", [("1/8", 0.125), (0.25, 0.25), ("0.5", 0.5), (1, 1.0)])
    def test_parse_epsilon(self, raw, value):
        assert parse_epsilon(raw) == value

    @pytest.mark.parametrize("raw", ["1/0", "abc", -1.0, 0, True, "nan", math.inf])
    def test_parse_epsilon_rejects(self, raw):
        with pytest.raises(ConfigurationError):
            parse_epsilon(raw)

    def test_halving_enforced(self):
        with pytest.raises(ConfigurationError, match="halve"):
            from_mapping({"sweep": {"epsilons": ["1/8", "1/32"]}}, env={})

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="grid.nz"):
            from_mapping({"grid": {"nz": 4}}, env={})

    @pytest.mark.parametrize("raw", [
        {"grid": {"nx": 2.5}}, {"grid": {"nx": 0}}, {"domain": {"kind": "square"}},
        {"solver": {"preconditioner": "ilu"}}, {"output": {"format": "hdf5"}},
        {"quadrature": {"order": 11}}, {"extension": {"g": "sideways"}}, {"problem": {"id": "nope"}},
        {"run": {"workers": 0}}, {"phase": {"floor": 1.0}}, {"time": {"steps": 1}},
        {"grid": {"x0": 1.0, "x1": 0.0}}, {"run": {"bitwise": "yes"}},
    ])
    def test_invalid_values(self, raw):
        with pytest.raises(ConfigurationError):
            from_mapping(raw, env={})

    def test_env_overrides_output_dir(self, tmp_path):
        cfg = from_mapping({"output": {"dir": "a"}}, env={OUTPUT_ENV: str(tmp_path)})
        assert cfg.output_dir == tmp_path

    def test_toml_file(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('[grid]\nnx = 32\n[sweep]\nepsilons = ["1/8", "1/16", "1/32"]\n')
        cfg = load_config(p, env={})
        assert cfg.nx == cfg.ny == 32 and len(cfg.epsilons) == 3

    def test_bad_toml_and_missing(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("grid = [")
        with pytest.raises(ConfigurationError):
            load_config(p, env={})
        with pytest.raises(ConfigurationError, match="presets"):
            load_config(tmp_path / "missing.toml", env={})

    def test_validate(self):
        cfg = ExperimentConfig(domain_params=from_mapping({}, env={}).domain_params, epsilons=(0.5,))
        with pytest.raises(ConfigurationError, match="inradius"):
            cfg.validate()
        warn = cfg.replace(epsilons=(1 / 8,), nx=8, ny=8).validate()
        assert any("resolve" in w for w in warn)

    def test_g_mode_applied(self):
        cfg = from_mapping({"extension": {"g": "zero_outside_band"}}, env={})
        assert cfg.problem().modes["g"].value == "zero_outside_band"


class TestSweepCsv:
    def test_round_trip(self, tmp_path):
        res = SweepResult([ErrorReport(1 / 8, 1.0769e-3, 1.08e-3, seconds=1.5),
                           ErrorReport(1 / 16, 2.7793e-4, 2.8e-4, seconds=2.0),
                           ErrorReport(1 / 32, 0.0, 7e-5, seconds=3.0)])
        path = write_sweep_csv(res, tmp_path / "s.csv")
        back = read_sweep_csv(path)
        assert [(r.epsilon, r.l2_error, r.h1_error, r.seconds) for r in back.reports] == \
               [(r.epsilon, r.l2_error, r.h1_error, r.seconds) for r in res.reports]
        rows = path.read_text().splitlines()
        assert rows[0] == "epsilon,l2_error,l2_rate,h1_error,h1_rate,runtime_s"
        assert rows[1].split(",")[2] == ""
        assert rows[3].split(",")[2] == "nan"

    def test_partial_table_survives(self, tmp_path):
        w = SweepWriter(tmp_path / "p.csv")
        w.add(ErrorReport(0.125, 1e-3, 2e-3))
        assert len((tmp_path / "p.csv").read_text().splitlines()) == 2
        w.close()

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OutputError):
            ensure_directory(blocker / "sub")


class TestFields:
    def test_vtk_round_trip(self, tmp_path):
        g = StructuredGrid(-0.5, 0.5, -0.25, 0.75, 5, 3)
        rng = np.random.default_rng(0)
        dump = FieldDump(g, {"a": rng.standard_normal(g.num_nodes), "b": np.arange(g.num_nodes, dtype=float)})
        back = read_vtk(write_vtk(dump, tmp_path / "f.vtk"))
        assert (back.grid.nx, back.grid.ny) == (5, 3)
        for k in dump.arrays:
            assert np.array_equal(back.arrays[k], dump.arrays[k])
        text = (tmp_path / "f.vtk").read_text().splitlines()
        assert text[0] == "# vtk DataFile Version 3.0"
        assert "DIMENSIONS 6 4 1" in text

    @pytest.mark.parametrize("name, values", [("x y", None), ("a", np.zeros(3)), ("a", "nan")])
    def test_dump_validation(self, name, values):
        g = StructuredGrid(nx=2, ny=2)
        if values is None:
            values = np.zeros(g.num_nodes)
        elif isinstance(values, str):
            values = np.full(g.num_nodes, np.nan)
        with pytest.raises(ValueError):
            FieldDump(g, {name: values})

    def test_omega_dump(self, tmp_path):
        cfg = tiny(tmp_path).replace(nx=64, ny=64)
        path = dump_field(cfg, 1 / 16, "omega", fmt="csv")
        data = read_field_csv(path)
        centre = np.argmin(np.hypot(data[:, 0], data[:, 1]))
        edge = np.argmin(np.hypot(data[:, 0] - 0.25, data[:, 1]))
        assert data[centre, 2] == pytest.approx(expit(24.0), rel=1e-14)
        assert data[edge, 2] == pytest.approx(0.5, abs=1e-12)


class TestRuns:
    def test_single_run_writes_table(self, tmp_path):
        cfg = tiny(tmp_path, fmt="vtk")
        out = run_single(cfg, 1 / 8)
        assert out.report.l2_error > 0 and out.report.iterations > 0
        assert (cfg.output_dir / "run_eps0.125.csv").is_file()
        dump = read_vtk(cfg.output_dir / "fields_eps0.125.vtk")
        assert set(dump.arrays) == {"omega", "solution", "exact", "error"}

    def test_sweep_matches_single_runs(self, tmp_path):
        cfg = tiny(tmp_path)
        res = run_sweep(cfg)
        singles = [run_single(cfg, e, write=False).report for e in cfg.epsilons]
        assert [r.l2_error for r in res.reports] == [r.l2_error for r in singles]
        back = read_sweep_csv(cfg.output_dir / "sweep.csv")
        assert [r.h1_error for r in back.reports] == [r.h1_error for r in res.reports]

    def test_sweep_needs_two(self, tmp_path):
        with pytest.raises(ConfigurationError):
            run_sweep(tiny(tmp_path).replace(epsilons=(0.125,)))

    def test_format_none_writes_nothing(self, tmp_path):
        cfg = tiny(tmp_path, fmt="none")
        run_sweep(cfg)
        assert not (tmp_path / "out").exists()


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_fraction_strings_round_trip(p, q):
    assert parse_epsilon(f"{p}/{q}") == p / q


@given(st.floats(1e-6, 1.0), st.integers(2, 8))
def test_halving_sequences_accepted(eps, n):
    check_halving([eps / 2**k for k in range(n)])

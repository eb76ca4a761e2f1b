import csv
import json

import pytest

from subdoa.cli import main
from subdoa.config import config_digest, load_config, packaged_config_path
from subdoa.errors import ConfigurationError

MINI_SWEEP = """
[geometry]
elements = 24
spacing = 0.5
subarrays = [6, 6, 6, 6]

[sources]
angles_deg = [-30.0, 10.0]

[noise]
snr_db = 20.0

[grid]
step_deg = 5.0

[solver]
mu = 1.0
C = 2.0
primal_tol = 1e-5
dual_tol = 1e-5
max_iterations = 3000

[sweep]
snr_grid_db = [20]
n_trials = 2
methods = ["Proposed2", "MUSIC"]
base_seed = 5
"""


@pytest.fixture
def mini_config(tmp_path):
    path = tmp_path / "mini.toml"
    path.write_text(MINI_SWEEP)
    return path


class TestLoadConfig:
    def test_packaged_configs_parse(self):
        for name in ("fig1.toml", "fig2.toml", "fig3.toml"):
            path = packaged_config_path(name)
            assert path is not None, name
            cfg = load_config(path)
            assert cfg.scenario.geometry.num_elements == 24
            assert cfg.mu == 1.0 and cfg.C == 2.0
            assert cfg.grid_degrees[0] == -60.0

    def test_fig1_sweep_axes(self):
        cfg = load_config(packaged_config_path("fig1.toml"))
        assert cfg.sweep is not None
        assert cfg.sweep.snr_grid_db == (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
        assert len(cfg.sweep.methods) == 4
        assert cfg.sweep.n_trials == 250

    def test_missing_section_named(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[sources]\nangles_deg = [0.0]\n")
        with pytest.raises(ConfigurationError, match=r"\[geometry\]"):
            load_config(path)

    def test_missing_field_named(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[geometry]\nelements = 8\nspacing = 0.5\n")
        with pytest.raises(ConfigurationError, match="geometry.subarrays"):
            load_config(path)

    def test_unknown_solver_option_named(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(MINI_SWEEP.replace("[solver]", "[solver]\nbogus = 1"))
        with pytest.raises(ConfigurationError, match="solver.bogus"):
            load_config(path)

    def test_fixed_phases(self, tmp_path):
        path = tmp_path / "ph.toml"
        path.write_text(MINI_SWEEP + '\n[phases]\nmode = "fixed"\nvalues = [0, 1, 2, 3]\n')
        cfg = load_config(path)
        assert cfg.scenario.phases == (0.0, 1.0, 2.0, 3.0)

    def test_overrides(self, mini_config):
        cfg = load_config(mini_config, snr_override=5.0, trials_override=7,
                          methods_override=("MUSIC",), grid_step_override=10.0)
        assert cfg.scenario.snr_db == 5.0
        assert cfg.sweep.n_trials == 7
        assert cfg.sweep.methods == ("MUSIC",)
        assert cfg.grid_degrees[1] - cfg.grid_degrees[0] == 10.0

    def test_digest_stable(self, mini_config):
        assert config_digest(mini_config) == config_digest(mini_config)


class TestCli:
    def test_unknown_flag_exits_1(self, capsys):
        assert main(["sweep", "--bogus"]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_config_exits_1(self, tmp_path, capsys):
        assert main(["sweep", "--config", str(tmp_path / "nope.toml")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_corrupt_config_names_field(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[geometry]\nelements = 8\nspacing = 0.5\n")
        code = main(["estimate", "--config", str(path), "--out", str(tmp_path)])
        assert code == 1
        assert "geometry.subarrays" in capsys.readouterr().err

    def test_sweep_outputs(self, mini_config, tmp_path, capsys):
        out = tmp_path / "results"
        code = main(["sweep", "--config", str(mini_config), "--out", str(out)])
        assert code == 0
        with open(out / "aggregate.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["method", "snr_db", "rmse", "failure_rate", "n"]
        assert len(rows) == 3   # two methods x one SNR
        assert (out / "trials.csv").exists()
        manifest = json.loads((out / "run-manifest.json").read_text())
        assert manifest["config_sha256"] == config_digest(mini_config)
        assert manifest["base_seed"] == 5

    def test_sweep_reproducible_aggregate(self, mini_config, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(["sweep", "--config", str(mini_config), "--out", str(out_a)]) == 0
        assert main(["sweep", "--config", str(mini_config), "--out", str(out_b)]) == 0
        assert ((out_a / "aggregate.csv").read_bytes()
                == (out_b / "aggregate.csv").read_bytes())

    def test_spectra_outputs(self, mini_config, tmp_path):
        out = tmp_path / "sp"
        code = main(["spectra", "--config", str(mini_config), "--snr", "20",
                     "--seed", "7", "--out", str(out)])
        assert code == 0
        for method in ("Proposed2", "MUSIC"):
            assert (out / f"spectrum_{method}.csv").exists()

    def test_spectra_all_methods_fig3(self, tmp_path):
        out = tmp_path / "fig3"
        code = main(["spectra", "--config", "fig3.toml", "--snr", "20",
                     "--seed", "7", "--grid-step", "5.0", "--out", str(out)])
        assert code == 0
        files = sorted(p.name for p in out.glob("spectrum_*.csv"))
        assert files == ["spectrum_MUSIC.csv", "spectrum_Proposed1.csv",
                         "spectrum_Proposed2.csv", "spectrum_SparsityOnly.csv"]

    def test_estimate_prints_table(self, mini_config, tmp_path, capsys):
        out = tmp_path / "est"
        code = main(["estimate", "--config", str(mini_config), "--seed", "3",
                     "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "true DOAs" in text
        assert "Proposed2" in text

    def test_selftest_passes(self, capsys):
        code = main(["selftest", "--seeds", "3"])
        assert code == 0
        assert "3/3 exact" in capsys.readouterr().out

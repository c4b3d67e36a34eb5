"""Tests for the command-line front door."""

import json

import pytest

from impactjd.__main__ import main
from impactjd.cli import build_parser
from impactjd.csvio import read_artifact

SMALL_PRICE = """\
schema_version = 1
command = "price"

[model]
mu = 0.05
sigma = 0.2
r = 0.05

[grid]
s_max = 300.0
n_space = 60
n_time = 40

[payoff]
kind = "call"
strike = 100.0
"""

SMALL_SIMULATE = """\
schema_version = 1
command = "simulate"

[model]
sigma = 0.2
rho = 0.5
a = 0.5

[simulation]
n_paths = 8
n_steps = 20
seed = 42
"""

SMALL_HEDGE = """\
schema_version = 1
command = "hedge"

[model]
sigma = 0.2
rho = 0.5
a = 0.5

[grid]
s_max = 300.0
n_space = 60
n_time = 40

[payoff]
kind = "call"
strike = 100.0

[simulation]
n_paths = {n_paths}
n_steps = 20
seed = 3
"""


def error_record(capsys):
    """The JSON record printed on the last stderr line."""
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestParser:
    """Argument parsing."""

    def test_requires_config(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["price"])

    def test_rejects_unknown_command(self, tmp_path):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["calibrate", "--config", str(tmp_path / "x.toml")])


class TestPrice:
    """impactjd price."""

    def test_writes_surfaces(self, write_toml, tmp_path, capsys):
        """Surface files are written and the spot price goes to stdout."""
        config = write_toml("price.toml", SMALL_PRICE)
        out = tmp_path / "run"
        assert main(["price", "--config", str(config), "--out", str(out)]) == 0
        assert (out / "surface_f.csv").exists()
        assert (out / "surface_theta.csv").exists()
        assert not (out / "surface_zeta.csv").exists()
        stdout = capsys.readouterr().out
        assert "f(0, 100) =" in stdout
        assert "black_scholes=" in stdout
        assert read_artifact(out / "surface_f.csv").shape == (41, 62)

    def test_byte_identical_reruns(self, write_toml, tmp_path):
        """Two runs of one config give byte-identical artifacts."""
        config = write_toml("price.toml", SMALL_PRICE)
        for name in ("a", "b"):
            assert main(["price", "--config", str(config), "--out", str(tmp_path / name)]) == 0
        for artifact in ("surface_f.csv", "surface_theta.csv"):
            assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()

    def test_header_carries_fingerprint(self, write_toml, tmp_path):
        config = write_toml("price.toml", SMALL_PRICE)
        main(["price", "--config", str(config), "--out", str(tmp_path / "run")])
        header = (tmp_path / "run" / "surface_f.csv").read_text().splitlines()[0]
        assert header.startswith("# config_sha256=")
        assert header.endswith("seed=none")

    def test_bad_jump_factor_exits_3(self, config_dir, tmp_path, capsys):
        """Model validation failures exit 3 with a JSON record on stderr."""
        code = main(["price", "--config", str(config_dir / "bad_jump.toml"), "--out", str(tmp_path)])
        assert code == 3
        record = error_record(capsys)
        assert record["error"] == "ModelValidationError"
        assert record["violations"][0]["invariant"] == "jump factor <= 0"


class TestConfigErrors:
    """Exit code 2."""

    def test_unknown_key(self, write_toml, capsys):
        config = write_toml("bad.toml", SMALL_PRICE.replace("mu = 0.05", "muu = 0.05"))
        assert main(["price", "--config", str(config)]) == 2
        assert error_record(capsys)["error"] == "ConfigError"

    def test_missing_file(self, tmp_path, capsys):
        assert main(["price", "--config", str(tmp_path / "absent.toml")]) == 2
        assert error_record(capsys)["exit_code"] == 2

    def test_command_mismatch(self, write_toml, capsys):
        """The CLI command must match the config's command."""
        config = write_toml("price.toml", SMALL_PRICE)
        assert main(["simulate", "--config", str(config)]) == 2

    def test_hedge_with_one_path(self, write_toml, capsys):
        config = write_toml("hedge.toml", SMALL_HEDGE.format(n_paths=1))
        assert main(["hedge", "--config", str(config)]) == 2

    def test_grid_below_strike(self, write_toml, tmp_path, capsys):
        """A grid that ends below the strike exits 2 with a JSON record."""
        config = write_toml("price.toml", SMALL_PRICE.replace("s_max = 300.0", "s_max = 80.0"))
        assert main(["price", "--config", str(config), "--out", str(tmp_path)]) == 2
        record = error_record(capsys)
        assert record["error"] == "ConfigError"
        assert "strike" in record["message"]

    def test_seed_without_simulation(self, write_toml, tmp_path):
        """price has no random stream to reseed."""
        config = write_toml("price.toml", SMALL_PRICE)
        assert main(["price", "--config", str(config), "--out", str(tmp_path), "--seed", "4"]) == 2


class TestSimulate:
    """impactjd simulate."""

    def test_seed_override(self, write_toml, tmp_path):
        """--seed replaces the configured seed in the artifact header."""
        config = write_toml("sim.toml", SMALL_SIMULATE)
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(config), "--out", str(out), "--seed", "5"]) == 0
        lines = (out / "paths.csv").read_text().splitlines()
        assert lines[0].endswith("seed=5")
        assert len(read_artifact(out / "paths.csv")) == 8 * 21

    def test_same_seed_same_paths(self, write_toml, tmp_path):
        config = write_toml("sim.toml", SMALL_SIMULATE)
        for name in ("a", "b"):
            main(["simulate", "--config", str(config), "--out", str(tmp_path / name)])
        assert (tmp_path / "a" / "paths.csv").read_bytes() == (tmp_path / "b" / "paths.csv").read_bytes()


class TestHedge:
    """impactjd hedge."""

    def test_replication_rows(self, write_toml, tmp_path):
        """theta*, both shifts and the zero hedge, in that order."""
        config = write_toml("hedge.toml", SMALL_HEDGE.format(n_paths=64))
        out = tmp_path / "run"
        assert main(["hedge", "--config", str(config), "--out", str(out)]) == 0
        frame = read_artifact(out / "replication.csv")
        assert list(frame["strategy"]) == ["theta_star", "theta_star+0.05", "theta_star-0.05", "zero"]
        assert (frame["seed"] == 3).all()


class TestValidate:
    """impactjd validate."""

    def test_empty_check_list(self, write_toml, tmp_path, capsys):
        """No checks: header-only report and exit 0."""
        config = write_toml("v.toml", 'schema_version = 1\ncommand = "validate"\n\n[validate]\nchecks = []\n')
        out = tmp_path / "run"
        assert main(["validate", "--config", str(config), "--out", str(out)]) == 0
        lines = (out / "validate_report.csv").read_text().splitlines()
        assert lines[1] == "check,quantity,measured,threshold,passed"
        assert len(lines) == 2
        assert "0/0 check(s) passed" in capsys.readouterr().out

    def test_seed_override(self, write_toml, tmp_path):
        """--seed on validate lands in the report header."""
        config = write_toml("v.toml", 'schema_version = 1\ncommand = "validate"\n\n[validate]\nchecks = []\nseed = 1\n')
        out = tmp_path / "run"
        assert main(["validate", "--config", str(config), "--out", str(out), "--seed", "5"]) == 0
        header = (out / "validate_report.csv").read_text().splitlines()[0]
        assert header.endswith("seed=5")

    def test_failed_check_exits_5(self, config_dir, tmp_path, capsys):
        """The coarse grid fails the closed-form comparison."""
        code = main(["validate", "--config", str(config_dir / "coarse_grid.toml"), "--out", str(tmp_path)])
        assert code == 5
        assert "black_scholes_reduction" in error_record(capsys)["message"]
        assert (tmp_path / "validate_report.csv").exists()

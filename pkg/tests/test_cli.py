"""Tests for the CLI module."""

from collections.abc import Callable
from pathlib import Path

import pytest
from typer.testing import CliRunner

from src import __version__
from src.cli import EXIT_CONFIG, app


@pytest.fixture
def runner() -> CliRunner:
    """Create CLI test runner."""
    return CliRunner()


@pytest.fixture
def small_config(temp_dir: Path, write_config: Callable[[str], Path]) -> Path:
    """Write a short quantization run on a 12 x 12 grid."""
    return write_config(
        "mode = quantization\nnx = 12\nny = 12\nn_atoms = 3\n"
        f"steps = 2\nout_dir = {temp_dir / 'run'}\n"
    )


class TestVersionCommand:
    """Tests for --version flag."""

    def test_version_flag(self, runner: CliRunner) -> None:
        """Test that --version shows version and exits."""
        result = runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert __version__ in result.output
        assert "dynquant" in result.output

    def test_version_short_flag(self, runner: CliRunner) -> None:
        """Test that -v shows version and exits."""
        result = runner.invoke(app, ["-v"])
        assert result.exit_code == 0
        assert __version__ in result.output


class TestHelpCommand:
    """Tests for --help flag."""

    def test_help_flag(self, runner: CliRunner) -> None:
        """Test that --help lists every command."""
        result = runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        for command in ("simulate", "jko1d", "render", "selftest", "info"):
            assert command in result.output

    def test_no_args_shows_help(self, runner: CliRunner) -> None:
        """Test that running without arguments prints usage."""
        result = runner.invoke(app, [])
        assert "Usage" in result.output


class TestSimulateCommand:
    """Tests for the simulate command."""

    def test_simulate_small_run(
        self, runner: CliRunner, small_config: Path, temp_dir: Path
    ) -> None:
        """Test that a small run succeeds and writes its outputs."""
        result = runner.invoke(app, ["simulate", "--config", str(small_config)])
        assert result.exit_code == 0, result.output
        assert "Run finished" in result.output
        assert (temp_dir / "run/series.csv").exists()
        assert (temp_dir / "run/snapshots/density_000000.csv").exists()

    def test_out_overrides_config(
        self, runner: CliRunner, small_config: Path, temp_dir: Path
    ) -> None:
        """Test that --out replaces out_dir."""
        other = temp_dir / "other"
        result = runner.invoke(
            app, ["simulate", "-c", str(small_config), "-o", str(other)]
        )
        assert result.exit_code == 0, result.output
        assert (other / "config.json").exists()
        assert not (temp_dir / "run").exists()

    def test_out_of_range_value(
        self, runner: CliRunner, write_config: Callable[[str], Path]
    ) -> None:
        """Test that range errors exit with the config code and a message."""
        path = write_config("g_beta = 1.5\n")
        result = runner.invoke(app, ["simulate", "--config", str(path)])
        assert result.exit_code == EXIT_CONFIG
        assert "g_beta must lie in (0,1)" in result.output

    def test_missing_config(self, runner: CliRunner, temp_dir: Path) -> None:
        """Test that an unreadable config exits with the config code."""
        result = runner.invoke(
            app, ["simulate", "--config", str(temp_dir / "absent.cfg")]
        )
        assert result.exit_code == EXIT_CONFIG
        assert "Configuration error" in result.output

    def test_rejects_jko1d_mode(
        self, runner: CliRunner, write_config: Callable[[str], Path]
    ) -> None:
        """Test that jko1d configs are pointed at their own command."""
        path = write_config("mode = jko1d\n")
        result = runner.invoke(app, ["simulate", "--config", str(path)])
        assert result.exit_code == EXIT_CONFIG
        assert "jko1d" in result.output


class TestJko1dCommand:
    """Tests for the jko1d command."""

    def test_jko1d_run(
        self,
        runner: CliRunner,
        write_config: Callable[[str], Path],
        temp_dir: Path,
    ) -> None:
        """Test a short 1D run and its step-length report."""
        path = write_config(
            "mode = jko1d\njko_nx = 32\nn_atoms = 2\nsteps = 2\n"
            f"out_dir = {temp_dir / 'jko'}\n"
        )
        result = runner.invoke(app, ["jko1d", "--config", str(path)])
        assert result.exit_code == 0, result.output
        assert "Sum of d^2" in result.output
        assert (temp_dir / "jko/jko_series.csv").exists()


class TestRenderCommand:
    """Tests for the render command."""

    def test_render_all_frames(
        self, runner: CliRunner, small_config: Path, temp_dir: Path
    ) -> None:
        """Test rendering after a run."""
        runner.invoke(app, ["simulate", "--config", str(small_config)])
        run_dir = temp_dir / "run"
        result = runner.invoke(app, ["render", "--in", str(run_dir), "-s", "2"])
        assert result.exit_code == 0, result.output
        assert len(list((run_dir / "frames").glob("frame_*.png"))) >= 2

    def test_render_missing_frame(
        self, runner: CliRunner, small_config: Path, temp_dir: Path
    ) -> None:
        """Test that an absent frame exits with the config code."""
        runner.invoke(app, ["simulate", "--config", str(small_config)])
        result = runner.invoke(
            app, ["render", "--in", str(temp_dir / "run"), "--frame", "99"]
        )
        assert result.exit_code == EXIT_CONFIG
        assert "Cannot render" in result.output

    def test_render_without_run(self, runner: CliRunner, temp_dir: Path) -> None:
        """Test that a directory without config.json is refused."""
        result = runner.invoke(app, ["render", "--in", str(temp_dir)])
        assert result.exit_code == EXIT_CONFIG


class TestInfoCommand:
    """Tests for the info command."""

    def test_info_lists_keys(self, runner: CliRunner) -> None:
        """Test that configuration keys are listed."""
        result = runner.invoke(app, ["info"])
        assert result.exit_code == 0
        for key in ("tau", "alpha", "g_beta", "cfl_safety"):
            assert key in result.output


class TestSelftestCommand:
    """Tests for the selftest command."""

    def test_selftest_passes(self, runner: CliRunner) -> None:
        """Test that the oracle suite reports success."""
        result = runner.invoke(app, ["selftest"])
        assert result.exit_code == 0, result.output
        assert "checks passed" in result.output

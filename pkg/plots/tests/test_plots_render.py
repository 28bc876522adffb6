"""Rendering tests; the desk-scale inputs come from the proxvr CLI, which
is the only interface this package consumes."""

import shutil
import subprocess
import sys

import pytest

from proxvr_plots.cli import main
from proxvr_plots.csvio import SchemaError, read_rates, read_trajectory
from proxvr_plots.figures import plot_convergence, plot_rate_scatter


def _proxvr_command():
    exe = shutil.which("proxvr")
    if exe is not None:
        return [exe]
    return [sys.executable, "-m", "proxvr.cli"]


@pytest.fixture(scope="session")
def desk_outputs(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("desk_grid")
    completed = subprocess.run(
        _proxvr_command()
        + ["grid", "--scale", "desk", "--seed", "20240",
           "--out-dir", str(out_dir), "--threads", "4"],
        capture_output=True,
        text=True,
    )
    assert completed.returncode == 0, completed.stderr
    return out_dir


@pytest.fixture(scope="session")
def desk_trajectory(desk_outputs):
    return desk_outputs / "trajectory_n10_s5.csv"


@pytest.fixture(scope="session")
def desk_rates(desk_outputs):
    return desk_outputs / "rates.csv"


class TestConvergence:
    def test_renders_desk_cell(self, desk_trajectory, tmp_path):
        out = tmp_path / "convergence.png"
        fig = plot_convergence(desk_trajectory, out)
        assert out.exists() and out.stat().st_size > 0
        # curve plus fitted overlay
        assert len(fig.axes[0].lines) == 2

    def test_fit_overlay_tracks_exact_geometric_data(self, tmp_path):
        csv_path = tmp_path / "geometric.csv"
        rows = ["k,mean_sq_dist"] + [f"{k},{100.0 * 0.9 ** k!r}" for k in range(80)]
        csv_path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "geometric.png"
        fig = plot_convergence(csv_path, out)
        label = fig.axes[0].lines[1].get_label()
        assert "0.9000" in label  # per-step factor echoed in the legend
        assert out.exists()

    def test_empty_csv_errors_without_output(self, tmp_path):
        csv_path = tmp_path / "empty.csv"
        csv_path.write_text("k,mean_sq_dist\n")
        out = tmp_path / "never.png"
        with pytest.raises(SchemaError):
            plot_convergence(csv_path, out)
        assert not out.exists()

    def test_schema_mismatch_errors(self, tmp_path):
        csv_path = tmp_path / "bad.csv"
        csv_path.write_text("a,b\n1,2\n3,4\n")
        with pytest.raises(SchemaError):
            plot_convergence(csv_path, tmp_path / "never.png")


class TestRateScatter:
    def test_renders_desk_grid_with_identity_line(self, desk_rates, tmp_path):
        out = tmp_path / "scatter.png"
        fig = plot_rate_scatter(desk_rates, out)
        assert out.exists() and out.stat().st_size > 0
        ax = fig.axes[0]
        dashed = [ln for ln in ax.lines if ln.get_linestyle() == "--"]
        assert dashed, "identity line missing"
        assert len(ax.collections) == 1
        assert len(ax.collections[0].get_offsets()) == 4

    def test_desk_points_on_theory_favorable_side(self, desk_rates):
        rows = read_rates(desk_rates)
        assert len(rows) == 4
        for row in rows:
            assert row["rho_emp"] <= row["rho_theory"] + 0.01

    def test_single_row_on_identity_line(self, tmp_path):
        csv_path = tmp_path / "one.csv"
        header = "n,s,delta_sq,gamma,p,slope,rho_emp,rho_alt,r_squared,rho_theory,margin"
        csv_path.write_text(header + "\n10,5,2,0.01,0.1,-0.01,0.95,0.99,1,0.95,0\n")
        out = tmp_path / "one.png"
        fig = plot_rate_scatter(csv_path, out)
        offsets = fig.axes[0].collections[0].get_offsets()
        assert tuple(offsets[0]) == (0.95, 0.95)

    def test_schema_mismatch_errors(self, tmp_path):
        csv_path = tmp_path / "bad.csv"
        csv_path.write_text("n,s\n1,2\n")
        out = tmp_path / "never.png"
        with pytest.raises(SchemaError):
            plot_rate_scatter(csv_path, out)
        assert not out.exists()

    def test_empty_rates_errors(self, tmp_path):
        csv_path = tmp_path / "empty.csv"
        header = "n,s,delta_sq,gamma,p,slope,rho_emp,rho_alt,r_squared,rho_theory,margin"
        csv_path.write_text(header + "\n")
        with pytest.raises(SchemaError):
            plot_rate_scatter(csv_path, tmp_path / "never.png")


class TestCli:
    def test_convergence_command(self, desk_trajectory, tmp_path):
        out = tmp_path / "cli_convergence.png"
        assert main(["convergence", str(desk_trajectory), str(out)]) == 0
        assert out.exists()

    def test_scatter_command(self, desk_rates, tmp_path):
        out = tmp_path / "cli_scatter.png"
        assert main(["scatter", str(desk_rates), str(out)]) == 0
        assert out.exists()

    def test_missing_input_is_error(self, tmp_path):
        code = main(["convergence", str(tmp_path / "absent.csv"), str(tmp_path / "o.png")])
        assert code == 1

    def test_schema_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n3,4\n")
        out = tmp_path / "o.png"
        assert main(["convergence", str(bad), str(out)]) == 1
        assert not out.exists()

    def test_usage_error(self):
        assert main(["unknown-kind"]) == 2

    def test_trajectory_reader_round_trip(self, desk_trajectory):
        data = read_trajectory(desk_trajectory)
        assert data["mean_sq_dist"].shape == data["k"].shape
        assert data["k"][0] == 0.0

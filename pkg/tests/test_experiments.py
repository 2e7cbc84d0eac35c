"""
Tests for sweeps, optimizer runs, CSV output and plotting.
"""

import math

import numpy as np
import pytest

from netrate import experiments
from netrate.config import ExperimentSpec, preset
from netrate.det_equiv import SOLVER_STATS
from netrate.exceptions import ConfigError, ConvergenceError, PlotError
from netrate.experiments import (
    OPTIMUM_COLUMNS,
    SWEEP_COLUMNS,
    read_csv,
    run_optimum,
    run_sweep,
    series_label,
    spec_hash,
)
from netrate.plotting import emit_plot
from netrate.system_model import build_variance_profile, quantization_noise
from netrate.train_opt import net_rate_det
from netrate.utils import nats_to_bits


def _sweep_spec(tmp_path, **overrides):
    data = {
        "name": "small",
        "sweep": {"kind": "snr", "start": 0, "stop": 10, "step": 5, "tau": 40, "backhaul": [1, "inf"]},
        "methods": ["det", "mc"],
        "mc": {"n_samples": 300, "seed": 3},
        "output": {"prefix": str(tmp_path / "out" / "small")},
    }
    data.update(overrides)
    return ExperimentSpec(**data)


def test_series_label():
    """Test file suffixes for backhaul series."""
    assert series_label(1.0) == "C1"
    assert series_label(2.5) == "C2.5"
    assert series_label(math.inf) == "Cinf"


def test_run_sweep_writes_one_csv_per_series(tmp_path):
    """Test file layout, columns, header and row order."""
    spec = _sweep_spec(tmp_path)

    result = run_sweep(spec)

    assert result.exit_code == 0
    assert [p.name for p in result.paths] == ["small_C1.csv", "small_Cinf.csv"]
    header, frame = read_csv(result.paths[0])
    assert list(frame.columns) == SWEEP_COLUMNS
    assert frame["sweep_value"].tolist() == [0.0, 5.0, 10.0]
    assert (frame["status"] == "ok").all()
    assert (frame["tau_used"] == 40).all()
    assert frame["tau_star_det"].isna().all()
    assert header["schema"] == "netrate.sweep/1"
    assert header["config_hash"] == spec_hash(spec)
    assert header["seed"] == "3"
    assert header["series"] == "C1"


def test_run_sweep_rates_in_bits(tmp_path):
    """Test that file rates are the internal nats divided by ln 2."""
    spec = _sweep_spec(tmp_path, methods=["det"])
    result = run_sweep(spec)
    _, frame = read_csv(result.paths[1])

    cfg = spec.system_config(10.0, math.inf)
    V = build_variance_profile(spec.path_loss_matrix(), cfg.M)
    expected = nats_to_bits(net_rate_det(cfg, V, quantization_noise(cfg, V), 40.0))

    assert frame["r_net_det_bits"].iloc[-1] == pytest.approx(expected, rel=1e-9)
    # Missing method leaves empty fields, never zero
    assert frame["r_net_mc_bits"].isna().all()
    assert frame["seed"].isna().all()


def test_run_sweep_times_solver_calls(tmp_path):
    """Test that a run starts fresh solver timing and records every point's solve."""
    SOLVER_STATS.add_sample(1e9)

    result = run_sweep(_sweep_spec(tmp_path, methods=["det"]))

    stats = SOLVER_STATS.get_stats()
    points = sum(len(frame) for frame in result.tables.values())
    assert stats["count"] >= points
    assert stats["max"] < 1e9


def test_run_sweep_rate_grows_with_snr_and_backhaul(tmp_path):
    """Test the qualitative shape: more SNR and more backhaul help."""
    result = run_sweep(_sweep_spec(tmp_path, methods=["det"]))
    _, c1 = read_csv(result.paths[0])
    _, cinf = read_csv(result.paths[1])

    assert np.all(np.diff(c1["r_net_det_bits"]) > 0)
    assert np.all(cinf["r_net_det_bits"] > c1["r_net_det_bits"])


def test_run_sweep_is_byte_identical(tmp_path):
    """Test that the same spec and seed reproduce the CSV byte for byte."""
    first = run_sweep(_sweep_spec(tmp_path / "a"))
    second = run_sweep(_sweep_spec(tmp_path / "b"))
    parallel = run_sweep(_sweep_spec(tmp_path / "c", output={"prefix": str(tmp_path / "c" / "out" / "small"), "workers": 3}))

    def data_lines(path):
        return [line for line in path.read_text().splitlines() if not line.startswith("#")]

    # prefixes differ, so only the data lines are compared across directories
    for a, b, c in zip(first.paths, second.paths, parallel.paths):
        assert data_lines(a) == data_lines(b)
        assert data_lines(a) == data_lines(c)


def test_run_sweep_same_prefix_is_byte_identical(tmp_path):
    """Test full-file identity when run twice to the same prefix."""
    spec = _sweep_spec(tmp_path)
    first = [p.read_bytes() for p in run_sweep(spec).paths]
    second = [p.read_bytes() for p in run_sweep(spec).paths]
    assert first == second


def test_run_sweep_tau(tmp_path):
    """Test a tau sweep starting at K."""
    spec = _sweep_spec(
        tmp_path,
        sweep={"kind": "tau", "stop": 9, "step": 3, "snr_db": 0.0, "backhaul": [5]},
        methods=["det"],
    )
    result = run_sweep(spec)
    _, frame = read_csv(result.paths[0])

    assert frame["sweep_value"].tolist() == [3.0, 6.0, 9.0]
    assert frame["tau_used"].tolist() == [3.0, 6.0, 9.0]


def test_run_sweep_tau_beyond_block(tmp_path):
    """Test that training longer than T is rejected before running."""
    spec = _sweep_spec(tmp_path, system={"T": 5}, methods=["det"])
    with pytest.raises(ConfigError, match="exceeds"):
        run_sweep(spec)


def test_run_sweep_marks_failed_rows(tmp_path, monkeypatch):
    """Test that a numerical failure marks the row and sets a nonzero exit."""
    real = experiments.net_rate_det

    def flaky(cfg, V, sigma2, tau):
        if cfg.snr > 5:
            raise ConvergenceError("no convergence", residual=1.0, iterations=10)
        return real(cfg, V, sigma2, tau)

    monkeypatch.setattr(experiments, "net_rate_det", flaky)
    spec = _sweep_spec(tmp_path, methods=["det"], sweep={"kind": "snr", "start": 0, "stop": 10, "step": 5, "backhaul": [1]})

    result = run_sweep(spec)

    assert result.exit_code == 2
    assert result.failures == 1
    _, frame = read_csv(result.paths[0])
    assert frame["status"].tolist() == ["ok", "ok", "failed: ConvergenceError"]
    assert math.isnan(frame["r_net_det_bits"].iloc[2])


def test_run_optimum_backhaul(tmp_path):
    """Test an optimizer run over C with the C=inf row appended."""
    spec = ExperimentSpec(
        sweep={"kind": "backhaul", "start": 1, "stop": 3, "step": 1, "snr_db": 10.0,
               "include_infinite_backhaul": True},
        methods=["det"],
        output={"prefix": str(tmp_path / "opt")},
    )

    result = run_optimum(spec)

    assert [p.name for p in result.paths] == ["opt.csv"]
    header, frame = read_csv(result.paths[0])
    assert list(frame.columns) == OPTIMUM_COLUMNS
    assert header["schema"] == "netrate.optimum/1"
    assert frame["sweep_value"].iloc[:3].tolist() == [1.0, 2.0, 3.0]
    assert math.isinf(frame["sweep_value"].iloc[3])
    taus = frame["tau_star_det"].to_numpy()
    assert np.all(np.diff(taus) <= 2e-3)
    np.testing.assert_allclose(frame["rate_per_bs_bits"], 2 * frame["r_net_det_bits"], rtol=1e-9)
    assert frame["tau_star_mc"].isna().all()
    assert (frame["clamped"] == "none").all()


def test_run_optimum_with_monte_carlo(tmp_path):
    """Test that tau* is searched near tau_bar* and the MC rate is reported."""
    spec = ExperimentSpec(
        system={"T": 100},
        sweep={"kind": "snr", "start": 10, "stop": 10, "step": 1, "backhaul": [1]},
        methods=["det", "mc"],
        mc={"n_samples": 200, "seed": 1, "window": 3},
        output={"prefix": str(tmp_path / "opt")},
    )

    result = run_optimum(spec)

    _, frame = read_csv(result.paths[0])
    row = frame.iloc[0]
    assert abs(row["tau_star_mc"] - row["tau_star_det"]) <= 4
    assert row["rate_per_bs_bits"] == pytest.approx(2 * row["r_net_mc_bits"], rel=1e-9)
    assert row["seed"] == 1


def test_run_optimum_rejects_tau_sweep(tmp_path):
    """Test that optimizing over a tau sweep makes no sense."""
    spec = _sweep_spec(tmp_path, sweep={"kind": "tau", "stop": 10})
    with pytest.raises(ConfigError, match="snr or backhaul"):
        run_optimum(spec)


def test_spec_hash_ignores_workers(tmp_path):
    """Test that the worker count does not change the provenance hash."""
    a = _sweep_spec(tmp_path)
    b = _sweep_spec(tmp_path, output={"prefix": a.output.prefix, "workers": 8})
    c = _sweep_spec(tmp_path, mc={"n_samples": 300, "seed": 4})
    assert spec_hash(a) == spec_hash(b)
    assert spec_hash(a) != spec_hash(c)


def test_emit_plot_rate(tmp_path):
    """Test that a sweep CSV set becomes one SVG with a curve per series."""
    result = run_sweep(_sweep_spec(tmp_path))
    out = tmp_path / "fig.svg"

    path = emit_plot(result.paths, "rate", out)

    assert path == out
    text = out.read_text()
    assert text.lstrip().startswith("<?xml")
    assert "C1" in text and "Cinf" in text


def test_emit_plot_is_deterministic(tmp_path):
    """Test that plotting the same CSV twice gives identical SVG bytes."""
    result = run_sweep(_sweep_spec(tmp_path, methods=["det"]))
    a = emit_plot(result.paths, "rate", tmp_path / "a.svg").read_bytes()
    b = emit_plot(result.paths, "rate", tmp_path / "b.svg").read_bytes()
    assert a == b


def test_emit_plot_tau_kind_on_backhaul_sweep(tmp_path):
    """Test the tau plot of an optimizer CSV and the data it is drawn from."""
    spec = ExperimentSpec(
        sweep={"kind": "backhaul", "start": 1, "stop": 4, "step": 1, "snr_db": 10.0,
               "include_infinite_backhaul": True},
        methods=["det"],
        output={"prefix": str(tmp_path / "fig5")},
    )
    csv = run_optimum(spec).paths[0]

    emit_plot([csv], "tau", tmp_path / "tau.svg")

    _, frame = read_csv(csv)
    assert np.all(np.diff(frame["tau_star_det"].to_numpy()) <= 2e-3)
    assert (tmp_path / "tau.svg").exists()


def test_emit_plot_empty_csv(tmp_path):
    """Test that a CSV without rows is an error and writes nothing."""
    csv = tmp_path / "empty.csv"
    csv.write_text("# schema: netrate.sweep/1\n" + ",".join(SWEEP_COLUMNS) + "\n")
    out = tmp_path / "empty.svg"

    with pytest.raises(PlotError, match="no data"):
        emit_plot([csv], "rate", out)
    assert not out.exists()


@pytest.mark.parametrize("content", [
    "just,some\n1,2\n",
    "sweep_value,r_net_det_bits\n1,abc\n",
])
def test_emit_plot_malformed_csv(tmp_path, content):
    """Test that CSVs without the expected numeric columns are rejected."""
    csv = tmp_path / "bad.csv"
    csv.write_text(content)
    out = tmp_path / "bad.svg"

    with pytest.raises(PlotError):
        emit_plot([csv], "rate", out)
    assert not out.exists()


def test_emit_plot_unknown_kind(tmp_path):
    """Test that unknown plot kinds are rejected."""
    with pytest.raises(PlotError, match="Unknown plot kind"):
        emit_plot([tmp_path / "x.csv"], "pie", tmp_path / "x.svg")


def test_emit_plot_missing_file(tmp_path):
    """Test that a missing CSV is a plot error."""
    with pytest.raises(PlotError, match="not found"):
        emit_plot([tmp_path / "missing.csv"], "rate", tmp_path / "x.svg")


@pytest.mark.slow
def test_fig3_preset_saturates(tmp_path):
    """Test that limited backhaul caps the rate at high SNR while C=10 keeps growing longer."""
    spec = preset("fig3").model_copy(update={"methods": ["det"]})
    spec = ExperimentSpec(**{**spec.model_dump(), "output": {"prefix": str(tmp_path / "fig3")}})

    result = run_sweep(spec)

    assert len(result.paths) == 3
    frames = [read_csv(p)[1] for p in result.paths]
    top = [f["r_net_det_bits"].iloc[-1] for f in frames]
    assert top[0] < top[1] < top[2]
    # C=1 gains little over the last 10 dB
    c1 = frames[0]["r_net_det_bits"].to_numpy()
    assert c1[-1] - c1[-6] < 0.1 * c1[-1]


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

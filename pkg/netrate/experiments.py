"""
Batch experiments: sweeps and optimizer runs written to CSV.

Sweep points run concurrently up to spec.output.workers; rows are buffered
and written in sweep order. Rates are converted to bits/channel use only
when a row is built (utils.nats_to_bits).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

from . import __version__
from .config import ExperimentSpec
from .det_equiv import SOLVER_STATS
from .exceptions import ConfigError, EXIT_NUMERICAL, EXIT_OK, NumericalError
from .monte_carlo import estimate_net_rate
from .system_model import build_variance_profile, quantization_noise
from .train_opt import net_rate_det, optimize_det, optimize_mc, window_grid
from .utils import Timer, TimingStats, config_hash, nats_to_bits

logger = logging.getLogger(__name__)

SWEEP_SCHEMA = "netrate.sweep"
OPTIMUM_SCHEMA = "netrate.optimum"
SCHEMA_VERSION = 1

SWEEP_COLUMNS = [
    "sweep_value", "r_net_det_bits", "r_net_mc_bits", "mc_std_err_bits",
    "tau_used", "tau_star_det", "tau_star_mc", "seed", "status",
]
OPTIMUM_COLUMNS = [
    "sweep_value", "tau_star_det", "tau_star_mc", "r_net_det_bits", "r_net_mc_bits",
    "mc_std_err_bits", "rate_per_bs_bits", "clamped", "seed", "status",
]


@dataclass
class SweepRow:
    """One sweep point as written to CSV (bits/channel use)."""
    sweep_value: float
    r_net_det_bits: Optional[float] = None
    r_net_mc_bits: Optional[float] = None
    mc_std_err_bits: Optional[float] = None
    tau_used: Optional[float] = None
    tau_star_det: Optional[float] = None
    tau_star_mc: Optional[float] = None
    seed: Optional[int] = None
    status: str = "ok"


@dataclass
class OptimumRow:
    """One optimizer point as written to CSV (bits/channel use)."""
    sweep_value: float
    tau_star_det: Optional[float] = None
    tau_star_mc: Optional[float] = None
    r_net_det_bits: Optional[float] = None
    r_net_mc_bits: Optional[float] = None
    mc_std_err_bits: Optional[float] = None
    rate_per_bs_bits: Optional[float] = None
    clamped: Optional[str] = None
    seed: Optional[int] = None
    status: str = "ok"


@dataclass
class ExperimentResult:
    """Files written by a run and their rows."""
    paths: List[Path] = field(default_factory=list)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    failures: int = 0

    @property
    def exit_code(self) -> int:
        return EXIT_NUMERICAL if self.failures else EXIT_OK


@dataclass(frozen=True)
class _Point:
    value: float
    snr_db: float
    C: float
    tau: float


def series_label(C: float) -> str:
    """File suffix for a backhaul series, e.g. C5 or Cinf."""
    return "Cinf" if math.isinf(C) else f"C{C:g}"


def spec_hash(spec: ExperimentSpec) -> str:
    """Hash of the parts of a spec that determine the numbers in the output."""
    payload = spec.model_dump(exclude={"output": {"workers"}, "logging": True})
    return config_hash(payload)


def _series(spec: ExperimentSpec) -> List[Tuple[str, List[_Point]]]:
    sweep = spec.sweep
    K = spec.path_loss_matrix().K
    values = sweep.values(K)

    if sweep.kind == "backhaul":
        capacities = list(values)
        if sweep.include_infinite_backhaul and not any(math.isinf(c) for c in capacities):
            capacities.append(math.inf)
        points = [_Point(value=c, snr_db=sweep.snr_db, C=c, tau=sweep.tau) for c in capacities]
        return [("", points)]

    series = []
    for C in sweep.backhaul:
        if sweep.kind == "snr":
            points = [_Point(value=v, snr_db=v, C=C, tau=sweep.tau) for v in values]
        else:
            points = [_Point(value=v, snr_db=sweep.snr_db, C=C, tau=v) for v in values]
        series.append((series_label(C), points))
    return series


def _output_path(spec: ExperimentSpec, label: str) -> Path:
    prefix = spec.output.prefix
    return Path(f"{prefix}_{label}.csv" if label else f"{prefix}.csv")


def _bits(value: Optional[float]) -> Optional[float]:
    return None if value is None else nats_to_bits(value)


def _failure_status(error: Exception) -> str:
    return f"failed: {type(error).__name__}"


def _model(spec: ExperimentSpec, point: _Point):
    cfg = spec.system_config(point.snr_db, point.C)
    V = build_variance_profile(spec.path_loss_matrix(), cfg.M)
    return cfg, V, quantization_noise(cfg, V)


def _sweep_point(spec: ExperimentSpec, point: _Point) -> SweepRow:
    cfg, V, sigma2 = _model(spec, point)
    row = SweepRow(sweep_value=point.value, tau_used=point.tau)
    try:
        if spec.uses_det:
            row.r_net_det_bits = _bits(net_rate_det(cfg, V, sigma2, point.tau))
        if spec.uses_mc:
            est = estimate_net_rate(cfg, V, sigma2, point.tau, spec.mc.n_samples, spec.mc.seed)
            row.r_net_mc_bits = _bits(est.mean)
            row.mc_std_err_bits = _bits(est.std_err)
            row.seed = spec.mc.seed
    except NumericalError as e:
        logger.error(f"Sweep point {point.value:g} failed: {e}")
        return SweepRow(sweep_value=point.value, tau_used=point.tau, status=_failure_status(e))
    return row


def _optimum_point(spec: ExperimentSpec, point: _Point) -> OptimumRow:
    cfg, V, sigma2 = _model(spec, point)
    row = OptimumRow(sweep_value=point.value)
    try:
        det = optimize_det(cfg, V, sigma2, tol_tau=spec.optimizer.tol_tau)
        row.tau_star_det = det.tau_star
        row.clamped = det.clamped.value
        rate_nats = None
        if spec.uses_det:
            row.r_net_det_bits = _bits(det.net_rate)
            rate_nats = det.net_rate
        if spec.uses_mc:
            est = estimate_net_rate(cfg, V, sigma2, det.tau_star, spec.mc.n_samples, spec.mc.seed)
            row.r_net_mc_bits = _bits(est.mean)
            row.mc_std_err_bits = _bits(est.std_err)
            rate_nats = est.mean
            grid = window_grid(cfg, det.tau_star, spec.mc.window, spec.mc.grid_step)
            mc = optimize_mc(cfg, V, sigma2, grid, spec.mc.n_samples, spec.mc.seed)
            row.tau_star_mc = mc.tau_star
            row.seed = spec.mc.seed
        # Rate per BS is M antennas times the per-antenna rate (Monte Carlo when available)
        row.rate_per_bs_bits = _bits(cfg.M * rate_nats)
    except NumericalError as e:
        logger.error(f"Optimizer point {point.value:g} failed: {e}")
        return OptimumRow(sweep_value=point.value, status=_failure_status(e))
    return row


def _run_points(spec: ExperimentSpec, points: List[_Point], job, stats: TimingStats) -> list:
    def timed(point):
        with Timer(f"point {point.value:g}", stats):
            return job(spec, point)

    if spec.output.workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=spec.output.workers) as pool:
            return list(pool.map(timed, points))
    return [timed(p) for p in points]


def write_csv(path: Path, rows: list, columns: List[str], header: Dict[str, object]) -> pd.DataFrame:
    """
    Write rows to CSV with '#' provenance lines on top.

    Args:
        path: Output file
        rows: Row dataclasses, in sweep order
        columns: Column order
        header: Key/value pairs for the comment lines

    Returns:
        The DataFrame that was written
    """
    frame = pd.DataFrame([asdict(r) for r in rows], columns=columns)
    if "seed" in frame:
        frame["seed"] = frame["seed"].astype("Int64")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for key, value in header.items():
            f.write(f"# {key}: {value}\n")
        frame.to_csv(f, index=False, na_rep="", float_format="%.15g", lineterminator="\n")
    return frame


def _header(spec: ExperimentSpec, schema: str, label: str) -> Dict[str, object]:
    return {
        "schema": f"{schema}/{SCHEMA_VERSION}",
        "tool": f"netrate {__version__}",
        "experiment": spec.name,
        "config_hash": spec_hash(spec),
        "seed": spec.mc.seed,
        "series": label or "all",
        "sweep": spec.sweep.kind,
        "units": "bits/channel use",
    }


def _run(spec: ExperimentSpec, schema: str, columns: List[str], job, stats_name: str) -> ExperimentResult:
    result = ExperimentResult()
    stats = TimingStats(stats_name)
    SOLVER_STATS.reset()
    for label, points in _series(spec):
        logger.info(f"Running {len(points)} points for series {label or 'all'}")
        rows = _run_points(spec, points, job, stats)
        path = _output_path(spec, label)
        result.tables[label] = write_csv(path, rows, columns, _header(spec, schema, label))
        result.paths.append(path)
        result.failures += sum(r.status != "ok" for r in rows)
        logger.info(f"Wrote {path}")
    stats.log_stats()
    SOLVER_STATS.log_stats()
    return result


def run_sweep(spec: ExperimentSpec) -> ExperimentResult:
    """
    Evaluate the net rate over the sweep, one CSV per series.

    Failed points are kept as rows with a failure status; the run goes on and
    the result's exit_code becomes nonzero.

    Args:
        spec: Validated experiment spec

    Returns:
        ExperimentResult
    """
    for _, points in _series(spec):
        for p in points:
            if not (p.tau <= spec.system.T):
                raise ConfigError(f"sweep: training length {p.tau:g} exceeds T={spec.system.T:g}")
    return _run(spec, SWEEP_SCHEMA, SWEEP_COLUMNS, _sweep_point, "sweep point")


def run_optimum(spec: ExperimentSpec) -> ExperimentResult:
    """
    Optimize the training length at every sweep value.

    tau_bar* comes from the deterministic optimizer; with Monte Carlo enabled,
    tau* is searched on the integer window around tau_bar* and the Monte Carlo
    net rate is reported at tau_bar*.

    Args:
        spec: Validated experiment spec with an snr or backhaul sweep

    Returns:
        ExperimentResult
    """
    if spec.sweep.kind == "tau":
        raise ConfigError("sweep.kind: optimize needs an snr or backhaul sweep, not tau")
    K = spec.path_loss_matrix().K
    if not (spec.system.T > K):
        raise ConfigError(f"system.T: must exceed the user count K={K}")
    return _run(spec, OPTIMUM_SCHEMA, OPTIMUM_COLUMNS, _optimum_point, "optimizer point")


def read_csv(path) -> Tuple[Dict[str, str], pd.DataFrame]:
    """
    Read a CSV written by run_sweep/run_optimum.

    Args:
        path: CSV file

    Returns:
        (header key/values, data)
    """
    header = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
    frame = pd.read_csv(path, comment="#", keep_default_na=True)
    return header, frame

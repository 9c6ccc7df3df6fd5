"""Seeded Monte-Carlo batches, parameter sweeps, baselines and CSV output.

Every (seed, sweep value, baseline) cell is an independent job: channels are
drawn from ``seed`` alone, so baselines and sweep points of the same seed see
the same realization (common random numbers). Jobs may run in a process pool;
records are always returned in key order.
"""

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import FeasibilityLossError, InfeasibleScenarioError, InvalidInputError
from .optimizer import initialize, run
from .scenario import ScenarioConfig, draw_channels

log = logging.getLogger(__name__)

__all__ = [
    "BASELINES",
    "SWEEP_AXES",
    "ExperimentSpec",
    "ResultRecord",
    "SummaryRow",
    "run_single",
    "run_experiment",
    "summarize",
    "write_records",
    "read_records",
    "write_summary",
    "write_run_trace",
    "write_phase_trace",
]

BASELINES = ("optimized-ris", "rnd-ris", "no-ris", "com-only")
SWEEP_AXES = ("none", "ris_elements", "si_db")
_AXIS_FIELD = {"ris_elements": "num_ris_elements", "si_db": "rho_si_db"}

# record status values
CONVERGED = "converged"
ITERATION_CAP = "iteration_cap"
INFEASIBLE = "infeasible"
ABORTED = "aborted"


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run.

    ``sweep_values`` must be nonempty and strictly increasing unless
    ``sweep_axis`` is ``"none"``. Seeds are ``first_seed .. first_seed +
    num_seeds - 1``.
    """

    config: ScenarioConfig
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    baselines: tuple = BASELINES
    num_seeds: int = 20
    output: object = None
    first_seed: int = 0
    trace: bool = False
    workers: int = 1

    def validate(self):
        if int(self.num_seeds) != self.num_seeds or self.num_seeds < 1:
            raise InvalidInputError("num_seeds must be a positive integer")
        if self.sweep_axis not in SWEEP_AXES:
            raise InvalidInputError(f"sweep axis must be one of {SWEEP_AXES}")
        if self.sweep_axis != "none":
            values = list(self.sweep_values)
            if not values:
                raise InvalidInputError("sweep values must be nonempty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise InvalidInputError("sweep values must be strictly increasing")
        if not self.baselines:
            raise InvalidInputError("at least one baseline is required")
        unknown = set(self.baselines) - set(BASELINES)
        if unknown:
            raise InvalidInputError(f"unknown baselines: {sorted(unknown)}")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        return self

    @property
    def seeds(self):
        return list(range(self.first_seed, self.first_seed + self.num_seeds))

    @property
    def points(self):
        """Sweep values, or ``[None]`` without a sweep."""
        return [None] if self.sweep_axis == "none" else list(self.sweep_values)

    def cell_config(self, value):
        if self.sweep_axis == "none":
            return self.config
        name = _AXIS_FIELD[self.sweep_axis]
        value = int(value) if name == "num_ris_elements" else float(value)
        return self.config.with_updates(**{name: value})


@dataclass
class ResultRecord:
    seed: int
    baseline: str
    sweep_value: object
    sum_rate_nats: float
    sum_rate_bits: float
    radar_sinr_db: float
    outer_iterations: int
    wall_time_seconds: float
    status: str

    def key(self):
        return (self.seed, _value_key(self.sweep_value), BASELINES.index(self.baseline))


def _value_key(value):
    return -math.inf if value is None else float(value)


@dataclass
class RunOutput:
    """A record plus the optional per-iteration traces of the run."""

    record: ResultRecord
    run_trace: list = field(default_factory=list)
    phase_trace: list = field(default_factory=list)
    state: object = None


def baseline_setup(config, channels, baseline):
    """Apply a baseline transform; returns ``(config, channels)``."""
    if baseline == "optimized-ris":
        return config, channels
    if baseline == "rnd-ris":
        return config.with_updates(optimize_ris=False), channels
    if baseline == "no-ris":
        return config.with_updates(optimize_ris=False), channels.without_ris()
    if baseline == "com-only":
        return config.with_updates(sensing=False), channels
    raise InvalidInputError(f"unknown baseline {baseline!r}")


def run_single(config, seed, baseline, sweep_value=None, trace=False, keep_state=False):
    """Run one cell and return a :class:`RunOutput`.

    With ``keep_state`` the final optimizer state (history included) is
    attached to the output.
    """
    t0 = time.perf_counter()
    cfg, channels = baseline_setup(config, draw_channels(config, seed), baseline)
    nan = float("nan")
    try:
        state = initialize(channels, cfg, seed=seed)
        state = run(state, record_trace=trace)
    except InfeasibleScenarioError as exc:
        log.info("seed %d %s: %s", seed, baseline, exc)
        rec = ResultRecord(seed, baseline, sweep_value, nan, nan, nan, 0,
                           time.perf_counter() - t0, INFEASIBLE)
        return RunOutput(rec)
    except FeasibilityLossError as exc:
        log.warning("seed %d %s aborted: %s", seed, baseline, exc)
        rec = ResultRecord(seed, baseline, sweep_value, nan, nan, nan, 0,
                           time.perf_counter() - t0, ABORTED)
        return RunOutput(rec)
    last = state.history[-1]
    radar_db = last.radar_sinr_db if cfg.sensing else nan
    rec = ResultRecord(
        seed=seed, baseline=baseline, sweep_value=sweep_value,
        sum_rate_nats=last.sum_rate, sum_rate_bits=last.sum_rate_bits,
        radar_sinr_db=float(radar_db), outer_iterations=state.iterations,
        wall_time_seconds=time.perf_counter() - t0,
        status=CONVERGED if state.converged else ITERATION_CAP,
    )
    out = RunOutput(rec, state=state if keep_state else None)
    if trace:
        for h in state.history:
            row = dict(iteration=h.iteration, sum_rate_nats=h.sum_rate, sum_rate_bits=h.sum_rate_bits,
                       radar_sinr_db=h.radar_sinr_db if cfg.sensing else nan)
            for block in ("aux", "W", "q", "u", "u0", "phi"):
                row[f"time_{block}"] = h.timings.get(block, 0.0)
            out.run_trace.append(row)
            for p in h.phase_trace:
                out.phase_trace.append(dict(bca_iteration=h.iteration, **p))
    return out


def _job(args):
    return run_single(*args)


def run_experiment(spec, return_outputs=False):
    """Run every (seed, sweep value, baseline) cell of ``spec``.

    Returns the records in (seed, sweep value, baseline) order, or the full
    :class:`RunOutput` objects when ``return_outputs`` is true. When
    ``spec.output`` is set, records (and traces if requested) are written
    there as well.
    """
    spec.validate()
    jobs = [(spec.cell_config(value), seed, baseline, value, spec.trace)
            for seed in spec.seeds for value in spec.points for baseline in spec.baselines]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            outputs = list(pool.map(_job, jobs, chunksize=1))
    else:
        outputs = [_job(j) for j in jobs]
    outputs.sort(key=lambda o: o.record.key())
    if spec.output is not None:
        out_dir = Path(spec.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        records = [o.record for o in outputs]
        write_records(out_dir / "records.csv", records)
        write_summary(out_dir / "summary.csv", summarize(records))
        if spec.trace:
            trace_dir = out_dir / "traces"
            trace_dir.mkdir(exist_ok=True)
            for o in outputs:
                r = o.record
                stem = f"{r.baseline}_seed{r.seed}" + ("" if r.sweep_value is None else f"_{r.sweep_value:g}")
                write_run_trace(trace_dir / f"{stem}.csv", o.run_trace)
                if o.phase_trace:
                    write_phase_trace(trace_dir / f"{stem}_pdd.csv", o.phase_trace)
    return outputs if return_outputs else [o.record for o in outputs]


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

@dataclass
class SummaryRow:
    """Mean and standard error of one (baseline, sweep value) cell.

    Statistics are ``None`` when every run of the cell was infeasible or
    aborted; ``n`` counts only usable runs.
    """

    baseline: str
    sweep_value: object
    n: int
    n_infeasible: int
    n_aborted: int
    mean_sum_rate_nats: object
    stderr_sum_rate_nats: object
    mean_sum_rate_bits: object
    mean_radar_sinr_db: object
    mean_outer_iterations: object


def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return None, None
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, stderr


def summarize(records):
    """Group by (baseline, sweep value); deterministic ordering."""
    if not records:
        raise InvalidInputError("no records to summarize")
    groups = {}
    for r in records:
        groups.setdefault((r.baseline, r.sweep_value), []).append(r)
    rows = []
    order = sorted(groups, key=lambda k: (BASELINES.index(k[0]), _value_key(k[1])))
    for baseline, value in order:
        group = groups[(baseline, value)]
        ok = [r for r in group if r.status in (CONVERGED, ITERATION_CAP)]
        mean, stderr = _mean_stderr([r.sum_rate_nats for r in ok])
        bits, _ = _mean_stderr([r.sum_rate_bits for r in ok])
        radar = [r.radar_sinr_db for r in ok if np.isfinite(r.radar_sinr_db)]
        radar_mean, _ = _mean_stderr(radar)
        iters, _ = _mean_stderr([r.outer_iterations for r in ok])
        rows.append(SummaryRow(
            baseline, value, len(ok),
            sum(r.status == INFEASIBLE for r in group), sum(r.status == ABORTED for r in group),
            mean, stderr, bits, radar_mean, iters,
        ))
    return rows


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else f"{float(value):.9g}"
    return str(value)


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[h]) for h in header])


_RECORD_FIELDS = [f.name for f in fields(ResultRecord)]


def write_records(path, records):
    _write_rows(path, _RECORD_FIELDS, [asdict(r) for r in records])


def _float_or_nan(text):
    return float(text) if text != "" else float("nan")


def read_records(path):
    """Inverse of :func:`write_records` (floats carry 9 significant digits)."""
    out = []
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            value = row["sweep_value"]
            out.append(ResultRecord(
                seed=int(row["seed"]), baseline=row["baseline"],
                sweep_value=None if value == "" else float(value),
                sum_rate_nats=_float_or_nan(row["sum_rate_nats"]),
                sum_rate_bits=_float_or_nan(row["sum_rate_bits"]),
                radar_sinr_db=_float_or_nan(row["radar_sinr_db"]),
                outer_iterations=int(row["outer_iterations"]),
                wall_time_seconds=_float_or_nan(row["wall_time_seconds"]),
                status=row["status"],
            ))
    return out


def write_summary(path, rows):
    _write_rows(path, [f.name for f in fields(SummaryRow)], [asdict(r) for r in rows])


_RUN_TRACE_FIELDS = ["iteration", "sum_rate_nats", "sum_rate_bits", "radar_sinr_db",
                     "time_aux", "time_W", "time_q", "time_u", "time_u0", "time_phi"]
_PHASE_TRACE_FIELDS = ["bca_iteration", "outer_iter", "gap_inf", "dphi_inf", "al_value", "rho"]


def write_run_trace(path, rows):
    _write_rows(path, _RUN_TRACE_FIELDS, rows)


def write_phase_trace(path, rows):
    _write_rows(path, _PHASE_TRACE_FIELDS, rows)

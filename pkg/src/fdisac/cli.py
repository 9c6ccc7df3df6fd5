"""Command-line front end for seeded batches and sweeps.

Run as ``python -m fdisac``. Exit status: 0 on success, 2 if any cell had an
infeasible realization, 1 on error.
"""

import argparse
import logging
import sys

from .errors import InvalidInputError
from .harness import BASELINES, INFEASIBLE, ExperimentSpec, run_experiment, summarize
from .scenario import load_config

log = logging.getLogger("fdisac")

_SWEEPS = {"m": ("ris_elements", int), "si": ("si_db", float)}


def parse_sweep(text):
    """``"m=8,16,32"`` -> ``("ris_elements", (8, 16, 32))``."""
    if text is None:
        return "none", ()
    name, sep, values = text.partition("=")
    if not sep or name.strip().lower() not in _SWEEPS:
        raise InvalidInputError(f"bad sweep {text!r}; expected m=... or si=...")
    axis, cast = _SWEEPS[name.strip().lower()]
    try:
        parsed = tuple(cast(v) for v in values.split(",") if v.strip())
    except ValueError as exc:
        raise InvalidInputError(f"bad sweep values in {text!r}") from exc
    return axis, parsed


def parse_baselines(text):
    names = tuple(b.strip() for b in text.split(",") if b.strip())
    unknown = set(names) - set(BASELINES)
    if unknown:
        raise InvalidInputError(f"unknown baselines {sorted(unknown)}; choose from {BASELINES}")
    return names


def build_parser():
    p = argparse.ArgumentParser(prog="fdisac", description=__doc__.splitlines()[0])
    p.add_argument("--config", metavar="PATH", help="TOML file with ScenarioConfig fields")
    p.add_argument("--preset", choices=("paper", "desk"), default="desk")
    p.add_argument("--seeds", type=int, default=20, metavar="N", help="number of seeds (0..N-1)")
    p.add_argument("--sweep", metavar="AXIS=V1,V2,...", help="m=8,16,32 or si=-110,-90,-70")
    p.add_argument("--baselines", default=",".join(BASELINES), metavar="LIST",
                   help="comma-separated subset of " + ", ".join(BASELINES))
    p.add_argument("--out", metavar="DIR", default="results")
    p.add_argument("--trace", action="store_true", help="write per-run and PDD trace CSVs")
    p.add_argument("--workers", type=int, default=1, metavar="N", help="process pool size")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _print_summary(rows, stream):
    print(f"{'baseline':<14} {'sweep':>8} {'n':>3} {'infeas':>6} {'rate [bit/s/Hz]':>16} {'stderr':>9}",
          file=stream)
    for r in rows:
        value = "-" if r.sweep_value is None else f"{r.sweep_value:g}"
        if r.mean_sum_rate_nats is None:
            rate, err = "empty", ""
        else:
            rate, err = f"{r.mean_sum_rate_bits:.4f}", f"{r.stderr_sum_rate_nats / 0.6931471805599453:.4f}"
        print(f"{r.baseline:<14} {value:>8} {r.n:>3} {r.n_infeasible:>6} {rate:>16} {err:>9}", file=stream)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, preset=args.preset)
        axis, values = parse_sweep(args.sweep)
        spec = ExperimentSpec(config=config, sweep_axis=axis, sweep_values=values,
                              baselines=parse_baselines(args.baselines), num_seeds=args.seeds,
                              output=args.out, trace=args.trace, workers=args.workers)
        records = run_experiment(spec)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.error("%s", exc, exc_info=args.verbose)
        return 1
    _print_summary(summarize(records), sys.stdout)
    print(f"records written to {args.out}")
    return 2 if any(r.status == INFEASIBLE for r in records) else 0

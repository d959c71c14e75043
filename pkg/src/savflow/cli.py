"""
Command-line entry points.

::

    savflow run --config run.ini [--override scheme.dt=0.005]...
    savflow converge --config run.ini --dt-ladder 0.1,0.05,0.025
    savflow compare --config run.ini --schemes gsav,eop_gsav

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import parse_config, apply_overrides
from .harness import compare_schemes, convergence_from_config, run_config
from .integrators import ConfigurationError, NumericalFailure

log = logging.getLogger("savflow")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="savflow", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path, help="run configuration file")
        sp.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="replace one configuration value (repeatable)")
        sp.add_argument("--out", type=Path, default=None, help="output directory (default: output.dir)")

    common(sub.add_parser("run", help="run one configuration and write energy CSV and snapshots"))
    conv = sub.add_parser("converge", help="time-step convergence study")
    common(conv)
    conv.add_argument("--dt-ladder", required=True, help="comma-separated decreasing time steps")
    cmp_ = sub.add_parser("compare", help="run several schemes on one configuration")
    common(cmp_)
    cmp_.add_argument("--schemes", required=True, help="comma-separated scheme names")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args):
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {args.config}: {exc}") from exc
    config = parse_config(text)
    if args.override:
        config = apply_overrides(config, args.override)
    return config


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad number list {text!r}") from exc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = _load(args)
        out = args.out or Path(config.output["dir"])
        if args.command == "run":
            result = run_config(config, out)
            for problem in result.violations:
                log.warning(problem)
            last = result.records[-1]
            print(f"{len(result.records)} steps to t = {last.t:g}; "
                  f"E = {last.E_original:.10g}, modified = {last.E_modified:.10g}; wrote {out}")
        elif args.command == "converge":
            try:
                est = convergence_from_config(config, _floats(args.dt_ladder), out)
            except ValueError as exc:
                raise ConfigurationError(str(exc)) from exc
            for dt, err in zip(est.dt, est.errors):
                print(f"dt = {dt:<12g} error = {err:.6e}")
            print(f"fitted order {est.slope:.3f}; pairwise "
                  + ", ".join(f"{p:.2f}" for p in est.pairwise))
        else:
            names = [s.strip() for s in args.schemes.split(",") if s.strip()]
            table = compare_schemes(config, names, out)
            for (label, quantity), value in table.summary.items():
                print(f"max |{quantity}({label}) - {quantity}({names[0]})| = {value:.6e}")
            print(f"wrote {out / 'comparison.csv'}")
    except NumericalFailure as exc:
        print(f"savflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigurationError as exc:
        print(f"savflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

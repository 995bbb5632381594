"""Command line entry point: ``pulsefront run|predict|check <config>``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiment as ex
from .errors import ConfigError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pulsefront", description="Competition fronts in periodic media.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "simulate the sweep, predict, compare"),
                       ("predict", "interface predictions only, no simulation"),
                       ("check", "audit hypotheses, k-schedule and existence conditions")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="TOML experiment file")
        s.add_argument("--out", default=None, help="output directory (default: $PULSEFRONT_OUT or ./pulsefront_out)")
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--resolution", type=int, default=None, help="nodes per period")
        s.add_argument("--horizon", type=float, default=None)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"nodes_per_period": args.resolution, "horizon": args.horizon}
    try:
        cfg = ex.load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"pulsefront: {exc}", file=sys.stderr)
        return 2
    out = ex.default_out_dir(args.out)
    if args.command == "run":
        records, preds = ex.run_sweep(cfg, workers=args.workers, out_dir=out)
        verdicts = ex.sweep_verdicts(cfg, records, preds) + ex.prediction_verdicts(preds)
        ex.emit_report(out, records, preds, verdicts, cfg)
    elif args.command == "predict":
        preds = ex.predictions(cfg)
        verdicts = ex.prediction_verdicts(preds)
        ex.emit_report(out, [], preds, verdicts, cfg)
    else:
        verdicts = ex.check_verdicts(cfg)
        ex.emit_report(out, [], [], verdicts, cfg)
    for v in verdicts:
        print(f"{'PASS' if v['passed'] else 'FAIL'} {v['criterion']}: {v['detail']}")
    return 0 if all(v["passed"] for v in verdicts) else 1


if __name__ == "__main__":
    sys.exit(main())

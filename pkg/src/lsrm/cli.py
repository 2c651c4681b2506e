"""Command-line entry point: ``lsrm {simulate,fit,predict,summarize,convert}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import fitting
from .errors import LSRMError
from .io import atomic_write_text, convert_chain, read_kv, read_panel


def _add_common(p, data_help="panel file"):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--data", help=data_help)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsrm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a panel from a design file")
    _add_common(p, data_help="unused")
    p.add_argument("--family", choices=("gaussian", "binary"))

    for name, help_ in (("fit", "fit a model to a panel"),
                        ("predict", "holdout mean-squared errors for several submodels")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.add_argument("--model", choices=sorted(fitting.SUBMODELS))
        p.add_argument("--family", choices=("gaussian", "binary"))

    p = sub.add_parser("summarize", help="summary tables and traces from a chain file")
    _add_common(p, data_help="chain file")

    p = sub.add_parser("convert", help="convert a chain file between binary and text")
    p.add_argument("--data", required=True, help="input chain file")
    p.add_argument("--out", required=True, help="output path (.bin for binary)")
    return parser


def _need(args, attr):
    if not getattr(args, attr):
        raise SystemExit(f"lsrm {args.command}: --{attr} is required")
    return getattr(args, attr)


def _run(args) -> int:
    if args.command == "simulate":
        kv = read_kv(args.config) if args.config else {}
        design = fitting.design_from_kv(kv, family=args.family)
        panel_path, truth_path = fitting.simulate_to_dir(design, args.seed or 0, args.out)
        print(f"wrote {panel_path} and {truth_path}")
        return 0
    if args.command == "summarize":
        files = fitting.summarize_to_dir(_need(args, "data"), args.out)
        print(f"wrote {len(files)} files to {args.out}")
        return 0
    if args.command == "convert":
        convert_chain(args.data, args.out)
        print(f"wrote {args.out}")
        return 0

    cfg = fitting.load_run_config(args.config, seed=args.seed, model=args.model,
                                  family=args.family, out_dir=args.out)
    panel = read_panel(_need(args, "data"), family=cfg.family)
    if args.command == "fit":
        chain = fitting.fit(panel, cfg)
        print(f"saved {len(chain)} draws to {args.out}")
        return 0
    models = (args.model,) if args.model else None
    rows = fitting.holdout_mse(panel, cfg, models=models)
    text = fitting.format_mse_table(rows)
    atomic_write_text(Path(args.out) / "holdout_mse.csv", text)
    sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (LSRMError, OSError) as exc:
        print(f"lsrm {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

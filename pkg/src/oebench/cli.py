"""``oebench`` command line: run configs, canned sweeps, the 2-D toy study and reports."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import data as D
from . import report as R
from . import sweeps as S
from .config import ConfigError, ExperimentConfig
from .engine import NumericError, aggregate
from .runner import check_config, execute, load_splits, resolve_data_root, with_seed_base

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (key = value lines)")
    p.add_argument("--data-root", help="directory holding dataset folders (default: $OEBENCH_DATA_ROOT)")
    p.add_argument("--out", help="results file for 'run'; output directory for other commands")
    p.add_argument("--jobs", type=int, default=1, help="parallel training runs")
    p.add_argument("--profile", choices=("desk", "paper"), help="schedule profile, overrides the config")
    p.add_argument("--seed-base", type=int, default=0, help="offset added to every seed")


def _sweep_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset")
    p.add_argument("--oe-dataset")
    p.add_argument("--methods", nargs="+")
    p.add_argument("--classes", nargs="+", type=int)
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--no-figure", action="store_true", help="skip the PNG figure")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oebench", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute every run of a config and print the table")
    _common(p)

    p = sub.add_parser("sweep-oe-size", help="AUC against the number of OE samples")
    _common(p)
    _sweep_args(p)
    p.add_argument("--sizes", nargs="+", help="OE sizes (integers or 'all'); default 1, 2, 4, ... pool")

    p = sub.add_parser("ablate-blur", help="AUC against Gaussian blur of the OE samples")
    _common(p)
    _sweep_args(p)
    p.add_argument("--sigmas", nargs="+", type=float, default=list(D.BLUR_SIGMAS))
    p.add_argument("--oe-size", help="fixed OE size (integer or 'all')")

    p = sub.add_parser("ablate-diversity", help="AUC against the number of OE classes")
    _common(p)
    _sweep_args(p)
    p.add_argument("--ks", nargs="+", type=int, help="class counts; default 1..K")
    p.add_argument("--oe-size", help="fixed OE size (integer or 'all')")

    p = sub.add_parser("sweep-focal-gamma", help="focal loss AUC against gamma")
    _common(p)
    _sweep_args(p)
    p.add_argument("--gammas", nargs="+", type=float, default=list(S.FOCAL_GAMMAS))

    p = sub.add_parser("toy2d", help="2-D BCE vs HSC score grids")
    p.add_argument("--out", default="toy2d", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("report", help="aggregate result files into tables")
    p.add_argument("results", nargs="+", help="results .jsonl files")
    p.add_argument("--out", help="directory for table.txt, table.csv and table.png")
    p.add_argument("--no-figure", action="store_true")
    return ap


def _size(text: str):
    if text.lower() == "all":
        return "all"
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"OE size must be an integer or 'all', got {text!r}", "oe_size") from None


def _base_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.profile:
        cfg = replace(cfg, profile=args.profile)
    for attr, name in (("dataset", "dataset"), ("oe_dataset", "oe_dataset"), ("methods", "methods"),
                       ("classes", "classes"), ("seeds", "seeds")):
        v = getattr(args, name, None)
        if v is not None:
            cfg = replace(cfg, **{attr: v})
    if getattr(args, "oe_size", None) is not None:
        cfg = replace(cfg, oe_size=_size(args.oe_size))
    return with_seed_base(cfg, args.seed_base)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def cmd_run(args) -> int:
    if not args.config:
        raise ConfigError("run needs --config")
    cfg = _base_config(args)
    results = execute(cfg.validate(), resolve_data_root(args.data_root), args.jobs, args.out or cfg.out, _say)
    print(R.format_table(aggregate(results)), end="")
    return EXIT_OK


def _sweep(args, cfg: ExperimentConfig, name: str) -> int:
    cfg.validate()
    out = Path(args.out or f"oebench-{name}")
    out.mkdir(parents=True, exist_ok=True)
    cfg = replace(cfg, out=str(out / "results.jsonl"))
    cfg.save(out / "config.txt")
    results = execute(cfg, resolve_data_root(args.data_root), args.jobs, cfg.out, _say)
    table = aggregate(results)
    series = S.series_from_table(table)
    series.write_csv(out / "series.csv")
    text = R.format_table(table)
    (out / "table.txt").write_text(text)
    R.write_table_csv(table, out / "table.csv")
    if not args.no_figure:
        from .plotting import plot_series

        plot_series(series, out / "series.png")
    print(text, end="")
    _say(f"wrote {out}/results.jsonl, series.csv, table.txt, table.csv" + ("" if args.no_figure else ", series.png"))
    return EXIT_OK


def cmd_sweep_oe_size(args) -> int:
    base = _base_config(args)
    if args.sizes:
        sizes = [_size(s) for s in args.sizes]
    else:
        _, _, pool = load_splits(base, resolve_data_root(args.data_root))
        sizes = S.power_of_two_sizes(0 if pool is None else len(pool))
    return _sweep(args, S.oe_size_sweep(base, sizes), "oe-size")


def cmd_ablate_blur(args) -> int:
    return _sweep(args, S.blur_sweep(_base_config(args), args.sigmas), "blur")


def cmd_ablate_diversity(args) -> int:
    base = _base_config(args)
    ks = args.ks
    if not ks:
        _, _, pool = load_splits(base, resolve_data_root(args.data_root))
        ks = list(range(1, (0 if pool is None else len(pool.classes())) + 1))
    return _sweep(args, S.diversity_sweep(base, 0, ks), "diversity")


def cmd_sweep_focal_gamma(args) -> int:
    return _sweep(args, S.focal_gamma_sweep(_base_config(args), args.gammas), "focal-gamma")


def cmd_toy2d(args) -> int:
    from .toy2d import run_toy2d

    results = run_toy2d(args.out, seed=args.seed, figure=not args.no_figure)
    for name, r in results.items():
        print(f"{name}: tau bce={r.thresholds['bce']:.4g} hsc={r.thresholds['hsc']:.4g}")
    _say(f"wrote grids to {args.out}/toy2d_{{ideal,skewed}}.csv")
    return EXIT_OK


def cmd_report(args) -> int:
    results = R.read_results(args.results)
    table = R.build_table(results)
    text = R.format_table(table)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.txt").write_text(text)
        R.write_table_csv(table, out / "table.csv")
        if not args.no_figure:
            from .plotting import plot_table

            plot_table(table, out / "table.png")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep-oe-size": cmd_sweep_oe_size,
    "ablate-blur": cmd_ablate_blur,
    "ablate-diversity": cmd_ablate_diversity,
    "sweep-focal-gamma": cmd_sweep_focal_gamma,
    "toy2d": cmd_toy2d,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (R.ReportError, D.ProtocolError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (D.DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

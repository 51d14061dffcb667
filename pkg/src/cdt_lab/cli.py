"""Command-line front end (``cdt-lab``)."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import report, world
from .categorizer import categorize
from .detect.cv import GRIDS, nested_cv
from .features import LabeledDataset
from .filterlist import FilterSet, MatchContext
from .pipeline import ExperimentConfig, PipelineError, reanalyze, run_pipeline
from .scheduler import SETUP_CODES
from .store import ExperimentStore, StoreConflict


SHIPPED = "shipped"


def _data_root(args) -> Path | None:
    return Path(args.data_root) if getattr(args, "data_root", None) else None


def cmd_persona_build(args) -> int:
    personas, failures = world.build_personas(_data_root(args))
    text = json.dumps([p.to_dict() for p in personas], indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for f in failures:
        print(f"persona build failed: {f}", file=sys.stderr)
    return 1 if failures else 0


def cmd_filter_check(args) -> int:
    if args.list == SHIPPED:
        filters = world.load_filters(_data_root(args))
    else:
        filters = FilterSet.from_file(args.list)
    if not args.urls:
        print(json.dumps({"header": filters.header, **filters.report()}, indent=2, sort_keys=True))
        return 0
    for url in args.urls:
        v = filters.lookup(MatchContext.build(url, args.page or ""))
        rule = v.rule.raw if v.rule is not None else "-"
        exc = v.exception.raw if v.exception is not None else "-"
        print(f"{'AD' if v.is_ad else 'ok'}\t{url}\trule={rule}\texception={exc}")
    return 0


def cmd_categorize(args) -> int:
    db = world.load_category_db(_data_root(args))
    for domain in args.domains:
        print(f"{domain}\t{','.join(categorize(db, domain))}")
    return 0


def _config(args) -> ExperimentConfig:
    overrides = {
        "setup": args.setup, "seed": args.seed, "cdt_strength": args.cdt_strength,
        "personas": [int(p) for p in args.personas.split(",")] if args.personas else None,
        "runs": args.runs, "sessions": args.sessions, "grid": args.grid, "data_root": args.data_root,
    }
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    if args.setup is None:
        raise ValueError("--setup is required without --config")
    return ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run_pipeline(cfg, ExperimentStore(args.store))
    sys.stdout.write(result.tables["report.txt"])
    return 0


def cmd_analyze(args) -> int:
    target = args.target or args.dataset
    if target and Path(target).is_file():
        ds = LabeledDataset.load(target)
        rep = nested_cv(ds.X, ds.y, args.grid or "fast", outer_k=args.outer_k, inner_k=args.inner_k,
                        seed=args.seed or 0, feature_names=ds.feature_names, groups=ds.groups())
        sys.stdout.write(rep.to_text())
        return 0
    store = ExperimentStore(args.store)
    experiment = target or args.experiment or _latest(store)
    _, text = reanalyze(store, experiment, grid=args.grid, seed=args.seed)
    sys.stdout.write(text)
    return 0


def _latest(store: ExperimentStore) -> str:
    names = store.experiments()
    if not names:
        raise FileNotFoundError(f"no experiments in {store.root}")
    if len(names) > 1:
        raise ValueError(f"several experiments in {store.root}; pass --experiment ({', '.join(names)})")
    return names[0]


REPORT_FILES = {"auc": "auc.csv", "cdf": "ads_cdf.csv", "trackers": "trackers.csv"}


EMPTY_TABLES = {"auc": report.auc_table({}),
                "cdf": report.csv_table(report.CDF_HEADER, []),
                "trackers": report.csv_table(report.TRACKER_HEADER, [])}


def cmd_report(args) -> int:
    store = ExperimentStore(args.store)
    if args.experiment is None and not store.experiments():
        sys.stdout.write(EMPTY_TABLES[args.kind])
        return 0
    experiment = args.experiment or _latest(store)
    sys.stdout.write(store.read_report(experiment, REPORT_FILES[args.kind]))
    return 0


def cmd_trackers(args) -> int:
    """Tracker coverage from a tracker list and the shipped simulated world."""
    sim = world.load_sim_config(_data_root(args))
    trackers = report.TrackerList.from_file(args.tracker_list) if args.tracker_list else report.TrackerList.from_sim(sim)
    pages = sorted({p for persona in world.build_personas(_data_root(args))[0] for p in persona.persona_pages})
    rows, frac = report.tracker_coverage(trackers, report.embedded_third_parties(sim, pages))
    sys.stdout.write(report.csv_table(report.TRACKER_HEADER, rows))
    print(f"# cdt fraction {frac:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdt-lab", description="Cross-device tracking measurement lab")
    p.add_argument("--data-root", help="directory with world fixtures (default: shipped data)")
    p.add_argument("--store", help="experiment store root (default: $CDT_LAB_STORE or ./cdt-lab-store)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    persona = sub.add_parser("persona", help="persona catalog").add_subparsers(dest="action", required=True)
    pb = persona.add_parser("build", help="build personas from the catalog fixtures")
    pb.add_argument("--out")
    pb.set_defaults(func=cmd_persona_build)

    flt = sub.add_parser("filter", help="filter list").add_subparsers(dest="action", required=True)
    fc = flt.add_parser("check", help="summarize a list or classify URLs against it")
    fc.add_argument("list", help=f"filter list file, or '{SHIPPED}' for the bundled snapshot")
    fc.add_argument("urls", nargs="*")
    fc.add_argument("--page", help="domain of the embedding page")
    fc.set_defaults(func=cmd_filter_check)

    cat = sub.add_parser("categorize", help="look up domain categories")
    cat.add_argument("domains", nargs="+")
    cat.set_defaults(func=cmd_categorize)

    run = sub.add_parser("run", help="simulate, extract, build datasets and evaluate")
    run.add_argument("--setup", help=f"one of {', '.join(SETUP_CODES)} (optionally with -sim)")
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--config", help="JSON experiment config; flags override its keys")
    run.add_argument("--cdt-strength", type=float)
    run.add_argument("--personas", help="comma-separated persona ids")
    run.add_argument("--runs", type=int)
    run.add_argument("--sessions", type=int)
    run.add_argument("--grid", choices=sorted(GRIDS))
    run.set_defaults(func=cmd_run)

    def analyze_args(a):
        a.add_argument("target", nargs="?", help="dataset CSV or stored experiment id")
        a.add_argument("--experiment")
        a.add_argument("--dataset", help="dataset CSV (same as a CSV target)")
        a.add_argument("--seed", type=int, help="cross-validation seed (default: the experiment's)")
        a.add_argument("--grid", choices=sorted(GRIDS))
        a.add_argument("--outer-k", type=int, default=10)
        a.add_argument("--inner-k", type=int, default=3)
        a.set_defaults(func=cmd_analyze)

    analyze_args(sub.add_parser("analyze", help="nested cross-validation on stored datasets"))
    det = sub.add_parser("detect", help="detection commands").add_subparsers(dest="action", required=True)
    analyze_args(det.add_parser("analyze", help="same as the top-level analyze"))

    rep = sub.add_parser("report", help="print a stored report table")
    rep.add_argument("kind", choices=sorted(REPORT_FILES))
    rep.add_argument("--experiment")
    rep.set_defaults(func=cmd_report)

    tr = sub.add_parser("trackers", help="tracker coverage over the persona pages")
    tr.add_argument("--tracker-list", help="JSON organization grouping file")
    tr.set_defaults(func=cmd_trackers)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StoreConflict, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

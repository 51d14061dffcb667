"""End-to-end experiment pipeline: fixtures, simulated runs, datasets,
nested cross-validation and report tables, persisted in an ExperimentStore."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import report, world
from .detect.cv import GRIDS, nested_cv
from .ecosim import AdEcosystem
from .features import LabeledDataset, assemble, combine
from .scheduler import execute_run, preset, run_start_tick
from .store import ExperimentStore

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """Failure tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class ExperimentConfig:
    setup: str
    seed: int
    cdt_strength: float | None = None  # None keeps the fixture value
    personas: list | None = None  # None runs the preset's personas
    runs: int | None = None
    sessions: int | None = None
    grid: str = "fast"
    outer_k: int = 10
    inner_k: int = 3
    top_k: int = 10
    data_root: str | None = None
    sim_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        preset(self.setup)  # raises UnknownSetup early
        if self.grid not in GRIDS:
            raise ValueError(f"unknown grid {self.grid!r}; choose from {sorted(GRIDS)}")
        if self.personas is not None:
            self.personas = sorted(int(p) for p in self.personas)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict({**raw, **{k: v for k, v in overrides.items() if v is not None}})

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def experiment_id(self) -> str:
        body = json.dumps({k: v for k, v in self.to_dict().items() if k != "data_root"}, sort_keys=True)
        return f"{preset(self.setup).setup_code}-s{self.seed}-{hashlib.sha256(body.encode()).hexdigest()[:8]}"


@dataclass
class Fixtures:
    personas: dict
    filters: object
    db: object
    sim: object


def load_fixtures(cfg: ExperimentConfig) -> Fixtures:
    """Load every fixture up front so a missing file fails before any work."""
    root = Path(cfg.data_root) if cfg.data_root else None
    pre = preset(cfg.setup)
    steps = [("persona", lambda: world.build_personas(root)),
             ("filter", lambda: world.load_filters(root)),
             ("categorize", lambda: world.load_category_db(root)),
             ("ecosim", lambda: world.load_sim_config(root))]
    loaded = {}
    for stage, fn in steps:
        try:
            loaded[stage] = fn()
        except (OSError, ValueError, KeyError) as exc:
            raise PipelineError(stage, f"fixture unavailable: {exc}") from exc
    personas, failures = loaded["persona"]
    if failures:
        raise PipelineError("persona", f"personas failed to build: {failures}")
    overrides = dict(cfg.sim_overrides)
    overrides["boosted"] = pre.boosted
    overrides["seed"] = cfg.seed
    if cfg.cdt_strength is not None:
        overrides["cdt_strength"] = cfg.cdt_strength
    try:
        sim = loaded["ecosim"].with_overrides(**overrides)
    except (TypeError, ValueError) as exc:
        raise PipelineError("ecosim", f"invalid simulator override: {exc}") from exc
    by_id = {p.id: p for p in personas}
    wanted = cfg.personas if cfg.personas is not None else list(pre.persona_ids)
    missing = [p for p in wanted if p not in by_id]
    if missing:
        raise PipelineError("persona", f"unknown persona ids {missing}")
    return Fixtures(by_id, loaded["filter"], loaded["categorize"], sim)


def run_seed(seed: int, persona_id: int, run_index: int) -> int:
    return int(np.random.SeedSequence([seed, persona_id, run_index]).generate_state(1)[0])


def simulate(cfg: ExperimentConfig, fx: Fixtures) -> list:
    pre = preset(cfg.setup)
    base = pre.config
    if cfg.sessions is not None:
        base = replace(base, N=cfg.sessions)
    if cfg.runs is not None:
        base = replace(base, runs=cfg.runs)
    pids = cfg.personas if cfg.personas is not None else list(pre.persona_ids)
    records = []
    g = 0
    for pid in pids:
        for r in range(1, base.runs + 1):
            rc = replace(base, persona_id=pid, start_tick=run_start_tick(g, base))
            eco = AdEcosystem(fx.sim, run_seed=run_seed(cfg.seed, pid, r))
            records.append(execute_run(rc, pre.devices(), eco, fx.filters, fx.personas[pid], pre.control,
                                       seed=cfg.seed, run_index=r))
            g += 1
    return records


def build_datasets(cfg: ExperimentConfig, records, fx: Fixtures) -> dict[str, LabeledDataset]:
    """One dataset per persona over the setup-wide vocabulary, plus the
    stacked dataset for combined setups."""
    pre = preset(cfg.setup)
    include = not pre.exclude_persona_keywords
    out = {}
    for pid in sorted({r.persona_id for r in records}):
        mine = [r for r in records if r.persona_id == pid]
        out[f"p{pid:02d}"] = assemble(mine, pre.setup_code, fx.personas, fx.db, include,
                                      vocab_records=records)
    if pre.combined:
        return {"combined": combine([out[k] for k in sorted(out)], pre.setup_code, include)}
    return out


def analyze(cfg: ExperimentConfig, datasets: dict) -> dict:
    return {name: nested_cv(ds.X, ds.y, cfg.grid, outer_k=cfg.outer_k, inner_k=cfg.inner_k,
                            seed=cfg.seed, feature_names=ds.feature_names, top_k=cfg.top_k,
                            groups=ds.groups())
            for name, ds in sorted(datasets.items())}


@dataclass
class PipelineResult:
    experiment: str
    config: ExperimentConfig
    records: list
    datasets: dict
    reports: dict
    tables: dict

    @property
    def mean_auc(self) -> float:
        return float(np.mean([r.auc for r in self.reports.values()]))


def report_tables(cfg: ExperimentConfig, fx: Fixtures, records, reports: dict) -> dict[str, str]:
    tables = {"auc.csv": report.auc_table(reports)}
    tables["ads_cdf.csv"] = report.csv_table(report.CDF_HEADER, report.ads_cdf(records, fx.db))
    pages = sorted({p for pid in {r.persona_id for r in records} for p in fx.personas[pid].persona_pages})
    cov, frac = report.tracker_coverage(report.TrackerList.from_sim(fx.sim),
                                        report.embedded_third_parties(fx.sim, pages))
    tables["trackers.csv"] = report.csv_table(report.TRACKER_HEADER, cov)
    categories = {}
    for pid in sorted({r.persona_id for r in records}):
        mine = [r for r in records if r.persona_id == pid]
        categories[f"p{pid:02d}"] = report.category_permutation(
            mine, fx.db, report.persona_categories(fx.personas[pid].persona_pages, fx.db), seed=cfg.seed)
    tables["categories.json"] = json.dumps(categories, indent=2, sort_keys=True) + "\n"
    tables["evaluation.json"] = json.dumps({k: r.to_dict() for k, r in reports.items()},
                                           indent=2, sort_keys=True) + "\n"
    counts = report.ad_count_summary(records)
    lines = [f"experiment {cfg.experiment_id}",
             f"setup {preset(cfg.setup).setup_code}  seed {cfg.seed}  "
             f"cdt_strength {fx.sim.cdt_strength}  runs {len(records)}",
             "",
             "AUC by dataset (mean over outer folds)"]
    for name, r in sorted(reports.items()):
        lines.append(f"  {name:10s} auc {r.auc:.3f}  samples {r.n_samples}  model {r.selected_model}")
    lines.append(f"  mean       auc {np.mean([r.auc for r in reports.values()]):.3f}")
    lines += ["", "Ad counts"]
    for k, v in sorted(counts.items()):
        lines.append(f"  {k} {v:.3f}" if isinstance(v, float) else f"  {k} {v}")
    lines += ["", f"Tracker coverage on persona pages (cdt fraction {frac:.3f})"]
    lines += [f"  {org:14s} {share:.3f}{'  cdt' if flag else ''}" for org, share, flag in cov]
    tables["report.txt"] = "\n".join(lines) + "\n"
    return tables


def run_pipeline(cfg: ExperimentConfig, store: ExperimentStore | None = None) -> PipelineResult:
    fx = load_fixtures(cfg)
    exp = cfg.experiment_id
    try:
        records = simulate(cfg, fx)
    except Exception as exc:
        raise PipelineError("scheduler", str(exc)) from exc
    try:
        datasets = build_datasets(cfg, records, fx)
    except Exception as exc:
        raise PipelineError("features", str(exc)) from exc
    try:
        reports = analyze(cfg, datasets)
    except Exception as exc:
        raise PipelineError("detect", str(exc)) from exc
    tables = report_tables(cfg, fx, records, reports)
    if store is not None:
        store.init()
        run_keys = [store.write_run(exp, rec) for rec in records]
        ds_index = {}
        for name, ds in sorted(datasets.items()):
            store.write_dataset(f"{exp}__{name}", ds)
            ds_index[name] = ds.digest()
        for name, text in tables.items():
            store.write_report(exp, name, text)
        store.write_experiment(exp, {"config": cfg.to_dict(), "runs": run_keys,
                                     "datasets": ds_index, "reports": sorted(tables)})
    log.info("experiment %s finished", exp)
    return PipelineResult(exp, cfg, records, datasets, reports, tables)


def reanalyze(store: ExperimentStore, experiment: str, grid: str | None = None,
              seed: int | None = None) -> tuple[str, str]:
    """Re-run detection on stored datasets after verifying their hashes.

    Returns (report name, report text); the text is also written to the store.
    """
    index = store.experiment(experiment)
    cfg = ExperimentConfig.from_dict(index["config"])
    cfg = replace(cfg, grid=grid or cfg.grid, seed=cfg.seed if seed is None else seed)
    datasets = {}
    for name, digest in sorted(index["datasets"].items()):
        ds = store.read_dataset(f"{experiment}__{name}")
        if ds.digest() != digest:
            raise PipelineError("store", f"dataset {name} hash {ds.digest()} differs from {digest}")
        datasets[name] = ds
    reports = analyze(cfg, datasets)
    text = json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=2, sort_keys=True) + "\n"
    name = f"analysis-{cfg.grid}-s{cfg.seed}.json"
    store.write_report(experiment, name, text)
    return name, text

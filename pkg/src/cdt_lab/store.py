"""Append-only experiment store on the local filesystem.

Layout under the root::

    store.json                       schema version
    runs/<run_key>/config.json       run configuration and device topology
    runs/<run_key>/sessions.log      one JSON line per crawl (no ads)
    runs/<run_key>/observations.log  one JSON line per ad observation
    datasets/<name>.csv              dataset plus .manifest.json / .meta.jsonl
    reports/<experiment>/...         evaluation and report tables
    experiments/<experiment>.json    index of runs, datasets and reports
"""
from __future__ import annotations

import json
import os
from pathlib import Path

from .adex import AdObservation
from .features import LabeledDataset
from .scheduler import CrawlRecord, RunRecord, SessionRecord

SCHEMA_VERSION = 1
STORE_ENV = "CDT_LAB_STORE"


class StoreConflict(RuntimeError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def default_root() -> Path:
    return Path(os.environ.get(STORE_ENV, "cdt-lab-store"))


class ExperimentStore:
    def __init__(self, root=None):
        self.root = Path(root) if root is not None else default_root()
        self.schema_version = SCHEMA_VERSION

    def init(self) -> "ExperimentStore":
        self.root.mkdir(parents=True, exist_ok=True)
        meta = self.root / "store.json"
        if meta.exists():
            found = json.loads(meta.read_text(encoding="utf-8")).get("schema_version")
            if found != SCHEMA_VERSION:
                raise StoreConflict(f"store schema {found} differs from {SCHEMA_VERSION}")
        else:
            meta.write_text(_dump({"schema_version": SCHEMA_VERSION}) + "\n", encoding="utf-8")
        return self

    # -- append-only writes ------------------------------------------------
    def _write_once(self, path: Path, text: str) -> Path:
        if path.exists():
            if path.read_text(encoding="utf-8") != text:
                raise StoreConflict(f"{path} exists with different content")
            return path
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)
        return path

    def write_run(self, experiment: str, record: RunRecord) -> str:
        key = f"{experiment}__{record.run_id}"
        d = self.root / "runs" / key
        config = {"run_id": record.run_id, "run_index": record.run_index,
                  "persona_id": record.persona_id, "setup_code": record.setup_code,
                  "config": record.config, "seed": record.seed, "devices": record.devices,
                  "ground_truth": record.ground_truth, "inferred_pairs": record.inferred_pairs}
        sessions, observations = [], []
        for s in record.sessions:
            for c in s.crawls:
                sessions.append(_dump({"session_id": s.session_id, "session_start": s.start_tick,
                                       **c.to_dict()}))
                observations.extend(_dump(o.to_dict()) for o in c.observations)
        self._write_once(d / "config.json", json.dumps(config, indent=1, sort_keys=True) + "\n")
        self._write_once(d / "sessions.log", "".join(line + "\n" for line in sessions))
        self._write_once(d / "observations.log", "".join(line + "\n" for line in observations))
        return key

    def write_dataset(self, name: str, dataset: LabeledDataset) -> Path:
        path = self.root / "datasets" / f"{name}.csv"
        self._write_once(path, dataset.to_csv())
        self._write_once(path.with_suffix(".manifest.json"),
                         json.dumps(dataset.manifest(), indent=2, sort_keys=True) + "\n")
        self._write_once(path.with_suffix(".meta.jsonl"),
                         "".join(_dump(m) + "\n" for m in dataset.meta))
        return path

    def write_report(self, experiment: str, name: str, text: str) -> Path:
        return self._write_once(self.root / "reports" / experiment / name, text)

    def write_experiment(self, experiment: str, index: dict) -> Path:
        return self._write_once(self.root / "experiments" / f"{experiment}.json",
                                json.dumps(index, indent=2, sort_keys=True) + "\n")

    # -- reads -------------------------------------------------------------
    def experiments(self) -> list[str]:
        d = self.root / "experiments"
        return sorted(p.stem for p in d.glob("*.json")) if d.exists() else []

    def experiment(self, experiment: str) -> dict:
        path = self.root / "experiments" / f"{experiment}.json"
        if not path.exists():
            raise FileNotFoundError(f"no experiment {experiment!r} in {self.root}")
        return json.loads(path.read_text(encoding="utf-8"))

    def read_run(self, key: str) -> RunRecord:
        d = self.root / "runs" / key
        cfg = json.loads((d / "config.json").read_text(encoding="utf-8"))
        obs_by_crawl: dict[tuple, list] = {}
        for line in (d / "observations.log").read_text(encoding="utf-8").splitlines():
            o = AdObservation(**json.loads(line))
            obs_by_crawl.setdefault((o.session_id, o.stage_id, o.device_id), []).append(o)
        sessions: dict[int, SessionRecord] = {}
        for line in (d / "sessions.log").read_text(encoding="utf-8").splitlines():
            c = json.loads(line)
            sid = c.pop("session_id")
            start = c.pop("session_start")
            crawl = CrawlRecord(c["device_id"], c["role"], c["stage"], c["crawl_type"],
                                c["start_tick"], c["pages"], c["stats"])
            if crawl.crawl_type == "test":
                crawl.observations = obs_by_crawl.get((sid, crawl.stage, crawl.device_id), [])
            sessions.setdefault(sid, SessionRecord(sid, start, [])).crawls.append(crawl)
        for s in sessions.values():
            for c in s.crawls:
                for o in c.observations:
                    if o.run_id != cfg["run_id"]:
                        raise StoreConflict(f"{key}: observation references run {o.run_id}")
        return RunRecord(cfg["run_id"], cfg["run_index"], cfg["persona_id"], cfg["setup_code"],
                         cfg["config"], cfg["seed"], cfg["devices"],
                         [sessions[k] for k in sorted(sessions)], cfg["ground_truth"],
                         cfg["inferred_pairs"])

    def read_dataset(self, name: str) -> LabeledDataset:
        return LabeledDataset.load(self.root / "datasets" / f"{name}.csv")

    def read_report(self, experiment: str, name: str) -> str:
        return (self.root / "reports" / experiment / name).read_text(encoding="utf-8")

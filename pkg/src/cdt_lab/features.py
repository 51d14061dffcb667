"""Per-(session, stage, desktop) feature vectors and labeled datasets.

Each sample pairs the mobile's test-stage ads of a session with one desktop's
ads from the B or A test stage of that session. The paired desktop (same IP
label as the mobile) is class 1; the baseline desktop is class 0.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .categorizer import CategoryDB, ReviewQueue, categorize

SCALAR_FEATURES = (
    "crawl_type", "run_id", "session_id", "mobile_timeslot", "desktop_timeslot", "desktop_day",
    "mobile_number_of_ads", "mobile_unique_number_of_ads",
    "mobile_number_of_keywords", "mobile_unique_number_of_keywords",
    "desktop_number_of_ads", "desktop_unique_number_of_ads",
    "desktop_number_of_keywords", "desktop_unique_number_of_keywords",
)
VECTOR_BLOCKS = ("persona_keywords", "mobile_keywords", "desktop_keywords",
                 "mobile_landing_pages", "desktop_landing_pages")
CRAWL_TYPE = {"B": 0, "A": 1}
SLOT_SECONDS = 1800
DAY = 86400


class IncompleteStage(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


def timeslot(tick: int) -> int:
    """Half-hour slot of the simulated day, 0..47."""
    return int(tick % DAY) // SLOT_SECONDS


def weekday(tick: int) -> int:
    """Day of week 1..7 on a calendar whose tick 0 is Monday 00:00."""
    return int(tick // DAY) % 7 + 1


@dataclass
class StageData:
    start_tick: int
    landing_domains: list  # one entry per observed ad, in order
    complete: bool = True


@dataclass
class FeatureVector:
    scalars: dict
    vectors: dict = field(default_factory=dict)  # block -> Counter

    def check(self) -> None:
        s = self.scalars
        assert s["crawl_type"] in (0, 1)
        assert 0 <= s["mobile_timeslot"] <= 47 and 0 <= s["desktop_timeslot"] <= 47
        assert 1 <= s["desktop_day"] <= 7
        for side in ("mobile", "desktop"):
            assert 0 <= s[f"{side}_unique_number_of_ads"] <= s[f"{side}_number_of_ads"]
            assert 0 <= s[f"{side}_unique_number_of_keywords"] <= s[f"{side}_number_of_keywords"]
        for counter in self.vectors.values():
            assert all(v >= 0 for v in counter.values())

    def names(self) -> list[str]:
        return [f"{block}={term}" for block in VECTOR_BLOCKS for term in self.vectors.get(block, ())]


def _keywords(domains, db: CategoryDB, queue: ReviewQueue | None) -> list[str]:
    out: list[str] = []
    for d in domains:
        out.extend(categorize(db, d, queue))
    return out


def build_sample(mobile: StageData, desktop: StageData, persona_pages, db: CategoryDB, *,
                 stage: str, run_index: int, session_id: int,
                 include_persona_keywords: bool = True,
                 queue: ReviewQueue | None = None) -> FeatureVector:
    if not (mobile.complete and desktop.complete):
        raise IncompleteStage(f"session {session_id} stage {stage}: stage data incomplete")
    if stage not in CRAWL_TYPE:
        raise IncompleteStage(f"unknown desktop stage {stage!r}")
    mk = _keywords(mobile.landing_domains, db, queue)
    dk = _keywords(desktop.landing_domains, db, queue)
    scalars = {
        "crawl_type": CRAWL_TYPE[stage],
        "run_id": run_index,
        "session_id": session_id,
        "mobile_timeslot": timeslot(mobile.start_tick),
        "desktop_timeslot": timeslot(desktop.start_tick),
        "desktop_day": weekday(desktop.start_tick),
        "mobile_number_of_ads": len(mobile.landing_domains),
        "mobile_unique_number_of_ads": len(set(mobile.landing_domains)),
        "mobile_number_of_keywords": len(mk),
        "mobile_unique_number_of_keywords": len(set(mk)),
        "desktop_number_of_ads": len(desktop.landing_domains),
        "desktop_unique_number_of_ads": len(set(desktop.landing_domains)),
        "desktop_number_of_keywords": len(dk),
        "desktop_unique_number_of_keywords": len(set(dk)),
    }
    vectors = {
        "mobile_keywords": Counter(mk),
        "desktop_keywords": Counter(dk),
        "mobile_landing_pages": Counter(mobile.landing_domains),
        "desktop_landing_pages": Counter(desktop.landing_domains),
    }
    if include_persona_keywords:
        vectors["persona_keywords"] = Counter(_keywords(persona_pages, db, queue))
    fv = FeatureVector(scalars, vectors)
    fv.check()
    return fv


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    setup_code: str
    meta: list = field(default_factory=list)  # per-sample provenance dicts
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0] or self.X.shape[1] != len(self.feature_names):
            raise SchemaMismatch("dataset arrays disagree with the feature list")

    @property
    def n_samples(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    def groups(self) -> list[str] | None:
        """Session-stage key per sample; desktops of one stage share it."""
        if len(self.meta) != self.n_samples:
            return None
        return [f"{m['run_id']}/{m['session_id']}/{m['stage']}" for m in self.meta]

    def columns(self, names) -> np.ndarray:
        idx = {n: i for i, n in enumerate(self.feature_names)}
        out = np.zeros((self.n_samples, len(names)))
        for j, n in enumerate(names):
            if n in idx:
                out[:, j] = self.X[:, idx[n]]
        return out

    def subset(self, columns) -> "LabeledDataset":
        columns = list(columns)
        return LabeledDataset(self.columns(columns), self.y.copy(), columns, self.setup_code,
                              list(self.meta), dict(self.info))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label"] + list(self.feature_names))
        for label, row in zip(self.y, self.X):
            w.writerow([int(label)] + [_fmt(v) for v in row])
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    def manifest(self) -> dict:
        return {
            "setup_code": self.setup_code,
            "n_samples": self.n_samples,
            "n_features": self.n_features,
            "class_counts": {str(c): int((self.y == c).sum()) for c in (0, 1)},
            "vocabulary": self.info.get("vocabulary", "union over the setup's runs"),
            **{k: v for k, v in self.info.items() if k != "vocabulary"},
            "sha256": self.digest(),
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        path.with_suffix(".manifest.json").write_text(
            json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        meta_path = path.with_suffix(".meta.jsonl")
        meta_path.write_text("".join(json.dumps(m, sort_keys=True) + "\n" for m in self.meta),
                             encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        path = Path(path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        names = rows[0][1:]
        y = [int(r[0]) for r in rows[1:]]
        X = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float).reshape(len(y), len(names))
        mpath = path.with_suffix(".manifest.json")
        info = json.loads(mpath.read_text(encoding="utf-8")) if mpath.exists() else {}
        meta_path = path.with_suffix(".meta.jsonl")
        meta = ([json.loads(ln) for ln in meta_path.read_text(encoding="utf-8").splitlines() if ln]
                if meta_path.exists() else [])
        setup = info.pop("setup_code", "")
        for k in ("n_samples", "n_features", "class_counts", "sha256"):
            info.pop(k, None)
        return cls(X, np.array(y), names, setup, meta, info)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def stage_data(record, session, role: str, stage: str) -> StageData:
    crawl = session.crawl(stage, role, "test")
    if crawl is None:
        raise IncompleteStage(f"{record.run_id} s{session.session_id}: no {stage} test crawl for {role}")
    return StageData(crawl.start_tick, [o.landing_domain for o in crawl.observations])


def run_samples(record, persona_pages, db: CategoryDB, include_persona_keywords: bool = True,
                queue: ReviewQueue | None = None):
    """Yield (FeatureVector, label, provenance) for every desktop stage of a run."""
    devices = {d["role"]: d for d in record.devices}
    mobile_ip = devices["mobile"]["ip_label"]
    desktops = [d for d in record.devices if d["kind"] == "desktop"]
    for session in record.sessions:
        mobile = stage_data(record, session, "mobile", "M")
        for stage in ("B", "A"):
            for d in desktops:
                crawl = next((c for c in session.crawls if c.device_id == d["device_id"]
                              and c.stage == stage and c.crawl_type == "test"), None)
                if crawl is None:
                    raise IncompleteStage(f"{record.run_id} s{session.session_id}: {d['device_id']} missing {stage}")
                desk = StageData(crawl.start_tick, [o.landing_domain for o in crawl.observations])
                fv = build_sample(mobile, desk, persona_pages, db, stage=stage,
                                  run_index=record.run_index, session_id=session.session_id,
                                  include_persona_keywords=include_persona_keywords, queue=queue)
                label = 1 if d["role"] == "paired_pc" else 0
                meta = {"run_id": record.run_id, "persona_id": record.persona_id,
                        "session_id": session.session_id, "stage": stage,
                        "device_id": d["device_id"], "ip_label": d["ip_label"],
                        "shares_mobile_ip": d["ip_label"] == mobile_ip}
                yield fv, label, meta


def vocabulary(vectors) -> list[str]:
    names = set()
    for fv in vectors:
        names.update(fv.names())
    return sorted(names, key=lambda n: (VECTOR_BLOCKS.index(n.split("=", 1)[0]), n))


def to_dataset(samples, setup_code: str, vocab: list[str] | None = None, info: dict | None = None) -> LabeledDataset:
    samples = list(samples)
    vecs = [s[0] for s in samples]
    vocab = vocabulary(vecs) if vocab is None else list(vocab)
    names = list(SCALAR_FEATURES) + vocab
    col = {n: i for i, n in enumerate(names)}
    X = np.zeros((len(samples), len(names)))
    for i, fv in enumerate(vecs):
        for j, n in enumerate(SCALAR_FEATURES):
            X[i, j] = fv.scalars[n]
        for block, counter in fv.vectors.items():
            for term, v in counter.items():
                j = col.get(f"{block}={term}")
                if j is not None:
                    X[i, j] = v
    y = [s[1] for s in samples]
    meta = [s[2] for s in samples]
    return LabeledDataset(X, np.array(y, dtype=int), names, setup_code, meta, dict(info or {}))


def assemble(records, setup_code: str, personas: dict, db: CategoryDB,
             include_persona_keywords: bool = True, vocab_records=None,
             queue: ReviewQueue | None = None) -> LabeledDataset:
    """Labeled dataset from run records.

    ``vocab_records`` are the runs whose union vocabulary defines the vector
    columns (the whole setup by default); samples come from ``records`` only.
    """
    def samples_of(recs):
        out = []
        for rec in recs:
            out.extend(run_samples(rec, personas[rec.persona_id].persona_pages, db,
                                   include_persona_keywords, queue))
        return out

    samples = samples_of(records)
    for fv, label, meta in samples:
        if label != int(meta["shares_mobile_ip"]):
            raise AssertionError(f"label disagrees with IP topology for {meta}")
    if vocab_records is None:
        vocab = vocabulary(s[0] for s in samples)
    else:
        vocab = vocabulary(s[0] for s in samples_of(vocab_records))
    info = {"vocabulary": "union over the setup's runs",
            "persona_keywords": include_persona_keywords,
            "runs": sorted({r.run_id for r in records})}
    return to_dataset(samples, setup_code, vocab, info)


def combine(datasets, setup_code: str | None = None, include_persona_keywords: bool | None = None) -> LabeledDataset:
    """Stack datasets over the union of their columns, zero-filling gaps."""
    datasets = list(datasets)
    if not datasets:
        raise SchemaMismatch("nothing to combine")
    for d in datasets:
        if list(d.feature_names[:len(SCALAR_FEATURES)]) != list(SCALAR_FEATURES):
            raise SchemaMismatch(f"dataset {d.setup_code!r} has a different scalar block")
    vocab = sorted({n for d in datasets for n in d.feature_names[len(SCALAR_FEATURES):]},
                   key=lambda n: (VECTOR_BLOCKS.index(n.split("=", 1)[0]), n))
    if include_persona_keywords is False:
        vocab = [n for n in vocab if not n.startswith("persona_keywords=")]
    names = list(SCALAR_FEATURES) + vocab
    X = np.vstack([d.columns(names) for d in datasets])
    y = np.concatenate([d.y for d in datasets])
    meta = [m for d in datasets for m in d.meta]
    info = {"vocabulary": "union of the combined datasets",
            "combined_datasets": len(datasets),
            "persona_keywords": any(n.startswith("persona_keywords=") for n in vocab)}
    return LabeledDataset(X, y, names, setup_code or datasets[0].setup_code, meta, info)

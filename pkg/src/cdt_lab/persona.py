"""Behavioral personas: interest clustering, taxonomy keyword expansion,
search-query construction and persona-page collection from sponsored results.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from .domains import registrable_domain

QUERY_PATTERNS = ("buy {k}", "sell {k}", "{k} offers")
MIN_PAGES = 5
MAX_PAGES = 10
# tokens too common to carry topic content when matching taxonomy paths
STOPWORDS = frozenset({"and", "the", "of", "for", "in", "on", "online", "with", "to"})

WEATHER_CONTROL_PAGES = ("accuweather.com", "wunderground.com", "weather.com",
                         "weather-forecast.com", "metcheck.com")
BOOSTED_CONTROL_PAGES = ("accuweather.com", "wunderground.com", "weather.com",
                         "usatoday.com", "huffingtonpost.com")


class EmptyKeywordSet(ValueError):
    pass


class PersonaFormationFailure(RuntimeError):
    pass


class ExperimentInvalid(ValueError):
    pass


def _normalize(label: str) -> str:
    return " ".join(label.split())


def _tokens(label: str) -> frozenset[str]:
    return frozenset(re.findall(r"[a-z0-9]+", label.lower()))


@dataclass(frozen=True)
class InterestTopic:
    label: str
    source: str = "real-user-list"  # or "persona-catalog"

    def __post_init__(self):
        norm = _normalize(self.label)
        if not norm:
            raise ValueError("topic label is empty")
        object.__setattr__(self, "label", norm)


@dataclass(frozen=True)
class InterestCluster:
    canonical_label: str
    members: tuple[InterestTopic, ...]

    def tokens(self) -> frozenset[str]:
        out: set[str] = set()
        for m in self.members:
            out |= _tokens(m.label)
        return frozenset(out)


@dataclass(frozen=True)
class Persona:
    id: int
    category_label: str
    keywords: tuple[str, ...]
    persona_pages: tuple[str, ...]

    def __post_init__(self):
        if not self.keywords:
            raise ValueError("persona keywords are empty")
        if len(set(self.persona_pages)) != len(self.persona_pages):
            raise ValueError("persona pages must be unique")
        if not MIN_PAGES <= len(self.persona_pages) <= MAX_PAGES:
            raise ValueError(f"persona needs {MIN_PAGES}-{MAX_PAGES} pages, got {len(self.persona_pages)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["keywords"] = list(self.keywords)
        d["persona_pages"] = list(self.persona_pages)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Persona":
        return cls(int(d["id"]), d["category_label"], tuple(d["keywords"]), tuple(d["persona_pages"]))


@dataclass(frozen=True)
class ControlPageSet:
    pages: tuple[str, ...]
    neutrality_attested: bool = True

    def __post_init__(self):
        if not self.pages:
            raise ValueError("control page set is empty")


class SearchSource(Protocol):
    def query(self, text: str) -> list[tuple[str, bool]]:
        """Ordered (domain, is_sponsored) results for a query."""


@dataclass
class FixtureSearchSource:
    """Search results replayed from line-delimited ``{query, results}`` records."""

    records: dict[str, list[tuple[str, bool]]] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "FixtureSearchSource":
        records = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            records[rec["query"]] = [(r["domain"], bool(r["sponsored"])) for r in rec["results"]]
        return cls(records)

    def query(self, text: str) -> list[tuple[str, bool]]:
        return list(self.records.get(text, []))


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def cluster_interests(topics: list[InterestTopic], threshold: float) -> list[InterestCluster]:
    """Single-link clustering of topics on token-set Jaccard similarity.

    Two topics are linked when their similarity is at least ``threshold``;
    clusters are the connected components, ordered by first member.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    unique: list[InterestTopic] = []
    seen = set()
    for t in topics:
        if t.label not in seen:
            seen.add(t.label)
            unique.append(t)
    parent = list(range(len(unique)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    toks = [_tokens(t.label) for t in unique]
    for i in range(len(unique)):
        for j in range(i + 1, len(unique)):
            if jaccard(toks[i], toks[j]) >= threshold:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[InterestTopic]] = {}
    for i, t in enumerate(unique):
        groups.setdefault(find(i), []).append(t)
    clusters = []
    for root in sorted(groups):
        members = tuple(groups[root])
        canonical = min(members, key=lambda m: (-len(m.label), m.label)).label
        clusters.append(InterestCluster(canonical, members))
    return clusters


def load_taxonomy(path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]


def expand_keywords(cluster: InterestCluster, taxonomy: list[str]) -> tuple[str, ...]:
    """Leaf terms of taxonomy paths sharing a content token with the cluster."""
    wanted = {t for t in cluster.tokens() if t not in STOPWORDS and len(t) > 2}
    out: list[str] = []
    for path in taxonomy:
        if wanted & _tokens(path):
            leaf = path.split(" > ")[-1].strip()
            if leaf and leaf not in out:
                out.append(leaf)
    if not out:
        raise EmptyKeywordSet(f"no taxonomy entry matches {cluster.canonical_label!r}")
    return tuple(out)


def build_queries(keywords: Iterable[str]) -> list[str]:
    return [pat.format(k=k) for k in keywords for pat in QUERY_PATTERNS]


def generate_persona(id: int, category_label: str, queries: list[str], source: SearchSource,
                     keywords: Iterable[str] | None = None,
                     min_pages: int = MIN_PAGES, max_pages: int = MAX_PAGES) -> Persona:
    if not queries:
        raise ValueError("no queries")
    pages: list[str] = []
    for q in queries:
        for domain, sponsored in source.query(q):
            if not sponsored:
                continue
            d = registrable_domain(domain)
            if d and d not in pages:
                pages.append(d)
                if len(pages) >= max_pages:
                    break
        if len(pages) >= max_pages:
            break
    if len(pages) < min_pages:
        raise PersonaFormationFailure(
            f"persona {id} ({category_label}): {len(pages)} sponsored domains, need {min_pages}")
    kws = tuple(keywords) if keywords is not None else tuple(queries)
    return Persona(id, category_label, kws, tuple(pages))


def validate_experiment(personas: Iterable[Persona], control: ControlPageSet) -> None:
    ctrl = {registrable_domain(p) for p in control.pages}
    for persona in personas:
        leaked = ctrl.intersection(persona.persona_pages)
        if leaked:
            raise ExperimentInvalid(f"persona {persona.id} shares control pages: {sorted(leaked)}")


def build_catalog_personas(catalog: list[dict], topics: list[InterestTopic], taxonomy: list[str],
                           source: SearchSource, threshold: float = 0.34):
    """Run the full pipeline for catalog entries ``{id, category_label, topic}``.

    Returns (personas, failures); a failed entry forms no persona.
    """
    clusters = cluster_interests(topics, threshold)
    by_label = {m.label: c for c in clusters for m in c.members}
    personas, failures = [], []
    for entry in catalog:
        cluster = by_label.get(_normalize(entry["topic"]))
        if cluster is None:
            failures.append((entry["id"], "topic not in interest list"))
            continue
        try:
            keywords = expand_keywords(cluster, taxonomy)
            persona = generate_persona(entry["id"], entry["category_label"], build_queries(keywords),
                                       source, keywords=keywords)
        except (EmptyKeywordSet, PersonaFormationFailure) as exc:
            failures.append((entry["id"], str(exc)))
            continue
        personas.append(persona)
    return personas, failures


def save_personas(personas: Iterable[Persona], path) -> None:
    data = [p.to_dict() for p in personas]
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def load_personas(path) -> list[Persona]:
    return [Persona.from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]

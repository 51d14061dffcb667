"""Loaders for the shipped simulated-world fixtures."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .categorizer import CategoryDB
from .ecosim import SimConfig
from .filterlist import FilterSet
from .persona import (FixtureSearchSource, InterestTopic, Persona, build_catalog_personas,
                      load_taxonomy)

DATA_FILES = {
    "taxonomy": "taxonomy.txt",
    "topics": "interest_topics.txt",
    "catalog": "persona_catalog.json",
    "search": "search_fixture.jsonl",
    "filters": "easylist_snapshot.txt",
    "categories": "category_db.tsv",
    "world": "sim_world.json",
}


def data_dir() -> Path:
    return Path(str(resources.files("cdt_lab") / "data"))


def data_path(name: str, root: Path | None = None) -> Path:
    return (root or data_dir()) / DATA_FILES.get(name, name)


def load_topics(path) -> list[InterestTopic]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [InterestTopic(ln) for ln in lines if ln.strip() and not ln.startswith("#")]


def build_personas(root: Path | None = None) -> tuple[list[Persona], list]:
    catalog = json.loads(data_path("catalog", root).read_text(encoding="utf-8"))
    return build_catalog_personas(
        catalog,
        load_topics(data_path("topics", root)),
        load_taxonomy(data_path("taxonomy", root)),
        FixtureSearchSource.from_file(data_path("search", root)),
    )


@lru_cache(maxsize=4)
def _shipped_personas() -> tuple[Persona, ...]:
    personas, failures = build_personas()
    if failures:
        raise RuntimeError(f"shipped persona catalog failed to build: {failures}")
    return tuple(personas)


def shipped_personas() -> list[Persona]:
    return list(_shipped_personas())


def load_filters(root: Path | None = None) -> FilterSet:
    return FilterSet.from_file(data_path("filters", root))


def load_category_db(root: Path | None = None) -> CategoryDB:
    return CategoryDB.from_file(data_path("categories", root))


def load_sim_config(root: Path | None = None, **overrides) -> SimConfig:
    cfg = SimConfig.from_file(data_path("world", root))
    return cfg.with_overrides(**overrides) if overrides else cfg

"""File-backed domain categories with a manual-review queue for misses."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

UNCATEGORIZED = ("Uncategorized",)
MAX_LABELS = 4


class CategoryDBError(ValueError):
    pass


@dataclass(frozen=True)
class CategoryDB:
    entries: dict  # registrable domain -> tuple of 1..4 labels

    def __post_init__(self):
        for domain, labels in self.entries.items():
            if not 1 <= len(labels) <= MAX_LABELS:
                raise CategoryDBError(f"{domain}: {len(labels)} labels (need 1-{MAX_LABELS})")

    @property
    def universe(self) -> frozenset[str]:
        return frozenset(label for labels in self.entries.values() for label in labels)

    @classmethod
    def from_lines(cls, lines) -> "CategoryDB":
        entries = {}
        for n, line in enumerate(lines, 1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                domain, cats = line.rstrip("\n").split("\t")
            except ValueError:
                raise CategoryDBError(f"line {n}: expected 'domain<TAB>cat1;cat2'") from None
            labels = tuple(c.strip() for c in cats.split(";") if c.strip())
            entries[domain.strip().lower()] = labels
        return cls(entries)

    @classmethod
    def from_file(cls, path) -> "CategoryDB":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"category database not found: {path}")
        return cls.from_lines(path.read_text(encoding="utf-8").splitlines())

    def to_lines(self) -> list[str]:
        return [f"{d}\t{';'.join(labels)}" for d, labels in sorted(self.entries.items())]


@dataclass
class ReviewQueue:
    """Domains awaiting manual categorization; each domain is queued once."""

    path: Path | None = None
    domains: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()
        self._seen = set(self.domains)
        if self.path is not None and Path(self.path).exists():
            for line in Path(self.path).read_text(encoding="utf-8").splitlines():
                if line.strip() and line.strip() not in self._seen:
                    self._seen.add(line.strip())
                    self.domains.append(line.strip())

    def add(self, domain: str) -> bool:
        with self._lock:
            if domain in self._seen:
                return False
            self._seen.add(domain)
            self.domains.append(domain)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(domain + "\n")
            return True


def categorize(db: CategoryDB, domain: str, queue: ReviewQueue | None = None) -> tuple[str, ...]:
    labels = db.entries.get(domain.lower())
    if labels is not None:
        return labels
    if queue is not None:
        queue.add(domain.lower())
    return UNCATEGORIZED


def coverage(db: CategoryDB, observations) -> tuple[float, int]:
    """Fraction of observations with a known category, and labels actually assigned."""
    if not observations:
        return 1.0, 0
    hit = 0
    used: set[str] = set()
    for obs in observations:
        labels = db.entries.get(obs.landing_domain)
        if labels is not None:
            hit += 1
            used.update(labels)
    return hit / len(observations), len(used)

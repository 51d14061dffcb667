"""Report tables: AUC summary, ad/keyword CDFs, tracker coverage and
per-category permutation tests."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .categorizer import UNCATEGORIZED, CategoryDB, categorize
from .detect.permutation import permutation_test
from .ecosim import AdEcosystem, SimConfig


CDF_HEADER = ["role", "metric", "value", "cdf"]
TRACKER_HEADER = ["organization", "page_coverage", "cdt"]


def csv_table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.4f}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def auc_table(reports: dict) -> str:
    rows = []
    for name in sorted(reports):
        r = reports[name]
        pc = r.per_class
        rows.append([name, r.n_samples, r.n_features, r.selected_model, r.auc,
                     pc[1]["precision"], pc[1]["recall"], pc[1]["f1"],
                     pc[0]["precision"], pc[0]["recall"], pc[0]["f1"]])
    return csv_table(["dataset", "samples", "features", "selected_model", "auc",
                 "precision_1", "recall_1", "f1_1", "precision_0", "recall_0", "f1_0"], rows)


def session_counts(records, db: CategoryDB | None = None) -> dict:
    """role -> {"ads": [...], "keywords": [...], "visits": [...]} with one entry per device-session."""
    out: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for rec in records:
        for s in rec.sessions:
            per_device: dict[tuple, list] = defaultdict(lambda: [0, 0, 0])
            for c in s.crawls:
                if c.crawl_type != "test":
                    continue
                acc = per_device[(c.role, c.device_id)]
                acc[0] += len(c.observations)
                acc[2] += len(c.pages)
                if db is not None:
                    acc[1] += sum(len(categorize(db, o.landing_domain)) for o in c.observations)
            for (role, _), (ads, kws, visits) in sorted(per_device.items()):
                out[role]["ads"].append(ads)
                out[role]["keywords"].append(kws)
                out[role]["visits"].append(visits)
    return out


def ecdf(values) -> list[tuple[float, float]]:
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        return []
    uniq, idx = np.unique(values, return_index=True)
    counts = np.append(idx[1:], values.size)
    return [(float(u), float(c) / values.size) for u, c in zip(uniq, counts)]


def ads_cdf(records, db: CategoryDB | None = None) -> list[tuple]:
    """Rows (role, metric, value, cumulative fraction) of the per-session CDFs."""
    rows = []
    counts = session_counts(records, db)
    for role in sorted(counts):
        for metric in ("ads", "keywords"):
            if metric == "keywords" and db is None:
                continue
            rows.extend((role, metric, v, f) for v, f in ecdf(counts[role][metric]))
    return rows


def ad_count_summary(records) -> dict:
    counts = session_counts(records)
    out = {}
    if "mobile" in counts:
        ads = np.asarray(counts["mobile"]["ads"])
        out["mobile_sessions"] = int(ads.size)
        out["mobile_fraction_below_5"] = float(np.mean(ads < 5)) if ads.size else float("nan")
    desk_ads = sum(sum(counts[r]["ads"]) for r in counts if r != "mobile")
    desk_visits = sum(sum(counts[r]["visits"]) for r in counts if r != "mobile")
    if desk_visits:
        out["desktop_ads_per_visit"] = desk_ads / desk_visits
    return out


@dataclass
class TrackerList:
    """Organization -> tracker domains, with one cross-device flag per organization."""
    organizations: dict[str, set[str]]
    cdt_flag: dict[str, bool]

    def __post_init__(self):
        self.organizations = {org: {d.lower().strip(".") for d in doms}
                              for org, doms in self.organizations.items()}
        self.cdt_flag = {org: bool(self.cdt_flag.get(org, False)) for org in self.organizations}

    @classmethod
    def from_sim(cls, sim: SimConfig) -> "TrackerList":
        orgs: dict[str, set[str]] = defaultdict(set)
        flags: dict[str, bool] = defaultdict(bool)
        for t in sim.trackers:
            orgs[t.organization].update(t.domains)
            flags[t.organization] |= t.is_cdt
        return cls(dict(orgs), dict(flags))

    @classmethod
    def from_file(cls, path) -> "TrackerList":
        """JSON object: organization -> {"domains": [...], "cdt": bool}."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls({o: set(v["domains"]) for o, v in raw.items()},
                   {o: bool(v.get("cdt", False)) for o, v in raw.items()})

    def organization_of(self, domain: str) -> str | None:
        domain = domain.lower()
        for org in sorted(self.organizations):
            if any(domain == d or domain.endswith("." + d) for d in self.organizations[org]):
                return org
        return None


def embedded_third_parties(sim: SimConfig, persona_pages) -> dict[str, set[str]]:
    """Page -> tracker domains the simulator embeds on that persona page."""
    eco = AdEcosystem(sim)
    specs = {t.tracker_id: t for t in sim.trackers}
    return {page: {d for tid in eco.embedded_trackers(page, control=False) for d in specs[tid].domains}
            for page in sorted(set(persona_pages))}


def tracker_coverage(trackers: TrackerList, page_map: dict) -> tuple[list[tuple], float]:
    """Per-organization share of pages embedding any of its domains (union of
    pages), and the fraction of detected tracker domains whose organization
    is flagged cross-device."""
    pages = sorted(page_map)
    org_pages: dict[str, set] = {org: set() for org in trackers.organizations}
    detected: set[str] = set()
    for page in pages:
        for dom in page_map[page]:
            org = trackers.organization_of(dom)
            if org is None:
                continue
            org_pages[org].add(page)
            detected.add(dom.lower())
    n = max(1, len(pages))
    rows = sorted(((org, len(p) / n, trackers.cdt_flag[org]) for org, p in org_pages.items()),
                  key=lambda r: (-r[1], r[0]))
    flagged = sum(trackers.cdt_flag[trackers.organization_of(d)] for d in detected)
    return rows, (flagged / len(detected) if detected else 0.0)


def tracker_page_shares(sim: SimConfig, persona_pages) -> dict[str, float]:
    page_map = embedded_third_parties(sim, persona_pages)
    n = max(1, len(page_map))
    return {t.tracker_id: sum(t.domains[0] in doms for doms in page_map.values()) / n
            for t in sim.trackers}


def persona_categories(persona_pages, db: CategoryDB, min_share: float = 0.2) -> list[str]:
    """Labels carried by at least ``min_share`` of the persona pages (unknown pages ignored)."""
    pages = sorted(set(persona_pages))
    hits = Counter(label for page in pages for label in set(categorize(db, page)) if label not in UNCATEGORIZED)
    return sorted(label for label, n in hits.items() if n >= min_share * max(1, len(pages)))


def category_permutation(records, db: CategoryDB, categories, alpha: float = 0.05, seed: int = 0) -> list[dict]:
    """Per category: mobile vs each desktop, comparing per-session ad counts in that category."""
    per_role: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for rec in records:
        for s in rec.sessions:
            by_role = defaultdict(Counter)
            for c in s.crawls:
                if c.crawl_type == "test":
                    for o in c.observations:
                        for label in categorize(db, o.landing_domain):
                            by_role[c.role][label] += 1
            for role in ("mobile", "paired_pc", "baseline_pc"):
                for cat in categories:
                    per_role[role][cat].append(by_role[role][cat])
    out = []
    for cat in categories:
        for role in ("paired_pc", "baseline_pc"):
            a, b = per_role["mobile"][cat], per_role[role][cat]
            if len(a) < 2 or len(b) < 2:
                continue
            res = permutation_test(a, b, alpha=alpha, seed=seed)
            out.append({"category": cat, "desktop": role, **res.to_dict()})
    return out

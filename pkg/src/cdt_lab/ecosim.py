"""Deterministic simulated ad ecosystem with known device-pairing ground truth.

Trackers embedded on pages observe visits, build per-cookie interest
histograms from training visits, and probabilistically pair cookies seen
under a shared IP label. Control-page requests are answered with a rendered
DOM whose ad slots are filled by cross-device, retargeted, behavioral or
contextual-noise ads. Every placement is logged so extraction can be checked
against what was actually served.
"""
from __future__ import annotations

import json
import math
import zlib
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, replace
from html import escape
from pathlib import Path
from urllib.parse import quote

import numpy as np

from .adex import DomSnapshot, parse_html

SLOT_TYPES = ("cross_device", "retarget", "behavioral", "noise")


@dataclass(frozen=True)
class TrackerSpec:
    tracker_id: str
    organization: str
    domains: tuple[str, ...]
    is_cdt: bool = False
    coverage: float = 0.0
    serves_ads: bool = True
    probabilistic: bool = False

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"{self.tracker_id}: coverage must be in [0, 1]")
        if not self.domains:
            raise ValueError(f"{self.tracker_id}: no domains")

    @property
    def click_host(self) -> str:
        return self.domains[0]


@dataclass(frozen=True)
class Campaign:
    campaign_id: str
    category: str
    landing_domains: tuple[str, ...]
    active: bool = True

    def __post_init__(self):
        if not self.landing_domains:
            raise ValueError(f"{self.campaign_id}: no landing domains")


@dataclass(frozen=True)
class SimConfig:
    trackers: tuple[TrackerSpec, ...] = ()
    campaigns: tuple[Campaign, ...] = ()
    # control page -> embedded tracker ids (pages not listed use coverage draws)
    control_embeds: dict = field(default_factory=dict)
    cdt_strength: float = 0.9
    cross_device_share: float = 0.40
    retarget_prob: float = 0.10
    behavioral_prob: float = 0.20
    noise_prob: float = 0.30
    cross_device_retarget_frac: float = 0.5
    pairing_ip_weight: float = 0.5
    pairing_behavior_weight: float = 1.0
    mobile_ads_per_page: int = 5
    mobile_fill_prob: float = 0.08
    desktop_ads_per_page: tuple[int, int] = (2, 4)
    redirect_rate: float = 0.10
    nested_rate: float = 0.15
    boosted: bool = False
    seed: int = 0

    def __post_init__(self):
        probs = (self.cdt_strength, self.cross_device_share, self.retarget_prob,
                 self.behavioral_prob, self.noise_prob, self.mobile_fill_prob,
                 self.redirect_rate, self.nested_rate, self.cross_device_retarget_frac)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if not math.isclose(sum(self.slot_probs), 1.0, abs_tol=1e-9):
            raise ValueError("slot-type probabilities must sum to 1")
        lo, hi = self.desktop_ads_per_page
        if not 0 <= lo <= hi:
            raise ValueError("desktop_ads_per_page must be an ordered range")
        if not 0 <= self.mobile_ads_per_page <= 5:
            raise ValueError("mobile_ads_per_page must be in [0, 5]")

    @property
    def slot_probs(self) -> tuple[float, float, float, float]:
        return (self.cross_device_share, self.retarget_prob, self.behavioral_prob, self.noise_prob)

    def with_overrides(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["desktop_ads_per_page"] = list(self.desktop_ads_per_page)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        d["trackers"] = tuple(TrackerSpec(**{**t, "domains": tuple(t["domains"])}) for t in d.get("trackers", ()))
        d["campaigns"] = tuple(Campaign(**{**c, "landing_domains": tuple(c["landing_domains"])})
                               for c in d.get("campaigns", ()))
        d["control_embeds"] = {k: tuple(v) for k, v in d.get("control_embeds", {}).items()}
        if "desktop_ads_per_page" in d:
            d["desktop_ads_per_page"] = tuple(d["desktop_ads_per_page"])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "SimConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def stable_uniform(*parts) -> float:
    """Seed-free uniform in [0, 1) derived from the given labels."""
    key = "|".join(str(p) for p in parts).encode()
    return zlib.crc32(key) / 2**32


def stable_int(*parts) -> int:
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def histogram_cosine(a: Counter, b: Counter) -> float:
    if not a or not b:
        return 0.0
    dot = sum(v * b.get(k, 0) for k, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    return dot / (na * nb)


@dataclass
class TrackerState:
    spec: TrackerSpec
    histograms: dict = field(default_factory=lambda: defaultdict(Counter))
    visited: dict = field(default_factory=lambda: defaultdict(Counter))
    # ip label -> cookie id -> set of session keys with activity
    ip_log: dict = field(default_factory=lambda: defaultdict(lambda: defaultdict(set)))
    device_graph: set = field(default_factory=set)
    evaluated: set = field(default_factory=set)

    def partners(self, cookie: str) -> list[str]:
        out = []
        for pair in self.device_graph:
            if cookie in pair:
                out.extend(c for c in pair if c != cookie)
        return sorted(out)


def observe_visit(state: TrackerState, cookie_id: str, ip_label: str, page: str,
                  page_category: str | None, is_train: bool, session_key) -> TrackerState:
    state.ip_log[ip_label][cookie_id].add(session_key)
    if is_train and page_category:
        state.histograms[cookie_id][page_category] += 1
        state.visited[cookie_id][page] += 1
    return state


def shared_ip_evidence(sessions_a: set, sessions_b: set) -> int:
    """Sessions of ``a`` in which ``b`` was active in the same or an adjacent session.

    Session keys are ordinals; adjacency lets a cookie that just appeared be
    linked to one seen under the same IP in the previous session.
    """
    return sum(1 for t in sessions_a if t in sessions_b or t - 1 in sessions_b or t + 1 in sessions_b)


def update_device_graph(state: TrackerState, config: SimConfig, cookie_id: str, session_key,
                        rng: np.random.Generator) -> set:
    """Evaluate, once per session, pairing of ``cookie_id`` with co-located cookies."""
    if not state.spec.is_cdt:
        return state.device_graph
    for ip, cookies in sorted(state.ip_log.items()):
        mine = cookies.get(cookie_id)
        if not mine:
            continue
        for other in sorted(cookies):
            if other == cookie_id:
                continue
            pair = frozenset((cookie_id, other))
            if pair in state.device_graph or (session_key, pair) in state.evaluated:
                continue
            state.evaluated.add((session_key, pair))
            shared = shared_ip_evidence(mine, cookies[other])
            if shared == 0:
                continue
            cos = histogram_cosine(state.histograms.get(cookie_id, Counter()),
                                   state.histograms.get(other, Counter()))
            p = config.cdt_strength * sigmoid(config.pairing_ip_weight * shared
                                              + config.pairing_behavior_weight * cos)
            if rng.random() < p:
                state.device_graph.add(pair)
    return state.device_graph


@dataclass
class Placement:
    page_url: str
    device_id: str
    tick: int
    landing_urls: list
    slot_types: list
    trackers: list


@dataclass
class Request:
    device_id: str
    kind: str  # mobile | desktop
    ip_label: str
    cookie_jar: dict
    page: str


class AdEcosystem:
    """One simulated ecosystem instance; state lives for a single run."""

    def __init__(self, config: SimConfig, run_seed: int = 0):
        self.config = config
        self.run_seed = run_seed
        self.trackers = {t.tracker_id: TrackerState(t) for t in config.trackers}
        self.campaigns = [c for c in config.campaigns if c.active]
        self.by_category: dict[str, list[Campaign]] = defaultdict(list)
        self.domain_category: dict[str, str] = {}
        self.domain_campaign: dict[str, Campaign] = {}
        for c in self.campaigns:
            self.by_category[c.category].append(c)
            for d in c.landing_domains:
                self.domain_category.setdefault(d, c.category)
                self.domain_campaign.setdefault(d, c)
        ss = np.random.SeedSequence([config.seed, run_seed])
        self.rng = np.random.default_rng(ss.spawn(1)[0])
        self._tracker_rngs = {
            tid: np.random.default_rng(np.random.SeedSequence([config.seed, run_seed, stable_int(tid)]))
            for tid in sorted(self.trackers)
        }
        self.session_key = 0
        self._session_ordinal = 0
        self.session_labels: dict[int, object] = {}
        self.placements: list[Placement] = []
        self.requests: list[tuple] = []  # (tick, device_id, ip_label, tracker_id, page)
        self.cookie_owner: dict[str, str] = {}
        self._cookie_counter = Counter()

    def begin_session(self, key=None) -> int:
        """Start the next session; trackers see sessions as consecutive ordinals."""
        self._session_ordinal += 1
        self.session_key = self._session_ordinal
        self.session_labels[self.session_key] = key
        return self.session_key

    # -- page composition -------------------------------------------------
    def embedded_trackers(self, page: str, control: bool) -> list[str]:
        out = []
        listed = self.config.control_embeds.get(page) if control else None
        for tid, st in sorted(self.trackers.items()):
            if self.config.boosted and st.spec.is_cdt:
                out.append(tid)
            elif listed is not None:
                if tid in listed:
                    out.append(tid)
            elif stable_uniform(page, tid) < st.spec.coverage:
                out.append(tid)
        return out

    def _cookie(self, device_id: str, jar: dict, tid: str) -> str:
        cookie = jar.get(tid)
        if cookie is None:
            self._cookie_counter[(device_id, tid)] += 1
            cookie = f"{device_id}:{tid}:{self._cookie_counter[(device_id, tid)]}"
            jar[tid] = cookie
            self.cookie_owner[cookie] = device_id
        return cookie

    def visit(self, req: Request, tick: int, is_train: bool, control: bool = False) -> list[str]:
        """A page visit seen by every tracker embedded on the page."""
        category = self.domain_category.get(req.page) if is_train else None
        seen = []
        for tid in self.embedded_trackers(req.page, control):
            cookie = self._cookie(req.device_id, req.cookie_jar, tid)
            observe_visit(self.trackers[tid], cookie, req.ip_label, req.page, category,
                          is_train, self.session_key)
            self.requests.append((tick, req.device_id, req.ip_label, tid, req.page))
            seen.append(tid)
        return seen

    # -- ad selection -----------------------------------------------------
    def _noise(self) -> tuple[str, Campaign]:
        c = self.campaigns[self.rng.integers(len(self.campaigns))]
        return "noise", c

    def _from_histogram(self, hist: Counter) -> Campaign | None:
        cats = sorted(k for k, v in hist.items() if v > 0 and self.by_category.get(k))
        if not cats:
            return None
        w = np.array([hist[c] for c in cats], dtype=float)
        cat = cats[self.rng.choice(len(cats), p=w / w.sum())]
        pool = self.by_category[cat]
        return pool[self.rng.integers(len(pool))]

    def _from_visited(self, visited: Counter) -> Campaign | None:
        doms = sorted(d for d, v in visited.items() if v > 0 and d in self.domain_campaign)
        if not doms:
            return None
        w = np.array([visited[d] for d in doms], dtype=float)
        return self.domain_campaign[doms[self.rng.choice(len(doms), p=w / w.sum())]]

    def choose_ad(self, tid: str, cookie: str) -> tuple[str, Campaign]:
        st = self.trackers[tid]
        slot = SLOT_TYPES[self.rng.choice(4, p=np.array(self.config.slot_probs))]
        if slot == "cross_device":
            partners = [p for p in st.partners(cookie) if st.histograms.get(p)] if st.spec.is_cdt else []
            if partners:
                partner = max(partners, key=lambda p: (sum(st.histograms[p].values()), p))
                if self.rng.random() < self.config.cross_device_retarget_frac:
                    c = self._from_visited(st.visited.get(partner, Counter()))
                else:
                    c = self._from_histogram(st.histograms[partner])
                if c is not None:
                    return slot, c
            return self._noise()
        if slot == "retarget":
            c = self._from_visited(st.visited.get(cookie, Counter()))
            if c is not None:
                return slot, c
            slot = "behavioral"
        if slot == "behavioral":
            c = self._from_histogram(st.histograms.get(cookie, Counter()))
            if c is not None:
                return slot, c
        return self._noise()

    def serve_page(self, req: Request, tick: int) -> DomSnapshot:
        """Render a control page for ``req`` with its ad slots filled."""
        cfg = self.config
        embedded = self.visit(req, tick, is_train=False, control=True)
        for tid in embedded:
            if self.trackers[tid].spec.is_cdt:
                update_device_graph(self.trackers[tid], cfg, req.cookie_jar[tid],
                                    self.session_key, self._tracker_rngs[tid])
        servers = [t for t in embedded if self.trackers[t].spec.serves_ads]
        if req.kind == "mobile":
            k = int(self.rng.binomial(cfg.mobile_ads_per_page, cfg.mobile_fill_prob))
        else:
            lo, hi = cfg.desktop_ads_per_page
            k = int(self.rng.integers(lo, hi + 1))
        if not servers:
            k = 0
        slots = []
        for j in range(k):
            tid = servers[self.rng.integers(len(servers))]
            slot_type, campaign = self.choose_ad(tid, req.cookie_jar[tid])
            domain = campaign.landing_domains[self.rng.integers(len(campaign.landing_domains))]
            landing = f"https://www.{domain}/offer/{campaign.campaign_id}?slot={j}"
            encoding = "redirect" if self.rng.random() < cfg.redirect_rate else "adurl"
            nested = self.rng.random() < cfg.nested_rate
            slots.append((tid, slot_type, landing, encoding, nested))
        page_url = f"https://www.{req.page}/"
        html = render_control_page(req.page, [(self.trackers[t].spec.click_host, landing, enc, nested)
                                              for t, _, landing, enc, nested in slots],
                                   mobile=req.kind == "mobile")
        self.placements.append(Placement(page_url, req.device_id, tick,
                                         [s[2] for s in slots], [s[1] for s in slots],
                                         [s[0] for s in slots]))
        return parse_html(html, page_url, tick)

    def inferred_pairs(self) -> set[frozenset]:
        """Device-level pairs implied by the trackers' cookie graphs."""
        out = set()
        for st in self.trackers.values():
            for pair in st.device_graph:
                devices = frozenset(self.cookie_owner.get(c, c) for c in pair)
                if len(devices) == 2:
                    out.add(devices)
        return out


def click_url(click_host: str, landing_url: str, encoding: str) -> str:
    if encoding == "redirect":
        return f"https://{click_host}/r/redirect={quote(quote(landing_url, safe=''), safe='')}"
    return f"https://{click_host}/aclk?sa=L&ai=CkX2&adurl={quote(landing_url, safe='')}"


def render_control_page(page: str, slots, mobile: bool = False) -> str:
    """Static markup of a served control page.

    Besides the ad iframes, every page carries first-party navigation, a
    first-party widget frame and an empty zero-size tracking frame, so the
    extractor's filtering paths are exercised on every page.
    """
    w, h = (320, 50) if mobile else (300, 250)
    parts = [
        "<!DOCTYPE html><html><head><title>Forecast</title></head><body>",
        f'<nav><a href="/today">Today</a> <a href="/radar"><img src="/static/radar.png"></a></nav>',
        '<iframe width="0" height="0" src="about:blank"></iframe>',
        f'<iframe width="{w}" height="{h}" class="widget"><a href="https://www.{escape(page)}/maps">'
        '<img src="/static/map.png"></a></iframe>',
    ]
    for i, (host, landing, encoding, nested) in enumerate(slots):
        href = escape(click_url(host, landing, encoding), quote=True)
        ad = f'<a href="{href}" target="_blank"><img src="https://{escape(host)}/creative/{i}.jpg"></a>'
        frame = f'<iframe width="{w}" height="{h}" id="ad-{i}">{ad}</iframe>'
        if nested:
            frame = f'<iframe width="{w}" height="{h}" id="slot-{i}">{frame}</iframe>'
        parts.append(f'<div class="ad-slot">{frame}</div>')
    parts.append("<footer><p>Weather data</p></footer></body></html>")
    return "\n".join(parts)

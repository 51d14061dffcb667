"""Experimental setups, session timelines and the run driver.

A run is N sessions on a simulated clock (one tick per second). Each session
has a desktop test stage before the mobile phase (B), the mobile phase itself
(M: train on persona pages, then test on control pages), and a desktop test
stage after it (A). Both desktops visit the same control pages in the same
order during B and A.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from .adex import AdObservation, CrawlContext, PageStats, extract_ads
from .ecosim import AdEcosystem, Request
from .filterlist import FilterSet
from .persona import BOOSTED_CONTROL_PAGES, WEATHER_CONTROL_PAGES, ControlPageSet, Persona

MINUTE = 60
DAY = 86400
SETUP_CODES = ("1a", "1b", "2a", "2b", "2c", "2d", "3a", "3b", "pre1", "pre2")
COMBINED_FROM = {"1b": "1a", "2b": "2a", "2d": "2c", "3b": "3a"}


class ConfigInvalid(ValueError):
    pass


class UnknownSetup(KeyError):
    pass


class EcosystemUnavailable(RuntimeError):
    pass


class StageOverrun(RuntimeError):
    pass


@dataclass
class DeviceProfile:
    device_id: str
    kind: str  # mobile | desktop
    role: str  # mobile | paired_pc | baseline_pc
    ip_label: str
    state_mode: str = "stateful"
    trains: bool = False  # desktops that also browse persona pages (long-training setups)
    cookie_jar: dict = field(default_factory=dict)

    def jar_hash(self) -> str:
        blob = json.dumps(self.cookie_jar, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def describe(self) -> dict:
        d = asdict(self)
        d.pop("cookie_jar")
        return d


@dataclass(frozen=True)
class RunConfig:
    t_train: int = 15  # minutes
    t_test: int = 20
    t_wait: int = 10
    t_rest: int = 5
    N: int = 15
    runs: int = 4
    direction: str = "mobile->desktop"
    persona_id: int = 0
    setup_code: str = "1a"
    desktop_train: int = 0  # minutes of desktop persona browsing before the A test
    test_dwell: int = 240  # seconds per control-page visit
    train_dwell: int = 90  # seconds per persona-page visit
    start_tick: int = 0

    def __post_init__(self):
        for name in ("t_train", "t_test", "t_wait", "t_rest", "N", "runs", "test_dwell", "train_dwell"):
            if getattr(self, name) <= 0:
                raise ConfigInvalid(f"{name} must be positive")
        if self.desktop_train < 0:
            raise ConfigInvalid("desktop_train must be nonnegative")
        if self.direction != "mobile->desktop":
            raise ConfigInvalid("only the mobile->desktop direction is supported")

    @property
    def session_span(self) -> int:
        """Session length in minutes."""
        return 2 * self.t_wait + self.t_rest + self.t_train + 3 * self.t_test + self.desktop_train

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Crawl:
    crawl_type: str  # train | test
    roles: tuple[str, ...]
    start: int  # seconds from session start
    duration: int  # seconds
    pages: tuple[str, ...]
    dwell: int


@dataclass(frozen=True)
class Stage:
    name: str  # B | M | A
    crawls: tuple[Crawl, ...]

    @property
    def start(self) -> int:
        return self.crawls[0].start

    @property
    def end(self) -> int:
        return self.crawls[-1].start + self.crawls[-1].duration


@dataclass(frozen=True)
class SessionPlan:
    session_id: int
    offset: int  # seconds from run start
    stages: tuple[Stage, ...]
    span: int


def _round_robin(pages, duration: int, dwell: int) -> tuple[str, ...]:
    if not pages:
        return ()
    n = max(1, duration // dwell)
    return tuple(pages[i % len(pages)] for i in range(n))


def build_timeline(config: RunConfig, persona_pages=(), control_pages=()) -> list[SessionPlan]:
    """Per-session stage schedule; offsets in seconds relative to run start."""
    c = config
    test, train = c.t_test * MINUTE, c.t_train * MINUTE
    wait, rest = c.t_wait * MINUTE, c.t_rest * MINUTE
    dtrain = c.desktop_train * MINUTE
    control = _round_robin(tuple(control_pages), test, c.test_dwell)
    persona_train = _round_robin(tuple(persona_pages), train, c.train_dwell)
    desktop_train = _round_robin(tuple(persona_pages), dtrain, c.train_dwell) if dtrain else ()
    desktops = ("paired_pc", "baseline_pc")
    span = c.session_span * MINUTE
    plans = []
    for i in range(c.N):
        t = 0
        b = Stage("B", (Crawl("test", desktops, t, test, control, c.test_dwell),))
        t += test + wait
        m = Stage("M", (Crawl("train", ("mobile",), t, train, persona_train, c.train_dwell),
                        Crawl("test", ("mobile",), t + train, test, control, c.test_dwell)))
        t += train + test + wait
        a_crawls = []
        if dtrain:
            a_crawls.append(Crawl("train", desktops, t, dtrain, desktop_train, c.train_dwell))
            t += dtrain
        a_crawls.append(Crawl("test", desktops, t, test, control, c.test_dwell))
        a = Stage("A", tuple(a_crawls))
        plans.append(SessionPlan(i + 1, i * span, (b, m, a), span))
    return plans


@dataclass
class CrawlRecord:
    device_id: str
    role: str
    stage: str
    crawl_type: str
    start_tick: int
    pages: list
    stats: dict
    observations: list = field(default_factory=list)  # AdObservation

    def to_dict(self, with_observations: bool = False) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "observations"}
        if with_observations:
            d["observations"] = [o.to_dict() for o in self.observations]
        return d


@dataclass
class SessionRecord:
    session_id: int
    start_tick: int
    crawls: list  # CrawlRecord

    def crawl(self, stage: str, role: str, crawl_type: str = "test") -> CrawlRecord | None:
        for cr in self.crawls:
            if cr.stage == stage and cr.role == role and cr.crawl_type == crawl_type:
                return cr
        return None


@dataclass
class RunRecord:
    run_id: str
    run_index: int
    persona_id: int
    setup_code: str
    config: dict
    seed: int
    devices: list  # device descriptions
    sessions: list  # SessionRecord
    ground_truth: list = field(default_factory=list)
    inferred_pairs: list = field(default_factory=list)
    requests: list = field(default_factory=list)

    def observations(self) -> list[AdObservation]:
        return [o for s in self.sessions for cr in s.crawls for o in cr.observations]

    def device(self, role: str) -> dict:
        for d in self.devices:
            if d["role"] == role:
                return d
        raise KeyError(role)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id, "run_index": self.run_index, "persona_id": self.persona_id,
            "setup_code": self.setup_code, "config": self.config, "seed": self.seed,
            "devices": self.devices, "ground_truth": self.ground_truth,
            "inferred_pairs": self.inferred_pairs,
            "sessions": [{"session_id": s.session_id, "start_tick": s.start_tick,
                          "crawls": [c.to_dict(True) for c in s.crawls]} for s in self.sessions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        sessions = []
        for s in d["sessions"]:
            crawls = []
            for c in s["crawls"]:
                obs = [AdObservation(**o) for o in c.get("observations", [])]
                crawls.append(CrawlRecord(c["device_id"], c["role"], c["stage"], c["crawl_type"],
                                          c["start_tick"], list(c["pages"]), dict(c["stats"]), obs))
            sessions.append(SessionRecord(s["session_id"], s["start_tick"], crawls))
        return cls(d["run_id"], d["run_index"], d["persona_id"], d["setup_code"], d["config"],
                   d["seed"], d["devices"], sessions, d.get("ground_truth", []),
                   d.get("inferred_pairs", []))


def default_devices(desktop_mode: str = "stateful", mobile_mode: str = "stateful",
                    desktops_train: bool = False, extra_desktops: int = 0,
                    extra_trains: bool = False) -> list[DeviceProfile]:
    devices = [
        DeviceProfile("mobile", "mobile", "mobile", "home", mobile_mode),
        DeviceProfile("pc-paired", "desktop", "paired_pc", "home", desktop_mode, desktops_train),
        DeviceProfile("pc-baseline", "desktop", "baseline_pc", "office", desktop_mode, desktops_train),
    ]
    for i in range(extra_desktops):
        devices.append(DeviceProfile(f"pc-extra{i + 1}", "desktop", "paired_pc", "home", desktop_mode,
                                     extra_trains))
    return devices


def check_topology(devices: list[DeviceProfile]) -> None:
    roles = [d.role for d in devices]
    if roles.count("mobile") != 1 or roles.count("baseline_pc") != 1 or roles.count("paired_pc") < 1:
        raise ConfigInvalid("need one mobile, at least one paired_pc and one baseline_pc")
    mobile = next(d for d in devices if d.role == "mobile")
    for d in devices:
        if d.role == "paired_pc" and d.ip_label != mobile.ip_label:
            raise ConfigInvalid(f"{d.device_id}: paired desktop must share the mobile's IP")
        if d.role == "baseline_pc" and d.ip_label == mobile.ip_label:
            raise ConfigInvalid(f"{d.device_id}: baseline desktop must not share the mobile's IP")


PHASE = {"B": "before", "M": "mobile", "A": "after"}


def execute_run(config: RunConfig, devices: list[DeviceProfile], ecosystem: AdEcosystem | None,
                filters: FilterSet, persona: Persona, control: ControlPageSet,
                seed: int = 0, run_index: int = 1) -> RunRecord:
    """Drive every device through the session timeline against one ecosystem."""
    if ecosystem is None:
        raise EcosystemUnavailable("no ad ecosystem attached to the run")
    check_topology(devices)
    run_id = f"{config.setup_code}-p{persona.id:02d}-r{run_index}"
    plans = build_timeline(config, persona.persona_pages, control.pages)
    by_role: dict[str, list[DeviceProfile]] = {}
    for d in devices:
        by_role.setdefault(d.role, []).append(d)
    sessions = []
    for plan in plans:
        ecosystem.begin_session((run_id, plan.session_id))
        session_start = config.start_tick + plan.offset
        crawls = []
        for stage in plan.stages:
            roles = {role for cr in stage.crawls for role in cr.roles}
            for d in devices:
                if d.role in roles and d.state_mode == "stateless":
                    d.cookie_jar.clear()
            for crawl in stage.crawls:
                if len(crawl.pages) * crawl.dwell > crawl.duration:
                    raise StageOverrun(f"{run_id} s{plan.session_id} {stage.name}: visits exceed stage")
                participants = [d for role in crawl.roles for d in by_role.get(role, [])
                                if crawl.crawl_type == "test" or d.kind == "mobile" or d.trains]
                start = session_start + crawl.start
                records = {d.device_id: CrawlRecord(d.device_id, d.role, stage.name, crawl.crawl_type,
                                                    start, [], asdict(PageStats()))
                           for d in participants}
                totals = {d.device_id: PageStats() for d in participants}
                for v, page in enumerate(crawl.pages):
                    tick = start + v * crawl.dwell
                    for d in participants:
                        rec = records[d.device_id]
                        rec.pages.append(page)
                        req = Request(d.device_id, d.kind, d.ip_label, d.cookie_jar, page)
                        if crawl.crawl_type == "train":
                            ecosystem.visit(req, tick, is_train=True)
                            continue
                        dom = ecosystem.serve_page(req, tick)
                        ctx = CrawlContext(d.device_id, stage.name, plan.session_id, run_id,
                                           crawl.crawl_type, PHASE[stage.name])
                        obs, stats = extract_ads(dom, filters, ctx)
                        rec.observations.extend(obs)
                        totals[d.device_id] = totals[d.device_id] + stats
                for d in participants:
                    records[d.device_id].stats = asdict(totals[d.device_id])
                    crawls.append(records[d.device_id])
        sessions.append(SessionRecord(plan.session_id, session_start, crawls))

    mobile = by_role["mobile"][0]
    truth = sorted(sorted((mobile.device_id, d.device_id)) for d in by_role.get("paired_pc", []))
    inferred = sorted(sorted(p) for p in ecosystem.inferred_pairs())
    return RunRecord(run_id, run_index, persona.id, config.setup_code, config.to_dict(), seed,
                     [d.describe() for d in devices], sessions, truth, inferred,
                     list(ecosystem.requests))


@dataclass(frozen=True)
class Preset:
    setup_code: str
    config: RunConfig
    persona_ids: tuple[int, ...]
    desktop_mode: str = "stateful"
    mobile_mode: str = "stateful"
    desktops_train: bool = False
    boosted: bool = False
    control: ControlPageSet = ControlPageSet(WEATHER_CONTROL_PAGES)
    combined: bool = False
    exclude_persona_keywords: bool = False
    extra_desktops: int = 0
    extra_trains: bool = False

    def devices(self) -> list[DeviceProfile]:
        return default_devices(self.desktop_mode, self.mobile_mode, self.desktops_train,
                               self.extra_desktops, self.extra_trains)


def preset(setup_code: str) -> Preset:
    """Parameters of a named experimental setup (``-sim`` suffix accepted)."""
    code = setup_code.lower().removesuffix("-sim")
    if code not in SETUP_CODES:
        raise UnknownSetup(setup_code)
    if code in COMBINED_FROM:
        base = preset(COMBINED_FROM[code])
        return replace(base, setup_code=code, config=replace(base.config, setup_code=code), combined=True)
    if code == "1a":
        return Preset("1a", RunConfig(setup_code="1a"), tuple(range(1, 11)))
    if code in ("2a", "2c"):
        cfg = RunConfig(t_train=480, t_test=30, N=12, runs=4, setup_code=code, desktop_train=30)
        if code == "2a":
            return Preset("2a", cfg, (1, 4), desktops_train=True, exclude_persona_keywords=True)
        return Preset("2c", cfg, (1, 4), desktops_train=True, boosted=True,
                      control=ControlPageSet(BOOSTED_CONTROL_PAGES), exclude_persona_keywords=True)
    if code == "3a":
        return Preset("3a", RunConfig(runs=2, setup_code="3a"), (1, 2, 3, 4, 5),
                      desktop_mode="stateless", mobile_mode="stateful")
    if code == "pre1":
        return Preset("pre1", RunConfig(N=28, runs=1, setup_code="pre1"), (2,), extra_desktops=1)
    # pre2: as pre1, with one desktop also browsing the persona pages
    return Preset("pre2", RunConfig(N=28, runs=1, setup_code="pre2", desktop_train=15), (2,),
                  extra_desktops=1, extra_trains=True)


def run_start_tick(global_index: int, config: RunConfig) -> int:
    """Runs are laid back to back on a calendar starting Monday 00:00, each at 08:00."""
    days = -(-(config.session_span * config.N * MINUTE) // DAY)
    return global_index * (days + 1) * DAY + 8 * 3600

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdt_lab.adex import extract_ads, CrawlContext
from cdt_lab.ecosim import (AdEcosystem, Campaign, Request, SimConfig, TrackerSpec, TrackerState,
                            histogram_cosine, observe_visit, shared_ip_evidence, update_device_graph)

CDT = TrackerSpec("t1", "Org", ("t1.example",), is_cdt=True, coverage=1.0, probabilistic=True)


def tiny_config(**kw):
    campaigns = (Campaign("c1", "Shopping", ("shop.example",)), Campaign("c2", "Travel", ("fly.example",)))
    return SimConfig(trackers=(CDT,), campaigns=campaigns, **kw)


def test_observe_visit_examples():
    s = TrackerState(CDT)
    observe_visit(s, "ck", "home", "shop.example", "Shopping", True, 1)
    observe_visit(s, "ck", "home", "shop.example", "Shopping", True, 1)
    observe_visit(s, "ck", "office", "news.example", None, False, 2)
    assert s.histograms["ck"] == Counter({"Shopping": 2})
    assert dict(s.ip_log["home"]) == {"ck": {1}}
    assert dict(s.ip_log["office"]) == {"ck": {2}}
    observe_visit(s, "ck", "home", "x.example", "Travel", False, 3)
    assert "Travel" not in s.histograms["ck"]


def test_shared_evidence_adjacency():
    assert shared_ip_evidence({1, 2}, {2}) == 2
    assert shared_ip_evidence({5}, {1}) == 0
    assert shared_ip_evidence(set(), {1}) == 0


def test_cosine():
    assert histogram_cosine(Counter(a=1), Counter(a=3)) == pytest.approx(1.0)
    assert histogram_cosine(Counter(a=1), Counter(b=1)) == 0.0
    assert histogram_cosine(Counter(), Counter(a=1)) == 0.0


def populated_state(n_cookies=4, sessions=3):
    s = TrackerState(CDT)
    for i in range(n_cookies):
        ip = "home" if i % 2 == 0 else "office"
        for k in range(1, sessions + 1):
            observe_visit(s, f"c{i}", ip, "shop.example", "Shopping" if i < 2 else "Travel", True, k)
    return s


def test_zero_strength_never_pairs():
    cfg = tiny_config(cdt_strength=0.0)
    s = populated_state()
    rng = np.random.default_rng(0)
    for k in range(1, 4):
        for c in sorted({c for cs in s.ip_log.values() for c in cs}):
            update_device_graph(s, cfg, c, k, rng)
    assert s.device_graph == set()


def test_saturation_pairs_every_colocated_cookie():
    cfg = tiny_config(cdt_strength=1.0, pairing_ip_weight=60.0)
    s = populated_state()
    rng = np.random.default_rng(0)
    for c in ("c0", "c1", "c2", "c3"):
        update_device_graph(s, cfg, c, 1, rng)
    assert s.device_graph == {frozenset(("c0", "c2")), frozenset(("c1", "c3"))}


def test_non_cdt_tracker_is_inert():
    s = populated_state()
    s.spec = TrackerSpec("t2", "Org", ("t2.example",), is_cdt=False)
    update_device_graph(s, tiny_config(cdt_strength=1.0), "c0", 1, np.random.default_rng(0))
    assert s.device_graph == set()


def replay_oracle(ip_log, histograms, cookie, session, cfg, rng, evaluated, graph):
    """Reference pairing rule written from the model description."""
    for ip in sorted(ip_log):
        if cookie not in ip_log[ip] or not ip_log[ip][cookie]:
            continue
        for other in sorted(ip_log[ip]):
            key = tuple(sorted((cookie, other)))
            if other == cookie or key in graph or (session, key) in evaluated:
                continue
            evaluated.add((session, key))
            evidence = 0
            for t in ip_log[ip][cookie]:
                if any(abs(t - u) <= 1 for u in ip_log[ip][other]):
                    evidence += 1
            if not evidence:
                continue
            a, b = histograms.get(cookie, {}), histograms.get(other, {})
            keys = set(a) | set(b)
            dot = sum(a.get(k, 0) * b.get(k, 0) for k in keys)
            norm = math.sqrt(sum(v * v for v in a.values())) * math.sqrt(sum(v * v for v in b.values()))
            cos = dot / norm if norm else 0.0
            z = cfg.pairing_ip_weight * evidence + cfg.pairing_behavior_weight * cos
            if rng.random() < cfg.cdt_strength / (1 + math.exp(-z)):
                graph.add(key)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.sampled_from(["home", "office"]), st.integers(1, 4),
                          st.sampled_from([None, "Shopping", "Travel"])), min_size=1, max_size=25),
       st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_pairing_matches_replay_oracle(events, strength, seed):
    cfg = tiny_config(cdt_strength=strength)
    state = TrackerState(CDT)
    ip_log, hist, evaluated, graph = {}, {}, set(), set()
    rng_impl, rng_oracle = np.random.default_rng(seed), np.random.default_rng(seed)
    for cookie_idx, ip, session, category in sorted(events, key=lambda e: e[2]):
        cookie = f"k{cookie_idx}"
        observe_visit(state, cookie, ip, "p.example", category, category is not None, session)
        ip_log.setdefault(ip, {}).setdefault(cookie, set()).add(session)
        if category is not None:
            hist.setdefault(cookie, Counter())[category] += 1
        update_device_graph(state, cfg, cookie, session, rng_impl)
        replay_oracle(ip_log, hist, cookie, session, cfg, rng_oracle, evaluated, graph)
    assert {tuple(sorted(p)) for p in state.device_graph} == graph


def serve(eco, kind, n, page="accuweather.com"):
    jar = {}
    return [eco.serve_page(Request(f"{kind}-dev", kind, "home", jar, page), t) for t in range(n)]


def test_ads_per_page_bounds(sim_config):
    eco = AdEcosystem(sim_config, run_seed=1)
    serve(eco, "desktop", 60)
    serve(eco, "mobile", 60)
    lo, hi = sim_config.desktop_ads_per_page
    for p in eco.placements:
        n = len(p.landing_urls)
        assert (0 <= n <= 5) if p.device_id.startswith("mobile") else (lo <= n <= hi)


def test_fill_probability_corners(sim_config):
    for fill, expected in ((0.0, {0}), (1.0, {5})):
        eco = AdEcosystem(sim_config.with_overrides(mobile_fill_prob=fill), run_seed=2)
        serve(eco, "mobile", 10)
        assert {len(p.landing_urls) for p in eco.placements} == expected


def test_noise_only_without_history(sim_config):
    cfg = sim_config.with_overrides(cross_device_share=0.0, retarget_prob=0.0, behavioral_prob=0.0,
                                    noise_prob=1.0)
    eco = AdEcosystem(cfg, run_seed=4)
    serve(eco, "desktop", 20)
    assert {t for p in eco.placements for t in p.slot_types} == {"noise"}


def test_cross_device_ads_follow_the_partner(sim_config, personas):
    cfg = sim_config.with_overrides(cdt_strength=1.0, pairing_ip_weight=60.0, cross_device_share=1.0,
                                    retarget_prob=0.0, behavioral_prob=0.0, noise_prob=0.0,
                                    cross_device_retarget_frac=1.0, boosted=True)
    eco = AdEcosystem(cfg, run_seed=9)
    mobile_jar, pc_jar = {}, {}
    eco.begin_session(1)
    for t, page in enumerate(personas[1].persona_pages):
        eco.visit(Request("mobile", "mobile", "home", mobile_jar, page), t, is_train=True)
    eco.serve_page(Request("mobile", "mobile", "home", mobile_jar, "accuweather.com"), 100)
    eco.serve_page(Request("pc", "desktop", "home", pc_jar, "accuweather.com"), 200)
    assert frozenset(("mobile", "pc")) in eco.inferred_pairs()
    for t in range(300, 310):
        eco.serve_page(Request("pc", "desktop", "home", pc_jar, "accuweather.com"), t)
    persona_pages = set(personas[1].persona_pages)
    retargeted = {c.campaign_id for c in cfg.campaigns if persona_pages & set(c.landing_domains)}
    specs = {t.tracker_id: t for t in cfg.trackers}
    slots = [(url, kind, tid) for p in eco.placements[2:]
             for url, kind, tid in zip(p.landing_urls, p.slot_types, p.trackers)]
    cross = [url for url, kind, tid in slots if kind == "cross_device"]
    assert cross
    assert all(u.split("/offer/")[1].split("?")[0] in retargeted for u in cross)
    # trackers that cannot link devices fall back to contextual noise
    assert all(kind == "noise" for _, kind, tid in slots if not specs[tid].is_cdt)


def test_ecosystem_determinism(sim_config):
    a, b = AdEcosystem(sim_config, run_seed=7), AdEcosystem(sim_config, run_seed=7)
    for eco in (a, b):
        serve(eco, "desktop", 15)
    assert a.placements == b.placements and a.placements
    c = AdEcosystem(sim_config, run_seed=8)
    serve(c, "desktop", 15)
    assert c.placements != a.placements


def test_placements_survive_extraction(sim_config, filters):
    eco = AdEcosystem(sim_config, run_seed=3)
    doms = serve(eco, "desktop", 30)
    ctx = CrawlContext("desktop-dev", "B", 1, "r", "test", "before")
    for dom, placement in zip(doms, eco.placements):
        obs, _ = extract_ads(dom, filters, ctx)
        assert sorted(o.landing_url for o in obs) == sorted(set(placement.landing_urls))


def test_invalid_config():
    with pytest.raises(ValueError):
        tiny_config(noise_prob=0.9)
    with pytest.raises(ValueError):
        tiny_config(cdt_strength=1.5)
    with pytest.raises(ValueError):
        TrackerSpec("t", "o", ("t.example",), coverage=2.0)


def test_config_round_trip(sim_config):
    assert SimConfig.from_dict(sim_config.to_dict()) == sim_config

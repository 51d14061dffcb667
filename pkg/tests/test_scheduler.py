from collections import Counter, defaultdict

import pytest

from cdt_lab.ecosim import AdEcosystem
from cdt_lab.scheduler import (DAY, ConfigInvalid, EcosystemUnavailable, RunConfig, UnknownSetup,
                               build_timeline, check_topology, default_devices, execute_run, preset,
                               run_start_tick)

PERSONA_PAGES = ("a.com", "b.com", "c.com", "d.com", "e.com")
CONTROL = ("accuweather.com", "weather.com")


def test_default_span_is_100_minutes():
    assert RunConfig().session_span == 100
    plans = build_timeline(RunConfig(N=3), PERSONA_PAGES, CONTROL)
    assert [p.offset for p in plans] == [0, 6000, 12000]
    assert all(p.stages[-1].end <= p.span for p in plans)


def test_stage_order_and_gaps():
    cfg = RunConfig()
    b, m, a = build_timeline(cfg, PERSONA_PAGES, CONTROL)[0].stages
    assert (b.name, m.name, a.name) == ("B", "M", "A")
    assert b.start == 0 and b.end == 20 * 60
    train, test = m.crawls
    assert (train.crawl_type, test.crawl_type) == ("train", "test")
    assert train.start - b.end == 10 * 60  # wait
    assert test.start == train.start + 15 * 60
    assert a.start - m.end == 10 * 60


def test_long_training_durations():
    cfg = preset("2a").config
    plan = build_timeline(cfg, PERSONA_PAGES, CONTROL)[0]
    _, m, a = plan.stages
    assert m.crawls[0].duration == 480 * 60
    assert m.crawls[1].duration == 30 * 60
    assert a.crawls[0].crawl_type == "train" and a.crawls[0].duration == cfg.desktop_train * 60
    assert cfg.N == 12


def test_same_control_sequence_before_and_after():
    for code in ("1a", "2a", "3a"):
        plan = build_timeline(preset(code).config, PERSONA_PAGES, CONTROL)[0]
        b, m, a = plan.stages
        assert b.crawls[-1].pages == a.crawls[-1].pages == m.crawls[-1].pages
        assert len(b.crawls[-1].pages) * b.crawls[-1].dwell <= b.crawls[-1].duration


@pytest.mark.parametrize("field", ["t_train", "t_test", "t_wait", "t_rest", "N", "runs"])
def test_nonpositive_config_rejected(field):
    with pytest.raises(ConfigInvalid):
        RunConfig(**{field: 0})


def test_reverse_direction_rejected():
    with pytest.raises(ConfigInvalid):
        RunConfig(direction="desktop->mobile")


def test_unknown_setup():
    with pytest.raises(UnknownSetup):
        preset("9z")


def test_presets():
    assert preset("1a").persona_ids == tuple(range(1, 11))
    assert preset("3a").desktop_mode == "stateless" and preset("3a").mobile_mode == "stateful"
    assert preset("2c").boosted and not preset("2a").boosted
    assert preset("1b").combined and preset("1b").config.N == preset("1a").config.N
    assert preset("1a-sim").setup_code == "1a"
    assert len(preset("pre1").devices()) == 4


def test_topology_rules():
    check_topology(default_devices())
    devs = default_devices()
    devs[2].ip_label = "home"
    with pytest.raises(ConfigInvalid):
        check_topology(devs)
    devs = default_devices()
    devs[1].ip_label = "cafe"
    with pytest.raises(ConfigInvalid):
        check_topology(devs)
    with pytest.raises(ConfigInvalid):
        check_topology(default_devices()[:2])


def test_missing_ecosystem(personas, filters):
    with pytest.raises(EcosystemUnavailable):
        execute_run(RunConfig(N=1), default_devices(), None, filters, personas[1], preset("1a").control)


def test_ip_discipline(small_run):
    rec, _ = small_run
    ips = defaultdict(set)
    for _, device, ip, _, _ in rec.requests:
        ips[device].add(ip)
    assert ips == {"mobile": {"home"}, "pc-paired": {"home"}, "pc-baseline": {"office"}}


def test_observations_carry_provenance(small_run):
    rec, _ = small_run
    assert rec.observations()
    for s in rec.sessions:
        for c in s.crawls:
            for o in c.observations:
                assert (o.run_id, o.session_id, o.stage_id, o.device_id) == (rec.run_id, s.session_id,
                                                                             c.stage, c.device_id)


def test_desktop_test_pages_identical(small_run):
    rec, _ = small_run
    for s in rec.sessions:
        for stage in ("B", "A"):
            assert s.crawl(stage, "paired_pc").pages == s.crawl(stage, "baseline_pc").pages
        assert s.crawl("B", "paired_pc").pages == s.crawl("A", "paired_pc").pages


def cookies_per_device_tracker(eco):
    counts = Counter()
    for cookie, device in eco.cookie_owner.items():
        counts[(device, cookie.split(":")[1])] += 1
    return counts


def test_stateless_desktops_get_fresh_cookies(personas, filters, sim_config):
    cfg = RunConfig(N=3, runs=1, setup_code="3a")
    eco = AdEcosystem(sim_config, run_seed=5)
    execute_run(cfg, preset("3a").devices(), eco, filters, personas[1], preset("3a").control)
    counts = cookies_per_device_tracker(eco)
    desktop = [n for (dev, _), n in counts.items() if dev != "mobile"]
    mobile = [n for (dev, _), n in counts.items() if dev == "mobile"]
    assert max(mobile) == 1
    assert max(desktop) == 2 * 3  # one jar per desktop stage


def test_stateful_keeps_one_cookie(small_run):
    _, eco = small_run
    assert set(cookies_per_device_tracker(eco).values()) == {1}


def test_run_start_ticks():
    cfg = RunConfig()
    assert run_start_tick(0, cfg) == 8 * 3600
    assert run_start_tick(3, cfg) - run_start_tick(2, cfg) == 3 * DAY
    long = preset("2a").config
    assert run_start_tick(1, long) - run_start_tick(0, long) > long.session_span * long.N * 60


def test_run_is_deterministic(personas, filters, sim_config):
    cfg = RunConfig(N=2, runs=1)
    recs = [execute_run(cfg, default_devices(), AdEcosystem(sim_config, run_seed=3), filters,
                        personas[2], preset("1a").control, seed=3).to_dict() for _ in range(2)]
    assert recs[0] == recs[1]


def test_ground_truth(small_run):
    rec, _ = small_run
    assert rec.ground_truth == [["mobile", "pc-paired"]]
    assert all("pc-baseline" not in pair or "mobile" not in pair for pair in rec.ground_truth)


def test_run_record_round_trip(small_run):
    rec, _ = small_run
    again = type(rec).from_dict(rec.to_dict())
    assert again.to_dict() == rec.to_dict()

import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdt_lab.filterlist import (FilterRule, FilterSet, MatchContext, Skip, classify_domains, matches,
                                parse_line)

FIXTURES = Path(__file__).parent / "fixtures"


def load_conformance():
    cases = []
    with open(FIXTURES / "filter_conformance.tsv", encoding="utf-8") as fh:
        for row in csv.reader(fh, delimiter="\t"):
            if not row or row[0].startswith("# rules"):
                continue
            rules, url, page, expected, note = row
            cases.append((rules.split(" ;; "), url, page, expected == "1", note))
    return cases


CONFORMANCE = load_conformance()


def random_urls(n, seed):
    rng = np.random.default_rng(seed)
    hosts = ["ads.example.com", "sub.ads.example.com", "example.com", "tracker.example", "cdn.example",
             "news.example", "adgridsync.com", "bannerhub.com", "shop.example.org", "badads.example.com"]
    words = ["ads", "banner", "img", "adframe", "popup", "x", "lib", "ad.js", "bad.js", "allowed",
             "Banner.GIF", "movie.swf", "p", "offer", "aclk"]
    out = []
    for _ in range(n):
        scheme = ["http", "https"][rng.integers(2)]
        host = hosts[rng.integers(len(hosts))]
        path = "/".join(words[rng.integers(len(words))] for _ in range(rng.integers(0, 4)))
        query = f"?{words[rng.integers(len(words))]}={rng.integers(100)}" if rng.random() < 0.4 else ""
        out.append(f"{scheme}://{host}/{path}{query}")
    return out


def all_conformance_rules():
    return [line for rules, *_ in CONFORMANCE for line in rules]


def test_conformance_suite_is_large_enough():
    assert len(CONFORMANCE) >= 30
    joined = " ".join(all_conformance_rules())
    for syntax in ("||", "|http", "^", "*", "@@", "domain=", "third-party"):
        assert syntax in joined


@pytest.mark.parametrize("rules,url,page,expected,note", CONFORMANCE, ids=[c[4] for c in CONFORMANCE])
def test_conformance_case(rules, url, page, expected, note):
    fs = FilterSet.from_lines(rules)
    assert matches(fs, MatchContext.build(url, page)) is expected
    assert matches(fs, MatchContext.build(url, page), use_index=False) is expected


def test_parse_comment_and_headers():
    assert parse_line("! Title: EasyList") == Skip("! Title: EasyList", "comment")
    assert parse_line("[Adblock Plus 2.0]").reason == "header"
    assert parse_line("example.com##.ad").reason == "cosmetic"
    assert parse_line("example.com#@#.ad").reason == "cosmetic"
    assert parse_line("||ads.example.com^$image").reason == "unsupported-option"
    assert parse_line("/banner[0-9]+/").reason == "regex"
    assert parse_line("   ").reason == "empty"


def test_parse_domain_anchored_rule():
    rule = parse_line("||ads.example.com^")
    assert isinstance(rule, FilterRule)
    assert rule.kind == "blocking"
    assert rule.domain_anchor and not rule.start_anchor
    assert rule.pattern == "ads.example.com^"


def test_parse_exception_with_domain_option():
    rule = parse_line("@@||example.com/ads$domain=trusted.org")
    assert rule.kind == "exception" and rule.is_exception
    assert rule.raw.startswith("@@")
    assert rule.include_domains == frozenset({"trusted.org"})
    assert rule.exclude_domains == frozenset()


def test_parse_dollar_inside_pattern_is_literal():
    rule = parse_line("/price$/x")
    assert isinstance(rule, FilterRule)
    assert rule.pattern == "/price$/x"
    assert parse_line("/price$100").reason == "unsupported-option"


def test_empty_set_never_matches():
    fs = FilterSet()
    for url in random_urls(50, 3):
        assert not matches(fs, MatchContext.build(url, "page.example"))


def test_spec_examples():
    fs = FilterSet.from_lines(["||ads.example.com^"])
    assert matches(fs, MatchContext.build("http://ads.example.com/banner?x=1"))
    fs = FilterSet.from_lines(["||ads.example.com^", "@@||ads.example.com/allowed"])
    assert not matches(fs, MatchContext.build("http://ads.example.com/allowed/1.gif"))


def test_classify_domains_keeps_order_and_duplicates():
    fs = FilterSet.from_lines(["||ads.example.com^"])
    urls = ["http://a.example/x", "http://ads.example.com/y", "http://b.example/z", "http://ads.example.com/y"]
    out = classify_domains(fs, urls, "page.example")
    assert [v for _, v in out] == [False, True, False, True]
    assert [u for u, _ in out] == urls


def test_classify_first_party_with_third_party_rule():
    fs = FilterSet.from_lines(["||shop.example^$third-party"])
    urls = ["https://shop.example/a", "https://www.shop.example/b", "https://img.shop.example/c"]
    assert [v for _, v in classify_domains(fs, urls, "shop.example")] == [False, False, False]


def test_third_party_flag_uses_registrable_domain():
    ctx = MatchContext.build("https://img.news.co.uk/x.png", "www.news.co.uk")
    assert ctx.third_party is False
    ctx = MatchContext.build("https://cdn.other.co.uk/x.png", "www.news.co.uk")
    assert ctx.third_party is True


def test_every_rule_reachable_through_one_bucket():
    fs = FilterSet.from_lines(all_conformance_rules())
    for bucketed in (fs.blocking, fs.exceptions):
        ids = list(bucketed.unindexed) + [i for v in bucketed.by_token.values() for i in v]
        assert sorted(ids) == list(range(len(bucketed.rules)))


def test_index_matches_linear_scan_on_random_urls():
    fs = FilterSet.from_lines(all_conformance_rules())
    pages = ["page.example", "news.example", "trusted.org", "cdn.example", "tracker.example"]
    for i, url in enumerate(random_urls(1000, 42)):
        ctx = MatchContext.build(url, pages[i % len(pages)])
        assert fs.lookup(ctx).is_ad == fs.lookup(ctx, use_index=False).is_ad


def test_shipped_snapshot_parses(filters):
    report = filters.report()
    assert filters.header == "! Version: 202110170000"
    assert report["blocking"] > 0 and report["exception"] > 0
    assert report["skipped"]["unsupported-option"] > 0


url_strategy = st.builds(lambda i, s: random_urls(1, i * 7919 + s)[0],
                         st.integers(0, 10_000), st.integers(0, 100))
rule_strategy = st.sampled_from([r for r in all_conformance_rules() if not r.startswith("!")])


@settings(max_examples=150, deadline=None)
@given(st.lists(rule_strategy, min_size=1, max_size=6), rule_strategy, url_strategy,
       st.sampled_from(["page.example", "news.example", "trusted.org"]))
def test_adding_exception_never_creates_a_match(rules, extra, url, page):
    exception = extra if extra.startswith("@@") else "@@" + extra
    ctx = MatchContext.build(url, page)
    before = matches(FilterSet.from_lines(rules), ctx)
    after = matches(FilterSet.from_lines(rules + [exception]), ctx)
    assert not (after and not before)


@settings(max_examples=150, deadline=None)
@given(st.lists(rule_strategy, min_size=1, max_size=6), rule_strategy, url_strategy,
       st.sampled_from(["page.example", "news.example", "trusted.org"]))
def test_adding_blocking_rule_never_removes_a_match(rules, extra, url, page):
    blocking = extra[2:] if extra.startswith("@@") else extra
    ctx = MatchContext.build(url, page)
    before = matches(FilterSet.from_lines(rules), ctx)
    after = matches(FilterSet.from_lines(rules + [blocking]), ctx)
    assert not (before and not after)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=60))
def test_parse_line_is_total(line):
    assert isinstance(parse_line(line), (FilterRule, Skip))

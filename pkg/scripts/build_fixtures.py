#!/usr/bin/env python3
"""Regenerate the shipped world fixtures under src/cdt_lab/data/.

The output is fully determined by the word lists and the fixed seed below,
so rerunning this script reproduces the committed files byte for byte.
"""
from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from cdt_lab.persona import (BOOSTED_CONTROL_PAGES, WEATHER_CONTROL_PAGES, InterestTopic,
                             build_catalog_personas)

SEED = 2021

# persona id -> (catalog description, interest topic, campaign categories)
CATALOG = [
    (1, "Online Shopping - Accessories, Jewelry", "Jewelry & Watches", ["Jewelry"]),
    (2, "Online Shopping - Fashion, Beauty", "Fashion & Beauty", ["Apparel", "Beauty"]),
    (3, "Online Shopping - Sports and Accessories", "Sporting Goods", ["Sporting Goods"]),
    (4, "Online Shopping - Health and Fitness", "Health & Fitness", ["Health", "Fitness"]),
    (5, "Online Shopping - Pet Supplies", "Pet Supplies", ["Pets"]),
    (6, "Air Travel", "Air Travel", ["Air Travel"]),
    (7, "Online Courses and Language Resources", "Language Courses", ["Education"]),
    (8, "Online Business, Marketing, Merchandising", "Business Marketing", ["Business", "Marketing"]),
    (9, "Browser Games - Online Games", "Online Games", ["Games"]),
    (10, "Hotels and Vacations", "Hotels & Vacations", ["Hotels"]),
]
NOISE_CATEGORIES = ["Finance", "Motor Vehicles", "Real Estate", "Insurance", "Telecom",
                    "Food & Drink", "Home & Garden", "Electronics", "Software", "Entertainment"]
PARENT = {
    "Jewelry": "Shopping", "Apparel": "Shopping", "Beauty": "Shopping",
    "Sporting Goods": "Shopping", "Pets": "Shopping", "Health": "Wellness",
    "Fitness": "Wellness", "Air Travel": "Travel", "Hotels": "Travel",
    "Education": "Reference", "Business": "Commerce", "Marketing": "Commerce",
    "Games": "Entertainment", "Electronics": "Shopping", "Home & Garden": "Shopping",
}

# the user-interest list the personas are clustered from
TOPICS = [
    "Jewelry & Watches", "Fine Jewelry", "Watches", "Fashion & Beauty", "Beauty Products",
    "Fashion", "Sporting Goods", "Sports Equipment", "Health & Fitness", "Fitness Equipment",
    "Pet Supplies", "Pet Food", "Air Travel", "Cheap Flights", "Language Courses",
    "Online Courses", "Business Marketing", "Marketing Services", "Online Games",
    "Browser Games", "Hotels & Vacations", "Vacation Rentals", "Cooking", "Gardening",
]

TAXONOMY = """\
Apparel & Accessories > Jewelry > Rings
Apparel & Accessories > Jewelry > Necklaces
Apparel & Accessories > Jewelry > Watches
Apparel & Accessories > Jewelry > Bracelets
Apparel & Accessories > Clothing > Dresses
Apparel & Accessories > Fashion > Handbags
Beauty > Cosmetics > Makeup
Beauty > Skin Care > Moisturizers
Health > Health Care > Vitamins
Health > Fitness > Fitness Trackers
Sporting Goods > Exercise > Yoga Mats
Sporting Goods > Athletics > Running Shoes
Sporting Goods > Outdoor Recreation > Camping Gear
Sports > Equipment > Tennis Rackets
Animals & Pet Supplies > Pet Supplies > Dog Supplies
Animals & Pet Supplies > Pet Supplies > Cat Supplies
Animals & Pet Supplies > Pet Food > Dog Food
Travel > Air Travel > Cheap Flights
Travel > Air Travel > Airline Tickets
Lodging > Hotels & Accommodations > Hotels
Lodging > Hotels & Accommodations > Vacation Rentals
Lodging > Vacations > Vacation Packages
Education > Online Courses > Language Courses
Education > Online Courses > Coding Bootcamps
Education > Language Resources > Dictionaries
Business & Industrial > Marketing > Email Marketing
Business & Industrial > Marketing > Merchandising
Business & Industrial > Business Services > Business Cards
Games > Online Games > Browser Games
Games > Online Games > Multiplayer Games
Games > Video Games > Game Consoles
Home & Garden > Kitchen > Cookware
Vehicles > Motor Vehicles > Cars
"""

SYLLABLES = ["ar", "bel", "cor", "dan", "el", "fin", "gal", "hex", "ir", "jun", "kal", "lum",
             "mor", "nex", "or", "pra", "quin", "ros", "sol", "tav", "ul", "ver", "wen", "zen"]
SUFFIX = {
    "Jewelry": "gems", "Apparel": "wear", "Beauty": "glow", "Sporting Goods": "sport",
    "Health": "vital", "Fitness": "fit", "Pets": "paws", "Air Travel": "fly",
    "Education": "learn", "Business": "biz", "Marketing": "reach", "Games": "play",
    "Hotels": "stay", "Finance": "fund", "Motor Vehicles": "motors", "Real Estate": "homes",
    "Insurance": "cover", "Telecom": "tel", "Food & Drink": "eats", "Home & Garden": "garden",
    "Electronics": "tech", "Software": "soft", "Entertainment": "fun",
}

# (tracker domain, organization, is_cdt, probabilistic, persona coverage, serves_ads)
TRACKERS = [
    ("adgridsync.com", "Adgrid", True, True, 0.70, True),
    ("bridgepixel.net", "Bridgepixel", True, True, 0.55, True),
    ("tapgraph.io", "Tapgraph", True, True, 0.45, True),
    ("crossmatch-ads.com", "Crossmatch", True, True, 0.40, True),
    ("linkedid.net", "Linkedid", True, True, 0.35, True),
    ("loginsphere.com", "Loginsphere", True, False, 0.60, True),
    ("sociallogin.net", "Loginsphere", True, False, 0.30, False),
    ("bannerhub.com", "Bannerhub", False, False, 0.80, True),
    ("bannerhub-static.com", "Bannerhub", False, False, 0.50, False),
    ("clickstream.net", "Clickstream", False, False, 0.60, True),
    ("adnexa.com", "Adnexa", False, False, 0.50, True),
    ("retargo.com", "Retargo", False, False, 0.45, True),
    ("pubmatrix.com", "Pubmatrix", False, False, 0.40, True),
    ("openbid.net", "Openbid", False, False, 0.35, True),
    ("sitemetrics.com", "Sitemetrics", False, False, 0.75, False),
    ("scorecardia.com", "Scorecardia", False, False, 0.50, False),
    ("tagmanagerx.com", "Tagmanagerx", False, False, 0.65, False),
    ("widgetly.net", "Widgetly", False, False, 0.25, False),
    ("contentrec.com", "Contentrec", False, False, 0.30, True),
]

# non-boosted control pages: two CDT ad servers and three others per page
CONTROL_EMBEDS = {
    "accuweather.com": ["adgridsync.com", "bridgepixel.net", "bannerhub.com", "clickstream.net",
                        "adnexa.com", "sitemetrics.com"],
    "wunderground.com": ["tapgraph.io", "adgridsync.com", "retargo.com", "pubmatrix.com",
                         "bannerhub.com", "tagmanagerx.com"],
    "weather.com": ["crossmatch-ads.com", "loginsphere.com", "openbid.net", "bannerhub.com",
                    "clickstream.net", "scorecardia.com"],
    "weather-forecast.com": ["linkedid.net", "bridgepixel.net", "adnexa.com", "contentrec.com",
                             "retargo.com", "sitemetrics.com"],
    "metcheck.com": ["adgridsync.com", "tapgraph.io", "pubmatrix.com", "openbid.net",
                     "bannerhub.com", "widgetly.net"],
    "usatoday.com": ["loginsphere.com", "crossmatch-ads.com", "contentrec.com", "adnexa.com",
                     "clickstream.net", "scorecardia.com"],
    "huffingtonpost.com": ["linkedid.net", "bridgepixel.net", "bannerhub.com", "retargo.com",
                           "openbid.net", "tagmanagerx.com"],
}

GENERIC_RULES = """\
[Adblock Plus 2.0]
! Version: 202110170000
! Title: cdt-lab filter snapshot
! Expires: 4 days
! Homepage: https://example.invalid/filters
!
! -- generic blocking rules --
/banner/ads/*
-advert-
/adserver/*$third-party
&ad_type=
||ads.$third-party
/pagead/ads?
||adimg.*/creative/
|http://ad.
! -- rules with options outside the supported subset --
||trackpixel.net^$script,image
||popmedia.net^$popup
/prebid.js$rewrite=abp-resource:blank-js
/ads.js$csp=script-src 'none'
! -- regular-expression rules --
/^https?:\\/\\/[a-z]+\\.adfarm\\.net\\//
! -- cosmetic rules --
##.ad-banner
accuweather.com##.sponsored-panel
weather.com#@#.ad-slot
! -- exceptions --
@@||bannerhub.com/creative/$domain=metcheck.com
@@/banner/ads/whitelisted/*
@@||adnexa.com/privacy^
"""


def domain_name(rng: random.Random, category: str, used: set[str]) -> str:
    while True:
        stem = rng.choice(SYLLABLES) + rng.choice(SYLLABLES)
        name = f"{stem}{SUFFIX[category]}.com"
        if name not in used:
            used.add(name)
            return name


def build_campaigns(rng: random.Random):
    used: set[str] = set()
    campaigns = []
    categories = [c for _, _, _, cats in CATALOG for c in cats] + NOISE_CATEGORIES
    for cat in categories:
        slug = SUFFIX[cat]
        for i in range(4):
            domains = [domain_name(rng, cat, used) for _ in range(3)]
            campaigns.append({"campaign_id": f"{slug}-{i + 1}", "category": cat,
                              "landing_domains": domains, "active": True})
    return campaigns


def build_category_db(rng: random.Random, campaigns) -> list[str]:
    lines = ["# registrable domain<TAB>labels separated by ';'"]
    for c in campaigns:
        for d in c["landing_domains"]:
            if rng.random() < 0.04:
                continue  # left for the manual-review queue
            labels = [c["category"]]
            if c["category"] in PARENT:
                labels.append(PARENT[c["category"]])
            lines.append(f"{d}\t{';'.join(labels)}")
    for page in sorted(set(WEATHER_CONTROL_PAGES) | set(BOOSTED_CONTROL_PAGES)):
        lines.append(f"{page}\t{'News' if page in ('usatoday.com', 'huffingtonpost.com') else 'Weather'}")
    head, body = lines[:1], sorted(lines[1:])
    return head + body


class _GeneratingSource:
    """Search source that invents results for any query and records them."""

    def __init__(self, rng, pools, organic):
        self.rng = rng
        self.pools = pools  # keyword -> candidate sponsored domains
        self.organic = organic
        self.records: dict[str, list[tuple[str, bool]]] = {}
        self.cursor = 0

    def query(self, text):
        if text in self.records:
            return list(self.records[text])
        pool = self.pools(text)
        sponsored = [pool[(self.cursor + i) % len(pool)] for i in range(3)] if pool else []
        self.cursor += 3
        results = [(f"www.{d}", True) for d in sponsored]
        results += [(self.rng.choice(self.organic), False) for _ in range(4)]
        self.records[text] = results
        return list(results)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "cdt_lab" / "data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)

    campaigns = build_campaigns(rng)
    (out / "taxonomy.txt").write_text(TAXONOMY, encoding="utf-8")
    (out / "interest_topics.txt").write_text("\n".join(TOPICS) + "\n", encoding="utf-8")
    catalog = [{"id": pid, "category_label": desc, "topic": topic, "categories": cats}
               for pid, desc, topic, cats in CATALOG]
    (out / "persona_catalog.json").write_text(json.dumps(catalog, indent=2) + "\n", encoding="utf-8")

    by_cat: dict[str, list[str]] = {}
    for c in campaigns:
        by_cat.setdefault(c["category"], []).extend(c["landing_domains"])
    # the persona whose queries are being issued decides the sponsored pool
    current: dict[str, list[str]] = {"pool": []}
    organic = ["wikipedia.org", "reddit.com", "youtube.com", "quora.com", "medium.com",
               "nytimes.com", "bbc.co.uk", "forbes.com"]
    source = _GeneratingSource(rng, lambda q: current["pool"], organic)
    taxonomy = [ln for ln in TAXONOMY.splitlines() if ln.strip()]
    topics = [InterestTopic(t) for t in TOPICS]
    for entry in catalog:
        pool = [d for cat in entry["categories"] for d in by_cat[cat]]
        # interleave categories so two-label personas visit both
        if len(entry["categories"]) > 1:
            a, b = by_cat[entry["categories"][0]], by_cat[entry["categories"][1]]
            pool = [x for pair in zip(a, b) for x in pair]
        current["pool"] = pool
        source.cursor = 0
        personas, failures = build_catalog_personas([entry], topics, taxonomy, source)
        if failures:
            raise SystemExit(f"persona formation failed: {failures}")
    with open(out / "search_fixture.jsonl", "w", encoding="utf-8") as fh:
        for q in sorted(source.records):
            rec = {"query": q, "results": [{"domain": d, "sponsored": s} for d, s in source.records[q]]}
            fh.write(json.dumps(rec) + "\n")

    (out / "category_db.tsv").write_text("\n".join(build_category_db(rng, campaigns)) + "\n", encoding="utf-8")

    rules = GENERIC_RULES + "! -- tracker domains --\n"
    rules += "".join(f"||{t[0]}^$third-party\n" for t in TRACKERS)
    (out / "easylist_snapshot.txt").write_text(rules, encoding="utf-8")

    trackers = [{"tracker_id": d, "organization": org, "domains": [d], "is_cdt": cdt,
                 "probabilistic": prob, "coverage": cov, "serves_ads": ads}
                for d, org, cdt, prob, cov, ads in TRACKERS]
    sim = {"trackers": trackers, "campaigns": campaigns, "control_embeds": CONTROL_EMBEDS}
    (out / "sim_world.json").write_text(json.dumps(sim, indent=1) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()

"""Page parser and ad extractor.

Walks a rendered DOM snapshot, keeps the ad iframes that have content and
non-zero size, pulls candidate landing URLs out of the click-through links
(``adurl=`` / ``redirect=`` parameters, percent-decoded), and keeps only the
candidates whose click URL the filter list flags as an ad. Nothing is ever
fetched.
"""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from html.parser import HTMLParser
from urllib.parse import unquote, urljoin, urlsplit

from .domains import host_of, registrable_domain
from .filterlist import FilterSet, MatchContext

DEFAULT_FRAME_SIZE = (300, 250)
MAX_DECODE_ROUNDS = 3
DEFAULT_FRAME_DEPTH = 2
MEDIA_TAGS = ("img", "embed", "object")
VOID_TAGS = frozenset({"area", "base", "br", "col", "embed", "hr", "img", "input",
                       "link", "meta", "param", "source", "track", "wbr"})
_PARAM_RE = re.compile(r"(?:^|[?&/;])(adurl|redirect)=([^&#]*)", re.IGNORECASE)


class SnapshotMalformed(ValueError):
    pass


@dataclass
class Element:
    tag: str
    attrs: dict = field(default_factory=dict)
    children: list = field(default_factory=list)
    text: str = ""

    def iter(self):
        yield self
        for child in self.children:
            yield from child.iter()


@dataclass
class DomSnapshot:
    root: Element | None
    page_url: str
    captured_at: int = 0


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = Element("#document")
        self.stack = [self.root]

    def handle_starttag(self, tag, attrs):
        el = Element(tag.lower(), {k.lower(): (v if v is not None else "") for k, v in attrs})
        self.stack[-1].children.append(el)
        if el.tag not in VOID_TAGS:
            self.stack.append(el)

    def handle_startendtag(self, tag, attrs):
        el = Element(tag.lower(), {k.lower(): (v if v is not None else "") for k, v in attrs})
        self.stack[-1].children.append(el)

    def handle_endtag(self, tag):
        tag = tag.lower()
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return

    def handle_data(self, data):
        self.stack[-1].text += data


def _parse_fragment(html: str) -> Element:
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    _expand_raw_frames(builder.root)
    return builder.root


def _expand_raw_frames(el: Element) -> None:
    # some html.parser versions hand iframe bodies over as raw text; snapshots
    # inline the frame document there, so parse it into child elements
    for child in el.children:
        if child.tag == "iframe" and not child.children and "<" in child.text:
            child.children = _parse_fragment(child.text).children
            child.text = ""
        _expand_raw_frames(child)


def parse_html(html: str, page_url: str, captured_at: int = 0) -> DomSnapshot:
    return DomSnapshot(_parse_fragment(html), page_url, captured_at)


@dataclass
class AdFrame:
    element: Element
    width: int
    height: int
    content_empty: bool
    depth: int = 1

    @property
    def valid(self) -> bool:
        return self.width > 0 and self.height > 0 and not self.content_empty


@dataclass(frozen=True)
class CandidateLanding:
    url: str
    extraction_route: str  # direct-href | adurl-param | redirect-param
    click_url: str = ""


@dataclass(frozen=True)
class AdObservation:
    landing_domain: str
    landing_url: str
    device_id: str
    stage_id: str
    session_id: int
    run_id: str
    observed_at: int
    crawl_type: str  # train | test
    crawl_phase: str  # before | mobile | after

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PageStats:
    frames_total: int = 0
    frames_valid: int = 0
    candidates: int = 0
    ads: int = 0

    def __add__(self, other: "PageStats") -> "PageStats":
        return PageStats(self.frames_total + other.frames_total,
                         self.frames_valid + other.frames_valid,
                         self.candidates + other.candidates,
                         self.ads + other.ads)


@dataclass(frozen=True)
class CrawlContext:
    device_id: str = ""
    stage_id: str = ""
    session_id: int = 0
    run_id: str = ""
    crawl_type: str = "test"
    crawl_phase: str = "before"


def _dimension(value: str | None, default: int) -> int:
    if value is None or value.strip() == "":
        return default
    m = re.match(r"\s*(\d+)", value)
    return int(m.group(1)) if m else default


def _own_level(el: Element):
    """Descendants of ``el`` that are not inside a nested iframe."""
    for child in el.children:
        yield child
        if child.tag != "iframe":
            yield from _own_level(child)


def _has_content(el: Element) -> bool:
    return bool(el.children) or bool(el.text.strip())


def _scan_frames(page: DomSnapshot, max_depth: int, stats: PageStats | None = None) -> list[AdFrame]:
    out: list[AdFrame] = []

    def visit_frame(el: Element, depth: int):
        if stats is not None:
            stats.frames_total += 1
        w = _dimension(el.attrs.get("width"), DEFAULT_FRAME_SIZE[0])
        h = _dimension(el.attrs.get("height"), DEFAULT_FRAME_SIZE[1])
        frame = AdFrame(el, w, h, not _has_content(el), depth)
        if not frame.valid:
            return
        if stats is not None:
            stats.frames_valid += 1
        level = list(_own_level(el))
        nested = [c for c in level if c.tag == "iframe"]
        has_links = any(c.tag == "a" for c in level)
        if has_links or not nested or depth >= max_depth:
            out.append(frame)
            return
        for child in nested:
            visit_frame(child, depth + 1)

    def walk(el: Element):
        for child in el.children:
            if child.tag == "iframe":
                visit_frame(child, 1)
            else:
                walk(child)

    walk(page.root)
    return out


def find_ad_frames(page: DomSnapshot, max_depth: int = DEFAULT_FRAME_DEPTH) -> list[AdFrame]:
    """Valid iframes in document order, read at the first level holding links."""
    if page.root is None:
        raise SnapshotMalformed("snapshot has no root element")
    return _scan_frames(page, max_depth)


def decode_param(value: str, rounds: int = MAX_DECODE_ROUNDS) -> str:
    """Percent-decode until the value reads as an absolute URL (bounded)."""
    for _ in range(rounds):
        if re.match(r"https?://", value, re.IGNORECASE):
            break
        decoded = unquote(value)
        if decoded == value:
            break
        value = decoded
    return value


def _valid_url(url: str) -> bool:
    try:
        parts = urlsplit(url)
    except ValueError:
        return False
    return parts.scheme in ("http", "https") and bool(parts.hostname)


def extract_candidates(frame: AdFrame, base_url: str = "") -> list[CandidateLanding]:
    out: list[CandidateLanding] = []
    for el in _own_level(frame.element):
        if el.tag != "a" or "href" not in el.attrs:
            continue
        if not any(d.tag in MEDIA_TAGS for d in el.iter() if d is not el):
            continue
        href = urljoin(base_url, el.attrs["href"].strip()) if base_url else el.attrs["href"].strip()
        m = _PARAM_RE.search(href)
        if m:
            route = "adurl-param" if m.group(1).lower() == "adurl" else "redirect-param"
            url = decode_param(m.group(2))
        else:
            route, url = "direct-href", href
        if _valid_url(url):
            out.append(CandidateLanding(url, route, href))
    return out


def extract_ads(page: DomSnapshot, filters: FilterSet, ctx: CrawlContext,
                max_depth: int = DEFAULT_FRAME_DEPTH) -> tuple[list[AdObservation], PageStats]:
    if page.root is None:
        raise SnapshotMalformed("snapshot has no root element")
    stats = PageStats()
    page_host = host_of(page.page_url)
    observations: list[AdObservation] = []
    seen: set[str] = set()
    for frame in _scan_frames(page, max_depth, stats):
        for cand in extract_candidates(frame, page.page_url):
            stats.candidates += 1
            if not filters.lookup(MatchContext.build(cand.click_url, page_host)).is_ad:
                continue
            if cand.url in seen:
                continue
            seen.add(cand.url)
            observations.append(AdObservation(
                landing_domain=registrable_domain(host_of(cand.url)),
                landing_url=cand.url,
                device_id=ctx.device_id,
                stage_id=ctx.stage_id,
                session_id=ctx.session_id,
                run_id=ctx.run_id,
                observed_at=page.captured_at,
                crawl_type=ctx.crawl_type,
                crawl_phase=ctx.crawl_phase,
            ))
    stats.ads = len(observations)
    return observations, stats

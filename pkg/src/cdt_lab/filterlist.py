"""Adblock-syntax filter lists: parsing, indexing and URL matching.

Only the network-rule subset needed to tell ad click-through URLs apart from
page chrome is supported: ``||`` / ``|`` anchors, ``*`` wildcards, the ``^``
separator, ``@@`` exceptions and the ``domain=`` / ``third-party`` options.
Rules carrying any other option are skipped whole, as are cosmetic rules.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlsplit, urlunsplit

from .domains import is_third_party

SUPPORTED_OPTIONS = {"domain", "third-party", "~third-party"}
_TOKEN_RE = re.compile(r"[a-z0-9%]+")
_SEPARATOR = r"(?:[^\w\-.%]|$)"
_DOMAIN_ANCHOR = r"^[a-zA-Z][a-zA-Z0-9+.\-]*://(?:[^/?#]*\.)?"


@dataclass(frozen=True)
class Skip:
    line: str
    reason: str  # comment | header | cosmetic | empty | regex | unsupported-option | invalid


@dataclass(frozen=True)
class FilterRule:
    raw: str
    kind: str  # "blocking" | "exception"
    pattern: str
    domain_anchor: bool = False
    start_anchor: bool = False
    end_anchor: bool = False
    include_domains: frozenset = frozenset()
    exclude_domains: frozenset = frozenset()
    third_party: bool | None = None
    regex: re.Pattern = field(default=None, compare=False, repr=False)

    @property
    def is_exception(self) -> bool:
        return self.kind == "exception"

    def keyword(self) -> str | None:
        """First index token of the pattern that a matching URL must contain whole."""
        body = self.pattern.lower()
        for m in _TOKEN_RE.finditer(body):
            tok = m.group()
            if len(tok) < 3:
                continue
            before = body[m.start() - 1] if m.start() > 0 else None
            after = body[m.end()] if m.end() < len(body) else None
            if before is None and not (self.domain_anchor or self.start_anchor):
                continue
            if after is None and not self.end_anchor:
                continue
            if before == "*" or after == "*":
                continue
            return tok
        return None

    def applies_to(self, page_domain: str, third_party: bool) -> bool:
        if self.third_party is not None and self.third_party != third_party:
            return False
        page = (page_domain or "").lower()
        if self.include_domains and not any(_domain_in(page, d) for d in self.include_domains):
            return False
        if any(_domain_in(page, d) for d in self.exclude_domains):
            return False
        return True

    def matches(self, ctx: "MatchContext") -> bool:
        if not self.applies_to(ctx.page_domain, ctx.third_party):
            return False
        return self.regex.search(ctx.normalized_url) is not None


def _domain_in(host: str, domain: str) -> bool:
    return host == domain or host.endswith("." + domain)


@dataclass(frozen=True)
class MatchContext:
    request_url: str
    page_domain: str
    third_party: bool
    normalized_url: str

    @classmethod
    def build(cls, request_url: str, page_domain: str = "") -> "MatchContext":
        third = is_third_party(request_url, page_domain) if page_domain else True
        return cls(request_url, page_domain, third, normalize_url(request_url))


def normalize_url(url: str) -> str:
    """Lowercase scheme and host; path and query keep their case."""
    try:
        parts = urlsplit(url)
    except ValueError:
        return url
    if not parts.scheme:
        return url
    netloc = parts.netloc.lower()
    return urlunsplit((parts.scheme.lower(), netloc, parts.path, parts.query, parts.fragment))


def _compile(pattern: str, domain_anchor: bool, start_anchor: bool, end_anchor: bool) -> re.Pattern:
    out = []
    if domain_anchor:
        out.append(_DOMAIN_ANCHOR)
    elif start_anchor:
        out.append("^")
    for ch in pattern:
        if ch == "*":
            out.append(".*")
        elif ch == "^":
            out.append(_SEPARATOR)
        else:
            out.append(re.escape(ch))
    if end_anchor:
        out.append("$")
    return re.compile("".join(out))


def _split_options(text: str) -> tuple[str, str | None]:
    idx = text.rfind("$")
    if idx <= 0:
        return text, None
    opts = text[idx + 1:]
    # a "$" inside the pattern is literal unless an option name follows it
    if not re.match(r"~?[a-z0-9\-]+(?:=|,|$)", opts, re.IGNORECASE):
        return text, None
    return text[:idx], opts


def parse_line(line: str) -> FilterRule | Skip:
    raw = line.strip()
    if not raw:
        return Skip(line, "empty")
    if raw.startswith("!"):
        return Skip(line, "comment")
    if raw.startswith("[") and raw.endswith("]"):
        return Skip(line, "header")
    if "##" in raw or "#@#" in raw or "#?#" in raw or "#$#" in raw:
        return Skip(line, "cosmetic")

    kind = "blocking"
    text = raw
    if text.startswith("@@"):
        kind = "exception"
        text = text[2:]
    pattern, opts = _split_options(text)

    include: set[str] = set()
    exclude: set[str] = set()
    third: bool | None = None
    if opts is not None:
        for opt in opts.split(","):
            opt = opt.strip().lower()
            name = opt.split("=", 1)[0]
            if name not in SUPPORTED_OPTIONS:
                return Skip(line, "unsupported-option")
            if name == "domain":
                values = opt.split("=", 1)[1] if "=" in opt else ""
                for d in filter(None, values.split("|")):
                    (exclude if d.startswith("~") else include).add(d.lstrip("~"))
                if not include and not exclude:
                    return Skip(line, "invalid")
            elif name == "third-party":
                third = True
            else:
                third = False

    if len(pattern) > 1 and pattern.startswith("/") and pattern.endswith("/"):
        return Skip(line, "regex")

    domain_anchor = pattern.startswith("||")
    start_anchor = not domain_anchor and pattern.startswith("|")
    if domain_anchor:
        pattern = pattern[2:]
    elif start_anchor:
        pattern = pattern[1:]
    end_anchor = pattern.endswith("|")
    if end_anchor:
        pattern = pattern[:-1]
    if domain_anchor:
        # host part is case-insensitive
        cut = len(pattern)
        for sep in "/^*?|":
            pos = pattern.find(sep)
            if pos != -1:
                cut = min(cut, pos)
        pattern = pattern[:cut].lower() + pattern[cut:]
    if not pattern and not (domain_anchor or start_anchor or end_anchor):
        if opts is None:
            return Skip(line, "invalid")
    try:
        regex = _compile(pattern, domain_anchor, start_anchor, end_anchor)
    except re.error:
        return Skip(line, "invalid")
    return FilterRule(raw=raw, kind=kind, pattern=pattern, domain_anchor=domain_anchor,
                      start_anchor=start_anchor, end_anchor=end_anchor,
                      include_domains=frozenset(include), exclude_domains=frozenset(exclude),
                      third_party=third, regex=regex)


class _Bucketed:
    """Rules keyed by their index token, plus an unindexed bucket."""

    def __init__(self, rules):
        self.rules = list(rules)
        self.by_token: dict[str, list[int]] = {}
        self.unindexed: list[int] = []
        for i, rule in enumerate(self.rules):
            tok = rule.keyword()
            if tok is None:
                self.unindexed.append(i)
            else:
                self.by_token.setdefault(tok, []).append(i)

    def candidates(self, url_tokens):
        seen = set(self.unindexed)
        for tok in url_tokens:
            seen.update(self.by_token.get(tok, ()))
        return sorted(seen)

    def first_match(self, ctx, url_tokens, use_index=True):
        ids = self.candidates(url_tokens) if use_index else range(len(self.rules))
        for i in ids:
            if self.rules[i].matches(ctx):
                return self.rules[i]
        return None


@dataclass
class Verdict:
    is_ad: bool
    rule: FilterRule | None = None
    exception: FilterRule | None = None


class FilterSet:
    """Immutable set of parsed rules with a token index for lookups."""

    def __init__(self, rules=(), skipped=()):
        rules = list(rules)
        self.blocking = _Bucketed(r for r in rules if not r.is_exception)
        self.exceptions = _Bucketed(r for r in rules if r.is_exception)
        self.skipped = list(skipped)
        self.header: str | None = None

    @classmethod
    def from_lines(cls, lines) -> "FilterSet":
        rules, skipped = [], []
        header = None
        for line in lines:
            parsed = parse_line(line)
            if isinstance(parsed, Skip):
                skipped.append(parsed)
                low = parsed.line.strip().lower()
                if header is None and low.startswith("! version"):
                    header = parsed.line.strip()
            else:
                rules.append(parsed)
        fs = cls(rules, skipped)
        fs.header = header
        return fs

    @classmethod
    def from_file(cls, path) -> "FilterSet":
        text = Path(path).read_text(encoding="utf-8")
        return cls.from_lines(text.splitlines())

    def __len__(self):
        return len(self.blocking.rules) + len(self.exceptions.rules)

    def report(self) -> dict:
        reasons = Counter(s.reason for s in self.skipped)
        return {
            "blocking": len(self.blocking.rules),
            "exception": len(self.exceptions.rules),
            "skipped": dict(sorted(reasons.items())),
        }

    def lookup(self, ctx: MatchContext, use_index: bool = True) -> Verdict:
        tokens = set(_TOKEN_RE.findall(ctx.normalized_url.lower()))
        hit = self.blocking.first_match(ctx, tokens, use_index)
        if hit is None:
            return Verdict(False)
        exc = self.exceptions.first_match(ctx, tokens, use_index)
        if exc is not None:
            return Verdict(False, hit, exc)
        return Verdict(True, hit)


def matches(filters: FilterSet, ctx: MatchContext, use_index: bool = True) -> bool:
    return filters.lookup(ctx, use_index).is_ad


def classify_domains(filters: FilterSet, candidates, page_domain: str):
    """Order-preserving (url, is_ad) verdicts; third-party is computed per URL."""
    return [(url, matches(filters, MatchContext.build(url, page_domain))) for url in candidates]

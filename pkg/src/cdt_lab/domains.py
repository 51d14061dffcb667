"""Host and registrable-domain (eTLD+1) helpers backed by the bundled PSL."""
from __future__ import annotations

from functools import lru_cache
from urllib.parse import urlsplit

from publicsuffixlist import PublicSuffixList

_psl = PublicSuffixList(only_icann=True)


def host_of(url: str) -> str:
    if "://" not in url:
        url = "http://" + url
    try:
        host = urlsplit(url).hostname or ""
    except ValueError:
        return ""
    return host.lower().rstrip(".")


@lru_cache(maxsize=65536)
def registrable_domain(host_or_url: str) -> str:
    """eTLD+1 of a host or URL; falls back to the bare host for IPs/suffixes."""
    host = host_of(host_or_url) if ("/" in host_or_url or ":" in host_or_url) else host_or_url.lower().rstrip(".")
    if not host:
        return ""
    private = _psl.privatesuffix(host)
    return private or host


def is_third_party(request_url: str, page_domain: str) -> bool:
    return registrable_domain(request_url) != registrable_domain(page_domain)

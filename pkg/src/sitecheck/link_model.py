"""URL normalization, link scope, and the record types shared by every checker."""

from __future__ import annotations

import enum
import re
import string
from dataclasses import dataclass, field, replace
from typing import Optional, Union
from urllib.parse import urlsplit

from sitecheck._version import __version__

DEFAULT_PORTS = {"http": 80, "https": 443}

_UNRESERVED = frozenset(string.ascii_letters + string.digits + "-._~")
_SUB_DELIMS = frozenset("!$&'()*+,;=")
_PATH_SAFE = _UNRESERVED | _SUB_DELIMS | frozenset(":@/")
_QUERY_SAFE = _PATH_SAFE | frozenset("?")
_HEX = frozenset(string.hexdigits)
_HOST_RE = re.compile(r"^[a-z0-9._~!$&'()*+,;=%-]+$")


class InvalidUrl(ValueError):
    """Raised when a string cannot be turned into a checkable http(s) URL."""


class UnsupportedScheme(InvalidUrl):
    """An absolute URL whose scheme is not http or https (mailto:, javascript:, ...)."""

    def __init__(self, scheme: str):
        super().__init__(f"unsupported scheme: {scheme}")
        self.scheme = scheme


@dataclass(frozen=True, order=True)
class NormalizedUrl:
    """Canonical absolute http(s) URL. Fragments are never stored."""

    scheme: str
    host: str
    port: int
    path: str = "/"
    query: Optional[str] = None

    def __str__(self) -> str:
        host = f"[{self.host}]" if ":" in self.host else self.host
        out = f"{self.scheme}://{host}"
        if self.port != DEFAULT_PORTS[self.scheme]:
            out += f":{self.port}"
        out += self.path
        if self.query is not None:
            out += "?" + self.query
        return out

    @property
    def authority(self) -> tuple[str, str, int]:
        return (self.scheme, self.host, self.port)

    @property
    def request_target(self) -> str:
        """Path plus query, as sent on an HTTP request line."""
        return self.path if self.query is None else f"{self.path}?{self.query}"

    @property
    def origin(self) -> str:
        """Serialized form without path, e.g. ``http://127.0.0.1:8000``."""
        return str(replace(self, path="/", query=None))[:-1]

    @classmethod
    def parse(cls, raw: str) -> NormalizedUrl:
        return normalize_url(None, raw)


def _normalize_percent(text: str, safe: frozenset) -> str:
    """Uppercase escapes, decode escaped unreserved characters, escape everything unsafe."""
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "%" and i + 2 < len(text) and text[i + 1] in _HEX and text[i + 2] in _HEX:
            decoded = chr(int(text[i + 1 : i + 3], 16))
            out.append(decoded if decoded in _UNRESERVED else "%" + text[i + 1 : i + 3].upper())
            i += 3
            continue
        if ch in safe:
            out.append(ch)
        else:
            out.extend(f"%{b:02X}" for b in ch.encode("utf-8", "surrogatepass"))
        i += 1
    return "".join(out)


def remove_dot_segments(path: str) -> str:
    """Remove "." and ".." segments from an absolute path."""
    output: list[str] = []
    segments = path.split("/")
    for i, seg in enumerate(segments):
        last = i == len(segments) - 1
        if seg == ".":
            if last:
                output.append("")
        elif seg == "..":
            if len(output) > 1:
                output.pop()
            if last:
                output.append("")
        else:
            output.append(seg)
    result = "/".join(output)
    if not result.startswith("/"):
        result = "/" + result
    return result


def _merge(base_path: str, rel_path: str) -> str:
    return base_path[: base_path.rfind("/") + 1] + rel_path


def _split_authority(scheme: str, text: str) -> tuple[str, int]:
    try:
        parts = urlsplit(f"{scheme}:{text}" if text.startswith("//") else text)
        host = parts.hostname
        port = parts.port
    except ValueError as exc:
        raise InvalidUrl(str(exc)) from None
    if not host:
        raise InvalidUrl("missing host")
    host = host.lower()
    if ":" not in host and not _HOST_RE.match(host):
        raise InvalidUrl(f"invalid host: {host!r}")
    return host, port if port is not None else DEFAULT_PORTS[scheme]


def normalize_url(base: Optional[NormalizedUrl], raw: str) -> NormalizedUrl:
    """Resolve *raw* against *base* and return its canonical form.

    Raises :class:`UnsupportedScheme` for absolute non-http(s) references and
    :class:`InvalidUrl` for anything else that cannot be resolved.
    """
    text = raw.strip()
    if not text:
        raise InvalidUrl("empty URL")
    if any(ord(c) < 0x20 or ord(c) == 0x7F for c in text):
        raise InvalidUrl("control character in URL")
    text = text.split("#", 1)[0]
    has_query = "?" in text
    try:
        parts = urlsplit(text)
    except ValueError as exc:
        raise InvalidUrl(str(exc)) from None
    query = parts.query if has_query else None

    if parts.scheme:
        scheme = parts.scheme.lower()
        if scheme not in DEFAULT_PORTS:
            raise UnsupportedScheme(scheme)
        if not parts.netloc:
            raise InvalidUrl(f"missing host in {raw!r}")
        host, port = _split_authority(scheme, text)
        path = parts.path
    else:
        if base is None:
            raise InvalidUrl(f"relative reference without a base: {raw!r}")
        scheme = base.scheme
        if text.startswith("//"):
            host, port = _split_authority(scheme, text)
            path = parts.path
        else:
            host, port = base.host, base.port
            if not parts.path:
                path = base.path
                if not has_query:
                    query = base.query
            elif parts.path.startswith("/"):
                path = parts.path
            else:
                path = _merge(base.path, parts.path)

    path = remove_dot_segments(_normalize_percent(path or "/", _PATH_SAFE))
    if query is not None:
        query = _normalize_percent(query, _QUERY_SAFE) or None
    return NormalizedUrl(scheme, host, port, path, query)


class Scope(str, enum.Enum):
    INTERNAL = "internal"
    EXTERNAL = "external"


def classify_scope(seed: NormalizedUrl, target: NormalizedUrl) -> Scope:
    """Internal iff scheme, host and port all match the seed."""
    return Scope.INTERNAL if seed.authority == target.authority else Scope.EXTERNAL


# -- probe outcomes -----------------------------------------------------------


class BrokenReason(str, enum.Enum):
    HTTP_STATUS = "http_status"
    CONNECTION_FAILED = "connection_failed"
    TIMEOUT = "timeout"
    TOO_MANY_REDIRECTS = "too_many_redirects"
    INVALID_URL = "invalid_url"


class SkipReason(str, enum.Enum):
    EXTERNAL_NOT_CHECKED = "external_not_checked"
    SCHEME_UNSUPPORTED = "scheme_unsupported"
    EXCLUDED_BY_PATTERN = "excluded_by_pattern"


@dataclass(frozen=True)
class Ok:
    http_status: int

    def __post_init__(self):
        if not 200 <= self.http_status <= 299:
            raise ValueError(f"Ok requires a 2xx status, got {self.http_status}")

    def describe(self) -> str:
        return f"HTTP {self.http_status}"


@dataclass(frozen=True)
class Redirected:
    chain: tuple[NormalizedUrl, ...]
    final_status: int

    def __post_init__(self):
        if not self.chain:
            raise ValueError("redirect chain must not be empty")

    def describe(self) -> str:
        return f"HTTP {self.final_status} after redirect to {self.chain[-1]}"


@dataclass(frozen=True)
class Broken:
    reason: BrokenReason
    http_status: Optional[int] = None
    detail: str = field(default="", compare=False)

    def __post_init__(self):
        if self.reason is BrokenReason.HTTP_STATUS:
            if self.http_status is None or not 400 <= self.http_status <= 599:
                raise ValueError(f"Broken(http_status) requires 4xx/5xx, got {self.http_status}")

    def describe(self) -> str:
        if self.reason is BrokenReason.HTTP_STATUS:
            return f"HTTP {self.http_status}"
        text = self.reason.value.replace("_", " ")
        return f"{text} ({self.detail})" if self.detail else text


@dataclass(frozen=True)
class Skipped:
    reason: SkipReason

    def describe(self) -> str:
        return "skipped: " + self.reason.value.replace("_", " ")


CheckStatus = Union[Ok, Redirected, Broken, Skipped]


def is_success(status: CheckStatus) -> bool:
    return isinstance(status, (Ok, Redirected))


# -- records ------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Location:
    """A file path or page URL, with optional 1-based line and column."""

    path: str
    line: Optional[int] = None
    column: Optional[int] = None

    def __post_init__(self):
        if self.line is not None and self.line < 1:
            raise ValueError("line must be >= 1")
        if self.column is not None and self.column < 1:
            raise ValueError("column must be >= 1")

    def __str__(self) -> str:
        out = self.path
        if self.line is not None:
            out += f":{self.line}"
            if self.column is not None:
                out += f":{self.column}"
        return out

    def sort_key(self) -> tuple:
        return (self.path, self.line or 0, self.column or 0)


class SourceKind(str, enum.Enum):
    HTML_ATTR = "html_attr"
    JSON_STRING = "json_string"
    CLI_SEED = "cli_seed"


@dataclass(frozen=True)
class LinkRecord:
    """One discovered link.

    ``target`` is None when ``raw`` could not be resolved; in that case
    ``preset`` holds the status the link is assigned without probing
    (``Broken(invalid_url)`` or ``Skipped(scheme_unsupported)``).
    """

    target: Optional[NormalizedUrl]
    origin: Location
    source_kind: SourceKind
    scope: Optional[Scope]
    raw: str = ""
    attr: Optional[str] = None
    preset: Optional[CheckStatus] = None


# -- findings and reports -----------------------------------------------------


class Check(str, enum.Enum):
    LINK = "link"
    HTML = "html"
    XML = "xml"
    REACH = "reach"


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"


# machine_code -> (check, default severity, meaning)
CODES: dict[str, tuple[Check, Severity, str]] = {
    "LINK_BROKEN": (Check.LINK, Severity.ERROR, "a referenced URL is unreachable or returns 4xx/5xx"),
    "LINK_SEED_UNREACHABLE": (Check.LINK, Severity.ERROR, "the crawl seed itself could not be fetched"),
    "JSON_PARSE_ERROR": (Check.LINK, Severity.ERROR, "a JSON file is malformed"),
    "JSON_UNREADABLE": (Check.LINK, Severity.ERROR, "a JSON file could not be read"),
    "HTML_NO_DOCTYPE": (Check.HTML, Severity.ERROR, "missing <!DOCTYPE html>"),
    "HTML_UNCLOSED_TAG": (Check.HTML, Severity.ERROR, "an element is never closed"),
    "HTML_STRAY_END_TAG": (Check.HTML, Severity.ERROR, "an end tag matches no open element"),
    "HTML_VOID_END_TAG": (Check.HTML, Severity.ERROR, "an end tag for a void element"),
    "HTML_DUPLICATE_ID": (Check.HTML, Severity.ERROR, "an id value is used more than once"),
    "HTML_UNKNOWN_ELEMENT": (Check.HTML, Severity.WARNING, "an element name outside HTML5"),
    "HTML_UNQUOTED_SPECIAL_ATTR": (Check.HTML, Severity.ERROR, 'unquoted attribute value containing <, > or "'),
    "HTML_INVALID_UTF8": (Check.HTML, Severity.WARNING, "file is not valid UTF-8"),
    "HTML_UNREADABLE": (Check.HTML, Severity.ERROR, "an HTML file could not be read"),
    "XML_PARSE_ERROR": (Check.XML, Severity.ERROR, "an XML file is malformed"),
    "XML_UNKNOWN_TAG": (Check.XML, Severity.ERROR, "a user-file tag path absent from the main file"),
    "XML_UNREADABLE": (Check.XML, Severity.ERROR, "an XML file could not be read"),
    "REACH_FAILED": (Check.REACH, Severity.ERROR, "a URL did not answer with a success status"),
}


@dataclass(frozen=True)
class Finding:
    check: Check
    severity: Severity
    location: Location
    message: str
    machine_code: str
    related: tuple[Location, ...] = ()

    def __post_init__(self):
        if self.machine_code not in CODES:
            raise ValueError(f"unknown machine code {self.machine_code!r}")

    @classmethod
    def make(cls, code: str, location: Location, message: str, related=(), severity=None) -> Finding:
        check, default_severity, _ = CODES[code]
        return cls(check, severity or default_severity, location, message, code, tuple(related))

    def sort_key(self) -> tuple:
        loc = self.location
        return (loc.path, loc.line or 0, self.machine_code, loc.column or 0, self.message)


@dataclass(frozen=True)
class Report:
    """Findings plus run metadata. Findings are kept sorted."""

    findings: tuple[Finding, ...] = ()
    counts: dict = field(default_factory=dict)
    started: Optional[str] = None
    finished: Optional[str] = None
    version: str = __version__
    visited: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "findings", tuple(sorted(self.findings, key=Finding.sort_key)))
        object.__setattr__(self, "counts", dict(sorted(self.counts.items())))
        object.__setattr__(self, "visited", tuple(sorted(self.visited)))

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.ERROR]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.WARNING]

    def by_code(self, code: str) -> list[Finding]:
        return [f for f in self.findings if f.machine_code == code]

    def without_timestamps(self) -> Report:
        return replace(self, started=None, finished=None)


def merge_reports(reports) -> Report:
    """Concatenate findings (re-sorted), sum counts, union visited pages."""
    reports = list(reports)
    findings: list[Finding] = []
    counts: dict[str, int] = {}
    visited: set[str] = set()
    for r in reports:
        findings.extend(r.findings)
        for key, n in r.counts.items():
            counts[key] = counts.get(key, 0) + n
        visited.update(r.visited)
    starts = [r.started for r in reports if r.started]
    ends = [r.finished for r in reports if r.finished]
    return Report(
        findings=tuple(findings),
        counts=counts,
        started=min(starts) if starts else None,
        finished=max(ends) if ends else None,
        visited=tuple(visited),
    )

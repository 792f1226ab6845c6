"""Breadth-first site crawl: fetch internal HTML pages, probe every discovered link."""

from __future__ import annotations

import fnmatch
import re
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Optional
from urllib import robotparser

from sitecheck.html_check import extract_links, parse_document
from sitecheck.http_probe import FetchResult, ProbePolicy, fetch
from sitecheck.link_model import (
    Broken,
    CheckStatus,
    Finding,
    LinkRecord,
    Location,
    NormalizedUrl,
    Report,
    Scope,
    Skipped,
    SkipReason,
    SourceKind,
    classify_scope,
    is_success,
    merge_reports,
)

HTML_MEDIA_TYPES = ("text/html", "application/xhtml+xml")

__all__ = ["CrawlOptions", "CrawlState", "HostGate", "crawl", "merge_reports", "broken_link_findings"]


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def is_html(content_type: str) -> bool:
    return content_type.split(";", 1)[0].strip().lower() in HTML_MEDIA_TYPES


@dataclass(frozen=True)
class CrawlOptions:
    check_external: bool = False
    max_pages: int = 10000
    max_depth: Optional[int] = None
    concurrency: int = 8
    per_host_concurrency: int = 2
    exclude_patterns: tuple[str, ...] = ()
    probe_policy: ProbePolicy = field(default_factory=ProbePolicy)
    delay: float = 0.0
    respect_robots: bool = False

    def __post_init__(self):
        if self.concurrency < 1 or self.per_host_concurrency < 1:
            raise ValueError("concurrency limits must be >= 1")
        if self.per_host_concurrency > self.concurrency:
            raise ValueError("per_host_concurrency must not exceed concurrency")
        if self.max_pages < 1:
            raise ValueError("max_pages must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        object.__setattr__(self, "exclude_patterns", tuple(self.exclude_patterns))


def compile_excludes(patterns) -> Callable[[NormalizedUrl], bool]:
    """Patterns prefixed ``re:`` are regular expressions (searched); others are globs over the whole URL."""
    regexes = []
    for pat in patterns:
        if pat.startswith("re:"):
            regexes.append(re.compile(pat[3:]))
        else:
            regexes.append(re.compile(fnmatch.translate(pat)))

    def excluded(url: NormalizedUrl) -> bool:
        text = str(url)
        return any(rx.search(text) for rx in regexes)

    return excluded


class HostGate:
    """Caps concurrent requests per host and spaces them by an optional delay."""

    def __init__(self, per_host: int, delay: float = 0.0):
        self.per_host = per_host
        self.delay = delay
        self._lock = threading.Lock()
        self._sems: dict[tuple, threading.BoundedSemaphore] = {}
        self._next_slot: dict[tuple, float] = {}

    def _sem(self, key):
        with self._lock:
            if key not in self._sems:
                self._sems[key] = threading.BoundedSemaphore(self.per_host)
            return self._sems[key]

    def run(self, url: NormalizedUrl, fn, *args, **kwargs):
        key = url.authority
        with self._sem(key):
            if self.delay:
                with self._lock:
                    start = max(time.monotonic(), self._next_slot.get(key, 0.0))
                    self._next_slot[key] = start + self.delay
                pause = start - time.monotonic()
                if pause > 0:
                    time.sleep(pause)
            return fn(*args, **kwargs)


@dataclass
class CrawlState:
    frontier: list = field(default_factory=list)
    visited: set = field(default_factory=set)
    pages: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    origins: dict = field(default_factory=lambda: defaultdict(list))
    unresolved: list = field(default_factory=list)


@dataclass
class _Outcome:
    status: CheckStatus
    final_url: Optional[NormalizedUrl] = None
    links: Optional[list[LinkRecord]] = None


def _location_for(record: LinkRecord, show: Callable[[NormalizedUrl], str]) -> Location:
    origin = record.origin
    if record.source_kind is SourceKind.HTML_ATTR:
        try:
            return Location(show(NormalizedUrl.parse(origin.path)), origin.line, origin.column)
        except ValueError:
            pass
    return origin


def _ref(record: LinkRecord, show) -> tuple[Location, str]:
    loc = _location_for(record, show)
    if record.source_kind is SourceKind.JSON_STRING and record.attr:
        return loc, f"{loc} {record.attr}"
    return loc, str(loc)


def _broken(target: str, why: str, records, show) -> Finding:
    refs = sorted({_ref(r, show) for r in records}, key=lambda ref: (ref[0].sort_key(), ref[1]))
    where = ", ".join(text for _, text in refs)
    locations = tuple(dict.fromkeys(loc for loc, _ in refs))
    return Finding.make("LINK_BROKEN", locations[0], f"{target}: {why} (referenced from {where})", locations)


def broken_link_findings(
    results: dict,
    origins: dict,
    show: Callable[[NormalizedUrl], str] = str,
    unresolved=(),
) -> list[Finding]:
    """One LINK_BROKEN per broken target, located at its first referrer and listing all of them."""
    findings = []
    for url, status in results.items():
        if isinstance(status, Broken) and origins.get(url):
            findings.append(_broken(show(url), status.describe(), origins[url], show))
    grouped = defaultdict(list)
    for record in unresolved:
        if isinstance(record.preset, Broken):
            grouped[(record.raw, record.preset.describe())].append(record)
    for (raw, why), records in grouped.items():
        findings.append(_broken(repr(raw), why, records, show))
    return findings


class _Crawler:
    def __init__(self, seed: NormalizedUrl, options: CrawlOptions, show):
        self.seed = seed
        self.options = options
        self.show = show
        self.policy = options.probe_policy
        self.excluded = compile_excludes(options.exclude_patterns)
        self.gate = HostGate(options.per_host_concurrency, options.delay)
        self.state = CrawlState()
        self._robots: dict[tuple, Optional[robotparser.RobotFileParser]] = {}
        self._robots_lock = threading.Lock()

    # -- scope policy

    def _out_of_bounds(self, url: NormalizedUrl) -> Optional[CheckStatus]:
        if self.excluded(url):
            return Skipped(SkipReason.EXCLUDED_BY_PATTERN)
        if classify_scope(self.seed, url) is Scope.EXTERNAL and not self.options.check_external:
            return Skipped(SkipReason.EXTERNAL_NOT_CHECKED)
        if self.options.respect_robots and not self._robots_allows(url):
            return Skipped(SkipReason.EXCLUDED_BY_PATTERN)
        return None

    def _robots_allows(self, url: NormalizedUrl) -> bool:
        key = url.authority
        with self._robots_lock:
            if key not in self._robots:
                robots_url = NormalizedUrl(url.scheme, url.host, url.port, "/robots.txt")
                res = fetch(robots_url, self.policy, methods=("GET",), want_body=lambda _ct: True)
                parser = None
                if is_success(res.status) and res.body is not None:
                    parser = robotparser.RobotFileParser()
                    parser.parse(res.body.decode("utf-8", "replace").splitlines())
                self._robots[key] = parser
            parser = self._robots[key]
        return parser is None or parser.can_fetch(self.policy.user_agent, str(url))

    # -- per-URL work (runs on pool threads)

    def _process(self, url: NormalizedUrl, parse: bool) -> _Outcome:
        stop = self._out_of_bounds(url)
        if stop is not None:
            return _Outcome(stop)
        internal = classify_scope(self.seed, url) is Scope.INTERNAL
        if not (internal and parse):
            res = self.gate.run(url, fetch, url, self.policy, follow=self._out_of_bounds)
            return _Outcome(res.status, res.final_url)
        res: FetchResult = self.gate.run(
            url, fetch, url, self.policy, methods=("GET",), want_body=is_html, follow=self._out_of_bounds
        )
        outcome = _Outcome(res.status, res.final_url)
        final = res.final_url or url
        if (
            is_success(res.status)
            and res.body is not None
            and classify_scope(self.seed, final) is Scope.INTERNAL
        ):
            doc = parse_document(res.body, str(final))
            outcome.links = extract_links(doc, final, self.seed)
        return outcome

    # -- driver

    def run(self) -> Report:
        started = now_iso()
        opts = self.options
        st = self.state
        st.frontier = [self.seed]
        st.visited.add(self.seed)
        st.origins[self.seed].append(
            LinkRecord(self.seed, Location(str(self.seed)), SourceKind.CLI_SEED, Scope.INTERNAL, str(self.seed))
        )
        depth = 0
        probed = 0
        with ThreadPoolExecutor(max_workers=opts.concurrency, thread_name_prefix="sitecheck-crawl") as pool:
            while st.frontier:
                level = st.frontier
                st.frontier = []
                may_parse = opts.max_depth is None or depth <= opts.max_depth
                budget = opts.max_pages - len(st.pages)
                plan = []
                for url in level:
                    internal = classify_scope(self.seed, url) is Scope.INTERNAL
                    parse = may_parse and internal and budget > 0
                    if parse:
                        budget -= 1
                    plan.append((url, parse))
                outcomes = list(pool.map(lambda item: self._process(*item), plan))
                for (url, _), outcome in zip(plan, outcomes):
                    st.results[url] = outcome.status
                    if not isinstance(outcome.status, Skipped):
                        probed += 1
                    if url == self.seed and not is_success(outcome.status):
                        return self._seed_failure(outcome.status, started)
                    if outcome.links is None:
                        continue
                    page = outcome.final_url or url
                    if page != url:
                        if page in st.visited:
                            continue
                        st.visited.add(page)
                        st.results[page] = outcome.status
                    st.pages.append(page)
                    for record in outcome.links:
                        if record.target is None:
                            st.unresolved.append(record)
                            continue
                        st.origins[record.target].append(record)
                        if record.target not in st.visited:
                            st.visited.add(record.target)
                            st.frontier.append(record.target)
                depth += 1

        findings = broken_link_findings(st.results, st.origins, self.show, st.unresolved)
        skipped = sum(1 for s in st.results.values() if isinstance(s, Skipped))
        skipped += sum(1 for r in st.unresolved if isinstance(r.preset, Skipped))
        return Report(
            findings=tuple(findings),
            counts={"pages": len(st.pages), "links": probed, "skipped": skipped},
            started=started,
            finished=now_iso(),
            visited=tuple(self.show(p) for p in st.pages),
        )

    def _seed_failure(self, status: CheckStatus, started: str) -> Report:
        finding = Finding.make(
            "LINK_SEED_UNREACHABLE", Location(self.show(self.seed)), f"crawl seed {self.show(self.seed)}: {status.describe()}"
        )
        return Report(findings=(finding,), counts={"pages": 0, "links": 1}, started=started, finished=now_iso())


def crawl(
    seed: NormalizedUrl,
    options: Optional[CrawlOptions] = None,
    show: Callable[[NormalizedUrl], str] = str,
) -> Report:
    """Crawl from *seed*. ``show`` renders URLs into report locations and messages."""
    return _Crawler(seed, options or CrawlOptions(), show).run()

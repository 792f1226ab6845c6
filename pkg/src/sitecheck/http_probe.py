"""Probe a single URL over HTTP and classify the outcome."""

from __future__ import annotations

import http.client
import os
import socket
import ssl
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from sitecheck._version import __version__
from sitecheck.link_model import (
    Broken,
    BrokenReason,
    CheckStatus,
    Finding,
    InvalidUrl,
    Location,
    NormalizedUrl,
    Ok,
    Redirected,
    Report,
    is_success,
    normalize_url,
)

DEFAULT_USER_AGENT = f"sitecheck/{__version__} (+link-audit)"
TIMEOUT_ENV = "SITECHECK_TIMEOUT"
MAX_BODY_BYTES = 16 * 1024 * 1024

# statuses worth another attempt after a backoff
RETRY_STATUSES = frozenset({429, 503})


def _default_timeout() -> float:
    value = os.environ.get(TIMEOUT_ENV)
    if value is None or not value.strip():
        return 10.0
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"{TIMEOUT_ENV} must be a number of seconds, got {value!r}") from None


@dataclass(frozen=True)
class ProbePolicy:
    timeout: float = field(default_factory=_default_timeout)
    retries: int = 2
    backoff: float = 1.0
    redirect_limit: int = 10
    method_order: tuple[str, ...] = ("HEAD", "GET")
    user_agent: str = DEFAULT_USER_AGENT

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.backoff < 0:
            raise ValueError("backoff must be >= 0")
        if self.redirect_limit < 1:
            raise ValueError("redirect_limit must be >= 1")
        methods = tuple(m.upper() for m in self.method_order)
        if not methods or any(m not in ("HEAD", "GET") for m in methods):
            raise ValueError("method_order must be a non-empty list of HEAD/GET")
        object.__setattr__(self, "method_order", methods)

    @property
    def time_budget(self) -> float:
        """Upper bound on wall-clock time spent on one URL."""
        return self.retries * (self.timeout + self.backoff) + self.timeout


@dataclass
class FetchResult:
    status: CheckStatus
    final_url: Optional[NormalizedUrl] = None
    content_type: str = ""
    body: Optional[bytes] = None

    @property
    def media_type(self) -> str:
        return self.content_type.split(";", 1)[0].strip().lower()


@dataclass
class _Response:
    status: int
    location: Optional[str]
    content_type: str
    body: Optional[bytes]


class _NoResponse(Exception):
    def __init__(self, reason: BrokenReason, detail: str = ""):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


def _request(url: NormalizedUrl, method: str, timeout: float, user_agent: str, want_body) -> _Response:
    if url.scheme == "https":
        conn = http.client.HTTPSConnection(
            url.host, url.port, timeout=timeout, context=ssl.create_default_context()
        )
    else:
        conn = http.client.HTTPConnection(url.host, url.port, timeout=timeout)
    try:
        conn.request(
            method,
            url.request_target,
            headers={"User-Agent": user_agent, "Accept": "*/*", "Connection": "close"},
        )
        resp = conn.getresponse()
        content_type = resp.getheader("Content-Type", "") or ""
        body = None
        if method == "GET" and want_body is not None and want_body(content_type):
            body = resp.read(MAX_BODY_BYTES)
        return _Response(resp.status, resp.getheader("Location"), content_type, body)
    finally:
        conn.close()


def _exchange(url, policy: ProbePolicy, methods, want_body, deadline: float) -> _Response:
    """One hop: method fallback inside an attempt, retries across attempts."""
    last = _NoResponse(BrokenReason.TIMEOUT, "time budget exhausted")
    for attempt in range(policy.retries + 1):
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        try:
            resp = None
            for i, method in enumerate(methods):
                resp = _request(url, method, min(policy.timeout, remaining), policy.user_agent, want_body)
                fallback = resp.status in (405, 501) or resp.status >= 500
                if not (fallback and i + 1 < len(methods)):
                    break
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise socket.timeout("time budget exhausted")
            if resp.status in RETRY_STATUSES and attempt < policy.retries:
                _sleep_backoff(policy.backoff, deadline)
                continue
            return resp
        except (socket.timeout, TimeoutError) as exc:
            last = _NoResponse(BrokenReason.TIMEOUT, str(exc) or "timed out")
        except (OSError, http.client.HTTPException, ssl.SSLError) as exc:
            last = _NoResponse(BrokenReason.CONNECTION_FAILED, str(exc) or type(exc).__name__)
        if attempt < policy.retries:
            _sleep_backoff(policy.backoff, deadline)
    raise last


def _sleep_backoff(backoff: float, deadline: float) -> None:
    pause = min(backoff, deadline - time.monotonic())
    if pause > 0:
        time.sleep(pause)


def fetch(
    url: NormalizedUrl,
    policy: ProbePolicy,
    *,
    methods: Optional[tuple[str, ...]] = None,
    want_body: Optional[Callable[[str], bool]] = None,
    follow: Optional[Callable[[NormalizedUrl], Optional[CheckStatus]]] = None,
) -> FetchResult:
    """Request *url*, following redirects, and classify the final response.

    ``want_body`` is called with the Content-Type of a GET response; the body
    is read only when it returns True. ``follow`` is consulted before each
    redirect hop and may stop the chain by returning a status for it.
    """
    methods = methods or policy.method_order
    deadline = time.monotonic() + policy.time_budget
    chain: list[NormalizedUrl] = []
    seen = {url}
    current = url
    while True:
        try:
            resp = _exchange(current, policy, methods, want_body, deadline)
        except _NoResponse as exc:
            return FetchResult(Broken(exc.reason, detail=exc.detail), current)

        if 300 <= resp.status < 400 and resp.status != 304 and resp.location:
            try:
                nxt = normalize_url(current, resp.location)
            except InvalidUrl as exc:
                return FetchResult(Broken(BrokenReason.INVALID_URL, detail=f"redirect: {exc}"), current)
            if nxt in seen or len(chain) >= policy.redirect_limit:
                return FetchResult(Broken(BrokenReason.TOO_MANY_REDIRECTS), current)
            chain.append(nxt)
            seen.add(nxt)
            if follow is not None:
                stop = follow(nxt)
                if stop is not None:
                    return FetchResult(stop, nxt)
            current = nxt
            continue

        if 200 <= resp.status < 300:
            status = Redirected(tuple(chain), resp.status) if chain else Ok(resp.status)
        elif 400 <= resp.status < 600:
            status = Broken(BrokenReason.HTTP_STATUS, resp.status)
        else:
            status = Broken(BrokenReason.CONNECTION_FAILED, detail=f"unexpected HTTP status {resp.status}")
        return FetchResult(status, current, resp.content_type, resp.body)


def probe(url: NormalizedUrl, policy: Optional[ProbePolicy] = None) -> CheckStatus:
    """Classify *url* without downloading bodies."""
    return fetch(url, policy or ProbePolicy()).status


def reach_report(url: NormalizedUrl, policy: Optional[ProbePolicy] = None) -> tuple[Report, CheckStatus]:
    status = probe(url, policy)
    findings = []
    if not is_success(status):
        findings.append(Finding.make("REACH_FAILED", Location(str(url)), status.describe()))
    return Report(findings=tuple(findings), counts={"links": 1}), status


def check_reachable(raw_url: str, policy: Optional[ProbePolicy] = None, out=None, err=None) -> int:
    """Print a success message and return 0 if *raw_url* answers with 2xx; 1 otherwise; 2 if unparsable."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        url = NormalizedUrl.parse(raw_url)
    except InvalidUrl as exc:
        print(f"error: {raw_url!r} is not a valid http(s) URL: {exc}", file=err)
        return 2
    _, status = reach_report(url, policy)
    if is_success(status):
        print(f"{url} is reachable ({status.describe()})", file=out)
        return 0
    print(f"{url} is NOT reachable: {status.describe()}", file=err)
    return 1

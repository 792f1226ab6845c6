"""Find URLs inside the string values of JSON data files and probe them."""

from __future__ import annotations

import bisect
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from json.decoder import scanstring
from pathlib import Path
from typing import Optional

from sitecheck.crawler import HostGate, broken_link_findings, now_iso
from sitecheck.http_probe import ProbePolicy, fetch
from sitecheck.link_model import (
    Broken,
    BrokenReason,
    Finding,
    InvalidUrl,
    LinkRecord,
    Location,
    NormalizedUrl,
    Report,
    Scope,
    Skipped,
    SkipReason,
    SourceKind,
    UnsupportedScheme,
    classify_scope,
    normalize_url,
)

URL_RE = re.compile(r"https?://[A-Za-z0-9._~:/?#\[\]@!$&'()*+,;=%-]+")
TRAILING_PUNCTUATION = ".,;)]"
RELATIVE_KEY_SUFFIXES = ("url", "link", "href")

_WS = re.compile(r"[ \t\n\r]*")
_SCALARS = json.JSONDecoder()


class JsonScanError(ValueError):
    """A JSON file could not be read or parsed; ``finding`` describes where."""

    def __init__(self, finding: Finding):
        super().__init__(finding.message)
        self.finding = finding


@dataclass(frozen=True)
class JsonUrlHit:
    file: str
    json_pointer: str
    line: int
    url_text: str
    relative: bool = False

    @property
    def location(self) -> Location:
        return Location(self.file, self.line)


def trim_url(text: str) -> str:
    return text.rstrip(TRAILING_PUNCTUATION)


def find_urls(text: str) -> list[str]:
    """Every maximal http(s) URL in *text*, trailing sentence punctuation removed."""
    return [trim_url(m.group(0)) for m in URL_RE.finditer(text)]


def _pointer_token(key) -> str:
    return str(key).replace("~", "~0").replace("/", "~1")


def iter_string_values(text: str):
    """Return (json_pointer, member_key, value, offset) for every string value in *text*.

    *text* must already be known to be valid JSON. Object keys are not yielded.
    """
    out = []

    def skip(i):
        return _WS.match(text, i).end()

    def value(i, pointer, key):
        i = skip(i)
        ch = text[i]
        if ch == '"':
            s, end = scanstring(text, i + 1)
            out.append((pointer, key, s, i))
            return end
        if ch == "{":
            i = skip(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                i = skip(i)
                k, i = scanstring(text, i + 1)
                i = skip(i) + 1  # ':'
                i = skip(value(i, f"{pointer}/{_pointer_token(k)}", k))
                if text[i] == ",":
                    i += 1
                    continue
                return i + 1
        if ch == "[":
            i = skip(i + 1)
            if text[i] == "]":
                return i + 1
            index = 0
            while True:
                i = skip(value(i, f"{pointer}/{index}", None))
                index += 1
                if text[i] == ",":
                    i += 1
                    continue
                return i + 1
        _, end = _SCALARS.raw_decode(text, i)
        return end

    value(0, "", None)
    return out


def scan_json_dir(root) -> list[Path]:
    """Every ``*.json`` file under *root*, recursively, in lexicographic path order."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"not a directory: {root}")
    files = [p for p in root.rglob("*.json") if p.is_file()]
    return sorted(files, key=lambda p: p.relative_to(root).as_posix())


def _read_json_text(path: Path) -> str:
    shown = path.as_posix()
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise JsonScanError(
            Finding.make("JSON_UNREADABLE", Location(shown), f"cannot read file: {exc.strerror or exc}")
        ) from None
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        line = data.count(b"\n", 0, exc.start) + 1
        raise JsonScanError(
            Finding.make("JSON_PARSE_ERROR", Location(shown, line), "file is not valid UTF-8")
        ) from None


def extract_urls(file, base_for_relatives: Optional[NormalizedUrl] = None) -> list[JsonUrlHit]:
    """Parse *file* and return one hit per URL found in its string values.

    With *base_for_relatives*, a whole string value under a key ending in
    url/link/href that holds no absolute URL is also reported, as a relative hit.
    Raises :class:`JsonScanError` for unreadable or malformed files.
    """
    path = Path(file)
    shown = path.as_posix()
    text = _read_json_text(path)
    try:
        json.loads(text)
    except json.JSONDecodeError as exc:
        raise JsonScanError(
            Finding.make("JSON_PARSE_ERROR", Location(shown, exc.lineno, exc.colno), f"invalid JSON: {exc.msg}")
        ) from None
    except RecursionError:
        raise JsonScanError(Finding.make("JSON_PARSE_ERROR", Location(shown), "JSON nesting too deep")) from None

    newlines = [i for i, ch in enumerate(text) if ch == "\n"]
    hits = []
    for pointer, key, value, offset in iter_string_values(text):
        line = bisect.bisect_left(newlines, offset) + 1
        urls = find_urls(value)
        for url in urls:
            hits.append(JsonUrlHit(shown, pointer, line, url))
        if (
            not urls
            and base_for_relatives is not None
            and key is not None
            and key.lower().endswith(RELATIVE_KEY_SUFFIXES)
            and value.strip()
            and not any(c.isspace() for c in value.strip())
        ):
            hits.append(JsonUrlHit(shown, pointer, line, value.strip(), relative=True))
    return hits


def check_json_links(
    root,
    probe_policy: Optional[ProbePolicy] = None,
    base_for_relatives: Optional[NormalizedUrl] = None,
    concurrency: int = 8,
    per_host_concurrency: int = 2,
) -> Report:
    """Probe each distinct URL found in the JSON files under *root* once."""
    started = now_iso()
    policy = probe_policy or ProbePolicy()
    files = scan_json_dir(root)
    findings: list[Finding] = []
    origins: dict[NormalizedUrl, list[LinkRecord]] = {}
    unresolved: list[LinkRecord] = []
    hit_count = 0
    for path in files:
        try:
            hits = extract_urls(path, base_for_relatives)
        except JsonScanError as exc:
            findings.append(exc.finding)
            continue
        hit_count += len(hits)
        for hit in hits:
            try:
                target = normalize_url(base_for_relatives, hit.url_text)
            except UnsupportedScheme:
                unresolved.append(LinkRecord(None, hit.location, SourceKind.JSON_STRING, None, hit.url_text,
                                             hit.json_pointer, Skipped(SkipReason.SCHEME_UNSUPPORTED)))
                continue
            except InvalidUrl as exc:
                unresolved.append(LinkRecord(None, hit.location, SourceKind.JSON_STRING, None, hit.url_text,
                                             hit.json_pointer, Broken(BrokenReason.INVALID_URL, detail=str(exc))))
                continue
            scope = classify_scope(base_for_relatives, target) if base_for_relatives else Scope.EXTERNAL
            origins.setdefault(target, []).append(
                LinkRecord(target, hit.location, SourceKind.JSON_STRING, scope, hit.url_text, hit.json_pointer)
            )

    targets = sorted(origins)
    gate = HostGate(per_host_concurrency)
    with ThreadPoolExecutor(max_workers=concurrency, thread_name_prefix="sitecheck-json") as pool:
        statuses = list(pool.map(lambda u: gate.run(u, fetch, u, policy).status, targets))
    results = dict(zip(targets, statuses))
    findings.extend(broken_link_findings(results, origins, unresolved=unresolved))
    return Report(
        findings=tuple(findings),
        counts={"json_files": len(files), "urls": hit_count, "links": len(targets)},
        started=started,
        finished=now_iso(),
    )

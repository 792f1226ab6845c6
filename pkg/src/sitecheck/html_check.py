"""Tolerant HTML parsing, structural validation, and link extraction.

The checks are a deliberately small, high-signal subset of HTML5 conformance:
doctype presence, tag balance, void-element end tags, duplicate ids, unknown
element names and unquoted attribute values containing markup characters.
Content models and per-element attribute rules are not checked.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Optional

from sitecheck.link_model import (
    Broken,
    BrokenReason,
    Finding,
    InvalidUrl,
    LinkRecord,
    Location,
    NormalizedUrl,
    Report,
    Skipped,
    SkipReason,
    SourceKind,
    UnsupportedScheme,
    classify_scope,
    normalize_url,
)

VOID_ELEMENTS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)

KNOWN_ELEMENTS = frozenset(
    """
    a abbr address area article aside audio b base bdi bdo blockquote body br button
    canvas caption cite code col colgroup data datalist dd del details dfn dialog div
    dl dt em embed fieldset figcaption figure footer form h1 h2 h3 h4 h5 h6 head header
    hgroup hr html i iframe img input ins kbd label legend li link main map mark menu
    meta meter nav noscript object ol optgroup option output p param picture pre
    progress q rp rt ruby s samp script search section select slot small source span
    strong style sub summary sup table tbody td template textarea tfoot th thead time
    title tr track u ul var video wbr svg math
    """.split()
)

# Elements inside these are foreign content (SVG/MathML vocabularies).
FOREIGN_ROOTS = frozenset({"svg", "math"})

# Elements whose end tag HTML allows to be omitted; never reported as unclosed.
# "p" is intentionally absent: an unterminated paragraph is reported.
OPTIONAL_END = frozenset(
    "html head body li dt dd option optgroup tr td th thead tbody tfoot colgroup caption rt rp".split()
)

# start tag -> open elements it implicitly closes when they are current
IMPLIED_CLOSE = {
    "li": {"li"},
    "dt": {"dt", "dd"},
    "dd": {"dt", "dd"},
    "option": {"option"},
    "optgroup": {"option", "optgroup"},
    "tr": {"tr", "td", "th"},
    "td": {"td", "th"},
    "th": {"td", "th"},
    "thead": {"thead", "tbody", "tfoot", "tr", "td", "th", "caption", "colgroup"},
    "tbody": {"thead", "tbody", "tfoot", "tr", "td", "th", "caption", "colgroup"},
    "tfoot": {"thead", "tbody", "tfoot", "tr", "td", "th", "caption", "colgroup"},
    "rt": {"rt", "rp"},
    "rp": {"rt", "rp"},
    "body": {"head"},
}

# element -> attributes holding a single URL
URL_ATTRS = {
    "a": ("href",),
    "link": ("href",),
    "area": ("href",),
    "img": ("src", "srcset"),
    "script": ("src",),
    "iframe": ("src",),
    "source": ("src", "srcset"),
    "audio": ("src",),
    "video": ("src",),
    "embed": ("src",),
    "track": ("src",),
    "form": ("action",),
}

HTML_CODES = (
    "HTML_NO_DOCTYPE",
    "HTML_UNCLOSED_TAG",
    "HTML_STRAY_END_TAG",
    "HTML_VOID_END_TAG",
    "HTML_DUPLICATE_ID",
    "HTML_UNKNOWN_ELEMENT",
    "HTML_UNQUOTED_SPECIAL_ATTR",
)

_TAG_NAME_RE = re.compile(r"<[a-zA-Z][^\t\n\r\f />\x00]*(?:\s|/(?!>))*")
# same tokenization html.parser applies to attributes
_ATTR_RE = re.compile(
    r"""((?<=['"\s/])[^\s/>][^\s/=>]*)(\s*=+\s*('[^']*'|"[^"]*"|(?!['"])[^>\s]*))?(?:\s|/(?!>))*"""
)


@dataclass
class Attribute:
    name: str
    value: Optional[str]
    line: int
    column: int
    quoted: bool = True
    raw_value: Optional[str] = None


@dataclass
class Element:
    tag: str
    line: int
    column: int
    attrs: list[Attribute] = field(default_factory=list)
    children: list[Element] = field(default_factory=list)
    foreign: bool = False

    def get(self, name: str) -> Optional[Attribute]:
        for attr in self.attrs:
            if attr.name == name:
                return attr
        return None

    def iter(self) -> Iterable[Element]:
        """Elements of this subtree in document order, self first."""
        stack = [self]
        while stack:
            el = stack.pop()
            yield el
            stack.extend(reversed(el.children))


@dataclass
class ParseError:
    code: str
    tag: str
    line: int
    column: int
    message: str


@dataclass
class DocTree:
    path: str
    root: Element
    errors: list[ParseError] = field(default_factory=list)
    has_doctype: bool = False
    line_count: int = 1
    utf8_error_line: Optional[int] = None

    def elements(self) -> Iterable[Element]:
        it = self.root.iter()
        next(it)
        return it


@dataclass(frozen=True)
class HtmlRuleSet:
    void_elements: frozenset = VOID_ELEMENTS
    known_elements: frozenset = KNOWN_ELEMENTS
    disabled: frozenset = frozenset()

    def __post_init__(self):
        if not self.void_elements <= self.known_elements:
            raise ValueError("void elements must be known elements")
        unknown = set(self.disabled) - set(HTML_CODES) - {"HTML_INVALID_UTF8"}
        if unknown:
            raise ValueError(f"unknown HTML rule(s): {', '.join(sorted(unknown))}")

    def enabled(self, code: str) -> bool:
        return code not in self.disabled


class _TreeBuilder(HTMLParser):
    def __init__(self, doc: DocTree):
        super().__init__(convert_charrefs=True)
        self.doc = doc
        self.stack: list[Element] = [doc.root]
        self.seen_element = False

    # -- helpers

    def _pos(self) -> tuple[int, int]:
        line, col0 = self.getpos()
        return line, col0 + 1

    def _error(self, code, tag, line, column, message):
        self.doc.errors.append(ParseError(code, tag, line, column, message))

    def _close_top(self):
        el = self.stack.pop()
        if el.tag not in OPTIONAL_END:
            self._error(
                "HTML_UNCLOSED_TAG", el.tag, el.line, el.column,
                f"<{el.tag}> opened here is never closed",
            )

    def _attributes(self, attrs) -> list[Attribute]:
        line, column = self._pos()
        raw = self.get_starttag_text() or ""
        result = []
        m = _TAG_NAME_RE.match(raw)
        spans = []
        k = m.end() if m else len(raw)
        while k < len(raw):
            am = _ATTR_RE.match(raw, k)
            if not am:
                break
            spans.append((am.start(1), am.group(3)))
            k = am.end()
        aligned = len(spans) == len(attrs)
        for i, (name, value) in enumerate(attrs):
            a_line, a_col = line, column
            raw_value, quoted = None, True
            if aligned:
                offset, raw_value = spans[i]
                before = raw[:offset]
                newlines = before.count("\n")
                a_line = line + newlines
                a_col = (column + offset) if newlines == 0 else offset - before.rfind("\n")
                quoted = raw_value is None or raw_value[:1] in ("'", '"')
            result.append(Attribute(name.lower(), value, a_line, a_col, quoted, raw_value))
        return result

    # -- HTMLParser callbacks

    def handle_decl(self, decl):
        tokens = decl.lower().split()
        if tokens[:2] == ["doctype", "html"] and not self.seen_element:
            self.doc.has_doctype = True

    def handle_starttag(self, tag, attrs):
        self._start(tag, attrs, self_closing=False)

    def handle_startendtag(self, tag, attrs):
        self._start(tag, attrs, self_closing=True)

    def _start(self, tag, attrs, self_closing):
        self.seen_element = True
        line, column = self._pos()
        parent = self.stack[-1]
        implied = IMPLIED_CLOSE.get(tag)
        if implied and not parent.foreign:
            while len(self.stack) > 1 and self.stack[-1].tag in implied:
                self.stack.pop()
            parent = self.stack[-1]
        el = Element(tag, line, column, self._attributes(attrs))
        el.foreign = parent.foreign or tag in FOREIGN_ROOTS
        parent.children.append(el)
        if self_closing or (tag in VOID_ELEMENTS and not parent.foreign):
            return
        self.stack.append(el)

    def handle_endtag(self, tag):
        line, column = self._pos()
        top = self.stack[-1]
        if tag in VOID_ELEMENTS and not top.foreign:
            self._error("HTML_VOID_END_TAG", tag, line, column, f"</{tag}> end tag for void element <{tag}>")
            return
        for depth in range(len(self.stack) - 1, 0, -1):
            if self.stack[depth].tag == tag:
                while len(self.stack) - 1 > depth:
                    self._close_top()
                self.stack.pop()
                return
        self._error("HTML_STRAY_END_TAG", tag, line, column, f"</{tag}> has no matching open element")

    def finish(self):
        while len(self.stack) > 1:
            self._close_top()


def parse_document(data, path: str = "<string>") -> DocTree:
    """Parse HTML bytes or text into a DocTree. Never raises on malformed input."""
    utf8_error_line = None
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            utf8_error_line = data.count(b"\n", 0, exc.start) + 1
            text = data.decode("utf-8", errors="replace")
    else:
        text = data
    if text.startswith("\ufeff"):
        text = text[1:]
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    doc = DocTree(
        path=str(path),
        root=Element("#document", 1, 1),
        line_count=max(1, text.count("\n") + (0 if text.endswith("\n") else 1)),
        utf8_error_line=utf8_error_line,
    )
    builder = _TreeBuilder(doc)
    try:
        builder.feed(text)
        builder.close()
    except Exception as exc:  # html.parser can assert on pathological markup
        line, column = builder._pos()
        doc.errors.append(ParseError("HTML_STRAY_END_TAG", "", line, column, f"tokenizer gave up: {exc}"))
    builder.finish()
    return doc


def _clamp(doc: DocTree, line: int, column: Optional[int] = None) -> Location:
    return Location(doc.path, min(max(line, 1), doc.line_count), column)


def validate_structure(doc: DocTree, rules: Optional[HtmlRuleSet] = None) -> list[Finding]:
    rules = rules or HtmlRuleSet()
    findings: list[Finding] = []

    def emit(code, line, column, message, related=()):
        if rules.enabled(code):
            findings.append(Finding.make(code, _clamp(doc, line, column), message, related))

    if doc.utf8_error_line is not None:
        emit("HTML_INVALID_UTF8", doc.utf8_error_line, None, "invalid UTF-8 bytes replaced with U+FFFD")
    if not doc.has_doctype:
        emit("HTML_NO_DOCTYPE", 1, None, "missing <!DOCTYPE html> before the first element")
    for err in doc.errors:
        emit(err.code, err.line, err.column, err.message)

    ids = defaultdict(list)
    unknown: dict[str, list[Element]] = defaultdict(list)
    for el in doc.elements():
        if not el.foreign and el.tag not in rules.known_elements:
            unknown[el.tag].append(el)
        for attr in el.attrs:
            if attr.name == "id" and attr.value and attr.value.strip():
                ids[attr.value].append(attr)
            if not attr.quoted and attr.raw_value and any(c in attr.raw_value for c in '<>"'):
                emit(
                    "HTML_UNQUOTED_SPECIAL_ATTR", attr.line, attr.column,
                    f"unquoted value for {attr.name}= contains markup characters: {attr.raw_value}",
                )
    for value, attrs in ids.items():
        if len(attrs) > 1:
            lines = ", ".join(str(a.line) for a in attrs)
            emit(
                "HTML_DUPLICATE_ID", attrs[1].line, attrs[1].column,
                f'id "{value}" used {len(attrs)} times (lines {lines})',
                related=[_clamp(doc, a.line, a.column) for a in attrs],
            )
    for tag, els in unknown.items():
        times = f" ({len(els)} occurrences)" if len(els) > 1 else ""
        emit("HTML_UNKNOWN_ELEMENT", els[0].line, els[0].column, f"<{tag}> is not an HTML5 element{times}")
    findings.sort(key=Finding.sort_key)
    return findings


def _attr_urls(attr: Attribute) -> list[str]:
    value = attr.value or ""
    if attr.name == "srcset":
        return [c.split()[0] for c in value.split(",") if c.strip()]
    return [value] if value.strip() else []


def extract_links(doc: DocTree, base: NormalizedUrl, seed: Optional[NormalizedUrl] = None) -> list[LinkRecord]:
    """Collect link records from URL-bearing attributes, resolved against *base*.

    A ``<base href>`` in the document overrides *base*. Scope is judged
    against *seed* (defaults to *base*). Script-generated links are not seen.
    """
    seed = seed or base
    for el in doc.elements():
        if el.tag == "base" and el.get("href") is not None:
            try:
                base = normalize_url(base, el.get("href").value or "")
            except InvalidUrl:
                pass
            break

    records: list[LinkRecord] = []
    for el in doc.elements():
        attr_names = URL_ATTRS.get(el.tag)
        if not attr_names or el.foreign:
            continue
        for attr in el.attrs:
            if attr.name not in attr_names:
                continue
            origin = _clamp(doc, attr.line, attr.column)
            for raw in _attr_urls(attr):
                try:
                    target = normalize_url(base, raw)
                except UnsupportedScheme:
                    records.append(LinkRecord(None, origin, SourceKind.HTML_ATTR, None, raw, attr.name,
                                              Skipped(SkipReason.SCHEME_UNSUPPORTED)))
                    continue
                except InvalidUrl as exc:
                    records.append(LinkRecord(None, origin, SourceKind.HTML_ATTR, None, raw, attr.name,
                                              Broken(BrokenReason.INVALID_URL, detail=str(exc))))
                    continue
                records.append(LinkRecord(target, origin, SourceKind.HTML_ATTR,
                                          classify_scope(seed, target), raw, attr.name))
    return records


def find_html_files(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"not a directory: {root}")
    files = [p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in (".html", ".htm")]
    return sorted(files, key=lambda p: p.relative_to(root).as_posix())


def check_html_file(path, rules: Optional[HtmlRuleSet] = None) -> list[Finding]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        return [Finding.make("HTML_UNREADABLE", Location(path.as_posix()), f"cannot read file: {exc.strerror or exc}")]
    return validate_structure(parse_document(data, path.as_posix()), rules)


def check_html_tree(root, rules: Optional[HtmlRuleSet] = None) -> Report:
    """Validate every .html/.htm file under *root*."""
    files = find_html_files(root)
    findings: list[Finding] = []
    for path in files:
        findings.extend(check_html_file(path, rules))
    return Report(findings=tuple(findings), counts={"html_files": len(files)})

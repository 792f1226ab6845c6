"""Check that user XML configuration files only use tags defined by a main file.

Tags are compared as root-relative element paths, so a correctly spelled tag
placed under the wrong parent is reported too. Attributes, text, element order
and multiplicity are ignored.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union
from xml.parsers import expat

from sitecheck.link_model import Finding, Location, Report

TagPath = tuple[str, ...]
DEFAULT_PATTERN = "*user*.xml"


class XmlCheckError(ValueError):
    """Raised when an XML file cannot be read or parsed; ``finding`` has the details."""

    def __init__(self, finding: Finding):
        super().__init__(str(finding.location) + ": " + finding.message)
        self.finding = finding


@dataclass(frozen=True)
class TagUniverse:
    paths: frozenset
    source: str

    def __contains__(self, path) -> bool:
        return tuple(path) in self.paths

    def __len__(self) -> int:
        return len(self.paths)

    def is_prefix_closed(self) -> bool:
        return all(p[:i] in self.paths for p in self.paths for i in range(1, len(p)))


def read_tag_paths(xml_file) -> dict[TagPath, tuple[int, int]]:
    """Map every element path in *xml_file* to the (line, column) of its first occurrence."""
    path = Path(xml_file)
    shown = path.as_posix()
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise XmlCheckError(
            Finding.make("XML_UNREADABLE", Location(shown), f"cannot read file: {exc.strerror or exc}")
        ) from None

    parser = expat.ParserCreate()
    stack: list[str] = []
    found: dict[TagPath, tuple[int, int]] = {}

    def start(name, _attrs):
        stack.append(name)
        key = tuple(stack)
        if key not in found:
            found[key] = (parser.CurrentLineNumber, parser.CurrentColumnNumber + 1)

    def end(_name):
        stack.pop()

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    try:
        parser.Parse(data, True)
    except expat.ExpatError as exc:
        raise XmlCheckError(
            Finding.make(
                "XML_PARSE_ERROR",
                Location(shown, max(exc.lineno, 1), exc.offset + 1),
                f"malformed XML: {expat.ErrorString(exc.code)}",
            )
        ) from None
    return found


def collect_tag_paths(xml_file) -> TagUniverse:
    """The set of element paths defined by *xml_file*."""
    return TagUniverse(frozenset(read_tag_paths(xml_file)), Path(xml_file).as_posix())


def unknown_paths(user_paths: Iterable[TagPath], universe: TagUniverse) -> list[TagPath]:
    """Paths of *user_paths* missing from *universe*, sorted."""
    return sorted(p for p in set(user_paths) if p not in universe)


def validate_user_file(user_file, universe: TagUniverse) -> list[Finding]:
    """One XML_UNKNOWN_TAG per element path absent from *universe*.

    A misspelled element with children yields one finding for itself and one
    per distinct path beneath it; extending the main file can only remove findings.
    """
    shown = Path(user_file).as_posix()
    try:
        paths = read_tag_paths(user_file)
    except XmlCheckError as exc:
        return [exc.finding]
    findings = []
    for p in sorted(unknown_paths(paths, universe), key=paths.get):
        line, column = paths[p]
        findings.append(
            Finding.make(
                "XML_UNKNOWN_TAG",
                Location(shown, line, column),
                f"<{p[-1]}> at {'/'.join(p)} is not defined in {universe.source}",
            )
        )
    return findings


def find_user_files(root, pattern: str = DEFAULT_PATTERN) -> list[Path]:
    """Files under *root* whose name matches *pattern*, recursively, in lexicographic path order."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"not a directory: {root}")
    files = [p for p in root.rglob("*") if p.is_file() and fnmatch.fnmatchcase(p.name, pattern)]
    return sorted(files, key=lambda p: p.relative_to(root).as_posix())


def check_xml_tree(main, roots: Union[str, Path, Iterable], pattern: str = DEFAULT_PATTERN) -> Report:
    """Validate every user file under *roots* against *main*.

    Raises :class:`XmlCheckError` if *main* itself cannot be parsed.
    """
    if isinstance(roots, (str, Path)):
        roots = [roots]
    universe = collect_tag_paths(main)
    main_resolved = Path(main).resolve()
    files: list[Path] = []
    for root in roots:
        files.extend(p for p in find_user_files(root, pattern) if p.resolve() != main_resolved)
    files = list(dict.fromkeys(files))
    findings: list[Finding] = []
    for path in files:
        findings.extend(validate_user_file(path, universe))
    return Report(findings=tuple(findings), counts={"xml_files": len(files), "main_paths": len(universe)})

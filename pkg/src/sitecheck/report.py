"""Render reports as text, JSON or CI annotations; exit codes; CI workflow scaffolds."""

from __future__ import annotations

import json
import re
from dataclasses import replace
from importlib import resources
from typing import Optional

from sitecheck.link_model import Finding, Location, Report, Severity

FORMATS = ("text", "json", "github")
SCHEMA_VERSION = 1

CHECKOUT_ACTION = "actions/checkout"
CHECKOUT_VERSION = "v4"  # the original hand-written workflows pinned v2
SETUP_PYTHON = "actions/setup-python@v5"
INSTALL_COMMAND = "pip install sitecheck"

WORKFLOW_KINDS = {
    # kind: (job id, step name, command)
    "html": ("validate", "HTML Validation", "sitecheck html ./ --format github"),
    "links": (
        "link-check",
        "Run Link Checker",
        "sitecheck crawl --serve ./ --seed /nav.html --external --format github",
    ),
    "json-links": ("json-links", "Check JSON File Links", "sitecheck json-links ./data --format github"),
    "xml-subset": (
        "xml-subset",
        "Check User XML Files",
        "sitecheck xml-subset --main config/main.xml --roots ./ --format github",
    ),
}

_SCHEDULE_RE = re.compile(r"^([01]?\d|2[0-3]):([0-5]\d)$")


def exit_code(report: Report) -> int:
    """0 when the report holds no error-severity findings, else 1."""
    return 1 if any(f.severity is Severity.ERROR for f in report.findings) else 0


def promote_warnings(report: Report) -> Report:
    """Strict mode: every warning becomes an error."""
    findings = tuple(replace(f, severity=Severity.ERROR) for f in report.findings)
    return replace(report, findings=findings)


# -- text


def _summary(report: Report) -> str:
    errors, warnings = len(report.errors), len(report.warnings)
    line = f"{errors} error{'s' if errors != 1 else ''}, {warnings} warning{'s' if warnings != 1 else ''}"
    if report.counts:
        line += "; checked " + ", ".join(f"{k}={v}" for k, v in report.counts.items())
    return line


def render_text(report: Report) -> str:
    lines = [
        f"{f.severity.value.upper()} {f.machine_code} {f.location} {f.message}" for f in report.findings
    ]
    lines.append(_summary(report))
    return "\n".join(lines) + "\n"


# -- json


def _location_json(loc: Location) -> dict:
    return {"path": loc.path, "line": loc.line, "column": loc.column}


def _finding_json(f: Finding) -> dict:
    return {
        "check": f.check.value,
        "severity": f.severity.value,
        "code": f.machine_code,
        "location": _location_json(f.location),
        "message": f.message,
        "related": [_location_json(r) for r in f.related],
    }


def report_to_dict(report: Report) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "sitecheck",
        "version": report.version,
        "started": report.started,
        "finished": report.finished,
        "summary": {"errors": len(report.errors), "warnings": len(report.warnings)},
        "counts": dict(report.counts),
        "visited": list(report.visited),
        "findings": [_finding_json(f) for f in report.findings],
    }


def render_json(report: Report) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"


def load_schema() -> dict:
    """The JSON Schema every ``--format json`` report validates against."""
    text = resources.files("sitecheck").joinpath("schemas/report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


# -- github annotations


def _escape_data(text: str) -> str:
    return text.replace("%", "%25").replace("\r", "%0D").replace("\n", "%0A")


def _escape_property(text: str) -> str:
    return _escape_data(text).replace(":", "%3A").replace(",", "%2C")


def render_github(report: Report) -> str:
    lines = []
    for f in report.findings:
        kind = "error" if f.severity is Severity.ERROR else "warning"
        props = f"file={_escape_property(f.location.path)}"
        if f.location.line is not None:
            props += f",line={f.location.line}"
        lines.append(f"::{kind} {props}::{_escape_data(f.machine_code + ': ' + f.message)}")
    return "".join(line + "\n" for line in lines)


def render(report: Report, fmt: str = "text") -> str:
    if fmt == "text":
        return render_text(report)
    if fmt == "json":
        return render_json(report)
    if fmt == "github":
        return render_github(report)
    raise ValueError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")


# -- workflow scaffolding


def parse_schedule(schedule: str) -> str:
    """Turn ``HH:MM`` (UTC) into a daily cron expression."""
    m = _SCHEDULE_RE.match(schedule.strip())
    if not m:
        raise ValueError(f"schedule must be HH:MM (24-hour, UTC), got {schedule!r}")
    hour, minute = int(m.group(1)), int(m.group(2))
    return f"{minute} {hour} * * *"


def scaffold_workflow(
    kind: str,
    schedule: Optional[str] = None,
    checkout_version: str = CHECKOUT_VERSION,
    command: Optional[str] = None,
    install: str = INSTALL_COMMAND,
) -> str:
    """Return GitHub Actions workflow YAML running one sitecheck subcommand."""
    if kind not in WORKFLOW_KINDS:
        raise ValueError(f"unknown workflow kind {kind!r}; expected one of {', '.join(WORKFLOW_KINDS)}")
    job, step, default_command = WORKFLOW_KINDS[kind]
    triggers = [
        "on:",
        "  push:",
        "    branches: [main]",
        "  pull_request:",
        "    branches: [main]",
    ]
    if schedule is not None:
        triggers += ["  schedule:", f"    - cron: '{parse_schedule(schedule)}'"]
    body = [
        "jobs:",
        f"  {job}:",
        "    runs-on: ubuntu-latest",
        "    steps:",
        "      - name: Checkout Repository",
        f"        uses: {CHECKOUT_ACTION}@{checkout_version}",
        "",
        "      - name: Set up Python",
        f"        uses: {SETUP_PYTHON}",
        "        with:",
        "          python-version: '3.x'",
        "",
        "      - name: Install sitecheck",
        f"        run: {install}",
        "",
        f"      - name: {step}",
        "        run: |",
        f"          {command or default_command}",
    ]
    return "\n".join([f"name: sitecheck {kind}", "", *triggers, "", *body]) + "\n"

"""``sitecheck`` command line: subcommand dispatch, config loading, exit codes.

Exit codes: 0 no error findings, 1 error findings, 2 usage or internal error.
Settings resolve as command-line flag, then ``sitecheck.json``, then built-in default.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
from pathlib import Path
from typing import Optional

from sitecheck._version import __version__
from sitecheck.crawler import CrawlOptions, crawl
from sitecheck.html_check import HTML_CODES, HtmlRuleSet, check_html_tree
from sitecheck.http_probe import DEFAULT_USER_AGENT, ProbePolicy, reach_report
from sitecheck.json_links import check_json_links
from sitecheck.link_model import InvalidUrl, NormalizedUrl, Report, is_success
from sitecheck.report import (
    CHECKOUT_VERSION,
    FORMATS,
    WORKFLOW_KINDS,
    exit_code,
    promote_warnings,
    render,
    scaffold_workflow,
)
from sitecheck.static_server import ServerStartError, serve, serve_and_crawl
from sitecheck.xml_subset import DEFAULT_PATTERN, XmlCheckError, check_xml_tree

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2
CONFIG_FILE = "sitecheck.json"

DEFAULTS = {
    "format": "text",
    "strict": False,
    "no_timestamps": False,
    "timeout": None,  # ProbePolicy default, or SITECHECK_TIMEOUT
    "retries": 2,
    "backoff": 1.0,
    "redirect_limit": 10,
    "method_order": ["HEAD", "GET"],
    "user_agent": DEFAULT_USER_AGENT,
    "concurrency": 8,
    "per_host_concurrency": 2,
    "external": False,
    "max_pages": 10000,
    "depth": None,
    "exclude": [],
    "delay": 0.0,
    "respect_robots": False,
    "seed": "/index.html",
    "allow": [],
    "pattern": DEFAULT_PATTERN,
    "base": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n\n{self.format_usage()}".rstrip())


def load_config(path: Optional[str]) -> dict:
    """Read a JSON config; *path* None means ./sitecheck.json if present."""
    if path is None:
        candidate = Path(CONFIG_FILE)
        if not candidate.is_file():
            return {}
    else:
        candidate = Path(path)
    try:
        data = json.loads(candidate.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {candidate}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {candidate} must hold a JSON object")
    config = {key.replace("-", "_"): value for key, value in data.items()}
    unknown = sorted(set(config) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"unknown setting(s) in {candidate}: {', '.join(unknown)}")
    return config


def _common(parser):
    g = parser.add_argument_group("output")
    g.add_argument("--format", choices=FORMATS, default=None, help="report format (default: text)")
    g.add_argument("--strict", action="store_true", default=None, help="treat warnings as errors")
    g.add_argument("--no-timestamps", action="store_true", default=None,
                   help="omit run timestamps so reports are byte-comparable")
    g.add_argument("--config", metavar="FILE", default=None, help=f"JSON settings file (default: ./{CONFIG_FILE})")


def _probe_flags(parser):
    g = parser.add_argument_group("HTTP probing")
    g.add_argument("--timeout", type=float, default=None, help="seconds per request (default 10, env SITECHECK_TIMEOUT)")
    g.add_argument("--retries", type=int, default=None, help="retries after connection failures (default 2)")
    g.add_argument("--backoff", type=float, default=None, help="seconds between retries (default 1)")
    g.add_argument("--redirect-limit", type=int, default=None, help="maximum redirects followed (default 10)")
    g.add_argument("--method-order", default=None, metavar="M1,M2",
                   help="request methods to try, e.g. HEAD,GET (default) or GET")
    g.add_argument("--user-agent", default=None, help="User-Agent header")
    g.add_argument("--concurrency", type=int, default=None, help="parallel requests (default 8)")
    g.add_argument("--per-host-concurrency", type=int, default=None, help="parallel requests per host (default 2)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sitecheck", description="Static-site quality checks for CI.")
    parser.add_argument("--version", action="version", version=f"sitecheck {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("reach", help="check that one URL answers with a 2xx status")
    p.add_argument("url")
    _probe_flags(p)
    _common(p)

    p = sub.add_parser("crawl", help="crawl a site and report broken links")
    p.add_argument("url", nargs="?", help="seed URL (omit with --serve)")
    p.add_argument("--serve", metavar="DIR", default=None, help="serve DIR locally and crawl that instead of a URL")
    p.add_argument("--seed", metavar="PATH", default=None, help="seed path under --serve (default /index.html)")
    p.add_argument("--external", action="store_true", default=None, help="also check external links")
    p.add_argument("--max-pages", type=int, default=None, help="maximum pages parsed (default 10000)")
    p.add_argument("--depth", type=int, default=None, help="maximum link depth of parsed pages")
    p.add_argument("--exclude", action="append", default=None, metavar="PAT",
                   help="skip URLs matching a glob, or a regex prefixed 're:' (repeatable)")
    p.add_argument("--delay", type=float, default=None, help="seconds between requests to one host")
    p.add_argument("--respect-robots", action="store_true", default=None, help="honor robots.txt")
    _probe_flags(p)
    _common(p)

    p = sub.add_parser("html", help="validate the structure of every HTML file under DIR")
    p.add_argument("dir")
    p.add_argument("--allow", action="append", default=None, metavar="CODE", choices=HTML_CODES,
                   help="disable one rule by machine code (repeatable)")
    _common(p)

    p = sub.add_parser("json-links", help="check URLs found in JSON files under DIR")
    p.add_argument("dir")
    p.add_argument("--base", metavar="URL", default=None,
                   help="resolve relative values of *url/*link/*href keys against URL")
    _probe_flags(p)
    _common(p)

    p = sub.add_parser("xml-subset", help="check user XML files only use tags from a main XML file")
    p.add_argument("--main", required=True, metavar="FILE", help="main XML file defining allowed tags")
    p.add_argument("--roots", required=True, nargs="+", action="extend", metavar="DIR",
                   help="directories searched for user files")
    p.add_argument("--pattern", default=None, metavar="GLOB", help=f"user file name pattern (default {DEFAULT_PATTERN})")
    _common(p)

    p = sub.add_parser("serve", help="serve a directory over HTTP for manual inspection")
    p.add_argument("dir")
    p.add_argument("--port", type=int, default=8000, help="port (0 picks a free one; default 8000)")
    p.add_argument("--bind", default="127.0.0.1", help="address to bind (default 127.0.0.1)")

    p = sub.add_parser("ci-init", help="print a GitHub Actions workflow running one check")
    p.add_argument("kind", choices=list(WORKFLOW_KINDS))
    p.add_argument("--schedule", metavar="HH:MM", default=None, help="also run daily at this UTC time")
    p.add_argument("--checkout-version", default=CHECKOUT_VERSION, help=f"actions/checkout version (default {CHECKOUT_VERSION})")
    p.add_argument("--command", dest="step_command", default=None, help="override the sitecheck command line in the check step")
    p.add_argument("--output", "-o", metavar="FILE", default=None, help="write to FILE instead of stdout")
    return parser


class _Settings:
    def __init__(self, args, config):
        self.args = args
        self.config = config

    def __getattr__(self, name):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.config:
            return self.config[name]
        return DEFAULTS[name]

    def policy(self) -> ProbePolicy:
        methods = self.method_order
        if isinstance(methods, str):
            methods = [m for m in methods.split(",") if m.strip()]
        kwargs = dict(
            retries=self.retries,
            backoff=self.backoff,
            redirect_limit=self.redirect_limit,
            method_order=tuple(m.strip() for m in methods),
            user_agent=self.user_agent,
        )
        if self.timeout is not None:
            kwargs["timeout"] = self.timeout
        return ProbePolicy(**kwargs)

    def crawl_options(self) -> CrawlOptions:
        concurrency = self.concurrency
        return CrawlOptions(
            check_external=bool(self.external),
            max_pages=self.max_pages,
            max_depth=self.depth,
            concurrency=concurrency,
            per_host_concurrency=min(self.per_host_concurrency, concurrency),
            exclude_patterns=tuple(self.exclude),
            probe_policy=self.policy(),
            delay=self.delay,
            respect_robots=bool(self.respect_robots),
        )


def _emit(report: Report, settings: _Settings, out) -> int:
    if settings.strict:
        report = promote_warnings(report)
    if settings.no_timestamps:
        report = report.without_timestamps()
    out.write(render(report, settings.format))
    return exit_code(report)


def _parse_url(text: str) -> NormalizedUrl:
    try:
        return NormalizedUrl.parse(text)
    except InvalidUrl as exc:
        raise UsageError(f"invalid URL {text!r}: {exc}") from None


def cmd_reach(s: _Settings, out, err) -> int:
    url = _parse_url(s.args.url)
    report, status = reach_report(url, s.policy())
    if s.format == "text":
        if is_success(status):
            out.write(f"{url} is reachable ({status.describe()})\n")
        else:
            err.write(f"{url} is NOT reachable: {status.describe()}\n")
        return exit_code(report)
    return _emit(report, s, out)


def cmd_crawl(s: _Settings, out, err) -> int:
    args = s.args
    options = s.crawl_options()
    if args.serve:
        if args.url:
            raise UsageError("give either a seed URL or --serve DIR, not both")
        if not Path(args.serve).is_dir():
            raise UsageError(f"not a directory: {args.serve}")
        report = serve_and_crawl(args.serve, "/" + s.seed.lstrip("/"), options)
    else:
        if not args.url:
            raise UsageError("crawl needs a seed URL or --serve DIR")
        if args.seed:
            raise UsageError("--seed only applies with --serve; put the path in the URL instead")
        report = crawl(_parse_url(args.url), options)
    return _emit(report, s, out)


def cmd_html(s: _Settings, out, err) -> int:
    rules = HtmlRuleSet(disabled=frozenset(s.allow))
    return _emit(check_html_tree(s.args.dir, rules), s, out)


def cmd_json_links(s: _Settings, out, err) -> int:
    base = _parse_url(s.base) if s.base else None
    opts = s.crawl_options()
    report = check_json_links(s.args.dir, s.policy(), base, opts.concurrency, opts.per_host_concurrency)
    return _emit(report, s, out)


def cmd_xml_subset(s: _Settings, out, err) -> int:
    try:
        report = check_xml_tree(s.args.main, s.args.roots, s.pattern)
    except XmlCheckError as exc:
        raise UsageError(f"cannot use main file: {exc}") from None
    return _emit(report, s, out)


def cmd_serve(args, out, err) -> int:
    handle = serve(args.dir, args.port, args.bind)
    out.write(f"Serving {args.dir} at {handle.base_url}/ (Ctrl-C to stop)\n")
    out.flush()
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        handle.shutdown()
    return EXIT_OK


def cmd_ci_init(args, out, err) -> int:
    text = scaffold_workflow(args.kind, args.schedule, args.checkout_version, args.step_command)
    if args.output:
        path = Path(args.output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        err.write(f"wrote {path}\n")
    else:
        out.write(text)
    return EXIT_OK


COMMANDS = {
    "reach": cmd_reach,
    "crawl": cmd_crawl,
    "html": cmd_html,
    "json-links": cmd_json_links,
    "xml-subset": cmd_xml_subset,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            err.write(parser.format_help())
            return EXIT_USAGE
        if args.command == "serve":
            return cmd_serve(args, out, err)
        if args.command == "ci-init":
            return cmd_ci_init(args, out, err)
        settings = _Settings(args, load_config(args.config))
        if settings.format not in FORMATS:
            raise UsageError(f"unknown format {settings.format!r}")
        return COMMANDS[args.command](settings, out, err)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except (ValueError, TypeError, OSError, ServerStartError) as exc:
        err.write(f"sitecheck: error: {exc}\n")
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())

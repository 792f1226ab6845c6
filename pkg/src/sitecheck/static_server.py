"""Embedded static file server so a working tree can be crawled before deployment."""

from __future__ import annotations

import posixpath
import threading
from dataclasses import dataclass, field
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import unquote, urlsplit

from sitecheck.crawler import crawl
from sitecheck.link_model import NormalizedUrl, Report

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".htm": "text/html; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".json": "application/json",
    ".xml": "application/xml",
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
    ".txt": "text/plain; charset=utf-8",
}
DEFAULT_CONTENT_TYPE = "application/octet-stream"
INDEX_FILE = "index.html"


class ServerStartError(OSError):
    pass


def content_type_for(path: Path) -> str:
    return CONTENT_TYPES.get(path.suffix.lower(), DEFAULT_CONTENT_TYPE)


def resolve_request_path(root: Path, url_path: str):
    """Map a request path to (HTTPStatus, file or None, redirect location or None)."""
    raw = unquote(urlsplit(url_path).path or "/")
    segments = raw.split("/")
    if any(seg == ".." for seg in segments) or "\\" in raw or "\x00" in raw:
        return HTTPStatus.FORBIDDEN, None, None
    rel = [seg for seg in segments if seg not in ("", ".")]
    target = root.joinpath(*rel)
    try:
        resolved = target.resolve()
    except (OSError, RuntimeError):
        return HTTPStatus.NOT_FOUND, None, None
    if resolved != root and root not in resolved.parents:
        return HTTPStatus.FORBIDDEN, None, None
    if resolved.is_dir():
        if not raw.endswith("/"):
            return HTTPStatus.MOVED_PERMANENTLY, None, posixpath.join(raw, "")
        index = resolved / INDEX_FILE
        if index.is_file():
            return HTTPStatus.OK, index, None
        return HTTPStatus.NOT_FOUND, None, None
    if resolved.is_file():
        return HTTPStatus.OK, resolved, None
    return HTTPStatus.NOT_FOUND, None, None


class _Handler(BaseHTTPRequestHandler):
    server_version = "sitecheck-static"
    root: Path

    def do_GET(self):
        self._respond(send_body=True)

    def do_HEAD(self):
        self._respond(send_body=False)

    def _respond(self, send_body: bool) -> None:
        status, path, location = resolve_request_path(self.server.root, self.path)
        counter = self.server.request_log
        if counter is not None:
            with self.server.log_lock:
                counter.append((self.command, urlsplit(self.path).path))
        if path is None:
            body = f"{status.value} {status.phrase}\n".encode()
            self.send_response(status)
            if location:
                self.send_header("Location", location)
            self.send_header("Content-Type", "text/plain; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Connection", "close")
            self.end_headers()
            if send_body:
                self.wfile.write(body)
            return
        try:
            data = path.read_bytes()
        except OSError:
            self.send_error(HTTPStatus.FORBIDDEN)
            return
        self.send_response(HTTPStatus.OK)
        self.send_header("Content-Type", content_type_for(path))
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Connection", "close")
        self.end_headers()
        if send_body:
            self.wfile.write(data)

    def log_message(self, format, *args):
        pass


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, address, root: Path, request_log):
        self.root = root
        self.request_log = request_log
        self.log_lock = threading.Lock()
        super().__init__(address, _Handler)


@dataclass
class ServerHandle:
    host: str
    port: int
    root: Path
    _server: _Server = field(repr=False)
    _thread: threading.Thread = field(repr=False)

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def url(self, path: str = "/") -> NormalizedUrl:
        return NormalizedUrl.parse(self.base_url + "/" + path.lstrip("/"))

    @property
    def requests(self) -> list:
        """(method, path) pairs received, when request logging is enabled."""
        return list(self._server.request_log or [])

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()

    def __enter__(self) -> ServerHandle:
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(root, port: int = 0, bind_host: str = "127.0.0.1", record_requests: bool = False) -> ServerHandle:
    """Serve *root* in a background thread. ``port=0`` lets the OS choose."""
    root = Path(root).resolve()
    if not root.is_dir():
        raise NotADirectoryError(f"not a directory: {root}")
    try:
        server = _Server((bind_host, port), root, [] if record_requests else None)
    except OSError as exc:
        raise ServerStartError(f"cannot bind {bind_host}:{port}: {exc}") from exc
    thread = threading.Thread(target=server.serve_forever, name="sitecheck-serve", daemon=True)
    thread.start()
    host, bound_port = server.server_address[:2]
    return ServerHandle(host, bound_port, root, server, thread)


def url_to_file(url: NormalizedUrl, served: ServerHandle, shown_root) -> Optional[str]:
    """Translate a URL on *served* to a path string under *shown_root*, or None if foreign."""
    if url.authority != served.url().authority:
        return None
    rel = unquote(url.path).lstrip("/")
    if not rel or url.path.endswith("/"):
        rel = posixpath.join(rel, INDEX_FILE) if rel else INDEX_FILE
    shown = Path(shown_root)
    return (shown / rel).as_posix()


def serve_and_crawl(root, seed_path: str = "/index.html", options=None) -> Report:
    """Serve *root* on an ephemeral loopback port and crawl it from *seed_path*.

    Locations in the returned report name files under *root* rather than
    the temporary localhost URLs, so reports are stable across runs.
    """
    shown_root = Path(root)
    with serve(root, port=0) as handle:
        seed = handle.url(seed_path)

        def show(url: NormalizedUrl) -> str:
            return url_to_file(url, handle, shown_root) or str(url)

        return crawl(seed, options, show=show)

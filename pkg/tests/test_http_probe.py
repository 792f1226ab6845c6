import io
import time

import pytest

from conftest import html
from sitecheck.http_probe import ProbePolicy, check_reachable, fetch, probe
from sitecheck.link_model import Broken, BrokenReason, NormalizedUrl, Ok, Redirected

FAST = ProbePolicy(timeout=2, retries=0, backoff=0)


def redirect(to, status=301):
    return (status, {"Location": to}, b"")


def head_not_allowed(handler):
    if handler.command == "HEAD":
        return (405, {}, b"")
    return html("<p>ok</p>")


def flaky(n_failures):
    calls = {"n": 0}

    def route(handler):
        calls["n"] += 1
        if calls["n"] <= n_failures:
            return (503, {"Retry-After": "0"}, b"")
        return html("ok")

    return route


@pytest.fixture
def server(route_server):
    routes = {
        "/ok": html("fine"),
        "/a": redirect("/b"),
        "/b": html("landed"),
        "/loop1": redirect("/loop2", 302),
        "/loop2": redirect("/loop1", 302),
        "/gone": html("gone", 404),
        "/headless": head_not_allowed,
        "/flaky": flaky(1),
        "/down": (500, {}, b""),
    }
    for i in range(15):
        routes[f"/hop{i}"] = redirect(f"/hop{i + 1}", 302)
    routes["/hop15"] = html("end")
    return route_server(routes)


def U(s):
    return NormalizedUrl.parse(s)


def test_ok(server):
    assert probe(U(server.url("/ok")), FAST) == Ok(200)


def test_not_found(server):
    assert probe(U(server.url("/gone")), FAST) == Broken(BrokenReason.HTTP_STATUS, 404)


def test_redirect_chain_recorded(server):
    assert probe(U(server.url("/a")), FAST) == Redirected((U(server.url("/b")),), 200)


def test_redirect_loop(server):
    assert probe(U(server.url("/loop1")), FAST).reason is BrokenReason.TOO_MANY_REDIRECTS


def test_redirect_limit(server):
    long = probe(U(server.url("/hop0")), ProbePolicy(timeout=2, retries=0, redirect_limit=15))
    assert isinstance(long, Redirected) and len(long.chain) == 15
    short = probe(U(server.url("/hop0")), ProbePolicy(timeout=2, retries=0, redirect_limit=10))
    assert short.reason is BrokenReason.TOO_MANY_REDIRECTS


def test_head_falls_back_to_get(server):
    assert probe(U(server.url("/headless")), FAST) == Ok(200)
    assert [m for m, p in server.log if p == "/headless"] == ["HEAD", "GET"]


def test_server_error_falls_back_then_reports(server):
    assert probe(U(server.url("/down")), FAST) == Broken(BrokenReason.HTTP_STATUS, 500)
    assert [m for m, p in server.log if p == "/down"] == ["HEAD", "GET"]


def test_retry_on_503(server):
    assert probe(U(server.url("/flaky")), ProbePolicy(timeout=2, retries=1, backoff=0)) == Ok(200)


def test_no_retry_gives_503(route_server):
    s = route_server({"/flaky": flaky(5)})
    status = probe(U(s.url("/flaky")), ProbePolicy(timeout=2, retries=0, backoff=0, method_order=("GET",)))
    assert status == Broken(BrokenReason.HTTP_STATUS, 503)


def test_connection_refused(closed_port):
    status = probe(U(f"http://127.0.0.1:{closed_port}/"), FAST)
    assert status.reason is BrokenReason.CONNECTION_FAILED


def test_timeout_bounded(silent_socket):
    policy = ProbePolicy(timeout=0.5, retries=1, backoff=0.2)
    t0 = time.monotonic()
    status = probe(U(f"http://127.0.0.1:{silent_socket}/"), policy)
    elapsed = time.monotonic() - t0
    assert status.reason is BrokenReason.TIMEOUT
    assert elapsed <= policy.time_budget + 0.5


def test_deterministic(server):
    urls = [U(server.url(p)) for p in ("/ok", "/a", "/gone", "/loop1", "/headless")]
    first = [probe(u, FAST) for u in urls]
    assert [probe(u, FAST) for u in urls] == first


def test_get_only_policy_sends_no_head(server):
    probe(U(server.url("/ok")), ProbePolicy(timeout=2, retries=0, method_order=("GET",)))
    assert server.log == [("GET", "/ok")]


def test_fetch_reads_body_only_when_wanted(server):
    res = fetch(U(server.url("/ok")), FAST, methods=("GET",), want_body=lambda ct: ct.startswith("text/html"))
    assert res.body == b"fine" and res.media_type == "text/html"
    assert fetch(U(server.url("/ok")), FAST).body is None


@pytest.mark.parametrize(
    "kwargs",
    [{"timeout": 0}, {"retries": -1}, {"redirect_limit": 0}, {"method_order": ()}, {"method_order": ("POST",)}],
)
def test_policy_validation(kwargs):
    with pytest.raises(ValueError):
        ProbePolicy(**kwargs)


def test_timeout_from_environment(monkeypatch):
    monkeypatch.setenv("SITECHECK_TIMEOUT", "3.5")
    assert ProbePolicy().timeout == 3.5
    monkeypatch.setenv("SITECHECK_TIMEOUT", "soon")
    with pytest.raises(ValueError):
        ProbePolicy()


def test_check_reachable_contract(server, closed_port):
    out, err = io.StringIO(), io.StringIO()
    assert check_reachable(server.url("/ok"), FAST, out, err) == 0
    assert "is reachable" in out.getvalue()
    assert check_reachable(server.url("/gone"), FAST, out, err) == 1
    assert check_reachable(f"http://127.0.0.1:{closed_port}/", FAST, out, err) == 1
    assert "NOT reachable" in err.getvalue()
    assert check_reachable("not-a-url", FAST, out, err) == 2
    assert check_reachable("ftp://example.com/", FAST, out, err) == 2

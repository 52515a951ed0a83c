import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


def clip_rows(n, duration=30.0, prefix="clip"):
    return [
        {
            "id": f"{prefix}-{i:05d}",
            "audio_url": f"https://example.org/audio/{prefix}-{i:05d}.mp3",
            "transcript": f"mi a sing song numba {i}",
            "lyrics": "full song lyrics",
            "duration_s": duration,
            "sample_rate_hz": 22050,
        }
        for i in range(n)
    ]


def jsonl(rows) -> bytes:
    return "".join(json.dumps(r) + "\n" for r in rows).encode()


class AudioServer:
    """Serves ``routes`` (path -> bytes or int status); counts hits per path."""

    def __init__(self):
        self.routes = {}
        self.hits = {}
        self.lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                with outer.lock:
                    outer.hits[self.path] = outer.hits.get(self.path, 0) + 1
                    body = outer.routes.get(self.path, 404)
                if callable(body):
                    body = body()
                if isinstance(body, tuple):  # redirect
                    self.send_response(body[0])
                    self.send_header("Location", body[1])
                    self.end_headers()
                elif isinstance(body, int):
                    self.send_error(body)
                else:
                    self.send_response(200)
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def url(self, path):
        return f"http://127.0.0.1:{self.httpd.server_address[1]}{path}"


@pytest.fixture
def audio_server():
    srv = AudioServer()
    srv.thread.start()
    yield srv
    srv.httpd.shutdown()
    srv.httpd.server_close()


# -- acceptance criteria summary ---------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "seconds": 0.0})
    entry["ok"] &= rep.passed
    entry["seconds"] += rep.duration


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {e['title']} ({e['seconds']:.2f}s)")

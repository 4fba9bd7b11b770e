"""Shared fixtures: shipped data files and a threaded stub search endpoint."""
import json
import socket
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from catalog import load_catalog  # noqa: E402
from submissions import ingest  # noqa: E402

FIXTURES = ROOT / "fixtures"
CATALOG_FILE = FIXTURES / "catalog_2022-11-01.json"
MSMARCO_FILE = FIXTURES / "msmarco_tables2.jsonl"
XOR_FILE = FIXTURES / "xor_tables2.jsonl"
TABLE1_FILE = FIXTURES / "posthoc_table1.jsonl"


@pytest.fixture(scope="session")
def catalog():
    return load_catalog(CATALOG_FILE)


@pytest.fixture(scope="session")
def msmarco_records(catalog):
    return ingest(MSMARCO_FILE, catalog)


@pytest.fixture(scope="session")
def xor_records(catalog):
    return ingest(XOR_FILE, catalog)


@pytest.fixture(scope="session")
def table1_records():
    # Several rows declare more RAM than the catalog shape, so no bounds check.
    return ingest(TABLE1_FILE)


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128


class StubSearch:
    """Search endpoint with an injected delay and request bookkeeping."""

    def __init__(self, delay_s=0.0, slow_first=0, slow_delay_s=0.0, status=200,
                 body=None, results=1, fail_first=0):
        self.fail_first = fail_first
        self.delay_s = delay_s
        self.slow_first = slow_first
        self.slow_delay_s = slow_delay_s
        self.status = status
        self.body = body
        self.results = results
        self.requests = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self.bodies = []
        self._lock = threading.Lock()
        self._server = None
        self._thread = None

    @property
    def url(self):
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def _handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                with stub._lock:
                    stub.requests += 1
                    number = stub.requests
                    stub.in_flight += 1
                    stub.max_in_flight = max(stub.max_in_flight, stub.in_flight)
                    stub.bodies.append(payload)
                try:
                    time.sleep(stub.slow_delay_s if number <= stub.slow_first else stub.delay_s)
                    if stub.body is not None:
                        data = stub.body
                    else:
                        data = json.dumps({"results": [
                            {"docid": f"d{i}", "score": float(stub.results - i)}
                            for i in range(stub.results)
                        ]}).encode("utf-8")
                    self.send_response(500 if number <= stub.fail_first else stub.status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                finally:
                    with stub._lock:
                        stub.in_flight -= 1

            def log_message(self, format, *args):
                pass

        return Handler

    def start(self):
        self._server = _Server(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()


@pytest.fixture
def stub_server():
    """Factory: stub_server(delay_s=0.05, ...) returns a running StubSearch."""
    started = []

    def start(**options):
        stub = StubSearch(**options).start()
        started.append(stub)
        return stub

    yield start
    for stub in started:
        stub.stop()


@pytest.fixture
def closed_port():
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    return port


@pytest.fixture
def query_file(tmp_path):
    path = tmp_path / "queries.txt"
    path.write_text("\n".join(f"query number {i}" for i in range(200)) + "\n", encoding="utf-8")
    return path

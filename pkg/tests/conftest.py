import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from accord.corpus import CandidateContext, ConceptMention

DATA_DIR = Path(__file__).parent.parent / "src" / "accord" / "data"

MINI_CORPUS = DATA_DIR / "mini_corpus.jsonl"
MINI_LEXICON = DATA_DIR / "mini_lexicon.tsv"


@pytest.fixture(scope="session")
def mini_corpus_path() -> Path:
    return MINI_CORPUS


@pytest.fixture(scope="session")
def mini_lexicon_path() -> Path:
    return MINI_LEXICON


def make_context(text: str, concept: str, context_id: str = "ctx-1") -> tuple:
    """A CandidateContext plus the mention for the first occurrence of
    concept in text."""
    start = text.lower().index(concept.lower())
    mention = ConceptMention(
        concept=concept.lower(),
        char_start=start,
        char_end=start + len(concept),
        score=1.5,
    )
    context = CandidateContext(
        context_id=context_id,
        paper_id="p-test",
        text=text,
        window_size=1,
        mentions=(mention,),
    )
    return context, mention


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 (http.server API)
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length) or b"{}")
        status, body = self.server.stub_respond(payload)  # type: ignore[attr-defined]
        encoded = json.dumps(body).encode() if not isinstance(body, bytes) else body
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(encoded)))
        self.end_headers()
        self.wfile.write(encoded)

    def log_message(self, *args):  # silence test output
        pass


class StubServer:
    """Local HTTP stub standing in for remote scorer/generator endpoints.

    ``respond`` takes the request payload and returns (status, body); it can
    be swapped per test to simulate failures.
    """

    def __init__(self, respond):
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self._server.stub_respond = respond  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def set_responder(self, respond) -> None:
        self._server.stub_respond = respond  # type: ignore[attr-defined]

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_server():
    servers = []

    def factory(respond):
        server = StubServer(respond)
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.close()

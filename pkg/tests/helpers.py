"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import json
import math
import threading
from collections import Counter
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from lexishift.counts import CountTable, LemmaPosKey, SliceTotals

# ---------------------------------------------------------------------------
# published focal-word clusters: (2020 OPM, percent change 2020->2024, members)

REFERENCE_CLUSTERS = {
    ("meticulously", "ADV"): (0.5, 991.83, {
        "carefully": -9.83, "rigorously": 43.6, "precisely": 13.5,
        "thoroughly": 62.82, "comprehensively": 118.9,
    }),
    ("showcase", "VERB"): (3.2, 508.12, {
        "demonstrate": 20.22, "illustrate": -13.88, "reveal": 28.92,
        "exhibit": 75.68, "present": -6.92,
    }),
    ("significant", "ADJ"): (934.0, 27.42, {
        "substantial": 53.18, "important": -23.43, "notable": 263.69, "noteworthy": 153.51,
    }),
    ("surpass", "VERB"): (4.1, 347.91, {
        "exceed": 33.78, "transcend": 94.52, "outstrip": -29.34,
        "outperform": 103.21, "eclipse": 8.48,
    }),
    ("underscore", "VERB"): (12.9, 765.78, {
        "emphasize": 180.97, "reinforce": 2.96, "highlight": 79.33,
        "stress": -3.3, "accentuate": 47.29,
    }),
    ("underscore", "NOUN"): (0.08, 478.62, {
        "emphasis": 0.46, "highlight": 46.12, "stress": 6.23,
        "importance": 29.17, "significance": 36.65,
    }),
}

REFERENCE_TOTAL = 10**10  # tokens per slice; large enough that integer rounding stays far below 0.1pp
MEMBER_BASE_OPM = 100.0  # the published table gives member changes only, not levels
FILLER = LemmaPosKey("filler", "X")


def reverse_engineer_table(
    clusters: dict = REFERENCE_CLUSTERS,
    total: int = REFERENCE_TOTAL,
    slices: tuple[int, int] = (2020, 2024),
) -> CountTable:
    """Counts whose OPMs and percent changes reproduce ``clusters``; a filler key conserves mass."""
    s0, s1 = slices
    c0: Counter = Counter()
    c1: Counter = Counter()

    def put(key: LemmaPosKey, opm_from: float, pct: float) -> None:
        n0 = round(opm_from * total / 1e6)
        n1 = round(n0 * (1 + pct / 100))
        # a member shared between clusters (e.g. highlight_NOUN vs _VERB) keeps one pair
        c0.setdefault(key, n0)
        c1.setdefault(key, n1)

    for (lemma, upos), (opm_from, pct, members) in clusters.items():
        put(LemmaPosKey(lemma, upos), opm_from, pct)
        for m, mpct in members.items():
            put(LemmaPosKey(m, upos), MEMBER_BASE_OPM, mpct)
    c0[FILLER] = total - sum(c0.values())
    c1[FILLER] = total - sum(c1.values())
    return CountTable(
        {s0: dict(c0), s1: dict(c1)},
        {s0: SliceTotals(s0, total, 1), s1: SliceTotals(s1, total, 1)},
    )


# ---------------------------------------------------------------------------
# chi-square oracle: sum over cells of (O - E)^2 / E in exact rationals


def chi2_oracle(a: int, b: int, c: int, d: int, yates: bool) -> float:
    cells = ((a, a + b, a + c), (b, a + b, b + d), (c, c + d, a + c), (d, c + d, b + d))
    n = a + b + c + d
    total = Fraction(0)
    for obs, row, col in cells:
        expected = Fraction(row * col, n)
        diff = abs(obs - expected)
        if yates:
            diff = max(Fraction(0), diff - Fraction(1, 2))
        total += diff * diff / expected
    return float(total)


def chi2_sf_erfc(x: float) -> float:
    """Chi-square(1) upper tail via the normal: P(Z^2 > x) = erfc(sqrt(x/2))."""
    return math.erfc(math.sqrt(x / 2)) if x > 0 else 1.0


# ---------------------------------------------------------------------------
# mock OpenAI-compatible endpoint


class MockChatServer:
    """Threaded local ``/chat/completions`` endpoint with scripted behaviour.

    ``responder(prompt) -> (content, finish_reason)`` decides each reply; a
    non-None ``status`` from ``status_for(n)`` (n = 1-based request number)
    short-circuits with that HTTP status.
    """

    def __init__(self, responder, status_for=None):
        self.responder = responder
        self.status_for = status_for or (lambda n: None)
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with server._lock:
                    server.requests.append({"path": self.path, "body": body,
                                            "auth": self.headers.get("Authorization")})
                    n = len(server.requests)
                status = server.status_for(n)
                if status is not None:
                    self._send(status, {"error": "scripted"})
                    return
                if self.path != "/v1/chat/completions":
                    self._send(404, {"error": "not found"})
                    return
                content, finish = server.responder(body["messages"][-1]["content"])
                self._send(200, {
                    "id": f"cmpl-{n}",
                    "object": "chat.completion",
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": content},
                                 "finish_reason": finish}],
                })

            def _send(self, status, payload):
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


SUMMARY_MARK = "The following text is an abstract from a scientific paper:"
REGEN_MARK = "Please write an abstract for a scientific paper"


def regen_responder(refuse_summary: set[str], refuse_regen: set[str]):
    """Keywords echo the abstract's id token; refusal sets are keyed by that token."""

    def respond(prompt: str):
        if prompt.startswith(SUMMARY_MARK):
            doc_tag = next((w for w in prompt.split() if w.startswith("D") and w[1:].isdigit()), "")
            if doc_tag in refuse_summary:
                return "I'm sorry, but I can't help with that.", "stop"
            return f"{doc_tag}, cohort, outcome, analysis", "stop"
        if prompt.startswith(REGEN_MARK):
            if any(t in prompt for t in refuse_regen):
                return "", "content_filter"
            return ("This work delves into the cohort and underscores a notable outcome. "
                    "The analysis showcases amendment of the protocol."), "stop"
        return "unexpected prompt", "stop"

    return respond


# ---------------------------------------------------------------------------
# mock E-utilities (for httpx.MockTransport)


class Killed(Exception):
    """Raised by the mock to simulate the process dying mid-download."""


def pubmed_article_xml(pmid: str, year: int, abstract: list[str] | None) -> str:
    if abstract is None:
        abstract_xml = ""
    else:
        parts = "".join(f'<AbstractText Label="S{i}">{t}</AbstractText>' for i, t in enumerate(abstract))
        abstract_xml = f"<Abstract>{parts}</Abstract>"
    return (
        f"<PubmedArticle><MedlineCitation><PMID Version=\"1\">{pmid}</PMID><Article>"
        f"<Journal><JournalIssue><PubDate><Year>{year}</Year></PubDate></JournalIssue></Journal>"
        f"<ArticleTitle>T{pmid}</ArticleTitle>{abstract_xml}</Article></MedlineCitation></PubmedArticle>"
    )


def _window(text: str, end: bool):
    import datetime

    parts = [int(x) for x in text.split("/")]
    if len(parts) == 1:
        return datetime.date(parts[0], 12, 31) if end else datetime.date(parts[0], 1, 1)
    return datetime.date(*parts)


class MockEutils:
    """``records[year] = [(pmid, abstract_parts_or_None), ...]``; logs every request.

    Record ``i`` of a year is dated ``i`` days after 1 January (mod 365), and
    esearch, like the real service, will not page past ``limit`` ids.
    """

    def __init__(self, records: dict[int, list[tuple[str, list[str] | None]]], kill_on_efetch: int | None = None,
                 fail_first: int = 0, clock=None, limit: int = 10_000):
        import datetime
        import time

        self.records = records
        self.kill_on_efetch = kill_on_efetch
        self.fail_first = fail_first
        self.clock = clock or time.monotonic
        self.limit = limit
        self.log: list[tuple[float, str, dict]] = []
        self.efetches = 0
        self.dated = [(datetime.date(year, 1, 1) + datetime.timedelta(days=i % 365), pmid)
                      for year, recs in records.items() for i, (pmid, _) in enumerate(recs)]

    def __call__(self, request):
        import httpx

        params = dict(request.url.params)
        endpoint = request.url.path.rsplit("/", 1)[-1]
        self.log.append((self.clock(), endpoint, params))
        if len(self.log) <= self.fail_first:
            return httpx.Response(503, text="busy")
        if endpoint == "esearch.fcgi":
            assert params["datetype"] == "pdat"
            lo, hi = _window(params["mindate"], False), _window(params["maxdate"], True)
            ids = [pmid for d, pmid in self.dated if lo <= d <= hi]
            start, size = int(params["retstart"]), int(params["retmax"])
            if start >= self.limit:
                return httpx.Response(200, text=f"<eSearchResult><ERROR>Search Backend failed: retstart {start} "
                                                f"exceeds {self.limit}</ERROR></eSearchResult>")
            page = "".join(f"<Id>{i}</Id>" for i in ids[start:min(start + size, self.limit)])
            body = (f"<eSearchResult><Count>{len(ids)}</Count><RetMax>{size}</RetMax>"
                    f"<RetStart>{start}</RetStart><IdList>{page}</IdList></eSearchResult>")
            return httpx.Response(200, text=body)
        if endpoint == "efetch.fcgi":
            self.efetches += 1
            if self.kill_on_efetch is not None and self.efetches == self.kill_on_efetch:
                raise Killed()
            assert params["retmode"] == "xml"
            wanted = params["id"].split(",")
            by_id = {pmid: (year, abstract) for year, recs in self.records.items() for pmid, abstract in recs}
            body = "".join(pubmed_article_xml(i, *by_id[i]) for i in wanted)
            return httpx.Response(200, text=f"<?xml version=\"1.0\"?><PubmedArticleSet>{body}</PubmedArticleSet>")
        return httpx.Response(404)


class EutilsServer:
    """Serve a :class:`MockEutils` handler over real HTTP for CLI tests."""

    def __init__(self, mock: MockEutils):
        import httpx

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                resp = mock(httpx.Request("GET", f"http://mock{self.path}"))
                data = resp.content
                self.send_response(resp.status_code)
                self.send_header("Content-Type", "text/xml")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/entrez/eutils"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()

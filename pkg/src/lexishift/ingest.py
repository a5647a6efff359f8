"""Document ingestion: JSONL corpora, PubMed efetch XML, and a resumable E-utilities fetcher."""

from __future__ import annotations

import io
import json
import logging
import os
import calendar
import re
import time
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Callable, Iterable, Iterator

import httpx

from lexishift.errors import CorpusError, FetchError, RecordError

log = logging.getLogger(__name__)

DEFAULT_YEAR_RANGE = (1975, 2024)
EUTILS_BASE_URL = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"
# esearch refuses to page past this many ids for one query
ESEARCH_LIMIT = 10_000


class Source(str, Enum):
    JSONL = "jsonl"
    PUBMED_XML = "pubmed-xml"
    FETCHED = "fetched"


@dataclass(frozen=True, slots=True)
class Document:
    id: str
    slice: int
    text: str
    source: Source = Source.JSONL

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("document id must be a non-empty string")
        if not isinstance(self.text, str) or not self.text:
            raise ValueError(f"document {self.id}: text must be non-empty")
        if not isinstance(self.slice, int) or isinstance(self.slice, bool):
            raise ValueError(f"document {self.id}: slice must be an integer year")


@dataclass
class CorpusManifest:
    slices: list[int]
    doc_count: dict[int, int]
    notes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.slices, self.slices[1:])):
            raise ValueError("manifest slices must be strictly increasing")
        if any(n < 0 for n in self.doc_count.values()):
            raise ValueError("manifest doc counts must be non-negative")

    @classmethod
    def from_documents(cls, docs: Iterable[Document], notes: Iterable[str] = ()) -> "CorpusManifest":
        counts = Counter(d.slice for d in docs)
        slices = sorted(counts)
        return cls(slices=slices, doc_count={s: counts[s] for s in slices}, notes=list(notes))

    def to_json(self) -> str:
        payload = {
            "slices": self.slices,
            "doc_count": {str(s): self.doc_count.get(s, 0) for s in self.slices},
            "notes": self.notes,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


@dataclass
class ReadStats:
    """Side channel for streaming readers: skipped records and per-record errors."""

    skipped: int = 0
    errors: list[RecordError] = field(default_factory=list)


def _report(stats: ReadStats | None, err: RecordError) -> None:
    if stats is None:
        raise err
    log.warning("%s", err)
    stats.errors.append(err)


def _slice_ok(year: int, year_range: tuple[int, int] | None) -> bool:
    return year_range is None or year_range[0] <= year <= year_range[1]


# ---------------------------------------------------------------------------
# JSONL


def read_jsonl(
    path: str | os.PathLike,
    *,
    year_range: tuple[int, int] | None = DEFAULT_YEAR_RANGE,
    stats: ReadStats | None = None,
    unique_ids: bool = True,
) -> Iterator[Document]:
    """Yield Documents from a JSONL corpus in file order.

    Malformed records raise :class:`RecordError` unless ``stats`` is given, in
    which case they are logged, collected and skipped. Invalid UTF-8 is always
    fatal.
    """
    seen: set[str] = set()
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: not valid UTF-8 ({exc.reason})") from None
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                _report(stats, RecordError(lineno, f"invalid JSON ({exc.msg})"))
                continue
            if not isinstance(obj, dict):
                _report(stats, RecordError(lineno, "record is not a JSON object"))
                continue
            missing = next((k for k in ("id", "year", "text") if k not in obj), None)
            if missing is not None:
                _report(stats, RecordError(lineno, f"missing field {missing}"))
                continue
            doc_id, year, text = obj["id"], obj["year"], obj["text"]
            if not isinstance(doc_id, str) or not doc_id:
                _report(stats, RecordError(lineno, "field id must be a non-empty string"))
                continue
            if not isinstance(year, int) or isinstance(year, bool):
                _report(stats, RecordError(lineno, "field year must be an integer"))
                continue
            if not isinstance(text, str) or not text.strip():
                _report(stats, RecordError(lineno, "field text must be a non-empty string"))
                continue
            if not _slice_ok(year, year_range):
                _report(stats, RecordError(lineno, f"year {year} outside {year_range[0]}-{year_range[1]}"))
                continue
            if unique_ids:
                if doc_id in seen:
                    _report(stats, RecordError(lineno, f"duplicate id {doc_id}"))
                    continue
                seen.add(doc_id)
            yield Document(doc_id, year, text, Source.JSONL)


def document_to_json(doc: Document) -> str:
    return json.dumps({"id": doc.id, "year": doc.slice, "text": doc.text}, ensure_ascii=False)


def write_jsonl(docs: Iterable[Document], out: str | os.PathLike | IO[str]) -> int:
    """Write documents one per line; returns the number written."""
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            return write_jsonl(docs, fh)
    n = 0
    for doc in docs:
        out.write(document_to_json(doc) + "\n")
        n += 1
    return n


# ---------------------------------------------------------------------------
# PubMed XML

_YEAR_RE = re.compile(r"\b(\d{4})\b")


def _article_year(article: ET.Element) -> int | None:
    pubdate = article.find("./MedlineCitation/Article/Journal/JournalIssue/PubDate")
    if pubdate is not None:
        year = pubdate.findtext("Year")
        if year and year.strip().isdigit():
            return int(year)
        medline = pubdate.findtext("MedlineDate")
        if medline:
            m = _YEAR_RE.search(medline)
            if m:
                return int(m.group(1))
    year = article.findtext("./MedlineCitation/Article/ArticleDate/Year")
    if year and year.strip().isdigit():
        return int(year)
    return None


def _abstract_text(article: ET.Element) -> str:
    parts = []
    for node in article.iterfind("./MedlineCitation/Article/Abstract/AbstractText"):
        text = "".join(node.itertext()).strip()
        if text:
            parts.append(text)
    return " ".join(parts)


def _byte_offset(data: bytes, line: int, column: int) -> int:
    offset = 0
    for _ in range(line - 1):
        nl = data.find(b"\n", offset)
        if nl < 0:
            break
        offset = nl + 1
    return offset + column


def iter_pubmed_articles(
    stream: IO[bytes],
    *,
    source: Source = Source.PUBMED_XML,
    year_range: tuple[int, int] | None = DEFAULT_YEAR_RANGE,
    stats: ReadStats | None = None,
    label: str = "<xml>",
    raw: bytes | None = None,
) -> Iterator[Document]:
    index = 0
    try:
        for _, elem in ET.iterparse(stream, events=("end",)):
            if elem.tag not in ("PubmedArticle", "PubmedBookArticle"):
                continue
            index += 1
            pmid = (elem.findtext("./MedlineCitation/PMID") or "").strip()
            text = _abstract_text(elem) if elem.tag == "PubmedArticle" else ""
            year = _article_year(elem)
            elem.clear()
            if not text:
                if stats is not None:
                    stats.skipped += 1
                continue
            if not pmid:
                _report(stats, RecordError(index, "article without PMID", label="article"))
                continue
            if year is None:
                _report(stats, RecordError(index, f"PMID {pmid}: no publication year", label="article"))
                continue
            if not _slice_ok(year, year_range):
                if stats is not None:
                    stats.skipped += 1
                continue
            yield Document(pmid, year, text, source)
    except ET.ParseError as exc:
        line, column = exc.position
        if raw is None:
            try:
                raw = Path(label).read_bytes()
            except OSError:
                raw = b""
        offset = _byte_offset(raw, line, column)
        raise CorpusError(f"{label}: unparseable XML at byte offset {offset} ({exc})") from None


def read_pubmed_xml(
    path: str | os.PathLike,
    *,
    year_range: tuple[int, int] | None = DEFAULT_YEAR_RANGE,
    stats: ReadStats | None = None,
) -> Iterator[Document]:
    """Yield one Document per article with a non-empty abstract.

    Abstract-less articles are skipped and counted in ``stats.skipped``.
    """
    with open(path, "rb") as fh:
        yield from iter_pubmed_articles(fh, year_range=year_range, stats=stats, label=str(path))


# ---------------------------------------------------------------------------
# E-utilities fetcher


class RateLimiter:
    """Enforces a minimum gap between consecutive request starts."""

    def __init__(
        self,
        rate: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._last: float | None = None

    def wait(self) -> None:
        now = self._clock()
        if self._last is not None:
            remaining = self._last + self.interval - now
            if remaining > 0:
                self._sleep(remaining)
                now = self._clock()
        self._last = now


_RETRY_STATUS = {429, 500, 502, 503, 504}


class PubMedFetcher:
    """Downloads abstracts year by year via esearch (paginated) and efetch.

    A year whose hit count exceeds ``search_limit`` is split into months, and
    such a month into days, so no single search needs to page past the limit.
    Output is appended to a JSONL file; a small JSON cursor records progress so
    an interrupted run can resume without writing duplicate ids.
    """

    def __init__(
        self,
        *,
        base_url: str = EUTILS_BASE_URL,
        rate: float = 3.0,
        page_size: int = 500,
        batch_size: int = 200,
        max_retries: int = 5,
        backoff: float = 1.0,
        api_key: str | None = None,
        email: str | None = None,
        tool: str = "lexishift",
        dedupe: bool = True,
        search_limit: int = ESEARCH_LIMIT,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.page_size = page_size
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.backoff = backoff
        self.dedupe = dedupe
        self.search_limit = search_limit
        self._extra = {k: v for k, v in (("api_key", api_key), ("email", email), ("tool", tool)) if v}
        self._client = client or httpx.Client(timeout=60.0)
        self._sleep = sleep
        self._limiter = RateLimiter(rate, clock=clock, sleep=sleep)

    def _get(self, endpoint: str, params: dict[str, str | int]) -> bytes:
        url = f"{self.base_url}/{endpoint}"
        delay = self.backoff
        last: str = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                log.warning("retrying %s in %.1fs (%s)", endpoint, delay, last)
                self._sleep(delay)
                delay *= 2
            self._limiter.wait()
            try:
                resp = self._client.get(url, params={**params, **self._extra})
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in _RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise FetchError(f"{endpoint}: HTTP {resp.status_code}")
            return resp.content
        raise FetchError(f"{endpoint}: giving up after {self.max_retries} retries ({last})")

    def esearch(self, query: str, mindate: str, maxdate: str, retstart: int,
                retmax: int | None = None) -> tuple[int, list[str]]:
        data = self._get(
            "esearch.fcgi",
            {
                "db": "pubmed",
                "term": query,
                "mindate": mindate,
                "maxdate": maxdate,
                "datetype": "pdat",
                "retstart": retstart,
                "retmax": self.page_size if retmax is None else retmax,
            },
        )
        try:
            root = ET.fromstring(data)
        except ET.ParseError as exc:
            raise FetchError(f"esearch: unparseable reply ({exc})") from None
        error = root.findtext("ERROR")
        if error:
            raise FetchError(f"esearch {mindate}-{maxdate}: {error.strip()}")
        count = int(root.findtext("Count") or 0)
        ids = [el.text.strip() for el in root.iterfind("./IdList/Id") if el.text]
        return count, ids

    def _hits(self, query: str, mindate: str, maxdate: str) -> int:
        return self.esearch(query, mindate, maxdate, 0, retmax=0)[0]

    def plan_windows(self, query: str, year: int) -> list[list[str]]:
        """Publication-date windows covering ``year``, each under the search limit."""
        y = str(year)
        if self._hits(query, y, y) <= self.search_limit:
            return [[y, y]]
        windows = []
        for month in range(1, 13):
            days = calendar.monthrange(year, month)[1]
            lo, hi = f"{year}/{month:02d}/01", f"{year}/{month:02d}/{days:02d}"
            if self._hits(query, lo, hi) <= self.search_limit:
                windows.append([lo, hi])
                continue
            for day in range(1, days + 1):
                d = f"{year}/{month:02d}/{day:02d}"
                windows.append([d, d])
        log.info("year %d: split into %d date windows", year, len(windows))
        return windows

    def efetch(self, ids: list[str]) -> bytes:
        return self._get("efetch.fcgi", {"db": "pubmed", "id": ",".join(ids), "retmode": "xml"})

    def _write_batches(self, ids: list[str], seen: set[str], fh: IO[str]) -> int:
        skipped = 0
        for i in range(0, len(ids), self.batch_size):
            batch = ids[i : i + self.batch_size]
            if self.dedupe:
                batch = [pmid for pmid in batch if pmid not in seen]
            if not batch:
                continue
            stats = ReadStats()
            xml = self.efetch(batch)
            for doc in iter_pubmed_articles(
                io.BytesIO(xml), source=Source.FETCHED, year_range=None,
                stats=stats, label="efetch", raw=xml,
            ):
                if self.dedupe and doc.id in seen:
                    continue
                seen.add(doc.id)
                fh.write(document_to_json(doc) + "\n")
            skipped += stats.skipped
            fh.flush()
        return skipped

    def fetch(
        self,
        query: str,
        year_range: tuple[int, int],
        out: str | os.PathLike,
        cursor: str | os.PathLike | None = None,
    ) -> CorpusManifest:
        out = Path(out)
        cursor_path = Path(cursor) if cursor else out.with_name(out.name + ".cursor")
        state = _load_cursor(cursor_path, query, year_range)
        seen = _existing_ids(out) if out.exists() else set()
        skipped = 0
        first, last = year_range
        with open(out, "a", encoding="utf-8", newline="\n") as fh:
            for year in range(first, last + 1):
                if year in state["completed"]:
                    continue
                if state["year"] == year and state.get("windows"):
                    windows, w, retstart = state["windows"], state["window"], state["retstart"]
                else:
                    windows, w, retstart = self.plan_windows(query, year), 0, 0
                listed = 0
                while w < len(windows):
                    lo, hi = windows[w]
                    total, ids = self.esearch(query, lo, hi, retstart)
                    if total > self.search_limit:
                        log.warning("%s-%s: %d hits; only the first %d are reachable", lo, hi, total,
                                    self.search_limit)
                        total = self.search_limit
                    skipped += self._write_batches(ids, seen, fh)
                    retstart += len(ids)
                    if not ids or retstart >= total:
                        listed += total
                        w, retstart = w + 1, 0
                    _save_cursor(cursor_path, query, year_range, state["completed"], year, retstart,
                                 windows, w)
                state["completed"].append(year)
                _save_cursor(cursor_path, query, year_range, state["completed"], None, 0)
                log.info("year %d: %d records listed", year, listed)
        docs = read_jsonl(out, year_range=None, unique_ids=False)
        notes = [f"query={query!r}", f"years={first}-{last}", f"skipped_no_abstract={skipped}"]
        return CorpusManifest.from_documents(docs, notes=notes)


def _load_cursor(path: Path, query: str, year_range: tuple[int, int]) -> dict:
    if not path.exists():
        return {"completed": [], "year": None, "retstart": 0}
    state = json.loads(path.read_text(encoding="utf-8"))
    if state.get("query") != query or tuple(state.get("years", ())) != tuple(year_range):
        raise FetchError(f"{path}: cursor belongs to a different query or year range")
    return state


def _save_cursor(path: Path, query: str, year_range, completed, year, retstart,
                 windows=None, window: int = 0) -> None:
    payload = {
        "query": query,
        "years": list(year_range),
        "completed": sorted(completed),
        "year": year,
        "windows": windows,
        "window": window,
        "retstart": retstart,
    }
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload), encoding="utf-8")
    os.replace(tmp, path)


def _existing_ids(path: Path) -> set[str]:
    # A killed run may leave a torn final line; drop it before appending.
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        cut = data.rfind(b"\n") + 1
        with open(path, "r+b") as fh:
            fh.truncate(cut)
        data = data[:cut]
    ids = set()
    for line in data.splitlines():
        if line.strip():
            ids.add(json.loads(line)["id"])
    return ids

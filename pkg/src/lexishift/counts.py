"""Per-slice raw frequency tables keyed by (lemma, UPOS), sharded counting, CSV snapshots."""

from __future__ import annotations

import csv
import io
import itertools
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple

from lexishift.errors import RecordError, SnapshotError, UnknownSliceError
from lexishift.tagging import (
    PRETAGGED_HEADER_RE,
    UPOS_TAGS,
    TaggedDocument,
    parse_pretagged_block,
    pretagged_blocks,
)

COUNTS_HEADER = ["lemma", "upos", "slice", "count"]
TOTALS_HEADER = ["slice", "token_total", "doc_total"]


class LemmaPosKey(NamedTuple):
    lemma: str
    upos: str

    def __str__(self) -> str:
        return f"{self.lemma}_{self.upos}"

    @classmethod
    def parse(cls, text: str) -> "LemmaPosKey":
        """Parse ``lemma_UPOS`` notation, e.g. ``crucial_ADJ``."""
        lemma, sep, upos = text.rpartition("_")
        if not sep or not lemma or upos not in UPOS_TAGS:
            raise ValueError(f"not a lemma_UPOS key: {text!r}")
        return cls(lemma.lower(), upos)

    def validate(self) -> "LemmaPosKey":
        if not self.lemma or self.lemma != self.lemma.lower():
            raise ValueError(f"lemma must be non-empty lowercase: {self.lemma!r}")
        if self.upos not in UPOS_TAGS:
            raise ValueError(f"not a UPOS tag: {self.upos!r}")
        return self


@dataclass(frozen=True, slots=True)
class SliceTotals:
    slice: int
    token_total: int
    doc_total: int


class CountTable:
    """Raw counts per (key, slice) plus per-slice token and document totals.

    Treated as immutable once built; :func:`merge` and :meth:`scaled` return new
    tables.
    """

    __slots__ = ("_by_slice", "_totals")

    def __init__(
        self,
        by_slice: Mapping[int, Mapping[LemmaPosKey, int]] | None = None,
        totals: Mapping[int, SliceTotals] | None = None,
    ) -> None:
        self._by_slice: dict[int, Counter] = {s: Counter(c) for s, c in (by_slice or {}).items()}
        self._totals: dict[int, SliceTotals] = dict(totals or {})
        missing = set(self._by_slice) - set(self._totals)
        if missing:
            raise SnapshotError(f"slices without totals: {sorted(missing)}")
        for s, c in self._by_slice.items():
            if c:
                lo, hi = min(c.values()), max(c.values())
                if lo < 0:
                    raise SnapshotError(f"slice {s}: negative count")
                if hi > self._totals[s].token_total:
                    raise SnapshotError(f"slice {s}: a count of {hi} would exceed token_total "
                                        f"{self._totals[s].token_total}")

    # -- queries -----------------------------------------------------------

    @property
    def slices(self) -> list[int]:
        return sorted(self._totals)

    @property
    def totals(self) -> dict[int, SliceTotals]:
        return dict(self._totals)

    def totals_for(self, slice_: int) -> SliceTotals:
        try:
            return self._totals[slice_]
        except KeyError:
            raise UnknownSliceError(f"unknown slice {slice_}") from None

    def count(self, key: LemmaPosKey | tuple[str, str], slice_: int) -> int:
        self.totals_for(slice_)
        return self._by_slice.get(slice_, {}).get(key, 0)

    def slice_counts(self, slice_: int) -> Mapping[LemmaPosKey, int]:
        self.totals_for(slice_)
        return self._by_slice.get(slice_, Counter())

    def keys(self) -> set[LemmaPosKey]:
        out: set[LemmaPosKey] = set()
        for c in self._by_slice.values():
            out.update(c)
        return out

    def entries(self) -> dict[LemmaPosKey, dict[int, int]]:
        out: dict[LemmaPosKey, dict[int, int]] = {}
        for s in sorted(self._by_slice):
            for key, n in self._by_slice[s].items():
                out.setdefault(key, {})[s] = n
        return out

    def token_total(self, slice_: int, exclude_upos: Iterable[str] = ()) -> int:
        """Slice token total, optionally minus tokens whose tag is in ``exclude_upos``."""
        total = self.totals_for(slice_).token_total
        exclude = frozenset(exclude_upos)
        if exclude:
            total -= sum(n for k, n in self._by_slice.get(slice_, {}).items() if k[1] in exclude)
        return total

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CountTable):
            return NotImplemented
        return self._totals == other._totals and _nonzero(self._by_slice) == _nonzero(other._by_slice)

    def __repr__(self) -> str:
        return f"CountTable(slices={self.slices}, keys={len(self.keys())})"

    # -- derived tables -----------------------------------------------------

    def scaled(self, k: int) -> "CountTable":
        by_slice = {s: {key: n * k for key, n in c.items()} for s, c in self._by_slice.items()}
        totals = {s: SliceTotals(s, t.token_total * k, t.doc_total * k) for s, t in self._totals.items()}
        return CountTable(by_slice, totals)

    def pruned(self, min_count: int) -> "CountTable":
        """Drop keys whose count across all slices is below ``min_count``; totals are kept."""
        overall: Counter = Counter()
        for c in self._by_slice.values():
            overall.update(c)
        keep = {k for k, n in overall.items() if n >= min_count}
        by_slice = {s: {k: n for k, n in c.items() if k in keep} for s, c in self._by_slice.items()}
        return CountTable(by_slice, self._totals)

    def restricted(self, slices: Iterable[int]) -> "CountTable":
        wanted = set(slices)
        for s in wanted:
            self.totals_for(s)
        by_slice = {s: c for s, c in self._by_slice.items() if s in wanted}
        return CountTable(by_slice, {s: t for s, t in self._totals.items() if s in wanted})


def _nonzero(by_slice: Mapping[int, Counter]) -> dict[int, dict]:
    return {s: {k: n for k, n in c.items() if n} for s, c in by_slice.items() if any(c.values())}


# ---------------------------------------------------------------------------
# counting


def count_tokens(docs: Iterable[TaggedDocument]) -> CountTable:
    """Tally every token of every document into its (key, slice) cell."""
    raw: dict[int, Counter] = {}
    ntok: Counter = Counter()
    ndoc: Counter = Counter()
    for doc in docs:
        c = raw.get(doc.slice)
        if c is None:
            c = raw[doc.slice] = Counter()
        c.update([(t[1], t[2]) for t in doc.tokens])
        ntok[doc.slice] += len(doc.tokens)
        ndoc[doc.slice] += 1
    by_slice = {s: {LemmaPosKey(*k): n for k, n in c.items()} for s, c in raw.items()}
    totals = {s: SliceTotals(s, ntok[s], ndoc[s]) for s in ndoc}
    return CountTable(by_slice, totals)


def merge(shards: Iterable[CountTable]) -> CountTable:
    """Cellwise and totalwise sum; independent of shard order and grouping."""
    by_slice: dict[int, Counter] = {}
    tok: Counter = Counter()
    docs: Counter = Counter()
    for shard in shards:
        for s, c in shard._by_slice.items():
            by_slice.setdefault(s, Counter()).update(c)
        for s, t in shard._totals.items():
            tok[s] += t.token_total
            docs[s] += t.doc_total
    totals = {s: SliceTotals(s, tok[s], docs[s]) for s in tok}
    for s in totals:
        by_slice.setdefault(s, Counter())
    return CountTable(by_slice, totals)


def opm(table: CountTable, key: LemmaPosKey | tuple[str, str], slice_: int, exclude_upos: Iterable[str] = ()) -> float:
    """Occurrences per million tokens of ``key`` in ``slice_``."""
    total = table.token_total(slice_, exclude_upos)
    if total <= 0:
        raise SnapshotError(f"slice {slice_} has no tokens")
    return 1e6 * table.count(key, slice_) / total


# -- sharded / parallel counting ---------------------------------------------

_WORKER_TAGGER = None


def _init_worker(lexicon_paths: tuple[str, ...] | None) -> None:
    global _WORKER_TAGGER
    from lexishift.tagging import Lexicon, Tagger

    lex = Lexicon.load(*lexicon_paths) if lexicon_paths else Lexicon.default()
    _WORKER_TAGGER = Tagger(lex)


def _count_chunk(chunk: list) -> CountTable:
    if chunk and not isinstance(chunk[0], TaggedDocument):
        tagger = _WORKER_TAGGER
        chunk = [tagger.tag(doc) for doc in chunk]
    return count_tokens(chunk)


def _chunks(items: Iterable, size: int) -> Iterator[list]:
    it = iter(items)
    while True:
        chunk = list(itertools.islice(it, size))
        if not chunk:
            return
        yield chunk


def count_sharded(
    docs: Iterable,
    *,
    shards: int = 1,
    jobs: int = 1,
    chunk_size: int = 500,
    tagger=None,
    lexicon_paths: Iterable[str | os.PathLike] | None = None,
) -> CountTable:
    """Count a document stream through ``shards`` partial tables, then merge.

    Items may be :class:`TaggedDocument` or raw documents; raw ones are tagged
    with ``tagger`` in-process, or by a per-worker tagger built from
    ``lexicon_paths`` when ``jobs > 1``. Chunk ``i`` goes to shard ``i % shards``.
    """
    if shards < 1 or jobs < 1:
        raise ValueError("shards and jobs must be >= 1")
    partials: list[list[CountTable]] = [[] for _ in range(shards)]
    chunks = _chunks(docs, chunk_size)
    lex_paths = tuple(str(p) for p in lexicon_paths) if lexicon_paths else None
    if jobs == 1:
        if tagger is None:
            from lexishift.tagging import Lexicon, Tagger

            tagger = Tagger(Lexicon.load(*lex_paths) if lex_paths else Lexicon.default())
        for i, chunk in enumerate(chunks):
            if chunk and not isinstance(chunk[0], TaggedDocument):
                chunk = [tagger.tag(d) for d in chunk]
            partials[i % shards].append(count_tokens(chunk))
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(lex_paths,)) as pool:
            for i, part in enumerate(pool.map(_count_chunk, chunks)):
                partials[i % shards].append(part)
    return merge(merge(group) for group in partials)


def _count_block_chunk(chunk: list[tuple[int, list[str]]], errors, label: str) -> CountTable:
    # Optimistic path: tally raw "<TAB>lemma<TAB>upos" tails and validate only the
    # distinct ones. Anything odd re-runs the chunk through the exact parser.
    raw: dict[int, Counter] = {}
    ntok: Counter = Counter()
    ndoc: Counter = Counter()
    for first, block in chunk:
        m = PRETAGGED_HEADER_RE.match(block[0])
        if m is None:
            return _count_blocks_exact(chunk, errors, label)
        year = int(m.group(2))
        body = block[1:]
        c = raw.get(year)
        if c is None:
            c = raw[year] = Counter()
        c.update([line[line.find("\t", 1):] for line in body])
        ntok[year] += len(body)
        ndoc[year] += 1
    by_slice: dict[int, dict[LemmaPosKey, int]] = {}
    for year, c in raw.items():
        out: dict[LemmaPosKey, int] = {}
        for tail, n in c.items():
            lemma, tab, upos = tail[1:].partition("\t")
            if tail[:1] != "\t" or not tab or not lemma or upos not in UPOS_TAGS:
                return _count_blocks_exact(chunk, errors, label)
            key = LemmaPosKey(lemma.lower(), upos)
            out[key] = out.get(key, 0) + n
        by_slice[year] = out
    return CountTable(by_slice, {s: SliceTotals(s, ntok[s], ndoc[s]) for s in ndoc})


def _count_blocks_exact(chunk, errors, label) -> CountTable:
    return count_tokens(parse_pretagged_block(first, block, errors, label) for first, block in chunk)


def count_pretagged(
    path: str | os.PathLike,
    *,
    shards: int = 1,
    chunk_size: int = 500,
    errors: list[RecordError] | None = None,
) -> CountTable:
    """Count a pre-tagged TSV file without materialising token objects.

    Equivalent to ``count_sharded(parse_pretagged(path, errors), shards=...)``,
    including error reporting, but several times faster.
    """
    if shards < 1:
        raise ValueError("shards must be >= 1")
    partials: list[list[CountTable]] = [[] for _ in range(shards)]
    with open(path, encoding="utf-8", newline="\n") as fh:
        for i, chunk in enumerate(_chunks(pretagged_blocks(fh), chunk_size)):
            partials[i % shards].append(_count_block_chunk(chunk, errors, str(path)))
    return merge(merge(group) for group in partials)


# ---------------------------------------------------------------------------
# snapshots


def totals_path_for(counts_path: str | os.PathLike) -> Path:
    """``counts.csv`` -> ``counts.totals.csv``."""
    p = Path(counts_path)
    stem = p.name[: -len(p.suffix)] if p.suffix else p.name
    return p.with_name(f"{stem}.totals{p.suffix or '.csv'}")


def snapshot_text(table: CountTable) -> tuple[str, str]:
    counts_buf = io.StringIO()
    w = csv.writer(counts_buf, lineterminator="\n")
    w.writerow(COUNTS_HEADER)
    rows = [
        (key.lemma, key.upos, s, n)
        for s, c in table._by_slice.items()
        for key, n in c.items()
        if n
    ]
    rows.sort()
    w.writerows(rows)
    totals_buf = io.StringIO()
    w = csv.writer(totals_buf, lineterminator="\n")
    w.writerow(TOTALS_HEADER)
    for s in table.slices:
        t = table._totals[s]
        w.writerow([s, t.token_total, t.doc_total])
    return counts_buf.getvalue(), totals_buf.getvalue()


def save_snapshot(
    table: CountTable,
    counts_path: str | os.PathLike,
    totals_path: str | os.PathLike | None = None,
) -> tuple[Path, Path]:
    """Write canonical counts and totals CSVs (sorted by lemma, upos, slice)."""
    counts_path = Path(counts_path)
    totals_path = Path(totals_path) if totals_path else totals_path_for(counts_path)
    counts_text, totals_text = snapshot_text(table)
    counts_path.write_text(counts_text, encoding="utf-8", newline="\n")
    totals_path.write_text(totals_text, encoding="utf-8", newline="\n")
    return counts_path, totals_path


def _int_field(value: str, what: str, path, rowno: int) -> int:
    try:
        n = int(value)
    except ValueError:
        raise SnapshotError(f"{path}: row {rowno}: {what} is not an integer: {value!r}") from None
    if n < 0:
        raise SnapshotError(f"{path}: row {rowno}: negative {what}")
    return n


def load_snapshot(counts_path: str | os.PathLike, totals_path: str | os.PathLike | None = None) -> CountTable:
    counts_path = Path(counts_path)
    totals_path = Path(totals_path) if totals_path else totals_path_for(counts_path)
    totals: dict[int, SliceTotals] = {}
    with open(totals_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != TOTALS_HEADER:
            raise SnapshotError(f"{totals_path}: row 1: expected header {','.join(TOTALS_HEADER)}")
        for rowno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise SnapshotError(f"{totals_path}: row {rowno}: expected 3 fields")
            s = int(row[0]) if row[0].lstrip("-").isdigit() else None
            if s is None:
                raise SnapshotError(f"{totals_path}: row {rowno}: slice is not an integer")
            if s in totals:
                raise SnapshotError(f"{totals_path}: row {rowno}: duplicate slice {s}")
            totals[s] = SliceTotals(
                s,
                _int_field(row[1], "token_total", totals_path, rowno),
                _int_field(row[2], "doc_total", totals_path, rowno),
            )
    by_slice: dict[int, dict[LemmaPosKey, int]] = {}
    with open(counts_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != COUNTS_HEADER:
            raise SnapshotError(f"{counts_path}: row 1: expected header {','.join(COUNTS_HEADER)}")
        for rowno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise SnapshotError(f"{counts_path}: row {rowno}: expected 4 fields")
            lemma, upos, s_text, n_text = row
            if not lemma or lemma != lemma.lower():
                raise SnapshotError(f"{counts_path}: row {rowno}: lemma must be non-empty lowercase")
            if upos not in UPOS_TAGS:
                raise SnapshotError(f"{counts_path}: row {rowno}: not a UPOS tag: {upos!r}")
            try:
                s = int(s_text)
            except ValueError:
                raise SnapshotError(f"{counts_path}: row {rowno}: slice is not an integer") from None
            if s not in totals:
                raise SnapshotError(f"{counts_path}: row {rowno}: slice {s} missing from {totals_path.name}")
            cell = by_slice.setdefault(s, {})
            key = LemmaPosKey(lemma, upos)
            if key in cell:
                raise SnapshotError(f"{counts_path}: row {rowno}: duplicate cell {key} {s}")
            cell[key] = _int_field(n_text, "count", counts_path, rowno)
    return CountTable(by_slice, totals)

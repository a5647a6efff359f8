"""Focal-word synonym clusters: thesaurus intake, LLM relevance filter, trend attachment, verdicts."""

from __future__ import annotations

import csv
import logging
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Sequence

from lexishift.counts import CountTable, LemmaPosKey
from lexishift.errors import FilterRefused, ThesaurusError
from lexishift.tagging import UPOS_TAGS
from lexishift.trends import P_THRESHOLD, TrendRecord, format_float, trend_record

log = logging.getLogger(__name__)

RISE_FRACTION = 0.6
MAX_MEMBERS = 5
DEFAULT_BUCKET_EDGES = (-100.0, 0.0, 100.0, 300.0, math.inf)

FILTER_PROMPT = (
    "I am looking for synonyms in the context of academic writing. "
    'Given the following {target_pos} "{target_word}", I have found these synonyms: {synonyms}. '
    "Which of these are most relevant in the context of the given part of speech in an academic abstract? "
    "Please disregard any repeats and only reply with a list of the 5 most relevant synonyms "
    "separated by commas (csv-like)."
)

POS_NAMES = {
    "ADJ": "adjective", "ADP": "adposition", "ADV": "adverb", "AUX": "auxiliary verb",
    "CCONJ": "conjunction", "DET": "determiner", "INTJ": "interjection", "NOUN": "noun",
    "NUM": "numeral", "PART": "particle", "PRON": "pronoun", "PROPN": "proper noun",
    "PUNCT": "punctuation", "SCONJ": "conjunction", "SYM": "symbol", "VERB": "verb", "X": "word",
}


class Verdict(str, Enum):
    CO_RISE = "co_rise"
    REPLACEMENT = "replacement"
    MIXED = "mixed"
    SINGLETON = "singleton"


@dataclass(frozen=True)
class FocalWord:
    key: LemmaPosKey
    provenance: str = ""


@dataclass(frozen=True)
class ThesaurusEntry:
    key: LemmaPosKey
    candidates: tuple[str, ...] = ()


@dataclass
class SynonymCluster:
    focal: FocalWord
    members: list[LemmaPosKey]
    focal_trend: TrendRecord
    member_trends: list[TrendRecord] = field(default_factory=list)
    verdict: Verdict | None = None


# ---------------------------------------------------------------------------
# input files


def _key_from_row(lemma: str, upos: str, where: str) -> LemmaPosKey:
    lemma, upos = lemma.strip().lower(), upos.strip().upper()
    if not lemma:
        raise ThesaurusError(f"{where}: empty lemma")
    if upos not in UPOS_TAGS:
        raise ThesaurusError(f"{where}: not a UPOS tag: {upos!r}")
    return LemmaPosKey(lemma, upos)


def _rows(path: str | os.PathLike, header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if [h.strip().lower() for h in first] != header:
            raise ThesaurusError(f"{path}: row 1: expected header {','.join(header)}")
        for rowno, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            yield rowno, row


def load_focal_words(path: str | os.PathLike) -> list[FocalWord]:
    out = []
    for rowno, row in _rows(path, ["lemma", "upos", "provenance"]):
        if len(row) not in (2, 3):
            raise ThesaurusError(f"{path}: row {rowno}: expected lemma,upos,provenance")
        key = _key_from_row(row[0], row[1], f"{path}: row {rowno}")
        out.append(FocalWord(key, row[2].strip() if len(row) == 3 else ""))
    return out


def _clean_candidates(raw: Iterable[str], where: str) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for cand in raw:
        cand = cand.strip().lower()
        if not cand:
            continue
        if len(cand.split()) > 1:
            log.warning("%s: dropping multi-word candidate %r", where, cand)
            continue
        seen.setdefault(cand, None)
    return tuple(seen)


def load_thesaurus(path: str | os.PathLike) -> dict[LemmaPosKey, ThesaurusEntry]:
    """Read ``lemma,upos,candidates`` rows; candidates are semicolon-separated."""
    out: dict[LemmaPosKey, ThesaurusEntry] = {}
    for rowno, row in _rows(path, ["lemma", "upos", "candidates"]):
        where = f"{path}: row {rowno}"
        if len(row) != 3:
            raise ThesaurusError(f"{where}: expected 3 fields, got {len(row)}")
        key = _key_from_row(row[0], row[1], where)
        cands = _clean_candidates(row[2].split(";"), where)
        if key in out:
            cands = _clean_candidates(out[key].candidates + cands, where)
        out[key] = ThesaurusEntry(key, cands)
    return out


def thesaurus_entry(thesaurus: dict[LemmaPosKey, ThesaurusEntry], key: LemmaPosKey) -> ThesaurusEntry:
    """Entry for ``key``; a focal key absent from the thesaurus gets no candidates."""
    return thesaurus.get(key) or ThesaurusEntry(key, ())


def load_members(path: str | os.PathLike) -> dict[LemmaPosKey, list[str]]:
    """Cached filter output: ``lemma,upos,members`` with semicolon-separated members."""
    out: dict[LemmaPosKey, list[str]] = {}
    for rowno, row in _rows(path, ["lemma", "upos", "members"]):
        if len(row) != 3:
            raise ThesaurusError(f"{path}: row {rowno}: expected 3 fields")
        key = _key_from_row(row[0], row[1], f"{path}: row {rowno}")
        out[key] = list(_clean_candidates(row[2].split(";"), f"{path}: row {rowno}"))
    return out


def write_members(members: dict[LemmaPosKey, Sequence[str]], out: str | os.PathLike) -> None:
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lemma", "upos", "members"])
        for key, lemmas in members.items():
            w.writerow([key.lemma, key.upos, ";".join(lemmas)])


# ---------------------------------------------------------------------------
# LLM relevance filter


def filter_prompt(focal: FocalWord, candidates: Sequence[str]) -> str:
    return FILTER_PROMPT.format(
        target_pos=POS_NAMES[focal.key.upos],
        target_word=focal.key.lemma,
        synonyms=", ".join(candidates),
    )


_ENUMERATOR_RE = re.compile(r"^\(?\d+[.)]\s*")


def parse_filter_reply(reply: str, candidates: Sequence[str], limit: int = MAX_MEMBERS) -> list[str]:
    allowed = set(candidates)
    picked: dict[str, None] = {}
    for line in reply.replace("\n", ",").split(","):
        item = _ENUMERATOR_RE.sub("", line.strip()).strip("\"'`*.-•").strip().lower()
        if not item:
            continue
        if item not in allowed:
            log.warning("filter reply item %r is not a thesaurus candidate; dropped", item)
            continue
        picked.setdefault(item, None)
    return list(picked)[:limit]


def llm_filter_top5(focal: FocalWord, candidates: Sequence[str], client, *, fallback: bool = False) -> list[str]:
    """Ask the chat endpoint for the five candidates most relevant to academic writing.

    Raises :class:`FilterRefused` on an empty or unusable reply unless
    ``fallback`` is set, in which case the first five candidates are returned.
    """
    candidates = [c for c in dict.fromkeys(candidates) if c != focal.key.lemma]
    if not candidates:
        raise ValueError(f"{focal.key}: no candidates to filter")
    reply = client.complete(filter_prompt(focal, candidates), tag="filter", meta={"focal": str(focal.key)})
    picked = parse_filter_reply(reply, candidates)
    if not picked:
        if fallback:
            log.warning("%s: filter refused; falling back to first %d candidates", focal.key, MAX_MEMBERS)
            return candidates[:MAX_MEMBERS]
        raise FilterRefused()
    return picked


# ---------------------------------------------------------------------------
# cluster construction and classification


def build_cluster(
    focal: FocalWord,
    members: Iterable[str | LemmaPosKey],
    table: CountTable,
    slice_from: int,
    slice_to: int,
    **trend_kwargs,
) -> SynonymCluster:
    """Attach trend records to a focal word and its members (members inherit the focal POS)."""
    keys: list[LemmaPosKey] = []
    for m in members:
        lemma = m.lemma if isinstance(m, LemmaPosKey) else m
        key = LemmaPosKey(lemma.strip().lower(), focal.key.upos)
        if key != focal.key and key not in keys:
            keys.append(key)
    if len(keys) > MAX_MEMBERS:
        raise ValueError(f"{focal.key}: at most {MAX_MEMBERS} members, got {len(keys)}")
    focal_trend = trend_record(table, focal.key, slice_from, slice_to, **trend_kwargs)
    member_trends = [trend_record(table, k, slice_from, slice_to, **trend_kwargs) for k in keys]
    return SynonymCluster(focal, keys, focal_trend, member_trends)


def classify_cluster(
    c: SynonymCluster,
    p_threshold: float = P_THRESHOLD,
    rise_fraction: float = RISE_FRACTION,
) -> Verdict:
    """Test a cluster against the replacement hypothesis.

    Requires the focal word to be significantly up; then ``co_rise`` when at
    least ``rise_fraction`` of members moved up, ``replacement`` when at least
    that fraction fell significantly, and ``mixed`` otherwise.
    """
    if not c.member_trends:
        return Verdict.SINGLETON
    f = c.focal_trend
    if not (f.direction == "up" and f.p < p_threshold):
        return Verdict.MIXED
    n = len(c.member_trends)
    up = sum(1 for t in c.member_trends if t.direction == "up")
    down = sum(1 for t in c.member_trends if t.direction == "down" and t.p < p_threshold)
    if up >= rise_fraction * n:
        return Verdict.CO_RISE
    if down >= rise_fraction * n:
        return Verdict.REPLACEMENT
    return Verdict.MIXED


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def buckets(self) -> list[tuple[float, float, int]]:
        return [(lo, hi, n) for lo, hi, n in zip(self.edges, self.edges[1:], self.counts)]


def cluster_distribution(
    clusters: Iterable[SynonymCluster],
    edges: Sequence[float] = DEFAULT_BUCKET_EDGES,
) -> Histogram:
    """Histogram of member percent changes over right-closed buckets ``(lo, hi]``.

    The first bucket is closed on both sides so a member that vanished
    (-100%) is counted.
    """
    edges = tuple(float(e) for e in edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bucket edges must be strictly increasing")
    if edges[0] > -100.0 or edges[-1] != math.inf:
        raise ValueError("bucket edges must start at or below -100 and end at +inf")
    counts = [0] * (len(edges) - 1)
    for c in clusters:
        for t in c.member_trends:
            for i in range(len(counts)):
                lo, hi = edges[i], edges[i + 1]
                if (t.pct_change > lo or (i == 0 and t.pct_change >= lo)) and t.pct_change <= hi:
                    counts[i] += 1
                    break
    return Histogram(edges, tuple(counts))


CLUSTERS_HEADER = [
    "focal_lemma", "focal_upos", "role", "lemma", "upos",
    "opm_from", "opm_to", "pct_change", "chi2", "p", "direction", "verdict",
]


def write_clusters_csv(clusters: Iterable[SynonymCluster], out: str | os.PathLike | IO[str]) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            write_clusters_csv(clusters, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CLUSTERS_HEADER)
    for c in clusters:
        verdict = (c.verdict or classify_cluster(c)).value
        rows = [("focal", c.focal_trend)] + [("member", t) for t in c.member_trends]
        for role, t in rows:
            w.writerow([
                c.focal.key.lemma, c.focal.key.upos, role, t.key.lemma, t.key.upos,
                format_float(t.opm_from), format_float(t.opm_to), format_float(t.pct_change), format_float(t.chi2), format_float(t.p),
                t.direction, verdict,
            ])


def write_histogram_csv(hist: Histogram, out: str | os.PathLike) -> None:
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lo", "hi", "count"])
        for lo, hi, n in hist.buckets():
            w.writerow([repr(lo), "inf" if math.isinf(hi) else repr(hi), n])


def verdict_counts(clusters: Iterable[SynonymCluster]) -> Counter:
    return Counter((c.verdict or classify_cluster(c)).value for c in clusters)


__all__ = [
    "DEFAULT_BUCKET_EDGES",
    "FILTER_PROMPT",
    "FocalWord",
    "Histogram",
    "SynonymCluster",
    "ThesaurusEntry",
    "Verdict",
    "build_cluster",
    "classify_cluster",
    "cluster_distribution",
    "filter_prompt",
    "llm_filter_top5",
    "load_focal_words",
    "load_members",
    "load_thesaurus",
    "parse_filter_reply",
    "thesaurus_entry",
    "write_clusters_csv",
    "write_histogram_csv",
    "write_members",
]

"""Human-vs-LLM abstract comparison.

Sample human abstracts from one slice, have a chat model boil each down to
keywords and write a fresh abstract from them, then compare the two corpora
and intersect words falling over time with words the model underuses.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import random
import re
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from lexishift.counts import CountTable, LemmaPosKey
from lexishift.ingest import Document, Source
from lexishift.trends import (
    P_THRESHOLD,
    ContingencyTable2x2,
    TrendRecord,
    chi_square_2x2,
    format_float,
    percent_change,
)

log = logging.getLogger(__name__)

SUMMARIZE_PROMPT = (
    "The following text is an abstract from a scientific paper: {input_text} "
    "Summarize the abstract in keywords, separate keywords by commas"
)
REGENERATE_PROMPT = (
    "Please write an abstract for a scientific paper, about 200 words in length, "
    "based on the following notes."
)
REFUSAL_RETRIES = 2

_REFUSAL_RE = re.compile(
    r"^\s*(i'?m sorry|i am sorry|sorry,|i can(?:no|')t|i cannot|i am unable|i'm unable|"
    r"unfortunately,? i|as an ai)",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class RegenPair:
    original: Document
    keywords: tuple[str, ...]
    regenerated: str | None

    @property
    def refused(self) -> bool:
        return self.regenerated is None

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.original.id,
                "keywords": list(self.keywords),
                "regenerated": self.regenerated,
                "refused": self.refused,
            },
            ensure_ascii=False,
        )


class Refusal(Exception):
    """The model declined (content filter, empty reply, or an apology)."""


def is_refusal(text: str | None, finish_reason: str | None = None) -> bool:
    if finish_reason == "content_filter":
        return True
    if text is None or not text.strip():
        return True
    return bool(_REFUSAL_RE.match(text))


# ---------------------------------------------------------------------------
# sampling


def sample_abstracts(corpus: Iterable[Document], slice_: int, n: int, seed: int) -> list[Document]:
    """Uniform sample without replacement of ``n`` documents from ``slice_``.

    Single-pass reservoir sampling (Algorithm R); the result depends only on
    the corpus order and ``seed``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = random.Random(seed)
    reservoir: list[Document] = []
    seen = 0
    for doc in corpus:
        if doc.slice != slice_:
            continue
        if seen < n:
            reservoir.append(doc)
        else:
            j = rng.randrange(seen + 1)
            if j < n:
                reservoir[j] = doc
        seen += 1
    if seen < n:
        log.warning("only %d documents in slice %d; returning all of them (wanted %d)", seen, slice_, n)
    return reservoir


# ---------------------------------------------------------------------------
# prompting


def _ask(client, prompt: str, tag: str, meta: dict) -> str:
    for attempt in range(REFUSAL_RETRIES + 1):
        reply = client.chat(prompt, tag=tag, meta={**meta, "attempt": attempt})
        if not is_refusal(reply.content, reply.finish_reason):
            return reply.content
    raise Refusal(tag)


def parse_keywords(reply: str) -> list[str]:
    return [part.strip() for part in reply.split(",") if part.strip()]


def summarize_keywords(doc: Document, client) -> list[str]:
    """Keywords for one abstract; raises :class:`Refusal` if the model declines."""
    reply = _ask(client, SUMMARIZE_PROMPT.format(input_text=doc.text), "summarize", {"id": doc.id})
    keywords = parse_keywords(reply)
    if not keywords:
        raise Refusal("summarize")
    return keywords


def regenerate_prompt(keywords: Sequence[str]) -> str:
    return f"{REGENERATE_PROMPT} {', '.join(keywords)}"


def regenerate_abstract(keywords: Sequence[str], client, *, doc_id: str | None = None) -> str:
    if not keywords:
        raise ValueError("regenerate_abstract needs at least one keyword")
    return _ask(client, regenerate_prompt(keywords), "regenerate", {"id": doc_id})


def regenerate_one(doc: Document, client) -> RegenPair:
    try:
        keywords = summarize_keywords(doc, client)
    except Refusal:
        return RegenPair(doc, (), None)
    try:
        text = regenerate_abstract(keywords, client, doc_id=doc.id)
    except Refusal:
        return RegenPair(doc, tuple(keywords), None)
    return RegenPair(doc, tuple(keywords), text)


def run_regen(
    docs: Sequence[Document],
    client,
    out: str | os.PathLike | IO[str] | None = None,
) -> list[RegenPair]:
    """Regenerate every sampled abstract (bounded concurrency via the client).

    Every pair, refused or not, is written to ``out`` in sample order.
    Transport failures propagate as :class:`lexishift.errors.LLMError`.
    """
    pairs = client.map(lambda d: regenerate_one(d, client), docs)
    if out is not None:
        write_regen_jsonl(pairs, out)
    refused = sum(p.refused for p in pairs)
    log.info("regenerated %d of %d abstracts (%d refused)", len(pairs) - refused, len(pairs), refused)
    return pairs


def write_regen_jsonl(pairs: Iterable[RegenPair], out: str | os.PathLike | IO[str]) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            write_regen_jsonl(pairs, fh)
        return
    for p in pairs:
        out.write(p.to_json() + "\n")


def read_regen_jsonl(path: str | os.PathLike, originals: dict[str, Document]) -> list[RegenPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            pairs.append(RegenPair(originals[obj["id"]], tuple(obj["keywords"]), obj["regenerated"]))
    return pairs


def regenerated_documents(pairs: Iterable[RegenPair]) -> list[Document]:
    """AI-side corpus: one document per successful pair, same id and slice as its original."""
    return [
        Document(p.original.id, p.original.slice, p.regenerated, Source.JSONL)
        for p in pairs
        if not p.refused
    ]


# ---------------------------------------------------------------------------
# corpus comparison


@dataclass(frozen=True, slots=True)
class ComparisonRecord:
    key: LemmaPosKey
    opm_human: float
    opm_ai: float
    pct_delta: float
    chi2: float
    p: float


COMPARE_HEADER = ["lemma", "upos", "opm_human", "opm_ai", "pct_delta", "chi2", "p"]


def _only_slice(table: CountTable, name: str) -> int:
    if len(table.slices) != 1:
        raise ValueError(f"{name} table must have exactly one slice, has {table.slices}")
    return table.slices[0]


def compare_corpora(
    human: CountTable,
    ai: CountTable,
    *,
    continuity_correction: bool = True,
) -> list[ComparisonRecord]:
    """OPM, percent delta (human -> AI) and chi-square for every key in either corpus.

    Records come back sorted by key.
    """
    s_h, s_a = _only_slice(human, "human"), _only_slice(ai, "ai")
    total_h, total_a = human.token_total(s_h), ai.token_total(s_a)
    if total_h <= 0 or total_a <= 0:
        raise ValueError("degenerate totals: both corpora need tokens")
    c_h, c_a = human.slice_counts(s_h), ai.slice_counts(s_a)
    out = []
    for key in sorted(set(c_h) | set(c_a)):
        n_h, n_a = c_h.get(key, 0), c_a.get(key, 0)
        o_h, o_a = 1e6 * n_h / total_h, 1e6 * n_a / total_a
        try:
            chi2, p = chi_square_2x2(ContingencyTable2x2.from_counts(n_h, total_h, n_a, total_a),
                                     continuity_correction)
        except ValueError:
            chi2, p = 0.0, 1.0
        out.append(ComparisonRecord(key, o_h, o_a, percent_change(o_h, o_a), chi2, p))
    return out


def decreasing_focal_words(
    time_decreases: Iterable[TrendRecord],
    ai_comparison: Iterable[ComparisonRecord],
    p_threshold: float = P_THRESHOLD,
    *,
    require_ai_significance: bool = False,
) -> list[LemmaPosKey]:
    """Keys significantly down over time that the model also underuses.

    Any negative human->AI delta counts unless ``require_ai_significance`` is set.
    Output is ordered by the time-trend percent change, most negative first.
    """
    ai = {r.key: r for r in ai_comparison}
    hits = []
    for t in time_decreases:
        if t.direction != "down" or not t.p < p_threshold:
            continue
        r = ai.get(t.key)
        if r is None or not r.pct_delta < 0:
            continue
        if require_ai_significance and not r.p < p_threshold:
            continue
        hits.append(t)
    hits.sort(key=lambda t: (t.pct_change, t.key))
    return [t.key for t in hits]


def write_comparison_csv(records: Iterable[ComparisonRecord], out: str | os.PathLike) -> None:
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_HEADER)
        for r in records:
            w.writerow([r.key.lemma, r.key.upos, format_float(r.opm_human), format_float(r.opm_ai),
                        format_float(r.pct_delta), format_float(r.chi2), format_float(r.p)])


def read_comparison_csv(path: str | os.PathLike) -> list[ComparisonRecord]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != COMPARE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(COMPARE_HEADER)}")
        for row in reader:
            out.append(ComparisonRecord(
                LemmaPosKey(row["lemma"], row["upos"]),
                float(row["opm_human"]), float(row["opm_ai"]), float(row["pct_delta"]),
                float(row["chi2"]), float(row["p"]),
            ))
    return out


__all__ = [
    "ComparisonRecord",
    "REGENERATE_PROMPT",
    "RegenPair",
    "Refusal",
    "SUMMARIZE_PROMPT",
    "compare_corpora",
    "decreasing_focal_words",
    "is_refusal",
    "regenerate_abstract",
    "regenerated_documents",
    "run_regen",
    "sample_abstracts",
    "summarize_keywords",
]

"""Deterministic synthetic corpora: Zipf background vocabulary with planted rate changes."""

from __future__ import annotations

import itertools
import os
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from lexishift.counts import CountTable, LemmaPosKey, SliceTotals
from lexishift.ingest import Document, document_to_json
from lexishift.tagging import Lexicon, TaggedDocument, Token, format_pretagged

DEFAULT_SLICES = (2020, 2024)
FUNCTION_WORDS = (
    ("the", "DET"), ("of", "ADP"), ("and", "CCONJ"), ("in", "ADP"), ("a", "DET"),
    ("to", "PART"), ("with", "ADP"), ("for", "ADP"), ("was", "AUX"), ("were", "AUX"),
    ("that", "SCONJ"), ("by", "ADP"), ("we", "PRON"), ("this", "DET"), ("on", "ADP"),
    ("is", "AUX"), ("from", "ADP"), ("or", "CCONJ"), ("as", "SCONJ"), ("be", "AUX"),
)
_OPEN_CLASS = (("NOUN", 45), ("VERB", 20), ("ADJ", 22), ("ADV", 13))
_ONSETS = "b c d f g h k l m n p r s t v z br tr pl gr st".split()
_VOWELS = "a e i o u".split()


@dataclass(frozen=True)
class Plant:
    key: LemmaPosKey
    slice: int
    multiplier: float

    def __post_init__(self) -> None:
        if not self.multiplier > 0:
            raise ValueError(f"plant multiplier must be positive, got {self.multiplier}")

    @classmethod
    def parse(cls, text: str) -> "Plant":
        """``delve_VERB:2024:8`` -> Plant(delve_VERB, 2024, 8.0)."""
        try:
            key, slice_, mult = text.rsplit(":", 2)
            return cls(LemmaPosKey.parse(key), int(slice_), float(mult))
        except ValueError as exc:
            raise ValueError(f"bad plant spec {text!r} (want lemma_UPOS:slice:multiplier): {exc}") from None


def build_vocabulary(seed: int, vocab_size: int, reserved: set[str] = frozenset()) -> list[LemmaPosKey]:
    """Function words first, then pronounceable pseudo-words with open-class tags."""
    rng = random.Random(f"vocab:{seed}")
    vocab = [LemmaPosKey(w, t) for w, t in FUNCTION_WORDS[: min(vocab_size, len(FUNCTION_WORDS))]]
    used = {k.lemma for k in vocab} | set(reserved)
    tags = [t for t, _ in _OPEN_CLASS]
    weights = [w for _, w in _OPEN_CLASS]
    while len(vocab) < vocab_size:
        n_syll = rng.choice((2, 2, 3, 3, 4))
        word = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(n_syll))
        if word in used:
            continue
        used.add(word)
        vocab.append(LemmaPosKey(word, rng.choices(tags, weights)[0]))
    return vocab


class SynthCorpus:
    """Token distributions per slice; iterate to get :class:`TaggedDocument` objects."""

    def __init__(
        self,
        seed: int,
        n_docs: int,
        vocab_size: int = 5000,
        planted: Sequence[Plant] = (),
        *,
        slices: Sequence[int] = DEFAULT_SLICES,
        doc_len: int = 200,
        zipf_exponent: float = 1.0,
        plant_base_rate: float = 5e-4,
    ) -> None:
        if n_docs < 0 or vocab_size < 1 or doc_len < 1:
            raise ValueError("n_docs >= 0, vocab_size >= 1 and doc_len >= 1 required")
        self.seed = seed
        self.n_docs = n_docs
        self.slices = tuple(slices)
        self.doc_len = doc_len
        self.planted = tuple(planted)
        reserved = {p.key.lemma for p in self.planted}
        self.vocab = build_vocabulary(seed, vocab_size, reserved)
        base = [1.0 / (rank + 2.7) ** zipf_exponent for rank in range(len(self.vocab))]
        norm = sum(base)
        base = [w / norm for w in base]
        for p in self.planted:
            if p.key not in self.vocab:
                self.vocab.append(p.key)
                base.append(plant_base_rate)
        index = {k: i for i, k in enumerate(self.vocab)}
        self._cum: dict[int, list[float]] = {}
        for s in self.slices:
            weights = list(base)
            for p in self.planted:
                if p.slice == s:
                    weights[index[p.key]] *= p.multiplier
            self._cum[s] = list(itertools.accumulate(weights))

    def __iter__(self) -> Iterator[TaggedDocument]:
        rng = random.Random(f"docs:{self.seed}")
        vocab = self.vocab
        period = Token(".", ".", "PUNCT")
        toks = [Token(k.lemma, k.lemma, k.upos) for k in vocab]
        for i in range(self.n_docs):
            s = self.slices[i % len(self.slices)]
            draws = rng.choices(toks, cum_weights=self._cum[s], k=self.doc_len)
            out: list[Token] = []
            left = rng.randint(12, 28)
            for tok in draws:
                out.append(tok)
                left -= 1
                if left == 0:
                    out.append(period)
                    left = rng.randint(12, 28)
            if out[-1] is not period:
                out.append(period)
            yield TaggedDocument(f"S{i:07d}", s, tuple(out))

    def count_table(self) -> CountTable:
        """Same draws as iterating, tallied without building documents."""
        rng = random.Random(f"docs:{self.seed}")
        period = LemmaPosKey(".", "PUNCT")
        per_slice = {s: Counter() for s in self.slices}
        docs = Counter()
        for i in range(self.n_docs):
            s = self.slices[i % len(self.slices)]
            c = per_slice[s]
            c.update(rng.choices(self.vocab, cum_weights=self._cum[s], k=self.doc_len))
            pos, periods = 0, 0
            left = rng.randint(12, 28)
            while pos + left <= self.doc_len:
                pos += left
                periods += 1
                left = rng.randint(12, 28)
            c[period] += periods + (pos != self.doc_len)
            docs[s] += 1
        return CountTable(
            {s: dict(c) for s, c in per_slice.items()},
            {s: SliceTotals(s, sum(c.values()), docs[s]) for s, c in per_slice.items()},
        )

    def lexicon_rows(self) -> list[tuple[str, str, str]]:
        return [(k.lemma, k.lemma, k.upos) for k in self.vocab] + [(".", ".", "PUNCT")]


def tagged_to_text(doc: TaggedDocument) -> str:
    parts: list[str] = []
    for tok in doc.tokens:
        if tok.upos == "PUNCT" and parts:
            parts[-1] += tok.surface
        else:
            parts.append(tok.surface)
    return " ".join(parts)


def synth_corpus(
    seed: int,
    n_docs: int,
    vocab_size: int,
    planted: Sequence[Plant],
    out_dir: str | os.PathLike,
    **kwargs,
) -> dict[str, Path]:
    """Write ``corpus.jsonl``, ``corpus.tsv`` (pre-tagged) and ``lexicon.tsv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = SynthCorpus(seed, n_docs, vocab_size, planted, **kwargs)
    paths = {
        "jsonl": out_dir / "corpus.jsonl",
        "tsv": out_dir / "corpus.tsv",
        "lexicon": out_dir / "lexicon.tsv",
    }
    with open(paths["jsonl"], "w", encoding="utf-8", newline="\n") as fj, \
            open(paths["tsv"], "w", encoding="utf-8", newline="\n") as ft:
        for doc in corpus:
            fj.write(document_to_json(Document(doc.id, doc.slice, tagged_to_text(doc))) + "\n")
            ft.write(format_pretagged(doc))
    with open(paths["lexicon"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# synthetic vocabulary\n")
        for form, lemma, upos in corpus.lexicon_rows():
            fh.write(f"{form}\t{lemma}\t{upos}\n")
    return paths


def synth_lexicon(corpus: SynthCorpus) -> Lexicon:
    return Lexicon(corpus.lexicon_rows())

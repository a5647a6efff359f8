"""Tokenization, lemmatization and coarse UPOS tagging.

The built-in tagger is a deterministic lexicon + suffix-rule baseline. Output
from an external statistical tagger enters through the pre-tagged TSV or
CoNLL-U readers instead.
"""

from __future__ import annotations

import os
import re
import unicodedata
from dataclasses import dataclass
from importlib import resources
from typing import IO, Iterable, Iterator, NamedTuple

from lexishift.errors import CorpusError, LexiconError, RecordError

UPOS_TAGS = frozenset(
    {
        "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
        "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
    }
)

DEFAULT_TAG = "NOUN"


class Token(NamedTuple):
    surface: str
    lemma: str
    upos: str


@dataclass(frozen=True, slots=True)
class TaggedDocument:
    id: str
    slice: int
    tokens: tuple[Token, ...]


# ---------------------------------------------------------------------------
# tokenization

_TOKEN_RE = re.compile(
    r"""
    \d+(?:[.,:/]\d+)+          # 3.14, 1,000, 12:30
    | [^\W_]+(?:[-'’][^\W_]+)*  # words, keeping internal hyphens/apostrophes
    | \S                        # any other single visible character
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


# ---------------------------------------------------------------------------
# lexicon


class Lexicon:
    """Form -> (lemma, upos) analyses, loaded from ``form<TAB>lemma<TAB>upos`` files.

    The first analysis listed for a form is the one the tagger picks; the rest
    are still available to :func:`lemmatize` for (form, upos) lookups.
    """

    def __init__(self, entries: Iterable[tuple[str, str, str]] = ()) -> None:
        self._by_form: dict[str, list[tuple[str, str]]] = {}
        self._by_form_pos: dict[tuple[str, str], str] = {}
        for form, lemma, upos in entries:
            self.add(form, lemma, upos)

    def add(self, form: str, lemma: str, upos: str) -> None:
        if upos not in UPOS_TAGS:
            raise LexiconError(f"{form}: {upos!r} is not a UPOS tag")
        form, lemma = form.lower(), lemma.lower()
        if (form, upos) in self._by_form_pos:
            return
        self._by_form.setdefault(form, []).append((lemma, upos))
        self._by_form_pos[(form, upos)] = lemma

    def analyses(self, form: str) -> list[tuple[str, str]]:
        return self._by_form.get(form, [])

    def lookup(self, form: str, upos: str) -> str | None:
        return self._by_form_pos.get((form, upos))

    def has_base(self, lemma: str, upos: str) -> bool:
        return self._by_form_pos.get((lemma, upos)) == lemma

    def __len__(self) -> int:
        return len(self._by_form_pos)

    @classmethod
    def load(cls, *paths: str | os.PathLike) -> "Lexicon":
        lex = cls()
        for path in paths:
            try:
                fh = open(path, encoding="utf-8")
            except FileNotFoundError:
                raise LexiconError(f"lexicon file not found: {path}") from None
            with fh:
                lex._read(fh, str(path))
        return lex

    @classmethod
    def default(cls) -> "Lexicon":
        lex = cls()
        with resources.files("lexishift").joinpath("data/lexicon.tsv").open(encoding="utf-8") as fh:
            lex._read(fh, "lexicon.tsv")
        return lex

    @staticmethod
    def default_path() -> str:
        """Filesystem path of the bundled baseline lexicon."""
        return str(resources.files("lexishift").joinpath("data/lexicon.tsv"))

    def _read(self, fh: IO[str], label: str) -> None:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[0] or not parts[1]:
                raise LexiconError(f"{label}: line {lineno}: expected form<TAB>lemma<TAB>upos")
            try:
                self.add(*parts)
            except LexiconError as exc:
                raise LexiconError(f"{label}: line {lineno}: {exc}") from None


# ---------------------------------------------------------------------------
# lemmatization

_VOWELS = set("aeiouy")
# Stem endings left by stripping -ing/-ed from verbs whose base ends in a silent e.
_E_ENDINGS = (
    "v", "iz", "yz", "ys", "uc", "nc", "rc", "ag", "rg", "dg", "ud", "ur", "ir",
    "bl", "pl", "gl", "tl", "dl", "kl", "cl", "fl", "zl", "os", "aus", "rs", "ns", "ps", "ls",
)
_NO_UNDOUBLE = set("lsfz")


def _needs_e(stem: str) -> bool:
    if len(stem) < 2:
        return False
    if stem.endswith(_E_ENDINGS):
        return True
    if stem.endswith("at") and len(stem) >= 4 and not stem.endswith(("eat", "oat")):
        return True
    if stem.endswith(("id", "in", "ut", "ar")) and len(stem) >= 4 and stem[-3] not in _VOWELS:
        return True
    if len(stem) <= 3 and stem.endswith("us"):
        return True
    return False


def _verb_base(stem: str) -> str:
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS and stem[-1] not in _NO_UNDOUBLE:
        return stem[:-1]
    if _needs_e(stem):
        return stem + "e"
    return stem


def _strip_verb(word: str) -> str:
    if word.endswith("ying") and len(word) > 5:
        return word[:-4] + "y"
    if word.endswith("ing") and len(word) > 4:
        return _verb_base(word[:-3])
    if word.endswith("ied") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith("eed") and len(word) > 4:
        return word[:-1]
    if word.endswith("ed") and len(word) > 3:
        return _verb_base(word[:-2])
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(("sses", "shes", "ches", "xes", "zzes")) and len(word) > 4:
        return word[:-2]
    if word.endswith("s") and not word.endswith(("ss", "us", "is")) and len(word) > 3:
        return word[:-1]
    return word


def _strip_noun(word: str) -> str:
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(("sses", "shes", "ches", "xes", "zzes")) and len(word) > 4:
        return word[:-2]
    if word.endswith("s") and not word.endswith(("ss", "us", "is")) and len(word) > 3:
        return word[:-1]
    return word


def lemmatize(surface: str, upos: str, lexicon: Lexicon | None = None) -> str:
    """Lowercase lemma for ``surface`` read as ``upos``.

    A (form, upos) lexicon entry wins; otherwise verbs and nouns get
    inflectional suffix stripping and everything else maps to its lowercase
    surface.
    """
    word = surface.lower()
    if lexicon is not None:
        hit = lexicon.lookup(word, upos)
        if hit is not None:
            return hit
    if upos in ("VERB", "AUX"):
        lemma = _strip_verb(word)
    elif upos == "NOUN":
        lemma = _strip_noun(word)
    else:
        lemma = word
    return lemma or word


# ---------------------------------------------------------------------------
# baseline tagger

_ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "ical", "ic", "al", "less", "ary", "ant", "ent")
_NOUN_SUFFIXES = ("tion", "sion", "ment", "ness", "ity", "ism", "ance", "ence", "ship")


# Unicode files these under punctuation; UD tags them SYM.
_SYMBOL_PUNCT = frozenset("%#&*@/\\§†‡")


def _char_class_tag(surface: str) -> str | None:
    if len(surface) == 1 and not surface.isalnum():
        cat = unicodedata.category(surface)
        if cat.startswith("P") and surface not in _SYMBOL_PUNCT:
            return "PUNCT"
        return "SYM"
    if surface[0].isdigit() and all(ch.isdigit() or ch in ".,:/" for ch in surface):
        return "NUM"
    return None


class Tagger:
    """Lexicon-first baseline tagger.

    Order of decisions per token: character class (PUNCT/SYM/NUM), exact form
    in the lexicon, inflected form of a lexicon base entry, suffix heuristics,
    then ``default_tag``.
    """

    def __init__(self, lexicon: Lexicon | None = None, default_tag: str = DEFAULT_TAG) -> None:
        if default_tag not in UPOS_TAGS:
            raise ValueError(f"{default_tag!r} is not a UPOS tag")
        self.lexicon = lexicon if lexicon is not None else Lexicon.default()
        self.default_tag = default_tag
        self._cache: dict[str, tuple[str, str]] = {}

    def analyze(self, surface: str) -> tuple[str, str]:
        word = surface.lower()
        hit = self._cache.get(word)
        if hit is None:
            hit = self._analyze(surface, word)
            if len(self._cache) < 500_000:
                self._cache[word] = hit
        return hit

    def _analyze(self, surface: str, word: str) -> tuple[str, str]:
        tag = _char_class_tag(surface)
        if tag is not None:
            return word, tag
        lex = self.lexicon
        found = lex.analyses(word)
        if found:
            return found[0]
        for upos in ("VERB", "NOUN"):
            base = lemmatize(word, upos)
            if base != word and lex.has_base(base, upos):
                return base, upos
        if word.endswith("ly") and len(word) > 4:
            return word, "ADV"
        if word.endswith(("ing", "ed")) and len(word) > 5:
            return lemmatize(word, "VERB"), "VERB"
        if word.endswith(_NOUN_SUFFIXES):
            return lemmatize(word, "NOUN"), "NOUN"
        if word.endswith(_ADJ_SUFFIXES) and len(word) > 4:
            return word, "ADJ"
        if self.default_tag == "NOUN":
            return lemmatize(word, "NOUN"), "NOUN"
        return word, self.default_tag

    def tag_text(self, text: str) -> tuple[Token, ...]:
        analyze = self.analyze
        return tuple(Token(s, *analyze(s)) for s in tokenize(text))

    def tag(self, doc) -> TaggedDocument:
        return TaggedDocument(doc.id, doc.slice, self.tag_text(doc.text))


def tag(doc, tagger: Tagger | None = None) -> TaggedDocument:
    return (tagger or Tagger()).tag(doc)


# ---------------------------------------------------------------------------
# pre-tagged TSV

PRETAGGED_HEADER_RE = re.compile(r"^# id=(\S.*?) year=(-?\d+)$")


def parse_pretagged(
    path: str | os.PathLike,
    errors: list[RecordError] | None = None,
) -> Iterator[TaggedDocument]:
    """Read the pre-tagged TSV interchange format.

    Token lines with a tag outside UPOS are reported (raised, or appended to
    ``errors``) and skipped. Framing problems such as a token line outside a
    document block are fatal.
    """
    with open(path, encoding="utf-8", newline="\n") as fh:
        yield from _parse_pretagged_lines(fh, errors, str(path))


def pretagged_blocks(fh: IO[str], chunk_chars: int = 1 << 22) -> Iterator[tuple[int, list[str]]]:
    """Blank-line separated runs of lines, each with the line number of its first line."""
    lineno = 1
    pending = ""
    while True:
        data = fh.read(chunk_chars)
        if data:
            data = pending + data
            cut = data.rfind("\n\n")
            if cut < 0:
                pending = data
                continue
            segment, pending = data[:cut], data[cut + 2:]
        else:
            segment, pending = pending, ""
            if segment.endswith("\n"):
                segment = segment[:-1]
            if not segment:
                return
        lines = segment.split("\n")
        start = 0
        for b in [i for i, line in enumerate(lines) if not line] + [len(lines)]:
            if b > start:
                yield lineno + start, lines[start:b]
            start = b + 1
        lineno += len(lines) + 1
        if not data:
            return


def parse_pretagged_block(first: int, block: list[str], errors, label) -> TaggedDocument:
    header = block[0]
    if not header.startswith("# "):
        raise CorpusError(f"{label}: line {first}: token line outside a document block")
    m = PRETAGGED_HEADER_RE.match(header)
    if m is None:
        raise CorpusError(f"{label}: line {first}: malformed document header")
    doc_id, year = m.group(1), int(m.group(2))
    try:
        tokens = [Token(s, l.lower(), u) for s, l, u in (line.split("\t") for line in block[1:])]
    except ValueError:
        tokens = None
    if tokens is not None and {t.upos for t in tokens} <= UPOS_TAGS and all(t[0] and t[1] for t in tokens):
        return TaggedDocument(doc_id, year, tuple(tokens))

    # slow path: locate and report each bad line
    tokens = []
    for lineno, line in enumerate(block[1:], start=first + 1):
        if PRETAGGED_HEADER_RE.match(line):
            raise CorpusError(f"{label}: line {lineno}: document header before blank line ending {doc_id}")
        parts = line.split("\t")
        if len(parts) != 3 or not parts[0] or not parts[1]:
            err = RecordError(lineno, "expected surface<TAB>lemma<TAB>upos")
        elif parts[2] not in UPOS_TAGS:
            err = RecordError(lineno, "not a UPOS tag")
        else:
            tokens.append(Token(parts[0], parts[1].lower(), parts[2]))
            continue
        if errors is None:
            raise err
        errors.append(err)
    return TaggedDocument(doc_id, year, tuple(tokens))


def _parse_pretagged_lines(fh: IO[str], errors, label) -> Iterator[TaggedDocument]:
    for first, block in pretagged_blocks(fh):
        yield parse_pretagged_block(first, block, errors, label)


def format_pretagged(doc: TaggedDocument) -> str:
    lines = [f"# id={doc.id} year={doc.slice}"]
    for tok in doc.tokens:
        if any(ch in tok.surface or ch in tok.lemma for ch in "\t\n"):
            raise ValueError(f"document {doc.id}: token contains tab or newline")
        lines.append(f"{tok.surface}\t{tok.lemma}\t{tok.upos}")
    return "\n".join(lines) + "\n\n"


def write_pretagged(docs: Iterable[TaggedDocument], out: str | os.PathLike | IO[str]) -> int:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            return write_pretagged(docs, fh)
    n = 0
    for doc in docs:
        out.write(format_pretagged(doc))
        n += 1
    return n


# ---------------------------------------------------------------------------
# CoNLL-U

_NEWDOC_RE = re.compile(r"^#\s*newdoc id\s*=\s*(.+?)\s*$")
_YEAR_COMMENT_RE = re.compile(r"^#\s*year\s*=\s*(-?\d+)\s*$")


def parse_conllu(path: str | os.PathLike, errors: list[RecordError] | None = None) -> Iterator[TaggedDocument]:
    """Read CoNLL-U where documents start at ``# newdoc id = ...`` and carry ``# year = ...``.

    Multiword-token ranges and empty nodes are skipped; a ``_`` lemma falls back
    to the lowercased form.
    """
    doc_id: str | None = None
    year: int | None = None
    tokens: list[Token] = []

    def flush():
        if doc_id is None:
            return None
        if year is None:
            raise CorpusError(f"{path}: document {doc_id} has no '# year = ...' comment")
        return TaggedDocument(doc_id, year, tuple(tokens))

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                m = _NEWDOC_RE.match(line)
                if m:
                    done = flush()
                    if done is not None:
                        yield done
                    doc_id, year, tokens = m.group(1), None, []
                    continue
                m = _YEAR_COMMENT_RE.match(line)
                if m:
                    year = int(m.group(1))
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise CorpusError(f"{path}: line {lineno}: expected 10 tab-separated columns")
            if "-" in cols[0] or "." in cols[0]:
                continue
            if doc_id is None:
                raise CorpusError(f"{path}: line {lineno}: token before '# newdoc id = ...'")
            form, lemma, upos = cols[1], cols[2], cols[3]
            if upos not in UPOS_TAGS:
                err = RecordError(lineno, "not a UPOS tag")
                if errors is None:
                    raise err
                errors.append(err)
                continue
            if lemma == "_" and form != "_":
                lemma = form
            tokens.append(Token(form, lemma.lower(), upos))
    done = flush()
    if done is not None:
        yield done


def write_conllu(docs: Iterable[TaggedDocument], out: str | os.PathLike) -> int:
    n = 0
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(f"# newdoc id = {doc.id}\n# year = {doc.slice}\n")
            for i, tok in enumerate(doc.tokens, start=1):
                fh.write(f"{i}\t{tok.surface}\t{tok.lemma}\t{tok.upos}\t_\t_\t_\t_\t_\t_\n")
            fh.write("\n")
            n += 1
    return n


def read_tagged(path: str | os.PathLike, fmt: str, errors: list[RecordError] | None = None) -> Iterator[TaggedDocument]:
    if fmt in ("tsv", "pretagged"):
        return parse_pretagged(path, errors)
    if fmt == "conllu":
        return parse_conllu(path, errors)
    raise ValueError(f"unknown tagged format {fmt!r}")


__all__ = [
    "DEFAULT_TAG",
    "Lexicon",
    "TaggedDocument",
    "Tagger",
    "Token",
    "UPOS_TAGS",
    "format_pretagged",
    "lemmatize",
    "parse_conllu",
    "parse_pretagged",
    "read_tagged",
    "tag",
    "tokenize",
    "write_conllu",
    "write_pretagged",
]

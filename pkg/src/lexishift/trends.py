"""Percent change, 2x2 chi-square significance, ranked trend scans and long-term OPM series."""

from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from lexishift.counts import CountTable, LemmaPosKey, opm
from lexishift.errors import DegenerateTableError, ExclusionListError
from lexishift.special import chi2_sf
from lexishift.tagging import UPOS_TAGS

DEFAULT_POS_BLACKLIST = frozenset({"PUNCT", "SYM", "NUM", "PROPN", "X"})
DEFAULT_MIN_COUNT = 5
P_THRESHOLD = 0.01
FLAT_THRESHOLD = 0.5  # percent
TRENDS_HEADER = ["lemma", "upos", "opm_from", "opm_to", "pct_change", "chi2", "p", "direction"]

# Upper-tail probabilities below this underflow to 0.0; clamp so p stays in (0, 1].
_P_FLOOR = math.ulp(0.0)


@dataclass(frozen=True, slots=True)
class ContingencyTable2x2:
    """Rows are the two slices (or corpora); columns are target vs all other tokens."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self) -> None:
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("contingency cells must be non-negative")

    @classmethod
    def from_counts(cls, count_from: int, total_from: int, count_to: int, total_to: int) -> "ContingencyTable2x2":
        # columns must be disjoint, so "other" is total minus target rather than the raw total
        return cls(count_from, total_from - count_from, count_to, total_to - count_to)

    def scaled(self, k: int) -> "ContingencyTable2x2":
        return ContingencyTable2x2(self.a * k, self.b * k, self.c * k, self.d * k)


def percent_change(opm_from: float, opm_to: float) -> float:
    if opm_from < 0 or opm_to < 0:
        raise ValueError("OPM values must be non-negative")
    if opm_from == 0:
        return math.inf if opm_to > 0 else 0.0
    return 100.0 * (opm_to - opm_from) / opm_from


def chi_square_2x2(t: ContingencyTable2x2, continuity_correction: bool = True) -> tuple[float, float]:
    """Pearson chi-square statistic and its 1-df upper-tail p-value.

    With the continuity correction, ``|ad - bc|`` is reduced by ``N/2`` (floored
    at zero) before squaring. The statistic is computed in exact integer
    arithmetic and rounded once.
    """
    a, b, c, d = t.a, t.b, t.c, t.d
    r1, r2, c1, c2 = a + b, c + d, a + c, b + d
    if r1 == 0 or r2 == 0 or c1 == 0 or c2 == 0:
        raise DegenerateTableError()
    n = r1 + r2
    det = abs(a * d - b * c)
    denom = r1 * r2 * c1 * c2
    if continuity_correction:
        adj = max(0, 2 * det - n)  # 2 * (|ad-bc| - N/2)
        stat = (n * adj * adj) / (4 * denom)
    else:
        stat = (n * det * det) / denom
    return stat, max(chi2_sf(stat, 1), _P_FLOOR)


def direction_of(pct: float, flat_threshold: float = FLAT_THRESHOLD) -> str:
    if math.isnan(pct) or abs(pct) < flat_threshold:
        return "flat"
    return "up" if pct > 0 else "down"


@dataclass(frozen=True, slots=True)
class TrendRecord:
    key: LemmaPosKey
    opm_from: float
    opm_to: float
    pct_change: float
    chi2: float
    p: float
    direction: str
    count_from: int = field(default=0, compare=False)
    count_to: int = field(default=0, compare=False)

    @property
    def significant(self) -> bool:
        return self.p < P_THRESHOLD


def _record(key, n_from, n_to, total_from, total_to, continuity_correction, flat_threshold) -> TrendRecord:
    if total_from <= 0 or total_to <= 0:
        raise DegenerateTableError("anchor slice has no tokens")
    o_from = 1e6 * n_from / total_from
    o_to = 1e6 * n_to / total_to
    pct = percent_change(o_from, o_to)
    try:
        chi2, p = chi_square_2x2(
            ContingencyTable2x2.from_counts(n_from, total_from, n_to, total_to), continuity_correction
        )
    except DegenerateTableError:
        chi2, p = 0.0, 1.0
    return TrendRecord(key, o_from, o_to, pct, chi2, p, direction_of(pct, flat_threshold), n_from, n_to)


def trend_record(
    table: CountTable,
    key: LemmaPosKey,
    slice_from: int,
    slice_to: int,
    *,
    continuity_correction: bool = True,
    flat_threshold: float = FLAT_THRESHOLD,
    exclude_from_total: Iterable[str] = (),
) -> TrendRecord:
    """Trend statistics for one key between two anchor slices."""
    exclude = frozenset(exclude_from_total)
    return _record(
        key,
        table.count(key, slice_from),
        table.count(key, slice_to),
        table.token_total(slice_from, exclude),
        table.token_total(slice_to, exclude),
        continuity_correction,
        flat_threshold,
    )


# ---------------------------------------------------------------------------
# exclusion lists

_KEY_RE = re.compile(r"^[^\s\\^$.*+?()\[\]{}|]+_(%s)$" % "|".join(sorted(UPOS_TAGS)))


@dataclass
class ExclusionList:
    """Exact keys and ``lemma_UPOS`` full-match regexes, each with a reason."""

    keys: dict[LemmaPosKey, str] = field(default_factory=dict)
    patterns: list[tuple[re.Pattern, str]] = field(default_factory=list)

    def add(self, entry: str, reason: str) -> None:
        if not reason.strip():
            raise ExclusionListError(f"{entry}: reason must be non-empty")
        if _KEY_RE.match(entry):
            self.keys[LemmaPosKey.parse(entry)] = reason
        else:
            try:
                self.patterns.append((re.compile(entry), reason))
            except re.error as exc:
                raise ExclusionListError(f"{entry}: bad pattern ({exc})") from None

    def reason_for(self, key: LemmaPosKey) -> str | None:
        hit = self.keys.get(key)
        if hit is not None:
            return hit
        text = f"{key.lemma}_{key.upos}"
        for pat, reason in self.patterns:
            if pat.fullmatch(text):
                return reason
        return None

    def __contains__(self, key: LemmaPosKey) -> bool:
        return self.reason_for(key) is not None

    def __len__(self) -> int:
        return len(self.keys) + len(self.patterns)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExclusionList":
        out = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                entry, tab, reason = line.partition("\t")
                if not tab:
                    raise ExclusionListError(f"{path}: line {lineno}: expected key-or-regex<TAB>reason")
                try:
                    out.add(entry, reason)
                except ExclusionListError as exc:
                    raise ExclusionListError(f"{path}: line {lineno}: {exc}") from None
        return out


# ---------------------------------------------------------------------------
# ranking


def _rank_key(direction: str):
    if direction == "up":
        return lambda r: (-r.pct_change, -r.chi2, r.key)
    if direction == "down":
        return lambda r: (r.pct_change, -r.chi2, r.key)
    raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")


def trend_scan(
    table: CountTable,
    slice_from: int,
    slice_to: int,
    *,
    direction: str = "up",
    pos_blacklist: Iterable[str] = DEFAULT_POS_BLACKLIST,
    min_count: int = DEFAULT_MIN_COUNT,
    exclusions: ExclusionList | None = None,
    continuity_correction: bool = True,
    flat_threshold: float = FLAT_THRESHOLD,
    exclude_from_total: Iterable[str] = (),
    top: int | None = None,
) -> list[TrendRecord]:
    """Rank keys by percent change between two slices.

    Keys are dropped when their tag is blacklisted, when neither anchor count
    reaches ``min_count``, or when the exclusion list matches. ``up`` sorts by
    percent change descending (a zero baseline counts as +inf), ``down``
    ascending; ties go to the larger chi-square, then to the key.
    """
    order = _rank_key(direction)
    blacklist = frozenset(pos_blacklist)
    c_from = table.slice_counts(slice_from)
    c_to = table.slice_counts(slice_to)
    candidates = set(c_from) | set(c_to)
    kept = []
    for key in candidates:
        if key.upos in blacklist:
            continue
        if max(c_from.get(key, 0), c_to.get(key, 0)) < max(min_count, 1):
            continue
        if exclusions is not None and key in exclusions:
            continue
        kept.append(key)
    exclude = frozenset(exclude_from_total)
    total_from = table.token_total(slice_from, exclude)
    total_to = table.token_total(slice_to, exclude)
    records = [
        _record(key, c_from.get(key, 0), c_to.get(key, 0), total_from, total_to,
                continuity_correction, flat_threshold)
        for key in kept
    ]
    records.sort(key=order)
    return records[:top] if top is not None else records


def series(table: CountTable, key: LemmaPosKey, slices: Sequence[int] | None = None,
           exclude_from_total: Iterable[str] = ()) -> list[tuple[int, float]]:
    """OPM of ``key`` at every slice (default: every slice in the table)."""
    slices = table.slices if slices is None else list(slices)
    return [(s, opm(table, key, s, exclude_from_total)) for s in slices]


# ---------------------------------------------------------------------------
# CSV I/O


def format_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def write_trends_csv(records: Iterable[TrendRecord], out: str | os.PathLike | IO[str]) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            write_trends_csv(records, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRENDS_HEADER)
    for r in records:
        w.writerow([r.key.lemma, r.key.upos, format_float(r.opm_from), format_float(r.opm_to), format_float(r.pct_change),
                    format_float(r.chi2), format_float(r.p), r.direction])


def trends_csv_text(records: Iterable[TrendRecord]) -> str:
    buf = io.StringIO()
    write_trends_csv(records, buf)
    return buf.getvalue()


def read_trends_csv(path: str | os.PathLike) -> list[TrendRecord]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRENDS_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRENDS_HEADER)}")
        for row in reader:
            out.append(
                TrendRecord(
                    LemmaPosKey(row["lemma"], row["upos"]),
                    float(row["opm_from"]),
                    float(row["opm_to"]),
                    float(row["pct_change"]),
                    float(row["chi2"]),
                    float(row["p"]),
                    row["direction"],
                )
            )
    return out

import json
import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import MockChatServer, regen_responder
from lexishift.counts import CountTable, LemmaPosKey, SliceTotals, count_sharded
from lexishift.ingest import Document
from lexishift.llm import AuditLog, ChatClient, ChatReply
from lexishift.regen import (
    ComparisonRecord,
    REGENERATE_PROMPT,
    SUMMARIZE_PROMPT,
    compare_corpora,
    decreasing_focal_words,
    is_refusal,
    parse_keywords,
    read_regen_jsonl,
    regenerate_abstract,
    regenerate_prompt,
    regenerated_documents,
    run_regen,
    sample_abstracts,
    summarize_keywords,
)
from lexishift.trends import TrendRecord, trend_record

K = LemmaPosKey


class ScriptedClient:
    def __init__(self, *replies):
        self.replies = list(replies)
        self.prompts = []

    def chat(self, prompt, **kw):
        self.prompts.append(prompt)
        r = self.replies.pop(0)
        return r if isinstance(r, ChatReply) else ChatReply(r, "stop")

    def map(self, fn, items):
        return [fn(x) for x in items]


# -- prompts -------------------------------------------------------------------


def test_prompts_are_exact():
    doc = Document("1", 2020, "Mice were dosed.")
    c = ScriptedClient("gene therapy, mice, dosage")
    assert summarize_keywords(doc, c) == ["gene therapy", "mice", "dosage"]
    assert c.prompts[0] == ("The following text is an abstract from a scientific paper: Mice were dosed. "
                            "Summarize the abstract in keywords, separate keywords by commas")
    assert regenerate_prompt(["a", "b"]) == ("Please write an abstract for a scientific paper, about 200 words in "
                                             "length, based on the following notes. a, b")
    assert SUMMARIZE_PROMPT.startswith("The following text") and REGENERATE_PROMPT.endswith("following notes.")


def test_keyword_parsing_and_guard():
    assert parse_keywords("a, b,, c,") == ["a", "b", "c"]
    with pytest.raises(ValueError):
        regenerate_abstract([], ScriptedClient())


def test_regenerate_returns_text_unmodified():
    text = "  Stuff with keywords gene, mice.\n"
    assert regenerate_abstract(["gene", "mice"], ScriptedClient(text)) == text


@pytest.mark.parametrize("text, finish, refused", [
    ("I'm sorry, but I can't help with that.", "stop", True),
    ("I cannot assist.", "stop", True),
    ("", "stop", True),
    ("Fine text", "content_filter", True),
    ("Sorry, no.", "stop", True),
    ("Sorry-ness is a theme in this abstract.", "stop", False),
    ("We delve into mice.", "stop", False),
])
def test_is_refusal(text, finish, refused):
    assert is_refusal(text, finish) is refused


def test_refusal_retried_then_marked():
    c = ScriptedClient("I'm sorry, I can't.", "kw1, kw2", "Regenerated.")
    (pair,) = run_regen([Document("1", 2020, "x")], c)
    assert pair.keywords == ("kw1", "kw2") and pair.regenerated == "Regenerated."
    c = ScriptedClient(*["I'm sorry."] * 3)
    (pair,) = run_regen([Document("1", 2020, "x")], c)
    assert pair.refused and pair.keywords == () and len(c.prompts) == 3


# -- sampling ------------------------------------------------------------------


def corpus(n, slices=(2020,)):
    return [Document(f"{i}", slices[i % len(slices)], "t") for i in range(n)]


def test_sample_deterministic_and_saturating(caplog):
    docs = corpus(5000, (2020, 2021))
    a = sample_abstracts(docs, 2020, 100, seed=1)
    assert a == sample_abstracts(docs, 2020, 100, seed=1)
    assert len({d.id for d in a}) == 100 and all(d.slice == 2020 for d in a)
    assert sample_abstracts(docs, 2020, 100, seed=2) != a
    assert len(sample_abstracts(docs, 2020, 10**6, seed=1)) == 2500
    assert "only 2500" in caplog.text


def test_sample_overlap_matches_hypergeometric_expectation():
    N, n = 100_000, 10_000
    docs = corpus(N)
    a = {d.id for d in sample_abstracts(docs, 2020, n, seed=11)}
    b = {d.id for d in sample_abstracts(docs, 2020, n, seed=12)}
    mean = n * n / N
    sd = math.sqrt(n * (n / N) * (1 - n / N) * (N - n) / (N - 1))
    assert abs(len(a & b) - mean) < 4 * sd


def test_sample_inclusion_is_uniform():
    docs = corpus(20)
    hits = Counter(d.id for seed in range(4000) for d in sample_abstracts(docs, 2020, 5, seed))
    expected = 4000 * 5 / 20
    stat = sum((hits[str(i)] - expected) ** 2 / expected for i in range(20))
    assert stat < 43.8  # chi-square(19) upper 0.1% point


# -- end to end against a local HTTP endpoint ----------------------------------


def test_regen_with_injected_refusals_over_http(tmp_path):
    rng = random.Random(5)
    ids = [f"D{1000 + i}" for i in range(100)]
    refused = rng.sample(ids, 18)
    docs = [Document(i, 2020, f"{i} We studied the cohort.") for i in ids]
    audit_path = tmp_path / "audit.jsonl"
    with MockChatServer(regen_responder(set(refused[:9]), set(refused[9:]))) as srv, AuditLog(audit_path) as audit:
        client = ChatClient(srv.base_url, "m", audit=audit, max_in_flight=4)
        pairs = run_regen(docs, client, tmp_path / "pairs.jsonl")
    assert [p.original.id for p in pairs] == ids
    assert sum(not p.refused for p in pairs) == 82
    assert {p.original.id for p in pairs if p.refused} == set(refused)
    assert len(srv.requests) == 82 * 2 + 9 * 3 + 9 * (1 + 3)
    assert len(audit_path.read_text().splitlines()) == len(srv.requests)
    lines = [json.loads(x) for x in (tmp_path / "pairs.jsonl").read_text().splitlines()]
    assert len(lines) == 100 and sum(x["refused"] for x in lines) == 18
    back = read_regen_jsonl(tmp_path / "pairs.jsonl", {d.id: d for d in docs})
    assert back == pairs
    ai_docs = regenerated_documents(pairs)
    assert len(ai_docs) == 82 and all(d.slice == 2020 for d in ai_docs)


# -- comparison ----------------------------------------------------------------


def single(counts: dict[str, int], total: int, slice_=2020) -> CountTable:
    c = {K.parse(k): n for k, n in counts.items()}
    return CountTable({slice_: c}, {slice_: SliceTotals(slice_, total, 1)})


def test_compare_null_and_union():
    human = single({"a_NOUN": 100, "b_NOUN": 5}, 10**5)
    ai = single({"a_NOUN": 200, "c_VERB": 7}, 2 * 10**5)
    recs = compare_corpora(human, ai)
    assert [str(r.key) for r in recs] == ["a_NOUN", "b_NOUN", "c_VERB"]
    a = recs[0]
    assert a.pct_delta == 0.0 and a.chi2 == pytest.approx(0.0, abs=1e-9)
    assert recs[1].pct_delta == -100.0 and recs[2].pct_delta == math.inf


def test_compare_requires_single_slice():
    two = CountTable({1: {}, 2: {}}, {1: SliceTotals(1, 1, 1), 2: SliceTotals(2, 1, 1)})
    with pytest.raises(ValueError, match="exactly one slice"):
        compare_corpora(two, single({}, 1))
    with pytest.raises(ValueError, match="degenerate"):
        compare_corpora(single({}, 0), single({}, 1))


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.sampled_from(["a_NOUN", "b_VERB", "c_ADJ"]), st.integers(1, 500)),
       st.dictionaries(st.sampled_from(["a_NOUN", "b_VERB", "c_ADJ"]), st.integers(1, 500)))
def test_compare_is_antisymmetric_in_sign(h, a):
    human, ai = single(h, 10**4), single(a, 2 * 10**4)
    fwd = {r.key: r for r in compare_corpora(human, ai)}
    back = {r.key: r for r in compare_corpora(ai, human)}
    assert fwd.keys() == back.keys()
    for k, r in fwd.items():
        if math.isfinite(r.pct_delta) and math.isfinite(back[k].pct_delta):
            assert math.copysign(1, r.pct_delta) == -math.copysign(1, back[k].pct_delta) or r.pct_delta == 0
        assert r.chi2 == pytest.approx(back[k].chi2, rel=1e-12, abs=1e-12)


def time_and_ai_fixture():
    total = 10**7
    over_time = CountTable(
        {2020: {K("amendment", "NOUN"): 1000, K("important", "ADJ"): 5000, K("crucial", "ADJ"): 800},
         2024: {K("amendment", "NOUN"): 360, K("important", "ADJ"): 3830, K("crucial", "ADJ"): 2000}},
        {2020: SliceTotals(2020, total, 1), 2024: SliceTotals(2024, total, 1)},
    )
    human = single({"amendment_NOUN": 100, "important_ADJ": 500, "crucial_ADJ": 80}, 10**6)
    ai = single({"amendment_NOUN": 180, "important_ADJ": 150, "crucial_ADJ": 300}, 10**6)
    time_recs = [trend_record(over_time, k, 2020, 2024) for k in over_time.keys()]
    return time_recs, compare_corpora(human, ai)


def test_decreasing_focal_words_fixture():
    time_recs, cmp = time_and_ai_fixture()
    by_key = {r.key: r for r in time_recs}
    assert by_key[K("amendment", "NOUN")].pct_change == pytest.approx(-64.0)
    assert {r.key: r for r in cmp}[K("amendment", "NOUN")].pct_delta > 0
    keys = decreasing_focal_words([r for r in time_recs if r.direction == "down"], cmp)
    assert keys == [K("important", "ADJ")]


def _trend(key, pct, p):
    return TrendRecord(K.parse(key), 10.0, 10.0 * (1 + pct / 100), pct, 10.0, p,
                       "down" if pct < -0.5 else "flat", 100, 100)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-99, -1), st.floats(1e-6, 0.2), st.floats(-50, 50), st.floats(1e-6, 0.2)),
                min_size=1, max_size=8),
       st.floats(1e-4, 0.1), st.floats(1e-4, 0.1), st.booleans())
def test_decreasing_focal_words_subset_and_monotone(rows, t1, t2, strict):
    keys = [f"w{i}_NOUN" for i in range(len(rows))]
    time_recs = [_trend(k, pct, p) for k, (pct, p, _, _) in zip(keys, rows)]
    cmp = [ComparisonRecord(K.parse(k), 1.0, 1.0, d, 1.0, ap) for k, (_, _, d, ap) in zip(keys, rows)]
    lo, hi = sorted((t1, t2))
    tight = decreasing_focal_words(time_recs, cmp, lo, require_ai_significance=strict)
    loose = decreasing_focal_words(time_recs, cmp, hi, require_ai_significance=strict)
    assert set(tight) <= set(loose) <= {r.key for r in time_recs}
    pcts = [next(r.pct_change for r in time_recs if r.key == k) for k in loose]
    assert pcts == sorted(pcts)


def test_ai_side_counts_from_regenerated_text():
    pairs_docs = [Document("1", 2020, "The analysis showcases amendment of the protocol.")]
    t = count_sharded(pairs_docs)
    assert t.count(K("showcase", "VERB"), 2020) == 1

"""End-to-end acceptance checks, one test per criterion; each prints a PASS/FAIL line."""

import random
import re
import shlex
import time
from pathlib import Path

import pytest
import scipy.stats

from helpers import (
    REFERENCE_CLUSTERS,
    MockChatServer,
    chi2_oracle,
    regen_responder,
    reverse_engineer_table,
)
from lexishift.cli import EXIT_OK, build_parser, main
from lexishift.clusters import FocalWord, Verdict, build_cluster, classify_cluster, cluster_distribution
from lexishift.counts import CountTable, LemmaPosKey, SliceTotals, count_pretagged, count_sharded, load_snapshot
from lexishift.ingest import Document
from lexishift.llm import AuditLog, ChatClient
from lexishift.regen import compare_corpora, decreasing_focal_words, regenerated_documents, run_regen, sample_abstracts
from lexishift.synth import SynthCorpus
from lexishift.trends import ContingencyTable2x2, chi_square_2x2, trend_record, trend_scan

K = LemmaPosKey
README = Path(__file__).resolve().parent.parent / "README.md"


def random_table(rng: random.Random) -> tuple[int, int, int, int]:
    while True:
        a, c = (int(10 ** rng.uniform(0, 6)) - 1 for _ in range(2))
        b, d = (int(10 ** rng.uniform(1, 9)) for _ in range(2))
        if a + c > 0:
            return a, b, c, d


def test_criterion_1_chi_square_oracle(criterion):
    rng = random.Random(2024)
    tables = [random_table(rng) for _ in range(1000)]
    start = time.perf_counter()
    ours = [(chi_square_2x2(ContingencyTable2x2(*t), False), chi_square_2x2(ContingencyTable2x2(*t), True))
            for t in tables]
    elapsed = time.perf_counter() - start
    worst_rel = 0.0
    worst_p = 0.0
    for t, pair in zip(tables, ours):
        for yates, (stat, p) in zip((False, True), pair):
            ref = chi2_oracle(*t, yates)
            if ref == 0:
                worst_rel = max(worst_rel, abs(stat))
            else:
                worst_rel = max(worst_rel, abs(stat - ref) / ref)
            worst_p = max(worst_p, abs(p - scipy.stats.chi2.sf(stat, 1)))
    ok = worst_rel <= 1e-9 and worst_p <= 1e-8 and elapsed < 5
    criterion(1, ok, f"2000 statistics, max rel err {worst_rel:.1e}, max p abs err {worst_p:.1e}, {elapsed:.3f}s")


def two_slice(count_from, total_from, count_to, total_to) -> CountTable:
    key = K("w", "NOUN")
    return CountTable({1: {key: count_from}, 2: {key: count_to}},
                      {1: SliceTotals(1, total_from, 1), 2: SliceTotals(2, total_to, 1)})


def test_criterion_2_homogeneity(criterion):
    rng = random.Random(7)
    worst = 0.0
    pct_identical = True
    checked = 0
    for _ in range(200):
        cf, ct = rng.randint(1, 10**5), rng.randint(1, 10**5)
        tf, tt = cf + rng.randint(1, 10**8), ct + rng.randint(1, 10**8)
        t = two_slice(cf, tf, ct, tt)
        base = trend_record(t, K("w", "NOUN"), 1, 2, continuity_correction=False)
        for k in (2, 3, 10):
            scaled = trend_record(t.scaled(k), K("w", "NOUN"), 1, 2, continuity_correction=False)
            worst = max(worst, abs(scaled.chi2 - k * base.chi2) / (k * base.chi2) if base.chi2 else abs(scaled.chi2))
            pct_identical &= scaled.pct_change == base.pct_change
            checked += 1
    ok = worst <= 1e-9 and pct_identical
    criterion(2, ok, f"{checked} scaled tables, max rel err {worst:.1e}, pct_change bit-identical={pct_identical}")


def test_criterion_3_reference_fixture(criterion):
    start = time.perf_counter()
    table = reverse_engineer_table()
    worst = 0.0
    n = 0
    for (lemma, upos), (opm_2020, pct, members) in REFERENCE_CLUSTERS.items():
        r = trend_record(table, K(lemma, upos), 2020, 2024)
        worst = max(worst, abs(r.pct_change - pct), abs(r.opm_from - opm_2020) / opm_2020 * 100)
        n += 1
        for m, mpct in members.items():
            mr = trend_record(table, K(m, upos), 2020, 2024)
            worst = max(worst, abs(mr.pct_change - mpct))
            n += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 0.1 and elapsed < 1
    criterion(3, ok, f"{n} records, max deviation {worst:.4f} pp, {elapsed:.3f}s")


# -- synthetic corpora (shared by criteria 4, 5 and 8) -------------------------


@pytest.fixture(scope="module")
def synth_up(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth_up")
    assert main(["--quiet", "synth", "--seed", "1", "--docs", "10000", "--plant", "delve_VERB:2024:8",
                 "--out-dir", str(d)]) == EXIT_OK
    return d


@pytest.fixture(scope="module")
def synth_down(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth_down")
    assert main(["--quiet", "synth", "--seed", "2", "--docs", "10000", "--plant", "delve_VERB:2020:8",
                 "--out-dir", str(d)]) == EXIT_OK
    return d


def first_trend_row(d: Path, direction: str) -> tuple[str, float, int]:
    counts = d / "counts.csv"
    assert main(["--quiet", "count", "--input", str(d / "corpus.tsv"), "--format", "pretagged",
                 "--out", str(counts)]) == EXIT_OK
    out = d / f"trends_{direction}.csv"
    assert main(["--quiet", "trends", "--counts", str(counts), "--from", "2020", "--to", "2024",
                 "--direction", direction, "--top", "20", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    head = lines[0].split(",")
    row = dict(zip(head, lines[1].split(",")))
    tokens = sum(load_snapshot(counts).token_total(s) for s in (2020, 2024))
    return f"{row['lemma']}_{row['upos']}", float(row["p"]), tokens


def test_criterion_4_planted_spike(criterion, synth_up, synth_down):
    up_key, up_p, tokens = first_trend_row(synth_up, "up")
    down_key, down_p, _ = first_trend_row(synth_down, "down")
    runs = 50
    flagged = 0
    min_p = 1.0
    for seed in range(1000, 1000 + runs):
        table = SynthCorpus(seed, 10_000).count_table()
        ps = [r.p for r in trend_scan(table, 2020, 2024)]
        min_p = min(min_p, *ps)
        flagged += any(p < 1e-6 for p in ps)
    ok = (up_key == "delve_VERB" and up_p < 1e-6 and down_key == "delve_VERB" and down_p < 1e-6
          and flagged <= 0.01 * runs)
    criterion(4, ok, f"{tokens} tokens; up #1 {up_key} p={up_p:.1e}; down #1 {down_key} p={down_p:.1e}; "
                     f"null runs flagged {flagged}/{runs}, smallest null p {min_p:.1e}")


def test_criterion_5_merge_determinism(criterion, synth_up, tmp_path):
    blobs = []
    for shards in (1, 4, 16):
        out = tmp_path / f"s{shards}.csv"
        assert main(["--quiet", "count", "--input", str(synth_up / "corpus.tsv"), "--format", "pretagged",
                     "--shards", str(shards), "--chunk-size", "100", "--out", str(out)]) == EXIT_OK
        blobs.append(out.read_bytes() + (tmp_path / f"s{shards}.totals.csv").read_bytes())
    identical = blobs[0] == blobs[1] == blobs[2]
    table = load_snapshot(tmp_path / "s16.csv")
    conserved = all(sum(table.slice_counts(s).values()) == table.token_total(s) for s in table.slices)
    criterion(5, identical and conserved, f"1/4/16 shards byte-identical={identical}, conservation={conserved}")


def test_criterion_6_cluster_classification(criterion):
    table = reverse_engineer_table()
    clusters = {
        f: build_cluster(FocalWord(K(*f)), list(m), table, 2020, 2024)
        for f, (_, _, m) in REFERENCE_CLUSTERS.items()
    }
    sig = classify_cluster(clusters[("significant", "ADJ")])

    total = 10**7
    c0 = {K("focal", "NOUN"): 2000, **{K(f"m{i}", "NOUN"): 2000 for i in range(5)}}
    c1 = {K("focal", "NOUN"): 4000, **{K(f"m{i}", "NOUN"): 1000 for i in range(5)}}
    down_table = CountTable({1: c0, 2: c1}, {1: SliceTotals(1, total, 1), 2: SliceTotals(2, total, 1)})
    down = classify_cluster(build_cluster(FocalWord(K("focal", "NOUN")), [f"m{i}" for i in range(5)], down_table, 1, 2))

    hist = cluster_distribution(clusters.values())
    members = sum(len(c.member_trends) for c in clusters.values())
    ok = sig == Verdict.CO_RISE and down == Verdict.REPLACEMENT and hist.total == members
    criterion(6, ok, f"significant_ADJ={sig.value}, all-down={down.value}, histogram {list(hist.counts)} "
                     f"sums to {hist.total} of {members} members")


def test_criterion_7_regen_harness(criterion, tmp_path):
    rng = random.Random(18)
    corpus = [Document(f"D{10_000 + i}", 2020, f"D{10_000 + i} An important cohort was studied.")
              for i in range(500)]
    sample = sample_abstracts(corpus, 2020, 100, seed=3)
    ids = [d.id for d in sample]
    refused = rng.sample(ids, 18)
    audit_path = tmp_path / "audit.jsonl"
    with MockChatServer(regen_responder(set(refused[:9]), set(refused[9:]))) as srv, AuditLog(audit_path) as audit:
        client = ChatClient(srv.base_url, "mock", audit=audit)
        pairs = run_regen(sample, client, tmp_path / "pairs.jsonl")
        client.close()
    produced = sum(not p.refused for p in pairs)
    audit_lines = len(audit_path.read_text().splitlines())
    persisted = len((tmp_path / "pairs.jsonl").read_text().splitlines())

    human = count_sharded(sample)
    ai = count_sharded(regenerated_documents(pairs))
    records = compare_corpora(human, ai)
    keys = [r.key for r in records]
    union_ok = len(keys) == len(set(keys)) and set(keys) == set(human.keys()) | set(ai.keys())

    over_time = CountTable(
        {2020: {K("amendment", "NOUN"): 1000, K("important", "ADJ"): 5000},
         2024: {K("amendment", "NOUN"): 360, K("important", "ADJ"): 3830}},
        {2020: SliceTotals(2020, 10**7, 1), 2024: SliceTotals(2024, 10**7, 1)},
    )
    time_down = trend_scan(over_time, 2020, 2024, direction="down")
    by_key = {r.key: r for r in records}
    focal = decreasing_focal_words(time_down, records)
    expected = [K("important", "ADJ")]
    fixture_ok = (focal == expected and by_key[K("amendment", "NOUN")].pct_delta > 0
                  and by_key[K("important", "ADJ")].pct_delta < 0)
    ok = (produced == 82 and persisted == 100 and audit_lines == len(srv.requests) and union_ok and fixture_ok)
    criterion(7, ok, f"{produced}/100 regenerated, {persisted} pairs persisted, audit {audit_lines} lines for "
                     f"{len(srv.requests)} requests, {len(records)} compared keys, focal words {[str(k) for k in focal]}")


def test_criterion_8_throughput(criterion, synth_up, tmp_path):
    start = time.perf_counter()
    table = count_pretagged(synth_up / "corpus.tsv")
    pretagged_s = time.perf_counter() - start
    tokens = sum(table.token_total(s) for s in table.slices)

    start = time.perf_counter()
    code = main(["--quiet", "--jobs", "4", "count", "--input", str(synth_up / "corpus.jsonl"),
                 "--out", str(tmp_path / "raw.csv")])
    pipeline_s = time.perf_counter() - start
    docs = sum(t.doc_total for t in (load_snapshot(tmp_path / "raw.csv").totals_for(s) for s in (2020, 2024)))
    ok = tokens >= 2_000_000 and pretagged_s < 5 and code == EXIT_OK and docs == 10_000 and pipeline_s < 60
    criterion(8, ok, f"pre-tagged {tokens} tokens in {pretagged_s:.2f}s; "
                     f"raw pipeline {docs} abstracts with --jobs 4 in {pipeline_s:.1f}s")


def recipe_commands(text: str) -> list[list[str]]:
    """``lexishift ...`` invocations inside fenced shell blocks, continuation lines joined."""
    cmds = []
    for block in re.findall(r"```(?:sh|bash|console)\n(.*?)```", text, flags=re.S):
        for line in block.replace("\\\n", " ").splitlines():
            line = line.strip()
            if line.startswith("lexishift "):
                cmds.append(shlex.split(line)[1:])
    return cmds


def test_criterion_9_full_scale_recipe(criterion):
    text = README.read_text(encoding="utf-8") if README.exists() else ""
    section = text.split("## Full-scale", 1)[1] if "## Full-scale" in text else ""
    cmds = recipe_commands(section)
    order = [c[0] for c in cmds if c and not c[0].startswith("-")] if cmds else []
    steps = ["fetch-pubmed", "count", "trends", "clusters"]
    in_order = all(s in order for s in steps) and [order.index(s) for s in steps] == sorted(order.index(s) for s in steps)
    pretagged = any(c[0] == "count" and "--format" in c and c[c.index("--format") + 1] in ("pretagged", "tsv", "conllu")
                    for c in cmds)
    parser = build_parser()
    bad = []
    for c in cmds:
        try:
            parser.parse_args(c)
        except SystemExit:
            bad.append(" ".join(c[:1]))
        except Exception:  # UsageError from type converters
            bad.append(" ".join(c[:1]))
    ok = bool(section) and in_order and pretagged and not bad
    criterion(9, ok, f"{len(cmds)} recipe commands, steps in order={in_order}, external tagger via pre-tagged "
                     f"input={pretagged}, commands rejected by the parser={bad}")

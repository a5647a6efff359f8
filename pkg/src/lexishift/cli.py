"""Command-line entry point: ``lexishift <subcommand> [flags]``.

Exit status is 0 on success, 1 on a usage or validation error and 2 when a
command fails at runtime. Progress goes to standard error; data goes only to
the declared output paths (``-`` means standard output where allowed).
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Sequence

from lexishift.clusters import (
    MAX_MEMBERS,
    FocalWord,
    build_cluster,
    classify_cluster,
    cluster_distribution,
    llm_filter_top5,
    load_focal_words,
    load_members,
    load_thesaurus,
    thesaurus_entry,
    verdict_counts,
    write_clusters_csv,
    write_histogram_csv,
    write_members,
)
from lexishift.counts import LemmaPosKey, count_pretagged, count_sharded, load_snapshot, save_snapshot
from lexishift.errors import FilterRefused, LexiError, RecordError
from lexishift.ingest import DEFAULT_YEAR_RANGE, EUTILS_BASE_URL, PubMedFetcher, ReadStats, read_jsonl, read_pubmed_xml
from lexishift.llm import AuditLog, ChatClient, DEFAULT_MAX_IN_FLIGHT
from lexishift.regen import (
    compare_corpora,
    decreasing_focal_words,
    regenerated_documents,
    run_regen,
    sample_abstracts,
    write_comparison_csv,
)
from lexishift.report import render_series_svg, write_series_csv
from lexishift.synth import DEFAULT_SLICES, Plant, synth_corpus
from lexishift.tagging import Lexicon, Tagger, UPOS_TAGS, read_tagged
from lexishift.trends import (
    DEFAULT_MIN_COUNT,
    DEFAULT_POS_BLACKLIST,
    ExclusionList,
    read_trends_csv,
    series,
    trend_scan,
    write_trends_csv,
)

log = logging.getLogger("lexishift")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with status 2."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# small helpers


def _need_file(path: str | None, flag: str) -> None:
    if path is not None and path != "-" and not Path(path).is_file():
        raise UsageError(f"{flag}: no such file: {path}")


def _upos_list(text: str) -> frozenset[str]:
    tags = frozenset(t.strip().upper() for t in text.split(",") if t.strip())
    bad = sorted(tags - UPOS_TAGS)
    if bad:
        raise argparse.ArgumentTypeError(f"not UPOS tags: {', '.join(bad)}")
    return tags


def _key(text: str) -> LemmaPosKey:
    try:
        return LemmaPosKey.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _plant(text: str) -> Plant:
    try:
        return Plant.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _years(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("-")
    try:
        rng = (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YEAR or YEAR-YEAR, got {text!r}") from None
    if rng[0] > rng[1]:
        raise argparse.ArgumentTypeError(f"empty year range {text!r}")
    return rng


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _slices(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated years, got {text!r}") from None


@contextlib.contextmanager
def _text_out(path: str):
    if path == "-":
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _lexicon_paths(args) -> list[str]:
    paths = [] if args.no_default_lexicon else [Lexicon.default_path()]
    return paths + list(args.lexicon or [])


def _jobs(args) -> int:
    return max(1, args.jobs or 1)


def _chat_client(args, audit: AuditLog | None) -> ChatClient:
    env = dict(os.environ)
    if args.base_url:
        env["LEXI_LLM_BASE_URL"] = args.base_url
    if args.model:
        env["LEXI_LLM_MODEL"] = args.model
    return ChatClient.from_env(env, max_in_flight=args.max_in_flight, audit=audit)


# ---------------------------------------------------------------------------
# commands


def cmd_count(args) -> int:
    _need_file(args.input, "--input")
    for p in args.lexicon or []:
        _need_file(p, "--lexicon")
    errors: list[RecordError] | None = [] if args.skip_bad else None
    stats = ReadStats() if args.skip_bad else None
    if args.format in ("tsv", "pretagged"):
        table = count_pretagged(args.input, shards=args.shards, chunk_size=args.chunk_size, errors=errors)
    elif args.format == "conllu":
        docs = read_tagged(args.input, args.format, errors)
        table = count_sharded(docs, shards=args.shards, jobs=1, chunk_size=args.chunk_size)
    else:
        if args.format == "jsonl":
            docs = read_jsonl(args.input, year_range=args.years, stats=stats)
        else:
            docs = read_pubmed_xml(args.input, year_range=args.years, stats=stats or ReadStats())
        lex_paths = _lexicon_paths(args)
        jobs = _jobs(args)
        tagger = Tagger(Lexicon.load(*lex_paths)) if jobs == 1 else None
        table = count_sharded(docs, shards=args.shards, jobs=jobs, chunk_size=args.chunk_size,
                              tagger=tagger, lexicon_paths=lex_paths)
    skipped = len(errors or ()) + (len(stats.errors) if stats else 0)
    if skipped:
        log.warning("skipped %d malformed records", skipped)
    counts_path, totals_path = save_snapshot(table, args.out, args.totals)
    for s in table.slices:
        t = table.totals_for(s)
        log.info("slice %d: %d documents, %d tokens", s, t.doc_total, t.token_total)
    log.info("wrote %s and %s", counts_path, totals_path)
    return EXIT_OK


def _load_table(args):
    _need_file(args.counts, "--counts")
    _need_file(args.totals, "--totals")
    table = load_snapshot(args.counts, args.totals)
    for flag, year in (("--from", getattr(args, "from_", None)), ("--to", getattr(args, "to", None))):
        if year is not None and year not in table.slices and args.command != "series":
            raise UsageError(f"{flag} {year}: not a slice of the snapshot (have {table.slices})")
    return table


def cmd_trends(args) -> int:
    _need_file(args.exclusions, "--exclusions")
    table = _load_table(args)
    exclusions = ExclusionList.load(args.exclusions) if args.exclusions else None
    records = trend_scan(
        table, args.from_, args.to,
        direction=args.direction,
        pos_blacklist=args.blacklist,
        min_count=args.min_count,
        exclusions=exclusions,
        continuity_correction=not args.no_correction,
        exclude_from_total=args.denominator_exclude,
        top=args.top,
    )
    with _text_out(args.out) as fh:
        write_trends_csv(records, fh)
    log.info("%d %s-trending keys between %d and %d", len(records), args.direction, args.from_, args.to)
    return EXIT_OK


def _keys_from(args) -> list[LemmaPosKey]:
    keys = list(args.key or [])
    if args.keys_file:
        _need_file(args.keys_file, "--keys-file")
        with open(args.keys_file, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if line and not line.startswith("#"):
                    try:
                        keys.append(LemmaPosKey.parse(line))
                    except ValueError as exc:
                        raise UsageError(f"--keys-file: line {lineno}: {exc}") from None
    if not keys:
        raise UsageError("give at least one --key or a --keys-file")
    return list(dict.fromkeys(keys))


def _series_slices(table, lo: int | None, hi: int | None) -> list[int]:
    slices = [s for s in table.slices if (lo is None or s >= lo) and (hi is None or s <= hi)]
    if not slices:
        raise UsageError("no slices in the requested range")
    return slices


def cmd_series(args) -> int:
    table = _load_table(args)
    keys = _keys_from(args)
    slices = _series_slices(table, args.from_, args.to)
    data = {k: series(table, k, slices, args.denominator_exclude) for k in keys}
    with _text_out(args.out) as fh:
        write_series_csv(data, fh)
    if args.svg:
        render_series_svg({str(k): v for k, v in data.items()}, args.svg, title=args.title)
    return EXIT_OK


def _cluster_members(args, focal_words: list[FocalWord]) -> dict[LemmaPosKey, list[str]]:
    if args.members:
        _need_file(args.members, "--members")
        cached = load_members(args.members)
        return {f.key: cached.get(f.key, [])[:MAX_MEMBERS] for f in focal_words}
    _need_file(args.thesaurus, "--thesaurus")
    thesaurus = load_thesaurus(args.thesaurus)
    out: dict[LemmaPosKey, list[str]] = {}
    if args.no_llm:
        for f in focal_words:
            cands = [c for c in thesaurus_entry(thesaurus, f.key).candidates if c != f.key.lemma]
            out[f.key] = cands[:MAX_MEMBERS]
        return out
    audit = AuditLog(args.audit) if args.audit else None
    client = _chat_client(args, audit)
    try:
        for f in focal_words:
            cands = thesaurus_entry(thesaurus, f.key).candidates
            if not cands:
                log.warning("%s: no thesaurus candidates", f.key)
                out[f.key] = []
                continue
            try:
                out[f.key] = llm_filter_top5(f, cands, client, fallback=args.fallback_first5)
            except FilterRefused:
                log.warning("%s: filter refused; cluster left empty", f.key)
                out[f.key] = []
    finally:
        client.close()
        if audit is not None:
            audit.close()
    return out


def cmd_clusters(args) -> int:
    if args.members and args.thesaurus:
        raise UsageError("--members and --thesaurus are mutually exclusive")
    if not args.members and not args.thesaurus:
        raise UsageError("one of --members or --thesaurus is required")
    if args.members and (args.no_llm or args.fallback_first5):
        raise UsageError("--no-llm/--fallback-first5 only apply with --thesaurus")
    _need_file(args.focal, "--focal")
    table = _load_table(args)
    focal_words = load_focal_words(args.focal)
    members = _cluster_members(args, focal_words)
    if args.members_out:
        write_members(members, args.members_out)
    kw = {"continuity_correction": not args.no_correction, "exclude_from_total": args.denominator_exclude}
    clusters = []
    for f in focal_words:
        c = build_cluster(f, members.get(f.key, []), table, args.from_, args.to, **kw)
        c.verdict = classify_cluster(c)
        clusters.append(c)
    with _text_out(args.out) as fh:
        write_clusters_csv(clusters, fh)
    if args.hist:
        write_histogram_csv(cluster_distribution(clusters), args.hist)
    log.info("verdicts: %s", dict(sorted(verdict_counts(clusters).items())))
    return EXIT_OK


def cmd_compare(args) -> int:
    _need_file(args.human, "--human")
    _need_file(args.ai, "--ai")
    if args.focal_out and not args.time_trends:
        raise UsageError("--focal-out needs --time-trends")
    _need_file(args.time_trends, "--time-trends")
    human = load_snapshot(args.human)
    ai = load_snapshot(args.ai)
    records = compare_corpora(human, ai, continuity_correction=not args.no_correction)
    write_comparison_csv(records, args.out)
    if args.time_trends:
        keys = decreasing_focal_words(
            read_trends_csv(args.time_trends), records,
            require_ai_significance=args.require_ai_significance,
        )
        with _text_out(args.focal_out or "-") as fh:
            for k in keys:
                fh.write(f"{k}\n")
        log.info("%d decreasing focal words", len(keys))
    return EXIT_OK


def cmd_regen(args) -> int:
    _need_file(args.input, "--input")
    if (args.human_out is None) != (args.ai_out is None):
        raise UsageError("--human-out and --ai-out go together")
    corpus = list(read_jsonl(args.input, year_range=None))
    sample = sample_abstracts(corpus, args.year, args.n, args.seed)
    log.info("sampled %d abstracts from %d", len(sample), args.year)
    audit_path = args.audit or f"{args.out}.audit.jsonl"
    audit = AuditLog(audit_path)
    client = _chat_client(args, audit)
    try:
        pairs = run_regen(sample, client, args.out)
    finally:
        client.close()
        audit.close()
    if args.human_out:
        lex_paths = _lexicon_paths(args)
        tagger = Tagger(Lexicon.load(*lex_paths))
        human_docs = sample if args.human_side == "sample" else [d for d in corpus if d.slice == args.year]
        ai_docs = regenerated_documents(pairs)
        save_snapshot(count_sharded(human_docs, tagger=tagger), args.human_out)
        save_snapshot(count_sharded(ai_docs, tagger=tagger), args.ai_out)
    ok = sum(not p.refused for p in pairs)
    log.info("%d of %d regenerated; audit log at %s", ok, len(pairs), audit_path)
    return EXIT_OK


def cmd_fetch(args) -> int:
    fetcher = PubMedFetcher(
        base_url=args.base_url, rate=args.rate, page_size=args.page_size, batch_size=args.batch_size,
        api_key=args.api_key or os.environ.get("NCBI_API_KEY") or None, email=args.email,
        dedupe=not args.no_dedupe,
    )
    manifest = fetcher.fetch(args.query, args.years, args.out, args.cursor)
    if args.manifest:
        Path(args.manifest).write_text(manifest.to_json() + "\n", encoding="utf-8")
    log.info("%d documents in %s", sum(manifest.doc_count.values()), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    """Table-1 style CSV, one SVG series chart per focal word, and the change histogram."""
    _need_file(args.focal, "--focal")
    _need_file(args.members, "--members")
    table = _load_table(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    focal_words = load_focal_words(args.focal)
    members = load_members(args.members)
    clusters = []
    slices = _series_slices(table, None, None)
    for f in focal_words:
        c = build_cluster(f, members.get(f.key, [])[:MAX_MEMBERS], table, args.from_, args.to)
        c.verdict = classify_cluster(c)
        clusters.append(c)
        keys = [f.key] + c.members
        data = {k: series(table, k, slices) for k in keys}
        stem = f"{f.key.lemma}_{f.key.upos}"
        write_series_csv(data, out_dir / f"series_{stem}.csv")
        render_series_svg({str(k): v for k, v in data.items()}, out_dir / f"series_{stem}.svg", title=str(f.key))
    write_clusters_csv(clusters, out_dir / "clusters.csv")
    write_histogram_csv(cluster_distribution(clusters), out_dir / "histogram.csv")
    log.info("report written to %s", out_dir)
    return EXIT_OK


def cmd_synth(args) -> int:
    slices = set(args.slices)
    for p in args.plant or []:
        if p.slice not in slices:
            raise UsageError(f"--plant {p.key}: slice {p.slice} is not one of {sorted(slices)}")
    paths = synth_corpus(args.seed, args.docs, args.vocab, args.plant or [], args.out_dir,
                         slices=args.slices, doc_len=args.doc_len)
    for kind, path in paths.items():
        log.info("%s: %s", kind, path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_counts_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--counts", required=True, help="counts snapshot CSV (lemma,upos,slice,count)")
    p.add_argument("--totals", help="totals CSV (default: <counts stem>.totals.csv)")
    p.add_argument("--denominator-exclude", type=_upos_list, default=frozenset(), metavar="UPOS,...",
                   help="leave these tags out of the OPM denominator (default: all tokens count)")


def _add_anchor_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--from", dest="from_", type=int, required=required, metavar="YEAR", help="earlier anchor slice")
    p.add_argument("--to", type=int, required=required, metavar="YEAR", help="later anchor slice")


def _add_llm_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base-url", help="OpenAI-compatible endpoint (default: $LEXI_LLM_BASE_URL)")
    p.add_argument("--model", help="model name (default: $LEXI_LLM_MODEL)")
    p.add_argument("--max-in-flight", type=_positive, default=DEFAULT_MAX_IN_FLIGHT,
                   help=f"concurrent requests (default {DEFAULT_MAX_IN_FLIGHT})")


def _add_lexicon_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lexicon", action="append", metavar="TSV",
                   help="extra form<TAB>lemma<TAB>upos lexicon, consulted after the baseline (repeatable)")
    p.add_argument("--no-default-lexicon", action="store_true", help="use only the --lexicon files")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--jobs", type=_positive, default=argparse.SUPPRESS,
                        help="worker processes for tagging/counting (default: logical cores)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only log warnings and errors")
    common.add_argument("--config", default=argparse.SUPPRESS, metavar="PATH",
                        help="key=value file overriding flag defaults")

    parser = _Parser(prog="lexishift", description="Lemma+POS frequency shifts in time-sliced abstracts.")
    parser.add_argument("--jobs", type=_positive, default=os.cpu_count() or 1,
                        help="worker processes for tagging/counting (default: logical cores)")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    parser.add_argument("--config", metavar="PATH", help="key=value file overriding flag defaults")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name: str, fn: Callable, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_, description=help_, parents=[common])
        p.set_defaults(func=fn)
        return p

    p = add("fetch-pubmed", cmd_fetch, "Download abstracts from PubMed E-utilities into JSONL (resumable).")
    p.add_argument("--query", required=True, help="esearch term, e.g. 'hasabstract'")
    p.add_argument("--years", type=_years, default=DEFAULT_YEAR_RANGE, metavar="YYYY-YYYY",
                   help="publication years to fetch (default 1975-2024)")
    p.add_argument("--out", required=True, help="JSONL output (appended to when resuming)")
    p.add_argument("--cursor", help="resume cursor (default: <out>.cursor)")
    p.add_argument("--manifest", help="write a corpus manifest JSON here")
    p.add_argument("--base-url", default=EUTILS_BASE_URL, help="E-utilities base URL")
    p.add_argument("--rate", type=float, default=3.0, help="max requests per second (default 3)")
    p.add_argument("--page-size", type=_positive, default=500, help="esearch retmax (default 500)")
    p.add_argument("--batch-size", type=_positive, default=200, help="ids per efetch (default 200)")
    p.add_argument("--api-key", help="NCBI API key (default: $NCBI_API_KEY)")
    p.add_argument("--email", help="contact address sent with requests")
    p.add_argument("--no-dedupe", action="store_true", help="keep PMIDs already written for an earlier year (count rejects duplicate ids)")

    p = add("count", cmd_count, "Tag (if needed) and count a corpus into a lemma+POS snapshot.")
    p.add_argument("--input", required=True, help="corpus file")
    p.add_argument("--format", choices=["jsonl", "pubmed-xml", "tsv", "pretagged", "conllu"], default="jsonl",
                   help="input format (default jsonl); tsv/pretagged and conllu skip tagging")
    p.add_argument("--out", required=True, help="counts CSV; totals go next to it")
    p.add_argument("--totals", help="totals CSV path (default: <out stem>.totals.csv)")
    p.add_argument("--years", type=_years, default=DEFAULT_YEAR_RANGE, metavar="YYYY-YYYY",
                   help="accepted publication years for raw input (default 1975-2024)")
    p.add_argument("--shards", type=_positive, default=1, help="partial tables merged at the end (default 1)")
    p.add_argument("--chunk-size", type=_positive, default=500, help="documents per work unit (default 500)")
    p.add_argument("--skip-bad", action="store_true", help="log and skip malformed records instead of failing")
    _add_lexicon_args(p)

    p = add("trends", cmd_trends, "Rank keys by percent change between two slices, with chi-square p-values.")
    _add_counts_args(p)
    _add_anchor_args(p)
    p.add_argument("--direction", choices=["up", "down"], default="up", help="ranking direction (default up)")
    p.add_argument("--top", type=_positive, help="keep only the first N rows")
    p.add_argument("--min-count", type=int, default=DEFAULT_MIN_COUNT,
                   help=f"drop keys below this count in both anchors (default {DEFAULT_MIN_COUNT})")
    p.add_argument("--blacklist", type=_upos_list, default=DEFAULT_POS_BLACKLIST, metavar="UPOS,...",
                   help="tags to drop (default %s)" % ",".join(sorted(DEFAULT_POS_BLACKLIST)))
    p.add_argument("--exclusions", help="key-or-regex<TAB>reason file of impostor keys")
    p.add_argument("--no-correction", action="store_true", help="disable the continuity correction")
    p.add_argument("--out", default="-", help="trends CSV (default stdout)")

    p = add("series", cmd_series, "OPM series of chosen keys across slices, as CSV and optional SVG.")
    _add_counts_args(p)
    _add_anchor_args(p, required=False)
    p.add_argument("--key", type=_key, action="append", metavar="LEMMA_UPOS", help="key to plot (repeatable)")
    p.add_argument("--keys-file", help="one LEMMA_UPOS per line")
    p.add_argument("--out", default="-", help="series CSV (default stdout)")
    p.add_argument("--svg", help="also draw an SVG line chart here")
    p.add_argument("--title", help="chart title")

    p = add("clusters", cmd_clusters, "Build and classify synonym clusters around focal words.")
    _add_counts_args(p)
    _add_anchor_args(p)
    p.add_argument("--focal", required=True, help="focal words CSV (lemma,upos,provenance)")
    p.add_argument("--thesaurus", help="thesaurus CSV (lemma,upos,candidates)")
    p.add_argument("--members", help="cached members CSV (lemma,upos,members); skips the LLM")
    p.add_argument("--members-out", help="write the chosen members here for reuse")
    p.add_argument("--no-llm", action="store_true", help="take the first five thesaurus candidates")
    p.add_argument("--fallback-first5", action="store_true",
                   help="on a filter refusal, fall back to the first five candidates")
    p.add_argument("--audit", help="JSONL audit log of filter calls")
    p.add_argument("--no-correction", action="store_true", help="disable the continuity correction")
    p.add_argument("--out", default="-", help="clusters CSV (default stdout)")
    p.add_argument("--hist", help="member percent-change histogram CSV")
    _add_llm_args(p)

    p = add("compare", cmd_compare, "Compare human and regenerated snapshots; find decreasing focal words.")
    p.add_argument("--human", required=True, help="human-side counts CSV")
    p.add_argument("--ai", required=True, help="regenerated-side counts CSV")
    p.add_argument("--out", required=True, help="comparison CSV")
    p.add_argument("--time-trends", help="down-direction trends CSV to intersect with")
    p.add_argument("--focal-out", help="decreasing focal words, one per line (default stdout)")
    p.add_argument("--require-ai-significance", action="store_true",
                   help="also require the human->AI drop to be significant")
    p.add_argument("--no-correction", action="store_true", help="disable the continuity correction")

    p = add("regen", cmd_regen, "Sample abstracts and regenerate them through a chat model.")
    p.add_argument("--input", required=True, help="JSONL corpus")
    p.add_argument("--year", type=int, required=True, help="slice to sample from")
    p.add_argument("--n", type=int, default=10000, help="sample size (default 10000)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed (default 0)")
    p.add_argument("--out", required=True, help="regenerated pairs JSONL")
    p.add_argument("--audit", help="audit log JSONL (default: <out>.audit.jsonl)")
    p.add_argument("--human-out", help="counts CSV of the human side")
    p.add_argument("--ai-out", help="counts CSV of the regenerated side")
    p.add_argument("--human-side", choices=["sample", "slice"], default="sample",
                   help="count the sampled originals (default) or the whole slice")
    _add_llm_args(p)
    _add_lexicon_args(p)

    p = add("report", cmd_report, "Cluster table, per-cluster OPM charts and change histogram.")
    _add_counts_args(p)
    _add_anchor_args(p)
    p.add_argument("--focal", required=True, help="focal words CSV")
    p.add_argument("--members", required=True, help="members CSV (lemma,upos,members)")
    p.add_argument("--out-dir", required=True, help="directory for the report files")

    p = add("synth", cmd_synth, "Write a synthetic corpus with planted rate changes.")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--docs", type=int, default=10000, help="number of documents (default 10000)")
    p.add_argument("--vocab", type=_positive, default=5000, help="background vocabulary size (default 5000)")
    p.add_argument("--doc-len", type=_positive, default=200, help="content tokens per document (default 200)")
    p.add_argument("--slices", type=_slices, default=DEFAULT_SLICES, metavar="YEAR,...",
                   help="slices, assigned round-robin (default 2020,2024)")
    p.add_argument("--plant", type=_plant, action="append", metavar="LEMMA_UPOS:YEAR:MULT",
                   help="multiply a key's rate in one slice (repeatable)")
    p.add_argument("--out-dir", required=True, help="output directory")
    return parser


# ---------------------------------------------------------------------------
# config files


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {value!r}")


def _read_config(path: str) -> dict[str, str]:
    _need_file(path, "--config")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise UsageError(f"{path}: line {lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, config: dict[str, str]) -> None:
    """Turn config entries into parser defaults; unknown keys are usage errors."""
    actions = {}
    for p in (parser, sub):
        for a in p._actions:
            if a.dest in ("help", "func", "command", "config"):
                continue
            for name in [a.dest] + [o.lstrip("-").replace("-", "_") for o in a.option_strings if o.startswith("--")]:
                actions[name] = (p, a)
    for key, raw in config.items():
        if key not in actions:
            raise UsageError(f"--config: unknown key {key!r}")
        target, action = actions[key]
        try:
            if isinstance(action, argparse._StoreTrueAction):
                value = _parse_bool(raw)
            elif isinstance(action, argparse._AppendAction):
                conv = action.type or str
                value = [conv(v.strip()) for v in raw.split(",") if v.strip()]
            else:
                value = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"--config: {key}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"--config: {key}: {value!r} not in {sorted(action.choices)}")
        action.required = False
        target.set_defaults(**{action.dest: value})
        if target is parser:
            # the subparser's suppressed copy must not shadow the config value
            sub.set_defaults(**{action.dest: value})


def _parse(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    # find --config and the command first, so config may supply required flags
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if known.config and command is not None:
        _apply_config(parser, choices[command], _read_config(known.config))
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(name)s: %(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lexishift {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LexiError, OSError, ValueError) as exc:
        print(f"lexishift {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

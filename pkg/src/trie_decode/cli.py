"""Command-line surface.

Results go to stdout (or ``--out``); diagnostics go to stderr; the exit
status is zero exactly when no error occurred.  Structured output is JSON
lines with sorted keys, so repeated runs are byte-identical and the span
dumps produced by ``link`` can be fed back to ``eval --predictions``.

The CLI registers the two mention-marker specials on every vocabulary it
loads, so ids are consistent across all subcommands of one installation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Iterable, Sequence, TextIO

from .beam import BeamConfig, RankedResult, rank_entities
from .catalog import load_candidate_sets, load_catalog
from .markup import MarkupDocument, SpanAnnotation, link_document, parse_markup, render_markup
from .metrics import EvalReport, RetrievalReport, ed_accuracy, micro_f1_spans
from .scoring import OracleScorer, Scorer, UniformScorer, load_table_scorer
from .tasks import (
    TASK_EXTRA_SPECIALS,
    SuiteReport,
    TaskConfig,
    parallel_map,
    disambiguate,
    load_ed_dataset,
    load_el_dataset,
    run_eval_suite,
)
from .trie import EntityTrie, build_trie
from .vocab import EOS, Vocabulary, encode, load_vocabulary

JOBS_ENV_VAR = "TRIE_DECODE_JOBS"


class CliError(ValueError):
    pass


def _load_vocab(path: str) -> Vocabulary:
    return load_vocabulary(path, extra_specials=TASK_EXTRA_SPECIALS)


def _load_trie(path: str) -> EntityTrie:
    with open(path, "rb") as fh:
        return EntityTrie.deserialize(fh.read())


def _make_scorer(spec: str, vocab: Vocabulary) -> Scorer:
    if spec == "uniform":
        return UniformScorer(vocab.size)
    if spec.startswith("oracle:"):
        target = tuple(encode(spec[len("oracle:") :], vocab)) + (EOS,)
        return OracleScorer(target, vocab.size)
    return load_table_scorer(spec)


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise CliError(f"{JOBS_ENV_VAR} must be an integer, got {raw!r}") from None


def _json_line(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def _ranking_lines(ranking: RankedResult, fmt: str, prefix: str = "") -> Iterable[str]:
    if fmt == "structured":
        for rank, entry in enumerate(ranking, start=1):
            payload = {
                "rank": rank,
                "name": entry.name,
                "raw_logprob": entry.raw_logprob,
                "normalized_score": entry.normalized_score,
            }
            if prefix:
                payload["id"] = prefix
            yield _json_line(payload)
    else:
        lead = f"{prefix}\t" if prefix else ""
        for rank, entry in enumerate(ranking, start=1):
            yield f"{lead}{rank}\t{entry.name}\t{entry.normalized_score!r}"


def _span_triples(spans: Sequence[SpanAnnotation]) -> list[list]:
    return [[s.start, s.length, s.entity] for s in spans]


def cmd_build_trie(args: argparse.Namespace, out: TextIO) -> int:
    vocab = _load_vocab(args.vocab)
    catalog, duplicates = load_catalog(args.catalog, vocab)
    if duplicates:
        print(f"skipped {duplicates} duplicate name(s)", file=sys.stderr)
    trie = build_trie(catalog.token_sequences(), vocab.size)
    blob = trie.serialize()
    with open(args.out, "wb") as fh:
        fh.write(blob)
    print(
        f"leaves={trie.leaf_count} internal_nodes={trie.internal_node_count} bytes={len(blob)}",
        file=out,
    )
    return 0


def cmd_retrieve(args: argparse.Namespace, out: TextIO) -> int:
    vocab = _load_vocab(args.vocab)
    scorer = _make_scorer(args.scorer, vocab)
    trie = _load_trie(args.trie)
    config = BeamConfig(args.beams, args.max_steps, args.length_normalize)
    ranking = rank_entities(scorer, encode(args.query, vocab), trie, config, vocab)
    for line in _ranking_lines(ranking, args.format):
        print(line, file=out)
    return 0


def cmd_disambiguate(args: argparse.Namespace, out: TextIO) -> int:
    vocab = _load_vocab(args.vocab)
    scorer = _make_scorer(args.scorer, vocab)
    trie = _load_trie(args.trie) if args.trie else None
    candidate_sets = load_candidate_sets(args.candidates) if args.candidates else None
    config = TaskConfig(args.beams, args.max_steps, args.context_window, args.length_normalize)
    instances = sorted(load_ed_dataset(args.dataset, vocab, candidate_sets), key=lambda i: i.instance_id)
    if not instances:
        raise CliError("empty dataset")
    rankings = parallel_map(
        lambda inst: disambiguate(scorer, inst, vocab, config, trie), instances, args.jobs
    )
    for instance, ranking in zip(instances, rankings):
        if args.format == "structured":
            payload = {
                "id": instance.instance_id,
                "gold": instance.gold,
                "predictions": [
                    {
                        "rank": rank,
                        "name": e.name,
                        "raw_logprob": e.raw_logprob,
                        "normalized_score": e.normalized_score,
                    }
                    for rank, e in enumerate(ranking, start=1)
                ],
            }
            print(_json_line(payload), file=out)
        else:
            for line in _ranking_lines(ranking, "text", prefix=instance.instance_id):
                print(line, file=out)
    return 0


def _emit_document(doc: MarkupDocument, doc_id: str, fmt: str, out: TextIO) -> None:
    for diagnostic in doc.diagnostics:
        print(f"{doc_id}: {diagnostic}" if doc_id else diagnostic, file=sys.stderr)
    if fmt == "structured":
        payload = {
            "id": doc_id,
            "markup": render_markup(doc),
            "spans": _span_triples(doc.spans),
            "diagnostics": list(doc.diagnostics),
        }
        print(_json_line(payload), file=out)
    else:
        markup = render_markup(doc)
        print(f"{doc_id}\t{markup}" if doc_id else markup, file=out)


def cmd_link(args: argparse.Namespace, out: TextIO) -> int:
    if (args.text is None) == (args.dataset is None):
        raise CliError("exactly one of --text and --dataset is required")
    vocab = _load_vocab(args.vocab)
    scorer = _make_scorer(args.scorer, vocab)
    trie = _load_trie(args.trie)
    config = BeamConfig(args.beams, args.max_steps, args.length_normalize)
    if args.text is not None:
        doc = link_document(scorer, args.text, trie, config, vocab, args.chunk_size)
        _emit_document(doc, "", args.format, out)
        return 0
    documents = sorted(load_el_dataset(args.dataset), key=lambda d: d[0])
    linked = parallel_map(
        lambda item: link_document(scorer, item[1], trie, config, vocab, args.chunk_size),
        documents,
        args.jobs,
    )
    for (doc_id, _text, _gold), doc in zip(documents, linked):
        _emit_document(doc, doc_id, args.format, out)
    return 0


def _load_span_predictions(path: str) -> dict[str, list[SpanAnnotation]]:
    predictions: dict[str, list[SpanAnnotation]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                payload = json.loads(raw)
                doc_id = payload["id"]
                spans = [SpanAnnotation(s, l, e) for s, l, e in payload["spans"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise CliError(f"{path}:{lineno}: bad prediction record ({exc})") from None
            predictions[doc_id] = spans
    return predictions


def _load_name_predictions(path: str) -> dict[str, str]:
    predictions: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                payload = json.loads(raw)
                ranked = payload["predictions"]
                predictions[payload["id"]] = ranked[0]["name"] if ranked else ""
            except (KeyError, TypeError, IndexError, ValueError) as exc:
                raise CliError(f"{path}:{lineno}: bad prediction record ({exc})") from None
    return predictions


def _report_lines(metrics: dict[str, float], counts: dict[str, int], fmt: str) -> list[str]:
    if fmt == "structured":
        return [_json_line({"metrics": metrics, "counts": counts})]
    return [f"{key}={value:.2f}" for key, value in metrics.items()]


def _eval_from_predictions(args: argparse.Namespace, vocab: Vocabulary, out: TextIO) -> int:
    if args.mode == "el":
        gold_docs = []
        pred_docs = []
        predictions = _load_span_predictions(args.predictions)
        for doc_id, text, gold_markup in sorted(load_el_dataset(args.dataset), key=lambda d: d[0]):
            if doc_id not in predictions:
                raise CliError(f"no prediction for instance {doc_id!r}")
            gold_docs.append(parse_markup(gold_markup, text))
            pred_docs.append(predictions[doc_id])
        report = micro_f1_spans(gold_docs, pred_docs)
        metrics = {
            "micro_precision": report.precision,
            "micro_recall": report.recall,
            "micro_f1": report.f1,
        }
        counts = {"tp": report.tp, "fp": report.fp, "fn": report.fn}
    elif args.mode == "ed":
        predictions = _load_name_predictions(args.predictions)
        gold = []
        pred = []
        for instance in sorted(load_ed_dataset(args.dataset, vocab), key=lambda i: i.instance_id):
            if instance.instance_id not in predictions:
                raise CliError(f"no prediction for instance {instance.instance_id!r}")
            gold.append(instance.gold)
            pred.append(predictions[instance.instance_id])
        if not gold:
            raise CliError("empty dataset")
        accuracy = ed_accuracy(gold, pred)
        tp = sum(g == p for g, p in zip(gold, pred))
        report = EvalReport.from_counts(tp, len(gold) - tp, len(gold) - tp)
        metrics = {
            "accuracy": accuracy,
            "micro_precision": report.precision,
            "micro_recall": report.recall,
            "micro_f1": report.f1,
        }
        counts = {"tp": report.tp, "fp": report.fp, "fn": report.fn}
    else:
        raise CliError("--predictions is supported for ed and el modes only")
    for line in _report_lines(metrics, counts, args.format):
        print(line, file=out)
    return 0


def cmd_eval(args: argparse.Namespace, out: TextIO) -> int:
    vocab = _load_vocab(args.vocab)
    if args.predictions:
        return _eval_from_predictions(args, vocab, out)
    if not args.scorer:
        raise CliError("--scorer is required unless --predictions is given")
    scorer = _make_scorer(args.scorer, vocab)
    trie = _load_trie(args.trie) if args.trie else None
    candidate_sets = load_candidate_sets(args.candidates) if args.candidates else None
    # linking runs default to the wider decode budget; ranking modes stay small
    beams = args.beams if args.beams is not None else (6 if args.mode == "el" else 10)
    max_steps = args.max_steps if args.max_steps is not None else (384 if args.mode == "el" else 15)
    config = TaskConfig(beams, max_steps, args.context_window, args.length_normalize)
    suite = run_eval_suite(
        args.dataset,
        args.mode,
        scorer,
        vocab,
        config,
        trie=trie,
        candidate_sets=candidate_sets,
        chunk_size=args.chunk_size,
        jobs=args.jobs,
    )
    metrics, counts = _suite_metrics(suite)
    for line in _report_lines(metrics, counts, args.format):
        print(line, file=out)
    return 0


def _suite_metrics(suite: SuiteReport) -> tuple[dict[str, float], dict[str, int]]:
    report = suite.report
    if isinstance(report, RetrievalReport):
        return {"r_precision_mean": report.mean}, {"queries": len(report.per_query)}
    metrics = {
        "micro_precision": report.precision,
        "micro_recall": report.recall,
        "micro_f1": report.f1,
    }
    if suite.accuracy is not None:
        metrics = {"accuracy": suite.accuracy, **metrics}
    return metrics, {"tp": report.tp, "fp": report.fp, "fn": report.fn}


def _add_beam_options(parser: argparse.ArgumentParser, beams: int | None, max_steps: int | None) -> None:
    parser.add_argument("--beams", type=int, default=beams, help="beam width")
    parser.add_argument("--max-steps", type=int, default=max_steps, help="decode-length cap")
    parser.add_argument(
        "--length-normalize",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="divide scores by sequence length for ranking",
    )


def _add_format_option(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("text", "structured"), default="text")
    parser.add_argument("--out", default=None, help="write results here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trie-decode",
        description="Entity retrieval by constrained generation over a name trie.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-trie", help="compile a catalog into a binary trie")
    p.add_argument("catalog", help="catalog file, one entity name per line")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="output path for the binary trie")
    p.set_defaults(func=cmd_build_trie)

    p = sub.add_parser("retrieve", help="rank catalog entities against a query")
    p.add_argument("--query", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--trie", required=True)
    p.add_argument("--scorer", required=True, help="uniform | oracle:<text> | table file path")
    _add_beam_options(p, beams=10, max_steps=15)
    _add_format_option(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("disambiguate", help="rank entities for flagged mentions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--trie", default=None, help="full-catalog trie (fallback when no candidates)")
    p.add_argument("--scorer", required=True)
    p.add_argument("--candidates", default=None, help="candidate-set file keyed by mention id")
    p.add_argument("--context-window", type=int, default=384)
    p.add_argument("--jobs", type=int, default=None, help=f"parallel workers (env {JOBS_ENV_VAR})")
    _add_beam_options(p, beams=10, max_steps=15)
    _add_format_option(p)
    p.set_defaults(func=cmd_disambiguate)

    p = sub.add_parser("link", help="annotate text with entity links")
    p.add_argument("--text", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--vocab", required=True)
    p.add_argument("--trie", required=True)
    p.add_argument("--scorer", required=True)
    p.add_argument("--chunk-size", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help=f"parallel workers (env {JOBS_ENV_VAR})")
    _add_beam_options(p, beams=6, max_steps=384)
    _add_format_option(p)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("eval", help="run a dataset and report metrics")
    p.add_argument("--mode", choices=("ed", "dr", "el"), required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--trie", default=None)
    p.add_argument("--scorer", default=None)
    p.add_argument("--candidates", default=None)
    p.add_argument("--predictions", default=None, help="structured dump to evaluate instead of decoding")
    p.add_argument("--chunk-size", type=int, default=None)
    p.add_argument("--context-window", type=int, default=384)
    p.add_argument("--jobs", type=int, default=None, help=f"parallel workers (env {JOBS_ENV_VAR})")
    _add_beam_options(p, beams=None, max_steps=None)
    _add_format_option(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out: TextIO = sys.stdout
    opened = None
    try:
        if hasattr(args, "jobs") and args.jobs is None:
            args.jobs = _default_jobs()
        if getattr(args, "out", None) and args.command != "build-trie":
            opened = open(args.out, "w", encoding="utf-8")
            out = opened
        return args.func(args, out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if opened is not None:
            opened.close()


if __name__ == "__main__":
    sys.exit(main())

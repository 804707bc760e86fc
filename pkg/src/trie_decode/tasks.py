"""Task pipelines: mention disambiguation, query retrieval, and linking runs.

Dataset formats are line-oriented and tab-separated:

* disambiguation: ``id TAB context TAB mention_start TAB mention_len TAB gold
  TAB candidates`` with character offsets into the context and an optional
  pipe-separated candidate list;
* retrieval: ``id TAB query TAB gold1|gold2|...``;
* linking: ``id TAB source TAB gold-markup``.

Mention flagging wraps the mention in two reserved marker tokens and trims
the context to the configured window, keeping the mention centered when
possible and trimming more from the left on odd remainders.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

from .beam import BeamConfig, RankedResult, rank_entities
from .catalog import CandidateSet
from .markup import MarkupDocument, SpanAnnotation, link_document, parse_markup
from .metrics import (
    EvalReport,
    MatchType,
    RetrievalReport,
    ed_accuracy,
    match_type,
    micro_f1_spans,
    r_precision,
)
from .scoring import Scorer
from .trie import EntityTrie, build_trie
from .vocab import TokenId, Vocabulary, decode, encode, encode_with_offsets

START_ENT_STRING = "[START_ENT]"
END_ENT_STRING = "[END_ENT]"
TASK_EXTRA_SPECIALS = (START_ENT_STRING, END_ENT_STRING)

_T = TypeVar("_T")
_R = TypeVar("_R")


class TaskError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TaskConfig:
    beams: int = 10
    max_steps: int = 15
    context_window: int = 384
    length_normalize: bool = True

    def __post_init__(self) -> None:
        if self.beams < 1 or self.max_steps < 1 or self.context_window < 3:
            raise TaskError("beams and max_steps must be >= 1, context_window >= 3")

    def beam_config(self) -> BeamConfig:
        return BeamConfig(self.beams, self.max_steps, self.length_normalize)


@dataclass(frozen=True)
class EDInstance:
    """One flagged-mention disambiguation instance (token-level span)."""

    instance_id: str
    context_tokens: tuple[TokenId, ...]
    mention_start: int
    mention_length: int
    gold: str
    candidates: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.mention_length < 1:
            raise TaskError("mention must span at least one token")
        if self.mention_start < 0 or self.mention_start + self.mention_length > len(
            self.context_tokens
        ):
            raise TaskError("mention span outside the context")

    def mention_tokens(self) -> tuple[TokenId, ...]:
        return self.context_tokens[self.mention_start : self.mention_start + self.mention_length]


def flag_mention(instance: EDInstance, vocab: Vocabulary, config: TaskConfig) -> tuple[TokenId, ...]:
    """Insert the mention markers and trim to the context window.

    The window counts the two marker tokens.  The mention itself is always
    kept verbatim; surrounding context is trimmed symmetrically, spilling a
    short side's unused budget to the other side.
    """
    start_id = vocab.extra_special_id(START_ENT_STRING)
    end_id = vocab.extra_special_id(END_ENT_STRING)
    mention = instance.mention_tokens()
    if len(mention) + 2 > config.context_window:
        raise TaskError(
            f"mention of {len(mention)} tokens does not fit a window of {config.context_window}"
        )
    left = instance.context_tokens[: instance.mention_start]
    right = instance.context_tokens[instance.mention_start + instance.mention_length :]
    budget = config.context_window - len(mention) - 2
    if len(left) + len(right) > budget:
        left_share = budget // 2
        right_share = budget - left_share
        if len(left) < left_share:
            keep_left = len(left)
            keep_right = min(len(right), budget - keep_left)
        elif len(right) < right_share:
            keep_right = len(right)
            keep_left = min(len(left), budget - keep_right)
        else:
            keep_left, keep_right = left_share, right_share
        left = left[len(left) - keep_left :]
        right = right[:keep_right]
    return left + (start_id,) + mention + (end_id,) + right


def disambiguate(
    scorer: Scorer,
    instance: EDInstance,
    vocab: Vocabulary,
    config: TaskConfig,
    trie: EntityTrie | None = None,
) -> RankedResult:
    """Rank entities for a flagged mention.

    With a candidate set present the constraint trie is built from exactly
    those names; otherwise the full-catalog ``trie`` is used.
    """
    flagged = flag_mention(instance, vocab, config)
    if instance.candidates:
        sequences = [tuple(encode(name, vocab)) for name in instance.candidates]
        constraint_trie = build_trie(sequences, vocab.size)
    elif trie is not None:
        constraint_trie = trie
    else:
        raise TaskError(f"instance {instance.instance_id!r}: no candidate set and no catalog trie")
    return rank_entities(scorer, flagged, constraint_trie, config.beam_config(), vocab)


def retrieve(
    scorer: Scorer,
    query: str,
    trie: EntityTrie,
    config: TaskConfig,
    vocab: Vocabulary,
) -> RankedResult:
    """Rank the full catalog against a free-text query."""
    return rank_entities(scorer, encode(query, vocab), trie, config.beam_config(), vocab)


# --- dataset loading -----------------------------------------------------


def _read_lines(source: str | Iterable[str]) -> list[str]:
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return fh.read().splitlines()
    return [line.rstrip("\n") for line in source]


def _mention_token_span(
    context: str, char_start: int, char_len: int, vocab: Vocabulary, line: int
) -> tuple[tuple[TokenId, ...], int, int]:
    token_spans = encode_with_offsets(context, vocab)
    if char_len < 1 or char_start < 0 or char_start + char_len > len(context):
        raise TaskError("mention character span outside the context", line)
    inside = [
        i
        for i, span in enumerate(token_spans)
        if span.start >= char_start and span.end <= char_start + char_len
    ]
    if (
        not inside
        or token_spans[inside[0]].start != char_start
        or token_spans[inside[-1]].end != char_start + char_len
        or inside[-1] - inside[0] + 1 != len(inside)
    ):
        raise TaskError("mention does not align to token boundaries", line)
    tokens = tuple(span.token for span in token_spans)
    return tokens, inside[0], len(inside)


def load_ed_dataset(
    source: str | Iterable[str],
    vocab: Vocabulary,
    candidate_sets: dict[str, CandidateSet] | None = None,
) -> list[EDInstance]:
    instances = []
    for lineno, raw in enumerate(_read_lines(source), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) not in (5, 6):
            raise TaskError("expected `id TAB context TAB start TAB len TAB gold [TAB candidates]`", lineno)
        instance_id, context, start_s, len_s, gold = parts[:5]
        try:
            char_start, char_len = int(start_s), int(len_s)
        except ValueError:
            raise TaskError("mention offsets must be integers", lineno) from None
        if not gold:
            raise TaskError("empty gold entity", lineno)
        candidates: tuple[str, ...] | None = None
        if len(parts) == 6 and parts[5]:
            candidates = tuple(n for n in parts[5].split("|") if n)
            if not candidates:
                raise TaskError("empty candidate set", lineno)
        elif candidate_sets is not None and instance_id in candidate_sets:
            candidates = candidate_sets[instance_id].names
        tokens, tok_start, tok_len = _mention_token_span(context, char_start, char_len, vocab, lineno)
        instances.append(EDInstance(instance_id, tokens, tok_start, tok_len, gold, candidates))
    return instances


def load_dr_dataset(source: str | Iterable[str]) -> list[tuple[str, str, tuple[str, ...]]]:
    queries = []
    for lineno, raw in enumerate(_read_lines(source), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise TaskError("expected `id TAB query TAB gold1|gold2|...`", lineno)
        instance_id, query, joined = parts
        gold = tuple(n for n in joined.split("|") if n)
        if not gold:
            raise TaskError("empty gold set", lineno)
        queries.append((instance_id, query, gold))
    return queries


def load_el_dataset(source: str | Iterable[str]) -> list[tuple[str, str, str]]:
    documents = []
    for lineno, raw in enumerate(_read_lines(source), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise TaskError("expected `id TAB source TAB gold-markup`", lineno)
        documents.append((parts[0], parts[1], parts[2]))
    return documents


# --- suite runner --------------------------------------------------------


@dataclass(frozen=True)
class EDOutcome:
    instance_id: str
    gold: str
    ranking: RankedResult
    match: MatchType

    @property
    def predicted(self) -> str | None:
        return self.ranking[0].name if len(self.ranking) else None


@dataclass(frozen=True)
class DROutcome:
    instance_id: str
    gold: tuple[str, ...]
    ranking: RankedResult
    r_precision: float


@dataclass(frozen=True)
class ELOutcome:
    instance_id: str
    document: MarkupDocument
    gold_spans: tuple[SpanAnnotation, ...]


@dataclass(frozen=True)
class SuiteReport:
    mode: str
    report: EvalReport | RetrievalReport
    outcomes: tuple[EDOutcome, ...] | tuple[DROutcome, ...] | tuple[ELOutcome, ...]
    accuracy: float | None = None


def parallel_map(fn: Callable[[_T], _R], items: Sequence[_T], jobs: int) -> list[_R]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_eval_suite(
    source: str | Iterable[str],
    mode: str,
    scorer: Scorer,
    vocab: Vocabulary,
    config: TaskConfig = TaskConfig(),
    trie: EntityTrie | None = None,
    candidate_sets: dict[str, CandidateSet] | None = None,
    chunk_size: int | None = None,
    jobs: int = 1,
) -> SuiteReport:
    """Run a dataset through the matching pipeline and aggregate metrics.

    Outcomes are ordered by instance id regardless of completion order, so
    repeated runs (and shuffled datasets) produce identical reports.
    """
    mode = mode.lower()
    if mode == "ed":
        instances = load_ed_dataset(source, vocab, candidate_sets)
        if not instances:
            raise TaskError("empty dataset")
        instances.sort(key=lambda inst: inst.instance_id)

        def run_ed(instance: EDInstance) -> EDOutcome:
            ranking = disambiguate(scorer, instance, vocab, config, trie)
            mention = decode(instance.mention_tokens(), vocab)
            return EDOutcome(instance.instance_id, instance.gold, ranking, match_type(mention, instance.gold))

        outcomes = parallel_map(run_ed, instances, jobs)
        tp = sum(o.predicted == o.gold for o in outcomes)
        fp = sum(o.predicted is not None and o.predicted != o.gold for o in outcomes)
        fn = len(outcomes) - tp
        accuracy = ed_accuracy(
            [o.gold for o in outcomes], [o.predicted or "" for o in outcomes]
        )
        return SuiteReport("ed", EvalReport.from_counts(tp, fp, fn), tuple(outcomes), accuracy)
    if mode == "dr":
        if trie is None:
            raise TaskError("retrieval requires a catalog trie")
        queries = load_dr_dataset(source)
        if not queries:
            raise TaskError("empty dataset")
        queries.sort(key=lambda q: q[0])

        def run_dr(item: tuple[str, str, tuple[str, ...]]) -> DROutcome:
            instance_id, query, gold = item
            ranking = retrieve(scorer, query, trie, config, vocab)
            return DROutcome(instance_id, gold, ranking, r_precision(set(gold), ranking))

        outcomes = parallel_map(run_dr, queries, jobs)
        report = RetrievalReport.from_scores(o.r_precision for o in outcomes)
        return SuiteReport("dr", report, tuple(outcomes))
    if mode == "el":
        if trie is None:
            raise TaskError("linking requires a catalog trie")
        documents = load_el_dataset(source)
        if not documents:
            raise TaskError("empty dataset")
        documents.sort(key=lambda d: d[0])
        link_config = config.beam_config()

        def run_el(item: tuple[str, str, str]) -> ELOutcome:
            instance_id, text, gold_markup = item
            gold_spans = tuple(parse_markup(gold_markup, text))
            document = link_document(scorer, text, trie, link_config, vocab, chunk_size)
            return ELOutcome(instance_id, document, gold_spans)

        outcomes = parallel_map(run_el, documents, jobs)
        report = micro_f1_spans(
            [o.gold_spans for o in outcomes], [o.document.spans for o in outcomes]
        )
        return SuiteReport("el", report, tuple(outcomes))
    raise TaskError(f"unknown mode: {mode!r} (expected ed, dr, or el)")

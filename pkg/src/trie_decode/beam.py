"""Beam search with log-probability masking against a constraint.

Invalid tokens have their log-probabilities set to minus infinity; the
surviving entries are *not* renormalized, so the score of any fully decoded
sequence equals its unconstrained stepwise sum.  Finished hypotheses are
retired to a pool and do not occupy beam slots; pruning keeps the best ``k``
live hypotheses by cumulative log-probability.  The final ranking applies
length normalization when configured, breaking exact ties by ascending
token-sequence order so that results are total and reproducible.

A single search is sequential; any number of searches may run concurrently
over a shared trie and scorer, which are read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import AbstractSet, Callable, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .catalog import Catalog
from .scoring import Scorer, sequence_score
from .trie import EntityTrie
from .vocab import EOS, TokenId, Vocabulary, decode

Constraint = Callable[[tuple[TokenId, ...]], AbstractSet[TokenId]]


class BeamError(ValueError):
    pass


@dataclass(frozen=True)
class Hypothesis:
    """A partial or finished decode (no SOS; EOS present iff finished)."""

    tokens: tuple[TokenId, ...]
    cum_logprob: float
    finished: bool


@dataclass(frozen=True)
class BeamConfig:
    k: int = 10
    max_steps: int = 15
    length_normalize: bool = True

    def __post_init__(self) -> None:
        if self.k < 1:
            raise BeamError("beam width must be at least 1")
        if self.max_steps < 1:
            raise BeamError("max_steps must be at least 1")


class RankedEntry(NamedTuple):
    name: str
    raw_logprob: float
    normalized_score: float
    tokens: tuple[TokenId, ...]


@dataclass(frozen=True)
class RankedResult:
    """Entries sorted descending by score, ties by ascending token order."""

    entries: tuple[RankedEntry, ...]

    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def __iter__(self) -> Iterator[RankedEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> RankedEntry:
        return self.entries[index]


def mask_logprobs(logprobs: np.ndarray, allowed: AbstractSet[TokenId]) -> np.ndarray:
    """Set entries outside ``allowed`` to -inf, leaving the rest unchanged.

    No renormalization happens.  An empty allowed set is a dead end and is
    rejected here; beam search drops such hypotheses before masking.
    """
    if not allowed:
        raise BeamError("empty allowed set")
    masked = np.full(logprobs.shape, -np.inf)
    idx = np.fromiter(allowed, dtype=np.intp)
    if idx.min() < 0 or idx.max() >= logprobs.shape[0]:
        raise BeamError("allowed token id out of range")
    masked[idx] = logprobs[idx]
    return masked


def beam_search(
    scorer: Scorer,
    input_tokens: Sequence[TokenId],
    constraint: Constraint,
    config: BeamConfig,
) -> list[Hypothesis]:
    """Search for up to ``k`` finished hypotheses satisfying ``constraint``.

    ``constraint`` maps a generated prefix to the set of legal next tokens
    (include EOS to permit finishing).  Hypotheses whose allowed set is empty
    are dropped; hypotheses that reach ``max_steps`` without EOS are
    discarded.  Returns finished hypotheses sorted by the config's ranking
    score; an empty list means nothing finished.
    """
    input_tokens = tuple(input_tokens)
    live = [Hypothesis((), 0.0, False)]
    pool: list[Hypothesis] = []
    for _ in range(config.max_steps):
        if not live:
            break
        candidates: list[Hypothesis] = []
        for hyp in live:
            allowed = constraint(hyp.tokens)
            if not allowed:
                continue
            masked = mask_logprobs(scorer.next_token_logprobs(input_tokens, hyp.tokens), allowed)
            for token in sorted(allowed):
                extended = Hypothesis(
                    hyp.tokens + (token,),
                    hyp.cum_logprob + float(masked[token]),
                    token == EOS,
                )
                if extended.finished:
                    pool.append(extended)
                else:
                    candidates.append(extended)
        candidates.sort(key=lambda h: (-h.cum_logprob, h.tokens))
        live = candidates[: config.k]
    pool.sort(key=lambda h: (-_final_score(h, config.length_normalize), h.tokens))
    return pool[: config.k]


def _final_score(hyp: Hypothesis, length_normalize: bool) -> float:
    if length_normalize:
        return hyp.cum_logprob / len(hyp.tokens)
    return hyp.cum_logprob


def rank_entities(
    scorer: Scorer,
    input_tokens: Sequence[TokenId],
    trie: EntityTrie,
    config: BeamConfig,
    vocab: Vocabulary,
) -> RankedResult:
    """Top-k catalog names under the trie constraint.

    ``normalized_score`` divides the cumulative log-probability by the token
    count including EOS; with normalization off it simply repeats the raw
    score.  Names are decoded from the winning token sequences.
    """
    hypotheses = beam_search(scorer, input_tokens, trie.allowed_continuations, config)
    return _ranked(
        ((h.tokens, h.cum_logprob) for h in hypotheses), config.length_normalize, vocab
    )


def exhaustive_rank(
    scorer: Scorer,
    input_tokens: Sequence[TokenId],
    catalog: Catalog,
    length_normalize: bool,
    vocab: Vocabulary,
) -> RankedResult:
    """Score every catalog name directly and sort (the brute-force route).

    Applies the same scores, normalization, and tie rules as
    :func:`rank_entities`; with a beam at least as wide as the catalog the
    two agree exactly.
    """
    input_tokens = tuple(input_tokens)
    scored = []
    for record in catalog:
        seq = record.tokens + (EOS,)
        scored.append((seq, sequence_score(scorer, input_tokens, seq)))
    return _ranked(scored, length_normalize, vocab)


def _ranked(
    scored: Iterable[tuple[tuple[TokenId, ...], float]],
    length_normalize: bool,
    vocab: Vocabulary,
) -> RankedResult:
    entries = []
    for tokens, raw in scored:
        normalized = raw / len(tokens) if length_normalize else raw
        entries.append(RankedEntry(decode(tokens[:-1], vocab), raw, normalized, tokens))
    entries.sort(key=lambda e: (-e.normalized_score, e.tokens))
    return RankedResult(tuple(entries))

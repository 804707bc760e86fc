"""Shared fixtures-as-functions for the test suite.

Random catalogs are generated directly in token space (distinct sequences of
ordinary ids over a small word pool), so decoded names are canonical and the
name/token mapping is exact in both directions.
"""

from __future__ import annotations

import numpy as np

from trie_decode.catalog import Catalog, EntityRecord
from trie_decode.scoring import TableScorer
from trie_decode.trie import EntityTrie, build_trie
from trie_decode.vocab import EOS, SOS, Vocabulary, decode

WORD_POOL = (
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta",
    "eta", "theta", "iota", "kappa", "lambda", "mu",
)

SHARED_PREFIX_NAMES = ("English language", "English literature", "France")

# A linking fixture: annotate the painting sentence with its two entities.
PAINTING_SOURCE = "In 1503, Leonardo began painting the Mona Lisa."
PAINTING_WORDS = (
    "In", "1503", ",", "Leonardo", "began", "painting",
    "the", "Mona", "Lisa", ".", "da", "Vinci",
)
PAINTING_ENTITIES = ("Leonardo da Vinci", "Mona Lisa")
PAINTING_MARKUP = "In 1503, [Leonardo](Leonardo da Vinci) began painting the [Mona Lisa](Mona Lisa)."

# A soccer report with four gold mentions; the predictions add a spurious
# fifth, giving micro precision 0.80, recall 1.00, F1 8/9.
SOCCER_SOURCE = (
    "SOCCER - RESULT IN SPANISH FIRST DIVISION . MADRID 1996-08-31 Result of game "
    "played in the Spanish first division on Saturday : Deportivo Coruna 1 Real Madrid 1."
)
SOCCER_GOLD_MARKUP = (
    "SOCCER - RESULT IN [SPANISH](Spain) FIRST DIVISION . [MADRID](Madrid) 1996-08-31 "
    "Result of game played in the [Spanish](Spain) first division on Saturday : "
    "Deportivo Coruna 1 [Real Madrid](Real Madrid C.F.) 1."
)
SOCCER_PREDICTED_MARKUP = (
    "SOCCER - RESULT IN [SPANISH](Spain) FIRST DIVISION . [MADRID](Madrid) 1996-08-31 "
    "Result of game played in the [Spanish](Spain) first division on Saturday : "
    "[Deportivo](Deportivo de La Coruna) Coruna 1 [Real Madrid](Real Madrid C.F.) 1."
)
SOCCER_GOLD_TRIPLES = (
    (19, 7, "Spain"),
    (44, 6, "Madrid"),
    (91, 7, "Spain"),
    (147, 11, "Real_Madrid_C.F."),
)
SOCCER_PREDICTED_TRIPLES = (
    (19, 7, "Spain"),
    (44, 6, "Madrid"),
    (91, 7, "Spain"),
    (128, 9, "Deportivo_de_La_Coruna"),
    (147, 11, "Real_Madrid_C.F."),
)


def pool_vocabulary(extra_specials: tuple[str, ...] = ()) -> Vocabulary:
    return Vocabulary(WORD_POOL, extra_specials)


def shared_prefix_vocabulary() -> Vocabulary:
    return Vocabulary(("English", "France", "language", "literature"))


def random_sequences(
    rng: np.random.Generator, vocab: Vocabulary, size: int, max_len: int = 6
) -> list[tuple[int, ...]]:
    """Distinct random token sequences of ordinary ids, 1..max_len long."""
    ordinary = list(range(vocab.ordinary_base, vocab.size))
    seen: set[tuple[int, ...]] = set()
    out: list[tuple[int, ...]] = []
    while len(out) < size:
        length = int(rng.integers(1, max_len + 1))
        seq = tuple(int(t) for t in rng.choice(ordinary, size=length))
        if seq not in seen:
            seen.add(seq)
            out.append(seq)
    return out


def catalog_from_sequences(sequences: list[tuple[int, ...]], vocab: Vocabulary) -> Catalog:
    return Catalog(EntityRecord(decode(seq, vocab), seq) for seq in sequences)


def random_catalog(
    rng: np.random.Generator, vocab: Vocabulary, size: int, max_len: int = 6
) -> tuple[Catalog, EntityTrie]:
    sequences = random_sequences(rng, vocab, size, max_len)
    return catalog_from_sequences(sequences, vocab), build_trie(sequences, vocab.size)


def painting_fixture() -> tuple[Vocabulary, EntityTrie, tuple[int, ...]]:
    """Vocabulary, entity trie, and gold markup token target for the painting sentence."""
    from trie_decode.vocab import EOS, LINK_CLOSE, LINK_OPEN, MENTION_CLOSE, MENTION_OPEN, encode

    vocab = Vocabulary(PAINTING_WORDS)
    trie = build_trie([tuple(encode(n, vocab)) for n in PAINTING_ENTITIES], vocab.size)
    t = {w: vocab.ordinary_id(w) for w in PAINTING_WORDS}
    target = (
        t["In"], t["1503"], t[","],
        MENTION_OPEN, t["Leonardo"], MENTION_CLOSE,
        LINK_OPEN, t["Leonardo"], t["da"], t["Vinci"], LINK_CLOSE,
        t["began"], t["painting"], t["the"],
        MENTION_OPEN, t["Mona"], t["Lisa"], MENTION_CLOSE,
        LINK_OPEN, t["Mona"], t["Lisa"], LINK_CLOSE,
        t["."], EOS,
    )
    return vocab, trie, target


def random_table_scorer(
    rng: np.random.Generator, vocab: Vocabulary, input_conditioned: bool = False
) -> TableScorer:
    """Random sparse bigram counts over the ordinary tokens plus EOS."""
    contexts = [SOS] + list(range(vocab.ordinary_base, vocab.size))
    targets = [EOS] + list(range(vocab.ordinary_base, vocab.size))
    counts: dict[int, dict[int, float]] = {}
    for ctx in contexts:
        if rng.random() < 0.3:
            continue  # leave some contexts untrained
        n_entries = int(rng.integers(1, 6))
        row: dict[int, float] = {}
        for tok in rng.choice(targets, size=n_entries, replace=False):
            row[int(tok)] = float(rng.integers(1, 20))
        counts[ctx] = row
    alpha = float(rng.choice((0.1, 0.5, 1.0)))
    return TableScorer(counts, alpha, vocab.size, input_conditioned)

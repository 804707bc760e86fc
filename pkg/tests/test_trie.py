"""Prefix trie: membership, continuations, statistics, serialization."""

import numpy as np
import pytest

from trie_decode.trie import (
    MAGIC,
    EntityTrie,
    TrieError,
    TrieFormatError,
    build_trie,
)
from trie_decode.vocab import EOS, SOS, encode

from helpers import SHARED_PREFIX_NAMES, shared_prefix_vocabulary, pool_vocabulary, random_sequences


@pytest.fixture
def vocab():
    return shared_prefix_vocabulary()


@pytest.fixture
def names_trie(vocab):
    return build_trie([tuple(encode(n, vocab)) for n in SHARED_PREFIX_NAMES], vocab.size)


class TestBuild:
    def test_single_name(self, vocab):
        trie = build_trie([encode("France", vocab)], vocab.size)
        assert len(trie.root.children) == 1
        (child,) = trie.root.children.values()
        assert child.terminal

    def test_shared_prefix_is_one_internal_node(self, vocab, names_trie):
        english = vocab.ordinary_id("English")
        france = vocab.ordinary_id("France")
        assert set(names_trie.root.children) == {english, france}
        english_node = names_trie.root.children[english]
        assert set(english_node.children) == {
            vocab.ordinary_id("language"),
            vocab.ordinary_id("literature"),
        }
        assert names_trie.leaf_count == 3

    def test_name_that_prefixes_another(self, vocab):
        english = vocab.ordinary_id("English")
        language = vocab.ordinary_id("language")
        trie = build_trie([(english,), (english, language)], vocab.size)
        node = trie.root.children[english]
        assert node.terminal and language in node.children
        # membership oracle for both
        assert trie.contains((english,)) and trie.contains((english, language))

    def test_empty_sequence_rejected(self, vocab):
        with pytest.raises(TrieError):
            build_trie([()], vocab.size)

    def test_no_sequences_rejected(self, vocab):
        with pytest.raises(TrieError):
            build_trie([], vocab.size)

    def test_structural_specials_rejected(self, vocab):
        with pytest.raises(TrieError):
            build_trie([(EOS,)], vocab.size)
        with pytest.raises(TrieError):
            build_trie([(SOS, 7)], vocab.size)


class TestAllowedContinuations:
    def test_empty_prefix_is_root_children(self, vocab, names_trie):
        assert names_trie.allowed_continuations([]) == {
            vocab.ordinary_id("English"),
            vocab.ordinary_id("France"),
        }

    def test_internal_node(self, vocab, names_trie):
        assert names_trie.allowed_continuations([vocab.ordinary_id("English")]) == {
            vocab.ordinary_id("language"),
            vocab.ordinary_id("literature"),
        }

    def test_terminal_node_yields_eos(self, vocab, names_trie):
        assert names_trie.allowed_continuations([vocab.ordinary_id("France")]) == {EOS}

    def test_unreachable_prefix_yields_empty_set(self, vocab, names_trie):
        assert names_trie.allowed_continuations([vocab.ordinary_id("language")]) == frozenset()


class TestContains:
    def test_inserted_sequences(self, vocab, names_trie):
        assert names_trie.contains(encode("English language", vocab))

    def test_proper_prefix_not_contained(self, vocab, names_trie):
        assert not names_trie.contains([vocab.ordinary_id("English")])

    def test_empty_not_contained(self, names_trie):
        assert not names_trie.contains([])


class TestInsert:
    def test_insert_new_leaf(self, vocab, names_trie):
        grown = names_trie.insert([vocab.ordinary_id("literature")])
        assert grown.leaf_count == 4
        assert grown.contains([vocab.ordinary_id("literature")])
        assert names_trie.leaf_count == 3  # original untouched

    def test_reinsert_is_idempotent(self, vocab, names_trie):
        again = names_trie.insert(encode("France", vocab))
        assert again.stats() == names_trie.stats()
        assert again == names_trie

    def test_insert_prefix_of_existing_flags_terminal(self, vocab, names_trie):
        grown = names_trie.insert([vocab.ordinary_id("English")])
        node = grown.root.children[vocab.ordinary_id("English")]
        assert node.terminal and node.children
        assert grown.leaf_count == 4

    def test_prior_memberships_preserved(self, vocab, names_trie):
        grown = names_trie.insert([vocab.ordinary_id("literature"), vocab.ordinary_id("France")])
        for name in SHARED_PREFIX_NAMES:
            assert grown.contains(encode(name, vocab))


class TestStats:
    def test_single_entity(self, vocab):
        trie = build_trie([encode("France", vocab)], vocab.size)
        assert trie.stats() == (1, 1)  # root internal, France a leaf

    def test_shared_prefix_trie(self, names_trie):
        # root and the shared prefix node are internal; the three name ends are leaves
        assert names_trie.stats() == (3, 2)

    def test_terminal_with_children_counts_both_ways(self, vocab):
        english = vocab.ordinary_id("English")
        language = vocab.ordinary_id("language")
        trie = build_trie([(english,), (english, language)], vocab.size)
        assert trie.stats() == (2, 2)

    def test_structural_bounds_on_random_catalogs(self):
        vocab = pool_vocabulary()
        rng = np.random.default_rng(11)
        for _ in range(50):
            seqs = random_sequences(rng, vocab, size=int(rng.integers(1, 40)))
            trie = build_trie(seqs, vocab.size)
            assert trie.leaf_count == len(set(seqs))
            assert trie.internal_node_count <= sum(len(s) for s in seqs)


class TestProperties:
    def test_every_prefix_allows_the_next_token(self):
        vocab = pool_vocabulary()
        rng = np.random.default_rng(23)
        for _ in range(30):
            seqs = random_sequences(rng, vocab, size=int(rng.integers(1, 30)))
            trie = build_trie(seqs, vocab.size)
            for seq in seqs:
                for i in range(len(seq)):
                    assert seq[i] in trie.allowed_continuations(seq[:i])

    def test_contains_iff_eos_allowed(self):
        vocab = pool_vocabulary()
        rng = np.random.default_rng(29)
        seqs = random_sequences(rng, vocab, size=40)
        trie = build_trie(seqs, vocab.size)
        probes = seqs + [seq[:-1] for seq in seqs if len(seq) > 1]
        probes += [tuple(int(t) for t in rng.integers(7, vocab.size, size=3)) for _ in range(50)]
        for probe in probes:
            assert trie.contains(probe) == (EOS in trie.allowed_continuations(probe))


class TestSerialization:
    def test_round_trip_structure_and_stats(self, names_trie):
        blob = names_trie.serialize()
        back = EntityTrie.deserialize(blob)
        assert back == names_trie
        assert back.stats() == names_trie.stats()
        assert list(back.sequences()) == list(names_trie.sequences())

    def test_round_trip_is_canonical(self, names_trie):
        blob = names_trie.serialize()
        assert EntityTrie.deserialize(blob).serialize() == blob

    def test_insertion_order_independence(self):
        vocab = pool_vocabulary()
        rng = np.random.default_rng(31)
        for _ in range(30):
            seqs = random_sequences(rng, vocab, size=int(rng.integers(2, 25)))
            reference = build_trie(seqs, vocab.size).serialize()
            for _ in range(3):
                shuffled = list(seqs)
                rng.shuffle(shuffled)
                assert build_trie(shuffled, vocab.size).serialize() == reference

    def test_bad_magic_rejected(self, names_trie):
        blob = bytearray(names_trie.serialize())
        blob[0] ^= 0xFF
        with pytest.raises(TrieFormatError, match="magic"):
            EntityTrie.deserialize(bytes(blob))

    def test_truncated_stream_rejected(self, names_trie):
        blob = names_trie.serialize()
        for cut in (len(MAGIC) - 1, len(MAGIC) + 3, len(blob) - 1):
            with pytest.raises(TrieFormatError):
                EntityTrie.deserialize(blob[:cut])

    def test_dangling_child_offset_rejected(self, names_trie):
        blob = bytearray(names_trie.serialize())
        # the first child pointer lives right after the root record header
        offset_pos = len(MAGIC) + 4 + 5 + 4
        blob[offset_pos : offset_pos + 8] = (2**40).to_bytes(8, "little")
        with pytest.raises(TrieFormatError, match="dangling"):
            EntityTrie.deserialize(bytes(blob))

    def test_trailing_data_rejected(self, names_trie):
        with pytest.raises(TrieFormatError, match="trailing"):
            EntityTrie.deserialize(names_trie.serialize() + b"\x00")

    def test_golden_bytes_single_name(self, vocab):
        # wire format pinned by hand: magic, u32 vocab size, then preorder
        # records of (u8 terminal, u32 child count, (u32 token, u64 offset)*)
        import struct

        trie = build_trie([encode("France", vocab)], vocab.size)
        france = vocab.ordinary_id("France")
        root_offset = 8 + 4
        child_offset = root_offset + 5 + 12
        expected = (
            b"ETRIE\x00\x01\x00"
            + struct.pack("<I", vocab.size)
            + struct.pack("<BI", 0, 1)
            + struct.pack("<IQ", france, child_offset)
            + struct.pack("<BI", 1, 0)
        )
        assert trie.serialize() == expected

"""Token inventory and deterministic text <-> token conversion.

Seven special tokens occupy fixed ids 0..6: start/end of sequence, the four
markup delimiters, and unknown.  A vocabulary may additionally register
*extra* reserved specials (e.g. mention-flagging markers), which occupy the
ids directly after the core specials.  Ordinary tokens follow, so in a
vocabulary file the token on 0-based line ``i`` has id ``i + 7`` when no
extra specials are registered.

Encoding splits on whitespace and then applies greedy longest-match against
the ordinary token table inside each word; characters that match nothing
become a single ``UNK`` each.  Specials are never produced from raw text.
Decoding joins token strings with single spaces, so ``decode(encode(t)) == t``
whenever every whitespace-separated word of ``t`` is itself an ordinary
vocabulary token.
"""

from __future__ import annotations

import re
from typing import Iterable, NamedTuple, Sequence

TokenId = int

SOS: TokenId = 0
EOS: TokenId = 1
MENTION_OPEN: TokenId = 2
MENTION_CLOSE: TokenId = 3
LINK_OPEN: TokenId = 4
LINK_CLOSE: TokenId = 5
UNK: TokenId = 6

CORE_SPECIAL_STRINGS: tuple[str, ...] = ("<s>", "</s>", "[", "]", "(", ")", "<unk>")
NUM_CORE_SPECIALS: int = len(CORE_SPECIAL_STRINGS)

_WORD_RE = re.compile(r"\S+")


class VocabularyError(ValueError):
    """Raised for malformed vocabularies or undecodable token ids."""


class TokenSpan(NamedTuple):
    """A token together with its character extent in the encoded text."""

    token: TokenId
    start: int
    length: int

    @property
    def end(self) -> int:
        return self.start + self.length


class Vocabulary:
    """Immutable token inventory.

    Safe for concurrent readers: all state is fixed at construction.

    Args:
        tokens: ordinary token strings, in id order.
        extra_specials: reserved strings given ids ``7 .. 7+len-1``; like the
            core specials they are never produced by :func:`encode`.
    """

    __slots__ = ("tokens", "extra_specials", "_table", "_strings", "_max_len")

    def __init__(self, tokens: Iterable[str], extra_specials: Iterable[str] = ()) -> None:
        toks = tuple(tokens)
        extras = tuple(extra_specials)
        reserved = set(CORE_SPECIAL_STRINGS)
        for s in extras:
            self._check_token_string(s, kind="extra special")
            if s in reserved:
                raise VocabularyError(f"duplicate special string: {s!r}")
            reserved.add(s)
        seen: set[str] = set()
        for t in toks:
            self._check_token_string(t, kind="token")
            if t in reserved or t in seen:
                raise VocabularyError(f"duplicate token string: {t!r}")
            seen.add(t)
        self.tokens = toks
        self.extra_specials = extras
        base = NUM_CORE_SPECIALS + len(extras)
        self._table = {t: base + i for i, t in enumerate(toks)}
        self._strings = CORE_SPECIAL_STRINGS + extras + toks
        self._max_len = max((len(t) for t in toks), default=0)

    @staticmethod
    def _check_token_string(s: str, kind: str) -> None:
        if not s:
            raise VocabularyError(f"empty {kind} string")
        if any(c.isspace() for c in s):
            raise VocabularyError(f"{kind} string contains whitespace: {s!r}")

    @property
    def size(self) -> int:
        """Total id count, specials included."""
        return len(self._strings)

    @property
    def ordinary_base(self) -> TokenId:
        """Id of the first ordinary token."""
        return NUM_CORE_SPECIALS + len(self.extra_specials)

    def is_special(self, token_id: TokenId) -> bool:
        return 0 <= token_id < self.ordinary_base

    def ordinary_id(self, token: str) -> TokenId:
        try:
            return self._table[token]
        except KeyError:
            raise VocabularyError(f"not an ordinary vocabulary token: {token!r}") from None

    def extra_special_id(self, special: str) -> TokenId:
        try:
            return NUM_CORE_SPECIALS + self.extra_specials.index(special)
        except ValueError:
            raise VocabularyError(f"not a registered extra special: {special!r}") from None

    def string_of(self, token_id: TokenId) -> str:
        if not 0 <= token_id < len(self._strings):
            raise VocabularyError(f"token id out of range: {token_id}")
        return self._strings[token_id]

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.tokens == other.tokens and self.extra_specials == other.extra_specials

    def __hash__(self) -> int:
        return hash((self.tokens, self.extra_specials))

    def __repr__(self) -> str:
        return f"Vocabulary({len(self.tokens)} tokens, extra_specials={self.extra_specials!r})"


def encode_with_offsets(text: str, vocab: Vocabulary) -> list[TokenSpan]:
    """Encode ``text`` and report each token's character extent.

    Greedy longest-match inside each whitespace word; an unmatched character
    becomes one UNK covering exactly that character.
    """
    table = vocab._table
    max_len = vocab._max_len
    out: list[TokenSpan] = []
    for m in _WORD_RE.finditer(text):
        word = m.group()
        base = m.start()
        i = 0
        n = len(word)
        while i < n:
            for length in range(min(max_len, n - i), 0, -1):
                tid = table.get(word[i : i + length])
                if tid is not None:
                    out.append(TokenSpan(tid, base + i, length))
                    i += length
                    break
            else:
                out.append(TokenSpan(UNK, base + i, 1))
                i += 1
    return out


def encode(text: str, vocab: Vocabulary) -> list[TokenId]:
    """Deterministic, total encoding of ``text`` to token ids."""
    return [span.token for span in encode_with_offsets(text, vocab)]


def decode(tokens: Sequence[TokenId], vocab: Vocabulary) -> str:
    """Join token strings with single spaces.

    Raises:
        VocabularyError: if any id is out of range (corrupt sequence).
    """
    return " ".join(vocab.string_of(t) for t in tokens)


def load_vocabulary(source: str | Iterable[str], extra_specials: Iterable[str] = ()) -> Vocabulary:
    """Build a vocabulary from a file path or an iterable of lines.

    One ordinary token per line, UTF-8; specials are implicit and not listed.
    """
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = [line.rstrip("\n") for line in source]
    tokens: list[str] = []
    for lineno, raw in enumerate(lines):
        token = raw.strip()
        if not token:
            raise VocabularyError(f"line {lineno}: empty token")
        tokens.append(token)
    return Vocabulary(tokens, extra_specials)

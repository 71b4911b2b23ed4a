"""Plain-text subword vocabulary and deterministic greedy segmentation.

Vocabulary file format: UTF-8, one token per line, LF line endings. The
first five lines must be `<pad>`, `<unk>`, `<s>`, `</s>`, `<sep>`, giving
those tokens the fixed ids 0..4. Word-initial pieces carry the marker
character `▁` (U+2581) in place of the preceding space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import VocabularyError
from .kinds import Kind

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
EOS_ID = 3
SEP_ID = 4

SPECIAL_TOKENS = ("<pad>", "<unk>", "<s>", "</s>", "<sep>")

MARKER = "▁"


@dataclass
class Vocabulary:
    tokens: list

    def __post_init__(self):
        self._ids = {}
        for i, token in enumerate(self.tokens):
            if not token:
                raise VocabularyError(f"empty token at line {i + 1}")
            if token in self._ids:
                raise VocabularyError(f"duplicate token {token!r} at line {i + 1}")
            self._ids[token] = i
        if tuple(self.tokens[:5]) != SPECIAL_TOKENS:
            raise VocabularyError(
                f"first five tokens must be {list(SPECIAL_TOKENS)}, got {self.tokens[:5]}"
            )
        # Specials never participate in text matching; PAD/BOS/etc. ids
        # only ever come from sequence assembly.
        self._match_ids = {t: i for t, i in self._ids.items() if i >= len(SPECIAL_TOKENS)}
        self._max_piece = max((len(t) for t in self._match_ids), default=0)

    def __len__(self):
        return len(self.tokens)

    def id_of(self, token):
        return self._ids[token]

    def encode(self, text: str) -> list:
        """Greedy longest-match segmentation; returns ids, no specials.

        Whitespace is normalized first: outer whitespace stripped, inner
        runs collapsed, every word prefixed with the marker. A character
        that starts no vocabulary token consumes one position as UNK.
        """
        words = text.split()
        if not words:
            return []
        stream = MARKER + MARKER.join(words)
        ids = []
        pos = 0
        end = len(stream)
        while pos < end:
            limit = min(self._max_piece, end - pos)
            for length in range(limit, 0, -1):
                piece_id = self._match_ids.get(stream[pos : pos + length])
                if piece_id is not None:
                    ids.append(piece_id)
                    pos += length
                    break
            else:
                ids.append(UNK_ID)
                pos += 1
        return ids


def load_vocab(path) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise VocabularyError(f"{path}: empty vocabulary file")
    return Vocabulary(lines)


@dataclass
class TokenSequence:
    """Encoded ids for one encoder input: BOS first, EOS last, SEP between
    joint segments."""

    ids: list = field(default_factory=list)

    def __len__(self):
        return len(self.ids)


def _truncate_single(ids, max_len):
    # Drop content from the right, keeping the final EOS.
    if len(ids) <= max_len:
        return ids
    if max_len < 2:
        raise ValueError(f"max_len {max_len} cannot hold BOS and EOS")
    return ids[: max_len - 1] + [EOS_ID]


def _single(vocab, text, max_len):
    return TokenSequence(_truncate_single([BOS_ID] + vocab.encode(text) + [EOS_ID], max_len))


def _joint_pair(vocab, first, second, max_len):
    """[BOS first SEP second EOS], truncating the longer segment first and
    the second segment on ties."""
    if max_len < 3:
        raise ValueError(f"max_len {max_len} cannot hold BOS, SEP and EOS")
    a = vocab.encode(first)
    b = vocab.encode(second)
    while 3 + len(a) + len(b) > max_len:
        if len(b) >= len(a):
            b.pop()
        else:
            a.pop()
    return TokenSequence([BOS_ID] + a + [SEP_ID] + b + [EOS_ID])


def encode_fields(vocab: Vocabulary, record, like, max_len: int) -> list:
    """Token sequences for one record, in the kind's field order.

    COMET_QE gives [S, T] as separate sequences, COMET [S, T, R], BLEURT
    one joint [BOS T SEP R EOS] sequence. Each sequence fits max_len.
    """
    like = Kind.parse(like)
    values = record.field_values(like)
    if like is Kind.BLEURT:
        translation, reference = values
        return [_joint_pair(vocab, translation, reference, max_len)]
    return [_single(vocab, value, max_len) for value in values]

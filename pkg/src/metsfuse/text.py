"""Tokenizer and vocabulary for diary text.

Tokens are lowercased alphanumeric runs, except that CJK ideographs are
emitted one codepoint at a time. Punctuation and whitespace separate
tokens and are dropped. Every sequence starts with a synthetic [CLS]
marker. Each real token keeps the character span it came from so a
surrogate explanation can cut the original string.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
_RESERVED = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN]

_CJK_RANGES = ((0x3400, 0x4DBF), (0x4E00, 0x9FFF), (0xF900, 0xFAFF))


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


@dataclass
class TokenSequence:
    """Tokens plus the [start, stop) character spans they cover in the source."""

    tokens: list[str]
    offsets: list[tuple[int, int]]
    text: str

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(text: str) -> TokenSequence:
    tokens = [CLS_TOKEN]
    offsets: list[tuple[int, int]] = [(0, 0)]
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if _is_cjk(ch):
            tokens.append(ch)
            offsets.append((i, i + 1))
            i += 1
        elif ch.isalnum():
            j = i + 1
            while j < n and text[j].isalnum() and not _is_cjk(text[j]):
                j += 1
            tokens.append(text[i:j].lower())
            offsets.append((i, j))
            i = j
        else:
            i += 1
    return TokenSequence(tokens=tokens, offsets=offsets, text=text)


class Vocabulary:
    """Frequency-ranked token ids with [PAD]/[UNK]/[CLS] pinned at 0/1/2."""

    def __init__(self, token_to_id: dict[str, int]):
        for tok, want in zip(_RESERVED, range(3)):
            if token_to_id.get(tok) != want:
                raise ValueError(f"vocabulary must map {tok} to {want}")
        self.token_to_id = dict(token_to_id)
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}
        if len(self.id_to_token) != len(self.token_to_id):
            raise ValueError("vocabulary ids are not unique")

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @classmethod
    def build(cls, texts: list[str], max_size: int | None = None) -> "Vocabulary":
        """Count tokens across texts; rank by count desc, ties lexicographic.

        max_size caps the total vocabulary including the three reserved ids.
        """
        counts: dict[str, int] = {}
        for text in texts:
            for tok in tokenize(text).tokens[1:]:
                counts[tok] = counts.get(tok, 0) + 1
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if max_size is not None:
            if max_size < len(_RESERVED):
                raise ValueError(f"max_size {max_size} cannot hold reserved tokens")
            ranked = ranked[: max_size - len(_RESERVED)]
        token_to_id = {t: i for i, t in enumerate(_RESERVED)}
        for tok, _ in ranked:
            token_to_id[tok] = len(token_to_id)
        return cls(token_to_id)

    def encode(self, seq: TokenSequence, max_len: int) -> list[int]:
        """Ids for the first max_len tokens, padded with [PAD] to max_len."""
        ids = [self.token_to_id.get(t, UNK_ID) for t in seq.tokens[:max_len]]
        ids.extend([PAD_ID] * (max_len - len(ids)))
        return ids

    def save(self, path: str | Path) -> None:
        lines = [f"{t}\t{i}" for t, i in sorted(self.token_to_id.items(), key=lambda kv: kv[1])]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        token_to_id: dict[str, int] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            tok, _, id_str = line.rpartition("\t")
            token_to_id[tok] = int(id_str)
        return cls(token_to_id)

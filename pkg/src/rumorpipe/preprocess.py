"""Social-media text normalization and tokenization.

The tokenizer is a documented approximation of the usual Twitter/Reddit
tokenizers: split on Unicode whitespace, then peel a trailing run of
sentence punctuation (``.,!?;:``) off each chunk into its own token.
Emoticons and emoji stay single tokens. After tokenization: user handles
(``@...``) are dropped, leading ``#`` is removed from hashtags, URL tokens
are dropped, text is lowercased, runs of more than three identical
characters collapse to exactly three, and the result is truncated to 32
tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

MAX_TOKENS = 32

# Reserved stand-in for posts whose text is empty after preprocessing; its
# embedding is defined to be the zero vector downstream.
EMPTY_TOKEN = "<empty>"

_TRAILING_PUNCT = re.compile(r"^(.*?)([.,!?;:]+)$", re.DOTALL)
_CHAR_RUN = re.compile(r"(.)\1{3,}")
_URL_PREFIXES = ("http://", "https://", "www.")


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    truncated: bool

    def __len__(self) -> int:
        return len(self.tokens)


def _split_chunks(raw_text: str) -> list[str]:
    chunks = []
    for chunk in raw_text.split():
        m = _TRAILING_PUNCT.match(chunk)
        if m and m.group(1):
            chunks.append(m.group(1))
            chunks.append(m.group(2))
        else:
            chunks.append(chunk)
    return chunks


def normalize_and_tokenize(raw_text: str) -> TokenSequence:
    """Tokenize and normalize one post's text."""
    tokens = []
    for chunk in _split_chunks(raw_text):
        chunk = chunk.lstrip("#")
        if not chunk or chunk.startswith("@"):
            continue
        chunk = chunk.lower()
        chunk = _CHAR_RUN.sub(r"\1\1\1", chunk)
        if chunk.startswith(_URL_PREFIXES):
            continue
        tokens.append(chunk)
    truncated = len(tokens) > MAX_TOKENS
    return TokenSequence(tokens=tuple(tokens[:MAX_TOKENS]), truncated=truncated)


def is_empty_after_preprocess(seq: TokenSequence) -> bool:
    return len(seq.tokens) == 0


def tokens_or_placeholder(seq: TokenSequence) -> tuple[str, ...]:
    """Token list fed to the embedder: the reserved placeholder if empty."""
    return seq.tokens if seq.tokens else (EMPTY_TOKEN,)

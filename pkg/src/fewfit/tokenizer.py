"""Deterministic hashing tokenizer: whitespace split + 64-bit FNV-1a.

Vocab indices 0 (PAD) and 1 (EMPTY) are reserved; hashed tokens land in
[2, vocab_size). No learned vocabulary, so the package stays self-contained.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

PAD_ID = 0
EMPTY_ID = 1

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TokenizerConfig:
    vocab_size: int = 65536
    max_len: int = 32
    lowercase: bool = True

    def __post_init__(self):
        if self.vocab_size < 4 or self.vocab_size & (self.vocab_size - 1):
            raise ConfigError("vocab_size must be a power of two >= 4")
        if self.max_len < 1:
            raise ConfigError("max_len must be >= 1")


@dataclass(frozen=True)
class TokenIds:
    ids: np.ndarray  # (max_len,) int64
    mask: np.ndarray  # (max_len,) {0,1}
    n_valid: int


def hash_token(token, vocab_size):
    """FNV-1a over UTF-8 bytes, folded into [2, vocab_size)."""
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h % (vocab_size - 2) + 2


def tokenize(text, config):
    if config.lowercase:
        text = text.lower()
    words = text.split()
    if not words:
        token_ids = [EMPTY_ID]
    else:
        token_ids = [
            hash_token(w, config.vocab_size) for w in words[: config.max_len]
        ]
    n = len(token_ids)
    ids = np.zeros(config.max_len, dtype=np.int64)
    ids[:n] = token_ids
    mask = np.zeros(config.max_len, dtype=np.int64)
    mask[:n] = 1
    return TokenIds(ids=ids, mask=mask, n_valid=n)

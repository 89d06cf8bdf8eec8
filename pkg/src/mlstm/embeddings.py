"""Pretrained word vectors and averaged text embeddings."""
from __future__ import annotations

import hashlib
import logging
import re
import threading

import numpy as np

from .errors import ParseError
from .numerics import DTYPE, SeededRng

log = logging.getLogger(__name__)

OOV_BOUND = 0.05

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text):
    """Lowercase and split on every run of non-alphanumeric characters.

    >>> tokenize("X-Factor (U.S.)")
    ['x', 'factor', 'u', 's']
    """
    # ASCII alphanumerics only; non-ASCII letters act as separators.
    return [tok for tok in _TOKEN_SPLIT.split(text.lower()) if tok]


class WordVectorStore:
    """Word -> vector lookup with cached, hash-seeded vectors for unknown words."""

    def __init__(self, dim, vectors=None, seed=0):
        if dim <= 0:
            raise ValueError("word vector dimension must be positive")
        self.dim = int(dim)
        self.seed = int(seed)
        self.vectors = {}
        self.duplicates = 0
        self._oov = {}
        self._lock = threading.Lock()
        for word, vec in (vectors or {}).items():
            self.add(word, vec)

    def add(self, word, vec):
        vec = np.asarray(vec, dtype=DTYPE)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector for {word!r} has shape {vec.shape}, expected ({self.dim},)")
        if word in self.vectors:
            self.duplicates += 1
        self.vectors[word] = vec

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, word):
        return word in self.vectors

    def oov_vector(self, word):
        vec = self._oov.get(word)
        if vec is not None:
            return vec
        with self._lock:
            vec = self._oov.get(word)
            if vec is None:
                digest = hashlib.blake2b(
                    f"{self.seed}\x00{word}".encode("utf-8"), digest_size=8
                ).digest()
                rng = SeededRng(int.from_bytes(digest, "little"))
                vec = rng.uniform(-OOV_BOUND, OOV_BOUND, self.dim)
                vec.setflags(write=False)
                self._oov[word] = vec
        return vec

    def lookup(self, word):
        vec = self.vectors.get(word)
        return vec if vec is not None else self.oov_vector(word)


def load_word_vectors(lines, expected_dim, seed=0, source=None):
    """Read ``word v1 ... vd`` lines into a :class:`WordVectorStore`.

    Blank lines are skipped. A duplicated word keeps its last vector and is
    counted in ``store.duplicates``.
    """
    store = WordVectorStore(expected_dim, seed=seed)
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.rstrip(" ").split(" ")
        word, values = parts[0], parts[1:]
        if len(values) != expected_dim:
            raise ParseError(
                f"expected {expected_dim} values for {word!r}, found {len(values)}",
                lineno, source,
            )
        try:
            vec = np.array([float(v) for v in values], dtype=DTYPE)
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", lineno, source) from None
        if not np.all(np.isfinite(vec)):
            raise ParseError(f"non-finite value for {word!r}", lineno, source)
        store.add(word, vec)
    if store.duplicates:
        log.warning("%d duplicate words in word-vector file; last occurrence kept", store.duplicates)
    return store


def load_word_vector_file(path, expected_dim, seed=0):
    with open(path, encoding="utf-8") as fh:
        return load_word_vectors(fh, expected_dim, seed=seed, source=str(path))


def embed_text(store, text):
    """Average of the token vectors of ``text``; zero vector if it has no tokens."""
    tokens = tokenize(text)
    if not tokens:
        return np.zeros(store.dim, dtype=DTYPE)
    acc = np.zeros(store.dim, dtype=DTYPE)
    # Fixed summation order makes the result bit-identical under token permutation.
    for tok in sorted(tokens):
        acc += store.lookup(tok)
    return acc / len(tokens)

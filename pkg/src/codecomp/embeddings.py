"""Embedding matrix ingest and emit: text format and a binary fast path.

The text format is one word followed by H space-separated decimal floats
per line. Word order is preserved through every read/write path, since
codes address words by position.
"""

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger("codecomp.embeddings")

MATRIX_MAGIC = b"DEM1"
MATRIX_VERSION = 1


@dataclass
class EmbeddingMatrix:
    """An ordered vocabulary and its |V| x H float32 matrix."""

    vocab: list
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2:
            raise ConfigError(f"embedding matrix must be 2-D, got {self.matrix.ndim}-D")
        if len(self.vocab) != self.matrix.shape[0]:
            raise ConfigError(
                f"vocabulary has {len(self.vocab)} words but matrix has "
                f"{self.matrix.shape[0]} rows"
            )
        if len(set(self.vocab)) != len(self.vocab):
            raise DataError("vocabulary contains duplicate words")

    @property
    def vocab_size(self):
        return len(self.vocab)

    @property
    def dim(self):
        return self.matrix.shape[1]


def read_text_embeddings(path, limit=None):
    """Parse a text embedding file, preserving order.

    The first whitespace-separated field of each line is the word; the rest
    are its vector. With limit set only the first `limit` data lines are
    read. A repeated word keeps its first occurrence and logs a warning.
    Blank lines are skipped.
    """
    vocab = []
    seen = {}
    rows = []
    dim = None
    consumed = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if limit is not None and consumed >= limit:
                break
            consumed += 1
            parts = line.split()
            word, fields = parts[0], parts[1:]
            if dim is None:
                dim = len(fields)
                if dim == 0:
                    raise DataError(f"{path}: line {lineno}: no vector values")
            elif len(fields) != dim:
                raise DataError(
                    f"{path}: line {lineno}: expected {dim} values, got {len(fields)}"
                )
            try:
                values = [float(f) for f in fields]
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            if word in seen:
                log.warning(
                    "%s: line %d: duplicate word %r, keeping first occurrence",
                    path, lineno, word,
                )
                continue
            seen[word] = True
            vocab.append(word)
            rows.append(values)
    if dim is None:
        dim = 0
    matrix = np.asarray(rows, dtype=np.float32).reshape(len(vocab), dim)
    return EmbeddingMatrix(vocab=vocab, matrix=matrix)


def write_text_embeddings(emb, path):
    """Inverse of read_text_embeddings; floats round-trip to identical bits.

    Each value is rendered with Python's shortest repr of its exact float64
    widening, which parses back to the same float32.
    """
    for word in emb.vocab:
        if not word or any(ch.isspace() for ch in word):
            raise DataError(
                f"word {word!r} cannot be written: text format is whitespace-delimited"
            )
    with open(path, "w", encoding="utf-8") as fh:
        for word, row in zip(emb.vocab, emb.matrix):
            fh.write(word)
            for value in row:
                fh.write(" ")
                fh.write(repr(float(value)))
            fh.write("\n")


def write_binary_matrix(emb, path):
    """Binary embedding file: dims, row-major float32 payload, vocabulary."""
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<BII", MATRIX_VERSION, emb.vocab_size, emb.dim))
        fh.write(np.ascontiguousarray(emb.matrix, dtype="<f4").tobytes())
        for word in emb.vocab:
            blob = word.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)


def read_binary_matrix(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 13:
        raise DataError(f"{path}: file too short for a header: {len(data)} bytes")
    if data[:4] != MATRIX_MAGIC:
        raise DataError(f"{path}: bad magic {data[:4]!r} at offset 0")
    version, vocab_size, dim = struct.unpack_from("<BII", data, 4)
    if version != MATRIX_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    count = vocab_size * dim
    expected = count * 4
    if len(data) - 13 < expected:
        raise DataError(
            f"{path}: truncated float payload: expected {expected} bytes "
            f"at offset 13, got {len(data) - 13}"
        )
    matrix = np.frombuffer(data, dtype="<f4", count=count, offset=13)
    offset = 13 + expected
    vocab = []
    for _ in range(vocab_size):
        if offset + 4 > len(data):
            raise DataError(f"{path}: truncated vocabulary length at offset {offset}")
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + length > len(data):
            raise DataError(
                f"{path}: truncated vocabulary entry: expected {length} bytes "
                f"at offset {offset}, got {len(data) - offset}"
            )
        vocab.append(data[offset:offset + length].decode("utf-8"))
        offset += length
    return EmbeddingMatrix(vocab=vocab, matrix=matrix.reshape(vocab_size, dim).copy())

"""Discrete code export, embedding composition, and packed serialization.

A word's code is M small integers, one per codebook, each in [0, K-1]
(stored 0-based). Reconstruction sums the selected codeword from each
codebook. Codes pack into ceil(M*log2(K)/8) bytes per word: components are
concatenated LSB-first into a little-endian bit stream and each word is
padded to a byte boundary for O(1) random access.
"""

import struct

import numpy as np

from .embeddings import EmbeddingMatrix
from .errors import ConfigError, DataError
from .model import ALPHA_FLOOR
from .tensor import gumbel_from_uniform, matmul, softplus

CODE_MAGIC = b"DCC1"
BOOK_MAGIC = b"DCB1"
FORMAT_VERSION = 1

# Export runs the encoder in slices this large to bound peak memory.
_EXPORT_CHUNK = 8192


class CodeMatrix:
    """Per-word discrete codes: a vocab_size x M integer matrix."""

    def __init__(self, M, K, codes):
        M, K = int(M), int(K)
        codes = np.asarray(codes)
        if codes.ndim != 2 or codes.shape[1] != M:
            raise ConfigError(f"codes shape {codes.shape} does not match M={M}")
        if K < 2 or (K & (K - 1)) != 0:
            raise ConfigError(f"K must be a power of 2 and >= 2, got {K}")
        if codes.size and (codes.min() < 0 or codes.max() >= K):
            raise DataError(
                f"code components must lie in [0, {K - 1}], "
                f"found range [{codes.min()}, {codes.max()}]"
            )
        self.M = M
        self.K = K
        self.codes = codes.astype(np.int32)

    @property
    def vocab_size(self):
        return self.codes.shape[0]

    @property
    def bits_per_word(self):
        return self.M * (self.K.bit_length() - 1)

    @property
    def bytes_per_word(self):
        return (self.bits_per_word + 7) // 8

    def __eq__(self, other):
        return (
            isinstance(other, CodeMatrix)
            and self.M == other.M
            and self.K == other.K
            and np.array_equal(self.codes, other.codes)
        )


class Codebooks:
    """M codebooks of K codewords each, stacked as an (M*K) x H float32 matrix.

    Row i*K + k is codeword k of codebook i; the layout matches ModelParams.A,
    so a trained model's A reinterprets directly as the export codebooks.
    """

    def __init__(self, M, K, H, vectors):
        M, K, H = int(M), int(K), int(H)
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.shape != (M * K, H):
            raise ConfigError(
                f"codebook matrix shape {vectors.shape}, expected {(M * K, H)}"
            )
        if not np.all(np.isfinite(vectors)):
            raise DataError("codebooks contain non-finite entries")
        self.M = M
        self.K = K
        self.H = H
        self.vectors = vectors

    def codeword(self, component, index):
        return self.vectors[component * self.K + index]


def export_codes(params, emb, cfg, noise_rng=None):
    """Hard codes for every word: argmax over alpha per component, noise-free.

    Ties break toward the smallest index. Passing noise_rng adds Gumbel
    noise to the logits before the argmax, giving stochastic codes for
    experimentation; the default deterministic path is what training's
    hard-mode loss and the file formats are defined against.
    """
    params.validate(cfg)
    matrix = emb.matrix
    if matrix.shape[1] != cfg.H:
        raise ConfigError(
            f"embedding dimension {matrix.shape[1]} does not match scheme H={cfg.H}"
        )
    vocab_size = matrix.shape[0]
    out = np.empty((vocab_size, cfg.M), dtype=np.int32)
    for start in range(0, vocab_size, _EXPORT_CHUNK):
        chunk = matrix[start:start + _EXPORT_CHUNK]
        h = np.tanh(matmul(chunk, params.theta) + params.b)
        raw = matmul(h, params.theta_prime) + params.b_prime
        alpha = np.maximum(softplus(raw), raw.dtype.type(ALPHA_FLOOR))
        scores = alpha.reshape(chunk.shape[0], cfg.M, cfg.K)
        if noise_rng is not None:
            noise = gumbel_from_uniform(
                noise_rng.random((chunk.shape[0], cfg.M, cfg.K))
            ).astype(np.float32)
            scores = np.log(scores) + noise
        out[start:start + _EXPORT_CHUNK] = scores.argmax(axis=2)
    books = Codebooks(cfg.M, cfg.K, cfg.H, params.A.copy())
    return CodeMatrix(cfg.M, cfg.K, out), books


def compose_embedding(code, books):
    """Sum the selected codeword of each codebook, in ascending codebook order."""
    code = np.asarray(code)
    if code.shape != (books.M,):
        raise ConfigError(f"code shape {code.shape}, expected ({books.M},)")
    if code.size and (code.min() < 0 or code.max() >= books.K):
        raise DataError(
            f"code components must lie in [0, {books.K - 1}], got {code.tolist()}"
        )
    acc = np.zeros(books.H, dtype=np.float64)
    for i in range(books.M):
        acc += books.vectors[i * books.K + code[i]]
    return acc.astype(np.float32)


def reconstruct_all(codes, books, vocab=None):
    """Compose every word's embedding from its code; returns an EmbeddingMatrix.

    Without a vocabulary, positional names are generated, since codes do not
    carry words (the code file format does).
    """
    if codes.M != books.M or codes.K != books.K:
        raise DataError(
            f"codes are ({codes.M}, {codes.K}) but codebooks are "
            f"({books.M}, {books.K})"
        )
    vocab_size = codes.vocab_size
    acc = np.zeros((vocab_size, books.H), dtype=np.float64)
    for i in range(books.M):
        acc += books.vectors[i * books.K + codes.codes[:, i]]
    if vocab is None:
        vocab = [f"w{i}" for i in range(vocab_size)]
    return EmbeddingMatrix(vocab=list(vocab), matrix=acc.astype(np.float32))


def _code_bits(K):
    return K.bit_length() - 1


def pack_codes(codes):
    """Serialize a CodeMatrix to bytes: header then one padded record per word."""
    bits = _code_bits(codes.K)
    header = CODE_MAGIC + struct.pack(
        "<BIII", FORMAT_VERSION, codes.M, codes.K, codes.vocab_size
    )
    if codes.vocab_size == 0:
        return header
    # (V, M, bits) bit planes, LSB first, flattened per word then padded
    # out to whole bytes.
    planes = (codes.codes[:, :, None] >> np.arange(bits)) & 1
    flat = planes.reshape(codes.vocab_size, codes.M * bits).astype(np.uint8)
    pad = codes.bytes_per_word * 8 - flat.shape[1]
    if pad:
        flat = np.pad(flat, ((0, 0), (0, pad)))
    packed = np.packbits(flat, axis=1, bitorder="little")
    return header + packed.tobytes()


def unpack_codes(data):
    """Parse packed codes back to a CodeMatrix. Trailing bytes are ignored.

    (Code files append the vocabulary after the records; use read_code_file
    to get both.)
    """
    codes, _ = _unpack_codes_at(data)
    return codes


def _unpack_codes_at(data):
    if len(data) < 17:
        raise DataError(f"code data too short: {len(data)} bytes, need 17 for header")
    if data[:4] != CODE_MAGIC:
        raise DataError(f"bad code magic {data[:4]!r} at offset 0")
    version, m, k, vocab_size = struct.unpack_from("<BIII", data, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported code format version {version} at offset 4")
    if k < 2 or (k & (k - 1)) != 0:
        raise DataError(f"header K={k} is not a power of 2 (offset 9)")
    bits = _code_bits(k)
    bytes_per_word = (m * bits + 7) // 8
    payload = vocab_size * bytes_per_word
    if len(data) < 17 + payload:
        raise DataError(
            f"truncated code payload: expected {payload} bytes at offset 17, "
            f"got {len(data) - 17}"
        )
    if vocab_size == 0:
        return CodeMatrix(m, k, np.zeros((0, m), dtype=np.int32)), 17
    raw = np.frombuffer(data, dtype=np.uint8, count=payload, offset=17)
    flat = np.unpackbits(raw.reshape(vocab_size, bytes_per_word), axis=1,
                         bitorder="little")
    planes = flat[:, : m * bits].reshape(vocab_size, m, bits)
    values = (planes.astype(np.int32) << np.arange(bits, dtype=np.int32)).sum(axis=2)
    return CodeMatrix(m, k, values), 17 + payload


def _write_vocab(fh, vocab):
    for word in vocab:
        blob = word.encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def _read_vocab(data, offset, count, path):
    vocab = []
    for _ in range(count):
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
    return vocab, offset


def write_code_file(path, codes, vocab):
    """Code file: packed codes followed by the vocabulary, in word order."""
    if len(vocab) != codes.vocab_size:
        raise ConfigError(
            f"vocabulary has {len(vocab)} words but codes cover {codes.vocab_size}"
        )
    with open(path, "wb") as fh:
        fh.write(pack_codes(codes))
        _write_vocab(fh, vocab)


def read_code_file(path):
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        codes, offset = _unpack_codes_at(data)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc
    vocab, _ = _read_vocab(data, offset, codes.vocab_size, path)
    return codes, vocab


def write_codebook_file(path, books):
    """Codebook file: scheme dims then M*K*H little-endian float32 values."""
    with open(path, "wb") as fh:
        fh.write(BOOK_MAGIC)
        fh.write(struct.pack("<BIII", FORMAT_VERSION, books.M, books.K, books.H))
        fh.write(np.ascontiguousarray(books.vectors, dtype="<f4").tobytes())


def read_codebook_file(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 17:
        raise DataError(f"{path}: codebook file too short: {len(data)} bytes")
    if data[:4] != BOOK_MAGIC:
        raise DataError(f"{path}: bad codebook magic {data[:4]!r} at offset 0")
    version, m, k, h = struct.unpack_from("<BIII", data, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported codebook version {version}")
    count = m * k * h
    expected = count * 4
    if len(data) - 17 < expected:
        raise DataError(
            f"{path}: truncated codebook payload: expected {expected} bytes "
            f"at offset 17, got {len(data) - 17}"
        )
    vectors = np.frombuffer(data, dtype="<f4", count=count, offset=17)
    return Codebooks(m, k, h, vectors.reshape(m * k, h).copy())

"""Vocabulary, cooccurrence counting and signed PMI matrices.

The corpus is plain UTF-8 text, one pre-tokenized sentence per line.
Tokens below ``min_count`` collapse onto ``#rare#``; numeric tokens
collapse onto ``#number#``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

RARE_TOKEN = "#rare#"
NUMBER_TOKEN = "#number#"

# sentences are flattened into one id array per shard; keeps memory bounded
_SHARD_TOKENS = 2_000_000


def normalize(token: str, lowercase: bool = True) -> str:
    return token.lower() if lowercase else token


def is_number(token: str) -> bool:
    """True for tokens like ``1984``, ``-3.5`` or ``1,000``."""
    if token[:1] in "+-":
        token = token[1:]
    stripped = token.replace(",", "").replace(".", "")
    return bool(stripped) and stripped.isdigit() and stripped.isascii()


def read_corpus(path, lowercase: bool = True) -> Iterator[list[str]]:
    """Yield the normalized token list of each line in ``path``."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            yield [normalize(t, lowercase) for t in line.split()]


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    counts: np.ndarray
    min_count: int = 1
    rare_token: str = RARE_TOKEN
    number_token: str = NUMBER_TOKEN
    ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = {t: i for i, t in enumerate(self.tokens)}
        if len(ids) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        for reserved in (self.rare_token, self.number_token):
            if reserved not in ids:
                raise ValueError(f"reserved token {reserved!r} missing")
        if len(self.counts) != len(self.tokens):
            raise ValueError("counts and tokens differ in length")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.ids

    @property
    def rare_id(self) -> int:
        return self.ids[self.rare_token]

    @property
    def number_id(self) -> int:
        return self.ids[self.number_token]

    def token_id(self, token: str) -> int:
        """Map a normalized corpus token to its id, folding rare and numeric tokens."""
        if is_number(token):
            return self.ids[self.number_token]
        return self.ids.get(token, self.ids[self.rare_token])

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.fromiter((self.token_id(t) for t in tokens), dtype=np.int64, count=len(tokens))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for tok, cnt in zip(self.tokens, self.counts):
                fh.write(f"{tok}\t{int(cnt)}\n")

    @classmethod
    def load(cls, path, min_count: int = 1) -> "Vocabulary":
        tokens, counts = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    tok, cnt = line.split("\t")
                    counts.append(int(cnt))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: expected 'token<TAB>count'") from None
                tokens.append(tok)
        return cls(tuple(tokens), np.array(counts, dtype=np.int64), min_count=min_count)


def _check_sentence(sentence) -> None:
    if isinstance(sentence, str):
        raise TypeError("sentences must be token lists, not strings (split them first)")


def build_vocabulary(token_stream: Iterable[Sequence[str]], min_count: int = 10) -> Vocabulary:
    """Count tokens and fold rare/numeric ones onto the reserved tokens.

    ``token_stream`` yields sentences as lists of normalized tokens. Ids are
    assigned by descending count, ties broken lexicographically.
    """
    if min_count < 1:
        raise ValueError("min_count must be positive")
    raw = Counter()
    n_tokens = 0
    for sentence in token_stream:
        _check_sentence(sentence)
        raw.update(sentence)
        n_tokens += len(sentence)
    if n_tokens == 0:
        raise ValueError("empty corpus")

    counts = Counter({RARE_TOKEN: 0, NUMBER_TOKEN: 0})
    for tok, cnt in raw.items():
        if is_number(tok):
            counts[NUMBER_TOKEN] += cnt
        elif cnt < min_count or tok in (RARE_TOKEN, NUMBER_TOKEN):
            counts[RARE_TOKEN] += cnt
        else:
            counts[tok] += cnt
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(
        tuple(t for t, _ in ordered),
        np.array([c for _, c in ordered], dtype=np.int64),
        min_count=min_count,
    )


@dataclass(frozen=True)
class CooccurrencePairs:
    """Aggregated (word, context) counts, sorted by (word_id, context_id)."""

    word_ids: np.ndarray
    context_ids: np.ndarray
    counts: np.ndarray
    vocab_size: int

    @property
    def total_pairs(self) -> int:
        return int(self.counts.sum())

    @property
    def word_marginals(self) -> np.ndarray:
        return np.bincount(self.word_ids, weights=self.counts, minlength=self.vocab_size).astype(np.int64)

    @property
    def context_marginals(self) -> np.ndarray:
        return np.bincount(self.context_ids, weights=self.counts, minlength=self.vocab_size).astype(np.int64)

    def __len__(self) -> int:
        return len(self.counts)

    def as_dict(self) -> dict[tuple[int, int], int]:
        return {(int(w), int(c)): int(n) for w, c, n in zip(self.word_ids, self.context_ids, self.counts)}

    def save(self, path) -> None:
        """Write ``C V NNZ`` then ``c v count`` lines."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{self.vocab_size} {self.vocab_size} {len(self)}\n")
            for w, c, n in zip(self.word_ids.tolist(), self.context_ids.tolist(), self.counts.tolist()):
                fh.write(f"{c} {w} {n}\n")

    @classmethod
    def load(cls, path) -> "CooccurrencePairs":
        n_ctx, n_words, nnz, data = _read_triples(path)
        if n_ctx != n_words:
            raise ValueError(f"{path}: context and word vocabularies differ ({n_ctx} vs {n_words})")
        counts = data[:, 2]
        if np.any(counts != np.round(counts)) or np.any(counts <= 0):
            raise ValueError(f"{path}: counts must be positive integers")
        return _aggregate(data[:, 1].astype(np.int64), data[:, 0].astype(np.int64),
                          counts.astype(np.int64), n_words)


def _aggregate(word_ids, context_ids, counts, vocab_size) -> CooccurrencePairs:
    keys = word_ids * vocab_size + context_ids
    uniq, inverse = np.unique(keys, return_inverse=True)
    summed = np.bincount(inverse, weights=counts).astype(np.int64) if len(keys) else np.zeros(0, np.int64)
    return CooccurrencePairs(uniq // vocab_size, uniq % vocab_size, summed, vocab_size)


def _window_keys(ids: np.ndarray, sent: np.ndarray, window: int, vocab_size: int) -> np.ndarray:
    keys = []
    for k in range(1, window + 1):
        same = sent[:-k] == sent[k:]
        left, right = ids[:-k][same], ids[k:][same]
        keys.append(left * vocab_size + right)
        keys.append(right * vocab_size + left)
    return np.concatenate(keys) if keys else np.zeros(0, np.int64)


def count_cooccurrences(token_stream: Iterable[Sequence[str]], vocab: Vocabulary,
                        window: int = 5) -> CooccurrencePairs:
    """Symmetric flat-window counts that never cross sentence boundaries.

    The stream is processed in shards; per-shard counts are merged by
    summation, so the result does not depend on shard boundaries.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    V = len(vocab)
    merged_keys = np.zeros(0, np.int64)
    merged_counts = np.zeros(0, np.int64)

    def flush(id_chunks, sent_chunks):
        nonlocal merged_keys, merged_counts
        if not id_chunks:
            return
        keys = _window_keys(np.concatenate(id_chunks), np.concatenate(sent_chunks), window, V)
        uk, uc = np.unique(keys, return_counts=True)
        allk = np.concatenate([merged_keys, uk])
        allc = np.concatenate([merged_counts, uc])
        merged_keys, inv = np.unique(allk, return_inverse=True)
        merged_counts = np.bincount(inv, weights=allc).astype(np.int64)

    id_chunks, sent_chunks, n_buffered = [], [], 0
    for sno, sentence in enumerate(token_stream):
        _check_sentence(sentence)
        if not sentence:
            continue
        ids = vocab.encode(sentence)
        if ids.size and (ids.min() < 0 or ids.max() >= V):
            raise RuntimeError("token id outside vocabulary; vocabulary/corpus mismatch")
        id_chunks.append(ids)
        sent_chunks.append(np.full(len(ids), sno, dtype=np.int64))
        n_buffered += len(ids)
        if n_buffered >= _SHARD_TOKENS:
            flush(id_chunks, sent_chunks)
            id_chunks, sent_chunks, n_buffered = [], [], 0
    flush(id_chunks, sent_chunks)
    return CooccurrencePairs(merged_keys // V, merged_keys % V, merged_counts, V)


@dataclass(frozen=True)
class PmiMatrix:
    """Sparse signed-PMI matrix in coordinate form, rows = contexts, columns = words.

    Entries are sorted by (row, col). ``row_ptr`` indexes the row-major
    layout; ``col_order``/``col_ptr`` give a column-major traversal.
    """

    num_contexts: int
    num_words: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if not (len(rows) == len(cols) == len(values)):
            raise ValueError("rows, cols and values differ in length")
        if len(rows) and (rows.min() < 0 or rows.max() >= self.num_contexts
                          or cols.min() < 0 or cols.max() >= self.num_words):
            raise ValueError("entry index out of range")
        if not np.all(np.isfinite(values)) or np.any(values == 0):
            raise ValueError("PMI values must be finite and nonzero")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        keys = rows * self.num_words + cols
        if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
            raise ValueError("duplicate (context, word) entries")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_contexts, self.num_words

    @property
    def row_ptr(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(np.bincount(self.rows, minlength=self.num_contexts))])

    @property
    def col_order(self) -> np.ndarray:
        return np.argsort(self.cols, kind="stable")

    @property
    def col_ptr(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(np.bincount(self.cols, minlength=self.num_words))])

    def to_dense(self) -> np.ndarray:
        X = np.zeros(self.shape)
        X[self.rows, self.cols] = self.values
        return X

    def to_scipy(self):
        from scipy import sparse
        return sparse.csr_matrix((self.values, (self.rows, self.cols)), shape=self.shape)

    @classmethod
    def from_dense(cls, X) -> "PmiMatrix":
        X = np.asarray(X, dtype=np.float64)
        r, c = np.nonzero(X)
        return cls(X.shape[0], X.shape[1], r, c, X[r, c])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{self.num_contexts} {self.num_words} {self.nnz}\n")
            for c, v, x in zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()):
                fh.write(f"{c} {v} {x!r}\n")

    @classmethod
    def load(cls, path) -> "PmiMatrix":
        n_ctx, n_words, _, data = _read_triples(path)
        return cls(n_ctx, n_words, data[:, 0].astype(np.int64), data[:, 1].astype(np.int64), data[:, 2])


def compute_pmi(pairs: CooccurrencePairs) -> PmiMatrix:
    """log(count * total / (word_marginal * context_marginal)) per observed pair.

    Exact zeros (pairs at their independence rate) are dropped; negative
    values are kept.
    """
    total = pairs.total_pairs
    if total <= 0:
        raise ValueError("no cooccurrence pairs; cannot compute PMI")
    wm = pairs.word_marginals[pairs.word_ids]
    cm = pairs.context_marginals[pairs.context_ids]
    # exact integer test for independence; int64 suffices below ~3e9 pairs
    dtype = np.int64 if total < 3_000_000_000 else object
    num = pairs.counts.astype(dtype) * total
    den = wm.astype(dtype) * cm.astype(dtype)
    keep = np.asarray(num != den, dtype=bool)
    values = np.log(pairs.counts * float(total) / (wm.astype(np.float64) * cm))
    keep &= values != 0.0
    V = pairs.vocab_size
    return PmiMatrix(V, V, pairs.context_ids[keep], pairs.word_ids[keep], values[keep])


def pmi_value(count: int, total: int, word_marginal: int, context_marginal: int) -> float:
    return math.log(count * total / (word_marginal * context_marginal))


def _read_triples(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: header must be 'C V NNZ'")
        n_ctx, n_words, nnz = (int(h) for h in header)
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2) if nnz else np.zeros((0, 3))
    if data.shape != (nnz, 3):
        raise ValueError(f"{path}: expected {nnz} entries of 3 fields, got shape {data.shape}")
    return n_ctx, n_words, nnz, data

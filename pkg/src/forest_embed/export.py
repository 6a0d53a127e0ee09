"""Embedding export in word2vec-style text/binary formats and figure CSVs."""
from __future__ import annotations

import csv

import numpy as np

from .forest import Forest


def save_text(path, words, vectors) -> None:
    """Header ``V M`` then ``word v1 ... vM`` with 6 significant digits."""
    vectors = np.asarray(vectors)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{vectors.shape[0]} {vectors.shape[1]}\n")
        for w, vec in zip(words, vectors):
            fh.write(w + " " + " ".join(f"{x:.6g}" for x in vec) + "\n")


def load_text(path):
    with open(path, encoding="utf-8") as fh:
        V, M = (int(x) for x in fh.readline().split())
        words, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != M + 1:
                raise ValueError(f"{path}: expected word and {M} values, got {len(parts)} fields")
            words.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(words) != V:
        raise ValueError(f"{path}: header says {V} words, found {len(words)}")
    return words, np.array(rows, dtype=np.float64).reshape(V, M)


def save_binary(path, words, vectors) -> None:
    """Header ``V M\\n`` then per word: ``word``, a space, M little-endian float32, newline."""
    vectors = np.asarray(vectors, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(f"{vectors.shape[0]} {vectors.shape[1]}\n".encode())
        for w, vec in zip(words, vectors):
            fh.write(w.encode("utf-8") + b" " + vec.tobytes() + b"\n")


def load_binary(path):
    with open(path, "rb") as fh:
        V, M = (int(x) for x in fh.readline().split())
        words = []
        vectors = np.empty((V, M), dtype="<f4")
        for i in range(V):
            chars = bytearray()
            while (ch := fh.read(1)) != b" ":
                if not ch:
                    raise ValueError(f"{path}: truncated at word {i}")
                chars.extend(ch)
            words.append(chars.decode("utf-8"))
            vectors[i] = np.frombuffer(fh.read(4 * M), dtype="<f4")
            if fh.read(1) != b"\n":
                raise ValueError(f"{path}: missing newline after vector {i}")
    return words, vectors.astype(np.float32)


def write_coefficients_csv(path, emb, words) -> list[str]:
    """One row per known word: the word and its M coefficients.

    Out-of-vocabulary words get a row with empty values and ``oov`` in the
    ``warnings`` column. Returns the OOV words.
    """
    oov = []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["word"] + [f"dim{m}" for m in range(emb.dim)] + ["warnings"])
        for w in words:
            i = emb.lookup(w)
            if i is None:
                oov.append(w)
                out.writerow([w] + [""] * emb.dim + ["oov"])
                continue
            out.writerow([w] + [repr(float(x)) for x in emb.vectors[i]] + [""])
    return oov


def write_dimensions_csv(path, forest: Forest) -> None:
    """Per dimension: its tree, its 1-based node number within the tree, parent and depth."""
    tree = forest.tree_index()
    local = np.empty(forest.size, dtype=np.int64)
    seen: dict[int, int] = {}
    for i in range(forest.size):
        seen[tree[i]] = seen.get(tree[i], 0) + 1
        local[i] = seen[tree[i]]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["dimension", "tree", "node", "parent", "depth"])
        for i in range(forest.size):
            out.writerow([i, int(tree[i]), int(local[i]), int(forest.parent[i]), int(forest.depth[i])])

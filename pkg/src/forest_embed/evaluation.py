"""Word similarity, analogy, sentence completion and sentiment benchmarks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Vocabulary, is_number, normalize

logger = logging.getLogger(__name__)

BLANK = "[blank]"
DEFAULT_L2_GRID = tuple(10.0 ** k for k in range(-3, 4))


class EvaluationError(ValueError):
    pass


@dataclass
class EmbeddingSet:
    """Word vectors as rows of a ``V x M`` matrix (row ``v`` is code column ``a_v``)."""

    vocab: Vocabulary
    vectors: np.ndarray
    lowercase: bool = True

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.shape[0] != len(self.vocab):
            raise ValueError(f"{self.vectors.shape[0]} vectors for {len(self.vocab)} tokens")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding contains non-finite values")

    @classmethod
    def from_codes(cls, vocab: Vocabulary, A, lowercase: bool = True) -> "EmbeddingSet":
        return cls(vocab, np.asarray(A).T, lowercase)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def lookup(self, word: str) -> int | None:
        """Id of a benchmark word, or None when out of vocabulary.

        Words are normalized like corpus tokens; numbers resolve to the
        number token, but words folded into the rare token count as OOV.
        """
        w = normalize(word, self.lowercase)
        if is_number(w):
            return self.vocab.number_id
        return self.vocab.ids.get(w)

    def __getitem__(self, word: str) -> np.ndarray:
        i = self.lookup(word)
        if i is None:
            raise KeyError(word)
        return self.vectors[i]

    def unit_vectors(self) -> np.ndarray:
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        return np.divide(self.vectors, norms, out=np.zeros_like(self.vectors), where=norms > 0)


def cosine(u, v) -> float:
    """Cosine similarity; 0 when either vector is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def average_ranks(xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    order = np.argsort(xs, kind="mergesort")
    ranks = np.empty(len(xs))
    sorted_x = xs[order]
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Pearson correlation of tie-averaged ranks."""
    if len(xs) != len(ys):
        raise EvaluationError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise EvaluationError("need at least two observations")
    rx, ry = average_ranks(xs), average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if denom == 0:
        raise EvaluationError("degenerate ranking")
    return float(np.dot(rx, ry) / denom)


# --- datasets -------------------------------------------------------------

@dataclass
class SimilarityDataset:
    pairs: list[tuple[str, str, float]]
    name: str = "similarity"

    @classmethod
    def load(cls, path, name: str | None = None) -> "SimilarityDataset":
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split("\t")
                if len(parts) < 3 or line.startswith("#"):
                    continue
                try:
                    score = float(parts[2])
                except ValueError:
                    continue  # header line
                pairs.append((parts[0], parts[1], score))
        if len(pairs) < 2:
            raise EvaluationError(f"{path}: need at least two pairs")
        return cls(pairs, name or str(path))


@dataclass
class AnalogyDataset:
    """Questions ``a : b :: c : d`` with the section each came from."""

    questions: list[tuple[str, str, str, str]]
    sections: list[str] = field(default_factory=list)

    def is_syntactic(self, i: int) -> bool:
        return bool(self.sections) and self.sections[i].startswith("gram")

    def subset(self, syntactic: bool) -> "AnalogyDataset":
        keep = [i for i in range(len(self.questions)) if self.is_syntactic(i) == syntactic]
        return AnalogyDataset([self.questions[i] for i in keep], [self.sections[i] for i in keep])

    @classmethod
    def load(cls, path) -> "AnalogyDataset":
        questions, sections = [], []
        section = ""
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.startswith(":"):
                    section = line[1:].strip()
                    continue
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 4:
                    raise EvaluationError(f"{path}:{lineno}: expected 4 words")
                questions.append(tuple(parts))
                sections.append(section)
        return cls(questions, sections)


@dataclass
class CompletionItem:
    tokens: list[str]
    candidates: list[str]
    answer: int


@dataclass
class CompletionDataset:
    items: list[CompletionItem]

    @classmethod
    def load(cls, path) -> "CompletionDataset":
        items = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    sentence, cands, answer = line.rstrip("\n").split("\t")
                    candidates = cands.split("|")
                    answer_idx = int(answer)
                except ValueError:
                    raise EvaluationError(f"{path}:{lineno}: expected 'sentence<TAB>c1|..|c5<TAB>index'") from None
                if len(candidates) != 5 or not 0 <= answer_idx < 5:
                    raise EvaluationError(f"{path}:{lineno}: need 5 candidates and answer index in 0..4")
                items.append(CompletionItem(sentence.split(), candidates, answer_idx))
        return cls(items)


@dataclass
class SentimentDataset:
    train: list[tuple[list[str], int]]
    dev: list[tuple[list[str], int]]
    test: list[tuple[list[str], int]]

    @staticmethod
    def load_split(path) -> list[tuple[list[str], int]]:
        out = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                label, _, sentence = line.rstrip("\n").partition("\t")
                if label not in ("0", "1"):
                    raise EvaluationError(f"{path}:{lineno}: label must be 0 or 1")
                out.append((sentence.split(), int(label)))
        return out

    @classmethod
    def load(cls, train_path, dev_path, test_path) -> "SentimentDataset":
        return cls(cls.load_split(train_path), cls.load_split(dev_path), cls.load_split(test_path))


# --- word similarity ------------------------------------------------------

def eval_word_similarity(emb: EmbeddingSet, dataset: SimilarityDataset):
    """Return ``(rho, evaluated_pairs, total_pairs)``; OOV pairs are skipped."""
    model, human = [], []
    for w1, w2, score in dataset.pairs:
        i, j = emb.lookup(w1), emb.lookup(w2)
        if i is None or j is None:
            continue
        model.append(cosine(emb.vectors[i], emb.vectors[j]))
        human.append(score)
    total = len(dataset.pairs)
    if len(model) < 2:
        raise EvaluationError(f"{dataset.name}: only {len(model)} of {total} pairs in vocabulary")
    return spearman(model, human), len(model), total


# --- analogies ------------------------------------------------------------

def solve_analogy(emb: EmbeddingSet, a: str, b: str, c: str, include_query_words: bool = False):
    """Answer ``a : b :: c : ?`` with the word nearest to ``b - a + c``.

    Returns None if a query word is out of vocabulary.
    """
    ids = [emb.lookup(w) for w in (a, b, c)]
    if any(i is None for i in ids):
        return None
    pred = _analogy_argmax(emb, emb.unit_vectors(), np.array([ids]), include_query_words)[0]
    return emb.vocab.tokens[pred]


def _analogy_argmax(emb, unit, queries, include_query_words, chunk=1024):
    preds = np.empty(len(queries), dtype=np.int64)
    for lo in range(0, len(queries), chunk):
        q = queries[lo:lo + chunk]
        target = emb.vectors[q[:, 1]] - emb.vectors[q[:, 0]] + emb.vectors[q[:, 2]]
        norms = np.linalg.norm(target, axis=1, keepdims=True)
        target = np.divide(target, norms, out=np.zeros_like(target), where=norms > 0)
        scores = target @ unit.T
        if not include_query_words:
            rows = np.arange(len(q))[:, None]
            scores[rows, q] = -np.inf
        preds[lo:lo + chunk] = np.argmax(scores, axis=1)  # first max = lowest id
    return preds


def eval_analogies(emb: EmbeddingSet, dataset: AnalogyDataset, include_query_words: bool = False):
    """Return ``(accuracy, evaluated, total)``; items with an OOV word are not scored."""
    queries, answers = [], []
    for q in dataset.questions:
        ids = [emb.lookup(w) for w in q]
        if any(i is None for i in ids):
            continue
        queries.append(ids[:3])
        answers.append(ids[3])
    total = len(dataset.questions)
    if not queries:
        raise EvaluationError("no analogy question is fully in vocabulary")
    preds = _analogy_argmax(emb, emb.unit_vectors(), np.array(queries), include_query_words)
    correct = int(np.sum(preds == np.array(answers)))
    return correct / len(queries), len(queries), total


# --- sentence completion --------------------------------------------------

def completion_scores(emb: EmbeddingSet, item: CompletionItem) -> np.ndarray:
    context = [emb.lookup(t) for t in item.tokens if normalize(t) != BLANK]
    context = [i for i in context if i is not None]
    scores = np.full(len(item.candidates), -np.inf)
    for k, cand in enumerate(item.candidates):
        ci = emb.lookup(cand)
        if ci is None:
            continue
        sims = [cosine(emb.vectors[ci], emb.vectors[w]) for w in context]
        scores[k] = np.mean(sims) if sims else 0.0
    return scores


def eval_sentence_completion(emb: EmbeddingSet, dataset: CompletionDataset) -> float:
    """Accuracy of picking the candidate most similar on average to the sentence."""
    if not dataset.items:
        raise EvaluationError("empty completion dataset")
    correct = 0
    for item in dataset.items:
        scores = completion_scores(emb, item)
        if np.all(np.isneginf(scores)):
            continue
        correct += int(np.argmax(scores) == item.answer)
    return correct / len(dataset.items)


# --- sentiment ------------------------------------------------------------

def sentence_features(emb: EmbeddingSet, tokens: Sequence[str]) -> np.ndarray:
    ids = [i for i in (emb.lookup(t) for t in tokens) if i is not None]
    if not ids:
        return np.zeros(emb.dim)
    return emb.vectors[ids].mean(axis=0)


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def logreg_loss_grad(w, b, X, y, l2: float):
    """Mean log-loss plus ``l2 * ||w||^2 / 2`` and its gradient."""
    z = X @ w + b
    # log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0
    s = np.where(y == 1, -z, z)
    loss = np.mean(np.logaddexp(0.0, s)) + 0.5 * l2 * np.dot(w, w)
    err = _sigmoid(z) - y
    gw = X.T @ err / len(y) + l2 * w
    gb = float(np.mean(err))
    return loss, gw, gb


def train_logreg(features, labels, l2_strength: float, tol: float = 1e-6, max_iter: int = 10_000):
    """Full-batch gradient descent with Armijo backtracking, from zero weights."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if set(np.unique(y)) != {0.0, 1.0}:
        raise EvaluationError("logistic regression needs examples of both classes")
    w = np.zeros(X.shape[1])
    b = 0.0
    step = 1.0
    loss, gw, gb = logreg_loss_grad(w, b, X, y, l2_strength)
    for _ in range(max_iter):
        if max(np.max(np.abs(gw), initial=0.0), abs(gb)) < tol:
            break
        gsq = np.dot(gw, gw) + gb * gb
        step = min(step * 2.0, 1e6)
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            new_loss, new_gw, new_gb = logreg_loss_grad(w_new, b_new, X, y, l2_strength)
            if new_loss <= loss - 0.5 * step * gsq or step < 1e-12:
                break
            step *= 0.5
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
    return w, b


def logreg_predict(w, b, features) -> np.ndarray:
    return (np.asarray(features) @ w + b > 0).astype(np.int64)


def eval_sentiment(emb: EmbeddingSet, dataset: SentimentDataset, l2_grid=DEFAULT_L2_GRID):
    """Tune l2 on dev (ties go to the larger l2); return ``(test_acc, l2, dev_acc)``."""
    if not (dataset.train and dataset.dev and dataset.test):
        raise EvaluationError("train, dev and test splits must be nonempty")

    def featurize(split):
        return (np.array([sentence_features(emb, toks) for toks, _ in split]),
                np.array([lab for _, lab in split]))

    Xtr, ytr = featurize(dataset.train)
    Xdev, ydev = featurize(dataset.dev)
    Xte, yte = featurize(dataset.test)
    best = None
    for l2 in sorted(l2_grid):
        w, b = train_logreg(Xtr, ytr, l2)
        dev_acc = float(np.mean(logreg_predict(w, b, Xdev) == ydev))
        logger.debug("l2=%g dev accuracy %.4f", l2, dev_acc)
        if best is None or dev_acc >= best[0]:
            best = (dev_acc, l2, w, b)
    dev_acc, l2, w, b = best
    test_acc = float(np.mean(logreg_predict(w, b, Xte) == yte))
    return test_acc, l2, dev_acc

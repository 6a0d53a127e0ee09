"""Small generated problems: planted factorizations and a toy grammar corpus."""
from __future__ import annotations

import numpy as np

from .corpus import PmiMatrix
from .forest import Forest, build_default_forest, descendants

# word classes of the toy corpus; words in one class share their contexts
TOY_CLASSES = {
    "animal": ["cat", "dog", "horse", "cow", "sheep", "goat", "mouse", "rabbit"],
    "vehicle": ["car", "truck", "bus", "bike", "train", "boat", "plane", "van"],
    "food": ["bread", "cheese", "apple", "rice", "soup", "cake", "pasta", "salad"],
    "person": ["teacher", "doctor", "farmer", "driver", "baker", "nurse", "pilot", "cook"],
    "color": ["red", "blue", "green", "yellow", "black", "white", "brown", "grey"],
    "place": ["city", "village", "farm", "market", "station", "school", "river", "road"],
}
_ANIMAL_VERBS = ["eats", "chases", "sees", "follows", "smells"]
_VEHICLE_VERBS = ["drives", "carries", "passes", "stops", "leaves"]
_PERSON_VERBS = ["cooks", "buys", "sells", "likes", "makes"]


def planted_problem(seed: int, n_contexts: int = 50, n_words: int = 50, forest: Forest | None = None,
                    observed: float = 0.4, drop_prob: float = 0.25):
    """Random ``D* A*`` with rooted-sparse codes, observed on a random mask.

    Each non-root node of each code column is switched off (with its whole
    subtree) with probability ``drop_prob``. Returns ``(pmi, forest, X, mask)``
    where ``pmi`` holds the observed nonzero entries of ``X = D* A*``.
    """
    forest = forest or build_default_forest(1)
    rng = np.random.default_rng(seed)
    M = forest.size
    D = rng.normal(size=(n_contexts, M)) * (1.5 / np.sqrt(M))
    A = rng.normal(size=(M, n_words))
    subtrees = [np.array([n] + descendants(forest, n)) for n in range(M)]
    for v in range(n_words):
        for n in range(M):
            if forest.parent[n] >= 0 and rng.random() < drop_prob:
                A[subtrees[n], v] = 0.0
    X = D @ A
    mask = (rng.random(X.shape) < observed) & (X != 0)
    return PmiMatrix.from_dense(np.where(mask, X, 0.0)), forest, X, mask


def toy_corpus(n_sentences: int = 10_000, seed: int = 0) -> list[str]:
    """Sentences from a small grammar in which word classes share contexts."""
    rng = np.random.default_rng(seed)
    C = TOY_CLASSES

    def pick(words):
        return words[rng.integers(len(words))]

    templates = [
        lambda: f"the {pick(C['color'])} {pick(C['animal'])} {pick(_ANIMAL_VERBS)} the {pick(C['food'])}",
        lambda: f"a {pick(C['animal'])} lives on the {pick(C['place'])} near the {pick(C['place'])}",
        lambda: f"the {pick(C['person'])} {pick(_VEHICLE_VERBS)} the {pick(C['color'])} {pick(C['vehicle'])}",
        lambda: f"a {pick(C['vehicle'])} {pick(_VEHICLE_VERBS)} to the {pick(C['place'])}",
        lambda: f"the {pick(C['person'])} {pick(_PERSON_VERBS)} some {pick(C['food'])} at the {pick(C['place'])}",
        lambda: f"my {pick(C['person'])} saw {int(rng.integers(1, 3000))} {pick(C['animal'])} today",
        lambda: f"we ate {pick(C['food'])} and {pick(C['food'])} with the {pick(C['person'])}",
        lambda: f"the {pick(C['vehicle'])} is {pick(C['color'])} and the {pick(C['animal'])} is {pick(C['color'])}",
    ]
    return [templates[rng.integers(len(templates))]() for _ in range(n_sentences)]


def toy_similarity_pairs(seed: int = 0, n_pairs: int = 60) -> list[tuple[str, str, float]]:
    """Word pairs scored 8-10 within a class and 0-2 across classes."""
    rng = np.random.default_rng(seed)
    names = sorted(TOY_CLASSES)
    pairs = []
    for k in range(n_pairs):
        if k % 2 == 0:
            cls = TOY_CLASSES[names[rng.integers(len(names))]]
            i, j = rng.choice(len(cls), size=2, replace=False)
            pairs.append((cls[i], cls[j], float(8 + 2 * rng.random())))
        else:
            a, b = rng.choice(len(names), size=2, replace=False)
            wa = TOY_CLASSES[names[a]][rng.integers(8)]
            wb = TOY_CLASSES[names[b]][rng.integers(8)]
            pairs.append((wa, wb, float(2 * rng.random())))
    return pairs

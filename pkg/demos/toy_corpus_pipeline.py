"""
From raw text to evaluated word vectors
=======================================

Generate a toy corpus where words come in six classes, then run the whole
pipeline in memory: vocabulary, cooccurrence counts, signed PMI, training
and a word-similarity check.
"""

import numpy as np

from forest_embed import (
    TrainConfig, build_default_forest, build_vocabulary, compute_pmi, count_cooccurrences, train,
)
from forest_embed.evaluation import EmbeddingSet, SimilarityDataset, eval_word_similarity
from forest_embed.synthetic import TOY_CLASSES, toy_corpus, toy_similarity_pairs

sentences = [line.split() for line in toy_corpus(n_sentences=10_000, seed=0)]
print(" ".join(sentences[0]), "|", " ".join(sentences[1]))

vocab = build_vocabulary(sentences, min_count=10)
pairs = count_cooccurrences(sentences, vocab, window=5)
pmi = compute_pmi(pairs)
print(f"{len(vocab)} types, {pmi.nnz} nonzero PMI entries ({(pmi.values < 0).mean():.0%} negative)")

forest = build_default_forest(4)
D, A, report = train(pmi, forest, TrainConfig(lam=0.1, iterations=200_000, seed=0))
print(f"objective {report.objective_trace[0][1]:.0f} -> {report.objective_trace[-1][1]:.0f}, "
      f"nonzero fraction {report.nonzero_fraction:.2f}")

emb = EmbeddingSet.from_codes(vocab, A)
ds = SimilarityDataset(toy_similarity_pairs(seed=0))
rho, n, total = eval_word_similarity(emb, ds)
print(f"Spearman {rho:.3f} on {n}/{total} pairs")

# nearest neighbours of one word per class; classmates should come first
unit = emb.unit_vectors()
for words in TOY_CLASSES.values():
    word = words[0]
    sims = unit @ unit[vocab.ids[word]]
    sims[vocab.ids[word]] = -np.inf
    print(word, "->", [vocab.tokens[i] for i in np.argsort(-sims)[:3]])

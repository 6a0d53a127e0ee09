"""Command-line pipeline: corpus -> vocabulary -> cooccurrences -> PMI -> codes -> evaluation.

Stages exchange files inside ``--workdir`` and record their inputs and
outputs (with SHA-256 hashes) in ``manifest.json``; a stage refuses to
consume an artifact whose hash no longer matches the manifest.

Exit codes: 0 success, 2 validation failure, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import evaluation as ev
from .corpus import CooccurrencePairs, PmiMatrix, Vocabulary, build_vocabulary, compute_pmi, \
    count_cooccurrences, read_corpus
from .export import save_binary, save_text, write_coefficients_csv, write_dimensions_csv
from .forest import Forest, build_default_forest, flat_forest
from .trainer import DivergenceError, TrainConfig, load_checkpoint, save_checkpoint, train

logger = logging.getLogger("forest_embed")

ARTIFACTS = {
    "vocab": "vocab.tsv",
    "cooccur": "cooccur.txt",
    "pmi": "pmi.txt",
    "forest": "forest.txt",
    "checkpoint": "checkpoint.bin",
    "model": "model.bin",
    "train_report": "train_report.json",
}
MANIFEST = "manifest.json"


class ValidationError(Exception):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Manifest:
    def __init__(self, workdir: Path):
        self.workdir = workdir
        self.path = workdir / MANIFEST
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                self.data = json.load(fh)
        else:
            self.data = {"stages": {}}

    def artifact(self, key: str) -> Path:
        return self.workdir / ARTIFACTS[key]

    def require(self, key: str) -> Path:
        """Path of an artifact produced by an earlier stage, checked against its recorded hash."""
        path = self.artifact(key)
        for stage in self.data["stages"].values():
            recorded = stage.get("outputs", {}).get(ARTIFACTS[key])
            if recorded is None:
                continue
            if not path.exists():
                raise ValidationError(f"missing input artifact: {path}")
            if sha256(path) != recorded:
                raise ValidationError(f"stale input artifact (hash mismatch with manifest): {path}")
            return path
        raise ValidationError(f"missing input artifact: {path} (run the producing stage first)")

    def get(self, stage: str) -> dict:
        return self.data["stages"].get(stage, {})

    def record(self, stage: str, inputs: dict, outputs: list[str], config: dict) -> None:
        self.data["stages"][stage] = {
            "inputs": {str(k): sha256(v) for k, v in inputs.items()},
            "outputs": {name: sha256(self.workdir / name) for name in outputs},
            "config": config,
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        }
        self.data["paths"] = {k: v for k, v in ARTIFACTS.items()}
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, self.path)


# --- stages ----------------------------------------------------------------

def cmd_build_vocab(args, man: Manifest) -> dict:
    corpus = Path(args.corpus)
    if not corpus.exists():
        raise ValidationError(f"corpus not found: {corpus}")
    vocab = build_vocabulary(read_corpus(corpus, not args.no_lowercase), args.min_count)
    vocab.save(man.artifact("vocab"))
    cfg = {"corpus": str(corpus), "min_count": args.min_count, "lowercase": not args.no_lowercase}
    man.record("build-vocab", {corpus: corpus}, [ARTIFACTS["vocab"]], cfg)
    return {"vocab_size": len(vocab)}


def cmd_cooccur(args, man: Manifest) -> dict:
    vocab_path = man.require("vocab")
    vcfg = man.get("build-vocab")["config"]
    corpus = Path(args.corpus or vcfg["corpus"])
    if sha256(corpus) != man.get("build-vocab")["inputs"].get(str(corpus)):
        raise ValidationError(f"corpus differs from the one the vocabulary was built on: {corpus}")
    vocab = Vocabulary.load(vocab_path, vcfg["min_count"])
    pairs = count_cooccurrences(read_corpus(corpus, vcfg["lowercase"]), vocab, args.window)
    pairs.save(man.artifact("cooccur"))
    man.record("cooccur", {corpus: corpus, vocab_path: vocab_path}, [ARTIFACTS["cooccur"]],
               {"window": args.window})
    return {"nnz": len(pairs), "total_pairs": pairs.total_pairs}


def cmd_pmi(args, man: Manifest) -> dict:
    cooc = man.require("cooccur")
    pmi = compute_pmi(CooccurrencePairs.load(cooc))
    pmi.save(man.artifact("pmi"))
    man.record("pmi", {cooc: cooc}, [ARTIFACTS["pmi"]], {})
    return {"nnz": pmi.nnz, "negative": int((pmi.values < 0).sum())}


def _forest_from_args(args) -> Forest:
    if args.forest:
        return Forest.load(args.forest)
    if args.flat:
        return flat_forest(13 * args.trees)
    return build_default_forest(args.trees)


def cmd_train(args, man: Manifest) -> dict:
    pmi_path = man.require("pmi")
    pmi = PmiMatrix.load(pmi_path)
    forest = _forest_from_args(args)
    forest.save(man.artifact("forest"))
    config = TrainConfig(
        lam=args.lam, tau=args.tau, eta0=args.eta0, iterations=args.iters, batch_size=args.batch,
        seed=args.seed, sampling_mode=args.sampling, prox_threshold_mode=args.prox_threshold,
        threads=args.threads, checkpoint_path=str(man.artifact("checkpoint")),
    )
    D, A, report = train(pmi, forest, config, penalty="l1" if args.l1 else "forest")
    save_checkpoint(man.artifact("model"), D, A, report.iterations)
    report.save(man.artifact("train_report"))
    cfg = dict(report.config, forest_size=forest.size)
    cfg.pop("checkpoint_path", None)
    cfg.pop("threads", None)
    man.record("train", {pmi_path: pmi_path},
               [ARTIFACTS["forest"], ARTIFACTS["model"]], cfg)
    return {"M": forest.size, "nonzero_fraction": report.nonzero_fraction,
            "objective_start": report.objective_trace[0][1],
            "objective_end": report.objective_trace[-1][1], "wall_seconds": report.wall_seconds}


def load_embeddings(man: Manifest) -> ev.EmbeddingSet:
    vocab = Vocabulary.load(man.require("vocab"))
    _, A, _ = load_checkpoint(man.require("model"))
    lowercase = man.get("build-vocab").get("config", {}).get("lowercase", True)
    return ev.EmbeddingSet.from_codes(vocab, A, lowercase)


def _write_eval(man: Manifest, name: str, result: dict) -> dict:
    path = man.workdir / f"eval_{name}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    return result


def cmd_eval_similarity(args, man: Manifest) -> dict:
    emb = load_embeddings(man)
    results = {}
    for path in args.dataset:
        ds = ev.SimilarityDataset.load(path, Path(path).stem)
        rho, n, total = ev.eval_word_similarity(emb, ds)
        results[ds.name] = {"spearman": rho, "evaluated": n, "total": total}
    return _write_eval(man, "similarity", results)


def cmd_eval_analogy(args, man: Manifest) -> dict:
    emb = load_embeddings(man)
    ds = ev.AnalogyDataset.load(args.dataset)
    results = {}
    parts = {"all": ds}
    if any(ds.sections):
        parts.update(syntactic=ds.subset(True), semantic=ds.subset(False))
    for name, part in parts.items():
        if not part.questions:
            continue
        try:
            acc, n, total = ev.eval_analogies(emb, part, args.include_query_words)
        except ev.EvaluationError as exc:
            results[name] = {"error": str(exc), "evaluated": 0, "total": len(part.questions)}
            continue
        results[name] = {"accuracy": acc, "evaluated": n, "total": total}
    if "accuracy" not in results.get("all", {}):
        raise ValidationError(results["all"]["error"])
    return _write_eval(man, "analogy", results)


def cmd_eval_completion(args, man: Manifest) -> dict:
    emb = load_embeddings(man)
    ds = ev.CompletionDataset.load(args.dataset)
    return _write_eval(man, "completion", {"accuracy": ev.eval_sentence_completion(emb, ds),
                                           "total": len(ds.items)})


def cmd_eval_sentiment(args, man: Manifest) -> dict:
    emb = load_embeddings(man)
    ds = ev.SentimentDataset.load(args.train, args.dev, args.test)
    test_acc, l2, dev_acc = ev.eval_sentiment(emb, ds)
    return _write_eval(man, "sentiment", {"test_accuracy": test_acc, "chosen_l2": l2, "dev_accuracy": dev_acc})


def cmd_export(args, man: Manifest) -> dict:
    emb = load_embeddings(man)
    out = Path(args.out or man.workdir / f"embeddings.{'txt' if args.format == 'text' else 'bin'}")
    (save_text if args.format == "text" else save_binary)(out, emb.vocab.tokens, emb.vectors)
    return {"path": str(out), "words": len(emb.vocab), "dim": emb.dim}


def cmd_inspect(args, man: Manifest) -> dict:
    emb = load_embeddings(man)
    forest = Forest.load(man.require("forest"))
    words = [w for w in args.words.split(",") if w]
    out = Path(args.out)
    dims = out.with_name(out.stem + ".dims.csv")
    oov = write_coefficients_csv(out, emb, words)
    write_dimensions_csv(dims, forest)
    for w in oov:
        logger.warning("out of vocabulary: %s", w)
    return {"coefficients": str(out), "dimensions": str(dims), "oov": oov}


def cmd_run(args, man: Manifest) -> dict:
    summary = {"build-vocab": cmd_build_vocab(args, man)}
    summary["cooccur"] = cmd_cooccur(args, man)
    summary["pmi"] = cmd_pmi(args, man)
    summary["train"] = cmd_train(args, man)
    if args.similarity:
        args.dataset = args.similarity
        summary["eval-similarity"] = cmd_eval_similarity(args, man)
    return summary


# --- argument parsing ------------------------------------------------------

def _add_common(p):
    p.add_argument("--workdir", default=".", help="directory holding artifacts and manifest.json")


def _add_corpus(p, required=True):
    p.add_argument("--corpus", required=required, help="UTF-8 text, one tokenized sentence per line")


def _add_vocab_flags(p):
    p.add_argument("--min-count", type=int, default=10)
    p.add_argument("--no-lowercase", action="store_true")


def _add_train_flags(p):
    p.add_argument("--trees", type=int, default=4, help="number of default 13-node trees (M = 13 * trees)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--forest", help="parent-array forest file (-1 marks roots); overrides --trees")
    g.add_argument("--flat", action="store_true", help="all-singleton forest with M = 13 * trees (l1 penalty)")
    p.add_argument("--l1", action="store_true", help="use the dedicated l1 prox path")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=1e-5)
    p.add_argument("--eta0", type=float, default=0.05)
    p.add_argument("--iters", type=int, default=1_000_000, help="number of batches")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--sampling", choices=["weighted", "uniform-scaled"], default="weighted")
    p.add_argument("--prox-threshold", choices=["scaled", "fixed"], default="scaled")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forest-embed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="count tokens and write vocab.tsv")
    _add_common(p), _add_corpus(p), _add_vocab_flags(p)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("cooccur", help="count windowed cooccurrences")
    _add_common(p), _add_corpus(p, required=False)
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(func=cmd_cooccur)

    p = sub.add_parser("pmi", help="signed PMI from cooccurrence counts")
    _add_common(p)
    p.set_defaults(func=cmd_pmi)

    p = sub.add_parser("train", help="learn dictionary and codes")
    _add_common(p), _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-similarity", help="Spearman correlation on word-pair datasets")
    _add_common(p)
    p.add_argument("--dataset", action="append", required=True, help="TSV word1 word2 score (repeatable)")
    p.set_defaults(func=cmd_eval_similarity)

    p = sub.add_parser("eval-analogy", help="vector-offset analogy accuracy")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--include-query-words", action="store_true")
    p.set_defaults(func=cmd_eval_analogy)

    p = sub.add_parser("eval-completion", help="sentence completion accuracy")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_eval_completion)

    p = sub.add_parser("eval-sentiment", help="logistic regression on averaged word vectors")
    _add_common(p)
    for split in ("train", "dev", "test"):
        p.add_argument(f"--{split}", required=True)
    p.set_defaults(func=cmd_eval_sentiment)

    p = sub.add_parser("export", help="write embeddings as text or binary")
    _add_common(p)
    p.add_argument("--format", choices=["text", "binary"], default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("inspect", help="coefficient and dimension CSVs for heatmaps and tree plots")
    _add_common(p)
    p.add_argument("--words", required=True, help="comma-separated words")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("run", help="build-vocab, cooccur, pmi and train in one go")
    _add_common(p), _add_corpus(p), _add_vocab_flags(p), _add_train_flags(p)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--similarity", action="append", help="optional similarity dataset(s) to score")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FOREST_EMBED_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    try:
        result = args.func(args, Manifest(workdir))
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())

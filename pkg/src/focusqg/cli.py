"""Command-line entry point: ``focusqg <subcommand> ...``.

Failures print one tab-separated line ``focusqg-error<TAB>category<TAB>message``
to stderr.  Exit codes: 2 usage, 3 integrity (hash mismatch), 4 config,
5 data, 6 training diverged, 1 anything else.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .autodiff import ConfigError, DimensionError, DomainError
from .corpus.annotate import AnnotationError, emit_annotations
from .corpus.pipeline import index_all, preprocess, read_annotated, write_annotated
from .corpus.squad import AlignmentError, DatasetError
from .corpus.vocab import (IntegrityError, build_vocab, load_vocab, read_indexed, save_vocab,
                           vocab_hash, write_indexed)
from .model import ModelConfig
from .training import TrainConfig, TrainingDiverged

EXIT_USAGE, EXIT_INTEGRITY, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 2, 3, 4, 5, 6

log = logging.getLogger("focusqg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# run configuration

def load_run_config(path, seed=None):
    """Read ``{"model": {...}, "train": {...}}``; unknown keys anywhere are an error."""
    raw = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = set(raw) - {"model", "train"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    model = ModelConfig.from_dict(raw.get("model", {}))
    train = TrainConfig.from_dict(raw.get("train", {}))
    if seed is not None:
        train = replace(train, seed=seed)
    return model, train


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Outputs:
    """Tracks files written under the output directory and records their hashes."""

    def __init__(self, out_dir):
        self.dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.dir, name)

    def write_json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, ensure_ascii=False, indent=1, sort_keys=True)

    def write_jsonl(self, name, rows):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")

    def finish(self, command, resolved):
        self.write_json("config.resolved.json", {"command": command, **resolved})
        manifest = {name: file_sha256(os.path.join(self.dir, name))
                    for name in sorted(set(self.files))}
        with open(os.path.join(self.dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        return manifest


def _load_data(data_dir, splits):
    src, tgt = load_vocab(os.path.join(data_dir, "vocab.json"))
    vh = vocab_hash(src, tgt)
    out = {}
    for s in splits:
        path = os.path.join(data_dir, f"{s}.jsonl")
        if not os.path.exists(path):
            raise DatasetError(f"missing split file {path}")
        out[s] = read_indexed(path, vh)
        if not out[s]:
            raise DatasetError(f"split {s!r} is empty")
    return src, tgt, vh, out


# ---------------------------------------------------------------------------
# subcommands

def cmd_preprocess(args):
    out = Outputs(args.out)
    stats = {}
    examples, stats = preprocess(args.input, args.annotations, stats)
    write_annotated(out.path(f"{args.split}.annotated.jsonl"), examples)
    seen, sentences = set(), []
    for ex in examples:
        key = (ex.sentence.doc_id, ex.sentence.sent_index)
        if key not in seen:
            seen.add(key)
            sentences.append(ex.sentence)
    out.write_json(f"{args.split}.annotations.json", emit_annotations(sentences))
    out.write_json(f"{args.split}.stats.json", stats)
    out.finish("preprocess", {"input": args.input, "annotations": args.annotations,
                              "split": args.split, "input_sha256": file_sha256(args.input)})
    print(json.dumps(stats, sort_keys=True))


def cmd_build_vocab(args):
    out = Outputs(args.out)
    train = read_annotated(args.train)
    src, tgt = build_vocab(train, args.src_max, args.tgt_max)
    vh = save_vocab(out.path("vocab.json"), src, tgt)
    sizes = {}
    for name, path in (("train", args.train), ("dev", args.dev), ("test", args.test)):
        if path is None:
            continue
        examples = train if name == "train" else read_annotated(path)
        write_indexed(out.path(f"{name}.jsonl"), index_all(examples, src, tgt), vh)
        sizes[name] = len(examples)
    out.finish("build-vocab", {"src_max": args.src_max, "tgt_max": args.tgt_max,
                               "vocab_hash": vh, "sizes": sizes})
    print(json.dumps({"vocab_hash": vh, "source": len(src), "target": len(tgt), **sizes}))


def cmd_pretrain(args):
    from . import autodiff as ad
    from .plots import training_curve
    from .training import pretrain_sentence_encoder

    model_cfg, train_cfg = load_run_config(args.config, args.seed)
    src, tgt, vh, data = _load_data(args.data, ("train", "dev"))
    out = Outputs(args.out)
    rows = []
    res = pretrain_sentence_encoder(data["train"], data["dev"], model_cfg, train_cfg,
                                    len(src), len(tgt), tgt, rows.append)
    ad.save_tensors(out.path("sentence_encoder.npz"), res.sentence_state,
                    {"kind": "sentence-encoder", "model": model_cfg.to_dict(),
                     "config_hash": model_cfg.digest(), "vocab_hash": vh})
    out.write_jsonl("pretrain_log.jsonl", rows)
    training_curve([{**r, "dev_ppl": r.get("dev_ppl", r.get("dev_cos_loss"))} for r in rows],
                   out.path("pretrain_curve.png"), "sentence-encoder pre-training")
    out.finish("pretrain-sentence-encoder", {"model": model_cfg.to_dict(),
                                             "train": train_cfg.to_dict(), "vocab_hash": vh})


def cmd_train(args):
    from . import autodiff as ad
    from .model import QGModel
    from .plots import training_curve
    from .training import pretrain_sentence_encoder, save_checkpoint, train

    model_cfg, train_cfg = load_run_config(args.config, args.seed)
    src, tgt, vh, data = _load_data(args.data, ("train", "dev"))
    out = Outputs(args.out)
    rows = []
    log_fh = open(out.path("train_log.jsonl"), "w", encoding="utf-8")

    def on_epoch(entry):
        rows.append(entry)
        log_fh.write(json.dumps(entry, sort_keys=True) + "\n")
        log_fh.flush()

    vectors, missing = None, {}
    if args.word_vectors:
        from .encoder import read_word_vectors
        rng = np.random.default_rng(train_cfg.seed)
        vectors = {}
        for name, vocab in (("src_emb", src), ("tgt_emb", tgt)):
            vectors[name], missing[name] = read_word_vectors(
                args.word_vectors, vocab, model_cfg.word_dim, rng, model_cfg.dtype)
        log.info("word vectors missing for %s", missing)

    with log_fh:
        model = QGModel(model_cfg, len(src), len(tgt), seed=train_cfg.seed, word_vectors=vectors)
        if model_cfg.sentence_encoder == "pretrained":
            if args.sentence_encoder:
                arrays, meta = ad.load_tensors(args.sentence_encoder)
                if meta.get("vocab_hash") != vh:
                    raise IntegrityError("sentence encoder was trained with a different vocabulary")
                model.load_arrays(arrays, prefix="sent")
            else:
                pre = pretrain_sentence_encoder(data["train"], data["dev"], model_cfg, train_cfg,
                                                len(src), len(tgt), tgt, on_epoch)
                model.load_arrays(pre.sentence_state, prefix="sent")
        res = train(model, data["train"], data["dev"], train_cfg, tgt, on_epoch)
    model.load_arrays(res.best_state)
    save_checkpoint(out.path("model.npz"), model, vh, res.best_epoch, res.best_ppl, train_cfg,
                    res.rng_state)
    training_curve(rows, out.path("training_curve.png"))
    out.finish("train", {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(),
                         "vocab_hash": vh, "word_vectors": args.word_vectors,
                         "word_vectors_missing": missing})
    print(json.dumps({"best_epoch": res.best_epoch, "dev_ppl": res.best_ppl}))


def cmd_generate(args):
    from .inference import generate_corpus
    from .training import load_checkpoint

    src, tgt, vh, data = _load_data(args.data, (args.split,))
    model, meta = load_checkpoint(args.checkpoint, expected_vocab_hash=vh)
    if meta["tgt_size"] != len(tgt) or meta["src_size"] != len(src):
        raise IntegrityError("checkpoint vocabulary sizes disagree with the data directory")
    out = Outputs(args.out)
    records = generate_corpus(model, data[args.split], tgt, args.beam, args.max_len)
    out.write_jsonl("generations.jsonl", records)
    out.finish("generate", {"checkpoint": args.checkpoint,
                            "checkpoint_sha256": file_sha256(args.checkpoint),
                            "split": args.split, "beam": args.beam, "max_len": args.max_len,
                            "vocab_hash": vh})


def cmd_evaluate(args):
    from .evaluation.report import evaluate
    from .inference import read_generations
    from .plots import metric_histogram

    _, _, vh, data = _load_data(args.data, (args.split,))
    gens = read_generations(args.generations)
    setup = {"multi": "multi_ref", "single": "single_ref"}[args.setup]
    report = evaluate(gens, data[args.split], setup)
    out = Outputs(args.out)
    out.write_json(f"report.{args.setup}.json", report.to_json())
    metric_histogram(report, out.path(f"metrics.{args.setup}.png"))
    out.finish("evaluate", {"generations": args.generations,
                            "generations_sha256": file_sha256(args.generations),
                            "setup": setup, "split": args.split, "vocab_hash": vh})
    print(json.dumps(report.summary(), sort_keys=True))


def cmd_ablate(args):
    from .plots import ablation_bars, training_curve
    from .training import LADDER, run_ablation

    model_cfg, train_cfg = load_run_config(args.config, args.seed)
    split = args.split
    src, tgt, vh, data = _load_data(args.data, tuple(dict.fromkeys(("train", "dev", split))))
    ladder = args.rungs or list(LADDER)
    bad = [r for r in ladder if r not in LADDER]
    if bad:
        raise ConfigError(f"unknown rungs {bad}; choose from {list(LADDER)}")
    out = Outputs(args.out)
    rows = []
    table = run_ablation(data["train"], data["dev"], data[split], model_cfg, train_cfg,
                         len(src), len(tgt), tgt, ladder,
                         {"multi": "multi_ref", "single": "single_ref"}[args.setup],
                         args.beam, rows.append)
    out.write_json("ablation.json", table)
    out.write_jsonl("ablation_log.jsonl", rows)
    ablation_bars(table, out.path("ablation.png"))
    training_curve([r for r in rows if "step" not in r], out.path("ablation_curves.png"),
                   "ablation training")
    out.finish("ablate", {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(),
                          "rungs": ladder, "split": split, "vocab_hash": vh})
    for row in table:
        print(json.dumps(row, sort_keys=True))


# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="focusqg", description="Answer-aware neural question generation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("preprocess", help="tokenize, annotate and align a SQuAD-layout file")
    s.add_argument("--input", required=True, help="SQuAD-layout JSON file")
    s.add_argument("--annotations", help="NER/coreference sidecar JSON (optional)")
    s.add_argument("--split", default="train", help="name used for the output files")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("build-vocab", help="build vocabularies and index the splits")
    s.add_argument("--train", required=True, help="annotated JSONL of the training split")
    s.add_argument("--dev", help="annotated JSONL of the dev split")
    s.add_argument("--test", help="annotated JSONL of the test split")
    s.add_argument("--src-max", type=int, default=45000, help="source vocabulary size")
    s.add_argument("--tgt-max", type=int, default=28000, help="target vocabulary size")
    s.add_argument("--out", required=True, help="data directory to create")
    s.set_defaults(func=cmd_build_vocab)

    def model_args(s):
        s.add_argument("--config", help='JSON file {"model": {...}, "train": {...}}')
        s.add_argument("--data", required=True, help="data directory from build-vocab")
        s.add_argument("--seed", type=int, help="overrides train.seed")
        s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("pretrain-sentence-encoder", help="two-step sentence-encoder pre-training")
    model_args(s)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("train", help="train a question-generation model")
    model_args(s)
    s.add_argument("--sentence-encoder", help="pre-trained sentence encoder (.npz); when the "
                   "config asks for a pretrained encoder and this is absent, pre-train first")
    s.add_argument("--word-vectors", help="text file of 'token v1 ... vd' lines; loaded "
                   "embedding tables are frozen")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="beam-search questions for a split")
    s.add_argument("--checkpoint", required=True, help="model.npz from train")
    s.add_argument("--data", required=True, help="data directory from build-vocab")
    s.add_argument("--split", default="test", help="split to decode")
    s.add_argument("--beam", type=int, default=5, help="beam width")
    s.add_argument("--max-len", type=int, default=50, help="maximum question length")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("evaluate", help="score generations (BLEU-4, METEOR, ROUGE-L)")
    s.add_argument("--generations", required=True, help="generations.jsonl from generate")
    s.add_argument("--data", required=True, help="data directory holding the gold split")
    s.add_argument("--split", default="test", help="gold split")
    s.add_argument("--setup", choices=("multi", "single"), default="multi",
                   help="multi: all gold questions of the sentence; single: the matching one")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ablate", help="train and score the feature ablation ladder")
    model_args(s)
    s.add_argument("--split", default="test", help="split to generate and score")
    s.add_argument("--setup", choices=("multi", "single"), default="multi",
                   help="reference setup for scoring")
    s.add_argument("--beam", type=int, default=5, help="beam width")
    s.add_argument("--rungs", nargs="+", help="subset of rungs to run (default: all nine)")
    s.set_defaults(func=cmd_ablate)
    return p


_CATEGORIES = (
    (IntegrityError, "integrity", EXIT_INTEGRITY),
    (ConfigError, "config", EXIT_CONFIG),
    (TrainingDiverged, "diverged", EXIT_DIVERGED),
    ((DatasetError, AlignmentError, AnnotationError, FileNotFoundError,
      json.JSONDecodeError), "data", EXIT_DATA),
    ((DimensionError, DomainError), "numeric", 1),
)


def _fail(category, message, code):
    message = " ".join(str(message).split())
    print(f"focusqg-error\t{category}\t{message}", file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:   # noqa: BLE001 - mapped to exit categories below
        for types, category, code in _CATEGORIES:
            if isinstance(exc, types):
                return _fail(category, exc, code)
        log.debug("unhandled error", exc_info=True)
        return _fail("internal", f"{type(exc).__name__}: {exc}", 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: train, predict, evaluate, kshot, multi-seed,
bench-synth, gradcheck."""

import argparse
import json
import sys
import time
from dataclasses import asdict

import numpy as np

from . import classifier, data_io, gradcheck, synth, trainer
from .encoder import EncoderConfig
from .errors import FewfitError
from .tokenizer import TokenizerConfig


def _add_data_args(p, name, required=True):
    p.add_argument(f"--{name}", required=required)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--text-column", default="text")
    p.add_argument("--label-column", default="label")


def _add_train_args(p):
    p.add_argument("--sim-rep", choices=["token", "cls"], default="token")
    p.add_argument("--num-repeats", type=int, default=4)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--max-length", type=int, default=32)
    p.add_argument("--vocab-size", type=int, default=65536)
    p.add_argument("--use-attention", action="store_true")
    p.add_argument("--seed", type=int, default=0)


def _configs(args, seed=None):
    seed = args.seed if seed is None else seed
    train_cfg = trainer.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        num_repeats=args.num_repeats,
        lr=args.lr,
        weight_decay=args.weight_decay,
        temperature=args.temperature,
        metric=args.sim_rep,
        dropout_rate=args.dropout,
        seed=seed,
    )
    tok_cfg = TokenizerConfig(
        vocab_size=args.vocab_size, max_len=args.max_length
    )
    enc_cfg = EncoderConfig(
        d=args.dim,
        h=max(args.hidden, args.dim),
        dropout_rate=args.dropout,
        use_attention=args.use_attention,
        init_seed=seed,
    )
    return train_cfg, tok_cfg, enc_cfg


def _load(args, attr):
    return data_io.load_dataset(
        getattr(args, attr),
        format=args.format,
        text_column=args.text_column,
        label_column=args.label_column,
    )


def cmd_train(args):
    dataset = _load(args, "train_file")
    train_cfg, tok_cfg, enc_cfg = _configs(args)
    model = trainer.train(
        train_cfg, dataset, tokenizer_cfg=tok_cfg, encoder_cfg=enc_cfg,
        metrics_path=args.metrics_out,
    )
    data_io.save_model(model, args.model_out)
    print(json.dumps({
        "model": args.model_out,
        "classes": len(model.labels),
        "examples": len(dataset.examples),
        "final_mean_loss": model.epoch_log[-1]["mean_loss"],
    }))
    return 0


def cmd_predict(args):
    model = data_io.load_model(args.model_in)
    index = classifier.build_class_index(model)
    texts = []
    with open(args.input, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if args.input_format == "jsonl":
                texts.append(str(json.loads(line)[args.text_column]))
            else:
                texts.append(line)
    for text, pred in zip(
        texts, classifier.predict_batch(model, index, texts, k=args.top_k)
    ):
        print(json.dumps({
            "text": text,
            "label": pred.label,
            "score": pred.score,
            "topk": [[label, score] for label, score in pred.ranking],
        }))
    return 0


def cmd_evaluate(args):
    model = data_io.load_model(args.model_in)
    index = classifier.build_class_index(model)
    test_set = _load(args, "test_file")
    result = classifier.evaluate(model, index, test_set)
    print(json.dumps(result))
    return 0


def cmd_kshot(args):
    dataset = _load(args, "train_file")
    shot = data_io.sample_kshot(dataset, args.k, args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for text, label in shot.examples:
            fh.write(json.dumps({"text": text, "label": label}) + "\n")
    print(json.dumps({"out": args.out, "examples": len(shot.examples)}))
    return 0


def cmd_multi_seed(args):
    train_full = _load(args, "train_file")
    test_set = data_io.load_dataset(
        args.test_file, format=args.format,
        text_column=args.text_column, label_column=args.label_column,
    )
    seeds = [int(s) for s in args.seeds.split(",")]
    train_cfg, tok_cfg, enc_cfg = _configs(args)
    report = data_io.multi_seed_eval(
        train_full, test_set, args.k, seeds, train_cfg,
        tokenizer_cfg=tok_cfg, encoder_cfg=enc_cfg,
    )
    print(json.dumps(report))
    return 0


def cmd_bench_synth(args):
    spec = synth.SynthSpec(
        num_classes=args.num_classes,
        signature_tokens_per_class=args.signature_tokens,
        shared_noise_vocab=args.noise_vocab,
        tokens_per_text=args.tokens_per_text,
        signature_fraction=args.signature_fraction,
        overlap_prob=args.overlap_prob,
        k_train=args.k_train,
        k_test=args.k_test,
        seed=args.data_seed,
    )
    train_set, test_set = synth.generate_synthetic(spec)
    seeds = [int(s) for s in args.seeds.split(",")]
    _, tok_cfg, _ = _configs(args)

    per_seed = []
    train_times = []
    model = index = None
    for seed in seeds:
        train_cfg, tok_cfg, enc_cfg = _configs(args, seed=seed)
        start = time.perf_counter()
        model = trainer.train(
            train_cfg, train_set, tokenizer_cfg=tok_cfg, encoder_cfg=enc_cfg
        )
        train_times.append(time.perf_counter() - start)
        index = classifier.build_class_index(model)
        result = classifier.evaluate(model, index, test_set)
        per_seed.append({"seed": seed, "accuracy": result["accuracy"]})

    throughput = bench_throughput(model, index, test_set)
    accs = [r["accuracy"] for r in per_seed]
    report = {
        "train_seconds": float(np.median(train_times)),
        "train_seconds_per_seed": train_times,
        "throughput_tps": throughput,
        "accuracy_mean": float(np.mean(accs)),
        "accuracy_std": float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
        "per_seed": per_seed,
        "config": {"spec": asdict(spec), "train": asdict(train_cfg)},
    }
    print(json.dumps(report))
    return 0


def bench_throughput(model, index, test_set, min_calls=1000, repeats=3):
    """Median-of-3 inference throughput in texts/second."""
    texts = [t for t, _ in test_set.examples]
    while len(texts) < min_calls:
        texts = texts + texts
    texts = texts[:max(min_calls, len(texts))]
    rates = []
    for _ in range(repeats):
        start = time.perf_counter()
        classifier.predict_batch(model, index, texts)
        rates.append(len(texts) / (time.perf_counter() - start))
    return float(np.median(rates))


def cmd_gradcheck(args):
    err = gradcheck.pipeline_max_error(
        n_configs=args.configs, coords_per_param=args.coords, seed=args.seed
    )
    ok = bool(err < 1e-4)
    print(json.dumps({"max_relative_error": float(err), "pass": ok}))
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fewfit",
        description="Few-shot many-class text classifier with contrastive "
        "training and retrieval-style inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a labeled dataset")
    _add_data_args(p, "train-file")
    _add_train_args(p)
    p.add_argument("--model-out", required=True)
    p.add_argument("--metrics-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify texts with a trained model")
    p.add_argument("--model-in", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--input-format", choices=["lines", "jsonl"],
                   default="lines")
    p.add_argument("--text-column", default="text")
    p.add_argument("--top-k", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy on a labeled test file")
    p.add_argument("--model-in", required=True)
    _add_data_args(p, "test-file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("kshot", help="sample a k-shot training split")
    _add_data_args(p, "train-file")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kshot)

    p = sub.add_parser(
        "multi-seed", help="k-shot sample + train + evaluate over seeds"
    )
    _add_data_args(p, "train-file")
    p.add_argument("--test-file", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seeds", default="0,1,2,3,4")
    _add_train_args(p)
    p.set_defaults(func=cmd_multi_seed)

    p = sub.add_parser(
        "bench-synth", help="synthetic many-class benchmark with timing"
    )
    p.add_argument("--num-classes", type=int, default=50)
    p.add_argument("--signature-tokens", type=int, default=4)
    p.add_argument("--noise-vocab", type=int, default=200)
    p.add_argument("--tokens-per-text", type=int, default=8)
    p.add_argument("--signature-fraction", type=float, default=0.6)
    p.add_argument("--overlap-prob", type=float, default=0.0)
    p.add_argument("--k-train", type=int, default=5)
    p.add_argument("--k-test", type=int, default=20)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--seeds", default="0,1,2,3,4")
    _add_train_args(p)
    p.set_defaults(func=cmd_bench_synth)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--configs", type=int, default=100)
    p.add_argument("--coords", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FewfitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

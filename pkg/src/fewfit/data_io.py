"""Dataset loading, k-shot sampling, multi-seed evaluation, model files."""

import csv
import json
import logging
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import classifier, trainer
from .encoder import ATTN_PARAM_ORDER, PARAM_ORDER, EncoderConfig, EncoderParams
from .errors import DataError, FormatError, IOError_, SchemaError
from .tokenizer import TokenizerConfig

log = logging.getLogger(__name__)

MAGIC = b"FFIT"
FORMAT_VERSION = 1


@dataclass
class Dataset:
    examples: list  # [(text, label), ...]
    classes: list = field(default_factory=list)
    class_name_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.classes:
            self.classes = sorted({label for _, label in self.examples})


def load_dataset(path, format="jsonl", text_column="text",
                 label_column="label", class_name_overrides=None):
    """Load a labeled text dataset from JSONL or CSV."""
    rows = []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise IOError_(f"cannot open {path}: {exc}") from exc
    with fh:
        if format == "jsonl":
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"invalid JSON: {exc}", line=lineno)
                rows.append((lineno, obj))
        elif format == "csv":
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise SchemaError("empty CSV file", line=1)
            for col in (text_column, label_column):
                if col not in reader.fieldnames:
                    raise SchemaError(f"missing column {col!r}", line=1)
            for lineno, obj in enumerate(reader, start=2):
                rows.append((lineno, obj))
        else:
            raise SchemaError(f"unknown format {format!r}")

    examples = []
    for lineno, obj in rows:
        text = obj.get(text_column)
        label = obj.get(label_column)
        if text is None:
            raise SchemaError(f"missing field {text_column!r}", line=lineno)
        if label is None or str(label) == "":
            raise SchemaError(f"missing/empty {label_column!r}", line=lineno)
        examples.append((str(text), str(label)))
    return Dataset(
        examples=examples, class_name_overrides=class_name_overrides or {}
    )


def sample_kshot(dataset, k, seed, allow_fewer=False):
    """Draw k examples per class via a seeded per-class shuffle.

    Classes are processed in sorted label order so the split depends only on
    (dataset, k, seed).
    """
    rng = np.random.default_rng(seed)
    by_class = {}
    for i, (_, label) in enumerate(dataset.examples):
        by_class.setdefault(label, []).append(i)
    picked = []
    for label in sorted(by_class):
        indices = by_class[label]
        if len(indices) < k and not allow_fewer:
            raise DataError(
                f"class {label!r} has {len(indices)} examples, need {k}"
            )
        order = rng.permutation(len(indices))
        picked.extend(indices[j] for j in order[:k])
    return Dataset(
        examples=[dataset.examples[i] for i in picked],
        class_name_overrides=dict(dataset.class_name_overrides),
    )


def multi_seed_eval(train_full, test_set, k, seeds, train_cfg,
                    tokenizer_cfg=None, encoder_cfg=None):
    """sample_kshot -> train -> evaluate, once per seed; mean/std report."""
    if not seeds:
        raise DataError("need at least one seed")
    overlap = set(train_full.examples) & set(test_set.examples)
    if overlap:
        log.warning(
            "train/test overlap: %d shared (text, label) pairs", len(overlap)
        )
    per_seed = []
    failed = []
    start = time.perf_counter()
    for seed in seeds:
        try:
            shot = sample_kshot(train_full, k, seed)
            cfg = trainer.TrainConfig(
                **{**asdict(train_cfg), "seed": seed}
            )
            enc = encoder_cfg
            if enc is not None:
                enc = EncoderConfig(**{**asdict(enc), "init_seed": seed})
            model = trainer.train(
                cfg, shot, tokenizer_cfg=tokenizer_cfg, encoder_cfg=enc
            )
            index = classifier.build_class_index(model)
            result = classifier.evaluate(model, index, test_set)
            per_seed.append({"seed": seed, "accuracy": result["accuracy"]})
        except Exception as exc:  # noqa: BLE001 - seed failures are reported
            log.error("seed %s failed: %s", seed, exc)
            failed.append({"seed": seed, "error": str(exc)})
    accs = [r["accuracy"] for r in per_seed]
    report = {
        "k": k,
        "seeds": list(seeds),
        "per_seed": per_seed,
        "failed": failed,
        "accuracy_mean": float(np.mean(accs)) if accs else 0.0,
        "accuracy_std": float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
        "single_seed": len(accs) == 1,
        "total_seconds": time.perf_counter() - start,
    }
    return report


# ---- model serialization -------------------------------------------------


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _write_block(fh, payload):
    fh.write(struct.pack("<I", len(payload)))
    fh.write(payload)


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}")
    return data


def _read_block(fh, what):
    (n,) = struct.unpack("<I", _read_exact(fh, 4, what))
    return _read_exact(fh, n, what)


def save_model(model, path):
    """Binary model file: magic, version, config JSON, f32 params, classes."""
    config = {
        "tokenizer": asdict(model.tokenizer_config),
        "encoder": asdict(model.encoder_config),
        "train": asdict(model.train_config),
    }
    classes = {"labels": model.labels, "class_names": model.class_names}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        _write_block(fh, _canonical_json(config))
        for _, arr in model.params.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        _write_block(fh, _canonical_json(classes))


def load_model(path):
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IOError_(f"cannot open {path}: {exc}") from exc
    with fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(
                f"unsupported format version {version}, "
                f"this build reads version {FORMAT_VERSION}"
            )
        config = json.loads(_read_block(fh, "config"))
        tok_cfg = TokenizerConfig(**config["tokenizer"])
        enc_cfg = EncoderConfig(**config["encoder"])
        train_cfg = trainer.TrainConfig(**config["train"])

        shapes = _param_shapes(tok_cfg, enc_cfg)
        arrays = {}
        for name, shape in shapes:
            count = int(np.prod(shape))
            raw = _read_exact(fh, count * 4, f"parameter {name}")
            arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        classes = json.loads(_read_block(fh, "class index"))

    params = EncoderParams(
        arrays=arrays, use_attention=enc_cfg.use_attention
    )
    return trainer.TrainedModel(
        tokenizer_config=tok_cfg,
        encoder_config=enc_cfg,
        train_config=train_cfg,
        params=params,
        labels=classes["labels"],
        class_names=classes["class_names"],
    )


def _param_shapes(tok_cfg, enc_cfg):
    d, h = enc_cfg.d, enc_cfg.h
    shapes = {
        "embedding": (tok_cfg.vocab_size, d),
        "pos_embedding": (tok_cfg.max_len, d),
        "mlp_w1": (d, h),
        "mlp_b1": (h,),
        "mlp_w2": (h, d),
        "mlp_b2": (d,),
        "ln_gain": (d,),
        "ln_bias": (d,),
    }
    order = list(PARAM_ORDER)
    if enc_cfg.use_attention:
        for name in ATTN_PARAM_ORDER:
            shapes[name] = (d, d)
        order += list(ATTN_PARAM_ORDER)
    return [(name, shapes[name]) for name in order]

"""Retrieval-style inference: score queries against encoded class names."""

from dataclasses import dataclass

import numpy as np

from . import kernels, similarity
from .encoder import encode_eval, pool_cls_eval
from .errors import ConfigError, DataError
from .tokenizer import tokenize


@dataclass
class ClassIndex:
    class_ids: list           # lexicographically ordered label strings
    token_reps: np.ndarray    # (M, L, d) eval-mode class-name token reps
    n_valid: np.ndarray       # (M,)
    cls_reps: np.ndarray      # (M, d)


@dataclass(frozen=True)
class Prediction:
    label: str
    score: float
    ranking: list  # [(label, score), ...] descending score, ties by index


def _encode_texts(model, strings):
    toks = [tokenize(s, model.tokenizer_config) for s in strings]
    n_valid = np.array([t.n_valid for t in toks])
    L = int(n_valid.max())
    ids = np.stack([t.ids[:L] for t in toks])
    valid = np.stack([t.mask[:L] for t in toks])
    reps = encode_eval(model.params, ids, valid, model.encoder_config)
    return reps, n_valid


def build_class_index(model, class_names=None):
    """Encode every class name once, in eval mode, lexicographic order."""
    if class_names is None:
        class_names = model.class_names
    if not class_names:
        raise ConfigError("class set is empty")
    labels = sorted(class_names)
    reps, n_valid = _encode_texts(model, [class_names[c] for c in labels])
    return ClassIndex(
        class_ids=labels,
        token_reps=reps,
        n_valid=n_valid,
        cls_reps=pool_cls_eval(reps, n_valid),
    )


def _scores(model, index, reps, n_valid):
    if model.train_config.metric == similarity.TOKEN:
        return kernels.maxsim_scores(
            reps, n_valid, index.token_reps, index.n_valid
        )
    return pool_cls_eval(reps, n_valid) @ index.cls_reps.T


def predict_batch(model, index, texts, k=1):
    reps, n_valid = _encode_texts(model, texts)
    scores = _scores(model, index, reps, n_valid)
    out = []
    for row in scores:
        # stable argsort on (-score, index): ties go to the lowest index
        order = np.lexsort((np.arange(len(row)), -row.astype(np.float64)))
        top = [
            (index.class_ids[i], float(row[i]))
            for i in order[: min(k, len(row))]
        ]
        out.append(
            Prediction(label=top[0][0], score=top[0][1], ranking=top)
        )
    return out


def predict(model, index, text, k=1):
    """Classify one text to the most similar class name."""
    return predict_batch(model, index, [text], k=k)[0]


def evaluate(model, index, test_set, batch_size=256):
    """Accuracy and per-class accuracy over a labeled test set."""
    known = set(index.class_ids)
    for _, label in test_set.examples:
        if label not in known:
            raise DataError(f"test label {label!r} not in class index")
    correct = 0
    per_class = {}
    examples = test_set.examples
    for lo in range(0, len(examples), batch_size):
        chunk = examples[lo : lo + batch_size]
        preds = predict_batch(model, index, [t for t, _ in chunk])
        for (_, label), pred in zip(chunk, preds):
            hit, total = per_class.get(label, (0, 0))
            ok = pred.label == label
            per_class[label] = (hit + ok, total + 1)
            correct += ok
    accuracy = correct / len(examples) if examples else 0.0
    return {
        "accuracy": accuracy,
        "per_class": {
            label: hit / total for label, (hit, total) in sorted(per_class.items())
        },
        "n": len(examples),
    }

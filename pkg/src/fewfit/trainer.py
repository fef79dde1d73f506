"""Training loop: shuffled batches, augmented contrastive loss, AdamW."""

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import contrastive, encoder, similarity
from .autodiff import Tape
from .errors import ConfigError, TrainingDiverged
from .tokenizer import TokenizerConfig, tokenize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    num_repeats: int = 4
    lr: float = 1e-2
    weight_decay: float = 0.01
    temperature: float = 0.1
    metric: str = similarity.TOKEN
    dropout_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.num_repeats < 1 or self.lr <= 0:
            raise ConfigError("epochs, num_repeats >= 1 and lr > 0 required")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


@dataclass
class TrainedModel:
    tokenizer_config: TokenizerConfig
    encoder_config: encoder.EncoderConfig
    train_config: TrainConfig
    params: encoder.EncoderParams
    labels: list          # sorted class label strings
    class_names: dict     # label -> display name string
    epoch_log: list = field(default_factory=list)


def adamw_step(params, grads, state, lr, weight_decay,
               beta1=0.9, beta2=0.999, eps=1e-8):
    """Decoupled weight decay, then bias-corrected Adam update."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if weight_decay:
            p -= lr * weight_decay * p
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


def epoch_batches(n_texts, batch_size, rng):
    """Seeded shuffle into contiguous chunks; a trailing singleton is dropped."""
    order = rng.permutation(n_texts)
    chunks = [
        order[i : i + batch_size] for i in range(0, n_texts, batch_size)
    ]
    if chunks and len(chunks[-1]) == 1:
        log.info("dropping trailing batch of size 1")
        chunks.pop()
    return chunks


def train(train_cfg, dataset, tokenizer_cfg=None, encoder_cfg=None,
          metrics_path=None):
    """Fit encoder params to a few-shot dataset; deterministic given seed."""
    tokenizer_cfg = tokenizer_cfg or TokenizerConfig()
    encoder_cfg = encoder_cfg or encoder.EncoderConfig(
        init_seed=train_cfg.seed
    )
    if not dataset.examples:
        raise ConfigError("training set is empty")

    labels = dataset.classes
    label_ids = {lab: i for i, lab in enumerate(labels)}
    class_names = {
        lab: dataset.class_name_overrides.get(lab, lab) for lab in labels
    }
    name_tokens = {
        label_ids[lab]: tokenize(class_names[lab], tokenizer_cfg)
        for lab in labels
    }
    texts = [
        (tokenize(text, tokenizer_cfg), label_ids[lab])
        for text, lab in dataset.examples
    ]

    params = encoder.init_params(
        encoder_cfg, tokenizer_cfg.vocab_size, tokenizer_cfg.max_len
    )
    state = OptimizerState()
    rng = np.random.default_rng(train_cfg.seed)
    loss_cfg = contrastive.LossConfig(
        temperature=train_cfg.temperature, metric=train_cfg.metric
    )

    epoch_log = []
    metrics_file = open(metrics_path, "w") if metrics_path else None
    try:
        for epoch in range(train_cfg.epochs):
            start = time.perf_counter()
            losses = []
            for batch_no, idx in enumerate(
                epoch_batches(len(texts), train_cfg.batch_size, rng)
            ):
                batch = contrastive.build_batch(
                    [texts[i] for i in idx],
                    name_tokens,
                    train_cfg.num_repeats,
                    rng,
                    dropout_rate=train_cfg.dropout_rate,
                    d=encoder_cfg.d,
                )
                loss = _step(params, state, batch, train_cfg, encoder_cfg,
                             loss_cfg)
                if not np.isfinite(loss):
                    raise TrainingDiverged(epoch, batch_no, loss)
                losses.append(loss)
            elapsed = time.perf_counter() - start
            mean_loss = float(np.mean(losses)) if losses else 0.0
            epoch_log.append(
                {"epoch": epoch, "mean_loss": mean_loss, "seconds": elapsed}
            )
            log.info(
                "epoch %d  mean_loss %.6f  %.2fs", epoch, mean_loss, elapsed
            )
            if metrics_file:
                metrics_file.write(json.dumps(epoch_log[-1]) + "\n")
    finally:
        if metrics_file:
            metrics_file.close()

    return TrainedModel(
        tokenizer_config=tokenizer_cfg,
        encoder_config=encoder_cfg,
        train_config=train_cfg,
        params=params,
        labels=labels,
        class_names=class_names,
        epoch_log=epoch_log,
    )


def _step(params, state, batch, train_cfg, encoder_cfg, loss_cfg):
    tape = Tape()
    leaves = encoder.make_leaves(tape, params)
    reps = encoder.encode_graph(
        tape, leaves, batch.ids, batch.valid, encoder_cfg,
        dropout_masks=batch.dropout_masks,
    )
    sim = similarity.sim_matrix_graph(
        tape, reps, batch.valid, batch.n_valid, loss_cfg.metric
    )
    pos = contrastive.positives_mask(batch.labels)
    loss = contrastive.supcon_loss(tape, sim, pos, loss_cfg)
    tape.backward(loss)
    grads = {name: node.grad for name, node in leaves.items()}
    adamw_step(
        params, grads, state, train_cfg.lr, train_cfg.weight_decay
    )
    return float(loss.value)

"""Batch augmentation and the supervised batch contrastive loss.

A training batch of B texts is augmented with each text's class name as an
extra same-label row, and the whole set is repeated r times; repeated copies
share token ids but get independent dropout masks, so dropout acts as the
augmentation. The loss pulls each anchor toward its same-label rows and away
from everything else in the batch, scaled by a temperature.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .similarity import CLS, TOKEN

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.1
    metric: str = TOKEN

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.metric not in (TOKEN, CLS):
            raise ConfigError(f"unknown metric {self.metric!r}")


@dataclass
class AugmentedBatch:
    ids: np.ndarray          # (R, L) token ids, R = 2*B*r
    valid: np.ndarray        # (R, L) 0/1 mask
    n_valid: np.ndarray      # (R,)
    labels: np.ndarray       # (R,) integer label ids
    origins: np.ndarray      # (R,) 0 = text row, 1 = class-name row
    repeat_index: np.ndarray  # (R,)
    base_size: int
    repeats: int
    dropout_masks: np.ndarray | None  # (R, L, d) or None


def build_batch(texts, class_names, r, rng, dropout_rate=0.0, d=None,
                dtype=np.float32):
    """Assemble the 2*B*r augmented rows.

    texts: list of (TokenIds, label_id); class_names: label_id -> TokenIds.
    Row order is [text_1..text_B, name(y_1)..name(y_B)] repeated r times.
    Dropout masks (drawn from rng, one per row, 1/(1-p) scale baked in) are
    generated when dropout_rate > 0 and d is given.
    """
    if r < 1:
        raise ConfigError("r must be >= 1")
    for _, label in texts:
        if label not in class_names:
            raise ConfigError(f"no class name for label {label!r}")
    B = len(texts)
    base = [tok for tok, _ in texts] + [class_names[label] for _, label in texts]
    base_labels = [label for _, label in texts] * 2
    rows = base * r
    labels = np.array(base_labels * r)
    L = max(t.n_valid for t in rows)

    ids = np.stack([t.ids[:L] for t in rows])
    valid = np.stack([t.mask[:L] for t in rows])
    n_valid = np.array([t.n_valid for t in rows])
    R = 2 * B * r

    masks = None
    if dropout_rate > 0.0:
        if d is None:
            raise ConfigError("dropout masks need the embedding width d")
        keep = (rng.random((R, L, d)) >= dropout_rate).astype(dtype)
        masks = keep / dtype(1.0 - dropout_rate)

    return AugmentedBatch(
        ids=ids,
        valid=valid,
        n_valid=n_valid,
        labels=labels,
        origins=np.array(([0] * B + [1] * B) * r),
        repeat_index=np.repeat(np.arange(r), 2 * B),
        base_size=B,
        repeats=r,
        dropout_masks=masks,
    )


def positives_mask(labels):
    """Boolean (R, R) matrix: same label, anchor excluded from its own set."""
    labels = np.asarray(labels)
    mask = labels[:, None] == labels[None, :]
    np.fill_diagonal(mask, False)
    return mask


def _loss_weights(pos, dtype):
    """Per-entry weights 1/|P(b)|; rows without positives contribute 0."""
    counts = pos.sum(axis=1)
    if np.all(counts == 0):
        log.warning("batch has no positive pairs; loss is identically 0")
    safe = np.maximum(counts, 1)
    return (pos / safe[:, None]).astype(dtype), counts


def supcon_loss(tape, sim_node, pos, cfg):
    """Differentiable batch contrastive loss from a score-matrix node.

    For each anchor b: mean over positives p of
    -log( exp(S(b,p)/tau) / sum_{a != b} exp(S(b,a)/tau) ), summed over b.
    The denominator's log-sum-exp subtracts a detached row max for stability.
    """
    R = sim_node.value.shape[0]
    logits = tape.scale(sim_node, 1.0 / cfg.temperature)
    denom_logits = tape.masked_fill(logits, np.eye(R, dtype=bool), -1e30)
    shift = np.max(denom_logits.value, axis=1, keepdims=True)  # detached
    shifted = tape.sub(
        denom_logits, tape.constant(np.broadcast_to(shift, (R, R)))
    )
    log_z = tape.add(
        tape.log(tape.sum(tape.exp(shifted), axis=1)),
        tape.constant(shift[:, 0]),
    )
    ones_row = tape.constant(np.ones((1, R), dtype=log_z.value.dtype))
    z_mat = tape.matmul(tape.reshape(log_z, (R, 1)), ones_row)
    weights, _ = _loss_weights(pos, sim_node.value.dtype)
    per_pair = tape.mul(tape.sub(z_mat, logits), tape.constant(weights))
    return tape.sum(per_pair)


def supcon_loss_value(sim, pos, cfg):
    """Non-differentiable numpy evaluation of the same loss."""
    sim = np.asarray(sim, dtype=np.float64)
    R = sim.shape[0]
    logits = sim / cfg.temperature
    denom = np.where(np.eye(R, dtype=bool), -np.inf, logits)
    shift = denom.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(denom - shift).sum(axis=1)) + shift[:, 0]
    weights, _ = _loss_weights(pos, np.float64)
    return float((weights * (log_z[:, None] - logits)).sum())


def supcon_loss_bruteforce(sim, pos, cfg):
    """Literal triple-loop transcription of the loss at f64. Test oracle;
    no log-sum-exp trick."""
    if cfg.temperature <= 0:
        raise ConfigError("temperature must be positive")
    R = len(sim)
    total = 0.0
    for b in range(R):
        positives = [p for p in range(R) if pos[b][p]]
        if not positives:
            continue
        denominator = 0.0
        for a in range(R):
            if a != b:
                denominator += math.exp(float(sim[b][a]) / cfg.temperature)
        inner = 0.0
        for p in positives:
            numerator = math.exp(float(sim[b][p]) / cfg.temperature)
            inner += math.log(numerator / denominator)
        total += -inner / len(positives)
    return total

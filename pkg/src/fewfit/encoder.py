"""Small trainable token encoder: embeddings + residual MLP + LayerNorm.

Produces L2-normalized per-token representations (padded rows zeroed) and a
pooled CLS-style vector (masked mean, renormalized). Dropout on the embedded
tokens is the augmentation mechanism; masks are supplied externally so the
forward pass is a pure function. A single-head attention block can be enabled
to mix token context before the MLP.

Both a tape-recorded forward (for training) and a plain numpy forward (for
inference) are provided; they compute the same function and are cross-checked
in the tests.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class EncoderConfig:
    d: int = 64
    h: int = 128
    dropout_rate: float = 0.1
    use_attention: bool = False
    init_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.d < 2 or self.h < self.d:
            raise ConfigError("require d >= 2 and h >= d")


# serialization order of the parameter arrays; attention block only when used
PARAM_ORDER = (
    "embedding",
    "pos_embedding",
    "mlp_w1",
    "mlp_b1",
    "mlp_w2",
    "mlp_b2",
    "ln_gain",
    "ln_bias",
)
ATTN_PARAM_ORDER = ("wq", "wk", "wv", "wo")


@dataclass
class EncoderParams:
    arrays: dict = field(default_factory=dict)
    use_attention: bool = False

    def names(self):
        order = PARAM_ORDER + (ATTN_PARAM_ORDER if self.use_attention else ())
        return list(order)

    def items(self):
        return [(name, self.arrays[name]) for name in self.names()]

    def copy(self):
        return EncoderParams(
            arrays={k: v.copy() for k, v in self.arrays.items()},
            use_attention=self.use_attention,
        )


def init_params(config, vocab_size, max_len, dtype=np.float32):
    """Seeded uniform(-0.05, 0.05) init; LayerNorm affine at identity."""
    rng = np.random.default_rng(config.init_seed)
    d, h = config.d, config.h

    def u(*shape):
        return rng.uniform(-0.05, 0.05, size=shape).astype(dtype)

    arrays = {
        "embedding": u(vocab_size, d),
        "pos_embedding": u(max_len, d),
        "mlp_w1": u(d, h),
        "mlp_b1": u(h),
        "mlp_w2": u(h, d),
        "mlp_b2": u(d),
        "ln_gain": np.ones(d, dtype=dtype),
        "ln_bias": np.zeros(d, dtype=dtype),
    }
    if config.use_attention:
        for name in ATTN_PARAM_ORDER:
            arrays[name] = u(d, d)
    return EncoderParams(arrays=arrays, use_attention=config.use_attention)


def make_leaves(tape, params):
    """Register every parameter array as a gradient leaf on the tape."""
    return {name: tape.leaf(arr) for name, arr in params.items()}


def encode_graph(tape, leaves, ids, valid, config, dropout_masks=None):
    """Tape-recorded batch forward.

    ids, valid: (R, L) arrays; dropout_masks: (R, L, d) with the 1/(1-p)
    scale baked in, or None for eval. Returns the (R, L, d) reps node.
    """
    R, L = ids.shape
    d = config.d
    e = tape.gather_rows(leaves["embedding"], ids)
    pos_ids = np.broadcast_to(np.arange(L), (R, L))
    e = tape.add(e, tape.gather_rows(leaves["pos_embedding"], pos_ids))
    if dropout_masks is not None:
        e = tape.dropout(e, dropout_masks)

    if config.use_attention:
        q = tape.matmul(e, leaves["wq"])
        k = tape.matmul(e, leaves["wk"])
        v = tape.matmul(e, leaves["wv"])
        scores = tape.scale(tape.bmm(q, tape.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(d))
        key_pad = np.broadcast_to(valid[:, None, :] == 0, (R, L, L))
        scores = tape.masked_fill(scores, key_pad, -1e9)
        shift = np.max(scores.value, axis=2, keepdims=True)  # detached
        scores = tape.sub(scores, tape.constant(np.broadcast_to(shift, (R, L, L))))
        weights = tape.exp(scores)
        denom = tape.sum(weights, axis=2)
        inv = tape.div(tape.constant(np.ones_like(denom.value)), denom)
        attended = tape.bmm(tape.scale_rows(weights, inv), v)
        e = tape.add(e, tape.matmul(attended, leaves["wo"]))

    h = tape.gelu(tape.add_bias(tape.matmul(e, leaves["mlp_w1"]), leaves["mlp_b1"]))
    m = tape.add_bias(tape.matmul(h, leaves["mlp_w2"]), leaves["mlp_b2"])
    x = tape.layernorm(tape.add(e, m), leaves["ln_gain"], leaves["ln_bias"])
    x = tape.l2_normalize(x)
    return tape.scale_rows(x, tape.constant(valid.astype(x.value.dtype)))


def encode_eval(params, ids, valid, config):
    """Plain numpy forward, no tape, no dropout. Same math as encode_graph."""
    a = params.arrays
    R, L = ids.shape
    d = config.d
    e = a["embedding"][ids] + a["pos_embedding"][np.arange(L)][None, :, :]

    if config.use_attention:
        q, k, v = e @ a["wq"], e @ a["wk"], e @ a["wv"]
        scores = (q @ k.transpose(0, 2, 1)) / math.sqrt(d)
        scores = np.where(valid[:, None, :] == 0, -1e9, scores)
        scores -= scores.max(axis=2, keepdims=True)
        w = np.exp(scores)
        w /= w.sum(axis=2, keepdims=True)
        e = e + (w @ v) @ a["wo"]

    h = e @ a["mlp_w1"] + a["mlp_b1"]
    h = h * 0.5 * (1.0 + erf(h / math.sqrt(2.0)))
    x = e + h @ a["mlp_w2"] + a["mlp_b2"]

    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    x = (x - mean) / np.sqrt(var + 1e-5) * a["ln_gain"] + a["ln_bias"]

    norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    x = x / np.maximum(norm, 1e-12)
    return x * valid[:, :, None].astype(x.dtype)


@dataclass(frozen=True)
class TokenReps:
    reps: np.ndarray  # (max_len, d), unit rows where valid, zero elsewhere
    mask: np.ndarray  # (max_len,)
    n_valid: int


def encode_tokens(params, token_ids, config, mode="eval", dropout_mask=None):
    """Single-text encode. mode 'train' requires a dropout mask."""
    if mode == "train" and dropout_mask is None:
        raise ContractError("train mode requires dropout masks")
    ids = token_ids.ids[None, :]
    valid = token_ids.mask[None, :]
    if mode == "train":
        from .autodiff import Tape

        tape = Tape()
        leaves = make_leaves(tape, params)
        reps = encode_graph(
            tape, leaves, ids, valid, config, dropout_masks=dropout_mask[None]
        ).value[0]
    else:
        reps = encode_eval(params, ids, valid, config)[0]
    return TokenReps(reps=reps, mask=token_ids.mask, n_valid=token_ids.n_valid)


def pool_cls_graph(tape, reps_node, n_valid):
    """Masked mean over valid token rows, renormalized. Tape version."""
    summed = tape.sum(reps_node, axis=1)
    inv_n = tape.constant(
        (1.0 / np.asarray(n_valid)).astype(summed.value.dtype)
    )
    return tape.l2_normalize(tape.scale_rows(summed, inv_n))


def pool_cls_eval(reps, n_valid):
    if np.any(np.asarray(n_valid) == 0):
        raise ContractError("pool_cls requires at least one valid token")
    mean = reps.sum(axis=-2) / np.asarray(n_valid)[..., None]
    norm = np.sqrt((mean * mean).sum(axis=-1, keepdims=True))
    return mean / np.maximum(norm, 1e-12)


def pool_cls(token_reps):
    """ClsRep for a single text: unit-norm masked mean of its token rows."""
    if token_reps.n_valid < 1:
        raise ContractError("pool_cls requires at least one valid token")
    masked = token_reps.reps * token_reps.mask[:, None]
    return pool_cls_eval(masked[None], [token_reps.n_valid])[0]

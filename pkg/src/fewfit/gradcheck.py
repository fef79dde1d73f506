"""Finite-difference validation of the full training pipeline gradient."""

import numpy as np

from . import contrastive, encoder, similarity
from .autodiff import grad_check


def _min_top2_gap(cfg, params, ids, valid, masks):
    """Smallest margin between the best and second-best doc token in any
    MaxSim reduction. Cases with a narrow margin have a kink within the
    finite-difference step and cannot be checked by central differences."""
    from .autodiff import Tape

    tape = Tape()
    leaves = {n: tape.constant(a) for n, a in params.items()}
    r = encoder.encode_graph(
        tape, leaves, ids, valid, cfg, dropout_masks=masks
    ).value
    R, L, d = r.shape
    dots = (r.reshape(R * L, d) @ r.reshape(R * L, d).T).reshape(R, L, R, L)
    dots = np.where(valid[None, None, :, :] == 0, -np.inf, dots)
    top2 = -np.partition(-dots, 1, axis=3)[..., :2]
    gaps = top2[..., 0] - top2[..., 1]
    gaps = np.where(np.isfinite(gaps), gaps, np.inf)
    # only query-valid, off-diagonal reductions feed the loss
    gaps = np.where(valid[:, :, None] == 1, gaps, np.inf)
    for i in range(R):
        gaps[i, :, i] = np.inf
    return float(gaps.min())


def _random_case(rng, min_gap=0.02):
    vocab, max_len = 64, 5
    while True:
        d = int(rng.integers(3, 6))
        cfg = encoder.EncoderConfig(
            d=d, h=2 * d, dropout_rate=0.1,
            use_attention=bool(rng.integers(0, 2)),
            init_seed=int(rng.integers(0, 2**31)),
        )
        params = encoder.init_params(cfg, vocab, max_len, dtype=np.float64)
        # move well away from the near-zero init so every parameter's
        # gradient sits above the finite-difference noise floor
        for _, arr in params.items():
            arr += rng.normal(scale=0.3, size=arr.shape)

        R = 6  # 3 texts + 3 class-name rows
        L = int(rng.integers(2, max_len + 1))
        ids = rng.integers(2, vocab, size=(R, L))
        # at least 2 valid tokens per row: with a single key the attention
        # softmax is constant and the wq/wk gradients fall below what
        # central differences can resolve at f64
        n_valid = rng.integers(2, L + 1, size=R)
        valid = (np.arange(L)[None, :] < n_valid[:, None]).astype(np.int64)
        labels = np.array([0, 0, 1, 0, 0, 1])
        keep = (rng.random((R, L, d)) >= 0.1).astype(np.float64)
        masks = keep / 0.9
        metric = similarity.TOKEN if rng.random() < 0.5 else similarity.CLS
        tau = float(rng.choice([0.5, 1.0, 2.0]))
        loss_cfg = contrastive.LossConfig(temperature=tau, metric=metric)
        pos = contrastive.positives_mask(labels)
        if metric == similarity.CLS or _min_top2_gap(
            cfg, params, ids, valid, masks
        ) > min_gap:
            return cfg, params, ids, valid, n_valid, masks, loss_cfg, pos


def _loss_fn(param_name, cfg, params, ids, valid, n_valid, masks, loss_cfg,
             pos):
    shape = params.arrays[param_name].shape

    def fn(tape, x):
        leaves = {}
        for name, arr in params.items():
            if name == param_name:
                leaves[name] = tape.reshape(x, shape)
            else:
                leaves[name] = tape.constant(arr)
        reps = encoder.encode_graph(
            tape, leaves, ids, valid, cfg, dropout_masks=masks
        )
        sim = similarity.sim_matrix_graph(
            tape, reps, valid, n_valid, loss_cfg.metric
        )
        return contrastive.supcon_loss(tape, sim, pos, loss_cfg)

    return fn


def pipeline_max_error(n_configs=100, coords_per_param=3, eps=1e-5, seed=0):
    """Max relative grad error over random pipeline configurations, at f64.

    Each configuration draws a fresh tiny encoder, random token batch, fixed
    dropout masks, a similarity metric, and a temperature; every parameter
    tensor is checked on a random coordinate subset.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_configs):
        case = _random_case(rng)
        params = case[1]
        for name, arr in params.items():
            fn = _loss_fn(name, *case)
            err = grad_check(
                fn, arr.ravel(), eps=eps,
                max_coords=coords_per_param, rng=rng,
            )
            worst = max(worst, err)
    return worst

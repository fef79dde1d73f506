"""Similarity metrics: token-level MaxSim and CLS cosine.

MaxSim scores an ordered pair (query, doc): for each valid query token, take
the max dot product against the doc's valid tokens, and sum. Token rows are
unit vectors, so dots are cosines. The CLS variant is a plain dot of pooled
unit vectors. Both come in a tape-recorded form (training) and a numpy form
(inference / oracles).
"""

import numpy as np

from . import kernels
from .encoder import pool_cls_eval, pool_cls_graph

TOKEN = "token"
CLS = "cls"
NEG_INF_FILL = -1e30


def sim_token(query, doc):
    """MaxSim between two TokenReps; asymmetric, query supplies the sum."""
    scores = kernels.maxsim_scores(
        query.reps[None], np.array([query.n_valid]),
        doc.reps[None], np.array([doc.n_valid]),
    )
    return float(scores[0, 0])


def sim_cls(a, b):
    """Cosine of two unit CLS vectors."""
    return float(np.dot(a, b))


def sim_matrix_eval(reps, n_valid, metric):
    """All-pairs scores for a batch of encoded rows; diagonal zeroed."""
    if metric == TOKEN:
        scores = kernels.maxsim_scores(reps, n_valid, reps, n_valid)
    elif metric == CLS:
        pooled = pool_cls_eval(reps, n_valid)
        scores = pooled @ pooled.T
    else:
        raise ValueError(f"unknown metric {metric!r}")
    np.fill_diagonal(scores, 0.0)
    return scores


def sim_matrix_graph(tape, reps_node, valid, n_valid, metric):
    """Differentiable all-pairs score matrix; entry (i, i) fixed at 0.

    reps_node: (R, L, d) node with zeroed padded rows; valid: (R, L) mask.
    """
    R, L, _ = reps_node.value.shape
    if metric == CLS:
        pooled = pool_cls_graph(tape, reps_node, n_valid)
        scores = tape.matmul(pooled, tape.transpose(pooled))
    elif metric == TOKEN:
        flat = tape.reshape(reps_node, (R * L, reps_node.value.shape[2]))
        dots = tape.matmul(flat, tape.transpose(flat))
        dots = tape.reshape(dots, (R, L, R, L))
        doc_pad = np.broadcast_to((valid == 0)[None, None, :, :], (R, L, R, L))
        dots = tape.masked_fill(dots, doc_pad, NEG_INF_FILL)
        best = tape.max(dots, axis=3)  # (R, L, R)
        qmask = np.broadcast_to(
            valid[:, :, None].astype(best.value.dtype), (R, L, R)
        )
        best = tape.mul(best, tape.constant(qmask))
        scores = tape.sum(best, axis=1)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return tape.masked_fill(scores, np.eye(R, dtype=bool), 0.0)


def sim_matrix_oracle(reps, n_valid, metric):
    """Naive per-pair double loop used only to cross-check the batched path."""
    R = reps.shape[0]
    out = np.zeros((R, R), dtype=np.float64)
    if metric == CLS:
        pooled = pool_cls_eval(reps.astype(np.float64), n_valid)
        for i in range(R):
            for j in range(R):
                if i != j:
                    out[i, j] = float(np.dot(pooled[i], pooled[j]))
        return out
    for i in range(R):
        for j in range(R):
            if i == j:
                continue
            total = 0.0
            for k in range(n_valid[i]):
                best = -np.inf
                for l in range(n_valid[j]):
                    best = max(best, float(np.dot(reps[i, k], reps[j, l])))
                total += best
            out[i, j] = total
    return out

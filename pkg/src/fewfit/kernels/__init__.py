"""Inference scoring kernels: compiled extension with a numpy fallback.

The Cython extension is built by setup.py when a compiler is available;
otherwise (or with FEWFIT_NO_EXT=1) the numpy implementation is used.
Both compute identical scores; `benchmarks/bench_kernels.py` compares them.
"""

import os

import numpy as np


def maxsim_scores_numpy(query, q_nvalid, docs, d_nvalid, chunk=256):
    """scores[i, j] = sum over query i's valid tokens of the max dot
    against doc j's valid tokens. Valid tokens are a prefix of each row."""
    query = np.ascontiguousarray(query, dtype=np.float32)
    docs = np.ascontiguousarray(docs, dtype=np.float32)
    Q, Lq, _ = query.shape
    M, Lm, _ = docs.shape
    q_nvalid = np.asarray(q_nvalid)
    d_nvalid = np.asarray(d_nvalid)
    doc_pad = np.arange(Lm)[None, :] >= d_nvalid[:, None]  # (M, Lm)
    out = np.empty((Q, M), dtype=np.float32)
    for lo in range(0, Q, chunk):
        hi = min(lo + chunk, Q)
        # (q, m, k, l) token dot products for the chunk
        dots = np.einsum("qkd,mld->qmkl", query[lo:hi], docs, optimize=True)
        dots = np.where(doc_pad[None, :, None, :], -np.inf, dots)
        best = dots.max(axis=3)  # (q, m, k)
        q_pad = np.arange(Lq)[None, :] >= q_nvalid[lo:hi, None]
        best = np.where(q_pad[:, None, :], 0.0, best)
        out[lo:hi] = best.sum(axis=2)
    return out


if os.environ.get("FEWFIT_NO_EXT"):
    _compiled = None
else:
    try:
        from ._maxsim import maxsim_scores as _compiled
    except ImportError:
        _compiled = None

HAVE_COMPILED = _compiled is not None
BACKEND = "cython" if HAVE_COMPILED else "numpy"


def maxsim_scores_compiled(query, q_nvalid, docs, d_nvalid):
    return _compiled(
        np.ascontiguousarray(query, dtype=np.float32),
        np.ascontiguousarray(q_nvalid, dtype=np.int64),
        np.ascontiguousarray(docs, dtype=np.float32),
        np.ascontiguousarray(d_nvalid, dtype=np.int64),
    )


maxsim_scores = maxsim_scores_compiled if HAVE_COMPILED else maxsim_scores_numpy

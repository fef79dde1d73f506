# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled MaxSim scoring kernel for inference.

Valid tokens occupy a prefix of each row (the tokenizer pads at the end),
so per-row token counts are enough; no masks needed here.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def maxsim_scores(
    cnp.float32_t[:, :, ::1] query,
    cnp.int64_t[::1] q_nvalid,
    cnp.float32_t[:, :, ::1] docs,
    cnp.int64_t[::1] d_nvalid,
):
    """scores[i, j] = sum over query i's tokens of the max dot against doc j."""
    cdef Py_ssize_t Q = query.shape[0]
    cdef Py_ssize_t M = docs.shape[0]
    cdef Py_ssize_t D = query.shape[2]
    cdef Py_ssize_t i, j, k, l, c
    cdef Py_ssize_t nq, nd
    cdef float dot, best, total
    out_arr = np.empty((Q, M), dtype=np.float32)
    cdef cnp.float32_t[:, ::1] out = out_arr

    for i in range(Q):
        nq = q_nvalid[i]
        for j in range(M):
            nd = d_nvalid[j]
            total = 0.0
            for k in range(nq):
                best = -3.4e38
                for l in range(nd):
                    dot = 0.0
                    for c in range(D):
                        dot += query[i, k, c] * docs[j, l, c]
                    if dot > best:
                        best = dot
                total += best
            out[i, j] = total
    return out_arr

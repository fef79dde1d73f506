import numpy as np
import pytest

from fewfit import kernels


def random_inputs(seed, Q=7, Lq=5, M=4, Lm=3, d=6):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(Q, Lq, d)).astype(np.float32)
    docs = rng.normal(size=(M, Lm, d)).astype(np.float32)
    qn = rng.integers(1, Lq + 1, size=Q)
    dn = rng.integers(1, Lm + 1, size=M)
    return q, qn, docs, dn


def reference(q, qn, docs, dn):
    Q, M = q.shape[0], docs.shape[0]
    out = np.zeros((Q, M))
    for i in range(Q):
        for j in range(M):
            total = 0.0
            for k in range(qn[i]):
                total += max(
                    float(np.dot(q[i, k], docs[j, l])) for l in range(dn[j])
                )
            out[i, j] = total
    return out


@pytest.mark.parametrize("seed", range(10))
def test_numpy_fallback_matches_reference(seed):
    q, qn, docs, dn = random_inputs(seed)
    got = kernels.maxsim_scores_numpy(q, qn, docs, dn)
    assert np.allclose(got, reference(q, qn, docs, dn), atol=1e-5)


@pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="extension not built")
@pytest.mark.parametrize("seed", range(10))
def test_compiled_matches_numpy_fallback(seed):
    q, qn, docs, dn = random_inputs(seed)
    fast = kernels.maxsim_scores_compiled(q, qn, docs, dn)
    slow = kernels.maxsim_scores_numpy(q, qn, docs, dn)
    assert np.allclose(fast, slow, atol=1e-5)


def test_chunking_is_transparent():
    q, qn, docs, dn = random_inputs(3, Q=20)
    a = kernels.maxsim_scores_numpy(q, qn, docs, dn, chunk=4)
    b = kernels.maxsim_scores_numpy(q, qn, docs, dn, chunk=1000)
    assert np.array_equal(a, b)

import numpy as np

from fewfit import encoder, similarity
from fewfit.autodiff import Tape, grad_check
from fewfit.encoder import TokenReps
from fewfit.tokenizer import TokenizerConfig, tokenize


def make_reps(rows, max_len=None):
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    L = max_len or n
    reps = np.zeros((L, rows.shape[1]))
    reps[:n] = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    mask = np.zeros(L, dtype=int)
    mask[:n] = 1
    return TokenReps(reps=reps, mask=mask, n_valid=n)


def random_encoded_batch(seed, n_rows=5, d=6, max_len=4):
    rng = np.random.default_rng(seed)
    n_valid = rng.integers(1, max_len + 1, size=n_rows)
    reps = rng.normal(size=(n_rows, max_len, d))
    reps /= np.linalg.norm(reps, axis=-1, keepdims=True)
    for i, n in enumerate(n_valid):
        reps[i, n:] = 0.0
    return reps.astype(np.float32), n_valid


def test_self_similarity_is_n_valid():
    x = make_reps(np.random.default_rng(0).normal(size=(3, 5)))
    assert abs(similarity.sim_token(x, x) - 3.0) < 1e-5


def test_max_picks_best_doc_token():
    q = make_reps([[1.0, 0.0]], max_len=2)
    d = make_reps([[1.0, 0.0], [0.0, 1.0]])
    assert abs(similarity.sim_token(q, d) - 1.0) < 1e-6


def test_asymmetry():
    q = make_reps([[1.0, 0.0], [1.0, 0.0]])
    d = make_reps([[1.0, 0.0]], max_len=2)
    assert abs(similarity.sim_token(q, d) - 2.0) < 1e-6
    assert abs(similarity.sim_token(d, q) - 1.0) < 1e-6


def test_sim_cls_identities():
    a = np.array([1.0, 0.0])
    b = np.array([0.0, 1.0])
    assert similarity.sim_cls(a, a) == 1.0
    assert similarity.sim_cls(a, b) == 0.0
    assert similarity.sim_cls(a, -a) == -1.0


def test_sim_matrix_identical_rows_token():
    reps, n_valid = random_encoded_batch(1, n_rows=1, max_len=2, d=4)
    n_valid[:] = 2
    reps[0, 1] = reps[0, 0]
    batch = np.repeat(reps, 2, axis=0)
    scores = similarity.sim_matrix_eval(batch, np.array([2, 2]), "token")
    assert np.allclose(scores[0, 1], 2.0, atol=1e-5)
    assert np.allclose(np.diag(scores), 0.0)


def test_sim_matrix_cls_symmetric():
    reps, n_valid = random_encoded_batch(2)
    scores = similarity.sim_matrix_eval(reps, n_valid, "cls")
    assert np.allclose(scores, scores.T, atol=1e-6)


def test_sim_matrix_matches_naive_oracle_both_metrics():
    for seed in range(50):
        reps, n_valid = random_encoded_batch(seed)
        for metric in ("token", "cls"):
            fast = similarity.sim_matrix_eval(reps, n_valid, metric)
            slow = similarity.sim_matrix_oracle(reps, n_valid, metric)
            assert np.allclose(fast, slow, atol=1e-6), (seed, metric)


def test_sim_matrix_graph_matches_eval():
    for metric in ("token", "cls"):
        reps, n_valid = random_encoded_batch(7)
        valid = (np.arange(reps.shape[1])[None, :] < n_valid[:, None]).astype(
            np.int64
        )
        tape = Tape()
        node = similarity.sim_matrix_graph(
            tape, tape.leaf(reps.astype(np.float64)), valid, n_valid, metric
        )
        assert np.allclose(
            node.value, similarity.sim_matrix_eval(reps, n_valid, metric),
            atol=1e-5,
        )


def test_score_bounds():
    rng = np.random.default_rng(11)
    for _ in range(20):
        q = make_reps(rng.normal(size=(3, 4)))
        d = make_reps(rng.normal(size=(2, 4)), max_len=3)
        assert abs(similarity.sim_token(q, d)) <= q.n_valid + 1e-6
        a = rng.normal(size=4)
        b = rng.normal(size=4)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        assert abs(similarity.sim_cls(a, b)) <= 1 + 1e-6


def test_sim_token_gradient():
    # end-to-end through the maxsim graph w.r.t. raw (pre-normalized) rows
    rng = np.random.default_rng(13)
    n_valid = np.array([3, 2])
    valid = (np.arange(3)[None, :] < n_valid[:, None]).astype(np.int64)

    def fn(tp, x):
        reps = tp.l2_normalize(tp.reshape(x, (2, 3, 4)))
        reps = tp.scale_rows(reps, tp.constant(valid.astype(np.float64)))
        sim = similarity.sim_matrix_graph(tp, reps, valid, n_valid, "token")
        return tp.sum(tp.mul(sim, sim))

    assert grad_check(fn, rng.normal(size=24)) < 1e-4

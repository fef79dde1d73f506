import math

import numpy as np
import pytest

from fewfit import contrastive as C
from fewfit.autodiff import Tape, grad_check
from fewfit.errors import ConfigError
from fewfit.tokenizer import TokenizerConfig, tokenize

TOK = TokenizerConfig(vocab_size=256, max_len=6)


def toks(text):
    return tokenize(text, TOK)


def loss_value(sim, pos, cfg):
    t = Tape()
    return float(C.supcon_loss(t, t.leaf(np.asarray(sim, float)), pos, cfg).value)


def test_build_batch_row_count():
    texts = [(toks("a b"), 0), (toks("c"), 1)]
    names = {0: toks("zero"), 1: toks("one")}
    batch = C.build_batch(texts, names, 2, np.random.default_rng(0))
    assert len(batch.labels) == 8
    assert batch.base_size == 2 and batch.repeats == 2


def test_build_batch_single_text_positives():
    batch = C.build_batch(
        [(toks("hello"), 0)], {0: toks("greet")}, 1, np.random.default_rng(0)
    )
    pos = C.positives_mask(batch.labels)
    assert pos[0, 1] and pos[1, 0]
    assert not pos[0, 0] and not pos[1, 1]
    assert list(batch.origins) == [0, 1]


def test_build_batch_deterministic_masks():
    texts = [(toks("a b c"), 0)]
    names = {0: toks("n")}
    b1 = C.build_batch(texts, names, 3, np.random.default_rng(5),
                       dropout_rate=0.5, d=4)
    b2 = C.build_batch(texts, names, 3, np.random.default_rng(5),
                       dropout_rate=0.5, d=4)
    assert np.array_equal(b1.dropout_masks, b2.dropout_masks)
    assert np.array_equal(b1.ids, b2.ids)
    # repeats share token ids but have independent masks
    assert np.array_equal(b1.ids[0], b1.ids[2])
    assert not np.array_equal(b1.dropout_masks[0], b1.dropout_masks[2])


def test_build_batch_missing_class_name():
    with pytest.raises(ConfigError):
        C.build_batch([(toks("x"), 9)], {0: toks("n")}, 1,
                      np.random.default_rng(0))


def test_positives_mask_examples():
    pos = C.positives_mask(["A", "B", "A"])
    assert list(np.where(pos[0])[0]) == [2]
    assert not C.positives_mask(["A", "B", "C"]).any()
    assert np.array_equal(
        C.positives_mask(["A", "A"]), [[False, True], [True, False]]
    )


def test_b2_same_label_loss_is_zero():
    rng = np.random.default_rng(0)
    pos = C.positives_mask(["A", "A"])
    for _ in range(10):
        sim = rng.normal(size=(2, 2)) * 5
        np.fill_diagonal(sim, 0)
        for tau in (0.05, 0.1, 1.0):
            cfg = C.LossConfig(temperature=tau)
            assert abs(loss_value(sim, pos, cfg)) < 1e-9
            assert abs(C.supcon_loss_bruteforce(sim, pos, cfg)) < 1e-9


def test_hand_derived_three_row_loss():
    sim = np.zeros((3, 3))
    sim[0, 1] = sim[1, 0] = 1.0
    pos = C.positives_mask(["A", "A", "B"])
    cfg = C.LossConfig(temperature=1.0)
    expected = 2.0 * math.log(1.0 + math.exp(-1.0))
    assert abs(loss_value(sim, pos, cfg) - expected) < 1e-9
    assert abs(C.supcon_loss_bruteforce(sim, pos, cfg) - expected) < 1e-9


def test_loss_matches_bruteforce_on_random_batches():
    rng = np.random.default_rng(42)
    for _ in range(50):
        R = int(rng.integers(3, 13))
        sim = rng.normal(size=(R, R)) * 3
        np.fill_diagonal(sim, 0)
        pos = C.positives_mask(rng.integers(0, 4, size=R))
        for tau in (0.05, 0.1, 1.0):
            cfg = C.LossConfig(temperature=tau)
            assert abs(
                loss_value(sim, pos, cfg) - C.supcon_loss_bruteforce(sim, pos, cfg)
            ) < 1e-6


def test_loss_nonnegative_and_permutation_invariant():
    rng = np.random.default_rng(7)
    for _ in range(20):
        R = 8
        sim = rng.normal(size=(R, R))
        np.fill_diagonal(sim, 0)
        labels = rng.integers(0, 3, size=R)
        cfg = C.LossConfig(temperature=0.3)
        v = loss_value(sim, C.positives_mask(labels), cfg)
        assert v >= -1e-9
        perm = rng.permutation(R)
        v2 = loss_value(
            sim[np.ix_(perm, perm)], C.positives_mask(labels[perm]), cfg
        )
        assert abs(v - v2) < 1e-8


def test_all_distinct_labels_zero_loss_with_warning(caplog):
    sim = np.random.default_rng(1).normal(size=(3, 3))
    pos = C.positives_mask(["A", "B", "C"])
    with caplog.at_level("WARNING", logger="fewfit.contrastive"):
        v = loss_value(sim, pos, C.LossConfig())
    assert v == 0.0
    assert any("no positive pairs" in r.message for r in caplog.records)


def test_temperature_sensitivity():
    rng = np.random.default_rng(9)
    sim = rng.normal(size=(4, 4))
    np.fill_diagonal(sim, 0)
    pos = C.positives_mask(["A", "A", "B", "B"])
    v1 = C.supcon_loss_bruteforce(sim, pos, C.LossConfig(temperature=0.1))
    v2 = C.supcon_loss_bruteforce(sim, pos, C.LossConfig(temperature=1.0))
    assert v1 >= 0 and v2 >= 0 and v1 != v2


def test_invalid_temperature():
    with pytest.raises(ConfigError):
        C.LossConfig(temperature=0.0)


def test_loss_gradient_wrt_sim_entries():
    rng = np.random.default_rng(21)
    labels = np.array([0, 0, 1, 1, 2])
    pos = C.positives_mask(labels)
    cfg = C.LossConfig(temperature=0.5)

    def fn(tp, x):
        sim = tp.reshape(x, (5, 5))
        return C.supcon_loss(tp, sim, pos, cfg)

    assert grad_check(fn, rng.normal(size=25)) < 1e-4


def test_zero_dropout_repeats_collapse_to_duplicates():
    texts = [(toks("a b c"), 0), (toks("d e"), 1)]
    names = {0: toks("n0"), 1: toks("n1")}
    batch = C.build_batch(texts, names, 3, np.random.default_rng(0),
                          dropout_rate=0.0)
    assert batch.dropout_masks is None
    B2 = 2 * batch.base_size
    for rep in range(1, batch.repeats):
        assert np.array_equal(batch.ids[:B2], batch.ids[rep * B2:(rep + 1) * B2])

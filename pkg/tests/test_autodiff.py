import numpy as np
import pytest

from fewfit.autodiff import Tape, grad_check
from fewfit.errors import ContractError, DomainError, ShapeError


def test_mul_scalars():
    t = Tape()
    out = t.mul(t.leaf(2.0), t.leaf(3.0))
    assert out.value == 6.0


def test_max_axis_value_and_argmax():
    t = Tape()
    v = t.leaf(np.array([3.0, 1.0, 2.0]))
    m = t.max(v, axis=0)
    assert m.value == 3.0
    t.backward(m)
    assert np.array_equal(v.grad, [1.0, 0.0, 0.0])


def test_l2_normalize_3_4_5():
    t = Tape()
    out = t.l2_normalize(t.leaf(np.array([3.0, 4.0])))
    assert np.allclose(out.value, [0.6, 0.8])


def test_backward_product_rule():
    t = Tape()
    a, b = t.leaf(2.0), t.leaf(3.0)
    t.backward(t.mul(a, b))
    assert a.grad == 3.0 and b.grad == 2.0


def test_backward_l2_normalize_matches_finite_differences():
    t = Tape()
    v = t.leaf(np.array([1.0, 0.0]))
    t.backward(t.sum(t.l2_normalize(v)))
    assert np.allclose(v.grad, [0.0, 1.0], atol=1e-9)
    err = grad_check(
        lambda tp, x: tp.sum(tp.l2_normalize(x)), np.array([1.0, 0.0])
    )
    assert err < 1e-6


def test_max_tie_routes_to_lowest_index():
    t = Tape()
    v = t.leaf(np.array([2.0, 2.0]))
    t.backward(t.max(v, axis=0))
    assert np.array_equal(v.grad, [1.0, 0.0])


def test_grad_check_square():
    assert grad_check(
        lambda tp, x: tp.sum(tp.mul(x, x)), np.array([3.0]), eps=1e-5
    ) < 1e-6


def test_grad_check_log():
    assert grad_check(
        lambda tp, x: tp.sum(tp.log(x)), np.array([1.0])
    ) < 1e-6


def test_non_scalar_loss_rejected():
    t = Tape()
    v = t.leaf(np.array([1.0, 2.0]))
    with pytest.raises(ContractError):
        t.backward(v)


def test_shape_mismatch_raises():
    t = Tape()
    with pytest.raises(ShapeError):
        t.add(t.leaf(np.zeros(2)), t.leaf(np.zeros(3)))
    with pytest.raises(ShapeError):
        t.matmul(t.leaf(np.zeros((2, 3))), t.leaf(np.zeros((2, 3))))


def test_domain_errors():
    t = Tape()
    with pytest.raises(DomainError):
        t.log(t.leaf(np.array([0.0])))
    with pytest.raises(DomainError):
        t.div(t.leaf(np.ones(2)), t.leaf(np.array([1.0, 0.0])))


@pytest.mark.parametrize("seed", range(10))
def test_random_op_compositions_grad_check(seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(4, 4))
    gain = rng.normal(size=4)
    bias = rng.normal(size=4)
    mask = (rng.random((2, 4)) > 0.3).astype(float) / 0.7

    def fn2(tp, x):
        xm = tp.dropout(tp.reshape(x, (2, 4)), mask)
        h = tp.gelu(tp.matmul(xm, tp.constant(W)))
        h = tp.l2_normalize(
            tp.layernorm(h, tp.constant(gain), tp.constant(bias))
        )
        return tp.add(
            tp.sum(tp.max(h, axis=1)),
            tp.sum(tp.exp(tp.scale(tp.sum(h), 0.1))),
        )

    err = grad_check(fn2, rng.normal(size=8))
    assert err < 1e-4


def test_per_op_grad_check_many_random_inputs():
    rng = np.random.default_rng(0)
    other = rng.normal(size=(2, 3))
    denom = rng.normal(size=(2, 3)) + 3.0
    weight = rng.normal(size=(3, 2))
    factors = rng.normal(size=2)
    bias = rng.normal(size=3)
    cases = {
        "add": lambda tp, x: tp.sum(
            tp.add(tp.reshape(x, (2, 3)), tp.constant(other))
        ),
        "mul": lambda tp, x: tp.sum(
            tp.mul(tp.reshape(x, (2, 3)), tp.constant(other))
        ),
        "div": lambda tp, x: tp.sum(
            tp.div(tp.reshape(x, (2, 3)), tp.constant(denom))
        ),
        "matmul": lambda tp, x: tp.sum(
            tp.matmul(tp.reshape(x, (2, 3)), tp.constant(weight))
        ),
        "exp": lambda tp, x: tp.sum(tp.exp(x)),
        "gelu": lambda tp, x: tp.sum(tp.gelu(x)),
        "l2": lambda tp, x: tp.sum(tp.l2_normalize(tp.reshape(x, (2, 3)))),
        "sum_axis": lambda tp, x: tp.sum(
            tp.exp(tp.sum(tp.reshape(x, (2, 3)), axis=1))
        ),
        "max_axis": lambda tp, x: tp.sum(tp.max(tp.reshape(x, (2, 3)), axis=1)),
        "transpose": lambda tp, x: tp.sum(
            tp.exp(tp.transpose(tp.reshape(x, (2, 3))))
        ),
        "scale_rows": lambda tp, x: tp.sum(
            tp.scale_rows(tp.reshape(x, (2, 3)), tp.constant(factors))
        ),
        "add_bias": lambda tp, x: tp.sum(
            tp.exp(tp.add_bias(tp.reshape(x, (2, 3)), tp.constant(bias)))
        ),
    }
    for name, fn in cases.items():
        worst = 0.0
        for _ in range(10):
            worst = max(worst, grad_check(fn, rng.normal(size=6)))
        assert worst < 1e-4, name


def test_gradient_accumulation_linearity():
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=4)

    def f1(tp, x):
        return tp.sum(tp.mul(x, x))

    def f2(tp, x):
        return tp.sum(tp.gelu(x))

    def fsum(tp, x):
        return tp.add(f1(tp, x), f2(tp, x))

    def grad_of(fn):
        t = Tape()
        x = t.leaf(x0.copy())
        t.backward(fn(t, x))
        return x.grad

    assert np.allclose(grad_of(fsum), grad_of(f1) + grad_of(f2), atol=1e-12)


def test_dropout_all_ones_identity():
    rng = np.random.default_rng(4)
    x0 = rng.normal(size=(3, 2))
    t = Tape()
    x = t.leaf(x0.copy())
    out = t.dropout(x, np.ones_like(x0))
    loss = t.sum(t.mul(out, out))
    t.backward(loss)
    t2 = Tape()
    x2 = t2.leaf(x0.copy())
    loss2 = t2.sum(t2.mul(x2, x2))
    t2.backward(loss2)
    assert np.array_equal(out.value, x0)
    assert np.array_equal(x.grad, x2.grad)


def test_max_backward_one_hot_per_slice():
    rng = np.random.default_rng(5)
    t = Tape()
    x = t.leaf(rng.normal(size=(4, 5)))
    t.backward(t.sum(t.max(x, axis=1)))
    assert np.array_equal(x.grad.sum(axis=1), np.ones(4))
    assert set(np.unique(x.grad)) <= {0.0, 1.0}

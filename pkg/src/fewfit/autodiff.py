"""Minimal reverse-mode automatic differentiation over dense numpy tensors.

A Tape records a topologically ordered list of nodes; each node stores its
forward value and a closure that pushes the output gradient onto its inputs.
Backward visits nodes exactly once in reverse order.

Supported ops are exactly what the encoder, both similarity metrics, and the
contrastive loss need. There is no general broadcasting: elementwise ops
require equal shapes or a python scalar, bias addition is its own op.
"""

import math

import numpy as np
from scipy.special import erf as _erf

from .errors import ContractError, DomainError, ShapeError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Node:
    __slots__ = ("tape", "index", "value", "parents", "_backward", "grad")

    def __init__(self, tape, value, parents, backward):
        self.tape = tape
        self.index = len(tape.nodes)
        self.value = value
        self.parents = parents
        self._backward = backward
        self.grad = None
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Single-threaded op recorder. One tape per training worker."""

    def __init__(self):
        self.nodes = []

    # ---- leaves ----------------------------------------------------------

    def leaf(self, value, requires_grad=True):
        value = np.asarray(value)
        node = Node(self, value, (), None)
        node.grad = None if requires_grad else False
        return node

    def constant(self, value):
        return self.leaf(value, requires_grad=False)

    # ---- elementwise -----------------------------------------------------

    def add(self, a, b):
        self._check_same_shape("add", a, b)

        def backward(g, grads):
            grads[a] += g
            grads[b] += g

        return Node(self, a.value + b.value, (a, b), backward)

    def sub(self, a, b):
        self._check_same_shape("sub", a, b)

        def backward(g, grads):
            grads[a] += g
            grads[b] -= g

        return Node(self, a.value - b.value, (a, b), backward)

    def mul(self, a, b):
        self._check_same_shape("mul", a, b)
        av, bv = a.value, b.value

        def backward(g, grads):
            grads[a] += g * bv
            grads[b] += g * av

        return Node(self, av * bv, (a, b), backward)

    def div(self, a, b):
        self._check_same_shape("div", a, b)
        if np.any(b.value == 0):
            raise DomainError("division by zero")
        av, bv = a.value, b.value

        def backward(g, grads):
            grads[a] += g / bv
            grads[b] -= g * av / (bv * bv)

        return Node(self, av / bv, (a, b), backward)

    def scale(self, a, s):
        s = float(s)

        def backward(g, grads):
            grads[a] += g * s

        return Node(self, a.value * s, (a,), backward)

    def add_bias(self, a, b):
        # b is 1-D and matches a's last axis; gradient sums leading axes
        if b.value.ndim != 1 or a.value.shape[-1] != b.value.shape[0]:
            raise ShapeError(
                f"add_bias: {a.value.shape} with bias {b.value.shape}"
            )
        lead = tuple(range(a.value.ndim - 1))

        def backward(g, grads):
            grads[a] += g
            grads[b] += g.sum(axis=lead) if lead else g

        return Node(self, a.value + b.value, (a, b), backward)

    def exp(self, a):
        out = np.exp(a.value)

        def backward(g, grads):
            grads[a] += g * out

        return Node(self, out, (a,), backward)

    def log(self, a):
        if np.any(a.value <= 0):
            raise DomainError("log of non-positive value")
        av = a.value

        def backward(g, grads):
            grads[a] += g / av

        return Node(self, np.log(av), (a,), backward)

    def gelu(self, a):
        av = a.value
        phi = 0.5 * (1.0 + _erf(av / _SQRT2))
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * av * av)

        def backward(g, grads):
            grads[a] += g * (phi + av * pdf)

        return Node(self, av * phi, (a,), backward)

    def dropout(self, a, mask):
        """Multiply by an externally supplied mask array.

        The trainer bakes the 1/(1-p) inverted-dropout scale into the mask,
        so an all-ones mask is the exact identity in forward and backward.
        """
        mask = np.asarray(mask)
        if mask.shape != a.value.shape:
            raise ShapeError(
                f"dropout mask {mask.shape} vs input {a.value.shape}"
            )

        def backward(g, grads):
            grads[a] += g * mask

        return Node(self, a.value * mask, (a,), backward)

    def masked_fill(self, a, mask, fill):
        """Replace entries where boolean mask is True with a constant.

        Filled entries get zero gradient.
        """
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.value.shape:
            raise ShapeError(
                f"masked_fill mask {mask.shape} vs input {a.value.shape}"
            )
        out = np.where(mask, np.asarray(fill, dtype=a.value.dtype), a.value)

        def backward(g, grads):
            grads[a] += np.where(mask, 0.0, g)

        return Node(self, out, (a,), backward)

    def scale_rows(self, a, s):
        """Multiply along the last axis by a per-row factor.

        ``s`` has shape ``a.shape[:-1]``; explicit alternative to silent
        broadcasting.
        """
        av, sv = a.value, s.value
        if sv.shape != av.shape[:-1]:
            raise ShapeError(f"scale_rows: {av.shape} with factors {sv.shape}")
        se = sv[..., None]

        def backward(g, grads):
            grads[a] += g * se
            grads[s] += np.sum(g * av, axis=-1)

        return Node(self, av * se, (a, s), backward)

    # ---- shape ops -------------------------------------------------------

    def reshape(self, a, shape):
        shape = tuple(shape)
        if int(np.prod(shape)) != a.value.size:
            raise ShapeError(f"reshape {a.value.shape} -> {shape}")
        orig = a.value.shape

        def backward(g, grads):
            grads[a] += g.reshape(orig)

        return Node(self, a.value.reshape(shape), (a,), backward)

    def transpose(self, a, axes=None):
        if axes is None:
            axes = tuple(reversed(range(a.value.ndim)))
        axes = tuple(axes)
        inv = np.argsort(axes)

        def backward(g, grads):
            grads[a] += g.transpose(inv)

        return Node(self, a.value.transpose(axes), (a,), backward)

    # ---- reductions ------------------------------------------------------

    def sum(self, a, axis=None):
        av = a.value

        def backward(g, grads):
            if axis is None:
                grads[a] += np.full_like(av, g)
            else:
                grads[a] += np.broadcast_to(
                    np.expand_dims(g, axis), av.shape
                )

        return Node(self, av.sum(axis=axis), (a,), backward)

    def max(self, a, axis):
        """Max over one axis; subgradient routes to the first argmax."""
        av = a.value
        idx = np.argmax(av, axis=axis)  # first occurrence = lowest index
        out = np.take_along_axis(av, np.expand_dims(idx, axis), axis)

        def backward(g, grads):
            ga = np.zeros_like(av)
            np.put_along_axis(
                ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis
            )
            grads[a] += ga

        return Node(self, np.squeeze(out, axis=axis), (a,), backward)

    # ---- linear algebra --------------------------------------------------

    def matmul(self, a, b):
        av, bv = a.value, b.value
        if av.ndim < 1 or bv.ndim != 2 or av.shape[-1] != bv.shape[0]:
            raise ShapeError(f"matmul {av.shape} @ {bv.shape}")

        def backward(g, grads):
            grads[a] += g @ bv.T
            ga = av.reshape(-1, av.shape[-1])
            grads[b] += ga.T @ g.reshape(-1, g.shape[-1])

        return Node(self, av @ bv, (a, b), backward)

    def bmm(self, a, b):
        av, bv = a.value, b.value
        if av.ndim != 3 or bv.ndim != 3 or av.shape[-1] != bv.shape[-2]:
            raise ShapeError(f"bmm {av.shape} @ {bv.shape}")
        if av.shape[0] != bv.shape[0]:
            raise ShapeError(f"bmm batch {av.shape[0]} != {bv.shape[0]}")

        def backward(g, grads):
            grads[a] += g @ bv.transpose(0, 2, 1)
            grads[b] += av.transpose(0, 2, 1) @ g

        return Node(self, av @ bv, (a, b), backward)

    def gather_rows(self, table, ids):
        ids = np.asarray(ids)
        tv = table.value
        if tv.ndim != 2:
            raise ShapeError(f"gather_rows table must be 2-D, got {tv.shape}")

        def backward(g, grads):
            gt = np.zeros_like(tv)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, tv.shape[1]))
            grads[table] += gt

        return Node(self, tv[ids], (table,), backward)

    # ---- normalization ---------------------------------------------------

    def l2_normalize(self, a, eps=1e-12):
        """L2-normalize along the last axis; zero vectors map to zero."""
        av = a.value
        norm = np.sqrt(np.sum(av * av, axis=-1, keepdims=True))
        safe = np.maximum(norm, eps)
        out = av / safe

        def backward(g, grads):
            dot = np.sum(g * out, axis=-1, keepdims=True)
            grads[a] += (g - out * dot) / safe

        return Node(self, out, (a,), backward)

    def layernorm(self, a, gain, bias, eps=1e-5):
        av = a.value
        d = av.shape[-1]
        if gain.value.shape != (d,) or bias.value.shape != (d,):
            raise ShapeError("layernorm gain/bias must match last axis")
        mean = av.mean(axis=-1, keepdims=True)
        var = av.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (av - mean) * inv
        out = xhat * gain.value + bias.value
        lead = tuple(range(av.ndim - 1))

        def backward(g, grads):
            dxhat = g * gain.value
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            grads[a] += (dxhat - m1 - xhat * m2) * inv
            grads[gain] += (g * xhat).sum(axis=lead) if lead else g * xhat
            grads[bias] += g.sum(axis=lead) if lead else g

        return Node(self, out, (a, gain, bias), backward)

    # ---- backward --------------------------------------------------------

    def backward(self, loss):
        """Accumulate gradients of a scalar loss into every node's .grad."""
        if np.asarray(loss.value).ndim != 0:
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.shape}"
            )
        grads = _GradStore()
        grads[loss] += np.asarray(1.0, dtype=np.asarray(loss.value).dtype)
        for node in reversed(self.nodes[: loss.index + 1]):
            g = grads.pop(node)
            if g is None or node._backward is None:
                if g is not None and node.grad is not False:
                    node.grad = g
                continue
            node._backward(g, grads)
        return {
            n: n.grad
            for n in self.nodes
            if n._backward is None and n.grad is not False and n.grad is not None
        }

    # ---- helpers ---------------------------------------------------------

    @staticmethod
    def _check_same_shape(op, a, b):
        sa, sb = a.value.shape, b.value.shape
        if sa != sb and sa != () and sb != ():
            raise ShapeError(f"{op}: shapes {sa} and {sb} do not conform")


class _GradStore:
    """Gradient accumulator keyed by node identity."""

    def __init__(self):
        self._by_id = {}

    def __getitem__(self, node):
        return _GradSlot(self._by_id, node)

    def __setitem__(self, node, value):
        # `grads[n] += g` assigns the slot back; nothing to do
        if not isinstance(value, _GradSlot):
            raise TypeError("direct assignment not supported")

    def pop(self, node):
        return self._by_id.pop(id(node), (None, None))[1]


class _GradSlot:
    __slots__ = ("store", "node")

    def __init__(self, store, node):
        self.store = store
        self.node = node

    def __iadd__(self, g):
        key = id(self.node)
        cur = self.store.get(key)
        if cur is None:
            self.store[key] = (self.node, np.array(g, dtype=np.asarray(g).dtype))
        else:
            cur[1].__iadd__(g)
        return self

    def __isub__(self, g):
        return self.__iadd__(-np.asarray(g))


def grad_check(fn, point, eps=1e-6, max_coords=None, rng=None):
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps a flat f64 vector to a scalar Node on a fresh tape (it must
    also mark its input as the sole gradient leaf). Returns
    max_i |analytic_i - fd_i| / max(1e-8, |fd_i|) over the checked
    coordinates; ``max_coords`` limits the sweep to a random subset.
    """
    point = np.asarray(point, dtype=np.float64)
    if eps <= 0:
        raise ContractError("eps must be positive")

    tape = Tape()
    x = tape.leaf(point.copy())
    out = fn(tape, x)
    tape.backward(out)
    analytic = np.asarray(x.grad, dtype=np.float64).reshape(-1)

    coords = np.arange(point.size)
    if max_coords is not None and max_coords < point.size:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(point.size, size=max_coords, replace=False)

    def value_at(p):
        t = Tape()
        return float(fn(t, t.leaf(p)).value)

    worst = 0.0
    for i in coords:
        p_hi = point.copy()
        p_hi[i] += eps
        p_lo = point.copy()
        p_lo[i] -= eps
        fd = (value_at(p_hi) - value_at(p_lo)) / (2.0 * eps)
        err = abs(analytic[i] - fd) / max(1e-8, abs(fd))
        worst = max(worst, err)
    return worst

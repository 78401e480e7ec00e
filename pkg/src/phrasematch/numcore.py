"""Dense float64 matrices with reverse-mode gradient accumulation.

Every value is a 2-D numpy float64 array wrapped in a Node. Operations
record a backward rule on an explicit Tape; Tape.backward replays the
rules in exact reverse order and accumulates d(loss)/d(input) into every
node reachable from the loss, Parameters included. Passing tape=None
gives forward-only evaluation, safe to run concurrently.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "ContractError",
    "Node",
    "Parameter",
    "Tape",
    "AdamState",
    "adam_step",
    "backward",
    "zero_grads",
    "as_matrix",
    "check_finite",
    "constant",
    "perturb_gradient",
    "matmul",
    "sigmoid",
    "tanh",
    "hadamard",
    "add",
    "sub",
    "one_minus",
    "scale",
    "sum_all",
    "frob_sq",
    "select_rows",
    "vstack",
    "hstack",
    "cosine_rows",
    "inv_one_plus_dist",
    "diversity_penalty",
    "softmax_cross_entropy",
    "sigmoid_bce",
    "regularization_loss",
]


class DimensionError(ValueError):
    """Operand shapes do not fit the operation."""


class ContractError(ValueError):
    """An operation precondition was violated."""


# Gradient-rule mutations for checker self-tests: op name -> scale applied
# to the upstream gradient inside that op's backward rule. Normally empty.
GRAD_TWEAKS: dict[str, float] = {}


@contextmanager
def perturb_gradient(op_name: str, factor: float):
    """Deliberately corrupt one op's backward rule (mutation testing)."""
    GRAD_TWEAKS[op_name] = factor
    try:
        yield
    finally:
        GRAD_TWEAKS.pop(op_name, None)


def _tweak(name: str, g: np.ndarray) -> np.ndarray:
    f = GRAD_TWEAKS.get(name)
    return g if f is None else g * f


def as_matrix(data) -> np.ndarray:
    """Coerce to a 2-D float64 array; 1-D input becomes a single row."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={arr.ndim}")
    return arr


def check_finite(arr: np.ndarray, context: str = "matrix") -> None:
    if not np.isfinite(arr).all():
        raise ContractError(f"{context} contains non-finite entries")


class Node:
    """A matrix value in the computation graph. grad is filled lazily."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape


class Parameter(Node):
    """A named, trainable matrix with a persistent gradient buffer."""

    __slots__ = ("name", "trainable")

    def __init__(self, value, name: str, trainable: bool = True):
        arr = as_matrix(value).copy()
        check_finite(arr, f"parameter {name!r}")
        super().__init__(arr)
        self.grad = np.zeros_like(arr)
        self.name = name
        self.trainable = trainable

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def constant(data) -> Node:
    return Node(as_matrix(data))


class Tape:
    """Ordered record of backward rules for one forward pass."""

    __slots__ = ("_ops", "_produced")

    def __init__(self):
        self._ops: list = []
        self._produced: set[int] = set()

    def _record(self, backward_fn, out: Node) -> None:
        self._ops.append(backward_fn)
        self._produced.add(id(out))

    def __len__(self) -> int:
        return len(self._ops)

    def backward(self, loss: Node) -> None:
        """Accumulate d(loss)/d(input) into every node reachable from loss."""
        if loss.value.shape != (1, 1):
            raise ContractError(f"loss must be 1x1, got {loss.value.shape}")
        if id(loss) not in self._produced:
            raise ContractError("loss node was not produced on this tape")
        loss.grad = np.ones((1, 1))
        for fn in reversed(self._ops):
            fn()


def backward(tape: Tape, loss: Node) -> None:
    tape.backward(loss)


def _acc_owned(node: Node, g: np.ndarray) -> None:
    # g is a freshly allocated array the caller will not reuse.
    if node.grad is None:
        node.grad = g
    else:
        node.grad += g


def _acc_shared(node: Node, g: np.ndarray) -> None:
    # g may alias another node's grad buffer; copy on first assignment.
    if node.grad is None:
        node.grad = g.copy()
    else:
        node.grad += g


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a: Node, b: Node, tape: Tape | None = None) -> Node:
    """Matrix product; gradients dA = dC @ B^T, dB = A^T @ dC."""
    av, bv = a.value, b.value
    if av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    out = Node(av @ bv)
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("matmul", g)
            _acc_owned(a, g @ bv.T)
            _acc_owned(b, av.T @ g)
        tape._record(bw, out)
    return out


def _same_shape(name: str, *nodes: Node) -> None:
    first = nodes[0].value.shape
    for n in nodes[1:]:
        if n.value.shape != first:
            raise DimensionError(
                f"{name} shape mismatch: {first} vs {n.value.shape}")


def sigmoid(a: Node, tape: Tape | None = None) -> Node:
    with np.errstate(over="ignore"):
        out = Node(1.0 / (1.0 + np.exp(-a.value)))
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("sigmoid", g)
            v = out.value
            _acc_owned(a, g * (v * (1.0 - v)))
        tape._record(bw, out)
    return out


def tanh(a: Node, tape: Tape | None = None) -> Node:
    out = Node(np.tanh(a.value))
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("tanh", g)
            _acc_owned(a, g * (1.0 - out.value * out.value))
        tape._record(bw, out)
    return out


def hadamard(a: Node, b: Node, tape: Tape | None = None) -> Node:
    _same_shape("hadamard", a, b)
    out = Node(a.value * b.value)
    if tape is not None:
        av, bv = a.value, b.value
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("hadamard", g)
            _acc_owned(a, g * bv)
            _acc_owned(b, g * av)
        tape._record(bw, out)
    return out


def add(a: Node, b: Node, tape: Tape | None = None) -> Node:
    _same_shape("add", a, b)
    out = Node(a.value + b.value)
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("add", g)
            _acc_shared(a, g)
            _acc_shared(b, g)
        tape._record(bw, out)
    return out


def sub(a: Node, b: Node, tape: Tape | None = None) -> Node:
    _same_shape("sub", a, b)
    out = Node(a.value - b.value)
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("sub", g)
            _acc_shared(a, g)
            _acc_owned(b, -g)
        tape._record(bw, out)
    return out


def one_minus(a: Node, tape: Tape | None = None) -> Node:
    out = Node(1.0 - a.value)
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("one_minus", g)
            _acc_owned(a, -g)
        tape._record(bw, out)
    return out


def scale(a: Node, c: float, tape: Tape | None = None) -> Node:
    out = Node(c * a.value)
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("scale", g)
            _acc_owned(a, c * g)
        tape._record(bw, out)
    return out


def sum_all(a: Node, tape: Tape | None = None) -> Node:
    out = Node(np.array([[a.value.sum()]]))
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("sum_all", g)
            _acc_owned(a, np.full_like(a.value, g[0, 0]))
        tape._record(bw, out)
    return out


def frob_sq(a: Node, tape: Tape | None = None) -> Node:
    """Squared Frobenius norm as a 1x1 node."""
    out = Node(np.array([[float((a.value * a.value).sum())]]))
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("frob_sq", g)
            _acc_owned(a, (2.0 * g[0, 0]) * a.value)
        tape._record(bw, out)
    return out


def select_rows(a: Node, indices: Sequence[int], tape: Tape | None = None) -> Node:
    """Gather rows; gradients scatter back into the selected rows only."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size == 0:
        raise ContractError("select_rows needs at least one index")
    if idx.min() < 0 or idx.max() >= a.value.shape[0]:
        raise ContractError(f"row index out of range for {a.value.shape}")
    out = Node(a.value[idx])
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("select_rows", g)
            buf = np.zeros_like(a.value)
            np.add.at(buf, idx, g)
            _acc_owned(a, buf)
        tape._record(bw, out)
    return out


def vstack(nodes: Sequence[Node], tape: Tape | None = None) -> Node:
    if not nodes:
        raise ContractError("vstack of zero matrices")
    width = nodes[0].value.shape[1]
    for n in nodes[1:]:
        if n.value.shape[1] != width:
            raise DimensionError(
                f"vstack width mismatch: {width} vs {n.value.shape[1]}")
    out = Node(np.vstack([n.value for n in nodes]))
    if tape is not None:
        offsets = np.cumsum([0] + [n.value.shape[0] for n in nodes])
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("vstack", g)
            for n, lo, hi in zip(nodes, offsets[:-1], offsets[1:]):
                _acc_shared(n, g[lo:hi])
        tape._record(bw, out)
    return out


def hstack(nodes: Sequence[Node], tape: Tape | None = None) -> Node:
    if not nodes:
        raise ContractError("hstack of zero matrices")
    height = nodes[0].value.shape[0]
    for n in nodes[1:]:
        if n.value.shape[0] != height:
            raise DimensionError(
                f"hstack height mismatch: {height} vs {n.value.shape[0]}")
    out = Node(np.hstack([n.value for n in nodes]))
    if tape is not None:
        offsets = np.cumsum([0] + [n.value.shape[1] for n in nodes])
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("hstack", g)
            for n, lo, hi in zip(nodes, offsets[:-1], offsets[1:]):
                _acc_shared(n, g[:, lo:hi])
        tape._record(bw, out)
    return out


def cosine_rows(u: Node, v: Node, tape: Tape | None = None) -> Node:
    """Cosine of two row vectors; a zero-norm argument yields 0 (no gradient)."""
    _same_shape("cosine_rows", u, v)
    if u.value.shape[0] != 1:
        raise DimensionError("cosine_rows expects row vectors")
    uv, vv = u.value, v.value
    nu = float(np.sqrt((uv * uv).sum()))
    nv = float(np.sqrt((vv * vv).sum()))
    if nu == 0.0 or nv == 0.0:
        out = Node(np.zeros((1, 1)))
        if tape is not None:
            tape._record(lambda: None, out)
        return out
    c = float((uv * vv).sum()) / (nu * nv)
    out = Node(np.array([[c]]))
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("cosine_rows", g)
            g0 = g[0, 0]
            _acc_owned(u, g0 * (vv / (nu * nv) - (c / (nu * nu)) * uv))
            _acc_owned(v, g0 * (uv / (nu * nv) - (c / (nv * nv)) * vv))
        tape._record(bw, out)
    return out


def inv_one_plus_dist(u: Node, v: Node, tape: Tape | None = None) -> Node:
    """1 / (1 + ||u - v||) for row vectors; gradient 0 at the u == v cusp."""
    _same_shape("inv_one_plus_dist", u, v)
    d = u.value - v.value
    dist = float(np.sqrt((d * d).sum()))
    out = Node(np.array([[1.0 / (1.0 + dist)]]))
    if tape is not None:
        def bw():
            g = out.grad
            if g is None or dist == 0.0:
                return
            if GRAD_TWEAKS:
                g = _tweak("inv_one_plus_dist", g)
            denom = (1.0 + dist) * (1.0 + dist) * dist
            gd = (-g[0, 0] / denom) * d
            _acc_owned(u, gd)
            _acc_owned(v, -gd)
        tape._record(bw, out)
    return out


def diversity_penalty(m: Node, tape: Tape | None = None) -> Node:
    """Sum over row pairs i<j of cos^2(row_i, row_j); zero rows contribute 0."""
    mv = m.value
    norms = np.sqrt((mv * mv).sum(axis=1))
    nz = norms > 0.0
    normed = np.zeros_like(mv)
    normed[nz] = mv[nz] / norms[nz, None]
    gram = normed @ normed.T
    val = 0.5 * float((gram * gram).sum() - (np.diag(gram) ** 2).sum())
    out = Node(np.array([[val]]))
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("diversity_penalty", g)
            goff = gram.copy()
            np.fill_diagonal(goff, 0.0)
            dn = 2.0 * (goff @ normed)          # dP/d(normalized rows)
            # chain through row normalization: (I - n n^T) / ||row||
            proj = dn - (dn * normed).sum(axis=1, keepdims=True) * normed
            grad = np.zeros_like(mv)
            grad[nz] = proj[nz] / norms[nz, None]
            _acc_owned(m, g[0, 0] * grad)
        tape._record(bw, out)
    return out


def softmax_cross_entropy(logits: Node, label: int, tape: Tape | None = None) -> Node:
    """Cross-entropy of a 1xC logit row against an integer class label."""
    lv = logits.value
    if lv.shape[0] != 1:
        raise DimensionError("logits must be a single row")
    n_classes = lv.shape[1]
    if not 0 <= label < n_classes:
        raise ContractError(f"label {label} out of range for {n_classes} classes")
    shifted = lv - lv.max()
    exps = np.exp(shifted)
    total = exps.sum()
    probs = exps / total
    loss = float(math.log(total) - shifted[0, label])
    out = Node(np.array([[loss]]))
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("softmax_cross_entropy", g)
            dl = probs.copy()
            dl[0, label] -= 1.0
            _acc_owned(logits, g[0, 0] * dl)
        tape._record(bw, out)
    return out


def sigmoid_bce(logit: Node, target: float, tape: Tape | None = None) -> Node:
    """Binary cross-entropy on a 1x1 logit against a 0/1 target."""
    if logit.value.shape != (1, 1):
        raise DimensionError("sigmoid_bce expects a 1x1 logit")
    if target not in (0.0, 1.0):
        raise ContractError(f"binary target must be 0 or 1, got {target}")
    x = float(logit.value[0, 0])
    loss = max(x, 0.0) - x * target + math.log1p(math.exp(-abs(x)))
    out = Node(np.array([[loss]]))
    if tape is not None:
        def bw():
            g = out.grad
            if g is None:
                return
            if GRAD_TWEAKS:
                g = _tweak("sigmoid_bce", g)
            p = 1.0 / (1.0 + math.exp(-x))
            _acc_owned(logit, np.array([[g[0, 0] * (p - target)]]))
        tape._record(bw, out)
    return out


# ---------------------------------------------------------------------------
# optimizer and regularizers


class AdamState:
    """ADAM accumulators shared across a parameter list, keyed by name."""

    def __init__(self, lr: float = 0.0001, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self._moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def moments_for(self, p: Parameter) -> tuple[np.ndarray, np.ndarray]:
        pair = self._moments.get(p.name)
        if pair is None:
            pair = (np.zeros_like(p.value), np.zeros_like(p.value))
            self._moments[p.name] = pair
        return pair


def adam_step(state: AdamState, params: Iterable[Parameter]) -> None:
    """One bias-corrected ADAM update over the trainable parameters."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p in params:
        if not p.trainable:
            continue
        m, v = state.moments_for(p)
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.value -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


def regularization_loss(params: Sequence[Parameter], l2_coeff: float,
                        div_coeff: float,
                        diversity_params: Sequence[Parameter] = (),
                        tape: Tape | None = None) -> Node:
    """l2_coeff * sum of squared Frobenius norms over trainable params, plus
    div_coeff * sum of pairwise squared row cosines over diversity_params."""
    if l2_coeff < 0 or div_coeff < 0:
        raise ContractError("regularization coefficients must be >= 0")
    total = constant([[0.0]])
    if tape is not None:
        tape._record(lambda: None, total)
    if l2_coeff > 0.0:
        for p in params:
            if p.trainable:
                total = add(total, scale(frob_sq(p, tape), l2_coeff, tape), tape)
    if div_coeff > 0.0:
        for w in diversity_params:
            total = add(total, scale(diversity_penalty(w, tape), div_coeff, tape), tape)
    return total

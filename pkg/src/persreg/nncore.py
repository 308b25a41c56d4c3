"""Reverse-mode tape and the fully connected ReLU networks trained on it.

Values are float64 matrices.  Layer activations are stored units x batch, so a
batch of inputs is passed as a features x batch matrix and each dense layer
computes ``W @ x + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng

FloatArray = np.ndarray
Vjp = Callable[[FloatArray], Sequence[Optional[FloatArray]]]


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    hidden_layers: tuple[int, ...]
    output_dim: int
    activation: str = "relu"
    dropout_prob: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if not self.hidden_layers:
            raise ValueError("hidden_layers must be nonempty")
        if min(self.sizes) < 1:
            raise ValueError(f"all layer sizes must be >= 1, got {self.sizes}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError(f"dropout_prob must lie in [0, 1], got {self.dropout_prob}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.output_dim)

    @property
    def n_layers(self) -> int:
        """Number of non-input layers."""
        return len(self.hidden_layers) + 1


@dataclass
class Params:
    spec: MLPSpec
    weights: list[FloatArray]
    biases: list[FloatArray]
    vel_weights: list[FloatArray] = field(default_factory=list)
    vel_biases: list[FloatArray] = field(default_factory=list)

    def __post_init__(self):
        if not self.vel_weights:
            self.vel_weights = [np.zeros_like(w) for w in self.weights]
        if not self.vel_biases:
            self.vel_biases = [np.zeros_like(b) for b in self.biases]
        sizes = self.spec.sizes
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ValueError(f"layer {i}: shapes {w.shape}, {b.shape} inconsistent with {sizes}")

    def arrays(self) -> list[FloatArray]:
        """Parameter arrays in layer order: W0, b0, W1, b1, ..."""
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "Params":
        return Params(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [v.copy() for v in self.vel_weights],
            [v.copy() for v in self.vel_biases],
        )


@dataclass
class Grads:
    weights: list[FloatArray]
    biases: list[FloatArray]

    def arrays(self) -> list[FloatArray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def __add__(self, other: "Grads") -> "Grads":
        return Grads(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def scaled(self, s: float) -> "Grads":
        return Grads([s * w for w in self.weights], [s * b for b in self.biases])

    @classmethod
    def zeros_like(cls, params: Params) -> "Grads":
        return cls([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])


class Node:
    __slots__ = ("value", "grad", "parents", "vjp", "index")

    def __init__(self, value: FloatArray, parents: tuple["Node", ...] = (), vjp: Optional[Vjp] = None):
        self.value = value
        self.grad: Optional[FloatArray] = None
        self.parents = parents
        self.vjp = vjp
        self.index = -1

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape}, index={self.index})"


class Tape:
    """Operations in recording order.

    ``record`` appends, so a node's parents always precede it and ``backward``
    can sweep the list in reverse.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.weight_nodes: list[Node] = []
        self.bias_nodes: list[Node] = []

    def record(self, value, parents: Sequence[Node] = (), vjp: Optional[Vjp] = None) -> Node:
        node = Node(np.asarray(value, dtype=np.float64), tuple(parents), vjp)
        for p in node.parents:
            if p.index < 0 or p.index >= len(self.nodes) or self.nodes[p.index] is not p:
                raise ValueError("parent node does not belong to this tape")
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def leaf(self, value) -> Node:
        return self.record(value)

    def watch_params(self, params: Params) -> tuple[list[Node], list[Node]]:
        self.weight_nodes = [self.leaf(w) for w in params.weights]
        self.bias_nodes = [self.leaf(b) for b in params.biases]
        return self.weight_nodes, self.bias_nodes

    def backward(self, root: Node) -> None:
        if root.value.size != 1:
            raise ValueError(f"backward needs a scalar root, got shape {root.value.shape}")
        for node in self.nodes:
            node.grad = None
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes[: root.index + 1]):
            if node.grad is None or node.vjp is None:
                continue
            for parent, g in zip(node.parents, node.vjp(node.grad)):
                if g is None:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
        for node in self.nodes:
            if node.grad is None:
                node.grad = np.zeros_like(node.value)


def backward(tape: Tape, root: Node) -> Grads:
    """Run the reverse sweep from ``root`` and collect parameter gradients."""
    tape.backward(root)
    return Grads([n.grad.copy() for n in tape.weight_nodes], [n.grad.copy() for n in tape.bias_nodes])


# --- primitive ops -----------------------------------------------------------

def matmul(tape: Tape, a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    return tape.record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add_bias(tape: Tape, h: Node, b: Node) -> Node:
    return tape.record(h.value + b.value[:, None], (h, b), lambda g: (g, g.sum(axis=1)))


def add(tape: Tape, a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def scale(tape: Tape, a: Node, s: float) -> Node:
    return tape.record(s * a.value, (a,), lambda g: (s * g,))


def relu(tape: Tape, a: Node) -> Node:
    mask = a.value > 0
    return tape.record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def mul_const(tape: Tape, a: Node, c: FloatArray) -> Node:
    return tape.record(a.value * c, (a,), lambda g: (g * c,))


def stack_rows(tape: Tape, parts: Sequence[tuple[Node, np.ndarray]]) -> Node:
    """Concatenate selected rows of several nodes into one matrix."""
    parts = [(n, np.asarray(rows, dtype=np.intp)) for n, rows in parts if len(rows)]
    value = np.concatenate([n.value[rows] for n, rows in parts], axis=0)
    offsets = np.cumsum([0] + [len(rows) for _, rows in parts])

    def vjp(g):
        out = []
        for (n, rows), lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            gn = np.zeros_like(n.value)
            np.add.at(gn, rows, g[lo:hi])
            out.append(gn)
        return out

    return tape.record(value, [n for n, _ in parts], vjp)


# --- network -------------------------------------------------------------------

def init_params(spec: MLPSpec, seed: rng.SeedLike) -> Params:
    """Glorot-uniform weights, zero biases, zero velocities."""
    gen = rng.generator(seed, rng.INIT)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.sizes[:-1], spec.sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(gen.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Params(spec, weights, biases)


@dataclass
class ActivationCapture:
    """Per non-input layer, the units x batch activations used by the loss."""

    tape: Tape
    layers: list[Node]

    @property
    def values(self) -> list[FloatArray]:
        return [n.value for n in self.layers]

    @property
    def layer_ids(self) -> list[int]:
        return list(range(len(self.layers)))

    @property
    def batch_size(self) -> int:
        return self.layers[0].value.shape[1]

    @property
    def sizes(self) -> list[int]:
        return [n.value.shape[0] for n in self.layers]


def dropout_mask(shape, p: float, gen: np.random.Generator) -> FloatArray:
    """Inverted dropout: kept units scaled by 1 / (1 - p)."""
    if p >= 1.0:
        return np.zeros(shape)
    return (gen.random(shape) >= p) / (1.0 - p)


def forward(
    params: Params,
    batch_inputs: FloatArray,
    mode: str = "eval",
    dropout_seed: rng.SeedLike = 0,
    tape: Optional[Tape] = None,
) -> tuple[Node, ActivationCapture]:
    """Record a forward pass on ``tape`` (a fresh one by default).

    ``batch_inputs`` is features x batch.  Returns the logits node
    (classes x batch) and the capture of post-ReLU hidden activations and
    output logits; in train mode hidden activations are captured after the
    dropout mask, matching what the loss sees.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(batch_inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != params.spec.input_dim:
        raise ValueError(f"expected inputs of shape ({params.spec.input_dim}, batch), got {x.shape}")
    if x.shape[1] < 2:
        raise ValueError("a batch needs at least 2 examples")
    tape = Tape() if tape is None else tape
    w_nodes, b_nodes = tape.watch_params(params)
    p = params.spec.dropout_prob
    gen = rng.generator(dropout_seed, rng.DROPOUT) if mode == "train" and p > 0 else None

    h = tape.leaf(x)
    layers = []
    last = len(w_nodes) - 1
    for i, (w, b) in enumerate(zip(w_nodes, b_nodes)):
        h = add_bias(tape, matmul(tape, w, h), b)
        if i < last:
            h = relu(tape, h)
            if gen is not None:
                h = mul_const(tape, h, dropout_mask(h.shape, p, gen))
        layers.append(h)
    return h, ActivationCapture(tape, layers)


def predict(params: Params, inputs: FloatArray, batch_size: int = 4096) -> np.ndarray:
    """Eval-mode logits (classes x examples) for an examples x features matrix, no tape."""
    out = []
    for lo in range(0, len(inputs), batch_size):
        h = np.asarray(inputs[lo : lo + batch_size], dtype=np.float64).T
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            h = w @ h + b[:, None]
            if i < len(params.weights) - 1:
                h = np.maximum(h, 0.0)
        out.append(h)
    return np.concatenate(out, axis=1)


def hidden_activations(params: Params, inputs: FloatArray) -> FloatArray:
    """Eval-mode post-ReLU activations of all hidden units, stacked (units x examples)."""
    h = np.asarray(inputs, dtype=np.float64).T
    rows = []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(w @ h + b[:, None], 0.0)
        rows.append(h)
    return np.concatenate(rows, axis=0)


def accuracy(params: Params, inputs: FloatArray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(predict(params, inputs), axis=0) == labels))


# --- loss ------------------------------------------------------------------------

def _log_softmax(logits: FloatArray) -> FloatArray:
    shifted = logits - logits.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def cross_entropy(logits: FloatArray, labels) -> float:
    """Mean categorical cross entropy of classes x batch logits."""
    labels = np.asarray(labels, dtype=np.intp)
    logp = _log_softmax(np.asarray(logits, dtype=np.float64))
    if labels.min() < 0 or labels.max() >= logp.shape[0]:
        raise ValueError("label index out of range")
    return float(-np.mean(logp[labels, np.arange(labels.size)]))


def cce_loss(tape: Tape, logits: Node, labels) -> Node:
    labels = np.asarray(labels, dtype=np.intp)
    value = cross_entropy(logits.value, labels)
    n = labels.size

    def vjp(g):
        probs = np.exp(_log_softmax(logits.value))
        probs[labels, np.arange(n)] -= 1.0
        return (g * probs / n,)

    return tape.record(value, (logits,), vjp)


# --- optimisation ----------------------------------------------------------------

def sgd_momentum_step(params: Params, grads: Grads, lr: float, momentum: float = 0.9) -> Params:
    """Classical momentum, in place: ``v = momentum * v + g``; ``theta -= lr * v``."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    pairs = zip(
        params.weights + params.biases,
        params.vel_weights + params.vel_biases,
        grads.weights + grads.biases,
    )
    for theta, v, g in pairs:
        v *= momentum
        v += g
        theta -= lr * v
    return params


def lr_schedule(iteration: int, alpha0: float = 0.01, decay: float = 0.95, period: float = 3520.0) -> float:
    """``alpha0 * decay ** (iteration / period)`` with a real-valued exponent."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return alpha0 * decay ** (iteration / period)

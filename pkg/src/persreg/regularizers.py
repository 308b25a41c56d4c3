"""Regularization terms and their tape nodes.

The topological terms read the dimension-zero diagram of the selected
neurons; the correlation term ``C`` averages every nonzero ``|corr|``; ``L1``
and ``L2`` act on the parameters directly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import nncore, topology
from .nncore import ActivationCapture, Grads, Node, Params, Tape
from .topology import CorrelationMatrix, Diagram0, NeuronId

KINDS = ("none", "T1", "T2", "C", "L1", "L2")
TOPOLOGICAL = ("T1", "T2")
ACTIVATION_BASED = ("T1", "T2", "C")


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str = "none"
    omega: float = 0.0
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularizer {self.kind!r}; expected one of {KINDS}")
        if self.omega < 0 or self.alpha < 0 or self.beta < 0:
            raise ValueError("omega, alpha and beta must be >= 0")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.omega > 0


def _weights(diagram: Union[Diagram0, Sequence[float]]) -> np.ndarray:
    w = diagram.weights if isinstance(diagram, Diagram0) else np.asarray(diagram, dtype=np.float64)
    if w.size == 0:
        raise ValueError("empty diagram")
    return w


def t1(diagram) -> float:
    """Negative total persistence."""
    return -float(np.sum(_weights(diagram)))


def t2(diagram, alpha: float = 0.5, beta: float = 0.5) -> float:
    """``-alpha * mean + beta * std`` of the diagram weights (population std)."""
    w = _weights(diagram)
    return float(-alpha * w.mean() + beta * w.std())


def t1_weight_adjoint(diagram) -> np.ndarray:
    return -np.ones_like(_weights(diagram))


def t2_weight_adjoint(diagram, alpha: float = 0.5, beta: float = 0.5) -> np.ndarray:
    w = _weights(diagram)
    m = w.size
    sigma = w.std()
    grad = np.full(m, -alpha / m)
    if sigma > 0:
        grad += beta * (w - w.mean()) / (m * sigma)
    return grad


def _c_pairs(corr: CorrelationMatrix) -> np.ndarray:
    mask = corr.valid & (corr.values != 0)
    np.fill_diagonal(mask, False)
    return mask


def c_term(corr: CorrelationMatrix) -> float:
    """Mean ``|corr|`` over ordered pairs ``x != y`` with nonzero correlation; 0 if there are none."""
    if corr.size < 2:
        raise ValueError("need at least 2 neurons")
    mask = _c_pairs(corr)
    count = mask.sum()
    if count == 0:
        return 0.0
    return float(np.abs(corr.values[mask]).sum() / count)


def c_term_corr_adjoint(corr: CorrelationMatrix) -> np.ndarray:
    mask = _c_pairs(corr)
    count = mask.sum()
    if count == 0:
        return np.zeros_like(corr.values)
    return np.where(mask, np.sign(corr.values), 0.0) / count


def _flat_params(params) -> np.ndarray:
    arrays = params.arrays() if hasattr(params, "arrays") else [np.asarray(p, dtype=np.float64) for p in params]
    if not arrays:
        return np.zeros(0)
    return np.concatenate([np.ravel(a) for a in arrays])


def l1(params) -> float:
    """Sum of absolute values of all weights and biases."""
    return float(np.abs(_flat_params(params)).sum())


def l2(params) -> float:
    """Sum of squares of all weights and biases."""
    flat = _flat_params(params)
    return float(flat @ flat)


# --- tape nodes ------------------------------------------------------------------

def topological_node(tape: Tape, acts: Node, kind: str, alpha: float = 0.5, beta: float = 0.5) -> Node:
    """T1 or T2 of the diagram of ``acts`` (neurons x batch) as a scalar node."""
    corr, d = topology.dissimilarity_matrix(acts.value)
    diagram = topology.mst_diagram(d)
    if kind == "T1":
        value, w_adj = t1(diagram), t1_weight_adjoint(diagram)
    elif kind == "T2":
        value, w_adj = t2(diagram, alpha, beta), t2_weight_adjoint(diagram, alpha, beta)
    else:
        raise ValueError(f"{kind!r} is not a topological term")
    d_adj = topology.diagram_adjoint(diagram, w_adj)

    def vjp(g):
        return (float(g) * topology.correlation_adjoint(d_adj, acts.value, corr),)

    return tape.record(value, (acts,), vjp)


def c_term_node(tape: Tape, acts: Node) -> Node:
    corr = topology.correlation_matrix(acts.value)
    if corr.size < 2:
        raise ValueError("need at least 2 neurons")
    corr_adj = c_term_corr_adjoint(corr)

    def vjp(g):
        return (float(g) * topology.corr_pullback(corr_adj, acts.value, corr),)

    return tape.record(c_term(corr), (acts,), vjp)


def _param_nodes(tape: Tape) -> list[Node]:
    return [n for pair in zip(tape.weight_nodes, tape.bias_nodes) for n in pair]


def l1_node(tape: Tape) -> Node:
    nodes = _param_nodes(tape)
    value = sum(float(np.abs(n.value).sum()) for n in nodes)
    return tape.record(value, nodes, lambda g: [float(g) * np.sign(n.value) for n in nodes])


def l2_node(tape: Tape) -> Node:
    nodes = _param_nodes(tape)
    value = sum(float((n.value**2).sum()) for n in nodes)
    return tape.record(value, nodes, lambda g: [2.0 * float(g) * n.value for n in nodes])


def selected_activations(tape: Tape, capture: ActivationCapture, selected: Sequence[NeuronId]) -> Node:
    by_layer: dict[int, list[int]] = {}
    for n in selected:
        by_layer.setdefault(n.layer, []).append(n.unit)
    return nncore.stack_rows(tape, [(capture.layers[layer], units) for layer, units in by_layer.items()])


def regularizer_node(
    spec: RegularizerSpec,
    capture: Optional[ActivationCapture],
    selected: Optional[Sequence[NeuronId]],
    tape: Optional[Tape] = None,
) -> Node:
    """Record the chosen term on the capture's tape."""
    if spec.kind == "none":
        raise ValueError("kind 'none' has no regularizer value")
    tape = capture.tape if tape is None else tape
    if spec.kind == "L1":
        return l1_node(tape)
    if spec.kind == "L2":
        return l2_node(tape)
    if selected is None or len(selected) < 2:
        raise ValueError(f"{spec.kind} needs at least 2 selected neurons")
    acts = selected_activations(tape, capture, selected)
    if spec.kind == "C":
        return c_term_node(tape, acts)
    return topological_node(tape, acts, spec.kind, spec.alpha, spec.beta)


def regularizer_value_and_grad(
    spec: RegularizerSpec,
    capture: Optional[ActivationCapture],
    selected: Optional[Sequence[NeuronId]],
    params: Params,
) -> tuple[float, Grads]:
    """Value of the term and its gradient with respect to every parameter.

    ``capture`` must come from a forward pass of ``params``; for L1/L2 it may
    be ``None``.
    """
    if capture is None:
        if spec.kind not in ("L1", "L2"):
            raise ValueError(f"{spec.kind} needs an activation capture")
        tape = Tape()
        tape.watch_params(params)
    else:
        tape = capture.tape
    root = regularizer_node(spec, capture, selected, tape)
    return float(root.value), nncore.backward(tape, root)

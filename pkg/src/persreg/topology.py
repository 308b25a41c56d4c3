"""Correlation dissimilarities between neurons and their dimension-zero diagram.

The zero-dimensional Vietoris-Rips diagram of a finite dissimilarity space is
the multiset of edge weights of a minimum spanning tree of its clique, so
``mst_diagram`` runs Kruskal and keeps the edge that produced each weight.
That provenance is what ``diagram_adjoint`` routes cotangents through.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np

#: pairs whose product of centred sums of squares falls below this are invalid
VARIANCE_FLOOR = 1e-24
BRUTE_FORCE_MAX_VERTICES = 8


class NeuronId(NamedTuple):
    layer: int
    unit: int


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    valid: np.ndarray

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass
class DissimilarityMatrix:
    values: np.ndarray

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass
class Diagram0:
    """MST edge weights in ascending order, with the ``(i, j)`` edge (i < j) of each."""

    weights: np.ndarray
    edges: np.ndarray
    n_vertices: int

    def __len__(self) -> int:
        return len(self.weights)


def sample_correlation(x, y) -> float:
    """Pearson correlation of two samples; ``nan`` when either has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"need two vectors of equal length, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx, syy = xc @ xc, yc @ yc
    if sxx * syy <= VARIANCE_FLOOR:
        return math.nan
    return float(np.clip((xc @ yc) / (math.sqrt(sxx) * math.sqrt(syy)), -1.0, 1.0))


def _normalised_rows(acts: np.ndarray):
    centred = acts - acts.mean(axis=1, keepdims=True)
    ss = np.einsum("ij,ij->i", centred, centred)
    norms = np.sqrt(ss)
    safe = np.where(norms > 0, norms, 1.0)
    units = np.where((norms > 0)[:, None], centred / safe[:, None], 0.0)
    return units, norms, ss


def correlation_matrix(acts) -> CorrelationMatrix:
    """Pairwise correlations of the rows of a neurons x batch matrix."""
    acts = np.asarray(acts, dtype=np.float64)
    if acts.ndim != 2 or acts.shape[1] < 2:
        raise ValueError(f"need a neurons x batch matrix with batch >= 2, got {acts.shape}")
    units, _, ss = _normalised_rows(acts)
    corr = units @ units.T
    # mirror the upper triangle so the matrix is exactly symmetric
    corr = np.triu(corr) + np.triu(corr, 1).T
    np.clip(corr, -1.0, 1.0, out=corr)
    valid = np.outer(ss, ss) > VARIANCE_FLOOR
    corr[~valid] = 0.0
    np.fill_diagonal(corr, np.where(np.diag(valid), 1.0, 0.0))
    return CorrelationMatrix(corr, valid)


def dissimilarity_matrix(acts) -> tuple[CorrelationMatrix, DissimilarityMatrix]:
    """``d = 1 - |corr|``; pairs involving a zero-variance neuron get ``d = 1``."""
    acts = np.asarray(acts, dtype=np.float64)
    if acts.ndim != 2 or acts.shape[0] < 2:
        raise ValueError("need at least 2 neurons")
    corr = correlation_matrix(acts)
    d = np.where(corr.valid, 1.0 - np.abs(corr.values), 1.0)
    np.fill_diagonal(d, 0.0)
    return corr, DissimilarityMatrix(d)


def gather(capture_values: Sequence[np.ndarray], selected: Sequence[NeuronId]) -> np.ndarray:
    """Rows of the captured layers for the selected neurons, in selection order."""
    return np.stack([capture_values[n.layer][n.unit] for n in selected])


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def _as_square(d) -> np.ndarray:
    values = d.values if isinstance(d, DissimilarityMatrix) else np.asarray(d, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"dissimilarity must be square, got {values.shape}")
    if values.shape[0] < 2:
        raise ValueError("need at least 2 vertices")
    return values


def mst_diagram(d) -> Diagram0:
    """Kruskal's algorithm over the clique.

    Edges are scanned by ascending weight, ties broken by lexicographic
    ``(i, j)`` order, so the chosen tree is deterministic.
    """
    values = _as_square(d)
    c = values.shape[0]
    iu, ju = np.triu_indices(c, 1)
    w = values[iu, ju]
    order = np.argsort(w, kind="stable")
    uf = UnionFind(c)
    picked = []
    for e in order:
        if uf.union(int(iu[e]), int(ju[e])):
            picked.append(e)
            if len(picked) == c - 1:
                break
    picked = np.array(picked, dtype=np.intp)
    return Diagram0(w[picked], np.stack([iu[picked], ju[picked]], axis=1), c)


def _prufer_decode(seq: Sequence[int], c: int) -> list[tuple[int, int]]:
    degree = [1] * c
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = next(u for u in range(c) if degree[u] == 1)
        edges.append((min(leaf, v), max(leaf, v)))
        degree[leaf] -= 1
        degree[v] -= 1
    u, v = [x for x in range(c) if degree[x] == 1]
    edges.append((u, v))
    return edges


@lru_cache(maxsize=None)
def _all_spanning_trees(c: int) -> tuple[np.ndarray, np.ndarray]:
    """Every labelled spanning tree of K_c (Cayley: c**(c-2) of them), as edge endpoint arrays."""
    if c == 2:
        trees = [[(0, 1)]]
    else:
        trees = [_prufer_decode(seq, c) for seq in itertools.product(range(c), repeat=c - 2)]
    arr = np.array(trees, dtype=np.intp)
    return arr[..., 0], arr[..., 1]


def diagram_brute_force(d) -> Diagram0:
    """Minimum spanning tree by enumerating all spanning trees (test oracle)."""
    values = _as_square(d)
    c = values.shape[0]
    if c > BRUTE_FORCE_MAX_VERTICES:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_VERTICES} vertices, got {c}")
    ii, jj = _all_spanning_trees(c)
    tree_weights = values[ii, jj]
    best = int(np.argmin(tree_weights.sum(axis=1)))
    order = np.argsort(tree_weights[best], kind="stable")
    edges = np.stack([ii[best][order], jj[best][order]], axis=1)
    return Diagram0(tree_weights[best][order], edges, c)


def diagram_adjoint(diagram: Diagram0, weight_adjoints) -> np.ndarray:
    """Spread each diagram weight's cotangent over its MST edge, half to ``(i, j)`` and half to ``(j, i)``."""
    adj = np.asarray(weight_adjoints, dtype=np.float64)
    if adj.shape != (len(diagram),):
        raise ValueError(f"expected {len(diagram)} weight adjoints, got shape {adj.shape}")
    c = diagram.n_vertices
    out = np.zeros((c, c))
    i, j = diagram.edges[:, 0], diagram.edges[:, 1]
    np.add.at(out, (i, j), 0.5 * adj)
    np.add.at(out, (j, i), 0.5 * adj)
    return out


def corr_pullback(
    corr_adjoints,
    acts,
    corr: Optional[CorrelationMatrix] = None,
) -> np.ndarray:
    """Pull a cotangent on the correlation matrix back to the activations.

    Invalid pairs and the diagonal carry no gradient.
    """
    acts = np.asarray(acts, dtype=np.float64)
    g = np.asarray(corr_adjoints, dtype=np.float64)
    if corr is None:
        corr = correlation_matrix(acts)
    g = np.where(corr.valid, g, 0.0)
    np.fill_diagonal(g, 0.0)
    units, norms, _ = _normalised_rows(acts)
    g_units = (g + g.T) @ units
    radial = np.einsum("ij,ij->i", units, g_units)
    safe = np.where(norms > 0, norms, 1.0)
    g_centred = np.where((norms > 0)[:, None], (g_units - units * radial[:, None]) / safe[:, None], 0.0)
    return g_centred - g_centred.mean(axis=1, keepdims=True)


def correlation_adjoint(d_adjoints, acts, corr: Optional[CorrelationMatrix] = None) -> np.ndarray:
    """Pull a cotangent on ``d = 1 - |corr|`` back to the activations.

    ``|corr|`` takes subgradient 0 where ``corr == 0``.
    """
    acts = np.asarray(acts, dtype=np.float64)
    if corr is None:
        corr = correlation_matrix(acts)
    g_corr = -np.sign(corr.values) * np.asarray(d_adjoints, dtype=np.float64)
    return corr_pullback(g_corr, acts, corr)

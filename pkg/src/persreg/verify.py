"""Self-checks: oracle agreement, finite-difference gradients, term values and statistics fixtures.

Each ``check_*`` function returns one or more :class:`CheckResult`; the
``verify`` subcommand runs them all and the acceptance tests assert on them.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import nncore, regularizers, stats, topology
from .nncore import Grads, MLPSpec, Params
from .regularizers import RegularizerSpec
from .sampler import SamplerConfig, select_neurons


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def random_dissimilarity(c: int, gen: np.random.Generator) -> np.ndarray:
    upper = np.triu(gen.uniform(0.0, 1.0, size=(c, c)), 1)
    return upper + upper.T


# --- gradient checking -----------------------------------------------------------

def numerical_grads(fn: Callable[[Params], float], params: Params, h: float = 1e-6) -> Grads:
    """Central differences of ``fn`` in every parameter entry (``params`` is restored)."""
    out = []
    for arr in params.arrays():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            f_plus = fn(params)
            arr[idx] = orig - h
            f_minus = fn(params)
            arr[idx] = orig
            g[idx] = (f_plus - f_minus) / (2 * h)
        out.append(g)
    return Grads(out[0::2], out[1::2])


def gradient_mismatch(analytic: Grads, numeric: Grads, rtol: float, atol: float) -> tuple[bool, float]:
    """All entries satisfy ``|a - n| <= max(atol, rtol * max(|a|, |n|))``; also returns the worst ratio."""
    worst = 0.0
    for a, n in zip(analytic.arrays(), numeric.arrays()):
        tol = np.maximum(atol, rtol * np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float(np.max(np.abs(a - n) / tol)) if a.size else 0.0)
    return worst <= 1.0, worst


def regularizer_value(params: Params, x: np.ndarray, spec: RegularizerSpec, sampler: SamplerConfig) -> float:
    _, capture = nncore.forward(params, x, "eval")
    selected = select_neurons(capture, sampler) if spec.kind in regularizers.ACTIVATION_BASED else None
    return float(regularizers.regularizer_node(spec, capture, selected).value)


def regularizer_grads(params: Params, x: np.ndarray, spec: RegularizerSpec, sampler: SamplerConfig):
    _, capture = nncore.forward(params, x, "eval")
    selected = select_neurons(capture, sampler) if spec.kind in regularizers.ACTIVATION_BASED else None
    return regularizers.regularizer_value_and_grad(spec, capture, selected, params)


def random_network(gen: np.random.Generator, sizes: Sequence[int]) -> Params:
    spec = MLPSpec(sizes[0], tuple(sizes[1:-1]), sizes[-1])
    params = nncore.init_params(spec, int(gen.integers(2**31)))
    for b in params.biases:
        b[:] = 0.1 * gen.standard_normal(b.shape)
    return params


def check_gradients(n_configs: int = 50, seed: int = 0, terms: Sequence[str] = ("T1", "T2", "C"),
                    h: float = 1e-6, rtol: float = 1e-4, atol: float = 1e-8) -> CheckResult:
    def run():
        gen = np.random.default_rng(seed)
        sampler = SamplerConfig("full")
        worst, failures = 0.0, []
        for k in range(n_configs):
            sizes = (2, 4, 3) if k % 2 == 0 else (3, 5, 5, 2)
            params = random_network(gen, sizes)
            x = gen.standard_normal((sizes[0], int(gen.integers(8, 17))))
            for kind in terms:
                spec = RegularizerSpec(kind, 1.0, 0.5, 0.5)
                _, analytic = regularizer_grads(params, x, spec, sampler)
                numeric = numerical_grads(lambda p: regularizer_value(p, x, spec, sampler), params, h)
                ok, ratio = gradient_mismatch(analytic, numeric, rtol, atol)
                worst = max(worst, ratio)
                if not ok:
                    failures.append(f"config {k} {kind} {sizes}: ratio {ratio:.3g}")
        detail = f"{n_configs} configs x {len(terms)} terms, worst error/tolerance {worst:.3g}"
        if failures:
            detail += "; " + "; ".join(failures[:5])
        return not failures, detail

    return _timed("gradient checks (T1, T2, C vs central differences)", run)


# --- topology ------------------------------------------------------------------

def check_mst_oracle(n_matrices: int = 200, c_min: int = 3, c_max: int = 7, seed: int = 0) -> CheckResult:
    def run():
        gen = np.random.default_rng(seed)
        bad = 0
        for _ in range(n_matrices):
            d = random_dissimilarity(int(gen.integers(c_min, c_max + 1)), gen)
            fast = np.sort(topology.mst_diagram(d).weights)
            slow = np.sort(topology.diagram_brute_force(d).weights)
            bad += not np.array_equal(fast, slow)
        return bad == 0, f"{n_matrices - bad}/{n_matrices} matrices with identical sorted weights"

    return _timed("MST diagram == brute-force spanning-tree enumeration", run)


def check_cut_property(n_matrices: int = 1000, seed: int = 0) -> CheckResult:
    def run():
        gen = np.random.default_rng(seed)
        bad = []
        for t in range(n_matrices):
            c, n = int(gen.integers(10, 51)), int(gen.integers(8, 65))
            corr, d = topology.dissimilarity_matrix(gen.standard_normal((c, n)))
            diagram = topology.mst_diagram(d)
            off = ~np.eye(c, dtype=bool)
            expected = 1.0 - np.abs(corr.values[off]).max()
            if len(diagram) != c - 1 or diagram.weights.min() != expected:
                bad.append(t)
        return not bad, f"{n_matrices - len(bad)}/{n_matrices} matrices satisfy min weight == 1 - max|corr| and |D| == c - 1"

    return _timed("cut property and diagram cardinality", run)


def check_closed_forms() -> CheckResult:
    def run():
        w = np.array([0.2, 0.3, 0.4])
        v1 = regularizers.t1(w)
        v2 = regularizers.t2(w, 0.5, 0.5)
        expected_t2 = -0.5 * 0.3 + 0.5 * np.sqrt(0.02 / 3)
        rho = np.array([[1.0, 0.5, -0.25], [0.5, 1.0, 0.0], [-0.25, 0.0, 1.0]])
        vc = regularizers.c_term(topology.CorrelationMatrix(rho, np.ones_like(rho, dtype=bool)))
        ok = v1 == -0.9 and abs(v2 - expected_t2) <= 1e-9 and abs(v2 + 0.1091752) < 1e-7 and vc == 0.375
        return ok, f"T1={v1!r} T2={v2:.10f} C={vc!r}"

    return _timed("closed-form term values", run)


# --- statistics ------------------------------------------------------------------

PUBLISHED_RANKS = {"T2": 1.727, "T1": 2.182, "L2": 3.727, "C": 4.091, "L1": 4.545, "none": 4.727}
PUBLISHED_NEMENYI = {("none", "T1"): 0.018, ("none", "T2"): 0.002, ("T1", "L1"): 0.036,
                 ("T2", "C"): 0.036, ("T2", "L1"): 0.006}


def _fixture_checks(ranks: stats.RankTable, label: str) -> list[CheckResult]:
    idx = {m: i for i, m in enumerate(ranks.methods)}
    results = []

    def avg_ranks():
        avg = ranks.average_ranks
        diffs = {m: avg[idx[m]] - r for m, r in PUBLISHED_RANKS.items()}
        worst = max(abs(v) for v in diffs.values())
        got = ", ".join(f"{m}={avg[idx[m]]:.3f}" for m in PUBLISHED_RANKS)
        return worst <= 0.001, f"{got}; max deviation {worst:.4f} (tolerance 0.001)"

    def friedman_p():
        fr = stats.friedman(ranks)
        ok = any(0.9e-5 <= p <= 1.2e-5 for p in (fr.chi2_p, fr.iman_davenport_p))
        return ok, f"chi2={fr.chi2:.4f} p={fr.chi2_p:.4g}; Iman-Davenport F={fr.iman_davenport_f:.4f} p={fr.iman_davenport_p:.4g} (target [9e-06, 1.2e-05])"

    def nemenyi_p():
        p = stats.nemenyi(ranks)
        methods, published = stats.published_nemenyi()
        notes, ok = [], True
        for (a, b), target in PUBLISHED_NEMENYI.items():
            v = p[idx[a], idx[b]]
            hit = abs(v - target) <= 0.005
            ok &= hit
            notes.append(f"{a}-{b} {v:.4f}~{target}{'' if hit else ' MISS'}")
        for i, a in enumerate(methods):
            for j, b in enumerate(methods):
                if j > i and published[i, j] == 0.9:
                    v = p[idx[a], idx[b]]
                    ok &= v >= 0.9
                    if v < 0.9:
                        notes.append(f"{a}-{b} {v:.4f} < 0.9")
        return ok, "; ".join(notes)

    def groups():
        cd = stats.cd_diagram_data(ranks, 0.05)
        _, _, published = stats.published_ranks()
        got = {frozenset(g) for g in cd.groups}
        want = {frozenset(g) for g in published}
        return got == want, f"groups {[sorted(g) for g in cd.groups]} vs published {[sorted(g) for g in published]}"

    for name, fn in (("a) average ranks", avg_ranks), ("b) Friedman p-value", friedman_p),
                     ("c) Nemenyi p-values", nemenyi_p), ("d) CD groups", groups)):
        results.append(_timed(f"stats {label} {name}", fn))
    return results


def check_stats_fixture() -> list[CheckResult]:
    """Statistics computed from the bundled published accuracy CSV."""
    return _fixture_checks(stats.rank_table(stats.published_accuracies()), "[accuracy CSV]")


def check_published_rank_pipeline() -> list[CheckResult]:
    """Friedman, Nemenyi and groups recomputed from the published average ranks themselves."""
    methods, avg, _ = stats.published_ranks()
    ranks = stats.RankTable.from_average_ranks(methods, avg, 11)
    return _fixture_checks(ranks, "[published ranks]")[1:]


def run_all() -> list[CheckResult]:
    results = [check_mst_oracle(), check_gradients(), check_closed_forms()]
    results += check_stats_fixture()
    results += check_published_rank_pipeline()
    results.append(check_cut_property())
    return results

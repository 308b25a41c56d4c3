"""Friedman test, Nemenyi post-hoc and critical-difference groupings over accuracy tables.

Ranks follow the usual convention for comparing learners over several
datasets: within each network the best accuracy gets rank 1 and ties share
their average rank.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, stats as sps


@dataclass
class AccuracyTable:
    methods: list[str]
    networks: list[str]
    accuracies: np.ndarray  # methods x networks

    def __post_init__(self):
        self.accuracies = np.asarray(self.accuracies, dtype=np.float64)
        if self.accuracies.shape != (len(self.methods), len(self.networks)):
            raise ValueError(f"accuracy matrix {self.accuracies.shape} does not match "
                             f"{len(self.methods)} methods x {len(self.networks)} networks")
        if np.isnan(self.accuracies).any():
            raise ValueError("accuracy table has missing entries")


@dataclass
class RankTable:
    methods: list[str]
    networks: list[str]
    ranks: np.ndarray  # methods x networks

    @property
    def k(self) -> int:
        return len(self.methods)

    @property
    def n(self) -> int:
        return len(self.networks)

    @property
    def average_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=1)

    @classmethod
    def from_average_ranks(cls, methods: Sequence[str], average_ranks, n_networks: int) -> "RankTable":
        """A table whose only content is its average ranks (every column identical to them).

        Friedman and Nemenyi depend on the ranks only through their averages,
        so this is enough to recompute both from published average ranks.
        """
        avg = np.asarray(average_ranks, dtype=np.float64)
        return cls(list(methods), [str(i) for i in range(n_networks)], np.repeat(avg[:, None], n_networks, axis=1))


@dataclass
class FriedmanResult:
    chi2: float
    chi2_p: float
    iman_davenport_f: float
    iman_davenport_p: float
    df_num: int
    df_den: int


def rank_table(acc: AccuracyTable) -> RankTable:
    k, n = acc.accuracies.shape
    if k < 2 or n < 2:
        raise ValueError("need at least 2 methods and 2 networks")
    ranks = np.column_stack([sps.rankdata(-acc.accuracies[:, j], method="average") for j in range(n)])
    return RankTable(list(acc.methods), list(acc.networks), ranks)


def friedman(ranks: RankTable) -> FriedmanResult:
    """Friedman chi-square on the average ranks and its Iman-Davenport F correction."""
    k, n = ranks.k, ranks.n
    r = ranks.average_ranks
    chi2 = 12.0 * n / (k * (k + 1)) * (np.sum(r**2) - k * (k + 1) ** 2 / 4.0)
    chi2 = max(float(chi2), 0.0)
    df_num, df_den = k - 1, (k - 1) * (n - 1)
    denom = n * (k - 1) - chi2
    f = chi2 * (n - 1) / denom if denom > 0 else math.inf
    return FriedmanResult(
        chi2=chi2,
        chi2_p=float(sps.chi2.sf(chi2, df_num)),
        iman_davenport_f=float(f),
        iman_davenport_p=float(sps.f.sf(f, df_num, df_den)) if math.isfinite(f) else 0.0,
        df_num=df_num,
        df_den=df_den,
    )


def studentized_range_cdf(q: float, k: int, epsabs: float = 1e-8) -> float:
    """P(range of k iid standard normals <= q), i.e. infinite degrees of freedom.

    ``k * integral phi(z) (Phi(z) - Phi(z - q))**(k - 1) dz``.
    """
    if q <= 0:
        return 0.0

    def integrand(z):
        return sps.norm.pdf(z) * (sps.norm.cdf(z) - sps.norm.cdf(z - q)) ** (k - 1)

    value, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=epsabs, epsrel=1e-10, limit=200)
    return float(min(max(k * value, 0.0), 1.0))


def nemenyi(ranks: RankTable) -> np.ndarray:
    """Pairwise Nemenyi p-values (``nan`` on the diagonal)."""
    k, n = ranks.k, ranks.n
    r = ranks.average_ranks
    se = math.sqrt(k * (k + 1) / (6.0 * n))
    p = np.full((k, k), np.nan)
    cache: dict[float, float] = {}
    for i in range(k):
        for j in range(i + 1, k):
            diff = abs(r[i] - r[j])
            key = round(diff, 12)
            if key not in cache:
                cache[key] = 1.0 - studentized_range_cdf(diff / se * math.sqrt(2.0), k)
            p[i, j] = p[j, i] = cache[key]
    return p


@dataclass
class CDDiagram:
    methods: list[str]
    positions: np.ndarray
    groups: list[list[str]]
    alpha: float

    def to_text(self) -> str:
        """Plain-text description: one ``method<TAB>position<TAB>groups`` line per method."""
        lines = [f"# cd-diagram alpha={self.alpha}", "method\tposition\tgroups"]
        order = np.argsort(self.positions, kind="stable")
        for i in order:
            m = self.methods[i]
            member = [str(g) for g, members in enumerate(self.groups) if m in members]
            lines.append(f"{m}\t{self.positions[i]:.6f}\t{','.join(member)}")
        for g, members in enumerate(self.groups):
            lines.append(f"# group {g}: {' '.join(members)}")
        return "\n".join(lines) + "\n"


def cd_diagram_data(ranks: RankTable, alpha: float = 0.05) -> CDDiagram:
    """Average-rank positions and the maximal groups of mutually indistinguishable methods.

    Nemenyi p-values fall with rank distance, so every maximal clique of the
    ``p > alpha`` graph is a run of consecutive methods in rank order; the
    groups are the maximal such runs with at least two members.
    """
    pos = ranks.average_ranks
    p = nemenyi(ranks)
    order = list(np.argsort(pos, kind="stable"))
    k = len(order)

    def linked(a, b):
        return p[a, b] > alpha

    runs = []
    for s in range(k):
        e = s
        while e + 1 < k and all(linked(order[t], order[e + 1]) for t in range(s, e + 1)):
            e += 1
        if e > s:
            runs.append((s, e))
    maximal = [(s, e) for s, e in runs if not any(s2 <= s and e <= e2 and (s2, e2) != (s, e) for s2, e2 in runs)]
    groups = [[ranks.methods[order[t]] for t in range(s, e + 1)] for s, e in maximal]
    return CDDiagram(list(ranks.methods), pos, groups, alpha)


# --- CSV ---------------------------------------------------------------------------

def _data_lines(text: str) -> list[str]:
    return [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]


def parse_accuracy_csv(text: str) -> AccuracyTable:
    """Header row = network ids (first cell is a label for the method column); one row per method."""
    rows = list(csv.reader(_data_lines(text)))
    if len(rows) < 2:
        raise ValueError("accuracy CSV needs a header and at least one method row")
    networks = [c.strip() for c in rows[0][1:]]
    methods, values = [], []
    for row in rows[1:]:
        if len(row) != len(networks) + 1:
            raise ValueError(f"row {row[0]!r} has {len(row) - 1} values, expected {len(networks)}")
        methods.append(row[0].strip())
        values.append([float(v) for v in row[1:]])
    return AccuracyTable(methods, networks, np.array(values))


def read_accuracy_csv(path) -> AccuracyTable:
    with open(path, newline="") as f:
        return parse_accuracy_csv(f.read())


def format_accuracy_csv(table: AccuracyTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", *table.networks])
    for m, row in zip(table.methods, table.accuracies):
        w.writerow([m, *[repr(float(v)) for v in row]])
    return buf.getvalue()


def format_matrix_csv(methods: Sequence[str], matrix: np.ndarray) -> str:
    """Square matrix with labelled rows/columns; ``nan`` entries are left blank."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["", *methods])
    for m, row in zip(methods, matrix):
        w.writerow([m, *["" if np.isnan(v) else f"{v:.17g}" for v in row]])
    return buf.getvalue()


def format_rank_csv(ranks: RankTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", *ranks.networks, "average_rank"])
    for m, row, avg in zip(ranks.methods, ranks.ranks, ranks.average_ranks):
        w.writerow([m, *[f"{v:g}" for v in row], f"{avg:.17g}"])
    return buf.getvalue()


# --- published fixtures -----------------------------------------------------------

def fixture_text(name: str) -> str:
    from importlib.resources import files

    return files("persreg").joinpath("data", name).read_text()


def published_accuracies() -> AccuracyTable:
    return parse_accuracy_csv(fixture_text("table2_accuracies.csv"))


def published_nemenyi() -> tuple[list[str], np.ndarray]:
    """Published p-value matrix, mirrored to full symmetric form (``nan`` on the diagonal)."""
    rows = list(csv.reader(_data_lines(fixture_text("table1_nemenyi.csv"))))
    methods = rows[0][1:]
    p = np.full((len(methods), len(methods)), np.nan)
    for row in rows[1:]:
        i = methods.index(row[0])
        for j, cell in enumerate(row[1:]):
            if cell.strip():
                p[i, j] = p[j, i] = float(cell)
    return methods, p


def published_ranks() -> tuple[list[str], np.ndarray, list[list[str]]]:
    """Published average ranks and critical-difference groups."""
    text = fixture_text("figure2_ranks.csv")
    groups = [line.split(":", 1)[1].split() for line in text.splitlines() if line.startswith("# group:")]
    rows = list(csv.reader(_data_lines(text)))[1:]
    return [r[0] for r in rows], np.array([float(r[1]) for r in rows]), groups

"""Downstream analytics: topic scoring and the spectral residual statistic.

The weighted accumulative beta score ranks knowledge-graph topics by
summing, over the papers tagged with a topic, the topic-relevance score
weighted by the paper's fitted popularity exp(beta_hat).  The
goodness-of-fit side standardizes the adjacency residual and tracks
T = n^(2/3) * (sigma_1 - 2), whose distribution can be compared against
the Tracy-Widom reference quantiles documented below.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

import numpy as np

from .graph_io import EdgeList
from .model import sigmoid
from .solver import FitResult

# Reference moments of the Tracy-Widom(1) law, for QQ output headers.
TW1_MEAN = -1.2065
TW1_SD = 1.268


class AnalysisError(ValueError):
    """Analysis preconditions violated."""


@dataclass(frozen=True)
class TopicRelevance:
    """One topic with its (node label, relevance score) entries."""

    topic: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        for label, score in self.entries:
            if not 0.0 <= score <= 1.0:
                raise ValueError(
                    f"topic {self.topic!r}: score {score} for {label!r} "
                    "outside [0, 1]"
                )


def read_topics_csv(stream: IO[str]) -> list[TopicRelevance]:
    """Parse "topic,node_label,score" rows, grouping by topic."""
    grouped: dict[str, list[tuple[str, float]]] = {}
    for lineno, row in enumerate(csv.reader(stream), start=1):
        if not row or (row[0].startswith("#") and len(row) == 1):
            continue
        if len(row) != 3:
            raise AnalysisError(
                f"topics row {lineno}: expected topic,node_label,score"
            )
        topic, label, raw = (field.strip() for field in row)
        try:
            score = float(raw)
        except ValueError:
            raise AnalysisError(
                f"topics row {lineno}: score {raw!r} is not a number"
            ) from None
        grouped.setdefault(topic, []).append((label, score))
    return [
        TopicRelevance(topic=t, entries=tuple(entries))
        for t, entries in grouped.items()
    ]


@dataclass(frozen=True)
class WabsRow:
    topic: str
    paper_count: int
    score: float


@dataclass(frozen=True)
class WabsResult:
    rows: tuple[WabsRow, ...]  # sorted by score descending, ties by topic id
    unresolved_labels: int

    def to_csv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream)
        writer.writerow(["topic", "paper_count", "wabs"])
        for row in self.rows:
            writer.writerow([row.topic, row.paper_count, repr(row.score)])


def wabs(
    topics: Iterable[TopicRelevance],
    fit: FitResult | np.ndarray,
    label_to_index: Mapping[str, int] | None = None,
) -> WabsResult:
    """Score every topic by sum over tagged nodes of exp(beta_hat) * score.

    ``label_to_index`` maps external node labels to fit indices; when
    omitted, labels are the stringified indices.  Entries whose label does
    not resolve are counted and skipped; a topic with no resolvable entries
    scores 0.
    """
    beta = fit.beta if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    weights = np.exp(beta)
    unresolved = 0
    rows = []
    for topic in topics:
        total = 0.0
        count = 0
        for label, score in topic.entries:
            if label_to_index is not None:
                idx = label_to_index.get(label)
            else:
                idx = int(label) if label.isdigit() and int(label) < len(beta) else None
            if idx is None:
                unresolved += 1
                continue
            total += float(weights[idx]) * score
            count += 1
        rows.append(WabsRow(topic=topic.topic, paper_count=count, score=total))
    rows.sort(key=lambda r: r.topic)
    rows.sort(key=lambda r: r.score, reverse=True)
    return WabsResult(rows=tuple(rows), unresolved_labels=unresolved)


def largest_abs_eigenvalue(
    matrix: np.ndarray,
    tol: float = 1e-8,
    max_iters: int = 10_000,
    seed: int = 0,
) -> float:
    """Largest |eigenvalue| of a symmetric matrix by shifted power iteration.

    Iterating on M + s*I with s = ||M||_inf forces a positive spectrum and
    kills sign oscillation; the same iteration on -M + s*I recovers the
    magnitude of the most negative eigenvalue.  Each side stops when its
    Rayleigh quotient moves by less than ``tol``.  The two iterations share
    one matrix product per step.
    """
    matrix = np.asarray(matrix, dtype=float)
    shift = float(np.abs(matrix).sum(axis=1).max())
    if shift == 0.0:
        return 0.0

    rng = np.random.default_rng(seed)
    x = rng.standard_normal((matrix.shape[0], 2))
    x /= np.linalg.norm(x, axis=0)
    # column 0 chases lambda_max(M), column 1 chases lambda_max(-M)
    sign = np.array([1.0, -1.0])
    rayleigh = np.array([np.inf, np.inf])
    frozen = np.array([np.nan, np.nan])
    done = np.array([False, False])
    for _ in range(max_iters):
        y = matrix @ x
        new = sign * np.einsum("ij,ij->j", x, y)
        settle = (~done) & (np.abs(new - rayleigh) <= tol)
        frozen[settle] = new[settle]
        done |= settle
        if done.all():
            break
        rayleigh = new
        y = sign * y + shift * x
        norms = np.linalg.norm(y, axis=0)
        if (norms == 0.0).any():
            # started in the nullspace of the shifted matrix; restart
            y[:, norms == 0.0] = rng.standard_normal((matrix.shape[0], int((norms == 0.0).sum())))
            norms = np.linalg.norm(y, axis=0)
        x = y / norms
    frozen[~done] = rayleigh[~done]
    return float(frozen.max())


@dataclass(frozen=True)
class GofStatistic:
    sigma1: float
    t_stat: float
    n: int


def standardized_residual(g: EdgeList, beta: np.ndarray) -> np.ndarray:
    """(A - P) / sqrt((n-1) P (1-P)) with fitted P and a zero diagonal."""
    beta = np.asarray(beta, dtype=float)
    n = g.n
    if beta.shape != (n,):
        raise AnalysisError("fit and graph disagree on the node count")
    pair = beta[:, None] + beta[None, :]
    p = sigmoid(pair)
    q = sigmoid(-pair)  # 1 - p without cancellation
    off = ~np.eye(n, dtype=bool)
    if (p[off] >= 1.0).any() or (p[off] <= 0.0).any():
        raise AnalysisError(
            "some fitted edge probabilities saturate to 0 or 1 at machine "
            "precision; the residual normalization is undefined"
        )
    resid = -p / np.sqrt((n - 1) * p * q)
    scale = 1.0 / np.sqrt((n - 1) * p * q)
    u, v = g.edges[:, 0], g.edges[:, 1]
    resid[u, v] += scale[u, v]
    resid[v, u] += scale[v, u]
    np.fill_diagonal(resid, 0.0)
    return resid


def gof_statistic(g: EdgeList, fit: FitResult | np.ndarray) -> GofStatistic:
    """Largest singular value of the standardized residual and its
    edge-scaling statistic T = n^(2/3) * (sigma_1 - 2).

    O(n^2) memory and work; intended for desk-scale n (a few thousand).
    """
    beta = fit.beta if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    resid = standardized_residual(g, beta)
    sigma1 = largest_abs_eigenvalue(resid)
    t_stat = float(g.n ** (2.0 / 3.0) * (sigma1 - 2.0))
    return GofStatistic(sigma1=sigma1, t_stat=t_stat, n=g.n)

"""Network sampling, scenario generators and Monte Carlo validation runs.

Scenario names cover the standard benchmark profiles: "i".."vi" are
two-block vectors (gamma_t, alpha_t) * log n split at floor(n/5);
"two_sided_dense"/"two_sided_sparse" add symmetric positive and negative
deviations on top of a common base (used for active-set recovery);
"aic_dense"/"aic_near_constant" drive the penalty-tuning checks; and
"gof_weak"/"gof_strong" are the two-block profiles for the
goodness-of-fit experiment.
"""

from __future__ import annotations

import csv
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Callable, Sequence

import numpy as np

from .graph_io import EdgeList, build_histogram
from .model import diagnostics, sigmoid, sigmoid_deriv
from .solver import (
    DegenerateGraphError,
    DivergedError,
    FitConfig,
    fit as solver_fit,
)

RNG_DESCRIPTION = "numpy default_rng (PCG64); replicate r uses seed XOR r"

# Rows whose largest edge probability is below this are skip-sampled by
# geometric gaps instead of scanned pair by pair.
SKIP_SAMPLING_CUTOFF = 0.01

# With at most this many distinct parameter values, sampling runs over
# constant-probability block pairs instead of row by row.
MAX_BLOCKS_FOR_PAIR_PATH = 128


class McError(RuntimeError):
    """More than half of the Monte Carlo replicates failed."""


def _two_block(gamma_t: float, alpha_t: float) -> Callable[[int], np.ndarray]:
    def gen(n: int) -> np.ndarray:
        logn = np.log(n)
        beta = np.full(n, alpha_t * logn)
        beta[: n // 5] = gamma_t * logn
        return beta

    return gen


def _two_sided(base: float, dev: float, frac: int) -> Callable[[int], np.ndarray]:
    # base level everywhere, first n//(2*frac) nodes shifted +dev*log n,
    # next n//(2*frac) shifted -dev*log n
    def gen(n: int) -> np.ndarray:
        logn = np.log(n)
        beta = np.full(n, base * logn)
        half = n // (2 * frac)
        beta[:half] += dev * logn
        beta[half : 2 * half] -= dev * logn
        return beta

    return gen


def _split_levels(split_frac: float, low: float, high: float) -> Callable[[int], np.ndarray]:
    def gen(n: int) -> np.ndarray:
        logn = np.log(n)
        beta = np.full(n, high * logn)
        beta[: int(split_frac * n)] = low * logn
        return beta

    return gen


_SETTINGS: dict[str, Callable[[int], np.ndarray]] = {
    "i": _two_block(-1.0 / 3.0, 1.0 / 5.0),
    "ii": _two_block(-1.0 / 2.0, 1.0 / 5.0),
    "iii": _two_block(-2.0 / 3.0, 1.0 / 3.0),
    "iv": _two_block(-2.0 / 3.0, 1.0 / 3.0),
    "v": _two_block(-2.0 / 3.0, 1.0 / 3.0),
    "vi": _two_block(-1.0 / 3.0, -1.0 / 3.0 + 0.05),
    "two_sided_dense": _two_sided(-0.1, 0.4, 5),
    "two_sided_sparse": _two_sided(-0.3, 0.2, 10),
    "aic_dense": _split_levels(0.1, -1.0 / 5.0, 1.0 / 2.0),
    "aic_near_constant": _split_levels(1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0 + 0.05),
    "gof_weak": _split_levels(0.4, -0.1, 0.1),
    "gof_strong": _split_levels(0.4, -0.4, 0.1),
}


def available_settings() -> tuple[str, ...]:
    return tuple(_SETTINGS)


def make_beta_star(setting: str, n: int) -> np.ndarray:
    if setting not in _SETTINGS:
        raise ValueError(
            f"unknown setting {setting!r}; available: {', '.join(_SETTINGS)}"
        )
    return _SETTINGS[setting](n)


def true_active_set(setting: str, n: int) -> np.ndarray:
    """Indices whose value deviates from the common level, where defined."""
    if setting == "two_sided_dense":
        return np.arange(2 * (n // 10))
    if setting == "two_sided_sparse":
        return np.arange(2 * (n // 20))
    raise ValueError(f"setting {setting!r} has no designated active set")


@dataclass(frozen=True)
class SimScenario:
    """A true parameter vector (explicit or named) plus an RNG seed."""

    n: int
    setting: str | None = None
    beta_star: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if (self.setting is None) == (self.beta_star is None):
            raise ValueError("provide exactly one of setting or beta_star")
        if self.beta_star is not None:
            beta = np.ascontiguousarray(self.beta_star, dtype=float)
            if beta.shape != (self.n,):
                raise ValueError("beta_star length must equal n")
            if not np.isfinite(beta).all():
                raise ValueError("beta_star must be finite")
            beta.setflags(write=False)
            object.__setattr__(self, "beta_star", beta)

    def resolve_beta(self) -> np.ndarray:
        if self.beta_star is not None:
            return self.beta_star
        return make_beta_star(self.setting, self.n)


def _bernoulli_positions(length: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Positions of successes among `length` iid Bernoulli(p) slots."""
    if length <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(length, dtype=np.int64)
    if p < 1e-12:
        # Geometric gaps overflow int64 here; draw the count exactly instead.
        k = int(rng.binomial(length, p))
        if k == 0:
            return np.empty(0, dtype=np.int64)
        while True:
            pos = np.unique(rng.integers(0, length, size=k))
            if pos.size == k:
                return pos.astype(np.int64)
    chunks = []
    pos = -1
    expect = length * p
    batch = max(16, int(expect + 6.0 * np.sqrt(expect) + 16))
    while True:
        cum = rng.geometric(p, size=batch)
        np.cumsum(cum, out=cum)
        if pos:
            cum += pos
        crossed = int(np.searchsorted(cum, length, side="left"))
        chunks.append(cum[:crossed])
        if crossed < batch:
            break
        pos = int(cum[-1])
        # remaining stretch shrinks; keep top-up batches proportionate
        remaining = (length - 1 - pos) * p
        batch = max(16, int(remaining + 6.0 * np.sqrt(max(remaining, 1.0)) + 16))
    return np.concatenate(chunks) if len(chunks) > 1 else chunks[0]


def _sample_pairs_blocks(
    b: np.ndarray, starts: np.ndarray, ends: np.ndarray, rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Sample over constant-probability block pairs; b sorted descending.

    A within-block triangle is drawn over the full square and masked to
    i < j: every unordered pair owns exactly one kept slot, so the pair
    law is unchanged and no rank inversion is needed.
    """
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    nb = len(starts)
    for a in range(nb):
        a0, a1 = int(starts[a]), int(ends[a])
        size = a1 - a0
        if size >= 2:
            p = float(sigmoid(2.0 * np.float64(b[a0])))
            t = _bernoulli_positions(size * size, p, rng)
            if t.size:
                i, j = np.divmod(t, size)
                keep = j > i
                i = i[keep]
                j = j[keep]
                i += a0
                j += a0
                rows.append(i)
                cols.append(j)
        for c in range(a + 1, nb):
            c0, c1 = int(starts[c]), int(ends[c])
            width = c1 - c0
            p = float(sigmoid(np.float64(b[a0]) + np.float64(b[c0])))
            t = _bernoulli_positions(size * width, p, rng)
            if t.size:
                i, j = np.divmod(t, width)
                i += a0
                j += c0
                rows.append(i)
                cols.append(j)
    return rows, cols


def _sample_pairs_rows(
    b: np.ndarray, rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Row-by-row sampling for arbitrary vectors; b sorted descending.

    Each row's pair probabilities are non-increasing: the prefix with
    probability >= SKIP_SAMPLING_CUTOFF is scanned exactly, the sparse tail
    is skip-sampled at the tail's max probability and thinned by the exact
    ratio.
    """
    n = b.shape[0]
    cut_logit = float(np.log(SKIP_SAMPLING_CUTOFF / (1.0 - SKIP_SAMPLING_CUTOFF)))
    neg_b = -b  # ascending view for searchsorted
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for i in range(n - 1):
        bi = float(b[i])
        start = i + 1
        # first tail index with b_j < cut_logit - bi, i.e. prob below cutoff
        split = start + int(
            np.searchsorted(neg_b[start:], -(cut_logit - bi), side="right")
        )
        if split > start:
            probs = sigmoid(bi + b[start:split])
            hits = np.flatnonzero(rng.random(split - start) < probs)
            if hits.size:
                cols.append(hits + start)
                rows.append(np.full(hits.size, i, dtype=np.int64))
        if split < n:
            pmax = float(sigmoid(np.float64(bi) + b[split]))
            cand = _bernoulli_positions(n - split, pmax, rng)
            if cand.size:
                j = cand + split
                keep = rng.random(j.size) < sigmoid(bi + b[j]) / pmax
                j = j[keep]
                if j.size:
                    cols.append(j)
                    rows.append(np.full(j.size, i, dtype=np.int64))
    return rows, cols


def _sample_pairs(
    beta: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Sample the product-Bernoulli edge set; exact law for any beta.

    Work happens in descending-beta order.  Vectors with few distinct
    values (every named scenario) decompose into constant-probability
    block pairs, each drawn with one geometric-gap stream; otherwise rows
    are visited one at a time with a dense-prefix scan and a skip-sampled
    tail.  Both paths realize the same independent-pair law.  Returns the
    two endpoint arrays (original indices, unordered pairs).
    """
    n = beta.shape[0]
    order = np.argsort(-beta, kind="stable")
    b = beta[order]
    change = np.flatnonzero(np.diff(b) != 0.0)
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change + 1, [n]))
    if len(starts) <= MAX_BLOCKS_FOR_PAIR_PATH:
        rows, cols = _sample_pairs_blocks(b, starts, ends, rng)
    else:
        rows, cols = _sample_pairs_rows(b, rng)
    if not rows:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return order[np.concatenate(rows)], order[np.concatenate(cols)]


def sample_network(scn: SimScenario) -> EdgeList:
    """Draw one network: each unordered pair independently with its edge
    probability.  Reproducible given the scenario seed."""
    beta = scn.resolve_beta()
    rng = np.random.default_rng(scn.seed)
    u, v = _sample_pairs(beta, rng)
    if u.size == 0:
        return EdgeList(n=scn.n, edges=np.empty((0, 2), dtype=np.int64))
    pairs = np.empty((u.shape[0], 2), dtype=np.int64)
    pairs[:, 0] = u
    pairs[:, 1] = v
    return EdgeList.from_pairs(pairs, n=scn.n)


def _sample_degrees(beta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Degree sequence of one draw without materializing a sorted edge list.

    Same pair stream as :func:`sample_network` for a given generator state;
    repeated fitting only needs degrees, so the canonicalization cost is
    skipped.
    """
    u, v = _sample_pairs(beta, rng)
    if u.size == 0:
        return np.zeros(beta.shape[0], dtype=np.int64)
    counts = np.bincount(u, minlength=beta.shape[0])
    counts += np.bincount(v, minlength=beta.shape[0])
    return counts.astype(np.int64)


def expected_density(beta_star: np.ndarray) -> float:
    """Mean pair probability sum_{i<j} sigma(b_i + b_j) / C(n, 2)."""
    return diagnostics(np.asarray(beta_star, dtype=float)).rho_n


def predict_large_lambda_limit(
    beta_star: np.ndarray, a_bar: float | None = None
) -> tuple[float, float]:
    """Predicted center and variance of the heavily penalized fit.

    With a dominating penalty the fitted vector collapses to a multiple of
    the ones vector; the limit center is 1'W beta* / 1'W 1 for the
    secant-slope matrix W_ij = (a_bar - sigma(b_i+b_j)) / (logit(a_bar) -
    b_i - b_j) (the sigma' limit when the denominator vanishes), and the
    variance is n(n-1) 1'V(beta*)1 / (2 (1'W 1)^2).  ``a_bar`` defaults to
    the expected density; pass an observed density for per-realization
    comparisons.
    """
    beta = np.asarray(beta_star, dtype=float)
    n = beta.shape[0]
    if n < 2:
        raise ValueError("need at least two nodes")
    values, counts = np.unique(beta, return_counts=True)
    counts = counts.astype(float)
    pair = values[:, None] + values[None, :]
    sig = sigmoid(pair)
    if a_bar is None:
        a_bar = expected_density(beta)
    if not 0.0 < a_bar < 1.0:
        raise ValueError(f"density {a_bar} is degenerate")
    denom = float(np.log(a_bar / (1.0 - a_bar))) - pair
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (a_bar - sig) / denom
    secant = np.where(np.abs(denom) < 1e-9, sigmoid_deriv(pair), ratio)

    # Row sums over j != i for a node in each value class.
    row_w = secant @ counts - np.diag(secant)
    row_v = sigmoid_deriv(pair) @ counts - sigmoid_deriv(2.0 * values)
    sum_w = float(counts @ row_w)  # sum over ordered pairs i != j
    sum_v = float(counts @ row_v)
    ones_w_ones = 2.0 * sum_w  # diagonal of W is defined as its row sums
    ones_w_beta = 2.0 * float(counts @ (row_w * values))
    ones_v_ones = 2.0 * sum_v
    center = ones_w_beta / ones_w_ones
    variance = n * (n - 1) * ones_v_ones / (2.0 * ones_w_ones**2)
    return center, variance


def check_normality_conditions(beta_star: np.ndarray) -> tuple[float, float]:
    """Numeric versions of the two small-lambda normality conditions.

    Returns (r1, r2) where the asymptotic theory needs r1 -> 0 and r2 << 1;
    values at or above 1 mean the coordinatewise normal approximation is
    not expected to be accurate at this (n, beta*).
    """
    beta = np.asarray(beta_star, dtype=float)
    n = beta.shape[0]
    diag = diagnostics(beta)
    logn = np.log(n)
    r1 = diag.b_n**3 / diag.q_n**2.5 / np.sqrt(n) * logn
    lhs = (1.0 / diag.c_n) / (1.0 / diag.c_n + (n - 2.0) / diag.b_n) * logn
    r2 = lhs / (diag.q_n**2 / diag.b_n**2)
    return float(r1), float(r2)


@dataclass(frozen=True)
class McRecord:
    replicate: int
    converged: bool
    iterations: int
    runtime_s: float
    err_l1: float
    err_l2: float
    err_linf: float
    rel_err_l2: float
    beta_track: tuple[float, ...]


@dataclass(frozen=True)
class McReport:
    """Per-replicate records plus aggregate summaries of a Monte Carlo run."""

    n: int
    lam: float
    seed: int
    track: tuple[int, ...]
    records: tuple[McRecord, ...]
    failures: tuple[tuple[int, str], ...]
    coverage_scale: tuple[float, ...]  # sqrt(D_jj(beta*)) per tracked index
    beta_star_track: tuple[float, ...]
    rng: str = RNG_DESCRIPTION

    def tracked_matrix(self) -> np.ndarray:
        """(replicates, len(track)) array of fitted tracked coordinates."""
        return np.array([r.beta_track for r in self.records], dtype=float)

    def aggregates(self) -> dict:
        mat = self.tracked_matrix()
        out: dict = {
            "n": self.n,
            "lambda": self.lam,
            "seed": self.seed,
            "rng": self.rng,
            "replicates": len(self.records) + len(self.failures),
            "completed": len(self.records),
            "failures": [list(f) for f in self.failures],
            "track": list(self.track),
        }
        if len(self.records):
            out["mean"] = {
                str(j): float(mat[:, k].mean()) for k, j in enumerate(self.track)
            }
            ddof = 1 if mat.shape[0] > 1 else 0
            out["variance"] = {
                str(j): float(mat[:, k].var(ddof=ddof))
                for k, j in enumerate(self.track)
            }
            if mat.shape[0] > 1 and mat.shape[1] > 1:
                out["correlation"] = np.corrcoef(mat, rowvar=False).tolist()
            coverage = {}
            for k, j in enumerate(self.track):
                z = (mat[:, k] - self.beta_star_track[k]) * self.coverage_scale[k]
                coverage[str(j)] = float(np.mean(np.abs(z) <= 1.959963984540054))
            out["coverage"] = coverage
            out["mean_err_l2"] = float(np.mean([r.err_l2 for r in self.records]))
            out["mean_rel_err_l2"] = float(
                np.mean([r.rel_err_l2 for r in self.records])
            )
            out["mean_iterations"] = float(
                np.mean([r.iterations for r in self.records])
            )
            out["mean_runtime_s"] = float(
                np.mean([r.runtime_s for r in self.records])
            )
        return out

    def to_csv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream)
        writer.writerow(
            ["replicate", "converged", "iterations", "runtime_s", "err_l1",
             "err_l2", "err_linf", "rel_err_l2"]
            + [f"beta_{j}" for j in self.track]
        )
        for r in self.records:
            writer.writerow(
                [r.replicate, r.converged, r.iterations, repr(r.runtime_s),
                 repr(r.err_l1), repr(r.err_l2), repr(r.err_linf),
                 repr(r.rel_err_l2)]
                + [repr(v) for v in r.beta_track]
            )


def _default_track(n: int) -> tuple[int, ...]:
    return tuple(sorted({0, n - 2, n - 1}))


def run_mc(
    scn: SimScenario,
    lam: float,
    replicates: int,
    config: FitConfig | None = None,
    track: Sequence[int] | None = None,
    threads: int = 1,
    warn_on_normality: bool = False,
) -> McReport:
    """Sample, fit and record `replicates` independent networks.

    Replicate r draws its own RNG stream from seed XOR r, so results are
    reproducible and independent of execution order.  Individual replicate
    failures (degenerate draw, divergence) are recorded, not fatal, unless
    more than half fail.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    beta_star = scn.resolve_beta()
    n = scn.n
    track = _default_track(n) if track is None else tuple(int(j) for j in track)
    if any(j < 0 or j >= n for j in track):
        raise ValueError("tracked index out of range")
    cfg = config if config is not None else FitConfig()

    if warn_on_normality:
        r1, r2 = check_normality_conditions(beta_star)
        if r1 >= 1.0 or r2 >= 1.0:
            warnings.warn(
                f"normality conditions look violated at n={n}: r1={r1:.3g}, "
                f"r2={r2:.3g}; coordinatewise normal checks may be off",
                stacklevel=2,
            )

    norm_star = float(np.linalg.norm(beta_star))
    scale = []
    for j in track:
        d_jj = float(sigmoid_deriv(beta_star[j] + beta_star).sum()) - float(
            sigmoid_deriv(2.0 * beta_star[j])
        )
        scale.append(np.sqrt(d_jj))

    def one(r: int):
        start = time.perf_counter()
        try:
            rng = np.random.default_rng(scn.seed ^ r)
            degrees = _sample_degrees(beta_star, rng)
            hist = build_histogram(degrees)
            result = solver_fit(hist, lam, cfg)
        except (DegenerateGraphError, DivergedError, ValueError) as exc:
            return r, None, f"{type(exc).__name__}: {exc}"
        runtime = time.perf_counter() - start
        diff = result.beta - beta_star
        l2 = float(np.linalg.norm(diff))
        record = McRecord(
            replicate=r,
            converged=result.converged,
            iterations=result.iterations,
            runtime_s=runtime,
            err_l1=float(np.abs(diff).sum()),
            err_l2=l2,
            err_linf=float(np.abs(diff).max()),
            rel_err_l2=l2 / norm_star if norm_star > 0 else float("inf"),
            beta_track=tuple(float(result.beta[j]) for j in track),
        )
        return r, record, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, range(replicates)))
    else:
        outcomes = [one(r) for r in range(replicates)]

    records = []
    failures = []
    for r, record, reason in sorted(outcomes, key=lambda t: t[0]):
        if record is None:
            failures.append((r, reason))
        else:
            records.append(record)
    if len(failures) > replicates / 2:
        raise McError(
            f"{len(failures)} of {replicates} replicates failed; first: "
            f"{failures[0][1]}"
        )
    return McReport(
        n=n,
        lam=float(lam),
        seed=scn.seed,
        track=track,
        records=tuple(records),
        failures=tuple(failures),
        coverage_scale=tuple(scale),
        beta_star_track=tuple(float(beta_star[j]) for j in track),
    )

"""Objectives, gradients and Jacobians for the ridge-penalized beta model.

Two parameterizations live here.  The full one works on the length-n vector
beta and costs O(n^2); it exists as a test oracle and for small-n
diagnostics.  The reduced one works on the length-m vector delta of
per-degree-class values and costs O(m^2) per evaluation; the fitting path
only ever touches this one.

The objective is

    sum_{i<j} log(1 + exp(b_i + b_j)) - sum_i b_i d_i
        + (lam/2) * sum_i (b_i - mean(b))^2

so the all-ones direction is unpenalized.  In reduced coordinates the pair
sum groups into class blocks weighted by multiplicities and the penalty
centers on the count-weighted mean of delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_io import DegreeHistogram


def sigmoid(x):
    """Overflow-safe logistic function exp(x) / (1 + exp(x))."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    """Overflow-safe log(1 + exp(x)) via max(x, 0) + log1p(exp(-|x|))."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid_deriv(x):
    """sigma'(x) = exp(x) / (1 + exp(x))^2, even in x, no overflow."""
    s = sigmoid(-np.abs(np.asarray(x, dtype=float)))
    return s * (1.0 - s)


def edge_prob(bi: float, bj: float) -> float:
    """Probability of an edge between nodes with parameters bi and bj."""
    return float(sigmoid(np.float64(bi) + np.float64(bj)))


def validate_lambda(lam) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"penalty strength must be a finite non-negative real, got {lam}")
    return lam


# ---------------------------------------------------------------------------
# Full parameterization: O(n^2), oracle / diagnostic use only.
# ---------------------------------------------------------------------------


def nll_full(beta: np.ndarray, degrees: np.ndarray) -> float:
    """Negative log-likelihood sum_{i<j} log(1+e^{b_i+b_j}) - sum b_i d_i."""
    beta = np.asarray(beta, dtype=float)
    degrees = np.asarray(degrees, dtype=float)
    n = beta.shape[0]
    if degrees.shape[0] != n:
        raise ValueError("beta and degree lengths differ")
    iu = np.triu_indices(n, k=1)
    pair = beta[:, None] + beta[None, :]
    return float(softplus(pair[iu]).sum() - beta @ degrees)


def objective_full(beta: np.ndarray, degrees: np.ndarray, lam: float) -> float:
    """Penalized objective; the penalty vanishes on the span of the ones vector."""
    lam = validate_lambda(lam)
    beta = np.asarray(beta, dtype=float)
    centered = beta - beta.mean()
    return nll_full(beta, degrees) + 0.5 * lam * float(centered @ centered)


def gradient_full(beta: np.ndarray, degrees: np.ndarray, lam: float) -> np.ndarray:
    """F_i = sum_{j != i} sigma(b_i + b_j) - d_i + lam * (b_i - mean(b))."""
    lam = validate_lambda(lam)
    beta = np.asarray(beta, dtype=float)
    degrees = np.asarray(degrees, dtype=float)
    sig = sigmoid(beta[:, None] + beta[None, :])
    np.fill_diagonal(sig, 0.0)
    return sig.sum(axis=1) - degrees + lam * (beta - beta.mean())


def jacobian_full(beta: np.ndarray, lam: float) -> np.ndarray:
    """Symmetric n x n Jacobian of the full gradient.

    Off-diagonal entries are sigma'(b_i + b_j) - lam/n; the diagonal is the
    off-diagonal sigma' row sum plus (n-1) * lam / n.  Strictly positive
    definite for lam > 0.
    """
    lam = validate_lambda(lam)
    beta = np.asarray(beta, dtype=float)
    n = beta.shape[0]
    ds = sigmoid_deriv(beta[:, None] + beta[None, :])
    np.fill_diagonal(ds, 0.0)
    jac = ds - lam / n
    np.fill_diagonal(jac, ds.sum(axis=1) + (n - 1) * lam / n)
    return jac


# ---------------------------------------------------------------------------
# Reduced (degree-indexed) parameterization: O(m^2) per evaluation.
# ---------------------------------------------------------------------------


def _check_reduced(delta: np.ndarray, hist: DegreeHistogram) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (hist.m,):
        raise ValueError(f"delta must have length m={hist.m}, got shape {delta.shape}")
    return delta


def expand(delta: np.ndarray, hist: DegreeHistogram) -> np.ndarray:
    """Expand per-class values to the length-n node vector."""
    delta = _check_reduced(delta, hist)
    return delta[hist.node_to_class]


@dataclass(frozen=True)
class ClassParams:
    """Per-degree-class parameter values together with their histogram."""

    values: np.ndarray
    histogram: DegreeHistogram

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape != (self.histogram.m,):
            raise ValueError("values length must equal the number of classes")
        if not np.isfinite(values).all():
            raise ValueError("class parameters must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.histogram.m

    def expand(self) -> np.ndarray:
        return expand(self.values, self.histogram)


def weighted_mean(delta: np.ndarray, hist: DegreeHistogram) -> float:
    """Count-weighted mean of delta; equals mean(beta) after expansion."""
    return float(hist.counts @ np.asarray(delta, dtype=float)) / hist.n


def objective_reduced(delta: np.ndarray, hist: DegreeHistogram, lam: float) -> float:
    lam = validate_lambda(lam)
    delta = _check_reduced(delta, hist)
    counts = hist.counts.astype(float)
    degs = hist.degrees.astype(float)
    sp = softplus(delta[:, None] + delta[None, :])
    weights = np.outer(counts, counts)
    cross = float(np.triu(weights * sp, k=1).sum())
    within = float((counts * (counts - 1.0) / 2.0) @ softplus(2.0 * delta))
    linear = float((counts * degs) @ delta)
    tilde = weighted_mean(delta, hist)
    penalty = 0.5 * lam * float(counts @ (delta - tilde) ** 2)
    return cross + within - linear + penalty


def class_expected_degrees(delta: np.ndarray, hist: DegreeHistogram) -> np.ndarray:
    """Expected degree of a node in each class: sum_l n_l sigma(d_k+d_l) - sigma(2 d_k)."""
    delta = _check_reduced(delta, hist)
    counts = hist.counts.astype(float)
    sig = sigmoid(delta[:, None] + delta[None, :])
    return sig @ counts - sigmoid(2.0 * delta)


def gradient_reduced(delta: np.ndarray, hist: DegreeHistogram, lam: float) -> np.ndarray:
    """G_k = n_k * (expected class degree - d_(k) + lam * (delta_k - tilde))."""
    lam = validate_lambda(lam)
    delta = _check_reduced(delta, hist)
    counts = hist.counts.astype(float)
    degs = hist.degrees.astype(float)
    tilde = weighted_mean(delta, hist)
    return counts * (
        class_expected_degrees(delta, hist) - degs + lam * (delta - tilde)
    )


def jacobian_reduced(delta: np.ndarray, hist: DegreeHistogram, lam: float) -> np.ndarray:
    """Symmetric m x m Jacobian of the reduced gradient."""
    lam = validate_lambda(lam)
    delta = _check_reduced(delta, hist)
    n = hist.n
    counts = hist.counts.astype(float)
    ds = sigmoid_deriv(delta[:, None] + delta[None, :])
    weights = np.outer(counts, counts)
    jac = weights * ds - (lam / n) * weights
    ds2 = sigmoid_deriv(2.0 * delta)
    diag = (
        counts * (ds @ counts)
        + counts * (counts - 2.0) * ds2
        + lam * counts * (1.0 - counts / n)
    )
    np.fill_diagonal(jac, diag)
    return jac


# ---------------------------------------------------------------------------
# Diagnostic quantities governing the error-bound regimes.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelDiagnostics:
    """Edge-variance extremes and density for a parameter vector.

    ``b_n``/``c_n`` are the max/min over node pairs of 1 / sigma'(b_i+b_j)
    (reciprocal edge variances), ``q_n`` is the reciprocal of the largest
    row mean of edge variances, and ``rho_n`` the expected edge density.
    They satisfy 1/b_n <= 1/q_n <= 1/c_n.
    """

    n: int
    b_n: float
    c_n: float
    q_n: float
    rho_n: float


def _diagnostics_grouped(values: np.ndarray, counts: np.ndarray, n: int) -> ModelDiagnostics:
    values = np.asarray(values, dtype=float)
    counts = np.asarray(counts, dtype=float)
    ds = sigmoid_deriv(values[:, None] + values[None, :])
    sig = sigmoid(values[:, None] + values[None, :])

    # Pairs within a class only exist when the class holds >= 2 nodes.
    valid = np.ones_like(ds, dtype=bool)
    np.fill_diagonal(valid, counts >= 2)
    ds_valid = ds[valid]
    b_n = 1.0 / float(ds_valid.min())
    c_n = 1.0 / float(ds_valid.max())

    row_sums = ds @ counts - sigmoid_deriv(2.0 * values)
    q_inv = float(row_sums.max()) / (n - 1)

    weights = np.outer(counts, counts)
    pair_sig = float(np.triu(weights * sig, k=1).sum())
    pair_sig += float((counts * (counts - 1.0) / 2.0) @ sigmoid(2.0 * values))
    rho_n = pair_sig / (n * (n - 1) / 2.0)
    return ModelDiagnostics(n=n, b_n=b_n, c_n=c_n, q_n=1.0 / q_inv, rho_n=rho_n)


def diagnostics(beta: np.ndarray) -> ModelDiagnostics:
    """Exact b_n, c_n, q_n, rho_n at a parameter vector.

    Internally groups equal entries, so class-constant vectors cost O(m^2)
    instead of O(n^2).
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape[0] < 2:
        raise ValueError("diagnostics need at least two nodes")
    values, counts = np.unique(beta, return_counts=True)
    return _diagnostics_grouped(values, counts.astype(float), beta.shape[0])


def diagnostics_reduced(delta: np.ndarray, hist: DegreeHistogram) -> ModelDiagnostics:
    """Same quantities evaluated from class values and multiplicities."""
    delta = _check_reduced(delta, hist)
    if hist.n < 2:
        raise ValueError("diagnostics need at least two nodes")
    return _diagnostics_grouped(delta, hist.counts.astype(float), hist.n)

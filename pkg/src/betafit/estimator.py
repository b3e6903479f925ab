"""Scikit-learn style estimator facade over the degree-indexed solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .graph_io import as_degree_histogram
from .model import class_expected_degrees, sigmoid, validate_lambda
from .solver import FitConfig, fit as solver_fit


class BetaModel(BaseEstimator):
    """Ridge-penalized beta-model fit of an undirected network.

    Each node i carries a real parameter beta_i and edge (i, j) occurs
    independently with probability sigmoid(beta_i + beta_j); fitting
    maximizes the likelihood penalized by (lam/2) * ||beta - mean(beta)||^2.
    The solver works in the reduced space of distinct degrees, so fits scale
    to millions of nodes when the number of distinct degrees is small.

    Parameters
    ----------
    lam : float, default=0.1
        Penalty strength; must be >= 0.  Any positive value guarantees a
        finite minimizer exists; at 0 the fit may diverge for some graphs.
    method : {"newton", "gradient"}, default="newton"
    tol : float, default=1e-8
        Stopping threshold on the count-scaled gradient norm.
    max_iter : int, default=100
    bounds : tuple (lo, hi) or None
        Optional coordinatewise box constraint on the class parameters.
    record_trace : bool, default=False
        Keep per-iteration (objective, gradient norm, step size) records.
    num_nodes : int or None
        Node count override when X is a bare edge array that cannot express
        trailing isolated nodes.

    Attributes
    ----------
    beta_ : ndarray of shape (n,)
        Fitted per-node parameters.
    delta_ : ndarray of shape (m,)
        Fitted per-degree-class parameters.
    classes_ : ndarray of shape (m,)
        The distinct degrees, ascending.
    class_counts_ : ndarray of shape (m,)
    converged_ : bool
    n_iter_ : int
    objective_ : float
    result_ : FitResult
        The full solver result, including the histogram.

    Examples
    --------
    >>> edges = [(0, 1), (1, 2)]
    >>> m = BetaModel(lam=0.5).fit(edges)
    >>> m.predict_proba([(0, 2)]).shape
    (1,)
    """

    def __init__(
        self,
        lam: float = 0.1,
        method: str = "newton",
        tol: float = 1e-8,
        max_iter: int = 100,
        bounds: tuple[float, float] | None = None,
        record_trace: bool = False,
        num_nodes: int | None = None,
    ):
        self.lam = lam
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.bounds = bounds
        self.record_trace = record_trace
        self.num_nodes = num_nodes

    def fit(self, X, y=None):
        """Fit the model to a network.

        X may be an EdgeList, DegreeSequence, DegreeHistogram, a 1-d integer
        degree vector, or an (E, 2) integer array of edge pairs.
        """
        lam = validate_lambda(self.lam)
        hist = as_degree_histogram(X, num_nodes=self.num_nodes)
        cfg = FitConfig(
            method=self.method,
            tol_grad=self.tol,
            max_iters=self.max_iter,
            bounds=self.bounds,
            record_trace=self.record_trace,
        )
        result = solver_fit(hist, lam, cfg)
        self.result_ = result
        self.histogram_ = hist
        self.n_nodes_ = hist.n
        self.classes_ = hist.degrees
        self.class_counts_ = hist.counts
        self.delta_ = result.delta.values
        self.beta_ = result.beta
        self.converged_ = result.converged
        self.n_iter_ = result.iterations
        self.objective_ = result.objective
        self.grad_norm_ = result.grad_inf_norm
        return self

    def _validate_pairs(self, pairs) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= self.n_nodes_):
            raise ValueError("pair index out of range")
        return pairs

    def predict_proba(self, pairs) -> np.ndarray:
        """Fitted edge probabilities for an (k, 2) array of node pairs."""
        check_is_fitted(self, "beta_")
        pairs = self._validate_pairs(pairs)
        return sigmoid(self.beta_[pairs[:, 0]] + self.beta_[pairs[:, 1]])

    def predict(self, pairs) -> np.ndarray:
        """Most likely edge indicator (probability >= 0.5) per pair."""
        return (self.predict_proba(pairs) >= 0.5).astype(np.int64)

    def expected_degrees(self) -> np.ndarray:
        """Fitted expected degree of every node; O(m^2 + n)."""
        check_is_fitted(self, "beta_")
        per_class = class_expected_degrees(self.delta_, self.histogram_)
        return per_class[self.histogram_.node_to_class]

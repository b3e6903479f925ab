"""Damped Newton / gradient descent in the degree-indexed parameter space.

The reduced objective is strictly convex (positive-definite Jacobian for
lam > 0, and still positive definite at lam = 0), so whenever a finite
minimizer exists both methods converge to the unique solution.  Each
iteration costs O(m^2) with m the number of distinct degrees, independent
of the node count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .graph_io import DegreeHistogram
from .model import (
    ClassParams,
    expand,
    gradient_full,
    gradient_reduced,
    jacobian_reduced,
    objective_reduced,
    sigmoid,
    validate_lambda,
)

__all__ = [
    "DegenerateGraphError",
    "DivergedError",
    "FitConfig",
    "FitResult",
    "StationarityReport",
    "TracePoint",
    "check_stationarity",
    "default_init",
    "expand",
    "fit",
    "warm_config",
]

# Iterates past this magnitude mean probabilities are saturated to machine
# precision and no finite stationary point is being approached.
DIVERGENCE_LIMIT = 750.0


class DegenerateGraphError(ValueError):
    """All degrees 0 or all degrees n-1: no finite minimizer exists."""


class DivergedError(RuntimeError):
    """Iterates escaped toward infinity before convergence."""


@dataclass(frozen=True)
class FitConfig:
    """Solver knobs.

    ``tol_grad`` applies to the count-scaled gradient norm
    max_k |G_k| / n_k (the raw G_k carries an n_k factor, so an unscaled
    tolerance would over-weight large classes).  ``bounds`` clamps delta
    coordinatewise for constrained fits; convergence is then declared on
    the projected gradient.  ``init_delta`` overrides the smoothed per-class
    logit initialization (used for warm starts).

    Newton reaches tolerances near machine precision; the gradient method
    is floor-limited by objective roundoff in its line search, so scaled
    tolerances much below ~1e-6 may exhaust the budget instead.
    """

    method: str = "newton"
    tol_grad: float = 1e-8
    max_iters: int = 100
    ls_shrink: float = 0.5
    ls_c1: float = 1e-4
    ls_max_halvings: int = 60
    bounds: tuple[float, float] | None = None
    record_trace: bool = False
    init_delta: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.method not in ("newton", "gradient"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.tol_grad > 0:
            raise ValueError("tol_grad must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not 0 < self.ls_shrink < 1:
            raise ValueError("line-search shrink factor must be in (0, 1)")
        if self.bounds is not None:
            lo, hi = self.bounds
            if not lo < hi:
                raise ValueError("bounds must satisfy lo < hi")


@dataclass(frozen=True)
class TracePoint:
    objective: float
    grad_norm: float
    step_size: float


@dataclass(frozen=True)
class FitResult:
    """Converged (or best-effort) fit in both coordinate systems."""

    delta: ClassParams
    beta: np.ndarray
    lam: float
    converged: bool
    iterations: int
    grad_inf_norm: float  # scaled: max_k |G_k| / n_k (projected under bounds)
    objective: float
    trace: tuple[TracePoint, ...] | None = None

    @property
    def histogram(self) -> DegreeHistogram:
        return self.delta.histogram


def default_init(hist: DegreeHistogram) -> np.ndarray:
    """Smoothed per-class logit start: 0.5*log((d+0.5) / (n-0.5-d)).

    Exact for regular graphs and finite for degree-0 and degree-(n-1)
    classes.
    """
    d = hist.degrees.astype(float)
    n = float(hist.n)
    return 0.5 * np.log((d + 0.5) / (n - 0.5 - d))


def _scaled_grad_norm(
    delta: np.ndarray,
    grad: np.ndarray,
    counts: np.ndarray,
    bounds: tuple[float, float] | None,
) -> float:
    if bounds is None:
        return float(np.max(np.abs(grad) / counts))
    lo, hi = bounds
    projected = delta - np.clip(delta - grad, lo, hi)
    return float(np.max(np.abs(projected) / counts))


def _newton_direction(jac: np.ndarray, grad: np.ndarray) -> np.ndarray | None:
    try:
        factor = scipy.linalg.cho_factor(jac, lower=True, check_finite=False)
        return -scipy.linalg.cho_solve(factor, grad, check_finite=False)
    except scipy.linalg.LinAlgError:
        pass
    # PD in exact arithmetic; guard against roundoff at saturated sigma'.
    m = jac.shape[0]
    jitter = 1e-10 * float(np.trace(jac)) / m
    try:
        factor = scipy.linalg.cho_factor(
            jac + jitter * np.eye(m), lower=True, check_finite=False
        )
        return -scipy.linalg.cho_solve(factor, grad, check_finite=False)
    except scipy.linalg.LinAlgError:
        return None


def _backtrack(
    delta: np.ndarray,
    direction: np.ndarray,
    grad: np.ndarray,
    objective: float,
    hist: DegreeHistogram,
    lam: float,
    cfg: FitConfig,
    t0: float,
):
    """Backtracking line search with sufficient decrease, projected if bounded.

    Near the optimum the true decrease drops below the float resolution of
    the objective while the step itself is still perfectly representable in
    delta, so acceptance allows machine-noise slack on the comparison.
    Returns (new_delta, new_objective, step) or None if no acceptable step
    was found within the halving budget.
    """
    noise = 16.0 * np.finfo(float).eps * max(1.0, abs(objective))
    t = t0
    for _ in range(cfg.ls_max_halvings + 1):
        trial = delta + t * direction
        if cfg.bounds is not None:
            np.clip(trial, cfg.bounds[0], cfg.bounds[1], out=trial)
        step = trial - delta
        decrease = float(grad @ step)
        if decrease < 0:
            f_trial = objective_reduced(trial, hist, lam)
            if f_trial <= objective + cfg.ls_c1 * decrease + noise:
                return trial, f_trial, t
        t *= cfg.ls_shrink
    return None


def fit(hist: DegreeHistogram, lam: float, config: FitConfig | None = None) -> FitResult:
    """Minimize the reduced objective and expand the solution to all nodes.

    Raises :class:`DegenerateGraphError` for empty/complete graphs (the
    summed gradient cannot vanish at any finite point because the mean
    direction is unpenalized) and :class:`DivergedError` when iterates
    escape past ``DIVERGENCE_LIMIT``, which is how nonexistence at lam = 0
    surfaces.  Exhausting ``max_iters`` returns converged=False rather than
    raising.
    """
    lam = validate_lambda(lam)
    cfg = config if config is not None else FitConfig()
    n = hist.n
    if n < 2:
        raise ValueError("need at least two nodes to fit")
    total = hist.total_degree
    if total == 0 or total == n * (n - 1):
        raise DegenerateGraphError(
            f"degenerate graph: total degree {total} of n={n} nodes means an "
            "all-empty or all-complete network, which has no finite fit"
        )

    counts = hist.counts.astype(float)
    if cfg.init_delta is not None:
        delta = np.asarray(cfg.init_delta, dtype=float).copy()
        if delta.shape != (hist.m,):
            raise ValueError("init_delta must have one entry per degree class")
    else:
        delta = default_init(hist)
    if cfg.bounds is not None:
        delta = np.clip(delta, cfg.bounds[0], cfg.bounds[1])

    objective = objective_reduced(delta, hist, lam)
    grad = gradient_reduced(delta, hist, lam)
    gnorm = _scaled_grad_norm(delta, grad, counts, cfg.bounds)
    converged = gnorm <= cfg.tol_grad
    trace: list[TracePoint] = []
    iterations = 0
    t_accept = 1.0

    while not converged and iterations < cfg.max_iters:
        direction = None
        if cfg.method == "newton":
            jac = jacobian_reduced(delta, hist, lam)
            if cfg.bounds is not None:
                # freeze coordinates pinned at an active bound and take the
                # Newton step in the free subspace
                lo, hi = cfg.bounds
                active = ((delta <= lo) & (grad > 0)) | ((delta >= hi) & (grad < 0))
                free = ~active
                if free.any():
                    sub = _newton_direction(
                        jac[np.ix_(free, free)], grad[free]
                    )
                    if sub is not None:
                        direction = np.zeros_like(delta)
                        direction[free] = sub
            else:
                direction = _newton_direction(jac, grad)
            if direction is not None and float(grad @ direction) >= 0:
                direction = None
            t0 = 1.0
        if direction is None:
            direction = -grad
            t0 = min(1.0, 2.0 * t_accept) if cfg.method == "gradient" else 1.0

        outcome = _backtrack(delta, direction, grad, objective, hist, lam, cfg, t0)
        if outcome is None and cfg.method == "newton":
            outcome = _backtrack(delta, -grad, grad, objective, hist, lam, cfg, 1.0)
        if outcome is None:
            break  # stalled; report non-convergence below
        delta, objective, t_accept = outcome
        iterations += 1
        if np.max(np.abs(delta)) > DIVERGENCE_LIMIT:
            raise DivergedError(
                f"iterates exceeded |delta| = {DIVERGENCE_LIMIT} after "
                f"{iterations} iterations at lam={lam}; the minimizer is "
                "not finite for this input"
            )
        grad = gradient_reduced(delta, hist, lam)
        gnorm = _scaled_grad_norm(delta, grad, counts, cfg.bounds)
        if cfg.record_trace:
            trace.append(TracePoint(objective, gnorm, t_accept))
        converged = gnorm <= cfg.tol_grad

    params = ClassParams(values=delta, histogram=hist)
    return FitResult(
        delta=params,
        beta=params.expand(),
        lam=lam,
        converged=bool(converged),
        iterations=iterations,
        grad_inf_norm=gnorm,
        objective=objective,
        trace=tuple(trace) if cfg.record_trace else None,
    )


@dataclass(frozen=True)
class StationarityReport:
    """Full-space stationarity check of a reduced fit (small n only)."""

    grad_inf_norm: float
    degree_identity_residual: float


def check_stationarity(
    result: FitResult, degrees: np.ndarray, lam: float
) -> StationarityReport:
    """Evaluate the O(n^2) full gradient at the expanded solution.

    Also reports |sum_i sum_{j != i} sigma(b_i+b_j) - sum_i d_i|: the
    penalty contributions cancel in the gradient sum, so at a stationary
    point the fitted total expected degree matches the observed one for
    every lam.
    """
    degrees = np.asarray(degrees, dtype=float)
    beta = result.beta
    full_grad = gradient_full(beta, degrees, lam)
    sig = sigmoid(beta[:, None] + beta[None, :])
    np.fill_diagonal(sig, 0.0)
    residual = abs(float(sig.sum()) - float(degrees.sum()))
    return StationarityReport(
        grad_inf_norm=float(np.abs(full_grad).max()),
        degree_identity_residual=residual,
    )


def warm_config(config: FitConfig, init_delta: np.ndarray) -> FitConfig:
    """Copy of ``config`` starting from a previous solution."""
    return replace(config, init_delta=np.asarray(init_delta, dtype=float))

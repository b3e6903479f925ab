"""Data-driven penalty selection over a grid via an AIC-type criterion.

The criterion is an effective-dimension term plus the penalized objective
at the fit:

    AIC(lam) = n * d_max / (d_max + lam) + L_lam(beta_hat)

where d_max, the maximum observed degree, stands in for the largest
eigenvalue of the edge-variance matrix.  ``effective_dim_exact`` computes
the underlying hat-matrix trace by dense eigendecomposition for small-n
checks of that substitution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .graph_io import DegreeHistogram
from .model import jacobian_full, validate_lambda
from .solver import DegenerateGraphError, DivergedError, FitConfig, FitResult
from .solver import fit as solver_fit
from .solver import warm_config


class TuningError(RuntimeError):
    """Every grid point failed; carries per-lambda reasons."""

    def __init__(self, reasons: dict[float, str]):
        self.reasons = dict(reasons)
        lines = ", ".join(f"lam={lam}: {why}" for lam, why in self.reasons.items())
        super().__init__(f"no grid point produced a converged fit ({lines})")


def default_grid() -> np.ndarray:
    """{0} plus exp(0.5*j) - 1 for j = 1..12."""
    return np.concatenate(([0.0], np.expm1(0.5 * np.arange(1, 13))))


def effective_dim(n: int, d_max: int, lam: float) -> float:
    """Surrogate model dimension n * d_max / (d_max + lam)."""
    return n * d_max / (d_max + lam)


def aic(result: FitResult, hist: DegreeHistogram) -> float:
    """AIC value of a converged fit."""
    if not result.converged:
        raise ValueError("AIC at a non-stationary point is meaningless")
    d_max = hist.d_max
    if d_max == 0:
        raise ValueError("d_max = 0: degenerate graph")
    return effective_dim(hist.n, d_max, result.lam) + result.objective


def effective_dim_exact(beta: np.ndarray, lam: float) -> float:
    """Dense-oracle hat-matrix trace Tr{(I + lam * V(beta)^-1)^-1}.

    Equals sum_i mu_i / (mu_i + lam) over the eigenvalues of the
    edge-variance matrix V(beta); O(n^3), small n only.
    """
    lam = validate_lambda(lam)
    v = jacobian_full(np.asarray(beta, dtype=float), 0.0)
    mu = np.linalg.eigvalsh(v)
    return float(np.sum(mu / (mu + lam))) if lam > 0 else float(len(mu))


@dataclass(frozen=True)
class TuneRow:
    lam: float
    aic: float
    objective: float
    effective_dim: float
    converged: bool
    iterations: int
    error: str | None = None


@dataclass(frozen=True)
class TuneResult:
    rows: tuple[TuneRow, ...]
    best_lambda: float

    @property
    def best_row(self) -> TuneRow:
        candidates = [r for r in self.rows if r.lam == self.best_lambda]
        return candidates[0]

    def to_csv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream)
        writer.writerow(
            ["lambda", "aic", "objective", "effective_dim", "converged", "iterations"]
        )
        for row in self.rows:
            writer.writerow(
                [
                    repr(row.lam),
                    repr(row.aic),
                    repr(row.objective),
                    repr(row.effective_dim),
                    row.converged,
                    row.iterations,
                ]
            )


def tune(
    hist: DegreeHistogram,
    lambdas: Sequence[float] | None = None,
    config: FitConfig | None = None,
    warm_start: bool = True,
) -> TuneResult:
    """Fit every grid value and select the AIC argmin among converged rows.

    Grid values are visited in ascending order, each fit warm-started from
    the previous solution unless ``warm_start`` is off.  Ties break toward
    the larger lambda (prefer the more regularized model at equal score);
    non-converged rows are reported but excluded from the argmin.
    """
    grid = np.asarray(
        default_grid() if lambdas is None else list(lambdas), dtype=float
    )
    if grid.size == 0:
        raise ValueError("empty tuning grid")
    if (grid < 0).any():
        raise ValueError("grid values must be non-negative")
    if (np.diff(grid) <= 0).any():
        raise ValueError("grid must be strictly increasing")
    cfg = config if config is not None else FitConfig()

    rows: list[TuneRow] = []
    reasons: dict[float, str] = {}
    prev = None
    for lam in grid:
        lam = float(lam)
        run_cfg = warm_config(cfg, prev) if (warm_start and prev is not None) else cfg
        try:
            result = solver_fit(hist, lam, run_cfg)
        except (DegenerateGraphError, DivergedError) as exc:
            reasons[lam] = str(exc)
            rows.append(
                TuneRow(lam, float("nan"), float("nan"),
                        effective_dim(hist.n, hist.d_max, lam), False, 0, str(exc))
            )
            continue
        if result.converged:
            prev = result.delta.values
            rows.append(
                TuneRow(
                    lam,
                    aic(result, hist),
                    result.objective,
                    effective_dim(hist.n, hist.d_max, lam),
                    True,
                    result.iterations,
                )
            )
        else:
            reasons[lam] = f"not converged after {result.iterations} iterations"
            rows.append(
                TuneRow(lam, float("nan"), result.objective,
                        effective_dim(hist.n, hist.d_max, lam), False,
                        result.iterations, reasons[lam])
            )

    converged_rows = [r for r in rows if r.converged]
    if not converged_rows:
        raise TuningError(reasons)
    best_aic = min(r.aic for r in converged_rows)
    best_lambda = max(r.lam for r in converged_rows if r.aic == best_aic)
    return TuneResult(rows=tuple(rows), best_lambda=best_lambda)

import io

import numpy as np
import pytest

from betafit.graph_io import build_histogram, degrees_of
from betafit.model import jacobian_full
from betafit.solver import FitConfig, fit
from betafit.tuning import (
    TuningError,
    aic,
    default_grid,
    effective_dim,
    effective_dim_exact,
    tune,
)

from conftest import hist_from_degrees, random_nondegenerate_graph


def test_default_grid_values():
    grid = default_grid()
    assert grid[0] == 0.0
    assert grid[1] == pytest.approx(np.e**0.5 - 1)
    assert grid[-1] == pytest.approx(np.e**6 - 1)
    assert len(grid) == 13
    assert (np.diff(grid) > 0).all()


def test_effective_dim_arithmetic():
    assert effective_dim(100, 20, 20.0) == pytest.approx(50.0)
    assert effective_dim(7, 3, 0.0) == 7.0


def test_aic_at_lambda_zero_is_n_plus_objective(rng):
    g = random_nondegenerate_graph(rng, 20, 0.5, require_interior=True)
    hist = build_histogram(degrees_of(g))
    result = fit(hist, 0.0)
    assert result.converged
    assert aic(result, hist) == pytest.approx(hist.n + result.objective, rel=1e-12)


def test_aic_requires_convergence(rng):
    g = random_nondegenerate_graph(rng, 15, 0.5)
    hist = build_histogram(degrees_of(g))
    result = fit(hist, 0.5, FitConfig(max_iters=1))
    with pytest.raises(ValueError):
        aic(result, hist)


def test_tune_single_grid_point(rng):
    g = random_nondegenerate_graph(rng, 20, 0.4)
    hist = build_histogram(degrees_of(g))
    result = tune(hist, [0.1])
    assert result.best_lambda == 0.1
    assert len(result.rows) == 1
    assert result.rows[0].converged


def test_tune_warm_and_cold_start_agree(rng):
    g = random_nondegenerate_graph(rng, 40, 0.35)
    hist = build_histogram(degrees_of(g))
    warm = tune(hist)
    cold = tune(hist, warm_start=False)
    assert warm.best_lambda == cold.best_lambda
    for a, b in zip(warm.rows, cold.rows):
        assert a.aic == pytest.approx(b.aic, rel=1e-8)


def test_tune_objective_nondecreasing_in_lambda(rng):
    g = random_nondegenerate_graph(rng, 40, 0.35)
    hist = build_histogram(degrees_of(g))
    result = tune(hist)
    objs = [r.objective for r in result.rows if r.converged]
    assert all(b >= a - 1e-9 * max(1, abs(a)) for a, b in zip(objs, objs[1:]))
    dims = [r.effective_dim for r in result.rows]
    assert all(b < a for a, b in zip(dims, dims[1:]))


def test_tune_relabeling_invariance(rng):
    g = random_nondegenerate_graph(rng, 30, 0.4)
    hist = build_histogram(degrees_of(g))
    perm = rng.permutation(30)
    from betafit.graph_io import EdgeList

    relabeled = EdgeList.from_pairs(perm[g.edges], n=30)
    hist2 = build_histogram(degrees_of(relabeled))
    r1 = tune(hist, [0.0, 0.5, 2.0])
    r2 = tune(hist2, [0.0, 0.5, 2.0])
    assert r1.best_lambda == r2.best_lambda
    for a, b in zip(r1.rows, r2.rows):
        assert a.aic == pytest.approx(b.aic, rel=1e-12)


def test_tune_grid_validation(rng):
    g = random_nondegenerate_graph(rng, 10, 0.5)
    hist = build_histogram(degrees_of(g))
    with pytest.raises(ValueError):
        tune(hist, [])
    with pytest.raises(ValueError):
        tune(hist, [-1.0, 0.5])
    with pytest.raises(ValueError):
        tune(hist, [0.5, 0.5])


def test_tune_all_failures_raises():
    degenerate = hist_from_degrees([0, 0, 0])
    with pytest.raises(TuningError) as err:
        tune(degenerate, [0.1, 1.0])
    assert 0.1 in err.value.reasons


def test_tune_csv_format(rng):
    g = random_nondegenerate_graph(rng, 15, 0.5)
    hist = build_histogram(degrees_of(g))
    result = tune(hist, [0.1, 1.0])
    buf = io.StringIO()
    result.to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "lambda,aic,objective,effective_dim,converged,iterations"
    assert len(lines) == 3
    assert float(lines[1].split(",")[0]) == 0.1


def test_exact_effective_dim_surrogate_bound(rng):
    # hat-matrix trace vs the surrogate plus n/4 slack, small n
    for _ in range(10):
        n = int(rng.integers(8, 40))
        g = random_nondegenerate_graph(rng, n, float(rng.uniform(0.25, 0.7)))
        hist = build_histogram(degrees_of(g))
        lam = float(rng.choice([0.0, 0.5, 3.0, 25.0]))
        result = fit(hist, lam)
        if not result.converged:
            continue
        exact = effective_dim_exact(result.beta, lam)
        surrogate = effective_dim(hist.n, hist.d_max, lam)
        assert exact <= surrogate + 0.25 * hist.n


def test_exact_effective_dim_eigen_identity(rng):
    # sum of mu/(mu+lam) over eigenvalues of the variance matrix
    g = random_nondegenerate_graph(rng, 12, 0.5)
    hist = build_histogram(degrees_of(g))
    result = fit(hist, 1.5)
    mu = np.linalg.eigvalsh(jacobian_full(result.beta, 0.0))
    assert effective_dim_exact(result.beta, 1.5) == pytest.approx(
        float(np.sum(mu / (mu + 1.5))), rel=1e-12
    )
    assert effective_dim_exact(result.beta, 0.0) == 12.0

"""Command-line surface: fit, tune, select, simulate, mc, wabs, gof.

Standard output carries only data; diagnostics go to standard error.
Numbers are serialized via repr (shortest round-trip form, at most 17
significant digits), so written fits re-read bit-exactly.

Exit codes:
    0  success
    2  usage, parse or validation error
    3  degenerate graph (all degrees 0 or all degrees n-1)
    4  diverged, iteration budget exhausted, or too many MC failures
    5  selection error (e.g. band density 0 or 1, degree-only input)
    6  tuning failed on every grid value
    7  analysis error (topic parsing, saturated probabilities)
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import IO, Iterator, Sequence

import numpy as np

from . import __version__
from .analysis import (
    TW1_MEAN,
    TW1_SD,
    AnalysisError,
    gof_statistic,
    read_topics_csv,
    wabs,
)
from .graph_io import (
    EdgeListParseError,
    build_histogram,
    degrees_of,
    read_degree_file,
    read_edge_list,
)
from .model import validate_lambda
from .selection import SelectionConfig, SelectionError, select
from .simulate import (
    McError,
    SimScenario,
    available_settings,
    run_mc,
    sample_network,
)
from .solver import DegenerateGraphError, DivergedError, FitConfig, FitResult
from .solver import fit as solver_fit
from .tuning import TuningError, default_grid, tune

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_NOT_CONVERGED = 4
EXIT_SELECTION = 5
EXIT_TUNING = 6
EXIT_ANALYSIS = 7

# The per-node block dominates output size at knowledge-graph scale; the
# class block carries the same information, so suppress nodes past this n.
CLASSES_ONLY_DEFAULT_ABOVE = 10**6


def _log(message: str) -> None:
    print(message, file=sys.stderr)


@contextlib.contextmanager
def _open_out(path: str) -> Iterator[IO[str]]:
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("BETAFIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            _log(f"ignoring non-integer BETAFIT_THREADS={env!r}")
    return os.cpu_count() or 1


def _load_graph(args) -> tuple:
    """Returns (histogram, labels, edge_list_or_None, degree_sequence)."""
    if getattr(args, "degrees", False):
        seq = read_degree_file(args.input)
        return build_histogram(seq), seq.labels, None, seq
    g = read_edge_list(args.input, num_nodes=getattr(args, "num_nodes", None))
    if g.dropped_self_loops or g.dropped_duplicates:
        _log(
            f"dropped {g.dropped_self_loops} self-loops and "
            f"{g.dropped_duplicates} duplicate edges"
        )
    seq = degrees_of(g)
    return build_histogram(seq), g.node_labels, g, seq


def _fit_config(args) -> FitConfig:
    bounds = None
    if getattr(args, "bounds", None):
        parts = args.bounds.split(",")
        if len(parts) != 2:
            raise ValueError("--bounds expects 'lo,hi'")
        bounds = (float(parts[0]), float(parts[1]))
    return FitConfig(
        method=args.method,
        tol_grad=args.tol,
        max_iters=args.max_iters,
        bounds=bounds,
        record_trace=False,
    )


def _fit_result_dict(
    result: FitResult, labels, include_nodes: bool
) -> dict:
    hist = result.histogram
    out = {
        "lambda": result.lam,
        "converged": result.converged,
        "iterations": result.iterations,
        "objective": result.objective,
        "grad_inf_norm": result.grad_inf_norm,
        "n": hist.n,
        "m": hist.m,
        "classes": [
            {"degree": int(d), "count": int(c), "delta": float(v)}
            for d, c, v in zip(hist.degrees, hist.counts, result.delta.values)
        ],
    }
    if include_nodes:
        degrees = hist.node_degrees()
        out["nodes"] = [
            {
                "label": labels[i] if labels is not None else str(i),
                "degree": int(degrees[i]),
                "beta": float(result.beta[i]),
            }
            for i in range(hist.n)
        ]
    return out


def read_fit_json(path: str) -> dict:
    """Re-read a fit written by the fit subcommand."""
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _parse_lambda_list(raw: str) -> list[float]:
    values = [float(tok) for tok in raw.split(",") if tok.strip()]
    if not values:
        raise ValueError("empty lambda list")
    return values


def _read_scenario_file(path: str) -> dict:
    """key=value scenario format: n, setting, seed, lambdas, replicates."""
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"scenario line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key == "n":
                out["n"] = int(value)
            elif key == "setting":
                out["setting"] = value
            elif key == "seed":
                out["seed"] = int(value)
            elif key == "lambdas":
                out["lambdas"] = _parse_lambda_list(value)
            elif key == "replicates":
                out["replicates"] = int(value)
            else:
                raise ValueError(f"scenario line {lineno}: unknown key {key!r}")
    return out


def _scenario_from_args(args) -> SimScenario:
    if getattr(args, "scenario", None):
        overrides = _read_scenario_file(args.scenario)
        for key in ("n", "setting", "seed", "lambdas", "replicates"):
            if key in overrides and hasattr(args, key) and getattr(args, key) is None:
                setattr(args, key, overrides[key])
    beta_star = None
    if getattr(args, "beta_file", None):
        beta_star = np.loadtxt(args.beta_file, dtype=float, ndmin=1)
        if args.n is None:
            args.n = len(beta_star)
    if args.n is None:
        raise ValueError("node count required (--n or scenario file)")
    if beta_star is not None:
        return SimScenario(n=args.n, beta_star=beta_star, seed=args.seed or 0)
    if args.setting is None:
        raise ValueError("provide --setting or --beta-file")
    return SimScenario(n=args.n, setting=args.setting, seed=args.seed or 0)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    validate_lambda(args.lam)
    hist, labels, _, _ = _load_graph(args)
    result = solver_fit(hist, args.lam, _fit_config(args))
    classes_only = args.classes_only
    if classes_only is None:
        classes_only = hist.n > CLASSES_ONLY_DEFAULT_ABOVE
    with _open_out(args.out) as fh:
        json.dump(_fit_result_dict(result, labels, not classes_only), fh)
        fh.write("\n")
    if not result.converged:
        _log(
            f"not converged after {result.iterations} iterations "
            f"(scaled gradient norm {result.grad_inf_norm:.3e})"
        )
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_tune(args) -> int:
    hist, _, _, _ = _load_graph(args)
    lambdas = _parse_lambda_list(args.lambdas) if args.lambdas else default_grid()
    result = tune(hist, lambdas, _fit_config(args), warm_start=not args.cold_start)
    if args.out:
        with _open_out(args.out) as fh:
            result.to_csv(fh)
    # .17g keeps the full round-trip precision while printing 0.0 as "0"
    print(f"{result.best_lambda:.17g}")
    return EXIT_OK


def cmd_select(args) -> int:
    validate_lambda(args.lam)
    if args.degrees:
        raise SelectionError(
            "selection needs the adjacency; supply an edge-list input"
        )
    hist, labels, graph, _ = _load_graph(args)
    result = solver_fit(hist, args.lam, _fit_config(args))
    if not result.converged:
        _log("fit did not converge; cannot select")
        return EXIT_NOT_CONVERGED
    cfg = SelectionConfig(
        zeta0=args.zeta0,
        threshold_scale=args.threshold_scale,
        center_mode=args.center_mode,
        qhat_mode=args.qhat_mode,
        literal_threshold=args.literal_threshold,
    )
    selected = select(result, graph, cfg)
    with _open_out(args.out) as fh:
        selected.to_json(fh, labels)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = _scenario_from_args(args)
    g = sample_network(scn)
    with _open_out(args.out) as fh:
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")
    _log(f"sampled n={g.n} network with {g.edge_count} edges (seed {scn.seed})")
    return EXIT_OK


def cmd_mc(args) -> int:
    scn = _scenario_from_args(args)
    if args.replicates is None:
        raise ValueError("--replicates required")
    lambdas = args.lambdas if isinstance(args.lambdas, list) else None
    if lambdas is None:
        lambdas = _parse_lambda_list(args.lambdas) if args.lambdas else [0.1]
    track = [int(t) for t in args.track.split(",")] if args.track else None
    cfg = _fit_config(args)
    threads = _threads(args.threads)
    reports = [
        run_mc(scn, lam, args.replicates, cfg, track=track, threads=threads)
        for lam in lambdas
    ]
    with _open_out(args.out) as fh:
        header_written = False
        for report in reports:
            buf = io.StringIO()
            report.to_csv(buf)
            lines = buf.getvalue().splitlines()
            if not header_written:
                fh.write("lambda," + lines[0] + "\n")
                header_written = True
            for line in lines[1:]:
                fh.write(f"{report.lam!r}," + line + "\n")
    agg = [report.aggregates() for report in reports]
    with _open_out(args.agg_out) as fh:
        json.dump(agg if len(agg) > 1 else agg[0], fh)
        fh.write("\n")
    return EXIT_OK


def cmd_wabs(args) -> int:
    fit_doc = read_fit_json(args.fit)
    if "nodes" not in fit_doc:
        raise AnalysisError(
            "fit JSON has no per-node block (written with --classes-only?); "
            "re-run fit with --no-classes-only to score topics"
        )
    labels = [node["label"] for node in fit_doc["nodes"]]
    beta = np.array([node["beta"] for node in fit_doc["nodes"]], dtype=float)
    label_to_index = {label: i for i, label in enumerate(labels)}
    with open(args.topics, "r", encoding="utf-8") as fh:
        topics = read_topics_csv(fh)
    result = wabs(topics, beta, label_to_index)
    if result.unresolved_labels:
        _log(f"skipped {result.unresolved_labels} entries with unknown labels")
    with _open_out(args.out) as fh:
        result.to_csv(fh)
    return EXIT_OK


def cmd_gof(args) -> int:
    validate_lambda(args.lam)
    cfg = FitConfig(method=args.method, tol_grad=args.tol, max_iters=args.max_iters)
    rows = []
    if args.edges:
        g = read_edge_list(args.edges, num_nodes=args.num_nodes)
        hist = build_histogram(degrees_of(g))
        result = solver_fit(hist, args.lam, cfg)
        if not result.converged:
            _log("fit did not converge")
            return EXIT_NOT_CONVERGED
        stat = gof_statistic(g, result)
        rows.append((0, stat.sigma1, stat.t_stat))
    else:
        scn = _scenario_from_args(args)
        reps = args.replicates or 1

        def one(r: int):
            rep = SimScenario(
                n=scn.n,
                setting=scn.setting,
                beta_star=scn.beta_star,
                seed=scn.seed ^ r,
            )
            g = sample_network(rep)
            hist = build_histogram(degrees_of(g))
            result = solver_fit(hist, args.lam, cfg)
            if not result.converged:
                return r, None
            stat = gof_statistic(g, result)
            return r, (r, stat.sigma1, stat.t_stat)

        with ThreadPoolExecutor(max_workers=_threads(args.threads)) as pool:
            outcomes = list(pool.map(one, range(reps)))
        for r, row in sorted(outcomes, key=lambda t: t[0]):
            if row is None:
                _log(f"replicate {r}: fit did not converge; skipped")
            else:
                rows.append(row)
    with _open_out(args.out) as fh:
        fh.write(f"# tw1_mean={TW1_MEAN!r} tw1_sd={TW1_SD!r}\n")
        fh.write("replicate,sigma1,t_stat\n")
        for r, sigma1, t_stat in rows:
            fh.write(f"{r},{sigma1!r},{t_stat!r}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_graph_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="edge-list file ('u v' per line) or degree file")
    p.add_argument(
        "--degrees",
        action="store_true",
        help="treat input as a degree file ('degree' or 'label degree' lines)",
    )
    p.add_argument(
        "--num-nodes",
        type=int,
        default=None,
        help="declare trailing isolated nodes an edge list cannot express",
    )


def _add_fit_flags(p: argparse.ArgumentParser, default_max_iters: int = 100) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=0.1,
                   help="penalty strength (>= 0)")
    p.add_argument("--method", choices=("newton", "gradient"), default="newton")
    p.add_argument("--tol", type=float, default=1e-8,
                   help="tolerance on the count-scaled gradient norm")
    p.add_argument("--max-iters", type=int, default=default_max_iters)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="betafit",
        description="Ridge-penalized beta-model fits for large sparse networks",
    )
    parser.add_argument("--version", action="version", version=f"betafit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the model and write a JSON result")
    _add_graph_input(p)
    _add_fit_flags(p)
    p.add_argument("--bounds", default=None, help="coordinatewise box 'lo,hi'")
    p.add_argument(
        "--classes-only",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="suppress the per-node block (default: only when n > 1e6)",
    )
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", help="sweep a lambda grid and pick the AIC argmin")
    _add_graph_input(p)
    p.add_argument("--lambdas", default=None,
                   help="comma-separated grid (default: 0 and exp(j/2)-1, j=1..12)")
    p.add_argument("--method", choices=("newton", "gradient"), default="newton")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--cold-start", action="store_true",
                   help="do not warm-start successive grid fits")
    p.add_argument("--out", default=None, help="CSV table destination")
    p.set_defaults(func=cmd_tune, bounds=None)

    p = sub.add_parser("select", help="threshold the fit into an active node set")
    _add_graph_input(p)
    _add_fit_flags(p)
    p.add_argument("--zeta0", type=float, default=0.5)
    p.add_argument("--threshold-scale", type=float, default=1.0)
    p.add_argument("--center-mode", choices=("half_logit", "full_logit"),
                   default="half_logit")
    p.add_argument("--qhat-mode", choices=("dmax", "exact_from_fit"), default="dmax")
    p.add_argument("--literal-threshold", action="store_true")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_select, bounds=None)

    p = sub.add_parser("simulate", help="sample one network and write its edge list")
    p.add_argument("--setting", choices=available_settings(), default=None)
    p.add_argument("--beta-file", default=None,
                   help="explicit true parameter vector, one value per line")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenario", default=None, help="key=value scenario file")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc", help="repeated sample-and-fit Monte Carlo run")
    p.add_argument("--setting", choices=available_settings(), default=None)
    p.add_argument("--beta-file", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenario", default=None)
    p.add_argument("--lambdas", default=None, help="comma-separated list")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--track", default=None,
                   help="comma-separated node indices to record")
    p.add_argument("--method", choices=("newton", "gradient"), default="newton")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: BETAFIT_THREADS or cpu count)")
    p.add_argument("--out", default="-", help="per-replicate CSV")
    p.add_argument("--agg-out", default="-", help="aggregate JSON")
    p.set_defaults(func=cmd_mc, bounds=None)

    p = sub.add_parser("wabs", help="rank topics by accumulated fitted popularity")
    p.add_argument("--topics", required=True, help="CSV topic,node_label,score")
    p.add_argument("--fit", required=True, help="fit JSON with a nodes block")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_wabs)

    p = sub.add_parser("gof", help="standardized-residual spectral statistic")
    p.add_argument("--edges", default=None, help="edge-list file (single-network mode)")
    p.add_argument("--num-nodes", type=int, default=None)
    p.add_argument("--setting", choices=available_settings(), default=None)
    p.add_argument("--beta-file", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenario", default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--method", choices=("newton", "gradient"), default="newton")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gof)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateGraphError as exc:
        _log(f"error: {exc}")
        return EXIT_DEGENERATE
    except DivergedError as exc:
        _log(f"error: {exc}")
        return EXIT_NOT_CONVERGED
    except McError as exc:
        _log(f"error: {exc}")
        return EXIT_NOT_CONVERGED
    except TuningError as exc:
        _log(f"error: {exc}")
        return EXIT_TUNING
    except SelectionError as exc:
        _log(f"error: {exc}")
        return EXIT_SELECTION
    except AnalysisError as exc:
        _log(f"error: {exc}")
        return EXIT_ANALYSIS
    except EdgeListParseError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

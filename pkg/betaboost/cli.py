"""
Command-line interface for betaboost.

Provides a Click-based CLI for computing beta values, building and querying
beta tables, learning network structures and evaluating sample-size bounds.
Every command writes a YAML manifest next to its primary output.
"""

from __future__ import annotations

import csv
import functools
import math
import sys
import warnings
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Optional, Sequence

import click
import numpy as np
import yaml

from betaboost import __version__
from betaboost.bayesnet import (
    BayesNet,
    SeparatingCollection,
    SeparatingKind,
    fit_network,
    read_counts,
    read_network,
    sample,
    two_node_network,
    write_counts,
    write_network,
)
from betaboost.betatable import (
    build_table,
    generate_n_list,
    generate_normalized_kl_list,
    load_table,
)
from betaboost.bounds import BoundParams, Theorem, theorem_terms
from betaboost.config import Config, load_config, resolve_table_path, setup_logging
from betaboost.errors import BetaboostError, ConvergenceWarning, TableFormatError
from betaboost.experiment import Match, RecoverySummary, recovery_trials
from betaboost.iproj import (
    conjecture_threshold,
    critical_points,
    curvature_threshold,
    kl_curve,
    merge_gamma,
    threshold_scan,
)
from betaboost.mcint import IntegrandContext, monte_carlo_integrate
from betaboost.score import (
    ScoreConfig,
    StratumSize,
    rank_dags,
    score_difference_two_node,
)
from betaboost.stepcdf import exact_beta_cdf, exact_beta_cdf_parallel

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_NOT_CONVERGED = 3


class Status(Enum):
    """Kinds of progress line: (tag, colour)."""

    INFO = ("[*]", "blue")
    DONE = ("[+]", "green")
    WARNING = ("[!]", "yellow")
    ERROR = ("[-]", "red")
    WORKING = ("[~]", "cyan")

    @property
    def tag(self) -> str:
        text, colour = self.value
        return click.style(text, fg=colour)


def echo_status(message: str, status: Status = Status.INFO) -> None:
    """Write a tagged progress line to stderr; stdout carries only results."""
    click.echo(f"{status.tag} {message}", err=True)


@dataclass
class RunManifest:
    """What a command was asked to do and what it wrote."""

    command: str
    parameters: dict[str, Any]
    seed: Optional[int] = None
    artifacts: list[str] = field(default_factory=list)
    results: dict[str, Any] = field(default_factory=dict)

    def write(self, output: str) -> str:
        """Write <output>.manifest.yaml and return its path."""
        path = f"{output}.manifest.yaml"
        data = {
            "command": self.command,
            "parameters": _plain(self.parameters),
            "seed": self.seed,
            "artifacts": list(self.artifacts),
            "results": _plain(self.results),
        }
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(data, f, sort_keys=False)
        return path


def _plain(value: Any) -> Any:
    """Convert numpy scalars and tuples so yaml.safe_dump accepts them."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: str, header: Sequence[str], rows) -> None:
    """Write a CSV with a header row and 17-significant-digit floats."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def handle_errors(func):
    """Map library errors to exit statuses with a styled message."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except BetaboostError as e:
            echo_status(str(e), Status.ERROR)
            sys.exit(EXIT_DOMAIN)

    return wrapper


def _finish(manifest: RunManifest, output: str) -> None:
    path = manifest.write(output)
    echo_status(f"Wrote {output} (manifest {path})", Status.DONE)


def _load_table_for(config: Config, table_path: Optional[str]):
    path = table_path or resolve_table_path(config)
    if not path:
        raise TableFormatError(
            "no beta table given; pass --table or set BETA_TABLE_PATH"
        )
    table = load_table(path)
    echo_status(f"Loaded {table} from {path}", Status.INFO)
    return table, path


def _score_config(config: Config, table) -> ScoreConfig:
    return ScoreConfig(
        eta=config.eta,
        kappa=config.kappa,
        table=table,
        collection=SeparatingCollection(SeparatingKind(config.collection), config.d),
        stratum_size=StratumSize(config.stratum_size),
    )


def _network_from(tau: Optional[float], network_path: Optional[str]) -> BayesNet:
    if (tau is None) == (network_path is None):
        raise click.UsageError("give exactly one of --tau or --network")
    if network_path is not None:
        return read_network(network_path)
    return two_node_network(tau)


def _dag_label(dag) -> str:
    return ";".join(
        f"{v}:" + ",".join(str(p) for p in dag.parents(v)) for v in range(dag.n)
    )


def _apply(config: Config, **overrides: Any) -> Config:
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    return config


@click.group()
@click.option(
    "--config",
    "-c",
    "config_path",
    type=click.Path(exists=True),
    help="Path to config file",
)
@click.option("--log-level", default=None, help="Override the logging level")
@click.version_option(__version__)
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str], log_level: Optional[str]):
    """
    Beta values of the mutual-information test and sparsity-boosted
    structure learning.

    \b
    Examples:
        betaboost beta-exact -N 50 --eta 0.01 --out beta50.csv
        betaboost beta-mc -N 1000 --eta 0.01 --gamma 0.001 --out trace.csv
        betaboost build-table --eta 0.01 --out table.txt
        betaboost sample --tau 0.1 -N 500 --seed 3 --out data.txt
        betaboost learn --data data.txt --table table.txt --out learned.txt
        betaboost bounds --theorem n-node-tolerance
    """
    config = load_config(config_path)
    if log_level:
        config.log_level = log_level
    setup_logging(config)
    ctx.obj = config


@main.command("beta-exact")
@click.option("--n-samples", "-N", "N", type=int, required=True, help="Sample size")
@click.option("--eta", type=float, default=None, help="Reference level")
@click.option("--gamma", multiple=True, type=float, help="Evaluate only these")
@click.option("--parallel", type=int, default=None, help="Worker processes")
@click.option("--out", required=True, type=click.Path(), help="Output path")
@click.pass_obj
@handle_errors
def beta_exact(
    config: Config,
    N: int,
    eta: Optional[float],
    gamma: tuple[float, ...],
    parallel: Optional[int],
    out: str,
) -> None:
    """Exact beta function by type enumeration."""
    config = _apply(config, eta=eta, parallel=parallel)
    if N > config.exact_ceiling:
        echo_status(
            f"N={N} exceeds the exact ceiling {config.exact_ceiling}; use beta-mc",
            Status.ERROR,
        )
        sys.exit(EXIT_DOMAIN)

    echo_status(f"Enumerating types for N={N}, eta={config.eta:g}", Status.WORKING)
    if config.parallel > 1:
        cdf = exact_beta_cdf_parallel(
            N, config.eta, modulus=config.parallel, workers=config.parallel
        )
    else:
        cdf = exact_beta_cdf(N, config.eta)

    if gamma:
        values = cdf.cumulative_at(np.array(gamma))
        write_csv(out, ["gamma", "beta"], zip(gamma, np.atleast_1d(values)))
    else:
        write_csv(out, ["gamma", "beta"], cdf.to_rows())
    echo_status(f"{cdf}", Status.INFO)
    manifest = RunManifest(
        command="beta-exact",
        parameters={"N": N, "eta": config.eta, "gamma": list(gamma)},
        artifacts=[out],
        results={"jumps": len(cdf), "total_mass": cdf.total_mass},
    )
    _finish(manifest, out)


@main.command("beta-mc")
@click.option("--n-samples", "-N", "N", type=int, required=True, help="Sample size")
@click.option("--eta", type=float, default=None, help="Reference level")
@click.option("--gamma", type=float, required=True, help="Test level")
@click.option("--precision-percent", type=float, default=None)
@click.option("--confidence", type=float, default=None)
@click.option("--max-iterations", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path(), help="Trace CSV path")
@click.pass_obj
@handle_errors
def beta_mc(
    config: Config,
    N: int,
    eta: Optional[float],
    gamma: float,
    precision_percent: Optional[float],
    confidence: Optional[float],
    max_iterations: Optional[int],
    seed: Optional[int],
    out: str,
) -> None:
    """Monte Carlo estimate of one beta value with its convergence trace."""
    config = _apply(
        config,
        eta=eta,
        precision_percent=precision_percent,
        confidence=confidence,
        max_iterations=max_iterations,
        seed=seed,
    )
    echo_status(f"Sampling beta at N={N}, gamma={gamma:g}", Status.WORKING)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        result = monte_carlo_integrate(
            IntegrandContext(config.eta, N, gamma), config.mc_params(), config.seed
        )
    write_csv(out, ["iteration", "estimate"], result.trace_rows())
    manifest = RunManifest(
        command="beta-mc",
        parameters={
            "N": N,
            "eta": config.eta,
            "gamma": gamma,
            "precision_percent": config.precision_percent,
            "confidence": config.confidence,
            "max_iterations": config.max_iterations,
        },
        seed=config.seed,
        artifacts=[out],
        results={
            "estimate": result.final_estimate,
            "iterations": result.num_iterations,
            "converged": result.stopped_by_criterion,
        },
    )
    _finish(manifest, out)
    click.echo(f"beta = {result.final_estimate:.17g}")
    if not result.stopped_by_criterion:
        echo_status(
            f"Stopped on the iteration budget ({result.num_iterations})",
            Status.WARNING,
        )
        sys.exit(EXIT_NOT_CONVERGED)


def _parse_grid(text: Optional[str]) -> Optional[list[int]]:
    if not text:
        return None
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.UsageError(f"--n-grid must be comma-separated integers: {text!r}")


@main.command("build-table")
@click.option("--eta", type=float, default=None, help="Reference level")
@click.option("--n-grid", default=None, help="Comma-separated N values")
@click.option("--exact-cutoff", type=int, default=None)
@click.option("--upper-points", type=int, default=None)
@click.option("--precision-percent", type=float, default=None)
@click.option("--confidence", type=float, default=None)
@click.option("--max-iterations", type=int, default=None)
@click.option("--parallel", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="Table path")
@click.pass_obj
@handle_errors
def build_table_cmd(
    config: Config,
    eta: Optional[float],
    n_grid: Optional[str],
    exact_cutoff: Optional[int],
    upper_points: Optional[int],
    precision_percent: Optional[float],
    confidence: Optional[float],
    max_iterations: Optional[int],
    parallel: Optional[int],
    seed: Optional[int],
    out: Optional[str],
) -> None:
    """Compute and save a beta table."""
    config = _apply(
        config,
        eta=eta,
        exact_cutoff=exact_cutoff,
        upper_points=upper_points,
        precision_percent=precision_percent,
        confidence=confidence,
        max_iterations=max_iterations,
        parallel=parallel,
        seed=seed,
    )
    out = out or resolve_table_path(config)
    if not out:
        raise click.UsageError("give --out or set BETA_TABLE_PATH")
    grid = _parse_grid(n_grid) or generate_n_list()
    ticks = generate_normalized_kl_list(
        config.kl_stepsize, config.kl_level_ratio, config.kl_num_levels
    )
    echo_status(
        f"Building table for eta={config.eta:g} over {len(grid)} N", Status.WORKING
    )
    table = build_table(
        config.eta,
        n_grid=grid,
        normalized_kl=ticks,
        upper_points=config.upper_points,
        mc_params=config.mc_params(),
        exact_cutoff=config.exact_cutoff,
        seed=config.seed,
        workers=config.parallel,
    )
    table.save(out)
    manifest = RunManifest(
        command="build-table",
        parameters={
            "eta": config.eta,
            "n_grid": grid,
            "exact_cutoff": config.exact_cutoff,
            "upper_points": config.upper_points,
            "kl_ticks": [float(t) for t in ticks],
        },
        seed=config.seed,
        artifacts=[out],
        results={"flagged": [list(c) for c in table.flagged]},
    )
    _finish(manifest, out)
    if table.flagged:
        echo_status(f"{len(table.flagged)} cells did not converge", Status.WARNING)
        sys.exit(EXIT_NOT_CONVERGED)


@main.command("sample")
@click.option("--tau", type=float, default=None, help="Two-node dependence level")
@click.option("--network", "network_path", type=click.Path(exists=True))
@click.option("--n-samples", "-N", "N", type=int, required=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path(), help="Data path")
@click.pass_obj
@handle_errors
def sample_cmd(
    config: Config,
    tau: Optional[float],
    network_path: Optional[str],
    N: int,
    seed: Optional[int],
    out: str,
) -> None:
    """Draw records from a network and write their counts."""
    config = _apply(config, seed=seed)
    network = _network_from(tau, network_path)
    counts = sample(network, N, config.seed)
    write_counts(counts, out)
    manifest = RunManifest(
        command="sample",
        parameters={"tau": tau, "network": network_path, "N": N},
        seed=config.seed,
        artifacts=[out],
    )
    _finish(manifest, out)


@main.command("learn")
@click.option("--data", required=True, type=click.Path(), help="Counts file")
@click.option("--table", "table_path", type=click.Path(), default=None)
@click.option("--eta", type=float, default=None)
@click.option("--kappa", type=float, default=None)
@click.option("--d", "d", type=int, default=None, help="In-degree bound")
@click.option(
    "--collection",
    type=click.Choice([k.value for k in SeparatingKind]),
    default=None,
)
@click.option(
    "--stratum-size",
    type=click.Choice([s.value for s in StratumSize]),
    default=None,
)
@click.option("--parallel", type=int, default=None, help="Worker processes")
@click.option("--out", required=True, type=click.Path(), help="Learned network")
@click.pass_obj
@handle_errors
def learn_cmd(
    config: Config,
    data: str,
    table_path: Optional[str],
    eta: Optional[float],
    kappa: Optional[float],
    d: Optional[int],
    collection: Optional[str],
    stratum_size: Optional[str],
    parallel: Optional[int],
    out: str,
) -> None:
    """Learn the best-scoring DAG and write it with the candidate scores."""
    config = _apply(
        config,
        eta=eta,
        kappa=kappa,
        d=d,
        collection=collection,
        stratum_size=stratum_size,
        parallel=parallel,
    )
    counts = read_counts(data)
    table, table_path = _load_table_for(config, table_path)
    cfg = _score_config(config, table)
    ranked = rank_dags(counts, counts.n, config.d, cfg, workers=config.parallel)
    best, breakdown = ranked[0]

    write_network(fit_network(counts, best), out, d=config.d)
    scores_path = f"{out}.scores.csv"
    write_csv(
        scores_path,
        ["rank", "parents", "edges", "log_likelihood", "penalty", "boost", "score"],
        (
            (
                i + 1,
                _dag_label(dag),
                dag.num_edges,
                b.log_likelihood,
                b.complexity_penalty,
                b.sparsity_boost,
                b.total,
            )
            for i, (dag, b) in enumerate(ranked)
        ),
    )
    results: dict[str, Any] = {"best": _dag_label(best), "score": breakdown.total}
    if counts.n == 2:
        results["two_node_difference"] = score_difference_two_node(counts, cfg)
    echo_status(f"Best: {best} with {breakdown}", Status.DONE)
    manifest = RunManifest(
        command="learn",
        parameters={
            "data": data,
            "table": table_path,
            "eta": config.eta,
            "kappa": config.kappa,
            "d": config.d,
            "collection": config.collection,
            "stratum_size": config.stratum_size,
        },
        artifacts=[out, scores_path],
        results=results,
    )
    _finish(manifest, out)


@main.command("experiment")
@click.option("--tau", type=float, default=None, help="Two-node dependence level")
@click.option("--network", "network_path", type=click.Path(exists=True))
@click.option("--n-samples", "-N", "N", type=int, required=True)
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=None, help="First seed")
@click.option("--table", "table_path", type=click.Path(), default=None)
@click.option("--eta", type=float, default=None)
@click.option("--kappa", type=float, default=None)
@click.option("--d", "d", type=int, default=None)
@click.option(
    "--match",
    type=click.Choice([m.value for m in Match]),
    default=Match.SKELETON.value,
    show_default=True,
)
@click.option("--confidence", type=float, default=None)
@click.option("--out", required=True, type=click.Path(), help="Per-trial CSV")
@click.pass_obj
@handle_errors
def experiment_cmd(
    config: Config,
    tau: Optional[float],
    network_path: Optional[str],
    N: int,
    trials: int,
    seed: Optional[int],
    table_path: Optional[str],
    eta: Optional[float],
    kappa: Optional[float],
    d: Optional[int],
    match: str,
    confidence: Optional[float],
    out: str,
) -> None:
    """Seeded structure-recovery trials."""
    config = _apply(
        config, seed=seed, eta=eta, kappa=kappa, d=d, confidence=confidence
    )
    network = _network_from(tau, network_path)
    table, table_path = _load_table_for(config, table_path)
    cfg = _score_config(config, table)
    seeds = list(range(config.seed, config.seed + trials))
    search_d = min(config.d, network.n - 1)
    echo_status(f"Running {trials} trials at N={N}", Status.WORKING)
    results = recovery_trials(network, N, seeds, cfg, d=search_d, match=Match(match))
    write_csv(
        out,
        ["seed", "N", "learned", "score", "recovered"],
        (
            (r.seed, r.N, _dag_label(r.learned), r.score, int(r.recovered))
            for r in results
        ),
    )
    summary = RecoverySummary.from_results(results, config.confidence)
    echo_status(str(summary), Status.DONE)
    manifest = RunManifest(
        command="experiment",
        parameters={
            "tau": tau,
            "network": network_path,
            "N": N,
            "trials": trials,
            "table": table_path,
            "eta": config.eta,
            "kappa": config.kappa,
            "d": search_d,
            "match": match,
        },
        seed=config.seed,
        artifacts=[out],
        results={
            "successes": summary.successes,
            "fraction": summary.fraction,
            "interval": list(summary.interval),
            "confidence": config.confidence,
        },
    )
    _finish(manifest, out)


_BOUND_FIELDS = {f.name: f for f in fields(BoundParams)}
_INTEGER_PARAMS = ("n", "d", "L", "x_card", "num_edges", "num_params")


@main.command("bounds")
@click.option(
    "--theorem",
    "theorems",
    multiple=True,
    type=click.Choice([t.value for t in Theorem]),
    help="Statements to evaluate (default: all)",
)
@click.option(
    "--param",
    "params",
    multiple=True,
    metavar="NAME=VALUE",
    help="Override a parameter, e.g. --param epsilon=0.05",
)
@click.option("--exp-w/--plain-w", "exp_w", default=None, help="Reading of F-tilde")
@click.option("--out", type=click.Path(), default=None, help="CSV path")
@click.pass_obj
@handle_errors
def bounds_cmd(
    config: Config,
    theorems: tuple[str, ...],
    params: tuple[str, ...],
    exp_w: Optional[bool],
    out: Optional[str],
) -> None:
    """Labeled lower bounds on N for the sample-size statements."""
    overrides: dict[str, Any] = {
        "exp_w": config.exp_w if exp_w is None else exp_w
    }
    for item in params:
        name, sep, value = item.partition("=")
        if not sep or name not in _BOUND_FIELDS or name == "exp_w":
            raise click.UsageError(f"bad --param {item!r}")
        kind = int if name in _INTEGER_PARAMS else float
        try:
            overrides[name] = kind(value)
        except ValueError:
            raise click.UsageError(f"bad value in --param {item!r}")
    bound_params = BoundParams(**overrides)

    rows = []
    failed = []
    for name in theorems or [t.value for t in Theorem]:
        try:
            terms = theorem_terms(name, bound_params)
        except BetaboostError as e:
            echo_status(f"{name}: {e}", Status.WARNING)
            failed.append(name)
            continue
        width = max(len(label) for label in terms)
        click.echo(click.style(name, bold=True))
        for label, value in terms.items():
            click.echo(f"  {label:<{width}}  {value:.6e}")
            rows.append((name, label, value))
        total = max(terms.values())
        click.echo(f"  {'sample_size':<{width}}  {total:.6e}")
        rows.append((name, "sample_size", total))

    if out:
        write_csv(out, ["theorem", "term", "value"], rows)
        manifest = RunManifest(
            command="bounds",
            parameters={f: getattr(bound_params, f) for f in _BOUND_FIELDS},
            artifacts=[out],
            results={"failed": failed},
        )
        _finish(manifest, out)
    if failed:
        sys.exit(EXIT_DOMAIN)


@main.command("iproj")
@click.option("--eta", type=float, default=None)
@click.option("--gamma", type=float, default=0.0, show_default=True)
@click.option("--resolution", type=int, default=10_000, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Curve CSV")
@click.pass_obj
@handle_errors
def iproj_cmd(
    config: Config,
    eta: Optional[float],
    gamma: float,
    resolution: int,
    out: str,
) -> None:
    """KL curve over equal-marginals tables and its minima."""
    config = _apply(config, eta=eta)
    curve = kl_curve(config.eta, gamma, resolution)
    write_csv(out, ["x", "kl"], curve.samples)
    points = critical_points(curve)
    minima = ", ".join(f"{x:.6f}" for x, _ in curve.minima)
    click.echo(f"minima ({len(curve.minima)}, empirical): {minima}")
    manifest = RunManifest(
        command="iproj",
        parameters={"eta": config.eta, "gamma": gamma, "resolution": resolution},
        artifacts=[out],
        results={
            "construction": curve.construction,
            "minima": [list(m) for m in curve.minima],
            "maxima": points.maxima,
            "merge_gamma": merge_gamma(config.eta),
            "label": "empirical",
        },
    )
    _finish(manifest, out)


@main.command("threshold")
@click.option("--eta-min", type=float, default=0.1, show_default=True)
@click.option("--eta-max", type=float, default=0.35, show_default=True)
@click.option("--steps", type=int, default=26, show_default=True)
@click.option("--gamma", type=float, default=0.0, show_default=True)
@click.option("--resolution", type=int, default=2000, show_default=True)
@click.option("--parallel", type=int, default=None)
@click.option("--out", required=True, type=click.Path(), help="Scan CSV")
@click.pass_obj
@handle_errors
def threshold_cmd(
    config: Config,
    eta_min: float,
    eta_max: float,
    steps: int,
    gamma: float,
    resolution: int,
    parallel: Optional[int],
    out: str,
) -> None:
    """Scan critical-point counts across eta."""
    config = _apply(config, parallel=parallel)
    if steps < 2 or not (0 < eta_min < eta_max < math.log(2)):
        raise click.UsageError("need steps >= 2 and 0 < eta-min < eta-max < ln 2")
    t0, eta0 = conjecture_threshold()
    t_star, eta_star = curvature_threshold()
    click.echo(f"t0 = {t0:.15f}  eta0 = {eta0:.17g}")
    click.echo(f"split at t = {t_star:.15f}  eta = {eta_star:.17g}")
    etas = np.linspace(eta_min, eta_max, steps)
    rows = threshold_scan(etas, resolution, gamma, workers=config.parallel)
    write_csv(out, ["eta", "minima", "maxima"], rows)
    manifest = RunManifest(
        command="threshold",
        parameters={
            "eta_min": eta_min,
            "eta_max": eta_max,
            "steps": steps,
            "gamma": gamma,
            "resolution": resolution,
        },
        artifacts=[out],
        results={
            "t0": t0,
            "eta0": eta0,
            "split_t": t_star,
            "split_eta": eta_star,
            "label": "empirical",
        },
    )
    _finish(manifest, out)


if __name__ == "__main__":
    main()

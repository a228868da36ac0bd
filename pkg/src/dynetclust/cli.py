"""Batch command-line surface: simulate | fit | select | predict | evaluate
| coassign.

Exit codes: 0 success, 2 usage errors, 3 data/parse errors, 4 numerical
failures.  Every randomized command requires --seed.
"""

import functools
import os
import sys

import click
import numpy as np

from . import netio, reports
from .errors import (
    ConfigError,
    InvalidInputError,
    NumericalError,
    ParseError,
    UndefinedMetricError,
    UnsupportedLikelihoodError,
)
from .randkit import RngStream

EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _run_guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ParseError, InvalidInputError, ConfigError,
                UndefinedMetricError, UnsupportedLikelihoodError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
    return wrapper


@click.group()
def main():
    """Model-based community detection in dynamic networks."""


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


@main.command()
@click.option("--geometry", type=click.Choice(["distance", "projection"]),
              required=True)
@click.option("--sticky/--transitory", "sticky", default=True)
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--T", "t", type=int, default=10, show_default=True)
@click.option("--G", "g", type=int, default=6, show_default=True)
@click.option("--p", type=int, default=0, help="Latent dimension (0 = default).")
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True)
@_run_guarded
def simulate(geometry, sticky, n, t, g, p, seed, out, figures):
    """Generate a synthetic network and its latent truth."""
    from .metrics import modularity
    from .simulate import SimConfig, simulate as run_sim

    cfg = SimConfig(geometry, n=n, T=t, G=g, p=p,
                    stickiness="sticky" if sticky else "transitory", seed=seed)
    net, truth, params = run_sim(cfg)
    out = _outdir(out)
    netio.serialize_network(net, os.path.join(out, "network.tsv"))
    netio.save_truth(os.path.join(out, "truth.npz"), truth, params, cfg)
    mod = [modularity(net.adjacency[tt], truth.Z[tt]) for tt in range(net.T)]
    records = [
        ("density", net.density(), {"geometry": geometry, "seed": seed}),
        ("modularity_mean", float(np.mean(mod)), {"geometry": geometry}),
    ]
    records += [("modularity", m, {"t": tt + 1}) for tt, m in enumerate(mod)]
    netio.write_records(os.path.join(out, "simulate_report.tsv"), records)
    if figures:
        reports.fig_metric_series({"modularity": mod},
                                  os.path.join(out, "modularity.png"),
                                  ylabel="modularity")
    click.echo(f"wrote network.tsv, truth.npz in {out}")


def _fit_distance(net, g, p, seed, iterations, burn_in, thin, likelihood,
                  nu_lambda, xi_lambda):
    from .distance_model import ChainConfig, DistanceHyperparams, mh_within_gibbs_fit

    hyper = DistanceHyperparams()
    if nu_lambda is not None:
        hyper.nu_lambda = nu_lambda
    if xi_lambda is not None:
        hyper.xi_lambda = xi_lambda
    chain = ChainConfig(iterations=iterations, burn_in=burn_in, thin=thin)
    return mh_within_gibbs_fit(net, g, hyper=hyper, chain=chain,
                               rng=RngStream(seed), p=p or 2,
                               likelihood=likelihood)


def _fit_projection_mcmc(net, g, p, seed, iterations, burn_in, thin):
    from .projection_model import GibbsConfig, gibbs_fit_projection

    chain = GibbsConfig(iterations=iterations, burn_in=burn_in, thin=thin)
    return gibbs_fit_projection(net, g, chain=chain, rng=RngStream(seed), p=p or 3)


def _fit_projection_vb(net, g, p, seed, sweeps, tol, restarts):
    from .projection_vb import VBConfig, vb_fit_projection

    config = VBConfig(max_sweeps=sweeps, tol=tol, restarts=restarts)
    return vb_fit_projection(net, g, config=config, rng=RngStream(seed), p=p or 3)


def _positions_csv(path, X, labels):
    T, n, p = X.shape
    lines = ["t,i," + ",".join(f"x{k + 1}" for k in range(p)) + ",cluster"]
    for t in range(T):
        for i in range(n):
            coords = ",".join(f"{v:.8g}" for v in X[t, i])
            lines.append(f"{t + 1},{i},{coords},{labels[t, i]}")
    netio.atomic_write_text(path, "\n".join(lines) + "\n")


@main.command()
@click.argument("network", type=click.Path(exists=True))
@click.option("--geometry", type=click.Choice(["distance", "projection"]),
              required=True)
@click.option("--engine", type=click.Choice(["mcmc", "vb"]), default="mcmc",
              show_default=True)
@click.option("--G", "g", type=int, required=True)
@click.option("--p", type=int, default=0)
@click.option("--seed", type=int, required=True)
@click.option("--iterations", type=int, default=2000, show_default=True)
@click.option("--burn-in", type=int, default=600, show_default=True)
@click.option("--thin", type=int, default=5, show_default=True)
@click.option("--sweeps", type=int, default=300, help="VB sweep budget.")
@click.option("--tol", type=float, default=1e-3, help="VB ELBO tolerance.")
@click.option("--restarts", type=int, default=5, help="VB restarts.")
@click.option("--likelihood",
              type=click.Choice(["logistic", "degree_corrected", "plackett_luce"]),
              default=None, help="Distance-model likelihood (default by payload).")
@click.option("--nu-lambda", type=float, default=None,
              help="Blending prior mean override.")
@click.option("--xi-lambda", type=float, default=None,
              help="Blending prior variance override.")
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True)
@_run_guarded
def fit(network, geometry, engine, g, p, seed, iterations, burn_in, thin,
        sweeps, tol, restarts, likelihood, nu_lambda, xi_lambda, out, figures):
    """Fit one model configuration and archive the posterior."""
    if engine == "vb" and geometry == "distance":
        raise click.UsageError(
            "the VB engine is available for the projection geometry only"
        )
    net = netio.parse_network(network)
    out = _outdir(out)
    if geometry == "distance":
        fitted = _fit_distance(net, g, p, seed, iterations, burn_in, thin,
                               likelihood, nu_lambda, xi_lambda)
    elif engine == "mcmc":
        fitted = _fit_projection_mcmc(net, g, p, seed, iterations, burn_in, thin)
    else:
        fitted = _fit_projection_vb(net, g, p, seed, sweeps, tol, restarts)
    netio.save_fit(os.path.join(out, "fit.npz"), fitted)

    records = [("geometry", geometry, {}), ("engine", engine, {}), ("G", g, {})]
    if engine == "vb":
        trace = fitted.elbo_trace
        records += [
            ("elbo_final", float(trace[-1]), {}),
            ("elbo_sweeps", len(trace) - 1, {}),
            ("converged", int(fitted.converged), {}),
        ]
        labels = fitted.hard_labels()
        X_repr = fitted.x_mean
        trace_name = "ELBO"
    else:
        trace = fitted.log_posterior
        k = fitted.map_index()
        records += [
            ("log_posterior_map", float(fitted.log_posterior[k]), {}),
            ("n_draws", fitted.n_draws, {}),
        ]
        if "accept_x" in fitted.meta and fitted.meta["accept_x"] is not None:
            records.append(("accept_rate_x", float(fitted.meta["accept_x"]), {}))
        labels = fitted.Z[k]
        X_repr = fitted.X[k]
        trace_name = "log posterior"
    netio.write_records(os.path.join(out, "diagnostics.tsv"), records)
    _positions_csv(os.path.join(out, "positions.csv"), X_repr, labels)
    if figures:
        reports.fig_trace(trace, os.path.join(out, "trace.png"), ylabel=trace_name)
    click.echo(f"wrote fit.npz in {out}")


def _parse_range(text):
    if ".." in text:
        a, b = text.split("..", 1)
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",")]


@main.command()
@click.argument("network", type=click.Path(exists=True))
@click.option("--G-range", "g_range", required=True,
              help="Inclusive range 'a..b' or comma list.")
@click.option("--geometry", type=click.Choice(["both", "distance", "projection"]),
              default="both", show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--iterations", type=int, default=1200, show_default=True)
@click.option("--burn-in", type=int, default=400, show_default=True)
@click.option("--thin", type=int, default=4, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True)
@_run_guarded
def select(network, g_range, geometry, seed, iterations, burn_in, thin, out,
           figures):
    """Sweep G per geometry by BIC, then order geometries by DIC."""
    from .distance_model import ChainConfig
    from .model_selection import select_model
    from .projection_model import GibbsConfig

    net = netio.parse_network(network)
    out = _outdir(out)
    geometries = ("distance", "projection") if geometry == "both" else (geometry,)
    result = select_model(
        net, _parse_range(g_range), geometries=geometries,
        rng=RngStream(seed),
        fit_kwargs={
            "distance_chain": ChainConfig(iterations=iterations,
                                          burn_in=burn_in, thin=thin),
            "projection_chain": GibbsConfig(iterations=iterations,
                                            burn_in=burn_in, thin=thin),
        },
    )
    records = []
    for row in result.table:
        ctx = {"geometry": row.geometry, "G": row.G}
        records += [
            ("bic", row.bic, ctx), ("bic1", row.bic1, ctx), ("bic2", row.bic2, ctx),
            ("dic", row.dic, ctx), ("loglik_map", row.loglik_at_map, ctx),
            ("latent_marginal", row.latent_marginal_loglik, ctx),
        ]
    for geometry_name, G_fail, msg in result.failures:
        records.append(("cell_failed", msg, {"geometry": geometry_name, "G": G_fail}))
    for rank, row in enumerate(result.winners, start=1):
        records.append(("winner", row.G,
                        {"rank": rank, "geometry": row.geometry, "dic": row.dic}))
    netio.write_records(os.path.join(out, "selection.tsv"), records)
    if figures and result.table:
        reports.fig_bic_curve(result.table, os.path.join(out, "bic.png"))
    best = result.best()
    click.echo(f"selected geometry={best.geometry} G={best.G}")


def _load_fit_for(path):
    fit, meta = netio.load_fit(path)
    return fit, meta


@main.command()
@click.argument("fit_path", type=click.Path(exists=True), metavar="FIT")
@click.argument("network", type=click.Path(exists=True))
@click.option("--seed", type=int, required=True)
@click.option("--draws", type=int, default=200, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True)
@_run_guarded
def predict(fit_path, network, seed, draws, out, figures):
    """One-step-ahead edge probabilities from a fitted model."""
    from .metrics import one_step_ahead_probs

    fit, _ = _load_fit_for(fit_path)
    net = netio.parse_network(network)
    out = _outdir(out)
    P = one_step_ahead_probs(fit, net, RngStream(seed), n_draws=draws)
    lines = ["\t".join(f"{v:.8g}" for v in row) for row in P]
    netio.atomic_write_text(os.path.join(out, "probs.tsv"), "\n".join(lines) + "\n")
    netio.write_records(
        os.path.join(out, "predict_report.tsv"),
        [("prob_mean", float(P[~np.eye(net.n, dtype=bool)].mean()), {}),
         ("horizon", net.T + 1, {})],
    )
    if figures:
        reports.fig_heatmap(P, os.path.join(out, "probs.png"),
                            title="one-step-ahead edge probabilities")
    click.echo(f"wrote probs.tsv in {out}")


@main.command()
@click.argument("fit_path", type=click.Path(exists=True), metavar="FIT")
@click.argument("network", type=click.Path(exists=True))
@click.option("--truth", type=click.Path(exists=True), default=None,
              help="Simulation truth archive for CRI/VI against ground truth.")
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True)
@_run_guarded
def evaluate(fit_path, network, truth, out, figures):
    """AUC / CRI / VI / modularity records for a fitted model."""
    from .metrics import (
        corrected_rand,
        insample_auc,
        modularity,
        variation_of_information,
    )
    from .projection_vb import VBPosterior

    fit, _ = _load_fit_for(fit_path)
    net = netio.parse_network(network)
    out = _outdir(out)
    if isinstance(fit, VBPosterior):
        labels = fit.hard_labels()
    else:
        labels = fit.Z[fit.map_index()]
    records = []
    if net.kind == "binary":
        records.append(("auc_insample", insample_auc(fit, net), {}))
        mods = []
        for t in range(net.T):
            try:
                mods.append(modularity(net.adjacency[t], labels[t]))
            except UndefinedMetricError:
                mods.append(float("nan"))
        records += [("modularity", m, {"t": t + 1}) for t, m in enumerate(mods)]
    series = {}
    if truth is not None:
        true_state, _, _ = netio.load_truth(truth)
        records += [
            ("cri", corrected_rand(true_state.Z, labels), {"pooled": 1}),
            ("vi", variation_of_information(true_state.Z, labels),
             {"pooled": 1, "log_base": "e"}),
        ]
        cri_t = [corrected_rand(true_state.Z[t], labels[t]) for t in range(net.T)]
        vi_t = [variation_of_information(true_state.Z[t], labels[t])
                for t in range(net.T)]
        records += [("cri", v, {"t": t + 1}) for t, v in enumerate(cri_t)]
        records += [("vi", v, {"t": t + 1}) for t, v in enumerate(vi_t)]
        series = {"CRI": cri_t, "VI": vi_t}
    netio.write_records(os.path.join(out, "evaluate_report.tsv"), records)
    if figures and series:
        reports.fig_metric_series(series, os.path.join(out, "metrics.png"))
    click.echo(f"wrote evaluate_report.tsv in {out}")


@main.command()
@click.argument("fit_path", type=click.Path(exists=True), metavar="FIT")
@click.option("--t", "t", type=int, required=True, help="Time slice (1-based).")
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True)
@_run_guarded
def coassign(fit_path, t, out, figures):
    """Pairwise same-cluster posterior probabilities at one time slice."""
    from .metrics import coassignment_probs
    from .projection_vb import VBPosterior

    fit, _ = _load_fit_for(fit_path)
    out = _outdir(out)
    if isinstance(fit, VBPosterior):
        q = fit.q_z_marginals[:, t - 1, :]
        M = q @ q.T
        np.fill_diagonal(M, 1.0)
    else:
        if not (1 <= t <= fit.Z.shape[1]):
            raise InvalidInputError(f"time {t} outside 1..{fit.Z.shape[1]}")
        M = coassignment_probs(fit, t - 1)
    lines = ["\t".join(f"{v:.8g}" for v in row) for row in M]
    netio.atomic_write_text(os.path.join(out, "coassign.tsv"),
                            "\n".join(lines) + "\n")
    if figures:
        reports.fig_heatmap(M, os.path.join(out, "coassign.png"),
                            title=f"co-assignment probabilities, t={t}")
    click.echo(f"wrote coassign.tsv in {out}")


if __name__ == "__main__":
    main()

"""Replicate-level workers for the acceptance suite.

Functions here are module-level so a process pool can run cells in
parallel; every worker is deterministic given its seed arguments.
"""

import numpy as np

from dynetclust.distance_model import ChainConfig, DistanceHyperparams, map_extract, mh_within_gibbs_fit
from dynetclust.metrics import corrected_rand, insample_auc, one_step_ahead_probs, variation_of_information
from dynetclust.model_selection import summarize_fit
from dynetclust.network import DynamicNetwork
from dynetclust.projection_model import GibbsConfig, gibbs_fit_projection
from dynetclust.projection_vb import VBConfig, vb_fit_projection
from dynetclust.randkit import RngStream
from dynetclust.simulate import SimConfig, simulate

DESK_N = 50
DESK_T = 8
DESK_G = 4

MCMC_ITER = dict(distance=dict(iterations=1500, burn_in=600, thin=6),
                 projection=dict(iterations=1500, burn_in=600, thin=6))
SWEEP_ITER = dict(iterations=900, burn_in=300, thin=6)


def _truncate(net, T):
    return DynamicNetwork(net.adjacency[:T].copy(), net.directed, net.kind)


def desk_replicate(geometry, stickiness, seed):
    """Simulate one desk-scale replicate with one extra period held out."""
    cfg = SimConfig(geometry, n=DESK_N, T=DESK_T + 1, G=DESK_G,
                    stickiness=stickiness, seed=seed)
    net_full, truth, params = simulate(cfg)
    net = _truncate(net_full, DESK_T)
    return net, truth, params


def true_next_probs(geometry, truth, params, n_draws=600, seed=2**20):
    """Exact one-step-ahead predictive probabilities of the true model given
    the true state at T (Monte Carlo over Z_{T+1} and X_{T+1})."""
    from dynetclust.distance_model import edge_prob_matrix_distance
    from dynetclust.projection_model import edge_prob_matrix_projection

    gen = RngStream(seed).gen
    zT = truth.Z[DESK_T - 1]
    xT = truth.X[DESK_T - 1]
    n = zT.shape[0]
    acc = np.zeros((n, n))
    rows = np.cumsum(params.betaT[zT], axis=1)
    for _ in range(n_draws):
        z_next = (gen.random(n)[:, None] * rows[:, -1:] < rows).argmax(axis=1)
        if geometry == "projection":
            X_next = params.r[:, None] * params.u[z_next] + (
                gen.standard_normal((n, 3)) / np.sqrt(params.tau)[:, None]
            )
            acc += edge_prob_matrix_projection(X_next, params.alpha, params.s, True)
        else:
            X_next = np.empty((n, 2))
            for g in np.unique(z_next):
                m = z_next == g
                L = np.linalg.cholesky(params.sigma[g])
                mean = params.lam * params.mu[g] + (1 - params.lam) * xT[m]
                X_next[m] = mean + gen.standard_normal((int(m.sum()), 2)) @ L.T
            acc += edge_prob_matrix_distance(X_next, params.lik)
    return acc / n_draws


def _fit(net, geometry, seed, budget=None, xi_lambda=None):
    budget = budget or MCMC_ITER[geometry]
    if geometry == "distance":
        hyper = DistanceHyperparams()
        if xi_lambda is not None:
            hyper.xi_lambda = xi_lambda
        return mh_within_gibbs_fit(
            net, DESK_G, hyper=hyper,
            chain=ChainConfig(adapt_interval=25, **budget),
            rng=RngStream(seed, 100),
        )
    return gibbs_fit_projection(
        net, DESK_G, chain=GibbsConfig(**budget), rng=RngStream(seed, 200)
    )


def recovery_cell(args):
    """Correct- and cross-geometry fits plus prediction for one replicate."""
    sim_geometry, stickiness, seed = args
    net, truth, params = desk_replicate(sim_geometry, stickiness, seed)
    truth_z = truth.Z[:DESK_T]
    out = {"geometry": sim_geometry, "stickiness": stickiness, "seed": seed}

    for fit_geometry in ("distance", "projection"):
        fit = _fit(net, fit_geometry, seed)
        state, _ = map_extract(fit)
        tag = "correct" if fit_geometry == sim_geometry else "cross"
        out[f"cri_{tag}"] = corrected_rand(truth_z, state.Z)
        out[f"vi_{tag}"] = variation_of_information(truth_z, state.Z)
        if tag == "correct":
            out["auc"] = insample_auc(fit, net)
            P = one_step_ahead_probs(fit, net, RngStream(seed, 300), n_draws=150)
            Pt = true_next_probs(sim_geometry, truth, params)
            off = ~np.eye(net.n, dtype=bool)
            out["pred_corr"] = float(np.corrcoef(P[off], Pt[off])[0, 1])
            out["lam_draws"] = (fit.params["lam"].copy()
                                if fit_geometry == "distance" else None)
        if sim_geometry == "projection" and fit_geometry == "projection":
            vb = vb_fit_projection(
                net, DESK_G, config=VBConfig(max_sweeps=400, tol=1e-3, restarts=5),
                rng=RngStream(seed, 400),
            )
            out["cri_vb"] = corrected_rand(truth_z, vb.hard_labels())
            out["vi_vb"] = variation_of_information(truth_z, vb.hard_labels())
    return out


def sensitivity_cell(args):
    """Distance fit with a near-flat blending prior (xi_lambda = 1)."""
    stickiness, seed = args
    net, truth, params = desk_replicate("distance", stickiness, seed)
    fit = _fit(net, "distance", seed + 5000, xi_lambda=1.0)
    state, _ = map_extract(fit)
    lam = fit.params["lam"]
    hist, edges = np.histogram(lam, bins=20, range=(0.0, 1.0))
    mode = float(edges[hist.argmax()] + 0.025)
    return {
        "stickiness": stickiness,
        "seed": seed,
        "cri": corrected_rand(truth.Z[:DESK_T], state.Z),
        "lam_mode": mode,
        "lam_mean": float(lam.mean()),
    }


def bic_sweep_cell(args):
    """BIC sweep over G for both geometries on one replicate."""
    sim_geometry, seed, g_values = args
    net, truth, params = desk_replicate(sim_geometry, "sticky", seed)
    rows = []
    for fit_geometry in ("distance", "projection"):
        for G in g_values:
            rng = RngStream(seed, 1000 + G + (0 if fit_geometry == "distance" else 50))
            if fit_geometry == "distance":
                fit = mh_within_gibbs_fit(
                    net, G, chain=ChainConfig(adapt_interval=25, **SWEEP_ITER),
                    rng=rng,
                )
            else:
                fit = gibbs_fit_projection(net, G, chain=GibbsConfig(**SWEEP_ITER),
                                           rng=rng)
            rows.append(summarize_fit(fit, net))
    return {"geometry": sim_geometry, "seed": seed, "table": rows}


def benchmark_cell(n):
    from dynetclust.benchmark import runtime_benchmark

    return runtime_benchmark([n], seed=31, T=2, G=4,
                             mcmc_draws=50_000, vb_sweeps=500)[0]

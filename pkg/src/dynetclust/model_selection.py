"""Choosing the number of communities (two-part BIC) and the latent
geometry (DIC)."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError
from .network import RANK
from .randkit import chol_with_jitter

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class FitSummary:
    geometry: str
    G: int
    loglik_at_map: float
    latent_marginal_loglik: float
    dim_lik: int
    dim_prior: int
    edge_total: int
    nT: int
    dic: float
    bic1: float
    bic2: float
    bic: float


def bic_components(loglik_map, dim_lik, edge_total, latent_loglik, dim_prior, nT):
    """The two-part criterion: data-likelihood part penalized by the edge
    total, latent part penalized by the actor-time count.  Higher is better."""
    if edge_total < 1 or nT < 1:
        raise InvalidInputError("edge_total and nT must be positive")
    if dim_lik < 0 or dim_prior < 0:
        raise InvalidInputError("dimensions must be nonnegative")
    bic1 = 2.0 * loglik_map - dim_lik * np.log(edge_total)
    bic2 = 2.0 * latent_loglik - dim_prior * np.log(nT)
    return float(bic1), float(bic2), float(bic1 + bic2)


def _emission_logdens_distance(X, params):
    """(T, n, G) emission log densities of the distance model."""
    from .distance_model import DistanceParams  # noqa: F401 (type reference)

    T, n, p = X.shape
    G = params.G
    chols = [chol_with_jitter(params.sigma[g]) for g in range(G)]
    logdets = np.array([2.0 * np.sum(np.log(np.diag(L))) for L in chols])
    sig_inv = np.stack([
        np.linalg.inv(params.sigma[g]) for g in range(G)
    ])
    out = np.empty((T, n, G))
    for t in range(T):
        for g in range(G):
            mean = params.mu[g] if t == 0 else (
                params.lam * params.mu[g] + (1.0 - params.lam) * X[t - 1]
            )
            r = X[t] - mean
            quad = np.einsum("ij,jk,ik->i", r, sig_inv[g], r)
            out[t, :, g] = -0.5 * (p * _LOG_2PI + logdets[g] + quad)
    return out


def _emission_logdens_projection(X, params):
    T, n, p = X.shape
    G = params.G
    out = np.empty((T, n, G))
    tau = params.tau
    for g in range(G):
        r = X - params.r[None, :, None] * params.u[g]
        sq = np.einsum("tip,tip->ti", r, r)
        out[:, :, g] = 0.5 * (p * (np.log(tau) - _LOG_2PI)[None, :] - tau[None, :] * sq)
    return out


def latent_marginal_loglik(X, params):
    """log pi(X | theta_p) with every label sequence summed out.

    A per-actor forward recursion over the G states makes the cost linear in
    T (Theta(n T G^2)) instead of exponential.
    """
    from .distance_model import DistanceParams

    if isinstance(params, DistanceParams):
        emit = _emission_logdens_distance(X, params)
    else:
        emit = _emission_logdens_projection(X, params)
    T, n, G = emit.shape
    with np.errstate(divide="ignore"):
        lb0 = np.log(params.beta0)
        lbT = np.log(params.betaT)
    a = lb0[None, :] + emit[0]  # (n, G)
    for t in range(1, T):
        a = logsumexp(a[:, :, None] + lbT[None, :, :], axis=1) + emit[t]
    return float(np.sum(logsumexp(a, axis=1)))


def likelihood_dim(fit, n):
    if fit.geometry == "projection":
        # s, r, tau are all carried by the 3n term of the prior-side count,
        # leaving the intercept as the only free likelihood parameter
        return 1
    lik = fit.meta.get("likelihood")
    if lik == "logistic":
        return 1
    if lik == "degree_corrected":
        return 2 + (n - 1)
    return n - 1


def prior_dim(geometry, G, p, n):
    if geometry == "distance":
        return 1 + G * p + G * p * (p + 1) // 2 + (G - 1) + G * (G - 1)
    return 3 * n + G * (p - 1) + (G - 1) + G * (G - 1)


def map_plugin_loglik(fit, net):
    """Data log likelihood at the posterior-mean plug-in parameters."""
    from .distance_model import loglik_distance
    from .projection_model import loglik_projection

    X_mean = fit.X.mean(axis=0)
    if fit.geometry == "projection":
        return loglik_projection(net, X_mean, float(fit.params["alpha"].mean()),
                                 fit.params["s"].mean(axis=0))
    lik = _mean_lik(fit)
    return loglik_distance(net, X_mean, lik)


def _mean_lik(fit):
    from .distance_model import DegreeCorrectedLik, LogisticLik, PlackettLuceLik

    kind = fit.meta.get("likelihood")
    if kind == "logistic":
        return LogisticLik(float(fit.params["alpha"].mean()))
    if kind == "degree_corrected":
        return DegreeCorrectedLik(
            float(fit.params["beta_in"].mean()),
            float(fit.params["beta_out"].mean()),
            fit.params["s"].mean(axis=0),
        )
    return PlackettLuceLik(fit.params["s"].mean(axis=0))


def dic(samples, net):
    """Deviance information criterion with the plug-in effective dimension
    p_D = 2 [loglik(plug-in) - mean loglik]; lower is better."""
    if samples.n_draws < 100:
        raise InvalidInputError("DIC needs at least 100 post-burn-in draws")
    mean_ll = float(samples.log_lik.mean())
    plug = map_plugin_loglik(samples, net)
    p_d = 2.0 * (plug - mean_ll)
    return -2.0 * mean_ll + p_d


def dic_from_draws(log_lik, plugin_loglik):
    """DIC arithmetic, exposed for direct verification."""
    log_lik = np.asarray(log_lik, dtype=float)
    mean_ll = float(log_lik.mean())
    return -2.0 * mean_ll + 2.0 * (plugin_loglik - mean_ll)


def summarize_fit(fit, net):
    """FitSummary of one fitted chain: MAP likelihood, marginalized latent
    term, dimension counts, the two BIC parts, and DIC."""
    from .distance_model import DistanceParams, map_extract
    from .projection_model import ProjectionParams

    state, pdraw = map_extract(fit)
    k = fit.map_index()
    loglik_map = float(fit.log_lik[k])
    if fit.geometry == "distance":
        params = DistanceParams(
            lam=float(pdraw["lam"]), mu=pdraw["mu"], sigma=pdraw["sigma"],
            tau2=float(pdraw["tau2"]), gamma=pdraw["gamma"],
            beta0=pdraw["beta0"], betaT=pdraw["betaT"], lik=None,
        )
    else:
        params = ProjectionParams(
            alpha=float(pdraw["alpha"]), s=pdraw["s"], r=pdraw["r"],
            tau=pdraw["tau"], u=_renormalize_rows(pdraw["u"]),
            beta0=pdraw["beta0"], betaT=pdraw["betaT"],
        )
    latent = latent_marginal_loglik(state.X, params)
    n, T = net.n, net.T
    d_lik = likelihood_dim(fit, n)
    d_prior = prior_dim(fit.geometry, fit.G, state.p, n)
    edge_total = max(net.edge_total(), 1)
    bic1, bic2, bic = bic_components(loglik_map, d_lik, edge_total,
                                     latent, d_prior, n * T)
    return FitSummary(
        geometry=fit.geometry, G=fit.G, loglik_at_map=loglik_map,
        latent_marginal_loglik=latent, dim_lik=d_lik, dim_prior=d_prior,
        edge_total=edge_total, nT=n * T, dic=dic(fit, net),
        bic1=bic1, bic2=bic2, bic=bic,
    )


def _renormalize_rows(u):
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    return u / np.maximum(norms, 1e-12)


@dataclass
class SelectionResult:
    table: list          # FitSummary per completed (geometry, G) cell
    winners: list        # per-geometry best-BIC summaries, DIC-ordered
    failures: list       # (geometry, G, message) for failed cells

    def best(self):
        if not self.winners:
            raise InvalidInputError("no successful fits")
        return self.winners[0]


def rank_table(table):
    """Per-geometry best-BIC rows ordered by DIC (the deterministic
    re-ranking used by select_model)."""
    winners = []
    for geometry in sorted({s.geometry for s in table}):
        rows = [s for s in table if s.geometry == geometry]
        winners.append(max(rows, key=lambda s: s.bic))
    winners.sort(key=lambda s: s.dic)
    return winners


def select_model(net, G_range, geometries=("distance", "projection"),
                 rng=None, fit_kwargs=None):
    """Fit every G per geometry, choose each geometry's G by best BIC, then
    order the per-geometry winners by DIC.  Failed cells are recorded."""
    from .distance_model import ChainConfig, mh_within_gibbs_fit
    from .projection_model import GibbsConfig, gibbs_fit_projection

    if rng is None:
        raise InvalidInputError("an RngStream is required")
    G_range = list(G_range)
    if not G_range:
        raise InvalidInputError("G range must be nonempty")
    fit_kwargs = fit_kwargs or {}
    table, failures = [], []
    cell = 0
    for geometry in geometries:
        for G in G_range:
            cell += 1
            sub = rng.substream(cell)
            try:
                if geometry == "distance":
                    chain = fit_kwargs.get("distance_chain") or ChainConfig()
                    fit = mh_within_gibbs_fit(
                        net, G, chain=chain, rng=sub,
                        p=fit_kwargs.get("p_distance", 2),
                        likelihood=fit_kwargs.get("likelihood"),
                    )
                else:
                    chain = fit_kwargs.get("projection_chain") or GibbsConfig()
                    fit = gibbs_fit_projection(
                        net, G, chain=chain, rng=sub,
                        p=fit_kwargs.get("p_projection", 3),
                    )
                table.append(summarize_fit(fit, net))
            except Exception as exc:  # failed cell is recorded, not fatal
                failures.append((geometry, G, str(exc)))
    return SelectionResult(table=table, winners=rank_table(table),
                           failures=failures)

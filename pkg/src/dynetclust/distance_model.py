"""Euclidean-geometry model: likelihood variants, latent joint density,
conjugate full conditionals, and the MH-within-Gibbs sampler.

The blending coefficient lam mixes the community location with the previous
position in the emission mean: for t >= 2 the mean of X_it is
lam * mu_k + (1 - lam) * X_i(t-1).
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln, log_ndtr

from .errors import ConfigError, InvalidInputError
from .network import BINARY, RANK, DynamicNetwork, LatentState, PosteriorSamples
from .randkit import (
    RngStream,
    chol_with_jitter,
    log1pexp,
    mvn_logpdf,
    sample_dirichlet,
    sample_inverse_wishart,
    sample_truncated_normal_01,
    sigmoid,
)

_LOG_2PI = np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# Likelihood variants
# ---------------------------------------------------------------------------

@dataclass
class LogisticLik:
    alpha: float


@dataclass
class DegreeCorrectedLik:
    beta_in: float
    beta_out: float
    s: np.ndarray  # simplex of length n


@dataclass
class PlackettLuceLik:
    s: np.ndarray  # simplex of length n


def edge_prob_logistic(alpha, d):
    """P(edge) = sigma(alpha - d)); strictly decreasing in the distance."""
    return sigmoid(alpha - np.asarray(d, dtype=float))


def edge_prob_degree_corrected(beta_in, beta_out, s_i, s_j, d):
    """Degree-corrected edge probability for the dyad i -> j."""
    d = np.asarray(d, dtype=float)
    return sigmoid(beta_in * (1.0 - d / s_j) + beta_out * (1.0 - d / s_i))


def rank_loglik_plackett_luce(ordering, s, d_row):
    """Log probability of one actor's ranking under the Plackett-Luce model.

    `ordering` lists the n-1 alters from most to least favored; stage j picks
    alter ordering[j] with weight s * exp(-distance) renormalized over the
    alters not yet ranked.
    """
    ordering = np.asarray(ordering, dtype=np.int64)
    s = np.asarray(s, dtype=float)
    d_row = np.asarray(d_row, dtype=float)
    n = s.shape[0]
    if ordering.shape != (n - 1,) or len(np.unique(ordering)) != n - 1:
        raise InvalidInputError("ordering must list each alter exactly once")
    if ordering.min() < 0 or ordering.max() >= n:
        raise InvalidInputError("ordering indices out of range")
    w = np.log(s[ordering]) - d_row[ordering]
    # denominators are logsumexp over the suffix of not-yet-ranked alters
    rev = np.logaddexp.accumulate(w[::-1])[::-1]
    return float(np.sum(w - rev))


def _eta_degree_corrected(D_t, beta_in, beta_out, s):
    return beta_in * (1.0 - D_t / s[None, :]) + beta_out * (1.0 - D_t / s[:, None])


def _binary_loglik_from_eta(Y_t, eta_t, directed):
    n = Y_t.shape[0]
    term = Y_t * eta_t - log1pexp(eta_t)
    if directed:
        mask = ~np.eye(n, dtype=bool)
    else:
        mask = np.triu(np.ones((n, n), dtype=bool), k=1)
    return float(term[mask].sum())


def loglik_distance(net, X, lik):
    """Data log likelihood of a dynamic network given latent positions.

    X has shape (T, n, p); the likelihood variant fixes the dyad model.
    """
    T, n, _ = X.shape
    total = 0.0
    if isinstance(lik, PlackettLuceLik):
        if net.kind != RANK:
            raise InvalidInputError("Plackett-Luce needs a rank payload")
        orderings = net.orderings()
        for t in range(T):
            D_t = _distances_t(X[t])
            for i in range(n):
                total += rank_loglik_plackett_luce(orderings[t, i], lik.s, D_t[i])
        return total
    if net.kind != BINARY:
        raise InvalidInputError("binary likelihoods need a binary payload")
    for t in range(T):
        D_t = _distances_t(X[t])
        if isinstance(lik, LogisticLik):
            eta = lik.alpha - D_t
        elif isinstance(lik, DegreeCorrectedLik):
            if not net.directed:
                raise InvalidInputError(
                    "degree-corrected likelihood is defined for directed networks"
                )
            eta = _eta_degree_corrected(D_t, lik.beta_in, lik.beta_out, lik.s)
        else:
            raise InvalidInputError(f"unknown likelihood variant {lik!r}")
        total += _binary_loglik_from_eta(net.adjacency[t], eta, net.directed)
    return total


def edge_prob_matrix_distance(X_t, lik):
    """Edge probability matrix at one time slice (diagonal zeroed)."""
    D_t = _distances_t(X_t)
    if isinstance(lik, LogisticLik):
        P = sigmoid(lik.alpha - D_t)
    elif isinstance(lik, DegreeCorrectedLik):
        P = sigmoid(_eta_degree_corrected(D_t, lik.beta_in, lik.beta_out, lik.s))
    else:
        raise InvalidInputError("edge probabilities need a binary likelihood")
    np.fill_diagonal(P, 0.0)
    return P


def _distances_t(X_t):
    diff = X_t[:, None, :] - X_t[None, :, :]
    D = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(D, 0.0)
    return D


def sample_adjacency_distance(X, lik, directed, rng):
    """Draw a network from the likelihood given latent positions."""
    gen = rng.gen if isinstance(rng, RngStream) else rng
    T, n, _ = X.shape
    if isinstance(lik, PlackettLuceLik):
        A = np.zeros((T, n, n), dtype=np.int64)
        for t in range(T):
            D_t = _distances_t(X[t])
            for i in range(n):
                alters = np.concatenate((np.arange(i), np.arange(i + 1, n)))
                w = np.log(lik.s[alters]) - D_t[i, alters]
                order = alters[np.argsort(-(w + gen.gumbel(size=n - 1)))]
                A[t, i, order] = np.arange(1, n)
        return DynamicNetwork(A, directed=True, kind=RANK)
    A = np.zeros((T, n, n), dtype=np.int64)
    for t in range(T):
        P = edge_prob_matrix_distance(X[t], lik)
        U = gen.random((n, n))
        if directed:
            A[t] = (U < P).astype(np.int64)
        else:
            upper = np.triu(U < P, k=1)
            A[t] = (upper | upper.T).astype(np.int64)
        np.fill_diagonal(A[t], 0)
    return DynamicNetwork(A, directed=directed, kind=BINARY)


# ---------------------------------------------------------------------------
# Parameters, hyperparameters, joint density
# ---------------------------------------------------------------------------

@dataclass
class DistanceParams:
    lam: float
    mu: np.ndarray       # (G, p) community locations
    sigma: np.ndarray    # (G, p, p) community shapes
    tau2: float
    gamma: np.ndarray    # (p,)
    beta0: np.ndarray    # (G,)
    betaT: np.ndarray    # (G, G), rows are simplexes
    lik: object

    @property
    def G(self):
        return self.mu.shape[0]

    @property
    def p(self):
        return self.mu.shape[1]


@dataclass
class DistanceHyperparams:
    """Priors of the MH-within-Gibbs sampler; defaults follow the reported
    sensitivity ranges, with the tight blending prior that keeps lam high."""

    nu_lambda: float = 0.85
    xi_lambda: float = 5e-4
    a: float = 3.0        # inverse-gamma shape on tau^2
    b: float = 0.03       # inverse-gamma scale on tau^2
    c: float = 1.001      # gamma shape on gamma_l
    d: float = 10.0       # gamma rate on gamma_l (prior scale is 1/d)
    beta_pseudo: float = 1.0
    alpha_prior_var: float = 100.0       # logistic intercept
    bio_prior_var: float = 100.0         # (beta_in, beta_out), independent
    s_pseudo: float = 1.0                # Dirichlet prior on s

    def validate(self):
        vals = [self.xi_lambda, self.a, self.b, self.c, self.d,
                self.beta_pseudo, self.alpha_prior_var, self.bio_prior_var,
                self.s_pseudo]
        if any(v <= 0 for v in vals):
            raise InvalidInputError("hyperparameters must be strictly positive")


def joint_logdensity_xz(state, params):
    """Log of the joint latent density: Markov cluster chains with Gaussian
    emissions blending community location and the previous position."""
    X, Z, G = state.X, state.Z, state.G
    T, n, p = X.shape
    if params.G != G or params.p != p:
        raise InvalidInputError("state and parameters disagree on G or p")
    chols = [chol_with_jitter(params.sigma[g]) for g in range(G)]
    logdets = [2.0 * np.sum(np.log(np.diag(L))) for L in chols]
    with np.errstate(divide="ignore"):
        log_beta0 = np.log(params.beta0)
        log_betaT = np.log(params.betaT)
    total = float(np.sum(log_beta0[Z[0]]))
    for t in range(1, T):
        total += float(np.sum(log_betaT[Z[t - 1], Z[t]]))
    if not np.isfinite(total):
        return -np.inf
    for t in range(T):
        if t == 0:
            means = params.mu[Z[0]]
        else:
            means = params.lam * params.mu[Z[t]] + (1.0 - params.lam) * X[t - 1]
        resid = X[t] - means
        for g in range(G):
            m = Z[t] == g
            if not m.any():
                continue
            v = solve_triangular(chols[g], resid[m].T, lower=True)
            quad = np.einsum("ij,ij->j", v, v)
            total += float(np.sum(-0.5 * (p * _LOG_2PI + logdets[g] + quad)))
    return total


def _log_invgamma(x, shape, scale):
    return shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x


def _log_gamma_pdf(x, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def _log_dirichlet(x, alpha):
    alpha = np.broadcast_to(alpha, x.shape)
    return float(
        gammaln(alpha.sum()) - gammaln(alpha).sum() + ((alpha - 1.0) * np.log(x)).sum()
    )


def _log_invwishart(S, df, scale):
    p = S.shape[0]
    Ls = chol_with_jitter(scale)
    L = chol_with_jitter(S)
    logdet_scale = 2.0 * np.sum(np.log(np.diag(Ls)))
    logdet_S = 2.0 * np.sum(np.log(np.diag(L)))
    Sinv_scale = cho_solve((L, True), scale)
    lgamma_p = p * (p - 1) / 4.0 * np.log(np.pi) + sum(
        gammaln(0.5 * (df - i)) for i in range(p)
    )
    return (
        0.5 * df * logdet_scale
        - 0.5 * (df + p + 1.0) * logdet_S
        - 0.5 * np.trace(Sinv_scale)
        - 0.5 * df * p * np.log(2.0)
        - lgamma_p
    )


def _log_truncnorm01(x, mean, var):
    sd = np.sqrt(var)
    lo = log_ndtr((0.0 - mean) / sd)
    hi = log_ndtr((1.0 - mean) / sd)
    log_mass = hi + np.log1p(-np.exp(lo - hi)) if lo < hi else -np.inf
    return -0.5 * ((x - mean) ** 2 / var + np.log(2.0 * np.pi * var)) - log_mass


def log_prior_distance(params, hyper):
    """Log prior density of every distance-model parameter block."""
    G, p = params.G, params.p
    total = _log_truncnorm01(params.lam, hyper.nu_lambda, hyper.xi_lambda)
    for g in range(G):
        total += mvn_logpdf(params.mu[g], np.zeros(p), params.tau2 * np.eye(p))
        total += _log_invwishart(params.sigma[g], p + 1, np.diag(params.gamma))
    total += _log_invgamma(params.tau2, hyper.a, hyper.b)
    total += np.sum(_log_gamma_pdf(params.gamma, hyper.c, hyper.d))
    total += _log_dirichlet(params.beta0, hyper.beta_pseudo)
    for h in range(G):
        total += _log_dirichlet(params.betaT[h], hyper.beta_pseudo)
    lik = params.lik
    if isinstance(lik, LogisticLik):
        total += -0.5 * (lik.alpha**2 / hyper.alpha_prior_var
                         + np.log(2.0 * np.pi * hyper.alpha_prior_var))
    elif isinstance(lik, DegreeCorrectedLik):
        v = hyper.bio_prior_var
        total += -0.5 * ((lik.beta_in**2 + lik.beta_out**2) / v
                         + 2.0 * np.log(2.0 * np.pi * v))
        total += _log_dirichlet(lik.s, hyper.s_pseudo)
    elif isinstance(lik, PlackettLuceLik):
        total += _log_dirichlet(lik.s, hyper.s_pseudo)
    return float(total)


# ---------------------------------------------------------------------------
# Conjugate block updates (each is the exact full conditional)
# ---------------------------------------------------------------------------

def update_beta(Z, G, pseudo, gen):
    """Dirichlet full conditionals for the initial and transition rows."""
    counts0 = np.bincount(Z[0], minlength=G).astype(float)
    beta0 = sample_dirichlet(pseudo + counts0, gen)
    trans = np.zeros((G, G))
    for t in range(1, Z.shape[0]):
        np.add.at(trans, (Z[t - 1], Z[t]), 1.0)
    betaT = np.vstack([sample_dirichlet(pseudo + trans[h], gen) for h in range(G)])
    return beta0, betaT


def update_mu(X, Z, lam, sigma, tau2, G, gen):
    """Normal-normal full conditional for each community location."""
    T, n, p = X.shape
    mu = np.empty((G, p))
    sigma_inv = [np.linalg.inv(sigma[g]) for g in range(G)]
    for g in range(G):
        prec = np.eye(p) / tau2
        rhs = np.zeros(p)
        m1 = Z[0] == g
        if m1.any():
            prec = prec + m1.sum() * sigma_inv[g]
            rhs = rhs + sigma_inv[g] @ X[0][m1].sum(axis=0)
        for t in range(1, T):
            m = Z[t] == g
            if not m.any():
                continue
            prec = prec + lam * lam * m.sum() * sigma_inv[g]
            resid = X[t][m] - (1.0 - lam) * X[t - 1][m]
            rhs = rhs + lam * (sigma_inv[g] @ resid.sum(axis=0))
        L = chol_with_jitter(prec)
        mean = cho_solve((L, True), rhs)
        # draw N(mean, prec^-1) via the Cholesky of the precision
        z = gen.standard_normal(p)
        mu[g] = mean + solve_triangular(L, z, lower=True, trans="T")
    return mu


def update_sigma(X, Z, lam, mu, gamma, G, gen):
    """Inverse-Wishart full conditional for each community shape."""
    T, n, p = X.shape
    sigma = np.empty((G, p, p))
    for g in range(G):
        df = p + 1
        S = np.diag(gamma).astype(float)
        m1 = Z[0] == g
        if m1.any():
            r = X[0][m1] - mu[g]
            S = S + r.T @ r
            df += int(m1.sum())
        for t in range(1, T):
            m = Z[t] == g
            if not m.any():
                continue
            r = X[t][m] - lam * mu[g] - (1.0 - lam) * X[t - 1][m]
            S = S + r.T @ r
            df += int(m.sum())
        sigma[g] = sample_inverse_wishart(df, S, gen)
    return sigma


def update_lambda(X, Z, mu, sigma, nu, xi, gen):
    """Truncated-normal full conditional for the blending coefficient."""
    T = X.shape[0]
    G = mu.shape[0]
    sigma_inv = [np.linalg.inv(sigma[g]) for g in range(G)]
    prec = 1.0 / xi
    lin = nu / xi
    for t in range(1, T):
        a = X[t] - X[t - 1]
        b = mu[Z[t]] - X[t - 1]
        for g in range(G):
            m = Z[t] == g
            if not m.any():
                continue
            Sb = b[m] @ sigma_inv[g]
            prec += float(np.einsum("ij,ij->", Sb, b[m]))
            lin += float(np.einsum("ij,ij->", Sb, a[m]))
    var = 1.0 / prec
    return sample_truncated_normal_01(lin * var, var, gen)


def update_tau2(mu, a, b, gen):
    """Inverse-gamma full conditional for the location prior scale."""
    G, p = mu.shape
    shape = a + 0.5 * G * p
    scale = b + 0.5 * float(np.sum(mu * mu))
    return scale / gen.gamma(shape)


def update_gamma(sigma, c, d, gen):
    """Gamma full conditional for each diagonal scale of the shape prior."""
    G, p, _ = sigma.shape
    inv_diags = np.array([np.diag(np.linalg.inv(sigma[g])) for g in range(G)])
    shape = c + 0.5 * G * (p + 1)
    rate = d + 0.5 * inv_diags.sum(axis=0)
    return gen.gamma(shape, 1.0 / rate)


def z_site_log_weights(X, Z, t, params):
    """Unnormalized log full-conditional weights of Z_it for all actors at t.

    Returns an array of shape (G, n): transition-in + emission +
    transition-out, with impossible transitions at -inf.
    """
    T, n, p = X.shape
    G = params.G
    with np.errstate(divide="ignore"):
        log_beta0 = np.log(params.beta0)
        log_betaT = np.log(params.betaT)
    logw = np.zeros((G, n))
    if t == 0:
        logw += log_beta0[:, None]
    else:
        logw += log_betaT[Z[t - 1]].T
    if t + 1 < T:
        logw += log_betaT[:, Z[t + 1]]
    for g in range(G):
        mean = params.mu[g] if t == 0 else (
            params.lam * params.mu[g] + (1.0 - params.lam) * X[t - 1]
        )
        resid = X[t] - mean
        L = chol_with_jitter(params.sigma[g])
        v = solve_triangular(L, resid.T, lower=True)
        quad = np.einsum("ij,ij->j", v, v)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        logw[g] += -0.5 * (p * _LOG_2PI + logdet + quad)
    return logw


def draw_z_time(X, Z, t, params, gen):
    """Draw labels for all actors at time t from their full conditionals."""
    logw = z_site_log_weights(X, Z, t, params)
    gumb = gen.gumbel(size=logw.shape)
    return np.argmax(logw + gumb, axis=0)


def sweep_z(X, Z, params, gen):
    """One single-site Gibbs sweep of the labels, t = 1..T in order."""
    T = X.shape[0]
    for t in range(T):
        Z[t] = draw_z_time(X, Z, t, params, gen)
    return Z


# ---------------------------------------------------------------------------
# MH-within-Gibbs sampler
# ---------------------------------------------------------------------------

@dataclass
class ChainConfig:
    iterations: int = 2000
    burn_in: int = 600
    thin: int = 5
    step_x: float = 0.0           # 0 -> data-driven initial scale
    step_lik: float = 0.1
    s_proposal_conc: float = 2000.0
    adapt_interval: int = 50
    target_accept: float = 0.234

    def validate(self):
        if self.iterations <= self.burn_in:
            raise ConfigError("iterations must exceed burn_in")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")


class DistanceSampler:
    """Mutable chain state with one `scan()` per MH-within-Gibbs iteration.

    Exposed separately from :func:`mh_within_gibbs_fit` so sampler-correctness
    protocols (joint-distribution checks) can interleave scans with data
    regeneration.
    """

    def __init__(self, net, G, p, hyper, likelihood, config, rng):
        if net.n < 1 or net.T < 1:
            raise ConfigError("network is empty")
        if G < 1 or G > net.n:
            raise ConfigError("need 1 <= G <= n")
        hyper.validate()
        config.validate()
        self.net = net
        self.G = int(G)
        self.p = int(p)
        self.hyper = hyper
        self.config = config
        self.rng = rng
        self.gen = rng.gen
        self.likelihood_kind = likelihood
        self.state = None
        self.params = None
        self.step_x = config.step_x
        self.step_lik = config.step_lik
        self.s_conc = config.s_proposal_conc
        self._acc = {"x": [0, 0], "lik": [0, 0], "s": [0, 0]}
        self._adapting = True
        if net.kind == RANK:
            self._orderings = net.orderings()

    # -- initialization ----------------------------------------------------

    def init_from_data(self):
        from .initializers import distance_initial_state

        state, params, step = distance_initial_state(
            self.net, self.G, self.p, self.likelihood_kind, self.hyper, self.rng
        )
        self.state = state
        self.params = params
        if self.step_x == 0.0:
            self.step_x = step
        self._refresh_distances()

    def init_from_prior(self):
        """Draw (params, X, Z) from the prior; used by sampler diagnostics."""
        gen = self.gen
        h = self.hyper
        G, p, n, T = self.G, self.p, self.net.n, self.net.T
        tau2 = h.b / gen.gamma(h.a)
        gamma = gen.gamma(h.c, 1.0 / h.d, size=p)
        mu = gen.normal(0.0, np.sqrt(tau2), size=(G, p))
        sigma = np.stack(
            [sample_inverse_wishart(p + 1, np.diag(gamma), gen) for _ in range(G)]
        )
        lam = sample_truncated_normal_01(h.nu_lambda, h.xi_lambda, gen)
        beta0 = sample_dirichlet(np.full(G, h.beta_pseudo), gen)
        betaT = np.vstack(
            [sample_dirichlet(np.full(G, h.beta_pseudo), gen) for _ in range(G)]
        )
        if self.likelihood_kind == "logistic":
            lik = LogisticLik(gen.normal(0.0, np.sqrt(h.alpha_prior_var)))
        elif self.likelihood_kind == "degree_corrected":
            lik = DegreeCorrectedLik(
                gen.normal(0.0, np.sqrt(h.bio_prior_var)),
                gen.normal(0.0, np.sqrt(h.bio_prior_var)),
                sample_dirichlet(np.full(n, h.s_pseudo), gen),
            )
        else:
            lik = PlackettLuceLik(sample_dirichlet(np.full(n, h.s_pseudo), gen))
        params = DistanceParams(lam, mu, sigma, tau2, gamma, beta0, betaT, lik)
        X = np.empty((T, n, p))
        Z = np.empty((T, n), dtype=np.int64)
        Z[0] = gen.choice(G, size=n, p=beta0)
        for i in range(n):
            L = chol_with_jitter(sigma[Z[0, i]])
            X[0, i] = mu[Z[0, i]] + L @ gen.standard_normal(p)
        for t in range(1, T):
            for i in range(n):
                Z[t, i] = gen.choice(G, p=betaT[Z[t - 1, i]])
                k = Z[t, i]
                mean = lam * mu[k] + (1.0 - lam) * X[t - 1, i]
                L = chol_with_jitter(sigma[k])
                X[t, i] = mean + L @ gen.standard_normal(p)
        self.state = LatentState(X, Z, G)
        self.params = params
        self._refresh_distances()

    def regenerate_data(self):
        """Redraw the network from the likelihood at the current state."""
        net = sample_adjacency_distance(
            self.state.X, self.params.lik, self.net.directed, self.rng
        )
        self.net = net
        if net.kind == RANK:
            self._orderings = net.orderings()

    # -- cached quantities ---------------------------------------------------

    def _refresh_distances(self):
        self.D = np.stack([_distances_t(self.state.X[t]) for t in range(self.net.T)])

    def _refresh_shape_factors(self):
        chols = [chol_with_jitter(self.params.sigma[g]) for g in range(self.G)]
        self._logdets = np.array(
            [2.0 * np.sum(np.log(np.diag(L))) for L in chols]
        )
        self._sig_inv = np.stack(
            [cho_solve((L, True), np.eye(self.p)) for L in chols]
        )

    # -- log target pieces -------------------------------------------------

    def loglik(self, lik=None):
        """Data log likelihood from the cached distance matrices."""
        lik = lik or self.params.lik
        net = self.net
        if isinstance(lik, PlackettLuceLik):
            total = 0.0
            for t in range(net.T):
                for j in range(net.n):
                    total += rank_loglik_plackett_luce(
                        self._orderings[t, j], lik.s, self.D[t, j]
                    )
            return total
        total = 0.0
        for t in range(net.T):
            if isinstance(lik, LogisticLik):
                eta = lik.alpha - self.D[t]
            else:
                eta = _eta_degree_corrected(self.D[t], lik.beta_in,
                                            lik.beta_out, lik.s)
            total += _binary_loglik_from_eta(net.adjacency[t], eta, net.directed)
        return total

    def log_posterior(self):
        return (
            self.loglik()
            + joint_logdensity_xz(self.state, self.params)
            + log_prior_distance(self.params, self.hyper)
        )

    def _emission_logpdf(self, x, mean, g):
        r = x - mean
        v = r @ self._sig_inv[g] * r
        quad = v.sum(axis=-1)
        return -0.5 * (self.p * _LOG_2PI + self._logdets[g] + quad)

    def _emission_logpdf_sites(self, x, mean, gs):
        """Emission log density at stacked sites with per-site shapes gs."""
        r = x - mean
        quad = np.einsum("bi,bij,bj->b", r, self._sig_inv[gs], r)
        return -0.5 * (self.p * _LOG_2PI + self._logdets[gs] + quad)

    def _lik_delta_rows(self, i, ts, new_rows):
        """Likelihood change from replacing distance row/col i at times ts."""
        net = self.net
        lik = self.params.lik
        old_rows = self.D[ts, i, :]
        if isinstance(lik, PlackettLuceLik):
            delta = np.zeros(len(ts))
            for b, t in enumerate(ts):
                D_new = self.D[t].copy()
                D_new[i, :] = new_rows[b]
                D_new[:, i] = new_rows[b]
                for j in range(net.n):
                    delta[b] += rank_loglik_plackett_luce(
                        self._orderings[t, j], lik.s, D_new[j]
                    ) - rank_loglik_plackett_luce(
                        self._orderings[t, j], lik.s, self.D[t, j]
                    )
            return delta
        Y = net.adjacency
        n = net.n
        j_mask = np.ones(n, dtype=bool)
        j_mask[i] = False
        if isinstance(lik, LogisticLik):
            eta_old_out = lik.alpha - old_rows
            eta_new_out = lik.alpha - new_rows
            eta_old_in, eta_new_in = eta_old_out, eta_new_out
        else:
            s = lik.s
            bi, bo = lik.beta_in, lik.beta_out
            eta_old_out = bi * (1.0 - old_rows / s[None, :]) + bo * (1.0 - old_rows / s[i])
            eta_new_out = bi * (1.0 - new_rows / s[None, :]) + bo * (1.0 - new_rows / s[i])
            eta_old_in = bi * (1.0 - old_rows / s[i]) + bo * (1.0 - old_rows / s[None, :])
            eta_new_in = bi * (1.0 - new_rows / s[i]) + bo * (1.0 - new_rows / s[None, :])
        y_out = Y[ts, i, :]
        y_in = Y[ts, :, i]
        if net.directed:
            lse = log1pexp(np.stack((eta_new_out, eta_old_out,
                                     eta_new_in, eta_old_in)))
            tot = (y_out * (eta_new_out - eta_old_out) - lse[0] + lse[1]
                   + y_in * (eta_new_in - eta_old_in) - lse[2] + lse[3])
        else:
            lse = log1pexp(np.stack((eta_new_out, eta_old_out)))
            tot = y_out * (eta_new_out - eta_old_out) - lse[0] + lse[1]
        return tot[:, j_mask].sum(axis=1)

    # -- Metropolis updates --------------------------------------------------

    def _update_x_actor(self, i, parity):
        state, params = self.state, self.params
        X, Z = state.X, state.Z
        T = X.shape[0]
        lam = params.lam
        ts = np.arange(parity, T, 2)
        if ts.size == 0:
            return
        cur = X[ts, i, :]
        prop = cur + self.step_x * self.gen.standard_normal((ts.size, self.p))
        new_rows = np.sqrt(((prop[:, None, :] - X[ts]) ** 2).sum(axis=-1))
        new_rows[np.arange(ts.size), i] = 0.0
        delta = self._lik_delta_rows(i, ts, new_rows)
        # emission at each site (mean depends on the previous position)
        gs = Z[ts, i]
        prev = X[np.maximum(ts - 1, 0), i, :]
        means = np.where(
            (ts == 0)[:, None], params.mu[gs], lam * params.mu[gs] + (1.0 - lam) * prev
        )
        delta += self._emission_logpdf_sites(prop, means, gs)
        delta -= self._emission_logpdf_sites(cur, means, gs)
        # emission one step ahead (mean depends on this position)
        has_next = ts + 1 < T
        if has_next.any():
            tn = ts[has_next] + 1
            gn = Z[tn, i]
            x_next = X[tn, i, :]
            delta[has_next] += self._emission_logpdf_sites(
                x_next, lam * params.mu[gn] + (1.0 - lam) * prop[has_next], gn
            )
            delta[has_next] -= self._emission_logpdf_sites(
                x_next, lam * params.mu[gn] + (1.0 - lam) * cur[has_next], gn
            )
        self._last_x_delta = delta
        accept = np.log(self.gen.random(ts.size)) < delta
        self._acc["x"][0] += int(accept.sum())
        self._acc["x"][1] += ts.size
        for b, t in enumerate(ts):
            if accept[b]:
                X[t, i] = prop[b]
                self.D[t, i, :] = new_rows[b]
                self.D[t, :, i] = new_rows[b]

    def _update_x(self):
        for parity in (0, 1):
            for i in range(self.net.n):
                self._update_x_actor(i, parity)

    def _update_lik_params(self):
        lik = self.params.lik
        gen = self.gen
        h = self.hyper
        cur_ll = self.loglik()
        if isinstance(lik, LogisticLik):
            prop = LogisticLik(lik.alpha + self.step_lik * gen.standard_normal())
            new_ll = self.loglik(prop)
            delta = (new_ll - cur_ll
                     - 0.5 * (prop.alpha**2 - lik.alpha**2) / h.alpha_prior_var)
            self._acc["lik"][1] += 1
            if np.log(gen.random()) < delta:
                self.params.lik = prop
                self._acc["lik"][0] += 1
                cur_ll = new_ll
        elif isinstance(lik, DegreeCorrectedLik):
            step = self.step_lik * gen.standard_normal(2)
            prop = replace(lik, beta_in=lik.beta_in + step[0],
                           beta_out=lik.beta_out + step[1])
            new_ll = self.loglik(prop)
            delta = (new_ll - cur_ll
                     - 0.5 * (prop.beta_in**2 + prop.beta_out**2
                              - lik.beta_in**2 - lik.beta_out**2) / h.bio_prior_var)
            self._acc["lik"][1] += 1
            if np.log(gen.random()) < delta:
                self.params.lik = prop
                self._acc["lik"][0] += 1
                cur_ll = new_ll
            cur_ll = self._update_s(cur_ll)
        elif isinstance(lik, PlackettLuceLik):
            cur_ll = self._update_s(cur_ll)
        self._last_loglik = cur_ll

    def _update_s(self, cur_ll):
        """Dirichlet-neighborhood proposal for the actor scale simplex."""
        lik = self.params.lik
        gen = self.gen
        h = self.hyper
        conc_cur = self.s_conc * lik.s + 1e-3
        s_new = sample_dirichlet(conc_cur, gen)
        conc_new = self.s_conc * s_new + 1e-3
        prop = replace(lik, s=s_new)
        new_ll = self.loglik(prop)
        delta = new_ll - cur_ll
        delta += _log_dirichlet(s_new, h.s_pseudo) - _log_dirichlet(lik.s, h.s_pseudo)
        delta += _log_dirichlet(lik.s, conc_new) - _log_dirichlet(s_new, conc_cur)
        self._acc["s"][1] += 1
        if np.log(gen.random()) < delta:
            self.params.lik = prop
            self._acc["s"][0] += 1
            return new_ll
        return cur_ll

    def _adapt(self):
        acc, tries = self._acc["x"]
        if tries:
            rate = acc / tries
            self.step_x *= np.exp(0.6 * (rate - self.config.target_accept))
        acc, tries = self._acc["lik"]
        if tries:
            self.step_lik *= np.exp(0.6 * (acc / tries - self.config.target_accept))
        acc, tries = self._acc["s"]
        if tries:
            # larger concentration means smaller moves
            self.s_conc *= np.exp(-1.2 * (acc / tries - self.config.target_accept))
            self.s_conc = float(np.clip(self.s_conc, 10.0, 1e7))
        self._acc = {"x": [0, 0], "lik": [0, 0], "s": [0, 0]}

    def freeze_adaptation(self):
        self._adapting = False

    # -- one full scan -------------------------------------------------------

    def _sweep_z_cached(self):
        params, state = self.params, self.state
        X, Z = state.X, state.Z
        T, n, p = X.shape
        with np.errstate(divide="ignore"):
            log_beta0 = np.log(params.beta0)
            log_betaT = np.log(params.betaT)
        mu = params.mu
        for t in range(T):
            if t == 0:
                means = np.broadcast_to(mu[:, None, :], (self.G, n, p))
                logw = np.repeat(log_beta0[:, None], n, axis=1)
            else:
                means = params.lam * mu[:, None, :] + (1.0 - params.lam) * X[t - 1]
                logw = log_betaT[Z[t - 1]].T.copy()
            if t + 1 < T:
                logw += log_betaT[:, Z[t + 1]]
            r = X[t][None, :, :] - means
            quad = np.einsum("gnp,gpq,gnq->gn", r, self._sig_inv, r)
            logw += -0.5 * (p * _LOG_2PI + self._logdets[:, None] + quad)
            gumb = self.gen.gumbel(size=logw.shape)
            Z[t] = np.argmax(logw + gumb, axis=0)

    def scan(self, adapt=False):
        gen = self.gen
        params, state = self.params, self.state
        self._refresh_shape_factors()
        self._update_x()
        self._sweep_z_cached()
        params.mu = update_mu(state.X, state.Z, params.lam, params.sigma,
                              params.tau2, self.G, gen)
        params.sigma = update_sigma(state.X, state.Z, params.lam, params.mu,
                                    params.gamma, self.G, gen)
        params.lam = update_lambda(state.X, state.Z, params.mu, params.sigma,
                                   self.hyper.nu_lambda, self.hyper.xi_lambda, gen)
        params.tau2 = update_tau2(params.mu, self.hyper.a, self.hyper.b, gen)
        params.gamma = update_gamma(params.sigma, self.hyper.c, self.hyper.d, gen)
        params.beta0, params.betaT = update_beta(state.Z, self.G,
                                                 self.hyper.beta_pseudo, gen)
        self._update_lik_params()
        if adapt and self._adapting:
            self._adapt()

    def lik_param_arrays(self):
        lik = self.params.lik
        if isinstance(lik, LogisticLik):
            return {"alpha": lik.alpha}
        if isinstance(lik, DegreeCorrectedLik):
            return {"beta_in": lik.beta_in, "beta_out": lik.beta_out,
                    "s": lik.s.copy()}
        return {"s": lik.s.copy()}


def default_likelihood_kind(net):
    if net.kind == RANK:
        return "plackett_luce"
    return "degree_corrected" if net.directed else "logistic"


def mh_within_gibbs_fit(net, G, hyper=None, chain=None, rng=None, p=2,
                        likelihood=None):
    """Fit the distance model by MH within Gibbs.

    Returns thinned draws of the latent state, all parameters, and the
    log-posterior / log-likelihood traces.
    """
    if rng is None:
        raise ConfigError("an RngStream is required")
    hyper = hyper or DistanceHyperparams()
    chain = chain or ChainConfig()
    likelihood = likelihood or default_likelihood_kind(net)
    if likelihood == "plackett_luce" and net.kind != RANK:
        raise ConfigError("Plackett-Luce requires a rank payload")
    if likelihood != "plackett_luce" and net.kind == RANK:
        raise ConfigError("rank payloads need the Plackett-Luce likelihood")
    sampler = DistanceSampler(net, G, p, hyper, likelihood, chain, rng)
    sampler.init_from_data()
    lp0 = sampler.log_posterior()
    if not np.isfinite(lp0):
        raise ConfigError("initial log-posterior is not finite")

    kept_X, kept_Z, kept_lp, kept_ll = [], [], [], []
    kept = {"lam": [], "mu": [], "sigma": [], "tau2": [], "gamma": [],
            "beta0": [], "betaT": []}
    kept_lik = []
    for it in range(chain.iterations):
        adapt = it < chain.burn_in and (it + 1) % chain.adapt_interval == 0
        sampler.scan(adapt=adapt)
        if it == chain.burn_in - 1:
            sampler.freeze_adaptation()
        if it >= chain.burn_in and (it - chain.burn_in) % chain.thin == 0:
            pa = sampler.params
            kept_X.append(sampler.state.X.copy())
            kept_Z.append(sampler.state.Z.copy())
            kept["lam"].append(pa.lam)
            kept["mu"].append(pa.mu.copy())
            kept["sigma"].append(pa.sigma.copy())
            kept["tau2"].append(pa.tau2)
            kept["gamma"].append(pa.gamma.copy())
            kept["beta0"].append(pa.beta0.copy())
            kept["betaT"].append(pa.betaT.copy())
            kept_lik.append(sampler.lik_param_arrays())
            ll = sampler._last_loglik
            kept_ll.append(ll)
            kept_lp.append(ll + joint_logdensity_xz(sampler.state, pa)
                           + log_prior_distance(pa, hyper))
    params = {k: np.array(v) for k, v in kept.items()}
    for name in kept_lik[0]:
        params[name] = np.array([d[name] for d in kept_lik])
    acc_x, try_x = sampler._acc["x"]
    meta = {
        "geometry": "distance",
        "engine": "mcmc",
        "likelihood": likelihood,
        "p": p,
        "seed": rng.seed,
        "stream_id": rng.stream_id,
        "iterations": chain.iterations,
        "burn_in": chain.burn_in,
        "thin": chain.thin,
        "step_x": sampler.step_x,
        "accept_x": acc_x / try_x if try_x else float("nan"),
        "directed": net.directed,
        "kind": net.kind,
    }
    return PosteriorSamples(
        geometry="distance",
        G=G,
        X=np.array(kept_X),
        Z=np.array(kept_Z),
        params=params,
        log_posterior=np.array(kept_lp),
        log_lik=np.array(kept_ll),
        meta=meta,
    )


def map_extract(samples):
    """The stored draw with the highest log posterior."""
    k = samples.map_index()
    return samples.state_at(k), samples.params_at(k)

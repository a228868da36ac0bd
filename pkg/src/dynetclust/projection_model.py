"""Hypersphere-geometry model: inner-product likelihood, latent joint
density, Polya-Gamma augmentation, and the all-conjugate Gibbs sampler.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, InvalidInputError, UnsupportedLikelihoodError
from .network import BINARY, DynamicNetwork, LatentState, PosteriorSamples
from .randkit import (
    RngStream,
    log1pexp,
    sample_dirichlet,
    sample_polya_gamma,
    sample_truncated_normal,
    sample_von_mises_fisher,
    sigmoid,
)

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class ProjectionParams:
    alpha: float
    s: np.ndarray      # (n,) receiver scalings, positive
    r: np.ndarray      # (n,) sender propensities, positive
    tau: np.ndarray    # (n,) precisions, positive
    u: np.ndarray      # (G, p) unit community directions
    beta0: np.ndarray  # (G,)
    betaT: np.ndarray  # (G, G)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        norms = np.linalg.norm(self.u, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise InvalidInputError("community directions must be unit vectors")

    @property
    def G(self):
        return self.u.shape[0]

    @property
    def p(self):
        return self.u.shape[1]


@dataclass
class ProjectionHyperparams:
    c: float = 10.0     # couples the sender propensity to its precision
    a2: float = 600.0   # gamma shape on tau_i
    b2: float = 0.05    # gamma scale on tau_i
    b3: float = 100.0   # normal prior variance on alpha
    beta_pseudo: float = 1.0

    def validate(self):
        if min(self.c, self.a2, self.b2, self.b3, self.beta_pseudo) <= 0:
            raise InvalidInputError("hyperparameters must be strictly positive")


def eta_projection(alpha, s_j, X_i, X_j):
    """Linear predictor alpha + s_j <X_i, X_j> of the dyad i -> j."""
    X_i = np.asarray(X_i, dtype=float)
    X_j = np.asarray(X_j, dtype=float)
    if X_i.shape != X_j.shape:
        raise InvalidInputError("positions must share a dimension")
    return float(alpha + s_j * (X_i @ X_j))


def eta_matrix(alpha, s, X_t, directed=True):
    """All-dyads predictor at one time slice; entry (i, j) is the i -> j dyad."""
    inner = X_t @ X_t.T
    if directed:
        eta = alpha + inner * np.asarray(s)[None, :]
    else:
        eta = alpha + inner
    return eta


def loglik_projection(net, X, alpha, s):
    """Binary data log likelihood under the projection parameterization."""
    if net.kind != BINARY:
        raise UnsupportedLikelihoodError("projection likelihood needs binary edges")
    T, n, _ = X.shape
    total = 0.0
    for t in range(T):
        eta = eta_matrix(alpha, s, X[t], net.directed)
        term = net.adjacency[t] * eta - log1pexp(eta)
        if net.directed:
            mask = ~np.eye(n, dtype=bool)
        else:
            mask = np.triu(np.ones((n, n), dtype=bool), k=1)
        total += float(term[mask].sum())
    return total


def edge_prob_matrix_projection(X_t, alpha, s, directed=True):
    P = sigmoid(eta_matrix(alpha, s, X_t, directed))
    np.fill_diagonal(P, 0.0)
    return P


def sample_adjacency_projection(X, alpha, s, directed, rng):
    gen = rng.gen if isinstance(rng, RngStream) else rng
    T, n, _ = X.shape
    A = np.zeros((T, n, n), dtype=np.int64)
    for t in range(T):
        P = edge_prob_matrix_projection(X[t], alpha, s, directed)
        U = gen.random((n, n))
        if directed:
            A[t] = (U < P).astype(np.int64)
        else:
            upper = np.triu(U < P, k=1)
            A[t] = (upper | upper.T).astype(np.int64)
        np.fill_diagonal(A[t], 0)
    return DynamicNetwork(A, directed=directed, kind=BINARY)


def polya_gamma_logpdf(omega, c=0.0, terms=200):
    """Log density of PG(1, c) via the alternating theta series."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise InvalidInputError("PG support is the positive half-line")
    j = 4.0 * omega
    n = np.arange(terms)[:, None]
    nh = n + 0.5
    small = np.pi * nh * (2.0 / (np.pi * j)) ** 1.5 * np.exp(-2.0 * nh**2 / j)
    large = np.pi * nh * np.exp(-0.5 * nh**2 * np.pi**2 * j)
    series = np.where(j <= 0.64, small, large)
    f = 4.0 * np.sum(np.where(n % 2 == 0, series, -series), axis=0)
    out = np.log(np.maximum(f, 1e-300))
    if c != 0.0:
        out = out + np.log(np.cosh(c / 2.0)) - 0.5 * c**2 * omega
    if out.ndim == 0:
        return float(out)
    return out


def pg_augmented_logjoint(y, omega, eta):
    """Log of the augmented dyad density
    (1/2) e^{(y-1/2) eta} e^{-omega eta^2 / 2} PG(omega | 1, 0)."""
    if omega <= 0:
        raise InvalidInputError("omega must be positive")
    return (
        np.log(0.5)
        + (y - 0.5) * eta
        - 0.5 * omega * eta * eta
        + polya_gamma_logpdf(omega)
    )


def joint_logdensity_xz_proj(state, params):
    """Log joint of positions and labels: Markov chains with spherical
    Gaussian emissions N(X_it | r_i u_k, tau_i^-1 I)."""
    X, Z, G = state.X, state.Z, state.G
    T, n, p = X.shape
    if params.G != G or params.p != p:
        raise InvalidInputError("state and parameters disagree on G or p")
    with np.errstate(divide="ignore"):
        log_beta0 = np.log(params.beta0)
        log_betaT = np.log(params.betaT)
    total = float(np.sum(log_beta0[Z[0]]))
    for t in range(1, T):
        total += float(np.sum(log_betaT[Z[t - 1], Z[t]]))
    if not np.isfinite(total):
        return -np.inf
    r, tau, u = params.r, params.tau, params.u
    for t in range(T):
        resid = X[t] - r[:, None] * u[Z[t]]
        sq = np.einsum("ij,ij->i", resid, resid)
        total += float(np.sum(0.5 * (p * (np.log(tau) - _LOG_2PI) - tau * sq)))
    return total


def log_prior_projection(params, hyper):
    h = hyper
    n = params.s.shape[0]
    G, p = params.G, params.p
    total = -0.5 * (params.alpha**2 / h.b3 + np.log(2.0 * np.pi * h.b3))
    total += float(np.sum(-params.s))  # Exp(1)
    # r_i | tau_i ~ Exp(rate tau_i / c)
    total += float(np.sum(np.log(params.tau / h.c) - params.tau * params.r / h.c))
    total += float(np.sum((h.a2 - 1.0) * np.log(params.tau) - params.tau / h.b2
                          - h.a2 * np.log(h.b2) - gammaln(h.a2)))
    total += G * (gammaln(0.5 * p) - np.log(2.0) - 0.5 * p * np.log(np.pi))
    alpha0 = np.full(G, h.beta_pseudo)
    total += float(gammaln(alpha0.sum()) - gammaln(alpha0).sum()
                   + ((alpha0 - 1.0) * np.log(params.beta0)).sum())
    for hrow in range(G):
        total += float(gammaln(alpha0.sum()) - gammaln(alpha0).sum()
                       + ((alpha0 - 1.0) * np.log(params.betaT[hrow])).sum())
    return float(total)


@dataclass
class GibbsConfig:
    iterations: int = 1500
    burn_in: int = 500
    thin: int = 5

    def validate(self):
        if self.iterations <= self.burn_in:
            raise ConfigError("iterations must exceed burn_in")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")


class ProjectionSampler:
    """Gibbs chain for the projection model; every block is conjugate."""

    def __init__(self, net, G, p, hyper, config, rng):
        if net.kind != BINARY:
            raise UnsupportedLikelihoodError("projection model needs binary edges")
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
        self.directed = net.directed
        n = net.n
        self._offdiag = ~np.eye(n, dtype=bool)
        self._upper = np.triu(np.ones((n, n), dtype=bool), k=1)
        self._mask = self._offdiag if self.directed else self._upper
        self.kappa = net.adjacency.astype(float) - 0.5
        self.state = None
        self.params = None
        self.omega = None

    # -- initialization -----------------------------------------------------

    def init_from_data(self):
        from .initializers import projection_initial_state

        state, u, r, tau, s, alpha, beta0, betaT = projection_initial_state(
            self.net, self.G, self.p, self.rng
        )
        if not self.directed:
            s = np.ones(self.net.n)
        self.state = state
        self.params = ProjectionParams(alpha, s, r, tau, u, beta0, betaT)
        self._update_omega()

    def init_from_prior(self):
        gen = self.gen
        h = self.hyper
        G, p, n, T = self.G, self.p, self.net.n, self.net.T
        alpha = gen.normal(0.0, np.sqrt(h.b3))
        tau = gen.gamma(h.a2, h.b2, size=n)
        r = gen.exponential(size=n) * h.c / tau
        s = gen.exponential(size=n) if self.directed else np.ones(n)
        u = np.stack([
            sample_von_mises_fisher(np.eye(p)[0], 0.0, gen) for _ in range(G)
        ])
        beta0 = sample_dirichlet(np.full(G, h.beta_pseudo), gen)
        betaT = np.vstack([
            sample_dirichlet(np.full(G, h.beta_pseudo), gen) for _ in range(G)
        ])
        from .simulate import _draw_chains

        Z = _draw_chains(beta0, betaT, n, T, gen)
        X = r[None, :, None] * u[Z] + (
            gen.standard_normal((T, n, p)) / np.sqrt(tau)[None, :, None]
        )
        self.state = LatentState(X, Z, G)
        self.params = ProjectionParams(alpha, s, r, tau, u, beta0, betaT)
        self._update_omega()

    def regenerate_data(self):
        net = sample_adjacency_projection(
            self.state.X, self.params.alpha, self.params.s, self.directed, self.rng
        )
        self.net = net
        self.kappa = net.adjacency.astype(float) - 0.5

    # -- likelihood helpers --------------------------------------------------

    def _etas(self):
        X = self.state.X
        pa = self.params
        inner = np.einsum("tip,tjp->tij", X, X)
        if self.directed:
            return pa.alpha + inner * pa.s[None, None, :]
        return pa.alpha + inner

    def loglik(self):
        return loglik_projection(self.net, self.state.X, self.params.alpha,
                                 self.params.s)

    def log_posterior(self):
        return (self.loglik()
                + joint_logdensity_xz_proj(self.state, self.params)
                + log_prior_projection(self.params, self.hyper))

    # -- Gibbs blocks --------------------------------------------------------

    def _update_omega(self):
        eta = self._etas()
        T, n, _ = eta.shape
        draws = np.zeros((T, n, n))
        m3 = np.broadcast_to(self._mask, eta.shape)
        draws[m3] = sample_polya_gamma(eta[m3], self.gen)
        if not self.directed:
            draws = draws + draws.transpose(0, 2, 1)
        self.omega = draws

    def _update_x(self):
        pa = self.params
        X = self.state.X
        Z = self.state.Z
        om = self.omega
        kap = self.kappa
        alpha, s, r, tau = pa.alpha, pa.s, pa.r, pa.tau
        T, n, p = X.shape
        eye = np.eye(p)
        for i in range(n):
            if self.directed:
                w = om[:, i, :] * (s[None, :] ** 2) + om[:, :, i] * (s[i] ** 2)
                lin_w = (kap[:, i, :] - alpha * om[:, i, :]) * s[None, :] + (
                    kap[:, :, i] - alpha * om[:, :, i]
                ) * s[i]
            else:
                w = om[:, i, :]
                lin_w = kap[:, i, :] - alpha * om[:, i, :]
            w[:, i] = 0.0
            lin_w[:, i] = 0.0
            Lam = tau[i] * eye[None, :, :] + np.einsum("tj,tjp,tjq->tpq", w, X, X)
            b = tau[i] * r[i] * pa.u[Z[:, i]] + np.einsum("tj,tjp->tp", lin_w, X)
            L = np.linalg.cholesky(Lam)
            mean = np.linalg.solve(Lam, b[:, :, None])[:, :, 0]
            z = self.gen.standard_normal((T, p, 1))
            step = np.linalg.solve(np.transpose(L, (0, 2, 1)), z)[:, :, 0]
            X[:, i, :] = mean + step

    def _update_alpha(self):
        pa = self.params
        om = self.omega
        X = self.state.X
        inner = np.einsum("tip,tjp->tij", X, X)
        m = inner * pa.s[None, None, :] if self.directed else inner
        m3 = np.broadcast_to(self._mask, om.shape)
        prec = 1.0 / self.hyper.b3 + om[m3].sum()
        lin = (self.kappa[m3] - om[m3] * m[m3]).sum()
        mean = lin / prec
        pa.alpha = float(self.gen.normal(mean, np.sqrt(1.0 / prec)))

    def _update_s(self):
        if not self.directed:
            return
        pa = self.params
        om = self.omega
        X = self.state.X
        inner = np.einsum("tip,tjp->tij", X, X)
        diag = np.arange(self.net.n)
        inner[:, diag, diag] = 0.0
        prec = np.einsum("tij,tij->j", om, inner**2)
        lin = np.einsum("tij,tij->j", self.kappa - pa.alpha * om, inner) - 1.0
        # dyads into j with zero inner product leave s_j at its prior
        prec = np.maximum(prec, 1e-12)
        mean = lin / prec
        pa.s = sample_truncated_normal(mean, 1.0 / prec, 0.0, np.inf, self.rng)

    def _update_u(self):
        pa = self.params
        X = self.state.X
        Z = self.state.Z
        wt = (pa.tau * pa.r)[None, :]
        for g in range(self.G):
            m = Z == g
            if m.any():
                vec = np.einsum("ti,tip->p", m * wt, X)
            else:
                vec = np.zeros(self.p)
            kappa = float(np.linalg.norm(vec))
            mu = vec / kappa if kappa > 0 else np.eye(self.p)[0]
            pa.u[g] = sample_von_mises_fisher(mu, kappa, self.gen)

    def _update_r(self):
        pa = self.params
        X = self.state.X
        Z = self.state.Z
        T = X.shape[0]
        proj = np.einsum("tip,tip->i", pa.u[Z], X)
        mean = (proj - 1.0 / self.hyper.c) / T
        var = 1.0 / (pa.tau * T)
        pa.r = sample_truncated_normal(mean, var, 0.0, np.inf, self.rng)

    def _update_tau(self):
        pa = self.params
        X = self.state.X
        Z = self.state.Z
        T, n, p = X.shape
        resid = X - pa.r[None, :, None] * pa.u[Z]
        sq = np.einsum("tip,tip->i", resid, resid)
        shape = self.hyper.a2 + 0.5 * T * p + 1.0
        rate = 1.0 / self.hyper.b2 + 0.5 * sq + pa.r / self.hyper.c
        pa.tau = self.gen.gamma(shape, 1.0 / rate)

    def _z_log_weights(self, t):
        pa = self.params
        X = self.state.X
        Z = self.state.Z
        T, n, p = X.shape
        with np.errstate(divide="ignore"):
            log_beta0 = np.log(pa.beta0)
            log_betaT = np.log(pa.betaT)
        logw = np.zeros((self.G, n))
        if t == 0:
            logw += log_beta0[:, None]
        else:
            logw += log_betaT[Z[t - 1]].T
        if t + 1 < T:
            logw += log_betaT[:, Z[t + 1]]
        for g in range(self.G):
            resid = X[t] - pa.r[:, None] * pa.u[g]
            sq = np.einsum("ij,ij->i", resid, resid)
            logw[g] += 0.5 * (p * (np.log(pa.tau) - _LOG_2PI) - pa.tau * sq)
        return logw

    def _update_z(self):
        T = self.state.X.shape[0]
        for t in range(T):
            logw = self._z_log_weights(t)
            gumb = self.gen.gumbel(size=logw.shape)
            self.state.Z[t] = np.argmax(logw + gumb, axis=0)

    def _update_beta(self):
        from .distance_model import update_beta

        self.params.beta0, self.params.betaT = update_beta(
            self.state.Z, self.G, self.hyper.beta_pseudo, self.gen
        )

    def scan(self):
        self._update_omega()
        self._update_x()
        self._update_z()
        self._update_u()
        self._update_r()
        self._update_tau()
        self._update_s()
        self._update_alpha()
        self._update_beta()


def gibbs_fit_projection(net, G, hyper=None, chain=None, rng=None, p=3):
    """Fit the projection model by the Polya-Gamma Gibbs sampler."""
    if rng is None:
        raise ConfigError("an RngStream is required")
    hyper = hyper or ProjectionHyperparams()
    chain = chain or GibbsConfig()
    sampler = ProjectionSampler(net, G, p, hyper, chain, rng)
    sampler.init_from_data()
    lp0 = sampler.log_posterior()
    if not np.isfinite(lp0):
        raise ConfigError("initial log-posterior is not finite")
    kept_X, kept_Z, kept_lp, kept_ll = [], [], [], []
    kept = {"alpha": [], "s": [], "r": [], "tau": [], "u": [],
            "beta0": [], "betaT": []}
    for it in range(chain.iterations):
        sampler.scan()
        if it >= chain.burn_in and (it - chain.burn_in) % chain.thin == 0:
            pa = sampler.params
            kept_X.append(sampler.state.X.copy())
            kept_Z.append(sampler.state.Z.copy())
            kept["alpha"].append(pa.alpha)
            kept["s"].append(pa.s.copy())
            kept["r"].append(pa.r.copy())
            kept["tau"].append(pa.tau.copy())
            kept["u"].append(pa.u.copy())
            kept["beta0"].append(pa.beta0.copy())
            kept["betaT"].append(pa.betaT.copy())
            ll = sampler.loglik()
            kept_ll.append(ll)
            kept_lp.append(ll + joint_logdensity_xz_proj(sampler.state, pa)
                           + log_prior_projection(pa, hyper))
    params = {k: np.array(v) for k, v in kept.items()}
    meta = {
        "geometry": "projection",
        "engine": "mcmc",
        "p": p,
        "seed": rng.seed,
        "stream_id": rng.stream_id,
        "iterations": chain.iterations,
        "burn_in": chain.burn_in,
        "thin": chain.thin,
        "directed": net.directed,
        "kind": net.kind,
    }
    return PosteriorSamples(
        geometry="projection",
        G=G,
        X=np.array(kept_X),
        Z=np.array(kept_Z),
        params=params,
        log_posterior=np.array(kept_lp),
        log_lik=np.array(kept_ll),
        meta=meta,
    )

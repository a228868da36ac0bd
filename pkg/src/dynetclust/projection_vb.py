"""Closed-form mean-field variational Bayes for the projection model.

Every factor update is the exact coordinate-ascent optimum, so the evidence
lower bound is nondecreasing across sweeps; that property doubles as the
correctness gate for each derived update.

Factorization: q(Omega) q(X) q(Z) q(alpha) q(s) q(r) q(tau) q(u) q(beta),
with q(X) Gaussian per actor-time, q(Z) one structured chain per actor, and
q(Omega) in the tilted Polya-Gamma family.  Block order per sweep:
Omega, X, Z, u, r, tau, s, alpha, beta.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, logsumexp

from .errors import ConfigError, UnsupportedLikelihoodError
from .network import BINARY
from .randkit import vmf_log_normalizer, vmf_mean_resultant

_LOG_2PI = np.log(2.0 * np.pi)


def pg_tilted_mean(c):
    """E[omega] under PG(1, c): tanh(c/2) / (2c), with the c -> 0 limit."""
    c = np.asarray(c, dtype=float)
    small = np.abs(c) < 1e-6
    out = np.empty_like(c)
    cs = c[~small]
    out[~small] = np.tanh(0.5 * cs) / (2.0 * cs)
    out[small] = 0.25 - c[small] ** 2 / 48.0
    return out


def _log_cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


def _trunc_norm_moments(mean, var):
    """Mean, second moment, and entropy of N(mean, var) truncated to (0, inf)."""
    from scipy.special import erfcx, log_ndtr

    sd = np.sqrt(var)
    a = -mean / sd
    # Mills ratio phi(a) / (1 - Phi(a)), stable deep in the tail via erfcx
    mills = np.sqrt(2.0 / np.pi) / erfcx(a / np.sqrt(2.0))
    m1 = mean + sd * mills
    v = var * (1.0 + a * mills - mills**2)
    v = np.maximum(v, 1e-300)
    m2 = v + m1**2
    entropy = (
        0.5 * np.log(2.0 * np.pi * np.e * var) + log_ndtr(-a) + 0.5 * a * mills
    )
    return m1, m2, entropy


@dataclass
class VBConfig:
    max_sweeps: int = 200
    tol: float = 1e-4
    restarts: int = 5
    jitter: float = 0.05

    def validate(self):
        if self.max_sweeps < 1 or self.tol <= 0 or self.restarts < 1:
            raise ConfigError("bad VB configuration")


@dataclass
class VBPosterior:
    """Variational factors, one block per term of the factorization."""

    geometry: str
    G: int
    directed: bool
    x_mean: np.ndarray       # (T, n, p)
    x_cov: np.ndarray        # (T, n, p, p)
    q_z_marginals: np.ndarray  # (n, T, G)
    q_z_pairs: np.ndarray      # (n, T-1, G, G)
    alpha_mean: float
    alpha_var: float
    s_mean: np.ndarray
    s_m2: np.ndarray
    r_mean: np.ndarray
    r_m2: np.ndarray
    tau_shape: np.ndarray
    tau_rate: np.ndarray
    u_dir: np.ndarray        # (G, p) vMF mean directions
    u_conc: np.ndarray       # (G,)
    beta0_conc: np.ndarray
    betaT_conc: np.ndarray
    elbo_trace: np.ndarray = field(default=None)
    converged: bool = True
    meta: dict = field(default_factory=dict)

    # -- expectations used by predictions and reports -----------------------

    def expected_alpha(self):
        return self.alpha_mean

    def expected_s(self):
        return self.s_mean

    def expected_r(self):
        return self.r_mean

    def expected_tau(self):
        return self.tau_shape / self.tau_rate

    def expected_u(self):
        a = vmf_mean_resultant(self.u_conc, self.u_dir.shape[1])
        return np.asarray(a)[:, None] * self.u_dir

    def expected_u_directions(self):
        return self.u_dir

    def expected_beta0(self):
        return self.beta0_conc / self.beta0_conc.sum()

    def expected_betaT(self):
        return self.betaT_conc / self.betaT_conc.sum(axis=1, keepdims=True)

    def hard_labels(self):
        """Argmax cluster labels, shape (T, n)."""
        return np.argmax(self.q_z_marginals, axis=2).T.copy()

    def expected_eta(self, t):
        inner = self.x_mean[t] @ self.x_mean[t].T
        if self.directed:
            eta = self.alpha_mean + inner * self.s_mean[None, :]
        else:
            eta = self.alpha_mean + inner
        return eta

    def predictive_matrix(self, t):
        from .randkit import sigmoid

        P = sigmoid(self.expected_eta(t))
        np.fill_diagonal(P, 0.0)
        return P


def vb_predictive_edge_prob(post, i, j, t):
    """Plug-in edge probability sigma(E_q[eta_ijt])."""
    from .randkit import sigmoid

    inner = float(post.x_mean[t, i] @ post.x_mean[t, j])
    s_j = post.s_mean[j] if post.directed else 1.0
    return float(sigmoid(post.alpha_mean + s_j * inner))


def chain_marginals_from_emissions(log_emit, log_b0, log_bT):
    """Exact forward-backward marginals of independent label chains.

    log_emit: (n, T, G) expected log emissions; log_b0: (G,); log_bT: (G, G).
    Returns marginals (n, T, G) and pairwise marginals (n, T-1, G, G).
    """
    n, T, G = log_emit.shape
    log_a = np.empty((n, T, G))
    log_a[:, 0] = log_b0[None, :] + log_emit[:, 0]
    for t in range(1, T):
        log_a[:, t] = (
            logsumexp(log_a[:, t - 1][:, :, None] + log_bT[None, :, :], axis=1)
            + log_emit[:, t]
        )
    log_b = np.zeros((n, T, G))
    for t in range(T - 2, -1, -1):
        log_b[:, t] = logsumexp(
            log_bT[None, :, :] + (log_emit[:, t + 1] + log_b[:, t + 1])[:, None, :],
            axis=2,
        )
    log_post = log_a + log_b
    log_post -= logsumexp(log_post, axis=2, keepdims=True)
    marg = np.exp(log_post)
    pairs = np.empty((n, T - 1, G, G)) if T > 1 else np.zeros((n, 0, G, G))
    for t in range(T - 1):
        lp = (
            log_a[:, t][:, :, None]
            + log_bT[None, :, :]
            + (log_emit[:, t + 1] + log_b[:, t + 1])[:, None, :]
        )
        lp -= logsumexp(lp, axis=(1, 2), keepdims=True)
        pairs[:, t] = np.exp(lp)
    return marg, pairs


class _VBState:
    """Mutable coordinate-ascent state over the variational factors."""

    def __init__(self, net, G, p, hyper, rng, jitter):
        from .initializers import projection_initial_state

        self.net = net
        self.G = G
        self.p = p
        self.h = hyper
        self.directed = net.directed
        n, T = net.n, net.T
        self.n, self.T = n, T
        self.kappa = net.adjacency.astype(float) - 0.5
        mask = ~np.eye(n, dtype=bool)
        if not net.directed:
            mask = np.triu(np.ones((n, n), dtype=bool), k=1)
        self.mask3 = np.broadcast_to(mask, (T, n, n))

        state, u, r, tau, s, alpha, beta0, betaT = projection_initial_state(
            net, G, p, rng, jitter=jitter
        )
        self.x_mean = state.X.copy()
        base_var = max(float(np.mean(r) * 0.05) ** 2, 1e-4)
        self.x_cov = np.tile(base_var * np.eye(p), (T, n, 1, 1))
        labels = state.Z
        qz = np.full((n, T, G), 0.1 / max(G - 1, 1))
        for t in range(T):
            qz[np.arange(n), t, labels[t]] = 0.9
        qz /= qz.sum(axis=2, keepdims=True)
        self.q_z = qz
        self.q_pairs = np.einsum("nth,ntk->nthk", qz[:, :-1], qz[:, 1:]) if T > 1 \
            else np.zeros((n, 0, G, G))
        self.alpha_mean = float(alpha)
        self.alpha_var = 1.0
        self.s_mean = s.copy()
        self.s_m2 = s**2 + 0.05
        self.s_entropy = np.full(n, 0.5 * np.log(2 * np.pi * np.e * 0.05))
        self.r_mean = r.copy()
        self.r_m2 = r**2 + 0.01
        self.r_entropy = np.full(n, 0.5 * np.log(2 * np.pi * np.e * 0.01))
        self.tau_shape = np.full(n, hyper.a2 + 0.5 * T * p + 1.0)
        self.tau_rate = self.tau_shape / np.maximum(tau, 1e-8)
        self.u_dir = u.copy()
        self.u_conc = np.full(G, 10.0)
        self.beta0_conc = hyper.beta_pseudo + np.asarray(beta0) * n
        self.betaT_conc = hyper.beta_pseudo + betaT * n * max(T - 1, 1) / G
        self.c_omega = np.ones((T, n, n))
        self._refresh_xx()
        self.update_omega()

    # -- cached moments ------------------------------------------------------

    def _refresh_xx(self):
        self.x_xx = self.x_cov + np.einsum(
            "tip,tiq->tipq", self.x_mean, self.x_mean
        )

    def tau_mean(self):
        return self.tau_shape / self.tau_rate

    def tau_logmean(self):
        return digamma(self.tau_shape) - np.log(self.tau_rate)

    def u_mean(self):
        a = np.asarray(vmf_mean_resultant(self.u_conc, self.p))
        return a[:, None] * self.u_dir

    def alpha_m2(self):
        return self.alpha_var + self.alpha_mean**2

    def eta_moments(self):
        """E[eta] and E[eta^2] for every dyad-time (diagonal entries unused)."""
        inner = np.einsum("tip,tjp->tij", self.x_mean, self.x_mean)
        tr = np.einsum("tipq,tjqp->tij", self.x_xx, self.x_xx)
        if self.directed:
            e1 = self.alpha_mean + inner * self.s_mean[None, None, :]
            e2 = (
                self.alpha_m2()
                + 2.0 * self.alpha_mean * inner * self.s_mean[None, None, :]
                + tr * self.s_m2[None, None, :]
            )
        else:
            e1 = self.alpha_mean + inner
            e2 = self.alpha_m2() + 2.0 * self.alpha_mean * inner + tr
        return e1, np.maximum(e2, 1e-300)

    def omega_mean(self):
        return pg_tilted_mean(self.c_omega)

    # -- factor updates (each the exact CAVI optimum) ------------------------

    def update_omega(self):
        _, e2 = self.eta_moments()
        self.c_omega = np.sqrt(e2)

    def update_x(self):
        om = self.omega_mean()
        kap = self.kappa
        alpha = self.alpha_mean
        tau_m = self.tau_mean()
        ru = self.r_mean[:, None, None] * np.einsum(
            "ntg,gp->ntp", self.q_z, self.u_mean()
        )  # (n, T, p) expected emission centers scaled by E[r]
        eye = np.eye(self.p)
        for i in range(self.n):
            if self.directed:
                w = om[:, i, :] * self.s_m2[None, :] + om[:, :, i] * self.s_m2[i]
                lin_w = (kap[:, i, :] - alpha * om[:, i, :]) * self.s_mean[None, :] + (
                    kap[:, :, i] - alpha * om[:, :, i]
                ) * self.s_mean[i]
            else:
                # symmetric storage holds each unordered pair twice; row i
                # alone covers every pair containing i exactly once
                w = om[:, i, :].copy()
                lin_w = kap[:, i, :] - alpha * om[:, i, :]
            w[:, i] = 0.0
            lin_w[:, i] = 0.0
            Lam = tau_m[i] * eye[None] + np.einsum("tj,tjpq->tpq", w, self.x_xx)
            b = tau_m[i] * ru[i] + np.einsum("tj,tjp->tp", lin_w, self.x_mean)
            cov = np.linalg.inv(Lam)
            cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))
            mean = np.einsum("tpq,tq->tp", cov, b)
            self.x_mean[:, i, :] = mean
            self.x_cov[:, i, :, :] = cov
            self.x_xx[:, i, :, :] = cov + np.einsum("tp,tq->tpq", mean, mean)

    def _expected_log_emissions(self):
        """(n, T, G) array of E[log N(X_it | r_i u_g, tau_i^{-1} I)]."""
        tau_m = self.tau_mean()
        tau_lm = self.tau_logmean()
        ex2 = np.einsum("tipp->ti", self.x_xx)  # E||X_it||^2
        proj = np.einsum("tip,gp->tig", self.x_mean, self.u_mean())
        quad = (
            ex2[:, :, None]
            - 2.0 * self.r_mean[None, :, None] * proj
            + self.r_m2[None, :, None]
        )
        out = 0.5 * (
            self.p * (tau_lm[None, :, None] - _LOG_2PI)
            - tau_m[None, :, None] * quad
        )
        return np.transpose(out, (1, 0, 2))

    def _log_beta_expectations(self):
        lb0 = digamma(self.beta0_conc) - digamma(self.beta0_conc.sum())
        lbT = digamma(self.betaT_conc) - digamma(
            self.betaT_conc.sum(axis=1, keepdims=True)
        )
        return lb0, lbT

    def update_z(self):
        log_emit = self._expected_log_emissions()
        lb0, lbT = self._log_beta_expectations()
        self.q_z, self.q_pairs = chain_marginals_from_emissions(log_emit, lb0, lbT)

    def update_u(self):
        wt = (self.tau_mean() * self.r_mean)[None, :]
        for g in range(self.G):
            m = np.einsum("ti,tip->p", self.q_z[:, :, g].T * wt, self.x_mean)
            kappa = float(np.linalg.norm(m))
            self.u_conc[g] = kappa
            self.u_dir[g] = m / kappa if kappa > 0 else np.eye(self.p)[0]

    def update_r(self):
        proj = np.einsum("ntg,gp,tnp->n", self.q_z, self.u_mean(), self.x_mean)
        mean = (proj - 1.0 / self.h.c) / self.T
        var = 1.0 / (self.tau_mean() * self.T)
        self.r_mean, self.r_m2, self.r_entropy = _trunc_norm_moments(mean, var)

    def update_tau(self):
        ex2 = np.einsum("tipp->ti", self.x_xx)
        proj = np.einsum("ntg,gp->ntp", self.q_z, self.u_mean())
        cross = np.einsum("ntp,tnp->nt", proj, self.x_mean)
        # cross[i, t] = sum_g q_itg E[u_g]' E[X_it]
        sq = ex2.T - 2.0 * self.r_mean[:, None] * cross + self.r_m2[:, None]
        self.tau_shape = np.full(self.n, self.h.a2 + 0.5 * self.T * self.p + 1.0)
        self.tau_rate = (
            1.0 / self.h.b2 + self.r_mean / self.h.c + 0.5 * sq.sum(axis=1)
        )

    def update_s(self):
        if not self.directed:
            return
        om = self.omega_mean()
        inner = np.einsum("tip,tjp->tij", self.x_mean, self.x_mean)
        tr = np.einsum("tipq,tjqp->tij", self.x_xx, self.x_xx)
        diag = np.arange(self.n)
        inner[:, diag, diag] = 0.0
        tr[:, diag, diag] = 0.0
        om = om.copy()
        om[:, diag, diag] = 0.0
        prec = np.einsum("tij,tij->j", om, tr)
        lin = np.einsum(
            "tij,tij->j", self.kappa - self.alpha_mean * om, inner
        ) - 1.0
        prec = np.maximum(prec, 1e-12)
        self.s_mean, self.s_m2, self.s_entropy = _trunc_norm_moments(
            lin / prec, 1.0 / prec
        )

    def update_alpha(self):
        om = self.omega_mean()
        inner = np.einsum("tip,tjp->tij", self.x_mean, self.x_mean)
        m = inner * self.s_mean[None, None, :] if self.directed else inner
        msk = self.mask3
        prec = 1.0 / self.h.b3 + om[msk].sum()
        lin = (self.kappa[msk] - om[msk] * m[msk]).sum()
        self.alpha_mean = float(lin / prec)
        self.alpha_var = float(1.0 / prec)

    def update_beta(self):
        self.beta0_conc = self.h.beta_pseudo + self.q_z[:, 0, :].sum(axis=0)
        if self.T > 1:
            self.betaT_conc = self.h.beta_pseudo + self.q_pairs.sum(axis=(0, 1))
        else:
            self.betaT_conc = np.full((self.G, self.G), self.h.beta_pseudo)

    def sweep(self):
        self.update_omega()
        self.update_x()
        self.update_z()
        self.update_u()
        self.update_r()
        self.update_tau()
        self.update_s()
        self.update_alpha()
        self.update_beta()

    # -- evidence lower bound -------------------------------------------------

    def elbo(self):
        h = self.h
        n, T, G, p = self.n, self.T, self.G, self.p
        terms = []

        # data + omega block, collapsed against the tilted-PG entropy
        e1, e2 = self.eta_moments()
        om = self.omega_mean()
        c = self.c_omega
        block = (
            -np.log(2.0)
            + self.kappa * e1
            - 0.5 * om * (e2 - c**2)
            - _log_cosh(0.5 * c)
        )
        terms.append(block[self.mask3].sum())

        # E log p(X | Z, r, tau, u) and entropy of q(X)
        log_emit = self._expected_log_emissions()
        terms.append(float(np.sum(self.q_z * log_emit)))
        sign, logdet = np.linalg.slogdet(self.x_cov)
        terms.append(0.5 * float(np.sum(logdet)) + 0.5 * T * n * p * (1.0 + _LOG_2PI))

        # E log p(Z | beta) and entropy of the structured q(Z)
        lb0, lbT = self._log_beta_expectations()
        terms.append(float(np.sum(self.q_z[:, 0, :] * lb0[None, :])))
        if T > 1:
            terms.append(float(np.sum(self.q_pairs * lbT[None, None, :, :])))
        qz0 = self.q_z[:, 0, :]
        ent = -float(np.sum(qz0 * _safe_log(qz0)))
        if T > 1:
            cond = self.q_pairs * (
                _safe_log(self.q_pairs)
                - _safe_log(self.q_z[:, :-1, :, None])
            )
            ent -= float(np.sum(cond))
        terms.append(ent)

        # alpha
        terms.append(-0.5 * (np.log(2.0 * np.pi * h.b3) + self.alpha_m2() / h.b3))
        terms.append(0.5 * np.log(2.0 * np.pi * np.e * self.alpha_var))

        # s (directed only)
        if self.directed:
            terms.append(float(np.sum(-self.s_mean)))
            terms.append(float(np.sum(self.s_entropy)))

        # r | tau
        tau_m = self.tau_mean()
        tau_lm = self.tau_logmean()
        terms.append(float(np.sum(tau_lm - np.log(h.c) - tau_m * self.r_mean / h.c)))
        terms.append(float(np.sum(self.r_entropy)))

        # tau
        terms.append(float(np.sum(
            (h.a2 - 1.0) * tau_lm - tau_m / h.b2
            - h.a2 * np.log(h.b2) - gammaln(h.a2)
        )))
        gam_ent = (
            self.tau_shape - np.log(self.tau_rate) + gammaln(self.tau_shape)
            + (1.0 - self.tau_shape) * digamma(self.tau_shape)
        )
        terms.append(float(np.sum(gam_ent)))

        # u: uniform prior plus vMF entropy
        terms.append(G * (gammaln(0.5 * p) - np.log(2.0) - 0.5 * p * np.log(np.pi)))
        for g in range(G):
            kap = float(self.u_conc[g])
            a = float(np.asarray(vmf_mean_resultant(np.array(kap), p)))
            terms.append(-(vmf_log_normalizer(kap, p) + kap * a))

        # beta rows: prior cross-entropy plus Dirichlet entropy
        terms.append(_dirichlet_prior_and_entropy(self.beta0_conc, h.beta_pseudo))
        for row in range(G):
            terms.append(
                _dirichlet_prior_and_entropy(self.betaT_conc[row], h.beta_pseudo)
            )
        return float(np.sum(terms))


def _safe_log(x):
    return np.log(np.maximum(x, 1e-300))


def _dirichlet_prior_and_entropy(conc, pseudo):
    """E_q[log p(beta)] + H[q(beta)] for one Dirichlet factor."""
    K = conc.shape[0]
    total = conc.sum()
    elog = digamma(conc) - digamma(total)
    prior = gammaln(K * pseudo) - K * gammaln(pseudo) + (pseudo - 1.0) * elog.sum()
    entropy = (
        gammaln(conc).sum() - gammaln(total)
        - np.sum((conc - 1.0) * elog)
    )
    return float(prior + entropy)


def vb_fit_projection(net, G, hyper=None, config=None, rng=None, p=3):
    """Coordinate-ascent VB fit; restarts from jittered spectral embeddings
    keep the best final ELBO."""
    from .projection_model import ProjectionHyperparams

    if rng is None:
        raise ConfigError("an RngStream is required (restart initialization)")
    if net.kind != BINARY:
        raise UnsupportedLikelihoodError("VB projection needs binary edges")
    hyper = hyper or ProjectionHyperparams()
    config = config or VBConfig()
    hyper.validate()
    config.validate()

    best = None
    for restart in range(config.restarts):
        jitter = 0.0 if restart == 0 else config.jitter
        state = _VBState(net, G, p, hyper, rng.substream(restart), jitter)
        trace = [state.elbo()]
        converged = False
        for sweep in range(config.max_sweeps):
            state.sweep()
            trace.append(state.elbo())
            if abs(trace[-1] - trace[-2]) < config.tol:
                converged = True
                break
        if best is None or trace[-1] > best[1]:
            best = (state, trace[-1], trace, converged)
    state, _, trace, converged = best
    return VBPosterior(
        geometry="projection",
        G=G,
        directed=net.directed,
        x_mean=state.x_mean,
        x_cov=state.x_cov,
        q_z_marginals=state.q_z,
        q_z_pairs=state.q_pairs,
        alpha_mean=state.alpha_mean,
        alpha_var=state.alpha_var,
        s_mean=state.s_mean,
        s_m2=state.s_m2,
        r_mean=state.r_mean,
        r_m2=state.r_m2,
        tau_shape=state.tau_shape,
        tau_rate=state.tau_rate,
        u_dir=state.u_dir,
        u_conc=state.u_conc,
        beta0_conc=state.beta0_conc,
        betaT_conc=state.betaT_conc,
        elbo_trace=np.array(trace),
        converged=converged,
        meta={
            "engine": "vb",
            "p": p,
            "seed": rng.seed,
            "stream_id": rng.stream_id,
            "restarts": config.restarts,
            "directed": net.directed,
        },
    )

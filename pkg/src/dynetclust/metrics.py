"""Partition, prediction, and fit-quality metrics."""

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError, UndefinedMetricError
from .randkit import sigmoid

__all__ = [
    "auc",
    "corrected_rand",
    "variation_of_information",
    "modularity",
    "coassignment_probs",
    "one_step_ahead_probs",
    "insample_auc",
]


def auc(scores, labels):
    """Mann-Whitney AUC: P(random positive outscores a random negative),
    ties counted one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise InvalidInputError("scores and labels must align")
    pos = labels == 1
    neg = labels == 0
    n1, n0 = int(pos.sum()), int(neg.sum())
    if n1 == 0 or n0 == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def _flatten_pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InvalidInputError("partitions must have the same shape")
    return a.ravel(), b.ravel()


def _contingency(a, b):
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def corrected_rand(a, b):
    """Corrected (adjusted-for-chance) Rand index between two partitions,
    flattened over all actor-time cells."""
    a, b = _flatten_pair(a, b)
    table = _contingency(a, b)
    n = a.size
    comb = lambda x: x * (x - 1) / 2.0
    sum_ij = comb(table).sum()
    sum_a = comb(table.sum(axis=1)).sum()
    sum_b = comb(table.sum(axis=0)).sum()
    total = comb(n)
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0 if np.array_equal(a, b) else 0.0
    return float((sum_ij - expected) / (max_index - expected))


def variation_of_information(a, b):
    """VI = H(a|b) + H(b|a) in nats; zero iff the partitions coincide."""
    a, b = _flatten_pair(a, b)
    table = _contingency(a, b).astype(float)
    n = a.size
    pij = table / n
    pa = pij.sum(axis=1)
    pb = pij.sum(axis=0)
    nz = pij > 0
    h_joint = -np.sum(pij[nz] * np.log(pij[nz]))
    h_a = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
    h_b = -np.sum(pb[pb > 0] * np.log(pb[pb > 0]))
    return float(max(2.0 * h_joint - h_a - h_b, 0.0))


def modularity(Y_t, z_t):
    """Partition quality of one time slice.

    The adjacency is symmetrized as Y* = (Y + Y')/2, the degree k_i is the
    average of in- and out-degree, and S is the resulting edge mass
    (sum of Y* over unordered pairs):

        (1/2S) * sum_{i != j, same cluster} (Y*_ij - k_i k_j / 2S).
    """
    Y = np.asarray(Y_t, dtype=float)
    z = np.asarray(z_t)
    if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
        raise InvalidInputError("adjacency slice must be square")
    if z.shape != (Y.shape[0],):
        raise InvalidInputError("partition must label every actor")
    if not np.isin(Y, (0.0, 1.0)).all():
        raise InvalidInputError("modularity expects a binary slice")
    Ystar = 0.5 * (Y + Y.T)
    np.fill_diagonal(Ystar, 0.0)
    S = Ystar.sum() / 2.0
    if S <= 0:
        raise UndefinedMetricError("modularity is undefined on an empty graph")
    k = Ystar.sum(axis=1)
    same = z[:, None] == z[None, :]
    np.fill_diagonal(same, False)
    null = np.outer(k, k) / (2.0 * S)
    return float(((Ystar - null) * same).sum() / (2.0 * S))


def coassignment_probs(samples, t):
    """Fraction of posterior draws in which actor pairs share a cluster at t."""
    Z = samples.Z
    if Z.shape[0] == 0:
        raise InvalidInputError("no draws stored")
    zt = Z[:, t, :]
    same = zt[:, :, None] == zt[:, None, :]
    M = same.mean(axis=0)
    np.fill_diagonal(M, 1.0)
    return M


# ---------------------------------------------------------------------------
# Model-based predictive summaries (MCMC draws or VB factors)
# ---------------------------------------------------------------------------

def _is_vb(fit):
    from .projection_vb import VBPosterior

    return isinstance(fit, VBPosterior)


def fitted_edge_probs(fit, net):
    """In-sample edge probability array (T, n, n); MAP plug-in for chains,
    posterior-mean plug-in for VB."""
    from .distance_model import edge_prob_matrix_distance, map_extract
    from .errors import UnsupportedLikelihoodError
    from .network import BINARY
    from .projection_model import edge_prob_matrix_projection

    if net.kind != BINARY:
        raise UnsupportedLikelihoodError("edge probabilities need binary payloads")
    T = net.T
    if _is_vb(fit):
        return np.stack([fit.predictive_matrix(t) for t in range(T)])
    state, params = map_extract(fit)
    if fit.geometry == "projection":
        return np.stack([
            edge_prob_matrix_projection(state.X[t], params["alpha"],
                                        params["s"], net.directed)
            for t in range(T)
        ])
    lik = _lik_from_params(fit, params)
    return np.stack([
        edge_prob_matrix_distance(state.X[t], lik) for t in range(T)
    ])


def _lik_from_params(fit, params):
    from .distance_model import DegreeCorrectedLik, LogisticLik

    if "alpha" in params:
        return LogisticLik(float(params["alpha"]))
    return DegreeCorrectedLik(float(params["beta_in"]), float(params["beta_out"]),
                              params["s"])


def insample_auc(fit, net):
    """AUC of fitted edge probabilities over all observed dyad-times."""
    P = fitted_edge_probs(fit, net)
    n = net.n
    if net.directed:
        mask = ~np.eye(n, dtype=bool)
    else:
        mask = np.triu(np.ones((n, n), dtype=bool), k=1)
    m3 = np.broadcast_to(mask, P.shape)
    return auc(P[m3], net.adjacency[m3])


def one_step_ahead_probs(fit, net, rng, n_draws=200):
    """Monte Carlo T+1 edge probabilities.

    Each retained draw propagates every actor one step: the next label comes
    from the fitted transition row, the next position from the corresponding
    emission, and the dyad probabilities are averaged over draws.
    """
    from .projection_model import edge_prob_matrix_projection

    gen = rng.gen
    n = net.n
    if _is_vb(fit):
        return _one_step_vb(fit, net, gen, n_draws)
    S = fit.n_draws
    take = np.linspace(0, S - 1, min(n_draws, S)).astype(int)
    acc = np.zeros((n, n))
    for k in take:
        state = fit.state_at(k)
        params = fit.params_at(k)
        zT = state.Z[-1]
        betaT = params["betaT"]
        rows = np.cumsum(betaT[zT], axis=1)
        z_next = (gen.random(n)[:, None] * rows[:, -1:] < rows).argmax(axis=1)
        if fit.geometry == "projection":
            r, tau, u = params["r"], params["tau"], params["u"]
            X_next = r[:, None] * u[z_next] + (
                gen.standard_normal((n, state.p)) / np.sqrt(tau)[:, None]
            )
            acc += edge_prob_matrix_projection(X_next, params["alpha"],
                                               params["s"], net.directed)
        else:
            lam, mu, sigma = params["lam"], params["mu"], params["sigma"]
            X_next = np.empty((n, state.p))
            for g in np.unique(z_next):
                m = z_next == g
                L = np.linalg.cholesky(sigma[g])
                mean = lam * mu[g] + (1.0 - lam) * state.X[-1][m]
                X_next[m] = mean + gen.standard_normal((int(m.sum()), state.p)) @ L.T
            from .distance_model import edge_prob_matrix_distance

            lik = _lik_from_params(fit, params)
            acc += edge_prob_matrix_distance(X_next, lik)
    P = acc / take.size
    np.fill_diagonal(P, 0.0)
    return P


def _one_step_vb(fit, net, gen, n_draws):
    from .projection_model import edge_prob_matrix_projection

    n = net.n
    q_last = fit.q_z_marginals[:, -1, :]
    betaT = fit.expected_betaT()
    rows_prob = q_last @ betaT
    rows = np.cumsum(rows_prob, axis=1)
    r = fit.expected_r()
    tau = fit.expected_tau()
    u = fit.expected_u_directions()
    s = fit.expected_s()
    alpha = fit.expected_alpha()
    acc = np.zeros((n, n))
    p = u.shape[1]
    for _ in range(n_draws):
        z_next = (gen.random(n)[:, None] * rows[:, -1:] < rows).argmax(axis=1)
        X_next = r[:, None] * u[z_next] + (
            gen.standard_normal((n, p)) / np.sqrt(tau)[:, None]
        )
        acc += edge_prob_matrix_projection(X_next, alpha, s, net.directed)
    P = acc / n_draws
    np.fill_diagonal(P, 0.0)
    return P

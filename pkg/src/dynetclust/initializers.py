"""Deterministic, seed-driven starting states for the samplers and VB."""

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.sparse.csgraph import shortest_path
from scipy.special import logit

from .network import RANK, LatentState


def _classical_mds(delta, p):
    """Classical MDS of a dissimilarity matrix into p dimensions."""
    n = delta.shape[0]
    J = np.eye(n) - np.ones((n, n)) / n
    B = -0.5 * J @ (delta**2) @ J
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][:p]
    lam = np.clip(vals[order], 0.0, None)
    X = vecs[:, order] * np.sqrt(lam)[None, :]
    if X.shape[1] < p:
        X = np.hstack([X, np.zeros((n, p - X.shape[1]))])
    return X


def _dissimilarity(net):
    """Time-averaged dissimilarities: shortest-path hops for binary payloads,
    symmetrized ranks for rank payloads."""
    T, n, _ = net.adjacency.shape
    acc = np.zeros((n, n))
    for t in range(T):
        A = net.adjacency[t]
        if net.kind == RANK:
            acc += 0.5 * (A + A.T)
            continue
        support = ((A + A.T) > 0).astype(float)
        sp = shortest_path(support, method="D", unweighted=True)
        finite = sp[np.isfinite(sp)]
        cap = (finite.max() if finite.size else 1.0) + 1.0
        sp[~np.isfinite(sp)] = cap
        acc += sp
    acc /= T
    np.fill_diagonal(acc, 0.0)
    return 0.5 * (acc + acc.T)


def _kmeans_labels(X, G, gen):
    if G == 1:
        return np.zeros(X.shape[0], dtype=np.int64)
    for attempt in range(5):
        _, labels = kmeans2(X, G, minit="++", rng=gen)
        if len(np.unique(labels)) == G:
            return labels.astype(np.int64)
    return labels.astype(np.int64)


def distance_initial_state(net, G, p, likelihood_kind, hyper, rng):
    """MDS positions (jittered per time), k-means labels, moment-matched
    parameters, and a starting MH step for the distance sampler."""
    from .distance_model import (
        DegreeCorrectedLik,
        DistanceParams,
        LogisticLik,
        PlackettLuceLik,
    )

    gen = rng.gen
    n, T = net.n, net.T
    Xbar = _classical_mds(_dissimilarity(net), p)
    dbar = _mean_offdiag_distance(Xbar)
    if dbar <= 0:
        Xbar = gen.normal(0.0, 1.0, size=(n, p))
        dbar = _mean_offdiag_distance(Xbar)

    if likelihood_kind == "degree_corrected":
        dens = min(max(net.density(), 1e-3), 1 - 1e-3)
        target = max((1.0 - logit(dens)) / n, 1e-6)
        Xbar = Xbar * (target / dbar)
        lik = DegreeCorrectedLik(0.5, 0.5, np.full(n, 1.0 / n))
    elif likelihood_kind == "logistic":
        dens = min(max(net.density(), 1e-3), 1 - 1e-3)
        Xbar = Xbar / dbar  # unit mean distance
        lik = LogisticLik(float(logit(dens)) + 1.0)
    else:
        Xbar = Xbar / dbar
        lik = PlackettLuceLik(np.full(n, 1.0 / n))

    scale = _mean_offdiag_distance(Xbar)
    X = np.stack([Xbar + gen.normal(0.0, 0.05 * scale, size=(n, p)) for _ in range(T)])
    labels = _kmeans_labels(X[0], G, gen)
    Z = np.tile(labels, (T, 1))
    state = LatentState(X, Z, G)

    mu = np.empty((G, p))
    sigma = np.empty((G, p, p))
    for g in range(G):
        m = labels == g
        mu[g] = X[0][m].mean(axis=0) if m.any() else Xbar.mean(axis=0)
        if m.sum() > p:
            cov = np.cov(X[0][m].T).reshape(p, p)
        else:
            cov = np.zeros((p, p))
        sigma[g] = cov + (0.05 * scale) ** 2 * np.eye(p)
    tau2 = max(float(np.mean(np.sum(mu**2, axis=1)) / p), 1e-8)
    gamma = np.maximum(np.mean(sigma, axis=0).diagonal() * (2 * p + 2), 1e-10)
    beta0 = (np.bincount(labels, minlength=G) + 1.0) / (n + G)
    betaT = np.full((G, G), 0.4 / max(G - 1, 1))
    np.fill_diagonal(betaT, 0.6 if G > 1 else 1.0)
    params = DistanceParams(hyper.nu_lambda, mu, sigma, tau2, gamma,
                            beta0, betaT, lik)
    step = 0.3 * np.sqrt(np.mean([np.trace(sigma[g]) / p for g in range(G)]))
    return state, params, float(step)


def _mean_offdiag_distance(X):
    diff = X[:, None, :] - X[None, :, :]
    D = np.sqrt((diff**2).sum(-1))
    n = X.shape[0]
    return float(D.sum() / (n * (n - 1)))


def projection_initial_state(net, G, p, rng, jitter=0.0):
    """Spectral embedding of the time-averaged adjacency, labels from k-means
    on the unit directions, and moment-matched parameters."""
    gen = rng.gen
    n, T = net.n, net.T
    Abar = net.adjacency.mean(axis=0)
    Abar = 0.5 * (Abar + Abar.T)
    vals, vecs = np.linalg.eigh(Abar)
    order = np.argsort(np.abs(vals))[::-1][:p]
    Xbar = vecs[:, order] * np.sqrt(np.abs(vals[order]))[None, :]
    # flip so the dominant direction has positive mean (sign is arbitrary)
    for j in range(Xbar.shape[1]):
        if Xbar[:, j].mean() < 0:
            Xbar[:, j] = -Xbar[:, j]
    norms = np.linalg.norm(Xbar, axis=1)
    floor = max(norms.max() * 1e-3, 1e-9)
    norms = np.maximum(norms, floor)
    # target radius ~2.3 keeps inner products on the logit scale
    r0 = 2.3
    Xbar = Xbar * (r0 / norms.mean())
    if jitter > 0:
        Xbar = Xbar + gen.normal(0.0, jitter * r0, size=Xbar.shape)
    X = np.stack([Xbar + gen.normal(0.0, 0.05 * r0, size=(n, p)) for _ in range(T)])
    dirs = Xbar / np.maximum(np.linalg.norm(Xbar, axis=1, keepdims=True), 1e-12)
    labels = _kmeans_labels(dirs, G, gen)
    Z = np.tile(labels, (T, 1))
    state = LatentState(X, Z, G)

    u = np.empty((G, p))
    for g in range(G):
        m = labels == g
        v = dirs[m].sum(axis=0) if m.any() else gen.standard_normal(p)
        nv = np.linalg.norm(v)
        u[g] = v / nv if nv > 0 else np.eye(p)[0]
    r = np.maximum(np.linalg.norm(Xbar, axis=1), 0.1)
    tau = np.full(n, max(p / (0.05 * r0) ** 2 / 100.0, 1.0))
    beta0 = (np.bincount(labels, minlength=G) + 1.0) / (n + G)
    betaT = np.full((G, G), 0.4 / max(G - 1, 1))
    np.fill_diagonal(betaT, 0.6 if G > 1 else 1.0)
    dens = min(max(net.density(), 1e-3), 1 - 1e-3)
    alpha = float(logit(dens)) - float(np.mean(np.einsum("ip,jp->ij", Xbar, Xbar)))
    s = np.ones(n)
    return state, u, r, tau, s, alpha, beta0, betaT

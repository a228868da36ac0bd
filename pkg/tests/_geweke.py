"""Joint-distribution (Geweke-style) sampler correctness protocol.

The marginal-conditional simulator draws (parameters, latents) from the
prior; the successive-conditional simulator alternates one full Gibbs scan
with regeneration of the data from the likelihood.  If every transition
kernel targets its full conditional, both simulators share the prior as
their marginal over (parameters, latents), so tracked moments must agree.
"""

import numpy as np

from dynetclust.distance_model import ChainConfig, DistanceHyperparams, DistanceSampler
from dynetclust.network import DynamicNetwork
from dynetclust.projection_model import GibbsConfig, ProjectionHyperparams, ProjectionSampler
from dynetclust.randkit import RngStream


def _batch_se(values, n_batches=20):
    values = np.asarray(values)
    usable = (values.shape[0] // n_batches) * n_batches
    batches = values[:usable].reshape(n_batches, -1, values.shape[1]).mean(axis=1)
    return batches.mean(axis=0), batches.std(axis=0, ddof=1) / np.sqrt(n_batches)


def _iid_se(values):
    values = np.asarray(values)
    return values.mean(axis=0), values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])


def _zscores(mc, sc):
    m1, s1 = _iid_se(mc)
    m2, s2 = _batch_se(sc)
    return (m1 - m2) / np.sqrt(s1**2 + s2**2 + 1e-300)


def _placeholder_net(n, T, gen):
    A = (gen.random((T, n, n)) < 0.5).astype(int)
    for t in range(T):
        np.fill_diagonal(A[t], 0)
    return DynamicNetwork(A, directed=True, kind="binary")


def _distance_moments(sampler):
    # the inverse-Wishart shape prior has df = p + 1, so X and sigma carry
    # heavy tails; positions and shapes enter through bounded or log-scale
    # transforms to keep every tracked moment's variance finite
    pa = sampler.params
    X = sampler.state.X
    sign, logdet = np.linalg.slogdet(pa.sigma[0])
    return np.array([
        pa.lam, pa.lam**2,
        pa.lik.alpha, pa.lik.alpha**2,
        pa.mu[0, 0], pa.mu[0, 0] ** 2,
        pa.tau2, pa.gamma[0],
        np.tanh(X[0, 0, 0]), float(np.mean(np.log1p(X**2))),
        logdet,
        pa.beta0[0], pa.betaT[0, 0],
    ])


DISTANCE_MOMENT_NAMES = [
    "lam", "lam^2", "alpha", "alpha^2", "mu00", "mu00^2", "tau2", "gamma0",
    "tanh_X000", "mean_log1p_X^2", "logdet_sigma0", "beta0_0", "betaT_00",
]


def geweke_distance(n=4, T=3, G=2, p=2, n_mc=50000, n_sc=12000, thin=10,
                    warmup=2000, seed=0):
    # The shape/scale hierarchy mixes over hundreds of scans, so the chain
    # side is thinned and aggregated in wide batches to keep the standard
    # errors honest.
    hyper = DistanceHyperparams(alpha_prior_var=4.0)
    config = ChainConfig(iterations=2, burn_in=1, step_x=0.4)

    rng_mc = RngStream(seed, 1)
    sampler = DistanceSampler(_placeholder_net(n, T, rng_mc.gen), G, p, hyper,
                              "logistic", config, rng_mc)
    mc = np.empty((n_mc, len(DISTANCE_MOMENT_NAMES)))
    for k in range(n_mc):
        sampler.init_from_prior()
        mc[k] = _distance_moments(sampler)

    rng_sc = RngStream(seed, 2)
    sampler = DistanceSampler(_placeholder_net(n, T, rng_sc.gen), G, p, hyper,
                              "logistic", config, rng_sc)
    sampler.init_from_prior()
    sampler.regenerate_data()
    sc = np.empty((n_sc, len(DISTANCE_MOMENT_NAMES)))
    kept = 0
    total = warmup + n_sc * thin
    for k in range(total):
        sampler.scan()
        sampler.regenerate_data()
        if k >= warmup and (k - warmup) % thin == 0 and kept < n_sc:
            sc[kept] = _distance_moments(sampler)
            kept += 1
    return _zscores(mc, sc)


def _projection_moments(sampler):
    pa = sampler.params
    X = sampler.state.X
    return np.array([
        pa.alpha, pa.alpha**2,
        pa.s[0], pa.s[0] ** 2,
        pa.r[0], pa.r[0] ** 2,
        pa.tau[0], pa.tau[0] ** 2,
        X[0, 0, 0], float(np.mean(X**2)),
        pa.u[0, 0] ** 2,
        pa.beta0[0], pa.betaT[0, 0],
    ])


PROJECTION_MOMENT_NAMES = [
    "alpha", "alpha^2", "s0", "s0^2", "r0", "r0^2", "tau0", "tau0^2",
    "X000", "mean_X^2", "u00^2", "beta0_0", "betaT_00",
]


def geweke_projection(n=4, T=3, G=2, p=3, n_mc=20000, n_sc=20000, warmup=500,
                      seed=0):
    hyper = ProjectionHyperparams(b3=4.0)
    config = GibbsConfig(iterations=2, burn_in=1)

    rng_mc = RngStream(seed, 3)
    sampler = ProjectionSampler(_placeholder_net(n, T, rng_mc.gen), G, p, hyper,
                                config, rng_mc)
    mc = np.empty((n_mc, len(PROJECTION_MOMENT_NAMES)))
    for k in range(n_mc):
        sampler.init_from_prior()
        mc[k] = _projection_moments(sampler)

    rng_sc = RngStream(seed, 4)
    sampler = ProjectionSampler(_placeholder_net(n, T, rng_sc.gen), G, p, hyper,
                                config, rng_sc)
    sampler.init_from_prior()
    sampler.regenerate_data()
    sc = np.empty((n_sc, len(PROJECTION_MOMENT_NAMES)))
    for k in range(warmup + n_sc):
        sampler.scan()
        sampler.regenerate_data()
        if k >= warmup:
            sc[k - warmup] = _projection_moments(sampler)
    return _zscores(mc, sc)

import itertools

import numpy as np
import pytest
import scipy.stats

from _oracles import (
    all_orderings_prob_sum,
    joint_xz_distance_bruteforce,
    plackett_luce_ordering_prob,
)
from dynetclust.distance_model import (
    ChainConfig,
    DegreeCorrectedLik,
    DistanceHyperparams,
    DistanceParams,
    DistanceSampler,
    LogisticLik,
    PlackettLuceLik,
    draw_z_time,
    edge_prob_degree_corrected,
    edge_prob_logistic,
    joint_logdensity_xz,
    loglik_distance,
    map_extract,
    mh_within_gibbs_fit,
    rank_loglik_plackett_luce,
    sample_adjacency_distance,
    update_beta,
    update_mu,
    z_site_log_weights,
)
from dynetclust.errors import ConfigError, InvalidInputError
from dynetclust.network import DynamicNetwork, LatentState, PosteriorSamples
from dynetclust.randkit import RngStream, sigmoid


def random_params(G, p, gen, lik=None):
    mu = gen.normal(size=(G, p))
    sigma = np.stack([
        np.diag(gen.uniform(0.5, 1.5, size=p)) + 0.1 * np.ones((p, p))
        for _ in range(G)
    ])
    beta0 = gen.dirichlet(np.ones(G))
    betaT = gen.dirichlet(np.ones(G), size=G)
    lam = gen.uniform(0.2, 0.9)
    return DistanceParams(lam, mu, sigma, 1.0, np.ones(p), beta0, betaT, lik)


class TestEdgeProbs:
    def test_logistic_values(self):
        assert edge_prob_logistic(0.0, 0.0) == pytest.approx(0.5)
        assert edge_prob_logistic(1.0, 1.0) == pytest.approx(0.5)
        assert edge_prob_logistic(2.0, 1.0) == pytest.approx(0.7310585786300049, abs=1e-12)

    def test_logistic_decreasing_in_distance(self):
        d = np.linspace(0, 5, 50)
        probs = edge_prob_logistic(1.0, d)
        assert np.all(np.diff(probs) < 0)

    def test_degree_corrected_values(self):
        assert edge_prob_degree_corrected(1.2, 0.7, 0.3, 0.3, 0.3) == pytest.approx(0.5)
        assert edge_prob_degree_corrected(1.0, 0.5, 0.1, 0.2, 0.0) == pytest.approx(
            sigmoid(1.5)
        )
        assert edge_prob_degree_corrected(0.5, 0.5, 0.01, 0.02, 0.01) == pytest.approx(
            0.5621765008857981, abs=1e-9
        )


class TestPlackettLuce:
    def test_uniform_choice(self):
        # three actors, equal scales and equal distances: both orderings of
        # the two alters have probability 1/2
        s = np.full(3, 1 / 3)
        d = np.array([0.0, 1.0, 1.0])
        for ordering in ([1, 2], [2, 1]):
            ll = rank_loglik_plackett_luce(ordering, s, d)
            assert ll == pytest.approx(np.log(0.5), abs=1e-12)

    def test_probabilities_sum_to_one(self):
        gen = np.random.default_rng(2)
        s = gen.dirichlet(np.ones(4))
        d = np.abs(gen.normal(size=4))
        d[0] = 0.0
        alters = [1, 2, 3]
        total = 0.0
        for ordering in itertools.permutations(alters):
            total += np.exp(rank_loglik_plackett_luce(list(ordering), s, d))
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_matches_sequential_choice_oracle(self):
        gen = np.random.default_rng(3)
        s = gen.dirichlet(np.ones(5))
        d = np.abs(gen.normal(size=5))
        ordering = [3, 1, 4, 2]
        ll = rank_loglik_plackett_luce(ordering, s, d)
        assert ll == pytest.approx(
            np.log(plackett_luce_ordering_prob(ordering, s, d)), abs=1e-10
        )

    def test_luce_choice_axiom(self):
        # the odds of ranking actor 1 first versus actor 2 first do not
        # change when actor 3 is removed from the set to be ranked
        gen = np.random.default_rng(4)
        s = gen.dirichlet(np.ones(4))
        d = np.abs(gen.normal(size=4))

        def first_prob(alters, j):
            return sum(
                plackett_luce_ordering_prob(list(o), s, d)
                for o in itertools.permutations(alters)
                if o[0] == j
            )

        full = first_prob([1, 2, 3], 1) / first_prob([1, 2, 3], 2)
        reduced = first_prob([1, 2], 1) / first_prob([1, 2], 2)
        assert full == pytest.approx(reduced, rel=1e-9)

    def test_rejects_bad_ordering(self):
        s = np.full(4, 0.25)
        d = np.zeros(4)
        with pytest.raises(InvalidInputError):
            rank_loglik_plackett_luce([1, 1, 2], s, d)


class TestJointLogdensity:
    def test_single_time_single_group(self):
        gen = np.random.default_rng(5)
        X = gen.normal(size=(1, 3, 2))
        Z = np.zeros((1, 3), dtype=int)
        params = random_params(1, 2, gen)
        got = joint_logdensity_xz(LatentState(X, Z, 1), params)
        want = sum(
            np.log(params.beta0[0])
            + scipy.stats.multivariate_normal(params.mu[0], params.sigma[0]).logpdf(X[0, i])
            for i in range(3)
        )
        assert got == pytest.approx(want, abs=1e-10)

    def test_full_blending_ignores_previous_position(self):
        gen = np.random.default_rng(6)
        params = random_params(2, 2, gen)
        params.lam = 1.0
        Z = np.array([[0], [1]])
        X1 = np.stack([[[0.3, -0.2]], [[0.5, 0.1]]])
        X2 = X1.copy()
        X2[0, 0] = [5.0, -7.0]  # move the previous position
        j1 = joint_logdensity_xz(LatentState(X1, Z, 2), params)
        j2 = joint_logdensity_xz(LatentState(X2, Z, 2), params)
        # only the first emission term changes
        mvn = scipy.stats.multivariate_normal(params.mu[0], params.sigma[0])
        assert j2 - j1 == pytest.approx(
            mvn.logpdf(X2[0, 0]) - mvn.logpdf(X1[0, 0]), abs=1e-10
        )

    def test_explicit_two_step_expansion(self):
        lam = 0.7
        mu = np.array([[1.0, 0.0], [-1.0, 2.0]])
        sigma = np.stack([np.diag([0.5, 0.8]), np.array([[1.0, 0.3], [0.3, 2.0]])])
        beta0 = np.array([0.4, 0.6])
        betaT = np.array([[0.9, 0.1], [0.2, 0.8]])
        params = DistanceParams(lam, mu, sigma, 1.0, np.ones(2), beta0, betaT, None)
        X = np.array([[[0.2, 0.1]], [[0.5, -0.3]]])
        Z = np.array([[1], [0]])
        got = joint_logdensity_xz(LatentState(X, Z, 2), params)
        want = (
            np.log(0.6)
            + scipy.stats.multivariate_normal(mu[1], sigma[1]).logpdf(X[0, 0])
            + np.log(betaT[1, 0])
            + scipy.stats.multivariate_normal(
                lam * mu[0] + (1 - lam) * X[0, 0], sigma[0]
            ).logpdf(X[1, 0])
        )
        assert got == pytest.approx(want, abs=1e-12)

    def test_matches_bruteforce_on_small_shapes(self):
        gen = np.random.default_rng(7)
        for n, T, G in itertools.product((1, 2), (1, 2, 3), (1, 2)):
            params = random_params(G, 2, gen)
            X = gen.normal(size=(T, n, 2))
            Z = gen.integers(0, G, size=(T, n))
            got = joint_logdensity_xz(LatentState(X, Z, G), params)
            want = joint_xz_distance_bruteforce(
                X, Z, params.lam, params.mu, params.sigma, params.beta0, params.betaT
            )
            assert got == pytest.approx(want, abs=1e-10)

    def test_zero_transition_gives_minus_inf(self):
        gen = np.random.default_rng(8)
        params = random_params(2, 2, gen)
        params.betaT = np.array([[1.0, 0.0], [0.5, 0.5]])
        X = gen.normal(size=(2, 1, 2))
        Z = np.array([[0], [1]])  # forbidden transition 0 -> 1
        assert joint_logdensity_xz(LatentState(X, Z, 2), params) == -np.inf


class TestConjugateBlocks:
    def test_beta_full_conditional_moments(self):
        # fixed labels: transition rows are Dirichlet(1 + counts)
        gen = np.random.default_rng(9)
        Z = gen.integers(0, 3, size=(6, 40))
        counts0 = np.bincount(Z[0], minlength=3)
        trans = np.zeros((3, 3))
        for t in range(1, 6):
            np.add.at(trans, (Z[t - 1], Z[t]), 1.0)
        draws0, drawsT = [], []
        for _ in range(4000):
            b0, bT = update_beta(Z, 3, 1.0, gen)
            draws0.append(b0)
            drawsT.append(bT)
        d0 = np.mean(draws0, axis=0)
        dT = np.mean(drawsT, axis=0)
        want0 = (1.0 + counts0) / (1.0 + counts0).sum()
        assert np.allclose(d0, want0, atol=0.01)
        for h in range(3):
            wantT = (1.0 + trans[h]) / (1.0 + trans[h]).sum()
            assert np.allclose(dT[h], wantT, atol=0.02)

    def test_mu_normal_normal_formula(self):
        # lam = 1 and known shapes: posterior mean is the precision-weighted
        # normal-normal combination
        gen = np.random.default_rng(10)
        T, n, p, G = 4, 12, 2, 1
        X = gen.normal(size=(T, n, p))
        Z = np.zeros((T, n), dtype=int)
        sigma = np.stack([np.diag([0.7, 1.3])])
        tau2 = 2.5
        draws = np.array([
            update_mu(X, Z, 1.0, sigma, tau2, G, gen)[0] for _ in range(6000)
        ])
        prec = np.eye(p) / tau2 + T * n * np.linalg.inv(sigma[0])
        rhs = np.linalg.inv(sigma[0]) @ X.sum(axis=(0, 1))
        want = np.linalg.solve(prec, rhs)
        se = np.sqrt(np.diag(np.linalg.inv(prec)) / 6000)
        assert np.all(np.abs(draws.mean(axis=0) - want) < 4 * se)

    def test_z_full_conditional_frequencies(self):
        # frozen state: empirical single-site frequencies match the
        # normalized (transition-in) x (emission) x (transition-out) product
        gen = np.random.default_rng(11)
        G, p, n, T = 3, 2, 2, 3
        params = random_params(G, p, np.random.default_rng(0))
        X = gen.normal(size=(T, n, p))
        Z = gen.integers(0, G, size=(T, n))
        t = 1
        m = 10**5
        counts = np.zeros((G, n))
        for _ in range(m):
            z_new = draw_z_time(X, Z.copy(), t, params, gen)
            counts[z_new, np.arange(n)] += 1
        # independent enumeration of the product
        for i in range(n):
            w = np.empty(G)
            for k in range(G):
                mean = params.lam * params.mu[k] + (1 - params.lam) * X[t - 1, i]
                w[k] = (
                    params.betaT[Z[t - 1, i], k]
                    * scipy.stats.multivariate_normal(mean, params.sigma[k]).pdf(X[t, i])
                    * params.betaT[k, Z[t + 1, i]]
                )
            w /= w.sum()
            freq = counts[:, i] / m
            se = np.sqrt(w * (1 - w) / m)
            assert np.all(np.abs(freq - w) < 3 * se + 1e-4)


class TestMhAcceptance:
    def _forced_sampler(self, likelihood, net, proposal):
        rng = RngStream(3)
        sampler = DistanceSampler(net, 1, 2, DistanceHyperparams(), likelihood,
                                  ChainConfig(iterations=2, burn_in=1), rng)
        sampler.init_from_data()
        sampler._refresh_shape_factors()

        class Forced:
            def __init__(self, gen):
                self._gen = gen

            def standard_normal(self, shape):
                return proposal

            def random(self, size=None):
                return np.full(size, 1e-300)

            def __getattr__(self, name):
                return getattr(self._gen, name)

        sampler.gen = Forced(rng.gen)
        return sampler

    @pytest.mark.parametrize("likelihood", ["logistic", "degree_corrected"])
    def test_delta_equals_posterior_ratio(self, likelihood):
        # symmetric proposals: the acceptance log ratio must equal the full
        # log-posterior difference of the proposed single-site move
        gen = np.random.default_rng(12)
        A = (gen.random((3, 5, 5)) < 0.4).astype(int)
        net = DynamicNetwork(A, directed=True, kind="binary")
        prop = np.array([[0.31, -0.17]])
        for t_parity in (0, 1):
            sampler = self._forced_sampler(likelihood, net, prop)
            # restrict to a single site: actor 2, one parity time
            T = net.T
            ts = np.arange(t_parity, T, 2)
            lp0 = sampler.log_posterior()
            X_before = sampler.state.X.copy()
            sampler._update_x_actor(2, t_parity)
            lp1 = sampler.log_posterior()
            # every site accepted (forced); sum of per-site deltas telescopes
            assert np.all(sampler.state.X[ts, 2] != X_before[ts, 2])
            assert lp1 - lp0 == pytest.approx(sampler._last_x_delta.sum(), abs=1e-8)

    def test_hand_computed_ratio_single_dyad(self):
        # two actors, one time slice, logistic likelihood: the acceptance
        # ratio reduces to hand arithmetic
        A = np.array([[[0, 1], [0, 0]]])
        net = DynamicNetwork(A, directed=True, kind="binary")
        prop = np.array([[0.5, -0.25]])
        sampler = self._forced_sampler("logistic", net, prop)
        sampler.step_x = 1.0
        lik = sampler.params.lik
        params = sampler.params
        i = 1
        x_old = sampler.state.X[0, i].copy()
        x_new = x_old + prop[0]
        other = sampler.state.X[0, 0]
        d_old = np.linalg.norm(x_old - other)
        d_new = np.linalg.norm(x_new - other)
        g = sampler.state.Z[0, i]

        def dyad_terms(d):
            eta = lik.alpha - d
            return (1 * eta - np.log1p(np.exp(eta))) + (0 - np.log1p(np.exp(eta)))

        mvn = scipy.stats.multivariate_normal(params.mu[g], params.sigma[g])
        want = (
            dyad_terms(d_new) - dyad_terms(d_old)
            + mvn.logpdf(x_new) - mvn.logpdf(x_old)
        )
        sampler._update_x_actor(i, 0)
        assert sampler._last_x_delta[0] == pytest.approx(want, abs=1e-9)


class TestMapExtract:
    def _samples(self, lp):
        S = len(lp)
        return PosteriorSamples(
            geometry="distance", G=2,
            X=np.arange(S * 4.0).reshape(S, 1, 2, 2),
            Z=np.zeros((S, 1, 2), dtype=int),
            params={"lam": np.linspace(0.1, 0.9, S)},
            log_posterior=np.asarray(lp, dtype=float),
            log_lik=np.zeros(S),
        )

    def test_single_draw(self):
        s = self._samples([-5.0])
        state, params = map_extract(s)
        assert params["lam"] == pytest.approx(0.1)

    def test_monotone_trace_takes_last(self):
        s = self._samples([-5.0, -4.0, -3.0])
        _, params = map_extract(s)
        assert params["lam"] == pytest.approx(0.9)

    def test_known_argmax(self):
        s = self._samples([-5.0, -1.0, -3.0])
        assert s.map_index() == 1


class TestSamplerGuards:
    def test_lambda_stays_in_unit_interval(self):
        net, truth, _ = _small_sim(seed=13)
        fit = mh_within_gibbs_fit(
            net, 2, chain=ChainConfig(iterations=60, burn_in=20, thin=1),
            rng=RngStream(4),
        )
        lam = fit.params["lam"]
        assert np.all((lam > 0) & (lam < 1))

    def test_rejects_bad_G(self):
        net, _, _ = _small_sim(seed=14)
        with pytest.raises(ConfigError):
            mh_within_gibbs_fit(net, net.n + 1, rng=RngStream(1))

    def test_rejects_bad_budget(self):
        net, _, _ = _small_sim(seed=15)
        with pytest.raises(ConfigError):
            mh_within_gibbs_fit(net, 2, chain=ChainConfig(iterations=5, burn_in=9),
                                rng=RngStream(1))

    def test_rank_payload_needs_plackett_luce(self):
        net, _, _ = _small_sim(seed=16)
        rank_net = _small_rank_net(seed=17)
        with pytest.raises(ConfigError):
            mh_within_gibbs_fit(rank_net, 2, rng=RngStream(1), likelihood="logistic")
        with pytest.raises(ConfigError):
            mh_within_gibbs_fit(net, 2, rng=RngStream(1), likelihood="plackett_luce")


def _small_sim(seed):
    from dynetclust.simulate import SimConfig, simulate_distance

    return simulate_distance(SimConfig("distance", n=12, T=4, G=2, seed=seed))


def _small_rank_net(seed):
    gen = np.random.default_rng(seed)
    T, n = 3, 6
    A = np.zeros((T, n, n), dtype=int)
    for t in range(T):
        for i in range(n):
            alters = [j for j in range(n) if j != i]
            ranks = gen.permutation(n - 1) + 1
            A[t, i, alters] = ranks
    return DynamicNetwork(A, directed=True, kind="rank")


class TestRankSampler:
    def test_plackett_luce_chain_runs_and_recovers_s_order(self):
        # strong popularity gradient: the fitted s should rank actors ~like
        # the generating s
        gen_rng = RngStream(20)
        n, T = 8, 6
        s_true = np.array([0.30, 0.22, 0.16, 0.12, 0.09, 0.06, 0.03, 0.02])
        X = np.zeros((T, n, 2))
        lik = PlackettLuceLik(s_true)
        net = sample_adjacency_distance(X + gen_rng.gen.normal(0, 0.01, X.shape),
                                        lik, True, gen_rng)
        fit = mh_within_gibbs_fit(
            net, 1, chain=ChainConfig(iterations=400, burn_in=150, thin=2),
            rng=RngStream(21), likelihood="plackett_luce",
        )
        s_hat = fit.params["s"].mean(axis=0)
        rho = scipy.stats.spearmanr(s_true, s_hat).statistic
        assert rho > 0.85


class TestRecoveryExample:
    def test_desk_scale_map_partition(self):
        from dynetclust.metrics import corrected_rand
        from dynetclust.simulate import SimConfig, simulate_distance

        net, truth, _ = simulate_distance(SimConfig("distance", n=50, T=8, G=4, seed=1))
        fit = mh_within_gibbs_fit(
            net, 4,
            chain=ChainConfig(iterations=500, burn_in=250, thin=2, adapt_interval=25),
            rng=RngStream(7),
        )
        state, _ = map_extract(fit)
        assert corrected_rand(truth.Z, state.Z) >= 0.8

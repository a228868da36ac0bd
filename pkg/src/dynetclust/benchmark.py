"""Wall-clock comparison of the two projection-model engines."""

import time

from .errors import InvalidInputError
from .projection_model import GibbsConfig, gibbs_fit_projection
from .projection_vb import VBConfig, vb_fit_projection
from .randkit import RngStream
from .simulate import SimConfig, simulate_projection


def runtime_benchmark(n_list, seed=0, T=2, G=4, mcmc_draws=50_000, vb_sweeps=500):
    """Time `mcmc_draws` Gibbs draws against `vb_sweeps` VB sweeps per n.

    Returns one row per network size with the two wall-clock timings.
    """
    n_list = list(n_list)
    if not n_list:
        raise InvalidInputError("n list must be nonempty")
    rows = []
    for idx, n in enumerate(n_list):
        net, _, _ = simulate_projection(
            SimConfig("projection", n=n, T=T, G=G, seed=seed + idx)
        )
        thin = max(mcmc_draws // 100, 1)
        t0 = time.perf_counter()
        gibbs_fit_projection(
            net, G,
            chain=GibbsConfig(iterations=mcmc_draws, burn_in=0, thin=thin),
            rng=RngStream(seed, idx + 1),
        )
        t_mcmc = time.perf_counter() - t0
        t0 = time.perf_counter()
        vb_fit_projection(
            net, G,
            config=VBConfig(max_sweeps=vb_sweeps, tol=1e-300, restarts=1),
            rng=RngStream(seed, len(n_list) + idx + 1),
        )
        t_vb = time.perf_counter() - t0
        rows.append({
            "n": n,
            "mcmc_draws": mcmc_draws,
            "vb_sweeps": vb_sweeps,
            "seconds_mcmc": t_mcmc,
            "seconds_vb": t_vb,
        })
    return rows

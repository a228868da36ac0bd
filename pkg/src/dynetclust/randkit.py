"""Seedable random-variate generation and small dense-matrix numerics.

All samplers are deterministic functions of their parameters and an
:class:`RngStream`.  Densities are computed in log space throughout.
"""

import math

import numba
import numpy as np
from scipy.special import expit, gammaln, ive, log_ndtr, ndtri_exp

from .errors import InvalidInputError, NumericalError

__all__ = [
    "RngStream",
    "mvn_logpdf",
    "sample_polya_gamma",
    "sample_inverse_wishart",
    "sample_dirichlet",
    "sample_truncated_normal_01",
    "sample_truncated_normal",
    "sample_von_mises_fisher",
    "distance_matrix",
    "log1pexp",
    "sigmoid",
]

_LOG_2PI = np.log(2.0 * np.pi)


def log1pexp(x):
    """Overflow-safe log(1 + exp(x))."""
    x = np.asarray(x, dtype=float)
    out = np.log1p(np.exp(-np.abs(x)))
    return out + np.maximum(x, 0.0)


def sigmoid(x):
    return expit(x)


class RngStream:
    """A counter-based random stream keyed by (seed, stream_id).

    Identical (seed, stream_id) pairs produce bit-identical draw sequences;
    distinct stream ids give statistically independent streams, so parallel
    chains stay reproducible.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, k):
        """Independent child stream; used for sweep cells and replicates."""
        return RngStream(self.seed, self.stream_id * 65_537 + int(k) + 1)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _as_generator(rng):
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    raise InvalidInputError("rng must be an RngStream or numpy Generator")


def chol_with_jitter(sigma, max_tries=4):
    """Cholesky factor of a symmetric PD matrix with a small jitter retry.

    Near-singular community shapes (small-df inverse-Wishart draws) can fail a
    plain factorization; retry with a relative 1e-10 ridge, escalating twice.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidInputError("covariance must be a square matrix")
    if not np.all(np.isfinite(sigma)):
        raise InvalidInputError("covariance must be finite")
    scale = float(np.mean(np.diag(sigma)))
    if scale <= 0:
        raise InvalidInputError("covariance must be positive definite")
    if not np.allclose(sigma, sigma.T, rtol=1e-6, atol=1e-12 * scale):
        raise InvalidInputError("covariance must be symmetric")
    jitter = 0.0
    for k in range(max_tries):
        try:
            return np.linalg.cholesky(sigma + jitter * np.eye(sigma.shape[0]))
        except np.linalg.LinAlgError:
            jitter = scale * 1e-10 * (100.0 ** k)
    raise InvalidInputError("covariance is not positive definite")


def mvn_logpdf(x, mu, sigma):
    """Log density of N(mu, sigma) at x.

    Parameters
    ----------
    x, mu : array-like, shape (p,)
    sigma : array-like, shape (p, p)
        Symmetric positive definite.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if x.shape != mu.shape:
        raise InvalidInputError("x and mu must have the same dimension")
    L = chol_with_jitter(np.atleast_2d(sigma))
    if L.shape[0] != x.shape[0]:
        raise InvalidInputError("sigma dimension does not match x")
    z = np.linalg.solve(L, x - mu)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (x.size * _LOG_2PI + logdet + z @ z))


def mvn_logpdf_spherical(sq_resid, p, tau):
    """Log N(x | m, tau^-1 I_p) given ||x - m||^2; vectorized over inputs."""
    return 0.5 * (p * (np.log(tau) - _LOG_2PI) - tau * sq_resid)


# ---------------------------------------------------------------------------
# Polya-Gamma PG(1, c): exact mixture sampler (accept/reject on the tilted
# Jacobi density), following Devroye's alternating-series method.  The per-
# draw loop is jitted; every fit spends most of its time here.
# ---------------------------------------------------------------------------

_PG_T = 0.64
_SQRT2 = np.sqrt(2.0)


@numba.njit(cache=True, fastmath=False)
def _pg_series_coef(n, x):
    """Series coefficient a_n(x) of the Jacobi density, piecewise in x."""
    nh = n + 0.5
    if x <= _PG_T:
        return (
            np.pi * nh * (2.0 / (np.pi * x)) ** 1.5 * np.exp(-2.0 * nh * nh / x)
        )
    return np.pi * nh * np.exp(-0.5 * nh * nh * np.pi * np.pi * x)


@numba.njit(cache=True, fastmath=False)
def _pg_one(c, gen):
    """One draw from the tilted Jacobi J*(1, c), c >= 0."""
    t = _PG_T
    K = np.pi * np.pi / 8.0 + 0.5 * c * c
    # exact masses of the two proposal pieces
    p_right = np.pi / (2.0 * K) * np.exp(-K * t)
    rt = np.sqrt(t)
    cdf = 0.5 * math.erfc(-((t * c - 1.0) / rt) / _SQRT2)
    if c < 50.0:
        cdf += np.exp(2.0 * c) * 0.5 * math.erfc(((t * c + 1.0) / rt) / _SQRT2)
    q_left = 2.0 * np.exp(-c) * cdf
    ratio = p_right / (p_right + q_left)
    mu = 1.0 / c if c > 0.0 else np.inf
    while True:
        if gen.random() < ratio:
            x = t + gen.exponential() / K
        elif c * t >= 1.0:  # mu <= t: plain inverse-Gaussian, reject above t
            while True:
                y = gen.standard_normal()
                y = y * y
                muy = mu * y
                x = mu + 0.5 * mu * (muy - np.sqrt(4.0 * muy + muy * muy))
                if gen.random() * (mu + x) > mu:
                    x = mu * mu / x
                if x <= t:
                    break
        else:  # mu > t (incl. c = 0): one-sided stable proposal + tilt
            while True:
                e1 = gen.exponential()
                e2 = gen.exponential()
                if e1 * e1 <= 2.0 * e2 / t:
                    x = t / (1.0 + t * e1) ** 2
                    if gen.random() <= np.exp(-0.5 * c * c * x):
                        break
        # alternating-series accept/reject
        s = _pg_series_coef(0, x)
        y = gen.random() * s
        n = 0
        while True:
            n += 1
            a = _pg_series_coef(n, x)
            if n % 2 == 1:
                s -= a
                if y <= s:
                    return x
            else:
                s += a
                if y > s:
                    break


@numba.njit(cache=True, fastmath=False)
def _pg_batch(c, gen):
    out = np.empty(c.size)
    for i in range(c.size):
        out[i] = 0.25 * _pg_one(0.5 * c[i], gen)
    return out


def sample_polya_gamma(c, rng):
    """Draw from PG(1, c); exact, strictly positive, vectorized over c.

    Scalar input gives a scalar draw; array input gives elementwise draws.
    """
    gen = _as_generator(rng)
    arr = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("PG tilt parameter must be finite")
    draws = _pg_batch(np.abs(arr).ravel(), gen)
    if arr.ndim == 0:
        return float(draws[0])
    return draws.reshape(arr.shape)


# ---------------------------------------------------------------------------
# Other standard variates
# ---------------------------------------------------------------------------

def sample_inverse_wishart(df, scale, rng):
    """Draw from the inverse-Wishart with `df` degrees of freedom.

    Uses the Bartlett decomposition; requires df > p - 1.
    """
    gen = _as_generator(rng)
    scale = np.asarray(scale, dtype=float)
    p = scale.shape[0]
    if df <= p - 1:
        raise InvalidInputError(f"inverse-Wishart needs df > p - 1 (got {df}, p={p})")
    C = chol_with_jitter(scale)
    A = np.zeros((p, p))
    for i in range(p):
        A[i, i] = np.sqrt(gen.chisquare(df - i))
    idx = np.tril_indices(p, k=-1)
    A[idx] = gen.standard_normal(len(idx[0]))
    from scipy.linalg import solve_triangular

    M = solve_triangular(A, C.T, lower=True)
    draw = M.T @ M
    return 0.5 * (draw + draw.T)


def sample_dirichlet(alpha, rng):
    """Draw a simplex vector from Dirichlet(alpha); all alpha must be > 0."""
    gen = _as_generator(rng)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size < 1:
        raise InvalidInputError("alpha must be a 1-D vector")
    if not np.all(alpha > 0):
        raise InvalidInputError("Dirichlet parameters must be strictly positive")
    for _ in range(100):
        g = gen.standard_gamma(alpha)
        tot = g.sum()
        if tot > 0:
            return g / tot
    raise NumericalError("Dirichlet draw degenerated to zero mass")


def _robert_tail(a, gen):
    """Robert's exponential rejection for a standard normal given Z >= a > 0."""
    out = np.empty(a.shape)
    idx = np.arange(a.size)
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    while idx.size:
        x = a[idx] + gen.exponential(size=idx.size) / lam[idx]
        ok = gen.random(idx.size) <= np.exp(-0.5 * (x - lam[idx]) ** 2)
        out[idx[ok]] = x[ok]
        idx = idx[~ok]
    return out


def sample_truncated_normal(mean, var, lo, hi, rng):
    """Draw from N(mean, var) truncated to (lo, hi).

    Inverse-CDF through log CDFs, with a rejection fallback when the
    interval sits deep in one tail.  Vectorized over broadcastable mean/var.
    """
    gen = _as_generator(rng)
    mean, var = np.broadcast_arrays(np.asarray(mean, float), np.asarray(var, float))
    scalar = mean.ndim == 0
    mean = np.atleast_1d(mean).astype(float)
    var = np.atleast_1d(var).astype(float)
    if np.any(var <= 0):
        raise InvalidInputError("variance must be positive")
    sd = np.sqrt(var)
    a = (lo - mean) / sd if np.isfinite(lo) else np.full(mean.shape, -np.inf)
    b = (hi - mean) / sd if np.isfinite(hi) else np.full(mean.shape, np.inf)
    x = np.empty(mean.shape)
    upper_tail = (a > 7.0) & ~np.isfinite(b)
    lower_tail = (b < -7.0) & ~np.isfinite(a)
    mid = ~(upper_tail | lower_tail)
    if upper_tail.any():
        x[upper_tail] = _robert_tail(a[upper_tail], gen)
    if lower_tail.any():
        x[lower_tail] = -_robert_tail(-b[lower_tail], gen)
    if mid.any():
        la = log_ndtr(a[mid])
        lb = log_ndtr(b[mid])
        u = gen.random(int(mid.sum()))
        w = np.exp(np.minimum(la - lb, 0.0))
        x[mid] = ndtri_exp(lb + np.log(w + u * (1.0 - w)))
    x = mean + sd * x
    # keep draws strictly interior even when the mass collapses to a boundary
    lo_edge = np.nextafter(lo, np.inf) if np.isfinite(lo) else -np.inf
    hi_edge = np.nextafter(hi, -np.inf) if np.isfinite(hi) else np.inf
    x = np.clip(x, lo_edge, hi_edge)
    if scalar:
        return float(x[0])
    return x


def sample_truncated_normal_01(mean, var, rng):
    """Draw from N(mean, var) truncated to (0, 1); always strictly interior."""
    return sample_truncated_normal(mean, var, 0.0, 1.0, rng)


def sample_von_mises_fisher(mu, kappa, rng):
    """Draw a unit vector from vMF(mu, kappa) by Wood's rejection scheme."""
    gen = _as_generator(rng)
    mu = np.asarray(mu, dtype=float)
    p = mu.size
    if p < 2:
        raise InvalidInputError("von Mises-Fisher needs dimension >= 2")
    norm = np.linalg.norm(mu)
    if kappa < 0:
        raise InvalidInputError("concentration must be nonnegative")
    if kappa == 0 or norm == 0:
        v = gen.standard_normal(p)
        return v / np.linalg.norm(v)
    mu = mu / norm
    d = p - 1
    b = d / (np.sqrt(4.0 * kappa * kappa + d * d) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    cst = kappa * x0 + d * np.log(1.0 - x0 * x0)
    while True:
        z = gen.beta(0.5 * d, 0.5 * d)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        if kappa * w + d * np.log(1.0 - x0 * w) - cst >= np.log(gen.random()):
            break
    # uniform tangent direction orthogonal to mu
    v = gen.standard_normal(p)
    v -= (v @ mu) * mu
    v /= np.linalg.norm(v)
    out = w * mu + np.sqrt(max(1.0 - w * w, 0.0)) * v
    return out / np.linalg.norm(out)


def vmf_mean_resultant(kappa, p):
    """A_p(kappa) = I_{p/2}(kappa) / I_{p/2-1}(kappa), the vMF mean length."""
    kappa = np.asarray(kappa, dtype=float)
    out = np.zeros_like(kappa)
    pos = kappa > 1e-8
    k = kappa[pos]
    out[pos] = ive(0.5 * p, k) / ive(0.5 * p - 1.0, k)
    # small-kappa series: A_p(k) ~ k/p
    out[~pos] = kappa[~pos] / p
    if out.ndim == 0:
        return float(out)
    return out


def vmf_log_normalizer(kappa, p):
    """log C_p(kappa) with vMF density C_p(kappa) exp(kappa mu'x)."""
    kappa = float(kappa)
    half = 0.5 * p
    if kappa < 1e-8:
        # uniform limit: C_p -> Gamma(p/2) / (2 pi^{p/2})
        return gammaln(half) - np.log(2.0) - half * np.log(np.pi)
    nu = half - 1.0
    log_iv = np.log(ive(nu, kappa)) + kappa
    return nu * np.log(kappa) - half * _LOG_2PI - log_iv


def distance_matrix(positions):
    """Pairwise Euclidean distances between latent points.

    Parameters
    ----------
    positions : array-like, shape (n, p) or list of length-p vectors.

    Returns
    -------
    ndarray, shape (n, n), symmetric with a zero diagonal.
    """
    if isinstance(positions, (list, tuple)):
        dims = {np.asarray(x).shape for x in positions}
        if len(dims) > 1:
            raise InvalidInputError("latent points have mixed dimensions")
    X = np.asarray(positions, dtype=float)
    if X.ndim != 2:
        raise InvalidInputError("positions must form an (n, p) array")
    diff = X[:, None, :] - X[None, :, :]
    D = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(D, 0.0)
    return 0.5 * (D + D.T)

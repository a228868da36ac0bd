"""Synthetic dynamic-network generators for tests and acceptance runs.

Both generators follow the published simulation recipes: a degree-corrected
distance-model world (p=2) and a hypersphere projection-model world (p=3),
each with sticky or transitory cluster transition regimes.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .network import DynamicNetwork, LatentState
from .randkit import RngStream, chol_with_jitter, sample_dirichlet, sample_inverse_wishart, sigmoid

STICKY = "sticky"
TRANSITORY = "transitory"

# transition-sharpness constants behind the two regimes
DISTANCE_CONST = {STICKY: 20.0, TRANSITORY: 10.0}
PROJECTION_CONST = {STICKY: 8.0, TRANSITORY: 5.0}


@dataclass
class SimConfig:
    geometry: str
    n: int = 100
    T: int = 10
    G: int = 6
    p: int = 0  # 0 -> geometry default (2 distance, 3 projection)
    stickiness: str = STICKY
    seed: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.geometry not in ("distance", "projection"):
            raise InvalidInputError("geometry must be distance or projection")
        if self.stickiness not in (STICKY, TRANSITORY):
            raise InvalidInputError("stickiness must be sticky or transitory")
        if not (self.n >= self.G >= 1):
            raise InvalidInputError("need n >= G >= 1")
        if self.T < 1:
            raise InvalidInputError("need T >= 1")
        if self.p == 0:
            self.p = 2 if self.geometry == "distance" else 3


@dataclass
class SimResult:
    net: DynamicNetwork
    truth: LatentState
    params: object

    def __iter__(self):
        return iter((self.net, self.truth, self.params))


def community_locations(G):
    """The planar community-location layout, extended beyond six as needed."""
    base = [(-0.03, 0.0), (-0.01, 0.0), (0.01, 0.0), (0.03, 0.0),
            (0.0, 0.02), (0.0, -0.02)]
    k = 0
    while len(base) < G:
        k += 1
        base += [(0.03 + 0.02 * k, 0.0), (-0.03 - 0.02 * k, 0.0),
                 (0.0, 0.02 + 0.02 * k), (0.0, -0.02 - 0.02 * k)]
    return np.array(base[:G])


def community_directions(G):
    """Unit direction layout on the sphere, azimuth/elevation in degrees."""
    az = [-15.0, 30.0, 60.0, 105.0, 45.0, 45.0]
    el = [0.0, 0.0, 0.0, 0.0, 60.0, -60.0]
    k = 0
    while len(az) < G:
        k += 1
        az.append(165.0 + 30.0 * k)
        el.append(0.0)
    a = np.radians(np.array(az[:G]))
    e = np.radians(np.array(el[:G]))
    return np.column_stack(
        (np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e))
    )


def transition_matrix_distance(mu, const):
    """Rows proportional to inverse location distances, with the diagonal set
    to const times the largest off-diagonal weight."""
    mu = np.asarray(mu, dtype=float)
    G = mu.shape[0]
    if const <= 0:
        raise InvalidInputError("const must be positive")
    if G == 1:
        return np.ones((1, 1))
    D = np.sqrt(((mu[:, None, :] - mu[None, :, :]) ** 2).sum(-1))
    off = ~np.eye(G, dtype=bool)
    if np.any(D[off] == 0):
        raise InvalidInputError("community locations must be distinct")
    W = np.zeros((G, G))
    W[off] = 1.0 / D[off]
    W[np.arange(G), np.arange(G)] = const * W.max(axis=1)
    return W / W.sum(axis=1, keepdims=True)


def transition_matrix_projection(u, const):
    """Softmax rows with inner-product logits scaled by const."""
    u = np.asarray(u, dtype=float)
    if const < 0:
        raise InvalidInputError("const must be nonnegative")
    logits = const * (u @ u.T)
    logits -= logits.max(axis=1, keepdims=True)
    W = np.exp(logits)
    return W / W.sum(axis=1, keepdims=True)


def _draw_chains(beta0, betaT, n, T, gen):
    G = beta0.shape[0]
    Z = np.empty((T, n), dtype=np.int64)
    cum0 = np.cumsum(beta0)
    Z[0] = np.searchsorted(cum0, gen.random(n) * cum0[-1])
    cumT = np.cumsum(betaT, axis=1)
    for t in range(1, T):
        rows = cumT[Z[t - 1]]
        Z[t] = (gen.random(n)[:, None] * rows[:, -1:] < rows).argmax(axis=1)
    return np.clip(Z, 0, G - 1)


def simulate_distance(cfg):
    """Generative draw from the distance-model recipe; returns ground truth."""
    from .distance_model import DegreeCorrectedLik, DistanceParams, sample_adjacency_distance

    if cfg.geometry != "distance":
        raise InvalidInputError("config geometry is not distance")
    rng = RngStream(cfg.seed)
    gen = rng.gen
    ov = cfg.overrides
    n, T, G, p = cfg.n, cfg.T, cfg.G, cfg.p
    lam = ov.get("lam", 0.8)
    beta_in = ov.get("beta_in", 0.3)
    beta_out = ov.get("beta_out", 0.7)
    mu = np.asarray(ov.get("mu", community_locations(G)), dtype=float)
    sigma = np.stack([
        sample_inverse_wishart(13, 1e-5 * np.eye(p), gen) for _ in range(G)
    ])
    beta0 = sample_dirichlet(np.full(G, 10.0), gen)
    const = ov.get("const", DISTANCE_CONST[cfg.stickiness])
    betaT = transition_matrix_distance(mu, const)

    Z = _draw_chains(beta0, betaT, n, T, gen)
    X = np.empty((T, n, p))
    chols = [chol_with_jitter(sigma[g]) for g in range(G)]
    for t in range(T):
        eps = gen.standard_normal((n, p))
        for g in range(G):
            m = Z[t] == g
            if not m.any():
                continue
            mean = mu[g] if t == 0 else lam * mu[g] + (1.0 - lam) * X[t - 1][m]
            X[t][m] = mean + eps[m] @ chols[g].T

    inv_norms = 1.0 / np.maximum(np.linalg.norm(X[0], axis=1), 1e-12)
    w = inv_norms / inv_norms.max()
    s = sample_dirichlet(100.0 * w, gen)
    lik = DegreeCorrectedLik(beta_in, beta_out, s)
    net = sample_adjacency_distance(X, lik, True, rng)
    params = DistanceParams(lam, mu, sigma, np.nan, np.full(p, np.nan),
                            beta0, betaT, lik)
    return SimResult(net, LatentState(X, Z, G), params)


def simulate_projection(cfg):
    """Generative draw from the projection-model recipe; returns ground truth."""
    from .projection_model import ProjectionParams, sample_adjacency_projection

    if cfg.geometry != "projection":
        raise InvalidInputError("config geometry is not projection")
    rng = RngStream(cfg.seed)
    gen = rng.gen
    ov = cfg.overrides
    n, T, G, p = cfg.n, cfg.T, cfg.G, cfg.p
    alpha = ov.get("alpha", -5.0)
    u = np.asarray(ov.get("u", community_directions(G)), dtype=float)
    if p != u.shape[1]:
        raise InvalidInputError("direction layout is 3-dimensional")
    beta0 = np.full(G, 1.0 / G)
    const = ov.get("const", PROJECTION_CONST[cfg.stickiness])
    betaT = transition_matrix_projection(u, const)

    # actor effects: receiver scalings near 1, sender propensities near 2.3
    s = np.abs(gen.normal(1.0, 0.15, size=n))
    s = np.maximum(s, 1e-3)
    r = gen.normal(2.3, 0.05, size=n)
    tau = 175.0 / r**2

    Z = _draw_chains(beta0, betaT, n, T, gen)
    X = np.empty((T, n, p))
    sd = 1.0 / np.sqrt(tau)
    for t in range(T):
        X[t] = r[:, None] * u[Z[t]] + sd[:, None] * gen.standard_normal((n, p))

    net = sample_adjacency_projection(X, alpha, s, True, rng)
    params = ProjectionParams(alpha, s, r, tau, u, beta0, betaT)
    return SimResult(net, LatentState(X, Z, G), params)


def simulate(cfg):
    if cfg.geometry == "distance":
        return simulate_distance(cfg)
    return simulate_projection(cfg)

"""Dynamic-network containers and latent-state types."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

BINARY = "binary"
RANK = "rank"


@dataclass
class DynamicNetwork:
    """A sequence of T directed or undirected networks over n actors.

    For binary payloads `adjacency` holds T stacked n-by-n 0/1 matrices with
    an ignored diagonal.  For rank payloads `adjacency[t, i, j]` is the rank
    (1 = most favored) actor i gives actor j at time t; each row is a
    permutation of 1..n-1 over the alters and the diagonal is 0.
    """

    adjacency: np.ndarray
    directed: bool = True
    kind: str = BINARY

    def __post_init__(self):
        A = np.asarray(self.adjacency)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise InvalidInputError("adjacency must have shape (T, n, n)")
        if A.shape[1] < 2:
            raise InvalidInputError("network needs at least two actors")
        A = A.astype(np.int64, copy=True)
        T, n, _ = A.shape
        diag = np.arange(n)
        A[:, diag, diag] = 0
        if self.kind == BINARY:
            if not np.isin(A, (0, 1)).all():
                raise InvalidInputError("binary payload must be 0/1")
            if not self.directed and not np.array_equal(A, A.transpose(0, 2, 1)):
                raise InvalidInputError("undirected payload must be symmetric")
        elif self.kind == RANK:
            if not self.directed:
                raise InvalidInputError("rank payload is inherently directed")
            want = np.arange(1, n)
            for t in range(T):
                for i in range(n):
                    row = np.delete(A[t, i], i)
                    if not np.array_equal(np.sort(row), want):
                        raise InvalidInputError(
                            f"rank row (t={t + 1}, i={i}) is not a permutation of 1..{n - 1}"
                        )
        else:
            raise InvalidInputError(f"unknown payload kind {self.kind!r}")
        self.adjacency = A

    @property
    def n(self):
        return self.adjacency.shape[1]

    @property
    def T(self):
        return self.adjacency.shape[0]

    def edge_total(self):
        """Sum of y_ijt over all off-diagonal dyad-times."""
        return int(self.adjacency.sum())

    def density(self):
        if self.kind != BINARY:
            raise InvalidInputError("density is defined for binary payloads")
        T, n, _ = self.adjacency.shape
        return self.adjacency.sum() / (T * n * (n - 1))

    def orderings(self):
        """Rank payload orderings: (T, n, n-1) actor indices, most favored first.

        Row (t, i) lists the alters of actor i sorted by the rank i assigned.
        """
        if self.kind != RANK:
            raise InvalidInputError("orderings require a rank payload")
        T, n, _ = self.adjacency.shape
        out = np.empty((T, n, n - 1), dtype=np.int64)
        for t in range(T):
            for i in range(n):
                alters = np.concatenate((np.arange(i), np.arange(i + 1, n)))
                row = self.adjacency[t, i, alters]
                out[t, i] = alters[np.argsort(row, kind="stable")]
        return out

    def copy(self):
        return DynamicNetwork(self.adjacency.copy(), self.directed, self.kind)


@dataclass
class LatentState:
    """Latent positions and cluster labels for all actors and times.

    `X` has shape (T, n, p); `Z` has shape (T, n) with integer labels in
    [0, G).  The one-hot encoding used in the model algebra is recovered via
    :meth:`one_hot`.
    """

    X: np.ndarray
    Z: np.ndarray
    G: int

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Z = np.asarray(self.Z, dtype=np.int64)
        if self.X.ndim != 3:
            raise InvalidInputError("X must have shape (T, n, p)")
        if self.Z.shape != self.X.shape[:2]:
            raise InvalidInputError("Z must have shape (T, n)")
        if self.G < 1 or self.Z.min() < 0 or self.Z.max() >= self.G:
            raise InvalidInputError("labels must lie in [0, G)")

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def T(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[2]

    def one_hot(self):
        out = np.zeros((self.T, self.n, self.G))
        t, i = np.indices(self.Z.shape)
        out[t, i, self.Z] = 1.0
        return out

    def copy(self):
        return LatentState(self.X.copy(), self.Z.copy(), self.G)


@dataclass
class PosteriorSamples:
    """Thinned posterior draws from one chain, with log traces.

    `params` maps parameter names to arrays whose leading axis indexes draws.
    `log_posterior` and `log_lik` align with that axis.
    """

    geometry: str
    G: int
    X: np.ndarray
    Z: np.ndarray
    params: dict
    log_posterior: np.ndarray
    log_lik: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return self.log_posterior.shape[0]

    def map_index(self):
        if self.n_draws == 0:
            raise InvalidInputError("no draws stored")
        return int(np.argmax(self.log_posterior))

    def state_at(self, k):
        return LatentState(self.X[k], self.Z[k], self.G)

    def params_at(self, k):
        return {name: val[k] for name, val in self.params.items()}

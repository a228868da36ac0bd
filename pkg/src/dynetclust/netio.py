"""File formats: network text files, versioned fit archives, record streams.

All writes are whole-file atomic (write to a temp file, then rename).
"""

import io
import json
import os
import tempfile

import numpy as np

from .errors import ParseError
from .network import BINARY, RANK, DynamicNetwork, PosteriorSamples

ARCHIVE_VERSION = 1


# ---------------------------------------------------------------------------
# NetworkFile text format
#   header:  n T directed|undirected binary|rank
#   binary:  one line per present edge, "t i j" (1-based t, 0-based i, j)
#   rank:    one line per actor-time, "t i r1 ... r_{n-1}" (ranks over the
#            alters of i in increasing-j order)
# ---------------------------------------------------------------------------

def parse_network(source):
    """Parse a NetworkFile from a path or text stream into a DynamicNetwork."""
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty input", line=1)
    head = lines[0].split()
    if len(head) != 4:
        raise ParseError("header must be 'n T directed|undirected binary|rank'", line=1)
    try:
        n, T = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError("n and T must be integers", line=1)
    if head[2] not in ("directed", "undirected"):
        raise ParseError(f"unknown direction flag {head[2]!r}", line=1)
    if head[3] not in (BINARY, RANK):
        raise ParseError(f"unknown payload kind {head[3]!r}", line=1)
    directed = head[2] == "directed"
    kind = head[3]
    if n < 2 or T < 1:
        raise ParseError("need n >= 2 and T >= 1", line=1)

    A = np.zeros((T, n, n), dtype=np.int64)
    if kind == BINARY:
        seen = set()
        for ln, raw in enumerate(lines[1:], start=2):
            if not raw.strip():
                raise ParseError("blank line", line=ln)
            parts = raw.split()
            if len(parts) != 3:
                raise ParseError("binary edge lines are 't i j'", line=ln)
            try:
                t, i, j = (int(x) for x in parts)
            except ValueError:
                raise ParseError("edge fields must be integers", line=ln)
            if not (1 <= t <= T):
                raise ParseError(f"time {t} out of range 1..{T}", line=ln)
            if not (0 <= i < n and 0 <= j < n):
                raise ParseError(f"actor index out of range 0..{n - 1}", line=ln)
            if i == j:
                raise ParseError("self-loops are not representable", line=ln)
            key = (t, i, j) if directed else (t, min(i, j), max(i, j))
            if key in seen:
                raise ParseError(f"duplicate edge {t} {i} {j}", line=ln)
            seen.add(key)
            A[t - 1, i, j] = 1
            if not directed:
                A[t - 1, j, i] = 1
    else:
        seen = set()
        expected_rows = T * n
        for ln, raw in enumerate(lines[1:], start=2):
            if not raw.strip():
                raise ParseError("blank line", line=ln)
            parts = raw.split()
            if len(parts) != 2 + (n - 1):
                raise ParseError(
                    f"rank lines are 't i' followed by {n - 1} ranks", line=ln
                )
            try:
                vals = [int(x) for x in parts]
            except ValueError:
                raise ParseError("rank fields must be integers", line=ln)
            t, i, ranks = vals[0], vals[1], vals[2:]
            if not (1 <= t <= T):
                raise ParseError(f"time {t} out of range 1..{T}", line=ln)
            if not (0 <= i < n):
                raise ParseError(f"actor index out of range 0..{n - 1}", line=ln)
            if (t, i) in seen:
                raise ParseError(f"duplicate rank row for t={t} i={i}", line=ln)
            seen.add((t, i))
            if sorted(ranks) != list(range(1, n)):
                raise ParseError(
                    f"ranks must be a permutation of 1..{n - 1}", line=ln
                )
            alters = [j for j in range(n) if j != i]
            A[t - 1, i, alters] = ranks
        if len(seen) != expected_rows:
            raise ParseError(
                f"expected {expected_rows} rank rows, found {len(seen)}",
                line=len(lines),
            )
    return DynamicNetwork(A, directed=directed, kind=kind)


def serialize_network(net, path=None):
    """Write (or return) the NetworkFile text for a DynamicNetwork."""
    out = io.StringIO()
    direction = "directed" if net.directed else "undirected"
    out.write(f"{net.n} {net.T} {direction} {net.kind}\n")
    if net.kind == BINARY:
        for t in range(net.T):
            A = net.adjacency[t]
            if net.directed:
                ii, jj = np.nonzero(A)
            else:
                ii, jj = np.nonzero(np.triu(A, k=1))
            for i, j in zip(ii, jj):
                out.write(f"{t + 1} {i} {j}\n")
    else:
        for t in range(net.T):
            for i in range(net.n):
                alters = [j for j in range(net.n) if j != i]
                ranks = " ".join(str(net.adjacency[t, i, j]) for j in alters)
                out.write(f"{t + 1} {i} {ranks}\n")
    text = out.getvalue()
    if path is not None:
        atomic_write_text(path, text)
    return text


def atomic_write_text(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, payload):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# FitArchive: a versioned npz container for chains or VB factors
# ---------------------------------------------------------------------------

def save_fit(path, fit, extra_meta=None):
    """Persist a PosteriorSamples or VBPosterior with full metadata."""
    from .projection_vb import VBPosterior

    meta = {"format_version": ARCHIVE_VERSION}
    arrays = {}
    if isinstance(fit, VBPosterior):
        meta.update(fit.meta)
        meta.update({"payload": "vb", "geometry": fit.geometry, "G": fit.G,
                     "directed": fit.directed, "converged": bool(fit.converged)})
        arrays = {
            "x_mean": fit.x_mean, "x_cov": fit.x_cov,
            "q_z_marginals": fit.q_z_marginals, "q_z_pairs": fit.q_z_pairs,
            "alpha": np.array([fit.alpha_mean, fit.alpha_var]),
            "s_mean": fit.s_mean, "s_m2": fit.s_m2,
            "r_mean": fit.r_mean, "r_m2": fit.r_m2,
            "tau_shape": fit.tau_shape, "tau_rate": fit.tau_rate,
            "u_dir": fit.u_dir, "u_conc": fit.u_conc,
            "beta0_conc": fit.beta0_conc, "betaT_conc": fit.betaT_conc,
            "elbo_trace": fit.elbo_trace,
        }
    elif isinstance(fit, PosteriorSamples):
        meta.update(fit.meta)
        meta.update({"payload": "mcmc", "geometry": fit.geometry, "G": fit.G})
        arrays = {"X": fit.X, "Z": fit.Z,
                  "log_posterior": fit.log_posterior, "log_lik": fit.log_lik}
        for name, val in fit.params.items():
            arrays[f"param_{name}"] = np.asarray(val)
    else:
        raise TypeError(f"cannot archive {type(fit).__name__}")
    if extra_meta:
        meta.update(extra_meta)
    buf = io.BytesIO()
    np.savez_compressed(buf, meta=json.dumps(meta), **arrays)
    atomic_write_bytes(path, buf.getvalue())


def load_fit(path):
    """Reload a FitArchive; returns (fit object, metadata dict)."""
    from .projection_vb import VBPosterior

    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != ARCHIVE_VERSION:
            raise ParseError(
                f"unsupported archive version {meta.get('format_version')!r}"
            )
        if meta["payload"] == "vb":
            fit = VBPosterior(
                geometry=meta["geometry"], G=int(meta["G"]),
                directed=bool(meta["directed"]),
                x_mean=data["x_mean"], x_cov=data["x_cov"],
                q_z_marginals=data["q_z_marginals"], q_z_pairs=data["q_z_pairs"],
                alpha_mean=float(data["alpha"][0]), alpha_var=float(data["alpha"][1]),
                s_mean=data["s_mean"], s_m2=data["s_m2"],
                r_mean=data["r_mean"], r_m2=data["r_m2"],
                tau_shape=data["tau_shape"], tau_rate=data["tau_rate"],
                u_dir=data["u_dir"], u_conc=data["u_conc"],
                beta0_conc=data["beta0_conc"], betaT_conc=data["betaT_conc"],
                elbo_trace=data["elbo_trace"],
                converged=bool(meta.get("converged", True)),
                meta=meta,
            )
            return fit, meta
        params = {
            k[len("param_"):]: data[k] for k in data.files if k.startswith("param_")
        }
        fit = PosteriorSamples(
            geometry=meta["geometry"], G=int(meta["G"]),
            X=data["X"], Z=data["Z"], params=params,
            log_posterior=data["log_posterior"], log_lik=data["log_lik"],
            meta=meta,
        )
        return fit, meta


# ---------------------------------------------------------------------------
# Simulation truth archives
# ---------------------------------------------------------------------------

def save_truth(path, truth, params, config):
    """Persist a simulation's latent truth and generating parameters."""
    from .distance_model import DistanceParams

    meta = {
        "format_version": ARCHIVE_VERSION,
        "geometry": config.geometry,
        "n": config.n, "T": config.T, "G": config.G, "p": config.p,
        "stickiness": config.stickiness, "seed": config.seed,
    }
    arrays = {"X": truth.X, "Z": truth.Z}
    if isinstance(params, DistanceParams):
        lik = params.lik
        arrays.update({
            "lam": np.array(params.lam), "mu": params.mu, "sigma": params.sigma,
            "beta0": params.beta0, "betaT": params.betaT,
            "beta_in": np.array(lik.beta_in), "beta_out": np.array(lik.beta_out),
            "s": lik.s,
        })
    else:
        arrays.update({
            "alpha": np.array(params.alpha), "s": params.s, "r": params.r,
            "tau": params.tau, "u": params.u,
            "beta0": params.beta0, "betaT": params.betaT,
        })
    buf = io.BytesIO()
    np.savez_compressed(buf, meta=json.dumps(meta), **arrays)
    atomic_write_bytes(path, buf.getvalue())


def load_truth(path):
    """Reload a truth archive: (LatentState, params object, metadata)."""
    from .distance_model import DegreeCorrectedLik, DistanceParams
    from .network import LatentState
    from .projection_model import ProjectionParams

    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        truth = LatentState(data["X"], data["Z"], int(meta["G"]))
        if meta["geometry"] == "distance":
            lik = DegreeCorrectedLik(float(data["beta_in"]),
                                     float(data["beta_out"]), data["s"])
            p = truth.p
            params = DistanceParams(
                lam=float(data["lam"]), mu=data["mu"], sigma=data["sigma"],
                tau2=np.nan, gamma=np.full(p, np.nan),
                beta0=data["beta0"], betaT=data["betaT"], lik=lik,
            )
        else:
            params = ProjectionParams(
                alpha=float(data["alpha"]), s=data["s"], r=data["r"],
                tau=data["tau"], u=data["u"],
                beta0=data["beta0"], betaT=data["betaT"],
            )
    return truth, params, meta


# ---------------------------------------------------------------------------
# Flat metric records: one per line as "name <tab> value <tab> k=v,k=v"
# ---------------------------------------------------------------------------

def format_records(records):
    lines = []
    for name, value, context in records:
        ctx = ",".join(f"{k}={v}" for k, v in sorted(context.items()))
        lines.append(f"{name}\t{value!r}\t{ctx}" if isinstance(value, str)
                     else f"{name}\t{value:.10g}\t{ctx}")
    return "\n".join(lines) + "\n"


def write_records(path, records):
    atomic_write_text(path, format_records(records))


def read_records(path):
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh.read().splitlines():
            if not raw:
                continue
            name, value, ctx = raw.split("\t")
            context = {}
            if ctx:
                for pair in ctx.split(","):
                    k, v = pair.split("=", 1)
                    context[k] = v
            try:
                parsed = float(value)
            except ValueError:
                parsed = value.strip("'")
            out.append((name, parsed, context))
    return out

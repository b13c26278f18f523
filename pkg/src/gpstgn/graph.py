"""Weighted sensor graphs, normalized Laplacians and Chebyshev graph convolution."""

from __future__ import annotations

from dataclasses import dataclass, field
import warnings

import numpy as np

from .autodiff import Tensor, _record
from .errors import ConfigError, DataError, GraphMismatchError, ShapeError


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph stored as a dense symmetric weight matrix."""

    adjacency: np.ndarray
    sensor_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DataError(f"adjacency must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DataError("adjacency contains non-finite weights")
        if np.any(a < 0):
            raise DataError("adjacency contains negative weights")
        if np.any(np.diag(a) != 0):
            raise DataError("adjacency diagonal must be zero")
        if a.size and np.max(np.abs(a - a.T)) > 1e-12:
            raise DataError("adjacency is not symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        if self.sensor_ids is not None:
            ids = tuple(str(s) for s in self.sensor_ids)
            if len(ids) != a.shape[0]:
                raise DataError(f"{len(ids)} sensor ids for {a.shape[0]} nodes")
            object.__setattr__(self, "sensor_ids", ids)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def subgraph(self, kept) -> "WeightedGraph":
        idx = np.asarray(kept, dtype=int)
        ids = None if self.sensor_ids is None else tuple(self.sensor_ids[i] for i in idx)
        return WeightedGraph(self.adjacency[np.ix_(idx, idx)], ids)


@dataclass(frozen=True)
class ScaledLaplacian:
    matrix: np.ndarray
    lambda_max: float
    fell_back: bool = field(default=False)


def normalized_laplacian(g: WeightedGraph) -> np.ndarray:
    """``I - D^{-1/2} A D^{-1/2}``; isolated nodes get a zero ``D^{-1/2}`` entry."""
    a = g.adjacency
    deg = a.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    lap = np.eye(g.n) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    return (lap + lap.T) / 2.0


def _power_iteration(mat: np.ndarray, steps: int = 100, tol: float = 1e-9):
    n = mat.shape[0]
    v = np.random.default_rng(0).uniform(0.5, 1.5, size=n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(steps):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, True
        v = w / norm
        new = float(v @ mat @ v)
        if abs(new - estimate) < tol:
            return new, True
        estimate = new
    return estimate, False


def scale_laplacian(lap: np.ndarray, mode: str = "power_iteration") -> ScaledLaplacian:
    """Rescale a Laplacian into ``[-1, 1]``: ``2 L / lambda_max - I``.

    ``power_iteration`` estimates ``lambda_max`` (100 steps, tolerance 1e-9) and
    falls back to ``fixed_two`` with ``fell_back=True`` when it does not settle.
    """
    lap = np.asarray(lap, dtype=np.float64)
    n = lap.shape[0]
    fell_back = False
    if mode == "fixed_two":
        lam = 2.0
    elif mode == "power_iteration":
        lam, ok = _power_iteration(lap)
        if not ok or lam <= 0:
            warnings.warn("power iteration did not converge; using lambda_max = 2", RuntimeWarning, stacklevel=2)
            lam, fell_back = 2.0, True
    else:
        raise ConfigError(f"unknown Laplacian scaling mode {mode!r}")
    scaled = 2.0 * lap / lam - np.eye(n)
    scaled = (scaled + scaled.T) / 2.0
    scaled.setflags(write=False)
    return ScaledLaplacian(scaled, float(lam), fell_back)


def cheb_basis(lt: ScaledLaplacian | np.ndarray, ks: int) -> np.ndarray:
    """Chebyshev polynomials ``T_0..T_{ks-1}`` of the scaled Laplacian, stacked."""
    if ks < 1:
        raise ConfigError(f"Chebyshev order must be >= 1, got {ks}")
    m = lt.matrix if isinstance(lt, ScaledLaplacian) else np.asarray(lt, dtype=np.float64)
    n = m.shape[0]
    out = [np.eye(n)]
    if ks > 1:
        out.append(m.copy())
    for _ in range(2, ks):
        out.append(2.0 * m @ out[-1] - out[-2])
    basis = np.stack(out)
    basis.setflags(write=False)
    return basis


def graph_basis(g: WeightedGraph, ks: int, mode: str = "power_iteration") -> np.ndarray:
    return cheb_basis(scale_laplacian(normalized_laplacian(g), mode), ks)


def cheb_graph_conv(x: Tensor, theta: Tensor, basis: np.ndarray) -> Tensor:
    """Chebyshev spectral graph convolution over the node axis.

    ``out[b,o,t,n] = sum_k sum_i sum_m T_k[n,m] x[b,i,t,m] theta[k,i,o]``
    """
    basis = np.asarray(basis)
    if x.data.ndim != 4 or theta.data.ndim != 3:
        raise ShapeError(f"cheb_graph_conv: bad ranks x{x.shape} theta{theta.shape}")
    ks, c_in, _ = theta.shape
    if basis.shape[0] != ks:
        raise ShapeError(f"cheb_graph_conv: basis has {basis.shape[0]} terms, theta expects {ks}")
    if x.shape[1] != c_in:
        raise ShapeError(f"cheb_graph_conv: input has {x.shape[1]} channels, theta expects {c_in}")
    if basis.shape[1] != x.shape[3]:
        raise GraphMismatchError(f"graph has {basis.shape[1]} nodes but data has {x.shape[3]}")
    xd = x.data
    b, _, t, n = xd.shape
    c_out = theta.shape[2]
    # propagated[b, k*c_in + i, t*n + m] = sum_j T_k[m, j] x[b, i, t, j]
    propagated = np.stack([xd @ basis[k].T for k in range(ks)], axis=1).reshape(b, ks * c_in, t * n)
    w2 = theta.data.reshape(ks * c_in, c_out).T
    value = np.matmul(w2, propagated).reshape(b, c_out, t, n)

    def bw(g):
        g3 = g.reshape(b, c_out, t * n)
        g_theta = np.matmul(g3, propagated.transpose(0, 2, 1)).sum(axis=0).T.reshape(ks, c_in, c_out)
        gp = np.matmul(w2.T, g3).reshape(b, ks, c_in, t, n)
        gx = np.zeros(xd.shape)
        for k in range(ks):
            gx += gp[:, k] @ basis[k]
        return gx, g_theta

    return _record("cheb_graph_conv", (x, theta), value, bw)

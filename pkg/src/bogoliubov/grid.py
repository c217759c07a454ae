"""Radial momentum grids and the discrete convolution operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from .potential import RADIAL_MEASURE, PotentialSpec

SCHEMES = ("uniform", "clustered")
_PANEL_ORDER = 16


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes and weights with ``sum(w * f(p))`` ~ ``(2pi)^-3 4pi int_0^pmax p^2 f dp``."""

    nodes: np.ndarray
    weights: np.ndarray
    pmax: float
    scheme: str
    pivot: float | None = None

    @property
    def n(self) -> int:
        return self.nodes.size

    def describe(self) -> dict:
        return {"n": self.n, "pmax": self.pmax, "scheme": self.scheme, "pivot": self.pivot}

    def matches(self, nodes, rtol: float = 1e-12) -> bool:
        nodes = np.asarray(nodes, dtype=float)
        return nodes.shape == self.nodes.shape and np.allclose(nodes, self.nodes, rtol=rtol, atol=0.0)


def _radau_right(n: int):
    """Gauss-Radau rule on [-1, 1] with the node fixed at +1."""
    if n == 1:
        return np.array([1.0]), np.array([2.0])
    x, w = roots_jacobi(n - 1, 1.0, 0.0)
    w = w / (1.0 - x)
    return np.append(x, 1.0), np.append(w, 2.0 / n**2)


def _composite_radau(lo: float, hi: float, n: int):
    panels = max(1, n // _PANEL_ORDER)
    counts = [len(c) for c in np.array_split(np.arange(n), panels)]
    edges = np.linspace(lo, hi, panels + 1)
    xs, ws = [], []
    for a, b, m in zip(edges[:-1], edges[1:], counts):
        x, w = _radau_right(m)
        xs.append(0.5 * (b - a) * (x + 1.0) + a)
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def _simpson_weights(n: int, h: float) -> np.ndarray:
    # nodes h, 2h, ..., nh; the p = 0 end carries p^2 = 0 and is dropped
    w = np.zeros(n + 1)
    m = n if n % 2 == 0 else n - 3
    w[0:m + 1:2] += 2.0
    w[1:m:2] += 4.0
    w[0] -= 1.0
    w[m] -= 1.0
    w[:m + 1] *= h / 3.0
    if m < n:
        w[m:] += np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 * h / 8.0
    return w[1:]


def build_grid(n: int = 1024, pmax: float = 12.0, scheme: str = "clustered", pivot: float | None = None) -> RadialGrid:
    """Build a radial grid.

    ``uniform`` places nodes at ``k * pmax / n`` with composite Simpson
    weights. ``clustered`` puts half of the nodes below ``pivot`` using
    composite right-Radau panels, so ``pivot`` and ``pmax`` are nodes.
    ``pivot=None`` means ``min(1, pmax / 2)``.
    """
    scheme = {"uniform-trapezoid": "uniform"}.get(scheme, scheme)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown grid scheme {scheme!r}")
    if not isinstance(n, (int, np.integer)) or n < 16:
        raise ValueError(f"grid needs n >= 16 nodes, got {n}")
    if not pmax > 0:
        raise ValueError(f"pmax must be positive, got {pmax}")
    if scheme == "uniform":
        h = pmax / n
        p = h * np.arange(1, n + 1)
        base = _simpson_weights(n, h)
        pivot = None
    else:
        if pivot is None:
            pivot = min(1.0, 0.5 * pmax)
        if not 0 < pivot < pmax:
            raise ValueError(f"clustered grid needs 0 < pivot < pmax, got {pivot}")
        lo = n // 2
        p1, w1 = _composite_radau(0.0, pivot, lo)
        p2, w2 = _composite_radau(pivot, pmax, n - lo)
        p, base = np.concatenate([p1, p2]), np.concatenate([w1, w2])
    weights = RADIAL_MEASURE * p**2 * base
    p[-1] = pmax
    p.setflags(write=False)
    weights.setflags(write=False)
    return RadialGrid(p, weights, float(pmax), scheme, None if pivot is None else float(pivot))


def integrate(grid: RadialGrid, samples) -> float:
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.nodes.shape:
        raise ValueError(f"expected {grid.n} samples, got shape {samples.shape}")
    return float(grid.weights @ samples)


@dataclass(frozen=True, eq=False)
class ConvolutionKernel:
    """Dense matrix with ``(K @ g)[i] ~ (Vhat * g)(p_i)`` for radial ``g``.

    ``K = M diag(w)`` where ``M[i, j]`` is the angular mean of Vhat between
    shells ``p_i`` and ``p_j``; ``M`` is symmetric, so ``diag(w) K`` is too.
    """

    matrix: np.ndarray
    shell_mean: np.ndarray
    grid: RadialGrid
    spec: PotentialSpec
    vhat_nodes: np.ndarray

    def __matmul__(self, samples):
        return self.matrix @ samples


def build_kernel(grid: RadialGrid, spec: PotentialSpec) -> ConvolutionKernel:
    p = grid.nodes
    m = spec.angular_mean(p[:, None], p[None, :])
    m = 0.5 * (m + m.T)
    k = m * grid.weights[None, :]
    for arr in (m, k):
        arr.setflags(write=False)
    vh = np.asarray(spec.vhat(p), dtype=float)
    vh.setflags(write=False)
    return ConvolutionKernel(k, m, grid, spec, vh)


def apply_kernel(kernel: ConvolutionKernel, samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != kernel.grid.n:
        raise ValueError(f"expected {kernel.grid.n} samples, got shape {samples.shape}")
    return kernel.matrix @ samples

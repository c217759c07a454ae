"""Discretized Bogoliubov energy functional at zero temperature.

A state is ``(gamma, alpha, rho0)`` sampled on a radial grid. The energy is

    F = int p^2 gamma - mu rho + Vhat(0) rho^2 / 2 + rho0 int Vhat (gamma + alpha)
        + 1/2 <gamma, Vhat * gamma> + 1/2 <alpha, Vhat * alpha>

with ``rho = rho0 + int gamma`` and every integral taken with the grid
weights. Derivatives are with respect to the weighted inner product, so
they are the discrete counterparts of the functional derivatives.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .grid import ConvolutionKernel, RadialGrid
from .potential import PotentialSpec

DOMAIN_TOL = 1e-12
_FORMAT_TAG = "bogoliubov-state v1"


class DomainError(ValueError):
    """A state lies outside the domain of the functional."""


@dataclass(frozen=True, eq=False)
class State:
    gamma: np.ndarray
    alpha: np.ndarray
    rho0: float

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float)
        alpha = np.array(self.alpha, dtype=float)
        rho0 = float(self.rho0)
        if gamma.ndim != 1 or gamma.shape != alpha.shape:
            raise DomainError("gamma and alpha must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(alpha)) and math.isfinite(rho0)):
            raise DomainError("state contains non-finite values")
        if rho0 < -DOMAIN_TOL:
            raise DomainError(f"rho0 must be nonnegative, got {rho0}")
        if np.any(gamma < -DOMAIN_TOL):
            i = int(np.argmin(gamma))
            raise DomainError(f"gamma must be nonnegative (gamma[{i}] = {gamma[i]})")
        gamma = np.maximum(gamma, 0.0)
        bound = gamma * gamma + gamma
        excess = alpha * alpha - bound
        if np.any(excess > DOMAIN_TOL * (1.0 + bound)):
            i = int(np.argmax(excess / (1.0 + bound)))
            raise DomainError(f"alpha^2 <= gamma^2 + gamma violated at node {i}: excess {excess[i]:.3e}")
        over = excess > 0
        if np.any(over):
            alpha[over] = np.copysign(np.sqrt(bound[over]), alpha[over])
        # implied by the two constraints above; kept as a guard
        if np.any(gamma + alpha < -0.5 - DOMAIN_TOL):
            raise DomainError("gamma + alpha >= -1/2 violated")
        gamma.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "rho0", max(rho0, 0.0))

    @property
    def n(self) -> int:
        return self.gamma.size

    def purity_residual(self) -> np.ndarray:
        return np.abs(self.alpha**2 - self.gamma**2 - self.gamma) / (1.0 + self.gamma**2)


def vacuum(n: int) -> State:
    return State(np.zeros(n), np.zeros(n), 0.0)


def pure_gamma_of_alpha(alpha):
    """gamma(alpha) = -1/2 + sqrt(1/4 + alpha^2), written without cancellation."""
    alpha = np.asarray(alpha, dtype=float)
    a2 = alpha * alpha
    return a2 / (0.5 + np.sqrt(0.25 + a2))


def alpha_bound(kappa: float | None) -> float:
    """Largest |alpha| of a pure state with gamma <= kappa."""
    if kappa is None or math.isinf(kappa):
        return math.inf
    return math.sqrt(kappa * kappa + kappa)


def pure_state(alpha, rho0: float) -> State:
    alpha = np.asarray(alpha, dtype=float)
    return State(pure_gamma_of_alpha(alpha), alpha, rho0)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    chemical: float
    hartree: float
    linear: float
    quad_gamma: float
    quad_alpha: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Derivatives:
    A: np.ndarray
    B: np.ndarray
    dF_drho0: float


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Energy, derivatives and the convolutions they share."""

    energy: EnergyBreakdown
    derivatives: Derivatives
    conv_gamma: np.ndarray
    conv_alpha: np.ndarray
    rho_gamma: float
    linear_integral: float


def densities(state: State, grid: RadialGrid) -> tuple[float, float]:
    """Return ``(rho_gamma, rho)``."""
    rho_gamma = float(grid.weights @ state.gamma)
    return rho_gamma, state.rho0 + rho_gamma


def evaluate(state: State, kernel: ConvolutionKernel, mu: float) -> Evaluation:
    grid, spec = kernel.grid, kernel.spec
    w, p, vh = grid.weights, grid.nodes, kernel.vhat_nodes
    if state.n != grid.n:
        raise ValueError(f"state has {state.n} nodes, grid has {grid.n}")
    g, a, rho0 = state.gamma, state.alpha, state.rho0
    kg = kernel.matrix @ g
    ka = kernel.matrix @ a
    rho_gamma = float(w @ g)
    rho = rho0 + rho_gamma
    lin = float(w @ (vh * (g + a)))
    v00 = spec.vhat0

    kinetic = float(w @ (p * p * g))
    chemical = -mu * rho
    hartree = 0.5 * v00 * rho * rho
    linear = rho0 * lin
    quad_gamma = 0.5 * float(w @ (g * kg))
    quad_alpha = 0.5 * float(w @ (a * ka))
    total = kinetic + chemical + hartree + linear + quad_gamma + quad_alpha
    energy = EnergyBreakdown(kinetic, chemical, hartree, linear, quad_gamma, quad_alpha, total)

    shift = v00 * rho - mu
    A = p * p + shift + rho0 * vh + kg
    B = rho0 * vh + ka
    derivs = Derivatives(A, B, shift + lin)
    return Evaluation(energy, derivs, kg, ka, rho_gamma, lin)


def pure_gamma_change(alpha_old, alpha_new):
    """gamma(alpha_new) - gamma(alpha_old) without subtracting nearby numbers."""
    a0 = np.asarray(alpha_old, dtype=float)
    a1 = np.asarray(alpha_new, dtype=float)
    return (a1 - a0) * (a1 + a0) / (np.sqrt(0.25 + a1 * a1) + np.sqrt(0.25 + a0 * a0))


def energy_change(old: State, ev_old: Evaluation, new: State, ev_new: Evaluation, grid: RadialGrid,
                  pure: bool = False) -> float:
    """``F(new) - F(old)`` accurate relative to the size of the step.

    F is a quadratic polynomial, so the trapezoid rule on the gradient is
    exact; differencing the two totals would lose everything below the
    roundoff of ``|F|``. With ``pure=True`` both states must be pure and
    the change of gamma is taken from the change of alpha.
    """
    w = grid.weights
    d0, d1 = ev_old.derivatives, ev_new.derivatives
    da = new.alpha - old.alpha
    dg = pure_gamma_change(old.alpha, new.alpha) if pure else new.gamma - old.gamma
    return 0.5 * (float(w @ ((d0.A + d1.A) * dg + (d0.B + d1.B) * da))
                  + (d0.dF_drho0 + d1.dF_drho0) * (new.rho0 - old.rho0))


def energy(state: State, kernel: ConvolutionKernel, mu: float) -> EnergyBreakdown:
    return evaluate(state, kernel, mu).energy


def derivatives(state: State, kernel: ConvolutionKernel, mu: float) -> Derivatives:
    """``A = dF/dgamma``, ``B = dF/dalpha`` (per node) and ``dF/drho0``."""
    return evaluate(state, kernel, mu).derivatives


def pure_gradient_from(alpha, derivs: Derivatives) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return alpha / np.sqrt(0.25 + alpha * alpha) * derivs.A + derivs.B


def pure_gradient(alpha, rho0: float, kernel: ConvolutionKernel, mu: float) -> tuple[np.ndarray, float]:
    """Gradient of ``F~(alpha, rho0) = F(gamma(alpha), alpha, rho0)``."""
    d = derivatives(pure_state(alpha, rho0), kernel, mu)
    return pure_gradient_from(alpha, d), d.dF_drho0


def lower_bound_constants(spec: PotentialSpec, mu: float) -> tuple[float, float]:
    """``(eps, C)`` with ``F >= kinetic + eps (rho0^2 + rho_gamma^2) - C`` on the whole domain.

    ``K = 2 |Vhat|_2 / Vhat(0)``, ``eps = Vhat(0) / 4`` and ``C`` is the
    maximum of ``mu (x + y) + |Vhat|_2 K y / 2 - Vhat(0) (x^2 + y^2) / 4``
    over ``x, y >= 0``.
    """
    v00 = spec.vhat0
    k = 2.0 * spec.l2norm / v00
    c_lin = spec.l2norm * k / 2.0
    c = (max(mu, 0.0) ** 2 + max(mu + c_lin, 0.0) ** 2) / v00
    return v00 / 4.0, c


# -- serialization --------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_state(path, state: State, grid: RadialGrid, mu: float, config: dict | None = None) -> None:
    """Write ``p gamma alpha`` columns under a ``#`` header carrying rho0, mu and the grid."""
    lines = [
        f"# {_FORMAT_TAG}",
        f"# rho0 = {_fmt(state.rho0)}",
        f"# mu = {_fmt(mu)}",
        f"# grid = {json.dumps(grid.describe(), sort_keys=True)}",
    ]
    if config is not None:
        lines.append(f"# config = {json.dumps(config, sort_keys=True)}")
    lines.append("# p gamma alpha")
    for row in zip(grid.nodes, state.gamma, state.alpha):
        lines.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_state(path) -> tuple[State, np.ndarray, dict]:
    """Read a state file; returns ``(state, nodes, header)``."""
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                key, value = key.strip(), value.strip()
                header[key] = json.loads(value) if key in ("grid", "config") else float(value)
            continue
        rows.append([float(v) for v in line.split()])
    if "rho0" not in header or not rows:
        raise ValueError(f"{path}: not a state file")
    data = np.array(rows)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValueError(f"{path}: expected three columns (p, gamma, alpha)")
    return State(data[:, 1], data[:, 2], header["rho0"]), data[:, 0], header

"""Minimization of the Bogoliubov functional over pure states.

Every ground state with mu > 0 is pure (alpha^2 = gamma^2 + gamma), so the
search runs over ``(alpha, rho0)`` with ``gamma = gamma(alpha)``. The main
engine is the self-consistent update obtained by solving the stationarity
condition node by node for fixed mean fields ``A`` and ``B``; a projected,
preconditioned gradient step with Armijo backtracking is the fallback.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .functional import (
    EnergyBreakdown,
    Evaluation,
    State,
    alpha_bound,
    energy_change,
    evaluate,
    load_state,
    pure_gamma_change,
    pure_gamma_of_alpha,
    pure_gradient_from,
    pure_state,
    vacuum,
)
from .grid import ConvolutionKernel

log = logging.getLogger(__name__)

INITS = ("vacuum", "trial", "file")
ENGINES = ("fixed_point", "gradient")


class StepRejected(RuntimeError):
    """The self-consistent update is undefined at this state (some A <= 0)."""


@dataclass(frozen=True)
class SolverConfig:
    kappa: float | None = None
    damping: float = 0.5
    max_halvings: int = 4
    clamp: float = 1e-8
    step_init: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    min_step: float = 1e-14
    tol_grad: float = 1e-9
    tol_energy: float = 1e-12
    max_iter: int = 5000
    engine: str = "fixed_point"
    init: str = "vacuum"
    trial_gamma0: float = 10.0
    trial_eps: float = 0.1
    init_file: str | None = None

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.tol_grad <= 0 or self.tol_energy <= 0:
            raise ValueError("tolerances must be positive")
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError(f"kappa must be positive or None, got {self.kappa}")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo < 1:
            raise ValueError("backtracking factor and Armijo constant must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "file" and not self.init_file:
            raise ValueError("init = file needs init_file")


@dataclass
class SolverReport:
    state: State
    energy: EnergyBreakdown
    residuals: dict
    iterations: int
    converged: bool
    trace: list
    mu: float
    kappa: float | None = None
    rho_gamma: float = 0.0
    active_clamp: int = 0
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def rho(self) -> float:
        return self.state.rho0 + self.rho_gamma

    @property
    def condensate_fraction(self) -> float:
        return self.state.rho0 / self.rho if self.rho > 0 else math.nan

    def to_json(self) -> dict:
        return {
            "mu": self.mu,
            "kappa": self.kappa,
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message,
            "energy": self.energy.as_dict(),
            "densities": {
                "rho0": self.state.rho0,
                "rho_gamma": self.rho_gamma,
                "rho": self.rho,
                "condensate_fraction": self.condensate_fraction,
            },
            "residuals": dict(self.residuals),
            "active_clamp": self.active_clamp,
            "extra": dict(self.extra),
            "trace": [list(row) for row in self.trace],
        }


# -- helpers ----------------------------------------------------------------

def _clip_alpha(alpha, kappa):
    bound = alpha_bound(kappa)
    return alpha if math.isinf(bound) else np.clip(alpha, -bound, bound)


def _rho0_update(alpha, gamma, kernel: ConvolutionKernel, mu: float) -> float:
    w, vh = kernel.grid.weights, kernel.vhat_nodes
    lin = float(w @ (vh * (gamma + alpha)))
    return max(0.0, (mu - lin) / kernel.spec.vhat0 - float(w @ gamma))


def stationary_alpha(A, B, clamp: float):
    """Solve ``alpha / sqrt(1/4 + alpha^2) * A + B = 0`` node by node."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(B == 0, 0.0, -B / A)
    t = np.clip(t, -1.0 + clamp, 1.0 - clamp)
    return t / (2.0 * np.sqrt((1.0 - t) * (1.0 + t)))


def _at_bound(alpha, kappa):
    bound = alpha_bound(kappa)
    if math.isinf(bound):
        return np.zeros(alpha.shape, dtype=bool)
    return np.abs(alpha) >= bound * (1.0 - 1e-12)


def residuals(state: State, ev: Evaluation, kappa: float | None = None) -> dict:
    """Stationarity residuals, projected onto the feasible directions."""
    d = ev.derivatives
    g = pure_gradient_from(state.alpha, d)
    # at the cutoff a gradient pushing |alpha| outward is admissible
    pinned = _at_bound(state.alpha, kappa) & (state.alpha * g < 0)
    g = np.where(pinned, 0.0, g)
    drho0 = d.dF_drho0 if state.rho0 > 0 else min(d.dF_drho0, 0.0)
    over = 0 if kappa is None else int(np.count_nonzero(state.gamma > kappa * (1 + 1e-12)))
    return {
        "grad": float(np.max(np.abs(g))) if g.size else 0.0,
        "drho0": abs(float(drho0)),
        "purity": float(np.max(state.purity_residual())) if g.size else 0.0,
        "domain_violations": over,
    }


def _pure(alpha, rho0, kappa):
    return pure_state(_clip_alpha(alpha, kappa), rho0)


# -- initial states -----------------------------------------------------------

def init_trial(kernel: ConvolutionKernel, mu: float, gamma0: float, eps_ball: float) -> State:
    """Condensate plus a pure state of occupation ``gamma0`` on the ball ``|p| <= eps_ball``.

    The condensate density makes the total density ``mu / Vhat(0)``, using
    the exact ball volume ``(2pi)^-3 4pi eps^3 / 3``.
    """
    if not gamma0 > 0 or not eps_ball > 0:
        raise ValueError("gamma0 and eps_ball must be positive")
    volume = eps_ball**3 / (6.0 * math.pi**2)
    rho0 = mu / kernel.spec.vhat0 - gamma0 * volume
    if not rho0 > 0:
        raise ValueError(f"trial condensate density {rho0:.6g} <= 0: choose a smaller eps_ball or gamma0")
    inside = kernel.grid.nodes <= eps_ball
    gamma = np.where(inside, gamma0, 0.0)
    alpha = np.where(inside, -math.sqrt(gamma0 * gamma0 + gamma0), 0.0)
    return State(gamma, alpha, rho0)


def initial_state(kernel: ConvolutionKernel, mu: float, config: SolverConfig) -> State:
    n = kernel.grid.n
    if config.init == "vacuum":
        state = vacuum(n)
    elif config.init == "trial":
        state = init_trial(kernel, mu, config.trial_gamma0, config.trial_eps)
    else:
        state, nodes, _ = load_state(config.init_file)
        if not kernel.grid.matches(nodes):
            raise ValueError(f"{config.init_file}: state grid does not match the configured grid")
    # the iteration runs over pure states inside the cutoff
    return _pure(state.alpha, state.rho0, config.kappa)


# -- steps --------------------------------------------------------------------

def fixed_point_step(state: State, kernel: ConvolutionKernel, mu: float, config: SolverConfig,
                     damping: float | None = None, ev: Evaluation | None = None) -> State:
    """One damped self-consistent update of ``(alpha, rho0)``.

    Raises :class:`StepRejected` when ``A <= 0`` somewhere.
    """
    if ev is None:
        ev = evaluate(state, kernel, mu)
    eta = config.damping if damping is None else damping
    A, B = ev.derivatives.A, ev.derivatives.B
    if np.any(A <= 0):
        raise StepRejected(f"A <= 0 at {int(np.count_nonzero(A <= 0))} nodes")
    target = _clip_alpha(stationary_alpha(A, B, config.clamp), config.kappa)
    alpha = _clip_alpha((1.0 - eta) * state.alpha + eta * target, config.kappa)
    gamma = pure_gamma_of_alpha(alpha)
    return State(gamma, alpha, _rho0_update(alpha, gamma, kernel, mu))


def _preconditioner(state: State, kernel: ConvolutionKernel):
    p = kernel.grid.nodes
    return (1.0 + 4.0 * state.alpha**2) ** 1.5 / (1.0 + p * p)


def gradient_step(state: State, kernel: ConvolutionKernel, mu: float, config: SolverConfig,
                  step: float | None = None, ev: Evaluation | None = None):
    """Projected, preconditioned gradient step with Armijo backtracking.

    Returns ``(state, evaluation, step)``; ``state`` is ``None`` when no
    step above ``config.min_step`` decreases the energy.
    """
    if ev is None:
        ev = evaluate(state, kernel, mu)
    w = kernel.grid.weights
    g = pure_gradient_from(state.alpha, ev.derivatives)
    dF = ev.derivatives.dF_drho0
    d_alpha = -_preconditioner(state, kernel) * g
    d_rho0 = -dF / kernel.spec.vhat0
    if not np.any(d_alpha) and d_rho0 == 0:
        return state, ev, 0.0
    s = config.step_init if step is None else step
    while s >= config.min_step:
        alpha = _clip_alpha(state.alpha + s * d_alpha, config.kappa)
        rho0 = max(0.0, state.rho0 + s * d_rho0)
        slope = float(w @ (g * (alpha - state.alpha))) + dF * (rho0 - state.rho0)
        if slope < 0:
            cand = pure_state(alpha, rho0)
            ev_c = evaluate(cand, kernel, mu)
            if energy_change(state, ev, cand, ev_c, kernel.grid, pure=True) <= config.armijo * slope:
                return cand, ev_c, s
        elif slope == 0:
            # projection removed every admissible direction
            return state, ev, 0.0
        s *= config.backtrack
    return None, ev, s


# -- drivers ------------------------------------------------------------------

def _report(state, ev, mu, config, it, converged, trace, message, extra=None):
    res = residuals(state, ev, config.kappa)
    active = int(np.count_nonzero(_at_bound(state.alpha, config.kappa)))
    return SolverReport(state, ev.energy, res, it, converged, trace, mu, config.kappa,
                        ev.rho_gamma, active, message, extra or {})


def _vacuum_report(kernel, mu, config):
    state = vacuum(kernel.grid.n)
    ev = evaluate(state, kernel, mu)
    return _report(state, ev, mu, config, 0, True, [(0.0, 0.0)], "mu <= 0: vacuum is the minimizer")


def minimize(kernel: ConvolutionKernel, mu: float, config: SolverConfig | None = None,
             init: State | None = None) -> SolverReport:
    """Minimize F (restricted to ``gamma <= config.kappa`` when set)."""
    config = config or SolverConfig()
    if mu <= 0:
        return _vacuum_report(kernel, mu, config)
    state = initial_state(kernel, mu, config) if init is None else _pure(init.alpha, init.rho0, config.kappa)
    ev = evaluate(state, kernel, mu)
    energy = ev.energy.total
    res = residuals(state, ev, config.kappa)
    trace = [(energy, res["grad"])]
    streak = 0
    step = config.step_init
    message = "max_iter reached"
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        cand = ev_c = None
        if config.engine == "fixed_point":
            eta = config.damping
            for _ in range(config.max_halvings + 1):
                try:
                    trial = fixed_point_step(state, kernel, mu, config, eta, ev)
                except StepRejected:
                    break
                ev_t = evaluate(trial, kernel, mu)
                if energy_change(state, ev, trial, ev_t, kernel.grid, pure=True) <= 0:
                    cand, ev_c = trial, ev_t
                    break
                eta *= 0.5
        if cand is None:
            cand, ev_c, used = gradient_step(state, kernel, mu, config, min(2.0 * step, 1e6), ev)
            if cand is None or cand is state:
                converged = res["grad"] < config.tol_grad and res["drho0"] < config.tol_grad
                message = "converged (no further descent at machine precision)" if converged else "line search stagnated"
                it -= 1
                break
            if used > 0:
                step = used
        decrease = -energy_change(state, ev, cand, ev_c, kernel.grid, pure=True)
        state, ev = cand, ev_c
        energy -= decrease
        res = residuals(state, ev, config.kappa)
        trace.append((energy, res["grad"]))
        small = (res["grad"] < config.tol_grad and res["drho0"] < config.tol_grad
                 and decrease <= config.tol_energy * max(1.0, abs(energy)))
        streak = streak + 1 if small else 0
        if streak >= 3:
            converged = True
            message = "converged"
            break
    if not converged:
        log.warning("minimize(mu=%g, kappa=%s): %s after %d iterations (residual %.3e)",
                    mu, config.kappa, message, it, res["grad"])
    # the trace accumulates exact per-step changes; report how far it drifted from a fresh total
    return _report(state, ev, mu, config, it, converged, trace, message,
                   {"trace_drift": ev.energy.total - energy})


def minimize_restricted(kappa: float, kernel: ConvolutionKernel, mu: float,
                        config: SolverConfig | None = None, init: State | None = None) -> SolverReport:
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    config = replace(config or SolverConfig(), kappa=float(kappa))
    return minimize(kernel, mu, config, init)


@dataclass
class KappaSweep:
    kappas: list
    reports: list
    monotone: bool
    kappa_star: float | None
    path_energies: list = field(default_factory=list)

    @property
    def energies(self) -> list:
        return [r.energy.total for r in self.reports]


def kappa_sweep(kappas, kernel: ConvolutionKernel, mu: float, config: SolverConfig | None = None,
                tol: float = 1e-8, warm_start: bool = True) -> KappaSweep:
    """Restricted minimizations over ascending cutoffs.

    With ``warm_start`` each run starts from the previous minimizer, which
    is admissible for the larger cutoff, so the energies cannot increase.
    ``kappa_star`` is the first cutoff whose clamp is inactive and from
    which every successive energy change stays below ``tol``.
    """
    kappas = [float(k) for k in kappas]
    if not kappas:
        raise ValueError("empty kappa list")
    if any(k <= 0 for k in kappas) or any(b <= a for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappas must be positive and strictly ascending")
    reports = []
    prev = None
    for k in kappas:
        rep = minimize_restricted(k, kernel, mu, config, prev if warm_start else None)
        if not rep.converged:
            log.warning("kappa sweep: run at kappa=%g did not converge", k)
        reports.append(rep)
        prev = rep.state
    if warm_start:
        # chain the exact per-step decrements along the single warm-started path; fresh
        # totals of (nearly) equal minimizers can differ by one unit of roundoff
        energies = [reports[0].trace[-1][0]]
        for rep in reports[1:]:
            energies.append(energies[-1] + (rep.trace[-1][0] - rep.trace[0][0]))
    else:
        energies = [r.energy.total for r in reports]
    monotone = all(b <= a for a, b in zip(energies, energies[1:]))
    star = None
    for i in range(len(kappas)):
        tail = energies[i:]
        if reports[i].active_clamp == 0 and all(abs(b - a) < tol for a, b in zip(tail, tail[1:])):
            star = kappas[i]
            break
    return KappaSweep(kappas, reports, monotone, star, energies)


def mu_sweep(mus, kernel: ConvolutionKernel, config: SolverConfig | None = None,
             warm_start: bool = True) -> list[dict]:
    """One minimization per chemical potential, rows in input order."""
    rows = []
    prev = None
    for mu in mus:
        mu = float(mu)
        init = prev if (warm_start and prev is not None and prev.rho0 > 0) else None
        rep = minimize(kernel, mu, config, init)
        prev = rep.state
        rows.append({
            "mu": mu,
            "rho0": rep.state.rho0,
            "rho_gamma": rep.rho_gamma,
            "rho": rep.rho,
            "energy": rep.energy.total,
            "condensate_fraction": rep.condensate_fraction,
            "converged": rep.converged,
            "report": rep,
        })
    return rows


# -- fixed densities ------------------------------------------------------------

def _mass(alpha, w) -> float:
    return float(w @ pure_gamma_of_alpha(alpha))


def _rescale_to_mass(alpha, w, lam: float):
    """Scale ``alpha`` by a positive scalar so that ``int gamma(alpha) = lam``."""
    m = _mass(alpha, w)
    if m == lam:
        return alpha
    if m == 0:
        raise ValueError("cannot rescale a zero pairing function to positive mass")
    hi = 1.0
    while _mass(hi * alpha, w) < lam:
        hi *= 2.0
    lo = 0.0 if m > lam else hi / 2.0
    c = brentq(lambda c: _mass(c * alpha, w) - lam, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    return c * alpha


def _constrained_target(A, B, w, lam: float, clamp: float):
    """Stationary ``alpha`` for ``(A + nu, B)`` with ``int gamma = lam``; returns ``(nu, alpha)``.

    When even the smallest admissible ``nu`` leaves a mass deficit, the
    deficit goes to the node where ``A + nu = |B|``: there the shifted
    problem is flat along the pure-state branch, so any occupation is
    stationary.
    """
    def excess(nu):
        return _mass(stationary_alpha(A + nu, B, clamp), w) - lam

    gap = np.abs(B) - A
    lo = float(np.max(gap))
    if excess(lo) <= 0:
        alpha = stationary_alpha(A + lo, B, clamp)
        k = int(np.argmax(gap))
        rest = lam - (_mass(alpha, w) - w[k] * pure_gamma_of_alpha(alpha[k]))
        gk = max(rest, 0.0) / w[k]
        alpha[k] = -math.copysign(math.sqrt(gk * gk + gk), B[k] if B[k] != 0 else 1.0)
        return lo, alpha
    hi = max(lo, 0.0) + 1.0
    while excess(hi) > 0:
        hi = lo + 2.0 * (hi - lo)
    nu = brentq(excess, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    return nu, stationary_alpha(A + nu, B, clamp)


def _lagrangian_change(old, ev_old, new, ev_new, w, nu: float) -> float:
    """Change of ``F - nu * int gamma`` between pure states at equal rho0.

    On the constraint set this is the energy change. Folding ``nu`` into
    ``A`` node by node keeps the sum free of the cancellation between the
    energy and mass terms, which otherwise swamps the last decrements.
    """
    d0, d1 = ev_old.derivatives, ev_new.derivatives
    da = new.alpha - old.alpha
    dg = pure_gamma_change(old.alpha, new.alpha)
    return 0.5 * float(w @ ((d0.A + d1.A + 2.0 * nu) * dg + (d0.B + d1.B) * da))


def minimize_fixed_density(lam: float, rho0: float, kernel: ConvolutionKernel, mu: float,
                           config: SolverConfig | None = None, init: State | None = None) -> SolverReport:
    """Compute ``f(lam, rho0)``: minimize over pure states with ``int gamma = lam`` and fixed ``rho0``.

    The mass constraint is kept by rescaling ``alpha`` after each damped
    update; the update itself targets the stationary point of the shifted
    derivative ``A + nu`` where ``nu`` matches the prescribed mass.
    """
    config = config or SolverConfig()
    if lam < 0 or rho0 < 0:
        raise ValueError("lambda and rho0 must be nonnegative")
    w = kernel.grid.weights
    if lam == 0:
        state = State(np.zeros(kernel.grid.n), np.zeros(kernel.grid.n), rho0)
        ev = evaluate(state, kernel, mu)
        return _fixed_density_report(state, ev, mu, config, 0, True, [(ev.energy.total, 0.0)], "closed form", 0.0, lam)
    if init is not None and _mass(init.alpha, w) > 0:
        alpha = _rescale_to_mass(np.array(init.alpha), w, lam)
    else:
        p = kernel.grid.nodes
        alpha = _rescale_to_mass(-kernel.vhat_nodes / (1.0 + p * p), w, lam)
    state = pure_state(alpha, rho0)
    ev = evaluate(state, kernel, mu)
    energy = ev.energy.total
    trace = [(energy, math.inf)]
    streak = 0
    converged = False
    message = "max_iter reached"
    nu = 0.0
    it = 0
    for it in range(1, config.max_iter + 1):
        d = ev.derivatives
        nu, target = _constrained_target(d.A, d.B, w, lam, config.clamp)
        res = float(np.max(np.abs(pure_gradient_from(state.alpha, replace(d, A=d.A + nu)))))
        trace[-1] = (energy, res)
        eta = config.damping
        cand = None
        while eta >= 1e-6:
            alpha = _rescale_to_mass((1.0 - eta) * state.alpha + eta * target, w, lam)
            trial = pure_state(alpha, rho0)
            ev_t = evaluate(trial, kernel, mu)
            change = _lagrangian_change(state, ev, trial, ev_t, w, nu)
            if change <= 0:
                cand = (trial, ev_t)
                break
            eta *= 0.5
        if cand is None:
            converged = res < config.tol_grad
            message = "converged (no further descent at machine precision)" if converged else "stagnated"
            it -= 1
            break
        decrease = -change
        state, ev = cand
        energy -= decrease
        trace.append((energy, math.inf))
        small = res < config.tol_grad and decrease <= config.tol_energy * max(1.0, abs(energy))
        streak = streak + 1 if small else 0
        if streak >= 3:
            converged = True
            message = "converged"
            break
    d = ev.derivatives
    nu, _ = _constrained_target(d.A, d.B, w, lam, config.clamp)
    res = float(np.max(np.abs(pure_gradient_from(state.alpha, replace(d, A=d.A + nu)))))
    trace[-1] = (energy, res)
    return _fixed_density_report(state, ev, mu, config, it, converged, trace, message, nu, lam, res)


def _fixed_density_report(state, ev, mu, config, it, converged, trace, message, nu, lam, res=0.0):
    rep = _report(state, ev, mu, replace(config, kappa=None), it, converged, trace, message,
                  {"lambda": lam, "multiplier": nu})
    rep.residuals["grad"] = res
    rep.residuals["drho0"] = math.nan
    return rep

"""Property checks for converged states.

Each check returns a :class:`CheckRecord`; :func:`run_suite` bundles them
into a :class:`VerificationReport`. Checks are pure functions of their
inputs. "Almost everywhere" conditions are tested at every node with
``gamma`` above :data:`GAMMA_FLOOR`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .functional import Evaluation, State, evaluate, lower_bound_constants
from .grid import ConvolutionKernel

GAMMA_FLOOR = 1e-14
MARGIN = 1e-8

PASS, FAIL, SKIPPED, INCONCLUSIVE = "pass", "fail", "skipped", "inconclusive"


@dataclass
class CheckRecord:
    name: str
    status: str
    values: dict = field(default_factory=dict)
    threshold: float | None = None
    worst_node: dict | None = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        # skipped and inconclusive checks are reported, not failed
        return self.status != FAIL

    def to_json(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return _plain(out)


@dataclass
class VerificationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckRecord:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_json() for c in self.checks]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [("check", "status", "value", "threshold")]
        for c in self.checks:
            main = c.values.get("value")
            rows.append((c.name, c.status, "-" if main is None else f"{main:.6g}",
                         "-" if c.threshold is None else f"{c.threshold:.3g}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _node(kernel_or_nodes, i: int) -> dict:
    nodes = kernel_or_nodes.grid.nodes if isinstance(kernel_or_nodes, ConvolutionKernel) else kernel_or_nodes
    return {"index": int(i), "p": float(nodes[i])}


def _is_vacuum(state: State) -> bool:
    return state.rho0 == 0 and not np.any(state.gamma) and not np.any(state.alpha)


# -- individual checks ----------------------------------------------------------

def check_pure_state(state: State, tol: float = 1e-8) -> CheckRecord:
    """``max |alpha^2 - gamma^2 - gamma| / (1 + gamma^2) < tol``."""
    res = state.purity_residual()
    raw = np.abs(state.alpha**2 - state.gamma**2 - state.gamma)
    i = int(np.argmax(res)) if res.size else 0
    value = float(res[i]) if res.size else 0.0
    return CheckRecord("pure_state", PASS if value < tol else FAIL,
                       {"value": value, "raw_residual": float(raw[i]) if raw.size else 0.0},
                       tol, {"index": i})


def check_condensate_majority(state: State, kernel: ConvolutionKernel, mu: float | None = None,
                              ev: Evaluation | None = None, margin: float = MARGIN) -> CheckRecord:
    """Density transfer inequality ``rho0 >= rho_gamma + (kinetic + quad_gamma) / (-int Vhat (gamma + alpha))``.

    Needs ``int Vhat (gamma + alpha) < 0``; skipped for the vacuum and for
    ``mu <= 0``, where there is no condensate to compare with.
    """
    name = "condensate_majority"
    if (mu is not None and mu <= 0) or _is_vacuum(state):
        return CheckRecord(name, SKIPPED, notes=["applies to mu > 0 minimizers only"])
    ev = ev or evaluate(state, kernel, 0.0 if mu is None else mu)
    lin = ev.linear_integral
    rho_g = ev.rho_gamma
    values = {"rho0": state.rho0, "rho_gamma": rho_g, "linear_integral": lin}
    if not lin < 0:
        values["value"] = lin
        return CheckRecord(name, FAIL, values, 0.0,
                           notes=["precondition int Vhat (gamma + alpha) < 0 violated"])
    transfer = (ev.energy.kinetic + ev.energy.quad_gamma) / (-lin)
    slack = state.rho0 - rho_g - transfer
    values.update(value=slack, transfer=transfer)
    ok = slack >= -margin and state.rho0 > rho_g
    notes = [] if state.rho0 > rho_g else ["rho0 > rho_gamma fails"]
    return CheckRecord(name, PASS if ok else FAIL, values, -margin, notes=notes)


def decay_window_start(ev: Evaluation, kernel: ConvolutionKernel) -> float:
    """Momentum where ``p^2`` reaches twice the largest non-kinetic part of ``A``."""
    p = kernel.grid.nodes
    return math.sqrt(2.0 * float(np.max(np.abs(ev.derivatives.A - p * p))))


def check_decay(state: State, kernel: ConvolutionKernel, mu: float | None = None, p0: float | None = None,
                ev: Evaluation | None = None, max_slope: float = -3.5, growth: float = 10.0) -> CheckRecord:
    """Tail decay: least-squares slope of ``log gamma`` against ``log p`` and boundedness of ``gamma p^4``.

    The window is ``[p0, 0.8 pmax]`` restricted to nodes with ``gamma`` above
    the floor. Boundedness is judged by growth: ``sup gamma p^4`` on the
    window must stay within ``growth`` times its value at the first window
    node. The ratio of the sup to the median is recorded as well.
    """
    name = "decay"
    grid = kernel.grid
    p, g = grid.nodes, state.gamma
    if p0 is None:
        if mu is None and ev is None:
            raise ValueError("check_decay needs p0, or mu to estimate it")
        ev = ev or evaluate(state, kernel, mu)
        p0 = decay_window_start(ev, kernel)
    values = {"p0": p0}
    if grid.pmax < 2.0 * p0:
        return CheckRecord(name, INCONCLUSIVE, values, max_slope,
                           notes=[f"pmax {grid.pmax:g} < 2 p0 = {2 * p0:.4g}"])
    window = (p >= p0) & (p <= 0.8 * grid.pmax)
    if not np.any(window):
        return CheckRecord(name, INCONCLUSIVE, values, max_slope, notes=["empty fit window"])
    fit = window & (g > GAMMA_FLOOR)
    values["window"] = [float(p[window][0]), float(p[window][-1])]
    values["fit_nodes"] = int(np.count_nonzero(fit))
    if not np.any(fit):
        values.update(value=-math.inf, sup_gamma_p4=0.0)
        return CheckRecord(name, PASS, values, max_slope, notes=["gamma below floor on the whole window"])
    if np.count_nonzero(fit) < 2:
        return CheckRecord(name, INCONCLUSIVE, values, max_slope, notes=["fewer than two nodes above the floor"])
    slope = float(np.polyfit(np.log(p[fit]), np.log(g[fit]), 1)[0])
    scaled = g[fit] * p[fit] ** 4
    i = int(np.argmax(scaled))
    sup = float(scaled[i])
    anchor = float(scaled[0])
    median = float(np.median(scaled))
    values.update(value=slope, sup_gamma_p4=sup, gamma_p4_at_start=anchor,
                  median_gamma_p4=median, sup_over_median=sup / median if median > 0 else math.inf)
    bounded = math.isfinite(sup) and sup <= growth * anchor
    ok = slope <= max_slope and bounded
    notes = [] if bounded else [f"gamma p^4 grows by more than {growth:g}x across the window"]
    idx = np.flatnonzero(fit)[i]
    return CheckRecord(name, PASS if ok else FAIL, values, max_slope, _node(kernel, idx), notes)


def check_el_system(state: State, kernel: ConvolutionKernel, mu: float, ev: Evaluation | None = None,
                    tol: float = 1e-6, tol_rho0: float = 1e-8, sign_tol: float = 1e-10,
                    identity_tol: float = 1e-6) -> CheckRecord:
    """Stationarity conditions of a minimizer.

    (i) ``A > 0``; (ii) ``A^2 - B^2 > 0`` where gamma is above the floor;
    (iii) pure gradient below ``tol``; (iv) ``alpha B <= sign_tol``;
    (v) ``alpha^2 = B^2 / (4 (A^2 - B^2))`` relative to ``1 + alpha^2``;
    (vi) ``|dF/drho0| < tol_rho0`` for ``rho0 > 0``, ``dF/drho0 > -tol_rho0`` at ``rho0 = 0``.
    """
    ev = ev or evaluate(state, kernel, mu)
    d = ev.derivatives
    A, B, a = d.A, d.B, state.alpha
    occupied = state.gamma > GAMMA_FLOOR
    gap = A * A - B * B
    grad = np.abs(a / np.sqrt(0.25 + a * a) * A + B)
    sign = a * B
    defined = occupied & (gap > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ident = np.where(defined, np.abs(a * a - B * B / (4.0 * gap)) / (1.0 + a * a), 0.0)
    drho0 = float(d.dF_drho0)
    rho0_ok = abs(drho0) < tol_rho0 if state.rho0 > 0 else drho0 > -tol_rho0

    def worst(values, mask=None):
        if mask is not None and not np.any(mask):
            return None
        v = np.where(mask, values, -np.inf) if mask is not None else values
        return int(np.argmax(v))

    subs = {}
    i = worst(-A)
    subs["A_positive"] = {"passed": bool(np.all(A > 0)), "value": float(np.min(A)), "threshold": 0.0, "node": i}
    i = worst(-gap, occupied)
    subs["gap_positive"] = {"passed": bool(np.all(gap[occupied] > 0)),
                            "value": float(np.min(gap[occupied])) if i is not None else math.inf,
                            "threshold": 0.0, "node": i}
    i = worst(grad)
    subs["stationarity"] = {"passed": bool(grad[i] < tol), "value": float(grad[i]), "threshold": tol, "node": i}
    i = worst(sign)
    subs["alpha_B_sign"] = {"passed": bool(sign[i] <= sign_tol), "value": float(sign[i]),
                            "threshold": sign_tol, "node": i}
    i = worst(ident)
    subs["alpha_identity"] = {"passed": bool(ident[i] < identity_tol), "value": float(ident[i]),
                              "threshold": identity_tol, "node": i}
    subs["rho0_euler_lagrange"] = {"passed": bool(rho0_ok), "value": drho0, "threshold": tol_rho0, "node": None}

    failed = [k for k, v in subs.items() if not v["passed"]]
    values = {"value": float(grad.max()), "subchecks": subs}
    first = failed[0] if failed else "stationarity"
    node = subs[first]["node"]
    return CheckRecord("el_system", FAIL if failed else PASS, values, tol,
                       None if node is None else _node(kernel, node),
                       [f"{k} fails" for k in failed])


def check_energy_bounds(state: State, kernel: ConvolutionKernel, mu: float, ev: Evaluation | None = None,
                        margin: float = MARGIN) -> CheckRecord:
    """``total < -mu^2 / (2 Vhat(0))`` strictly and ``total >= kinetic + eps (rho0^2 + rho_gamma^2) - C``.

    The strict inequality must hold by ``margin`` times ``max(1, |bound|)``.
    """
    name = "energy_bounds"
    if mu <= 0:
        return CheckRecord(name, SKIPPED, notes=["upper bound applies to mu > 0"])
    ev = ev or evaluate(state, kernel, mu)
    e = ev.energy
    upper = -mu * mu / (2.0 * kernel.spec.vhat0)
    eps, c = lower_bound_constants(kernel.spec, mu)
    lower = e.kinetic + eps * (state.rho0**2 + ev.rho_gamma**2) - c
    scale = max(1.0, abs(upper))
    upper_ok = e.total < upper - margin * scale
    # the lower bound is not strict; allow roundoff of the summed terms
    lower_ok = e.total >= lower - 1e-12 * max(1.0, abs(lower), abs(e.total))
    values = {"value": upper - e.total, "total": e.total, "upper": upper, "lower": lower,
              "eps": eps, "C": c, "upper_ok": upper_ok, "lower_ok": lower_ok}
    notes = []
    if not upper_ok:
        notes.append("total is not strictly below -mu^2 / (2 Vhat(0))")
    if not lower_ok:
        notes.append("explicit lower bound violated")
    return CheckRecord(name, PASS if upper_ok and lower_ok else FAIL, values, margin * scale, notes=notes)


def check_shift_stationarity(state: State, kernel: ConvolutionKernel, mu: float | None = None,
                             ev: Evaluation | None = None, margin: float = MARGIN) -> CheckRecord:
    """``p^2 rho_gamma + rho0 [(Vhat * (gamma +- alpha))(p) - int Vhat (gamma + alpha)] >= -margin`` for ``p <= pmax / 2``."""
    name = "shift_stationarity"
    if (mu is not None and mu <= 0) or _is_vacuum(state):
        return CheckRecord(name, SKIPPED, notes=["applies to mu > 0 minimizers only"])
    ev = ev or evaluate(state, kernel, 0.0 if mu is None else mu)
    p = kernel.grid.nodes
    keep = p <= 0.5 * kernel.grid.pmax
    base = p * p * ev.rho_gamma - state.rho0 * ev.linear_integral
    plus = base + state.rho0 * (ev.conv_gamma + ev.conv_alpha)
    minus = base + state.rho0 * (ev.conv_gamma - ev.conv_alpha)
    both = np.minimum(plus, minus)
    both = np.where(keep, both, np.inf)
    i = int(np.argmin(both))
    value = float(both[i])
    values = {"value": value, "min_plus": float(np.min(plus[keep])), "min_minus": float(np.min(minus[keep]))}
    return CheckRecord(name, PASS if value >= -margin else FAIL, values, -margin, _node(kernel, i))


def check_convexity_slice(lambdas, values, margin: float = MARGIN) -> CheckRecord:
    """Second differences of ``f`` over an ascending, possibly uneven ``lambda`` grid are ``>= -margin * scale``."""
    lam = np.asarray(lambdas, dtype=float)
    f = np.asarray(values, dtype=float)
    if lam.shape != f.shape or lam.ndim != 1:
        raise ValueError("lambdas and values must be 1-D arrays of equal length")
    if lam.size < 3:
        raise ValueError("convexity check needs at least 3 points")
    if np.any(np.diff(lam) <= 0):
        raise ValueError("lambdas must be strictly ascending")
    h0, h1 = lam[1:-1] - lam[:-2], lam[2:] - lam[1:-1]
    # divided second differences scaled back to the spacing of the first pair, so uniform grids give f[i+1] - 2f[i] + f[i-1]
    d2 = 2.0 * ((f[2:] - f[1:-1]) / h1 - (f[1:-1] - f[:-2]) / h0) / (h0 + h1) * h0 * h1
    scale = max(1.0, float(np.max(np.abs(f))))
    i = int(np.argmin(d2))
    value = float(d2[i])
    return CheckRecord("convexity_slice", PASS if value >= -margin * scale else FAIL,
                       {"value": value, "second_differences": d2.tolist()}, -margin * scale,
                       {"index": i + 1, "lambda": float(lam[i + 1])})


# -- suite ----------------------------------------------------------------------

def run_suite(state: State, kernel: ConvolutionKernel, mu: float, convexity: tuple | None = None,
              el_tol: float = 1e-6, rho0_tol: float = 1e-8) -> VerificationReport:
    """Run every check on ``state``; ``convexity`` is an optional ``(lambdas, f values)`` pair."""
    ev = evaluate(state, kernel, mu)
    checks = [
        check_pure_state(state),
        check_condensate_majority(state, kernel, mu, ev),
        check_decay(state, kernel, mu, ev=ev) if mu > 0 and not _is_vacuum(state)
        else CheckRecord("decay", SKIPPED, notes=["no tail to fit"]),
        check_el_system(state, kernel, mu, ev, tol=el_tol, tol_rho0=rho0_tol),
        check_energy_bounds(state, kernel, mu, ev),
        check_shift_stationarity(state, kernel, mu, ev),
    ]
    if convexity is not None:
        checks.append(check_convexity_slice(*convexity))
    return VerificationReport(checks)

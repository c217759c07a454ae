"""Radial interaction potentials given by their Fourier transform.

All momentum integrals use the measure (2 pi)^-3 d^3p, so for a radial
function ``f`` the integral is ``1/(2 pi^2) * int_0^inf p^2 f(p) dp`` and
``int dp Vhat(p)`` equals ``V(0)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

RADIAL_MEASURE = 1.0 / (2.0 * math.pi**2)

# below this ratio min(r, s)/max(r, s) the angular mean is replaced by its limit
_SMALL_RATIO = 1e-7


class AdmissibilityError(ValueError):
    """Raised when a potential violates the hypotheses on V."""


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"
    TABULATED = "tabulated"


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """An admissible radial potential.

    Use :meth:`gaussian`, :meth:`exponential` or :meth:`tabulated` to build
    one; the constructor validates and caches ``vhat0``, ``v0`` and
    ``l2norm``.
    """

    family: Family
    params: dict
    vhat0: float = field(init=False)
    v0: float = field(init=False)
    l2norm: float = field(init=False)
    _table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        if family is Family.TABULATED:
            if self._table is None:
                raise AdmissibilityError("tabulated potential needs a table")
        else:
            for key, value in self.params.items():
                if not (math.isfinite(value) and value > 0):
                    raise AdmissibilityError(f"{family.value} parameter {key} must be positive, got {value}")
        object.__setattr__(self, "vhat0", float(self.vhat(0.0)))
        if not self.vhat0 > 0:
            raise AdmissibilityError("Vhat(0) must be positive (V is not identically zero)")
        v0, l2 = _derived_constants(self)
        if not (math.isfinite(v0) and math.isfinite(l2)):
            raise AdmissibilityError("Vhat is not integrable")
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "l2norm", l2)

    # -- constructors ---------------------------------------------------

    @classmethod
    def gaussian(cls, amplitude: float = 1.0, width: float = 1.0) -> "PotentialSpec":
        """Vhat(p) = amplitude * exp(-width^2 p^2 / 2)."""
        return cls(Family.GAUSSIAN, {"amplitude": float(amplitude), "width": float(width)})

    @classmethod
    def exponential(cls, amplitude: float = 1.0, rate: float = 1.0) -> "PotentialSpec":
        """Vhat(p) = amplitude * exp(-rate |p|)."""
        return cls(Family.EXPONENTIAL, {"amplitude": float(amplitude), "rate": float(rate)})

    @classmethod
    def tabulated(cls, p, values) -> "PotentialSpec":
        """Piecewise-cubic (PCHIP) interpolation of a table, zero past the last node.

        The table must start at p = 0, be strictly ascending and hold finite
        nonnegative values.
        """
        p = np.asarray(p, dtype=float)
        values = np.asarray(values, dtype=float)
        if p.ndim != 1 or p.shape != values.shape or p.size < 2:
            raise AdmissibilityError("table needs two matching 1-D columns with at least 2 rows")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(values))):
            raise AdmissibilityError("table contains non-finite entries")
        if p[0] != 0.0 or np.any(np.diff(p) <= 0):
            raise AdmissibilityError("table momenta must start at 0 and increase strictly")
        if np.any(values < 0):
            raise AdmissibilityError("table contains negative Vhat values")
        table = _build_table(p, values)
        return cls(Family.TABULATED, {"pmax": float(p[-1]), "rows": int(p.size)}, _table=table)

    @classmethod
    def from_table_file(cls, path) -> "PotentialSpec":
        data = np.loadtxt(Path(path), ndmin=2)
        if data.shape[1] != 2:
            raise AdmissibilityError(f"{path}: expected two columns (p, Vhat)")
        return cls.tabulated(data[:, 0], data[:, 1])

    # -- evaluation -----------------------------------------------------

    def vhat(self, p):
        """Evaluate Vhat at momentum magnitude(s) ``p`` (must be >= 0)."""
        p = np.asarray(p, dtype=float)
        if np.any(p < 0) or np.any(np.isnan(p)):
            raise ValueError("momentum magnitude must be nonnegative")
        if self.family is Family.GAUSSIAN:
            a, s = self.params["amplitude"], self.params["width"]
            out = a * np.exp(-0.5 * (s * p) ** 2)
        elif self.family is Family.EXPONENTIAL:
            a, b = self.params["amplitude"], self.params["rate"]
            out = a * np.exp(-b * p)
        else:
            interp, pmax = self._table[0], self._table[2]
            out = np.where(p <= pmax, interp(np.minimum(p, pmax)), 0.0)
            out = np.maximum(out, 0.0)
        return out if out.ndim else float(out)

    def primitive(self, t):
        """W(t) = int_0^t u Vhat(u) du."""
        t = np.asarray(t, dtype=float)
        if self.family is Family.GAUSSIAN:
            a, s = self.params["amplitude"], self.params["width"]
            return -a * np.expm1(-0.5 * (s * t) ** 2) / s**2
        if self.family is Family.EXPONENTIAL:
            a, b = self.params["amplitude"], self.params["rate"]
            return a * (1.0 - np.exp(-b * t) * (1.0 + b * t)) / b**2
        w_interp, pmax = self._table[1], self._table[2]
        return w_interp(np.minimum(t, pmax))

    def angular_mean(self, r, s):
        """Mean of Vhat(|r - s|) over the relative angle of two shells.

        Equals ``(W(r + s) - W(|r - s|)) / (2 r s)``; broadcasts ``r`` and ``s``.
        """
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        lo = np.minimum(r, s)
        hi = np.maximum(r, s)
        small = lo <= _SMALL_RATIO * hi
        if self.family is Family.GAUSSIAN:
            a, w = self.params["amplitude"], self.params["width"]
            x = w * w * r * s
            # sinh(x)/x * exp(-x) written without overflow or cancellation
            shx = np.where(x > 0, -np.expm1(-2.0 * x) / np.where(x > 0, 2.0 * x, 1.0), 1.0)
            return a * np.exp(-0.5 * w * w * (r - s) ** 2) * shx
        with np.errstate(divide="ignore", invalid="ignore"):
            dw = self.primitive(r + s) - self.primitive(np.abs(r - s))
            out = dw / (2.0 * r * s)
        return np.where(small, self.vhat(hi), out)

    def describe(self) -> dict:
        return {"family": self.family.value, **self.params}


def _build_table(p, values):
    interp = PchipInterpolator(p, values, extrapolate=False)
    # cumulative W on a refined copy of the table
    sub = 64
    fine = np.concatenate([np.linspace(a, b, sub, endpoint=False) for a, b in zip(p[:-1], p[1:])] + [p[-1:]])
    integrand = fine * interp(fine)
    w = integrate.cumulative_simpson(integrand, x=fine, initial=0.0)
    w_interp = PchipInterpolator(fine, w, extrapolate=False)
    return interp, w_interp, float(p[-1])


def _derived_constants(spec: PotentialSpec) -> tuple[float, float]:
    if spec.family is Family.GAUSSIAN:
        a, s = spec.params["amplitude"], spec.params["width"]
        v0 = a * (2.0 * math.pi) ** -1.5 / s**3
        l2 = a / (2.0 * math.sqrt(2.0) * math.pi**0.75 * s**1.5)
        return v0, l2
    if spec.family is Family.EXPONENTIAL:
        a, b = spec.params["amplitude"], spec.params["rate"]
        v0 = a / (math.pi**2 * b**3)
        l2 = a / (2.0 * math.sqrt(2.0) * math.pi * b**1.5)
        return v0, l2
    nodes = spec._table[0].x
    v0 = l2sq = 0.0
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        v0 += integrate.quad(lambda q: q * q * spec.vhat(q), lo, hi, epsabs=0, epsrel=1e-12)[0]
        l2sq += integrate.quad(lambda q: q * q * spec.vhat(q) ** 2, lo, hi, epsabs=0, epsrel=1e-12)[0]
    return RADIAL_MEASURE * v0, math.sqrt(RADIAL_MEASURE * l2sq)


def vhat_eval(spec: PotentialSpec, p):
    return spec.vhat(p)


def derived_constants(spec: PotentialSpec) -> tuple[float, float]:
    """Return ``(v0, l2norm)``: int dp Vhat and (int dp Vhat^2)^(1/2)."""
    return spec.v0, spec.l2norm


@dataclass
class AdmissibilityReport:
    nonnegative: bool
    bounded_by_origin: bool
    l1_finite: bool
    l2_finite: bool
    position_space_positive: bool | None
    notes: list[str]

    @property
    def passed(self) -> bool:
        return (self.nonnegative and self.bounded_by_origin and self.l1_finite
                and self.l2_finite and self.position_space_positive is not False)


def check_admissible(spec: PotentialSpec, pmax: float | None = None, samples: int = 4001) -> AdmissibilityReport:
    """Sample-based admissibility report.

    V >= 0 in position space holds analytically for the Gaussian and
    exponential families (their inverse transforms are a Gaussian and
    ``b / (x^2 + b^2)^2`` respectively); for tables it is reported as not
    verified.
    """
    if pmax is None:
        pmax = spec.params.get("pmax", 50.0)
    p = np.linspace(0.0, pmax, samples)
    v = spec.vhat(p)
    notes = []
    nonneg = bool(np.all(v >= 0))
    bounded = bool(np.all(v <= spec.vhat0 * (1 + 1e-12)))
    if spec.family is Family.TABULATED:
        positive = None
        notes.append("V >= 0 not verified for tabulated potentials")
    else:
        positive = True
    if not bounded:
        notes.append("Vhat(p) exceeds Vhat(0) on the sample sweep")
    return AdmissibilityReport(nonneg, bounded, math.isfinite(spec.v0), math.isfinite(spec.l2norm), positive, notes)

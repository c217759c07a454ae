"""Brute-force reference values computed without the package's quadrature or kernel code."""

import math

import numpy as np
from numpy.polynomial.legendre import leggauss

MEASURE3 = (2.0 * math.pi) ** -3


def _gl(n, a, b):
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def radial_integral(f, pmax, n=1_000_000):
    """(2pi)^-3 4pi int_0^pmax p^2 f(p) dp by the composite midpoint rule."""
    h = pmax / n
    p = (np.arange(n) + 0.5) * h
    return MEASURE3 * 4.0 * math.pi * h * float(np.sum(p * p * f(p)))


def gaussian_pair_convolution(p, a, b, amp_v=1.0, amp_g=1.0):
    """(Vhat * g)(p) for Vhat = amp_v exp(-a q^2), g = amp_g exp(-b q^2), absorbed measure."""
    c = a + b
    return amp_v * amp_g * (math.pi / c) ** 1.5 * np.exp(-(a * b / c) * np.asarray(p) ** 2) * MEASURE3


def ball_pair_integral(width=1.0, n=64):
    """(2pi)^-6 int_{|p|<=1} int_{|q|<=1} exp(-width^2 |p - q|^2 / 2) d^3p d^3q.

    Fixes p on the z axis and integrates over (|p|, |q|, cos theta) with
    Gauss-Legendre nodes; the azimuths contribute 4 pi * 2 pi.
    """
    r, wr = _gl(n, 0.0, 1.0)
    c, wc = _gl(n, -1.0, 1.0)
    R, S, C = np.meshgrid(r, r, c, indexing="ij")
    W = wr[:, None, None] * wr[None, :, None] * wc[None, None, :]
    f = np.exp(-0.5 * width**2 * (R * R + S * S - 2.0 * R * S * C)) * R * R * S * S
    return MEASURE3**2 * 4.0 * math.pi * 2.0 * math.pi * float(np.sum(W * f))


def ball_energy(gamma_in, alpha_in, rho0, mu, amplitude=1.0, width=1.0):
    """Energy of gamma = gamma_in, alpha = alpha_in on |p| <= 1 (zero outside) for a Gaussian Vhat."""
    vol = MEASURE3 * 4.0 * math.pi / 3.0
    rho_g = gamma_in * vol
    rho = rho0 + rho_g
    kinetic = gamma_in * MEASURE3 * 4.0 * math.pi / 5.0
    r, wr = _gl(200, 0.0, 1.0)
    int_v = MEASURE3 * 4.0 * math.pi * float(np.sum(wr * r * r * amplitude * np.exp(-0.5 * width**2 * r * r)))
    pair = amplitude * ball_pair_integral(width)
    terms = {
        "kinetic": kinetic,
        "chemical": -mu * rho,
        "hartree": 0.5 * amplitude * rho * rho,
        "linear": rho0 * (gamma_in + alpha_in) * int_v,
        "quad_gamma": 0.5 * gamma_in**2 * pair,
        "quad_alpha": 0.5 * alpha_in**2 * pair,
    }
    terms["total"] = sum(terms.values())
    return terms

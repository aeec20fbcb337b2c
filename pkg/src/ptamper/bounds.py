"""Closed-form bias and poisoning bounds.

None of these clamp their output; callers compare raw values.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ZeroMu

GRID_POINTS = 10_000


def _require_mu(mu: float) -> None:
    if mu <= 0.0:
        raise ZeroMu("bound undefined for mu = 0")


def tampering_bound(mu: float, moment_1p: float, p: float) -> float:
    """``mu^-p * E[f^(1+p)]``, the bias guaranteed by rejection sampling."""
    _require_mu(mu)
    if moment_1p == 0.0:
        return 0.0
    return moment_1p / mu**p if mu**p > 0.0 else math.exp(math.log(moment_1p) - p * math.log(mu))


def boolean_bound(mu: float, p: float) -> float:
    """``mu^(1-p)``: :func:`tampering_bound` for 0/1-valued objectives."""
    _require_mu(mu)
    return mu ** (1.0 - p)


@dataclass(frozen=True)
class JensenGap:
    sharp: float  # p(p+1) nu / (2 mu^p)
    weak: float  # (p/2) nu


def jensen_gap_bound(mu: float, nu: float, p: float) -> JensenGap:
    """Variance lower bounds on ``tampering_bound(...) - mu``."""
    _require_mu(mu)
    return JensenGap(p * (p + 1.0) * nu / (2.0 * mu**p), 0.5 * p * nu)


def mpp_confidence_bound(conf: float, p: float, k: int, m: int, eps: float) -> float:
    """Upper bound ``(1 - p k/m) Conf + eps`` on confidence under attack."""
    return (1.0 - p * k / m) * conf + eps


def mpp_error_bound(err: float, nu: float, p: float, k: int, m: int, eps: float) -> float:
    return err + p * k / (2.0 * m) * nu - eps


def mpp_targeted_bound(err_d: float, p: float, k: int, m: int, eps: float) -> float:
    return err_d + p * k / m * (1.0 - err_d) - eps


def law_moments(values: Sequence[float], probs: Sequence[float], p: float) -> tuple[float, float, float]:
    """``(mu, nu, E[a^(1+p)])`` of a finite law on [0, 1]."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(probs, dtype=float)
    mu = float(np.dot(w, v))
    nu = float(np.dot(w, (v - mu) ** 2))
    return mu, nu, float(np.dot(w, v ** (1.0 + p)))


def jensen_gap_generic(
    phi: Callable[[np.ndarray], np.ndarray],
    dphi: Callable[[float], float],
    law: Sequence[tuple[float, float]],
    d2phi: Optional[Callable[[float], float]] = None,
    grid: int = GRID_POINTS,
) -> tuple[float, float]:
    """Jensen gap of a finite law on [0, 1] and its variance lower bound.

    Returns ``(E[phi(a)] - phi(mu), Var[a] * inf_x h(x))`` where
    ``h(x) = (phi(x) - phi(mu)) / (x - mu)^2 - phi'(mu) / (x - mu)``.
    The infimum is taken over a uniform grid plus the removable point
    ``x = mu``, where ``h`` tends to ``phi''(mu) / 2``. Without ``d2phi`` that
    limit is estimated by a central difference of ``dphi``.
    """
    vals = np.array([a for a, _ in law], dtype=float)
    probs = np.array([q for _, q in law], dtype=float)
    mu = float(np.dot(probs, vals))
    nu = float(np.dot(probs, (vals - mu) ** 2))
    phi_mu = float(phi(np.array([mu]))[0])
    gap = float(np.dot(probs, phi(vals))) - phi_mu
    if nu == 0.0:
        return gap, 0.0
    xs = np.linspace(0.0, 1.0, grid)
    # near mu the difference quotient cancels badly; the limit value covers that band
    xs = xs[np.abs(xs - mu) > 1e-3]
    d = xs - mu
    h = (phi(xs) - phi_mu - dphi(mu) * d) / d**2
    if d2phi is not None:
        limit = 0.5 * d2phi(mu)
    else:
        step = 1e-5
        limit = 0.5 * (dphi(mu + step) - dphi(mu - step)) / (2 * step)
    inf_h = min(float(np.min(h)), limit)
    return gap, nu * inf_h


def power_phi(p: float):
    """``phi(x) = x^(1+p)`` with its first two derivatives."""

    def phi(x):
        return np.power(x, 1.0 + p)

    def dphi(x):
        return (1.0 + p) * x**p

    def d2phi(x):
        return p * (1.0 + p) * x ** (p - 1.0) if x > 0 else math.inf

    return phi, dphi, d2phi

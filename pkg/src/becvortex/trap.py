"""Anisotropic homogeneous trap V = (x^2 + lambda^2 y^2)^(s/2) and its Thomas-Fermi quantities.

The flat trap (s -> infinity) is an explicit variant: ``s=math.inf`` means V = 0
inside the unit ellipse x^2 + lambda^2 y^2 < 1 and V = +inf outside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

FLAT = math.inf

DEFAULT_QUADRATURE_RESOLUTION = 512


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


def _check_params(s: float, lam: float) -> None:
    if not (s >= 2.0):
        raise DomainError(f"trap slope s must satisfy s >= 2 (got {s!r})")
    if not (0.0 < lam <= 1.0):
        raise DomainError(f"anisotropy lambda must lie in (0, 1] (got {lam!r})")


def is_flat(s: float) -> bool:
    return math.isinf(s)


def chemical_potential_closed_form(s: float, lam: float) -> float:
    _check_params(s, lam)
    if is_flat(s):
        return 2.0 * lam / math.pi
    return ((s + 2.0) / s * 2.0 * lam / math.pi) ** (s / (s + 2.0))


def tf_mass(mu: float, s: float, lam: float) -> float:
    """Integral of 0.5*[mu - V]_+ over the plane, by 1D radial quadrature.

    Uses the substitution y' = lambda*y, which maps D onto a disc of radius
    mu^(1/s) with Jacobian 1/lambda.
    """
    if mu <= 0.0:
        return 0.0
    if is_flat(s):
        return 0.5 * mu * math.pi / lam
    radius = mu ** (1.0 / s)
    val, _ = integrate.quad(lambda r: 0.5 * (mu - r**s) * r, 0.0, radius,
                            epsabs=1e-15, epsrel=1e-13)
    return 2.0 * math.pi * val / lam


@lru_cache(maxsize=256)
def chemical_potential_bisection(s: float, lam: float, xtol: float = 1e-14) -> float:
    """Solve tf_mass(mu) = 1 for mu by bisection (independent of the closed form)."""
    _check_params(s, lam)
    hi = 1.0
    while tf_mass(hi, s, lam) < 1.0:
        hi *= 2.0
    return optimize.bisect(lambda m: tf_mass(m, s, lam) - 1.0, 0.0, hi,
                           xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


@lru_cache(maxsize=256)
def chemical_potential(s: float, lam: float) -> float:
    """TF chemical potential mu fixed by unit normalization of the TF density.

    Returns the closed form ((s+2)/s * 2 lambda/pi)^(s/(s+2)) once the bisection
    oracle agrees with it. Note mu exceeds 1 for the harmonic trap at
    lambda close to 1 (mu = sqrt(4/pi) at lambda = 1).
    """
    closed = chemical_potential_closed_form(s, lam)
    oracle = chemical_potential_bisection(s, lam)
    if abs(closed - oracle) > 1e-10 * max(1.0, closed):
        raise ArithmeticError(
            f"closed-form mu={closed!r} disagrees with normalization oracle mu={oracle!r}")
    return closed


@dataclass(frozen=True)
class TrapParams:
    s: float
    lam: float
    mu: float = field(init=False)

    def __post_init__(self):
        _check_params(self.s, self.lam)
        object.__setattr__(self, "mu", chemical_potential(float(self.s), float(self.lam)))

    @classmethod
    def flat(cls, lam: float = 1.0) -> "TrapParams":
        return cls(FLAT, lam)

    @property
    def is_flat(self) -> bool:
        return is_flat(self.s)

    @property
    def semi_axis_x(self) -> float:
        return 1.0 if self.is_flat else self.mu ** (1.0 / self.s)

    @property
    def semi_axis_y(self) -> float:
        return self.semi_axis_x / self.lam

    @property
    def mu_pow(self) -> float:
        """mu^((s+2)/s), which tends to mu for the flat trap."""
        return self.mu if self.is_flat else self.mu ** ((self.s + 2.0) / self.s)

    @property
    def mu_2s(self) -> float:
        """mu^(2/s), which tends to 1 for the flat trap."""
        return 1.0 if self.is_flat else self.mu ** (2.0 / self.s)

    @property
    def s_ratio(self) -> float:
        """s/(s+2), which tends to 1 for the flat trap."""
        return 1.0 if self.is_flat else self.s / (self.s + 2.0)

    def label(self) -> str:
        return "flat" if self.is_flat else repr(float(self.s))


@dataclass(frozen=True)
class TfDomain:
    trap: TrapParams
    inner_margin: float

    @property
    def semi_axis_x(self) -> float:
        return self.trap.semi_axis_x

    @property
    def semi_axis_y(self) -> float:
        return self.trap.semi_axis_y

    def contains(self, x, y):
        return tf_density(x, y, self.trap) > 0.0

    def in_inner(self, x, y):
        """Membership of D^in = {V <= mu - inner_margin}."""
        return potential_value(x, y, self.trap) <= self.trap.mu - self.inner_margin


def tf_domain(trap: TrapParams, epsilon: float | None = None,
              default_margin_fraction: float = 0.05) -> TfDomain:
    margin = epsilon ** (1.0 / 3.0) if epsilon is not None else default_margin_fraction * trap.mu
    return TfDomain(trap, margin)


def _quadratic_form(x, y, lam):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x * x + lam * lam * y * y


def potential_value(x, y, trap: TrapParams):
    q = _quadratic_form(x, y, trap.lam)
    if trap.is_flat:
        # boundary value is the s -> inf limit 1^(s/2) = 1
        out = np.where(q < 1.0, 0.0, np.where(q == 1.0, 1.0, np.inf))
    else:
        out = q ** (trap.s / 2.0)
    return out[()] if out.ndim == 0 else out


def b_function(x, y, trap: TrapParams):
    """Signed density 0.5*(mu - V); its positive part is the TF density."""
    return 0.5 * (trap.mu - potential_value(x, y, trap))


def tf_density(x, y, trap: TrapParams):
    out = np.maximum(b_function(x, y, trap), 0.0)
    return out[()] if np.ndim(out) == 0 else out


def _gauss_nodes(k: int):
    t, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * (t + 1.0), 0.5 * w


def tf_integral(trap: TrapParams, resolution: int = DEFAULT_QUADRATURE_RESOLUTION,
                cell_order: int = 2, boundary_samples: int = 8) -> float:
    """Integral of the TF density on a uniform cell grid over the bounding box of D.

    Cells fully inside D use a tensor Gauss rule of ``cell_order`` points per
    axis. Cells straddling the boundary are integrated column by column: the
    cell is sampled at ``boundary_samples`` Gauss abscissae in x, and on each
    sample column the part of the column lying inside D is found exactly and
    integrated with the same Gauss rule in y. For the flat trap this weights
    every straddling cell by its inside fraction.
    """
    if resolution < 2:
        raise DomainError("quadrature resolution must be at least 2 cells per axis")
    a, b = trap.semi_axis_x, trap.semi_axis_y
    lam = trap.lam
    n = int(resolution)
    hx, hy = 2.0 * a / n, 2.0 * b / n
    xe = -a + hx * np.arange(n + 1)
    ye = -b + hy * np.arange(n + 1)

    x0, x1 = xe[:-1, None], xe[1:, None]
    y0, y1 = ye[None, :-1], ye[None, 1:]
    # max/min of q over each cell, q = x^2 + lam^2 y^2
    qmax = np.maximum(x0**2, x1**2) + lam**2 * np.maximum(y0**2, y1**2)
    cx = np.clip(0.0, x0, x1)
    cy = np.clip(0.0, y0, y1)
    qmin = cx**2 + lam**2 * cy**2
    r2 = a * a
    inside = qmax < r2
    straddle = (~inside) & (qmin < r2)

    tk, wk = _gauss_nodes(cell_order)
    total = 0.0
    ii, jj = np.nonzero(inside)
    if ii.size:
        X = xe[ii][:, None, None] + hx * tk[None, :, None]
        Y = ye[jj][:, None, None] + hy * tk[None, None, :]
        vals = tf_density(X, Y, trap)
        total += float(np.sum(vals * wk[None, :, None] * wk[None, None, :])) * hx * hy

    ts, ws = _gauss_nodes(boundary_samples)
    ii, jj = np.nonzero(straddle)
    if ii.size:
        X = xe[ii][:, None] + hx * ts[None, :]                    # (m, k)
        half = np.sqrt(np.maximum(r2 - X**2, 0.0)) / lam          # column half-chord
        lo = np.maximum(ye[jj][:, None], -half)
        hi = np.minimum(ye[jj + 1][:, None], half)
        length = np.maximum(hi - lo, 0.0)
        Y = lo[:, :, None] + length[:, :, None] * tk[None, None, :]
        if trap.is_flat:
            col = 0.5 * trap.mu * length
        else:
            vals = 0.5 * (trap.mu - _quadratic_form(X[:, :, None], Y, lam) ** (trap.s / 2.0))
            col = np.sum(np.maximum(vals, 0.0) * wk, axis=2) * length
        total += float(np.sum(col * ws[None, :])) * hx
    return total


def tf_normalization_residual(trap: TrapParams,
                              resolution: int = DEFAULT_QUADRATURE_RESOLUTION) -> float:
    return abs(tf_integral(trap, resolution) - 1.0)

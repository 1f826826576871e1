"""Stream function chi and vortex-free phase S of the rotating TF condensate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trap import DomainError, TrapParams, potential_value, tf_density, tf_domain


@dataclass(frozen=True)
class FlowField:
    trap: TrapParams
    omega: float

    def chi(self, x, y):
        return chi(x, y, self.trap)

    def phase(self, x, y):
        return phase_S(x, y, self.trap, self.omega)


def chi(x, y, trap: TrapParams):
    """Closed-form stream function; positive inside D, zero on its boundary and outside."""
    lam, mu = trap.lam, trap.mu
    q = np.asarray(x, dtype=float) ** 2 + lam**2 * np.asarray(y, dtype=float) ** 2
    if trap.is_flat:
        out = np.where(q < 1.0, 0.5 * mu * (1.0 - q), 0.0) / (1.0 + lam**2)
    else:
        s = trap.s
        poly = (q ** ((s + 2.0) / 2.0) / (s + 2.0) - 0.5 * mu * q
                + s * trap.mu_pow / (2.0 * (s + 2.0))) / (1.0 + lam**2)
        # the polynomial turns positive again beyond the boundary
        out = np.where(q < trap.mu_2s, poly, 0.0)
    return out[()] if np.ndim(out) == 0 else out


def chi_at_origin(trap: TrapParams) -> float:
    return 0.5 * trap.s_ratio * trap.mu_pow / (1.0 + trap.lam**2)


def chi_bound_rhs(x, y, trap: TrapParams):
    rho = tf_density(x, y, trap)
    if trap.is_flat:
        return rho / (1.0 + trap.lam**2)
    s = trap.s
    return s * 2.0 ** (2.0 / s) / (s + 2.0) * rho ** ((2.0 + s) / s) / (1.0 + trap.lam**2)


def chi_bound_check(x, y, trap: TrapParams, atol: float = 1e-12):
    """Return (chi, bound, holds) for the upper bound of chi by a power of the TF density."""
    lhs = chi(x, y, trap)
    rhs = chi_bound_rhs(x, y, trap)
    return lhs, rhs, lhs <= rhs + atol


def phase_S(x, y, trap: TrapParams, omega: float):
    """Vortex-free phase ((lambda^2-1)/(lambda^2+1)) * Omega * x * y; independent of s."""
    lam = trap.lam
    return (lam**2 - 1.0) / (lam**2 + 1.0) * omega * np.asarray(x, dtype=float) * np.asarray(y, dtype=float)


def phase_S_gradient(x, y, trap: TrapParams, omega: float):
    k = (trap.lam**2 - 1.0) / (trap.lam**2 + 1.0) * omega
    return k * np.asarray(y, dtype=float), k * np.asarray(x, dtype=float)


def _residual_grid(trap: TrapParams, resolution: int):
    """Node-centred grid with ``resolution`` cells across each axis of D."""
    a, b = trap.semi_axis_x, trap.semi_axis_y
    n = int(resolution)
    x = -a + (2.0 * a / n) * np.arange(n + 1)
    y = -b + (2.0 * b / n) * np.arange(n + 1)
    return x, y, 2.0 * a / n, 2.0 * b / n


def _stencil_mask(trap: TrapParams, X, Y, margin: float):
    """Interior nodes of D^in whose four neighbours all lie strictly inside D."""
    inner = potential_value(X, Y, trap) <= trap.mu - margin
    inside = tf_density(X, Y, trap) > 0.0
    return (inner[1:-1, 1:-1] & inside[2:, 1:-1] & inside[:-2, 1:-1]
            & inside[1:-1, 2:] & inside[1:-1, :-2])


def chi_pde_residual(trap: TrapParams, resolution: int, margin: float | None = None,
                     epsilon: float | None = None) -> float:
    """Max over grid nodes of D^in of |div(grad chi / rho_TF) + 2|.

    Conservative 5-point stencil: fluxes through cell faces use the face
    average of 1/rho_TF at the two adjacent nodes. ``resolution`` counts grid
    cells across each axis of the bounding box of D.
    """
    if margin is None:
        margin = tf_domain(trap, epsilon).inner_margin
    x, y, hx, hy = _residual_grid(trap, resolution)
    X, Y = np.meshgrid(x, y, indexing="ij")
    mask = _stencil_mask(trap, X, Y, margin)
    # x is the short axis because lambda <= 1
    short = int(np.max(np.sum(mask, axis=0))) if mask.size else 0
    if short < 32:
        raise DomainError(
            f"resolution too coarse: {short} interior points across the short axis (need >= 32)")

    c = chi(X, Y, trap)
    rho = tf_density(X, Y, trap)
    inv = 1.0 / np.where(rho > 0.0, rho, np.nan)
    ci = c[1:-1, 1:-1]
    ii = inv[1:-1, 1:-1]
    fe = 0.5 * (ii + inv[2:, 1:-1]) * (c[2:, 1:-1] - ci)
    fw = 0.5 * (ii + inv[:-2, 1:-1]) * (ci - c[:-2, 1:-1])
    fn = 0.5 * (ii + inv[1:-1, 2:]) * (c[1:-1, 2:] - ci)
    fs = 0.5 * (ii + inv[1:-1, :-2]) * (ci - c[1:-1, :-2])
    div = (fe - fw) / hx**2 + (fn - fs) / hy**2
    return float(np.max(np.abs(div + 2.0)[mask]))


def defining_relation_residual(trap: TrapParams, omega: float, resolution: int,
                               margin: float | None = None) -> float:
    """Max over D^in of |rho (grad S - Omega x r) - Omega grad_perp chi| with centered differences."""
    if margin is None:
        margin = tf_domain(trap).inner_margin
    x, y, hx, hy = _residual_grid(trap, resolution)
    X, Y = np.meshgrid(x, y, indexing="ij")
    mask = _stencil_mask(trap, X, Y, margin)
    S = phase_S(X, Y, trap, omega)
    c = chi(X, Y, trap)
    rho = tf_density(X, Y, trap)[1:-1, 1:-1]
    Xi, Yi = X[1:-1, 1:-1], Y[1:-1, 1:-1]
    Sx = (S[2:, 1:-1] - S[:-2, 1:-1]) / (2 * hx)
    Sy = (S[1:-1, 2:] - S[1:-1, :-2]) / (2 * hy)
    cx = (c[2:, 1:-1] - c[:-2, 1:-1]) / (2 * hx)
    cy = (c[1:-1, 2:] - c[1:-1, :-2]) / (2 * hy)
    # Omega x r = Omega (-y, x); grad_perp chi = (-chi_y, chi_x)
    rx = rho * (Sx + omega * Yi) + omega * cy
    ry = rho * (Sy - omega * Xi) - omega * cx
    return float(np.max(np.hypot(rx, ry)[mask]))

"""Vortex energies: Coulomb-like interaction W, renormalized energy w, and GP energy deltas.

Positions passed as ``raw`` are in scaled trap coordinates (x, y). ``tilde``
positions are the rescaled pattern coordinates (x sqrt(Omega), y lambda sqrt(Omega)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flow import chi
from .ladder import ScalingContext, omega_n
from .trap import DomainError, TrapParams, potential_value, tf_density

MIN_SEPARATION = 1e-9


class CollisionError(ValueError):
    """Two vortices coincide, so a logarithmic term is singular."""


def _as_points(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 2)
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != 2:
        raise ValueError(f"positions must have shape (n, 2), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class VortexConfig:
    positions: np.ndarray
    windings: tuple[int, ...] = ()

    def __post_init__(self):
        pos = _as_points(self.positions)
        object.__setattr__(self, "positions", pos)
        w = tuple(int(d) for d in self.windings) if len(self.windings) else (1,) * len(pos)
        if len(w) != len(pos):
            raise ValueError("one winding number per vortex is required")
        object.__setattr__(self, "windings", w)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def single_quantized(self) -> bool:
        return all(d == 1 for d in self.windings)

    def min_separation(self) -> float:
        return min_separation(self.positions)

    def raw_positions(self, omega: float, trap: TrapParams) -> np.ndarray:
        return inverse_tilde(self.positions, omega, trap)

    def inside_domain(self, omega: float, trap: TrapParams) -> bool:
        raw = self.raw_positions(omega, trap)
        return bool(np.all(tf_density(raw[:, 0], raw[:, 1], trap) > 0.0)) if self.n else True

    def __eq__(self, other):
        return (isinstance(other, VortexConfig) and self.windings == other.windings
                and np.array_equal(self.positions, other.positions))

    __hash__ = None


@dataclass(frozen=True)
class EnergyBreakdown:
    n: int
    core_term: float
    ladder_term: float
    w_term: float
    total_delta: float
    unknown_offset: bool = True

    def as_dict(self) -> dict:
        return {"n": self.n, "core_term": self.core_term, "ladder_term": self.ladder_term,
                "w_term": self.w_term, "total_delta": self.total_delta,
                "unknown_offset": self.unknown_offset}


def min_separation(points) -> float:
    p = _as_points(points)
    if len(p) < 2:
        return math.inf
    d = p[:, None, :] - p[None, :, :]
    r = np.hypot(d[..., 0], d[..., 1])
    r[np.diag_indices(len(p))] = np.inf
    return float(r.min())


def tilde_transform(raw, omega: float, trap: TrapParams) -> np.ndarray:
    if not omega > 0:
        raise DomainError(f"Omega must be positive for the tilde transform (got {omega!r})")
    p = _as_points(raw)
    k = math.sqrt(omega)
    return np.column_stack([p[:, 0] * k, p[:, 1] * trap.lam * k])


def inverse_tilde(tilde, omega: float, trap: TrapParams) -> np.ndarray:
    if not omega > 0:
        raise DomainError(f"Omega must be positive for the tilde transform (got {omega!r})")
    p = _as_points(tilde)
    k = math.sqrt(omega)
    return np.column_stack([p[:, 0] / k, p[:, 1] / (trap.lam * k)])


def interaction_W(raw, windings, trap: TrapParams) -> float:
    """-pi * sum_{i != j} d_i d_j ln|r_i - r_j| rho_TF(r_i) (ordered pairs)."""
    p = _as_points(raw)
    n = len(p)
    if n < 2:
        return 0.0
    d = np.asarray(windings, dtype=float)
    if min_separation(p) <= MIN_SEPARATION:
        raise CollisionError("coincident vortex positions")
    rho = tf_density(p[:, 0], p[:, 1], trap)
    diff = p[:, None, :] - p[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(r, 1.0)
    terms = d[:, None] * d[None, :] * np.log(r) * rho[:, None]
    return float(-math.pi * terms.sum())


def _pair_logs(tilde: np.ndarray, lam: float) -> np.ndarray:
    diff = tilde[:, None, :] - tilde[None, :, :]
    dist2 = diff[..., 0] ** 2 + diff[..., 1] ** 2 / lam**2
    np.fill_diagonal(dist2, 1.0)
    return np.log(dist2)


def renormalized_w(positions, omega: float, trap: TrapParams, windings=None) -> float:
    """Renormalized vortex energy w in tilde coordinates (windings must all equal 1)."""
    if isinstance(positions, VortexConfig):
        windings = positions.windings
        positions = positions.positions
    X = _as_points(positions)
    if windings is not None and any(int(d) != 1 for d in windings):
        raise DomainError("renormalized energy is only valid for singly quantized vortices")
    if len(X) >= 2 and min_separation(X) <= MIN_SEPARATION:
        raise CollisionError("coincident vortex positions")
    mu, lam = trap.mu, trap.lam
    R = np.sum(X**2, axis=1)
    w = -0.25 * math.pi * mu * float(_pair_logs(X, lam).sum()) if len(X) >= 2 else 0.0
    w += math.pi * mu / (1.0 + lam**2) * float(R.sum())
    w -= drift_coefficient(omega, trap) * float(np.sum(R ** (trap.s / 2.0))) if not trap.is_flat else 0.0
    return w


def drift_coefficient(omega: float, trap: TrapParams) -> float:
    """pi ln(Omega) / (4 Omega^(s/2)); zero for the flat trap."""
    if trap.is_flat:
        return 0.0
    return math.pi * math.log(omega) / (4.0 * omega ** (trap.s / 2.0))


def w_decomposition(raw, omega: float, trap: TrapParams) -> dict:
    """Split W(raw) into the ln(Omega) ladder piece, tilde-coordinate piece and remainder.

    ``remainder`` is the exact rest, W - leading - tilde_part, which vanishes
    like ln(Omega)/Omega^(s/2) when the tilde positions are held fixed.
    """
    p = _as_points(raw)
    n = len(p)
    W = interaction_W(p, [1] * n, trap)
    leading = 0.25 * math.pi * trap.mu * n * (n - 1) * math.log(omega)
    X = tilde_transform(p, omega, trap)
    tilde_part = -0.25 * math.pi * trap.mu * float(_pair_logs(X, trap.lam).sum()) if n >= 2 else 0.0
    return {"W": W, "leading": leading, "tilde_part": tilde_part,
            "remainder": W - leading - tilde_part}


def w_remainder_closed_form(tilde, omega: float, trap: TrapParams) -> float:
    """Remainder of the W decomposition written out in tilde coordinates."""
    X = _as_points(tilde)
    n = len(X)
    if n < 2 or trap.is_flat:
        return 0.0
    Rs = np.sum(X**2, axis=1) ** (trap.s / 2.0)
    L = _pair_logs(X, trap.lam)
    np.fill_diagonal(L, 0.0)
    om = omega ** (trap.s / 2.0)
    return float(-0.25 * math.pi * math.log(omega) / om * (n - 1) * Rs.sum()
                 + 0.25 * math.pi / om * np.sum(L * Rs[:, None]))


def single_vortex_delta(omega: float, ctx: ScalingContext) -> float:
    """Energy change for one unit vortex at the origin; zero exactly at Omega_1."""
    t = ctx.trap
    return (0.5 * math.pi * t.mu * ctx.log_eps
            - math.pi * t.s_ratio * t.mu_pow * omega / (1.0 + t.lam**2))


def core_term(n: int, omega: float, ctx: ScalingContext) -> float:
    t = ctx.trap
    return 0.5 * math.pi * t.mu * n * (
        ctx.log_eps - 2.0 * t.s_ratio * t.mu_2s * omega / (1.0 + t.lam**2))


def ladder_term(n: int, omega: float, trap: TrapParams) -> float:
    return 0.25 * math.pi * trap.mu * n * (n - 1) * math.log(omega)


def gp_energy_delta(config: VortexConfig, omega: float, ctx: ScalingContext) -> EnergyBreakdown:
    """Known terms of the GP energy relative to the vortex-free state.

    The additive constant of the expansion is unknown; it cancels only between
    configurations with the same vortex count.
    """
    n = config.n
    if n == 0:
        return EnergyBreakdown(0, 0.0, 0.0, 0.0, 0.0)
    if not omega > 0:
        raise DomainError(f"Omega must be positive (got {omega!r})")
    core = core_term(n, omega, ctx)
    ladder = ladder_term(n, omega, ctx.trap)
    w = renormalized_w(config, omega, ctx.trap)
    return EnergyBreakdown(n, core, ladder, w, core + ladder + w)


# ---------------------------------------------------------------------------
# winding-number check


@dataclass(frozen=True)
class QuantizationReport:
    single_quantized: bool
    in_regime: bool
    alpha_threshold: float | None
    holds_for_all_alpha: bool
    alpha_dependent: bool
    vortices: list[dict] = field(default_factory=list)

    @property
    def passes(self) -> bool:
        return self.single_quantized or self.holds_for_all_alpha


def _split_positions(center, d: int, radius: float) -> np.ndarray:
    ang = 2.0 * math.pi * np.arange(d) / d
    return np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)])


def vortex_lower_bound(raw, windings, omega: float, ctx: ScalingContext, alpha: float) -> float:
    """Lower bound of the vortex energy G - R for cores of radius eps^alpha (constant dropped)."""
    p = _as_points(raw)
    d = np.asarray(windings, dtype=float)
    rho = tf_density(p[:, 0], p[:, 1], ctx.trap)
    c = chi(p[:, 0], p[:, 1], ctx.trap)
    L = ctx.log_eps
    core = math.pi * L * rho * (alpha * d**2 + (1.0 - alpha) * np.abs(d))
    rot = -2.0 * math.pi * omega * d * c
    return float(np.sum(core + rot)) + interaction_W(p, d, ctx.trap)


def vortex_upper_bound(raw, omega: float, ctx: ScalingContext) -> float:
    """Upper bound of G - R for singly quantized vortices at ``raw`` (constant dropped)."""
    p = _as_points(raw)
    rho = tf_density(p[:, 0], p[:, 1], ctx.trap)
    c = chi(p[:, 0], p[:, 1], ctx.trap)
    return float(np.sum(math.pi * ctx.log_eps * rho - 2.0 * math.pi * omega * c)) + \
        interaction_W(p, [1] * len(p), ctx.trap)


def single_quantization_check(config: VortexConfig, omega: float, ctx: ScalingContext,
                              split_radius: float | None = None) -> QuantizationReport:
    """Can a multiply quantized (or negative) vortex beat its singly quantized alternative?

    Each vortex with d >= 2 is compared, through the core-size dependent lower
    bound, against d unit vortices on a small regular polygon (radius
    ``split_radius``, default 1/sqrt(Omega) in raw units) around the same point,
    evaluated with the upper bound. The lower bound is linear in the core
    exponent alpha, so the report gives the smallest alpha in (0, 1) above
    which the split configuration is cheaper. Vortices with d <= -1 are compared
    against removing them, which is always cheaper because their rotation term
    is positive.
    """
    raw = config.raw_positions(omega, ctx.trap)
    windings = list(config.windings)
    total = sum(abs(d) for d in windings)
    in_regime = omega <= omega_n(max(total, 1) + 1, ctx)
    if split_radius is None:
        split_radius = 1.0 / math.sqrt(omega)

    entries = []
    thresholds = []
    for i, d in enumerate(windings):
        others = [j for j in range(len(windings)) if j != i]
        base_pos = raw[others]
        base_d = [windings[j] for j in others]
        entry = {"index": i, "winding": d, "position": raw[i].tolist()}
        if d == 1:
            entry["verdict"] = "single"
        elif d <= -1:
            rot = -2.0 * math.pi * omega * d * float(chi(raw[i, 0], raw[i, 1], ctx.trap))
            entry["rotation_term"] = rot
            entry["verdict"] = "unfavorable" if rot > 0 else "undetermined"
            thresholds.append(0.0 if rot > 0 else 1.0)
        elif d == 0:
            entry["verdict"] = "none"
        else:
            split = _split_positions(raw[i], d, split_radius)
            pos_split = np.vstack([base_pos, split]) if len(base_pos) else split
            upper = vortex_upper_bound(pos_split, omega, ctx) if all(b == 1 for b in base_d) \
                else vortex_lower_bound(pos_split, base_d + [1] * d, omega, ctx, 1.0)
            pos_multi = np.vstack([base_pos, raw[i:i + 1]]) if len(base_pos) else raw[i:i + 1]
            lo0 = vortex_lower_bound(pos_multi, base_d + [d], omega, ctx, 0.0)
            lo1 = vortex_lower_bound(pos_multi, base_d + [d], omega, ctx, 1.0)
            slope = lo1 - lo0
            alpha_star = (upper - lo0) / slope if slope > 0 else math.inf
            entry.update({"split_upper": upper, "multi_lower_alpha0": lo0,
                          "multi_lower_alpha1": lo1, "alpha_threshold": alpha_star})
            entry["verdict"] = "split_favored" if alpha_star < 1.0 else "undetermined"
            thresholds.append(alpha_star)
        entries.append(entry)

    threshold = max(thresholds) if thresholds else None
    holds_all = threshold is not None and threshold <= 0.0
    alpha_dep = threshold is not None and 0.0 < threshold < 1.0
    return QuantizationReport(
        single_quantized=all(d == 1 for d in windings),
        in_regime=in_regime,
        alpha_threshold=None if threshold is None else max(threshold, 0.0),
        holds_for_all_alpha=holds_all or all(d == 1 for d in windings),
        alpha_dependent=alpha_dep,
        vortices=entries,
    )


def config_inside_domain(tilde, omega: float, trap: TrapParams) -> bool:
    raw = inverse_tilde(tilde, omega, trap)
    return bool(np.all(potential_value(raw[:, 0], raw[:, 1], trap) < trap.mu))

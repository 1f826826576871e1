"""Critical angular velocities, frame scaling and vortex-count prediction.

All predictions are leading order in epsilon; the unknown O(1) offsets in the
energy expansion are not modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .trap import DomainError, TrapParams, chemical_potential

DEFAULT_DELTA = 0.1
EPSILON_MAX = math.exp(-1.0)


@dataclass(frozen=True)
class ScalingContext:
    epsilon: float
    trap: TrapParams
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not (0.0 < self.epsilon < EPSILON_MAX):
            raise DomainError(
                f"epsilon must lie in (0, 1/e) so that ln|ln eps| > 0 (got {self.epsilon!r})")
        if not (0.0 < self.delta < 0.5):
            raise DomainError(f"delta must lie in (0, 0.5) (got {self.delta!r})")

    @property
    def log_eps(self) -> float:
        """|ln eps|"""
        return -math.log(self.epsilon)

    @property
    def loglog_eps(self) -> float:
        """ln|ln eps|"""
        return math.log(self.log_eps)


@dataclass(frozen=True)
class OmegaLadder:
    c1: float
    omega_n: list[float] = field(default_factory=list)
    omega_local_stability: float | None = None

    def spacing(self) -> list[float]:
        return [b - a for a, b in zip(self.omega_n, self.omega_n[1:])]


@dataclass(frozen=True)
class VortexCountPrediction:
    count: int | None = None
    band: tuple[int, int] | None = None

    @property
    def determinate(self) -> bool:
        return self.count is not None

    def as_dict(self) -> dict:
        if self.determinate:
            return {"count": self.count}
        return {"transition_band": list(self.band)}


def epsilon_from_physical(n_particles: float, scattering_length: float, thickness: float,
                          hbar: float = 1.0, mass: float = 1.0) -> float:
    """Dimensionless coupling eps = sqrt(hbar^2 / (sqrt(2 pi) N g m)).

    The 2D coupling constant is g = sqrt(8 pi) hbar^2 a / (m h).
    """
    for name, v in (("N", n_particles), ("a", scattering_length), ("h", thickness),
                    ("hbar", hbar), ("m", mass)):
        if not v > 0:
            raise DomainError(f"{name} must be positive (got {v!r})")
    g = math.sqrt(8.0 * math.pi) * hbar**2 * scattering_length / (mass * thickness)
    return epsilon_from_coupling(n_particles * g, hbar, mass)


def epsilon_from_coupling(n_times_g: float, hbar: float = 1.0, mass: float = 1.0) -> float:
    if not n_times_g > 0:
        raise DomainError(f"N*g must be positive (got {n_times_g!r})")
    return math.sqrt(hbar**2 / (math.sqrt(2.0 * math.pi) * n_times_g * mass))


def c1(trap: TrapParams) -> float:
    """Slope C_1 = (s+2)/(s mu^(2/s)) * (1+lambda^2)/2 of the critical-velocity ladder."""
    return (1.0 + trap.lam**2) / (2.0 * trap.s_ratio * trap.mu_2s)


def omega_n(n: int, ctx: ScalingContext) -> float:
    if n < 1:
        raise DomainError(f"vortex count must be >= 1 (got {n!r})")
    return c1(ctx.trap) * (ctx.log_eps + (n - 1) * ctx.loglog_eps)


def omega_ladder(ctx: ScalingContext, n_max: int) -> OmegaLadder:
    k = c1(ctx.trap)
    local = k * ctx.log_eps / 2.0 if ctx.trap.s == 2 else None
    return OmegaLadder(k, [omega_n(n, ctx) for n in range(1, n_max + 1)], local)


def harmonic_local_stability(ctx: ScalingContext) -> float:
    """(1+lambda^2)/(2 mu) |ln eps|: origin becomes a local energy minimum (s = 2 only)."""
    if ctx.trap.s != 2:
        raise DomainError("local-stability threshold is defined for the harmonic trap only")
    return (1.0 + ctx.trap.lam**2) / (2.0 * ctx.trap.mu) * ctx.log_eps


def frame_factor(epsilon: float, s: float) -> float:
    """(16 eps^4)^(1/(s+2)); equals 1 for the flat trap."""
    if math.isinf(s):
        return 1.0
    return (16.0 * epsilon**4) ** (1.0 / (s + 2.0))


def unscale_omega(omega_scaled: float, ctx: ScalingContext) -> float:
    return omega_scaled * frame_factor(ctx.epsilon, ctx.trap.s)


def scale_omega(omega_lab: float, ctx: ScalingContext) -> float:
    return omega_lab / frame_factor(ctx.epsilon, ctx.trap.s)


def flat_vs_harmonic_ratio(ctx: ScalingContext) -> float:
    """Ratio of lab-frame first critical velocities, flat over harmonic trap: mu/(4 eps).

    mu is the harmonic-trap chemical potential at the context's anisotropy.
    """
    return chemical_potential(2.0, ctx.trap.lam) / (4.0 * ctx.epsilon)


def predict_vortex_count(omega: float, ctx: ScalingContext) -> VortexCountPrediction:
    """Equilibrium vortex count from the delta-windows around the ladder.

    Counts are determinate only inside [Omega_n + w, Omega_{n+1} - w] with
    w = C_1 delta ln|ln eps|; otherwise the (n, n+1) transition band is returned.
    """
    k = c1(ctx.trap)
    w = k * ctx.delta * ctx.loglog_eps
    first = omega_n(1, ctx)
    if omega <= first - w:
        return VortexCountPrediction(count=0)
    # index of the last ladder rung at or below omega (0 if below Omega_1)
    n = 0 if omega < first else int(math.floor((omega - first) / (k * ctx.loglog_eps))) + 1
    # guard the floor against rounding at rung boundaries
    while n >= 1 and omega_n(n, ctx) > omega:
        n -= 1
    while omega_n(n + 1, ctx) <= omega:
        n += 1
    lo = omega_n(n, ctx) + w if n >= 1 else -math.inf
    hi = omega_n(n + 1, ctx) - w
    if n >= 1 and lo <= omega <= hi:
        return VortexCountPrediction(count=n)
    if omega < lo:
        return VortexCountPrediction(band=(n - 1, n))
    return VortexCountPrediction(band=(n, n + 1))

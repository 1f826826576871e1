"""Minimization of the renormalized energy w over vortex positions (tilde coordinates)."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energetics import VortexConfig, drift_coefficient, inverse_tilde, renormalized_w
from .ladder import ScalingContext
from .trap import DomainError, TrapParams, potential_value

COLLISION_DISTANCE = 1e-6
DEDUP_TOL = 1e-5
MAX_VORTICES = 12


@dataclass(frozen=True)
class OptimizerConfig:
    n: int
    multistarts: int = 32
    max_iters: int = 2000
    grad_tol: float = 1e-10
    seed: int = 0
    init_radius: float | None = None
    step_rule: str = "armijo-backtracking"

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"vortex count must be >= 1 (got {self.n})")
        if self.n > MAX_VORTICES:
            raise DomainError(f"vortex count is capped at {MAX_VORTICES} (got {self.n})")
        if self.multistarts < 1:
            raise DomainError("multistarts must be >= 1")
        if not self.grad_tol > 0:
            raise DomainError("grad_tol must be positive")


@dataclass(frozen=True)
class PatternResult:
    n: int
    omega: float
    s: float
    lam: float
    config: VortexConfig
    w_value: float
    grad_norm: float
    constraint_residuals: tuple[float, float]
    basin_count: int
    converged: bool = True
    basins: list = field(default_factory=list, compare=False)

    @property
    def positions(self) -> np.ndarray:
        return self.config.positions


# ---------------------------------------------------------------------------
# energy and gradient


def grad_w(positions, omega: float, trap: TrapParams) -> np.ndarray:
    """Analytic gradient of w, flattened as (X_1, Y_1, X_2, Y_2, ...)."""
    X = np.asarray(positions, dtype=float).reshape(-1, 2)
    mu, lam = trap.mu, trap.lam
    n = len(X)
    g = np.zeros_like(X)
    if n >= 2:
        diff = X[:, None, :] - X[None, :, :]
        D = diff[..., 0] ** 2 + diff[..., 1] ** 2 / lam**2
        np.fill_diagonal(D, np.inf)
        if not np.all(D > 0):
            raise ValueError("coincident vortex positions")
        g[:, 0] = -math.pi * mu * np.sum(diff[..., 0] / D, axis=1)
        g[:, 1] = -math.pi * mu / lam**2 * np.sum(diff[..., 1] / D, axis=1)
    g += 2.0 * math.pi * mu / (1.0 + lam**2) * X
    if not trap.is_flat:
        s = trap.s
        R = np.sum(X**2, axis=1)
        Rp = R ** (s / 2.0 - 1.0) if s != 2 else np.ones_like(R)
        g -= drift_coefficient(omega, trap) * s * (X * Rp[:, None])
    return g.ravel()


# ---------------------------------------------------------------------------
# stationarity constraints


def constraint_coefficient(omega: float, trap: TrapParams) -> float:
    """kappa = (1+lambda^2) s ln(Omega) / (8 mu Omega^(s/2))."""
    if trap.is_flat:
        return 0.0
    return (1.0 + trap.lam**2) * trap.s * math.log(omega) / (8.0 * trap.mu * omega ** (trap.s / 2.0))


def leading_radius_sum(n: int, trap: TrapParams) -> float:
    """Leading-order value of sum(x~^2 + y~^2) at a critical point of w."""
    return 0.5 * (1.0 + trap.lam**2) * n * (n - 1) / 2.0


def check_constraints(positions, omega: float, trap: TrapParams, literal: bool = False):
    """Residuals of the two moment identities satisfied by every critical point of w.

    The first is the radial virial identity (x . grad w = 0 summed over
    vortices), the second the anisotropic shear identity (y d/dx - lambda^2 x d/dy).
    They are linear combinations of the stationarity equations, so both
    residuals vanish at any exact critical point. ``literal=True`` evaluates the
    same identities with the printed coefficients (leading factor (1+lambda^2)/4
    and correction 2*kappa), which critical points of w do not satisfy.
    """
    if isinstance(positions, PatternResult):
        positions = positions.positions
    X = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(X)
    lam = trap.lam
    kappa = constraint_coefficient(omega, trap)
    lead = leading_radius_sum(n, trap)
    if literal:
        kappa, lead = 2.0 * kappa, 0.5 * lead
    R = np.sum(X**2, axis=1)
    if trap.is_flat:
        Rs = np.zeros_like(R)
        Rs1 = np.zeros_like(R)
    else:
        Rs = R ** (trap.s / 2.0)
        Rs1 = R ** (trap.s / 2.0 - 1.0) if trap.s != 2 else np.ones_like(R)
    xy = X[:, 0] * X[:, 1]
    r1 = abs(R.sum() - lead - kappa * Rs.sum())
    r2 = abs((1.0 - lam**2) * xy.sum() - kappa * (1.0 - lam**2) * np.sum(xy * Rs1))
    return float(r1), float(r2)


def harmonic_radius_sum(n: int, omega: float, trap: TrapParams) -> float:
    """Closed-form sum(x~^2 + y~^2) at a critical point of w for s = 2."""
    if trap.s != 2:
        raise DomainError("closed form applies to the harmonic trap only")
    return n * (n - 1) / (4.0 / (1.0 + trap.lam**2) - math.log(omega) / (omega * trap.mu))


def harmonic_special_checks(result, omega: float, trap: TrapParams) -> dict:
    """First-moment, product-moment and pair antisymmetry relations for s = 2."""
    if trap.s != 2:
        raise DomainError("harmonic special checks require s = 2")
    X = result.positions if isinstance(result, PatternResult) else np.asarray(result, float).reshape(-1, 2)
    n = len(X)
    out = {
        "sum_x": float(X[:, 0].sum()),
        "sum_y": float(X[:, 1].sum()),
        "radius_sum": float(np.sum(X**2)),
        "radius_sum_closed_form": harmonic_radius_sum(n, omega, trap),
    }
    if trap.lam != 1.0:
        out["sum_xy"] = float(np.sum(X[:, 0] * X[:, 1]))
    if n == 2:
        out["pair_antisymmetry"] = float(np.max(np.abs(X[0] + X[1])))
    return out


# ---------------------------------------------------------------------------
# canonical form


def _order_points(P: np.ndarray) -> np.ndarray:
    ang = np.mod(np.arctan2(P[:, 1], P[:, 0]), 2.0 * math.pi)
    ang = np.round(ang, 9)
    ang[ang >= round(2.0 * math.pi, 9)] = 0.0
    rad = np.round(np.hypot(P[:, 0], P[:, 1]), 9)
    # small radii go first, their angle is meaningless
    ang[rad < 1e-7] = -1.0
    idx = np.lexsort((np.round(P[:, 1], 9), np.round(P[:, 0], 9), rad, ang))
    return P[idx]


def _key(P: np.ndarray) -> tuple:
    return tuple(np.round(P, 7).ravel().tolist())


def _rotate(P: np.ndarray, theta: float) -> np.ndarray:
    """Rotate every point by -theta."""
    c, s = math.cos(theta), math.sin(theta)
    return P @ np.array([[c, -s], [s, c]])


def canonicalize(positions, isotropic: bool) -> np.ndarray:
    """Representative of a configuration modulo the symmetries of w.

    For lambda = 1 (``isotropic``) w is invariant under rotations and
    reflections: the configuration is turned so that its principal axis lies
    along x; if the second-moment tensor is degenerate, each vortex in turn is
    tried on the positive x axis. For lambda < 1 only the reflections
    x -> -x and y -> -y are symmetries. Among the candidates the one with the
    lexicographically smallest ordered coordinates is returned, ordered by
    (angle, radius).
    """
    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(P) == 0:
        return P
    candidates = []
    if isotropic:
        M = P.T @ P
        evals, evecs = np.linalg.eigh(M)
        if evals[1] - evals[0] > 1e-6 * max(evals[1], 1e-300):
            v = evecs[:, 1]
            base = math.atan2(v[1], v[0])
            thetas = [base, base + math.pi]
        else:
            r = np.hypot(P[:, 0], P[:, 1])
            thetas = [math.atan2(p[1], p[0]) for p, rr in zip(P, r) if rr > 1e-7] or [0.0]
        for th in thetas:
            Q = _rotate(P, th)
            candidates += [Q, Q * np.array([1.0, -1.0])]
    else:
        for sx in (1.0, -1.0):
            for sy in (1.0, -1.0):
                candidates.append(P * np.array([sx, sy]))
    ordered = [_order_points(c) for c in candidates]
    best = min(ordered, key=_key)
    best = np.where(np.abs(best) < 1e-13, 0.0, best)
    return best


def config_distance(a, b) -> float:
    a = np.asarray(a, float).reshape(-1, 2)
    b = np.asarray(b, float).reshape(-1, 2)
    if a.shape != b.shape:
        return math.inf
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def set_distance(a, b) -> float:
    """Hausdorff distance between two point sets."""
    a = np.asarray(a, float).reshape(-1, 2)
    b = np.asarray(b, float).reshape(-1, 2)
    d = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# ---------------------------------------------------------------------------
# local minimizer


@dataclass
class _LocalResult:
    x: np.ndarray
    f: float
    grad_norm: float
    converged: bool
    abandoned: bool
    iterations: int


def _feasible(x: np.ndarray, omega: float, trap: TrapParams) -> bool:
    P = x.reshape(-1, 2)
    if len(P) >= 2:
        d = P[:, None, :] - P[None, :, :]
        r = np.hypot(d[..., 0], d[..., 1])
        np.fill_diagonal(r, np.inf)
        if r.min() < COLLISION_DISTANCE:
            return False
    raw = inverse_tilde(P, omega, trap)
    return bool(np.all(potential_value(raw[:, 0], raw[:, 1], trap) < trap.mu))


def _local_minimize(x0: np.ndarray, omega: float, trap: TrapParams, grad_tol: float,
                    max_iters: int, max_step: float = 0.25) -> _LocalResult:
    """Backtracking descent with BFGS inverse-Hessian updates.

    The BFGS update is applied only when the secant pair has positive
    curvature; otherwise the approximation is reset and the next step is a
    plain gradient step.
    """
    f = lambda z: renormalized_w(z.reshape(-1, 2), omega, trap)
    gr = lambda z: grad_w(z, omega, trap)
    x = x0.copy()
    if not _feasible(x, omega, trap):
        return _LocalResult(x, math.inf, math.inf, False, True, 0)
    fx, g = f(x), gr(x)
    m = x.size
    H = np.eye(m)
    it = 0
    for it in range(1, max_iters + 1):
        gn = float(np.linalg.norm(g))
        if gn <= grad_tol:
            return _LocalResult(x, fx, gn, True, False, it - 1)
        d = -H @ g
        slope = float(g @ d)
        if slope >= 0.0:
            H = np.eye(m)
            d, slope = -g, -gn * gn
        step_len = float(np.max(np.abs(d)))
        alpha = min(1.0, max_step / step_len) if step_len > 0 else 1.0
        accepted = False
        for _ in range(80):
            xn = x + alpha * d
            if _feasible(xn, omega, trap):
                fn = f(xn)
                if fn <= fx + 1e-4 * alpha * slope:
                    accepted = True
                    break
                # f is flat to rounding: accept if the gradient shrinks
                if abs(fn - fx) <= 64 * np.finfo(float).eps * max(1.0, abs(fx)):
                    gn_new = float(np.linalg.norm(gr(xn)))
                    if gn_new < gn:
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            if not _feasible(x + 1e-12 * d, omega, trap):
                return _LocalResult(x, fx, gn, False, True, it)
            if np.array_equal(H, np.eye(m)):
                return _LocalResult(x, fx, gn, False, False, it)
            H = np.eye(m)
            continue
        gnew = gr(xn)
        sv = xn - x
        yv = gnew - g
        sy = float(sv @ yv)
        if sy > 1e-300 and sy > 1e-12 * float(np.linalg.norm(sv) * np.linalg.norm(yv)):
            if it == 1 or np.array_equal(H, np.eye(m)):
                H = np.eye(m) * (sy / float(yv @ yv))
            rho = 1.0 / sy
            Hy = H @ yv
            H = H - rho * (np.outer(sv, Hy) + np.outer(Hy, sv)) + \
                (rho * rho * float(yv @ Hy) + rho) * np.outer(sv, sv)
        else:
            H = np.eye(m)
        x, fx, g = xn, fn, gnew
    gn = float(np.linalg.norm(g))
    return _LocalResult(x, fx, gn, gn <= grad_tol, False, max_iters)


def _initial_points(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    t = 2.0 * math.pi * rng.random(n)
    return np.column_stack([r * np.cos(t), r * np.sin(t)]).ravel()


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("BECVORTEX_THREADS", "1")))
    except ValueError:
        return 1


def minimize_pattern(opt: OptimizerConfig, omega: float, ctx: ScalingContext | TrapParams) -> PatternResult:
    """Best local minimum of w over ``opt.multistarts`` random starts.

    Starts are drawn uniformly in a disc of radius O(1) in tilde coordinates
    from independent child seeds of ``opt.seed``; the reduction is keyed by
    start index so the result does not depend on completion order.
    """
    trap = ctx.trap if isinstance(ctx, ScalingContext) else ctx
    if not omega > 0:
        raise DomainError(f"Omega must be positive (got {omega!r})")
    n = opt.n
    iso = trap.lam == 1.0
    if n == 1:
        pos = np.zeros((1, 2))
        return PatternResult(1, float(omega), float(trap.s), float(trap.lam), VortexConfig(pos),
                             renormalized_w(pos, omega, trap), 0.0,
                             check_constraints(pos, omega, trap), 1, True, [pos])

    radius = opt.init_radius
    if radius is None:
        radius = 1.5 * math.sqrt(max(leading_radius_sum(n, trap), 0.25))
    # keep starts inside D
    radius = min(radius, 0.9 * math.sqrt(omega) * trap.semi_axis_x)
    seeds = np.random.SeedSequence(opt.seed).spawn(opt.multistarts)

    def run(k):
        rng = np.random.default_rng(seeds[k])
        x0 = _initial_points(n, radius, rng)
        return _local_minimize(x0, omega, trap, opt.grad_tol, opt.max_iters)

    workers = min(_thread_count(), opt.multistarts)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, range(opt.multistarts)))
    else:
        results = [run(k) for k in range(opt.multistarts)]

    usable = [(k, r) for k, r in enumerate(results) if not r.abandoned and math.isfinite(r.f)]
    if not usable:
        raise RuntimeError("every multistart collided or left the domain")
    conv = [(k, r) for k, r in usable if r.converged]
    pool = conv if conv else usable
    basins: list[tuple[np.ndarray, float]] = []
    for k, r in conv:
        c = canonicalize(r.x, iso)
        if not any(config_distance(c, b) < DEDUP_TOL for b, _ in basins):
            basins.append((c, r.f))
    k_best, best = min(pool, key=lambda kr: (kr[1].f, kr[0]))
    pos = canonicalize(best.x, iso)
    # canonical form is a symmetry image of the minimizer, so recompute values on it
    g = float(np.linalg.norm(grad_w(pos, omega, trap)))
    return PatternResult(
        n, float(omega), float(trap.s), float(trap.lam), VortexConfig(pos),
        renormalized_w(pos, omega, trap), g, check_constraints(pos, omega, trap),
        len(basins), best.converged, [b for b, _ in sorted(basins, key=lambda bf: bf[1])],
    )


def regular_polygon(n: int, radius: float, center: bool = False) -> np.ndarray:
    k = n - 1 if center else n
    ang = 2.0 * math.pi * np.arange(k) / k
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    return np.vstack([np.zeros((1, 2)), ring]) if center else ring


# ---------------------------------------------------------------------------
# output


def result_to_dict(result: PatternResult) -> dict:
    return {
        "n": result.n,
        "omega": result.omega,
        "s": "flat" if math.isinf(result.s) else result.s,
        "lambda": result.lam,
        "positions": [[float(a), float(b)] for a, b in result.positions],
        "w_value": result.w_value,
        "grad_norm": result.grad_norm,
        "residuals": list(result.constraint_residuals),
        "basin_count": result.basin_count,
        "converged": result.converged,
    }


def result_from_dict(d: dict) -> PatternResult:
    s = math.inf if d["s"] == "flat" else float(d["s"])
    pos = np.asarray(d["positions"], dtype=float).reshape(-1, 2)
    return PatternResult(int(d["n"]), float(d["omega"]), s, float(d["lambda"]), VortexConfig(pos),
                         float(d["w_value"]), float(d["grad_norm"]), tuple(d["residuals"]),
                         int(d["basin_count"]), bool(d.get("converged", True)))


def positions_csv_rows(result: PatternResult):
    return [(float(a), float(b)) for a, b in result.positions]

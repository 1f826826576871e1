"""Grid minimization of the scaled rotating GP functional, used as a numerical oracle.

The kinetic term is discretized in covariant form: each grid edge carries the
link phase exp(-i A.e) of the vector potential A = Omega (-y, x), which is
constant along the edge, so the discrete functional is bounded below and
exactly invariant under quarter-turn rotations of a square grid.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import fft, ndimage

from .flow import phase_S
from .ladder import ScalingContext, c1
from .trap import DomainError, TrapParams, potential_value, tf_density

SNAPSHOT_MAGIC = b"GPGRID01"
BOX_FACTOR = 1.5


class NonConvergenceError(RuntimeError):
    """The solver stopped before both convergence signals were met."""


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int | None = None
    box_factor: float = BOX_FACTOR

    def sizes(self, trap: TrapParams) -> tuple[int, int]:
        if self.ny is not None:
            return int(self.nx), int(self.ny)
        if trap.lam == 1.0:
            return int(self.nx), int(self.nx)
        # spacing in y no coarser than in x, with a fast sine-transform length
        ny = fft.next_fast_len(int(math.ceil((self.nx + 1) / trap.lam)), real=True) - 1
        return int(self.nx), ny


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 20000
    grad_tol: float = 1e-6
    energy_tol: float = 1e-10
    window: int = 100
    preconditioner_shift: float | None = None


@dataclass
class GpGrid:
    """Interior nodes x_i = -L_x + i h_x (i = 1..nx) with zero Dirichlet values at i = 0, nx+1."""

    lx: float
    ly: float
    nx: int
    ny: int
    ctx: ScalingContext
    omega: float
    field: np.ndarray = None

    def __post_init__(self):
        if self.field is None:
            self.field = np.zeros((self.nx, self.ny), dtype=complex)

    @property
    def trap(self) -> TrapParams:
        return self.ctx.trap

    @property
    def spacing(self) -> tuple[float, float]:
        return 2.0 * self.lx / (self.nx + 1), 2.0 * self.ly / (self.ny + 1)

    @property
    def cell_area(self) -> float:
        hx, hy = self.spacing
        return hx * hy

    @property
    def x(self) -> np.ndarray:
        return -self.lx + self.spacing[0] * np.arange(1, self.nx + 1)

    @property
    def y(self) -> np.ndarray:
        return -self.ly + self.spacing[1] * np.arange(1, self.ny + 1)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def norm2(self, u=None) -> float:
        u = self.field if u is None else u
        return float(np.sum(np.abs(u) ** 2)) * self.cell_area

    def inner_mask(self) -> np.ndarray:
        X, Y = self.mesh()
        return potential_value(X, Y, self.trap) <= self.trap.mu - self.ctx.epsilon ** (1.0 / 3.0)

    def exterior_mask(self) -> np.ndarray:
        X, Y = self.mesh()
        return potential_value(X, Y, self.trap) > self.trap.mu + self.ctx.epsilon ** (1.0 / 3.0)


@dataclass
class SolveReport:
    energy: float
    mu_gp: float
    vortices: list
    l2_tf_distance: float
    tail_mass: float
    iterations: int
    converged: bool
    quartic: float = 0.0
    grad_norm: float = math.nan
    boundary_winding: int = 0
    energy_history: list = field(default_factory=list, repr=False)
    grid: GpGrid | None = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "energy": self.energy,
            "mu_gp": self.mu_gp,
            "vortices": [{"position": [float(p[0]), float(p[1])], "winding": int(d)}
                         for p, d in self.vortices],
            "l2_tf_distance": self.l2_tf_distance,
            "tail_mass": self.tail_mass,
            "iterations": self.iterations,
            "converged": self.converged,
            "quartic": self.quartic,
            "grad_norm": self.grad_norm,
            "boundary_winding": self.boundary_winding,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolveReport":
        vort = [((v["position"][0], v["position"][1]), v["winding"]) for v in d["vortices"]]
        return cls(d["energy"], d["mu_gp"], vort, d["l2_tf_distance"], d["tail_mass"],
                   d["iterations"], d["converged"], d.get("quartic", 0.0),
                   d.get("grad_norm", math.nan), d.get("boundary_winding", 0))


# ---------------------------------------------------------------------------
# grid construction


def make_grid(spec: GridSpec, ctx: ScalingContext, omega: float) -> GpGrid:
    trap = ctx.trap
    if spec.box_factor < BOX_FACTOR:
        raise DomainError(f"box factor must be >= {BOX_FACTOR} so the box encloses D with margin")
    if not omega >= 0:
        raise DomainError(f"Omega must be non-negative (got {omega!r})")
    nx, ny = spec.sizes(trap)
    if nx < 4 or ny < 4:
        raise DomainError("grid needs at least 4 nodes per axis")
    lx = spec.box_factor * trap.semi_axis_x
    ly = lx / trap.lam
    grid = GpGrid(lx, ly, nx, ny, ctx, float(omega))
    hmax = max(grid.spacing)
    if hmax > ctx.epsilon / 2.0:
        need = int(math.ceil(2.0 * max(lx, ly) / (ctx.epsilon / 2.0))) - 1
        raise DomainError(
            f"grid too coarse: h = {hmax:.4g} > eps/2 = {ctx.epsilon / 2:.4g}; "
            f"use at least {need} nodes along the longer axis")
    return grid


# ---------------------------------------------------------------------------
# discrete functional


class _Operator:
    """Precomputed pieces of the discrete functional for one grid."""

    def __init__(self, grid: GpGrid):
        self.grid = grid
        hx, hy = grid.spacing
        self.hx, self.hy = hx, hy
        self.area = hx * hy
        om = grid.omega
        X, Y = grid.mesh()
        trap = grid.trap
        eps2 = grid.ctx.epsilon ** 2
        # link phases: x-edges at fixed y carry exp(i Omega y h_x), y-edges exp(-i Omega x h_y)
        self.ux = np.exp(1j * om * grid.y * hx)[None, :]
        self.uy = np.exp(-1j * om * grid.x * hy)[:, None]
        if trap.is_flat:
            self.active = (X**2 + trap.lam**2 * Y**2) < 1.0
            V = np.zeros_like(X)
        else:
            self.active = np.ones(X.shape, dtype=bool)
            V = potential_value(X, Y, trap)
        self.V = V
        self.coef4 = 1.0 / (4.0 * eps2)
        self.W = V / (4.0 * eps2) - 0.5 * om**2 * (X**2 + Y**2)
        self.W = np.where(self.active, self.W, 0.0)
        self.diag = 2.0 / hx**2 + 2.0 / hy**2

    def restrict(self, u):
        return u if self.active.all() else np.where(self.active, u, 0.0)

    def apply_K(self, u):
        """Discrete covariant (magnetic) Laplacian, with the sign of -Delta_A."""
        hx2, hy2 = self.hx**2, self.hy**2
        Ku = self.diag * u
        Ku[:-1, :] -= self.ux * u[1:, :] / hx2
        Ku[1:, :] -= np.conj(self.ux) * u[:-1, :] / hx2
        Ku[:, :-1] -= self.uy * u[:, 1:] / hy2
        Ku[:, 1:] -= np.conj(self.uy) * u[:, :-1] / hy2
        return Ku

    def inner(self, a, b) -> float:
        return float(np.real(np.vdot(a, b))) * self.area

    def energy(self, u) -> float:
        a2 = np.abs(u) ** 2
        kin = 0.5 * self.inner(u, self.apply_K(u))
        pot = float(np.sum(self.W * a2 + self.coef4 * a2 * a2)) * self.area
        return kin + pot

    def energy_change(self, u, v, Ku=None, multiplier: float = 0.0) -> float:
        """E(v) - E(u) - multiplier*(|v|^2 - |u|^2), evaluated from the increment v - u.

        Working with the increment keeps the result accurate when it is far
        below E itself. With ``multiplier`` equal to <u, H(u)u>, the rounding
        jitter of the L2 norm left by normalization drops out at first order,
        so the value is the energy change on the unit sphere.
        """
        dlt = v - u
        Ku = self.apply_K(u) if Ku is None else Ku
        kin = self.inner(dlt, Ku) + 0.5 * self.inner(dlt, self.apply_K(dlt))
        au, av = np.abs(u) ** 2, np.abs(v) ** 2
        da = 2.0 * np.real(np.conj(u) * dlt) + np.abs(dlt) ** 2
        pot = float(np.sum(da * (self.W + self.coef4 * (au + av) - multiplier))) * self.area
        return kin + pot

    def gradient(self, u):
        """H(u) u, half the gradient of the energy in the real L2 inner product."""
        a2 = np.abs(u) ** 2
        g = 0.5 * self.apply_K(u) + (self.W + 2.0 * self.coef4 * a2) * u
        return self.restrict(g)

    def quartic(self, u) -> float:
        return float(np.sum(np.abs(u) ** 4)) * self.area * self.coef4


def energy_edge_form(grid: GpGrid, u=None) -> dict:
    """Energy assembled edge by edge from |U u_j - u_i|^2 (independent of the operator form)."""
    u = grid.field if u is None else u
    op = _Operator(grid)
    hx, hy = grid.spacing
    area = grid.cell_area
    pad = np.zeros((grid.nx + 2, grid.ny + 2), dtype=complex)
    pad[1:-1, 1:-1] = u
    yall = -grid.ly + hy * np.arange(grid.ny + 2)
    xall = -grid.lx + hx * np.arange(grid.nx + 2)
    ex = np.exp(1j * grid.omega * yall * hx)[None, :] * pad[1:, :] - pad[:-1, :]
    ey = np.exp(-1j * grid.omega * xall * hy)[:, None] * pad[:, 1:] - pad[:, :-1]
    kinetic = 0.5 * (np.sum(np.abs(ex[:, 1:-1]) ** 2) / hx**2 + np.sum(np.abs(ey[1:-1, :]) ** 2) / hy**2) * area
    a2 = np.abs(u) ** 2
    X, Y = grid.mesh()
    trap_term = float(np.sum(a2 * (op.V + a2))) * area / (4.0 * grid.ctx.epsilon**2)
    centrifugal = -0.5 * grid.omega**2 * float(np.sum((X**2 + Y**2) * a2)) * area
    return {"kinetic": float(kinetic), "trap": trap_term, "centrifugal": centrifugal,
            "total": float(kinetic) + trap_term + centrifugal}


def grid_energy(grid: GpGrid, u=None) -> float:
    return _Operator(grid).energy(grid.field if u is None else u)


def chemical_potential_gp(grid: GpGrid, u=None) -> float:
    u = grid.field if u is None else u
    op = _Operator(grid)
    return op.inner(u, op.gradient(u))


# ---------------------------------------------------------------------------
# preconditioner


class _Preconditioner:
    """(c - Delta_h/2)^(-1) with zero Dirichlet data, applied by type-I sine transforms."""

    def __init__(self, grid: GpGrid, shift: float):
        hx, hy = grid.spacing
        kx = np.arange(1, grid.nx + 1)
        ky = np.arange(1, grid.ny + 1)
        lx = 4.0 / hx**2 * np.sin(np.pi * kx / (2 * (grid.nx + 1))) ** 2
        ly = 4.0 / hy**2 * np.sin(np.pi * ky / (2 * (grid.ny + 1))) ** 2
        self.inv = 1.0 / (shift + 0.5 * (lx[:, None] + ly[None, :]))

    def __call__(self, r):
        return fft.dstn(fft.dstn(r, type=1, norm="ortho") * self.inv, type=1, norm="ortho")


# ---------------------------------------------------------------------------
# initialization


def initial_field(grid: GpGrid, seeds=None) -> np.ndarray:
    """sqrt(rho_TF) exp(iS), optionally multiplied by unit-winding phase factors at ``seeds``.

    ``seeds`` are raw-coordinate points (x, y), or ((x, y), d) pairs for winding d.
    """
    X, Y = grid.mesh()
    trap = grid.trap
    amp = np.sqrt(tf_density(X, Y, trap))
    u = amp * np.exp(1j * phase_S(X, Y, trap, grid.omega))
    eps = grid.ctx.epsilon
    for item in seeds or ():
        if len(item) == 2 and np.ndim(item[0]) == 1:
            (px, py), d = item
        else:
            (px, py), d = item, 1
        z = (X - px) + 1j * (Y - py)
        r = np.abs(z)
        phase = np.where(r > 0, z / np.where(r > 0, r, 1.0), 0.0)
        phase = phase if d >= 0 else np.conj(phase)
        u = u * phase ** abs(int(d)) * np.tanh(r / eps) ** abs(int(d))
    u = np.where(_Operator(grid).active, u, 0.0)
    return u / math.sqrt(grid.norm2(u))


# ---------------------------------------------------------------------------
# solver


def _project(u, v, op):
    return v - op.inner(u, v) * u


def minimize_field(grid: GpGrid, options: SolverOptions | None = None) -> dict:
    """Preconditioned nonlinear conjugate gradient on the unit L2 sphere.

    Each step moves along a tangent direction d and retracts by normalization,
    u <- (u + t d)/||u + t d||. The step length comes from backtracking with a
    sufficient-decrease test on the energy change, which is evaluated from
    the increment so that it stays accurate when it is far below the energy.
    The returned history is the energy after each accepted step, accumulated
    from these changes; it is non-increasing by construction.
    """
    opts = options or SolverOptions()
    op = _Operator(grid)
    eps2 = grid.ctx.epsilon ** 2
    shift = opts.preconditioner_shift
    if shift is None:
        shift = (grid.trap.mu + 1.0) / (4.0 * eps2)
    P = _Preconditioner(grid, shift)

    def retract(base, direction, step):
        v = base + step * direction
        return v / math.sqrt(op.inner(v, v))

    u = op.restrict(grid.field.astype(complex))
    u = u / math.sqrt(op.inner(u, u))
    E = op.energy(u)
    history = [E]
    grad_history = []
    g = op.gradient(u)
    r = _project(u, g, op)
    rnorm = math.sqrt(op.inner(r, r))
    grad_history.append(rnorm)
    Pr = _project(u, op.restrict(P(r)), op)
    d = -Pr
    rPr_old = op.inner(r, Pr)
    r_old = r
    t = 1.0
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        slope = 2.0 * op.inner(g, d)
        if slope >= 0.0:
            d = -Pr
            slope = 2.0 * op.inner(g, d)
        Ku = op.apply_K(u)
        lagr = op.inner(u, g)
        accepted = False
        tt = t
        for _ in range(40):
            v = retract(u, d, tt)
            dE = op.energy_change(u, v, Ku, lagr)
            if dE <= 1e-4 * tt * slope:
                # parabola through E(0), E'(0), E(tt) suggests a longer step
                a = (dE - slope * tt) / tt**2
                if a > 0:
                    ts = -slope / (2.0 * a)
                    if tt < ts < 4.0 * tt:
                        w = retract(u, d, ts)
                        dEw = op.energy_change(u, w, Ku, lagr)
                        if dEw < dE:
                            v, dE, tt = w, dEw, ts
                accepted = True
                break
            a = (dE - slope * tt) / tt**2
            ts = -slope / (2.0 * a) if a > 0 else 0.5 * tt
            tt = min(max(ts, 0.1 * tt), 0.5 * tt)
        if not accepted:
            if np.array_equal(d, -Pr):
                # no representable decrease left: the energy is stationary to rounding
                converged = rnorm < opts.grad_tol
                break
            d = -Pr
            continue
        u = v
        E = E + dE
        history.append(E)
        t = min(2.0 * tt, 1e6)
        g = op.gradient(u)
        r = _project(u, g, op)
        rnorm = math.sqrt(op.inner(r, r))
        grad_history.append(rnorm)
        window_ok = (len(history) > opts.window and
                     abs(history[-1 - opts.window] - E) <= opts.energy_tol * abs(E))
        if rnorm < opts.grad_tol and window_ok:
            converged = True
            break
        Pr = _project(u, op.restrict(P(r)), op)
        rPr = op.inner(r, Pr)
        beta = max(0.0, (rPr - op.inner(r_old, Pr)) / rPr_old) if rPr_old > 0 else 0.0
        d = -Pr + beta * _project(u, d, op)
        rPr_old, r_old = rPr, r
    grid.field = u
    return {"energy": op.energy(u), "grad_norm": rnorm, "iterations": it, "converged": converged,
            "history": history, "grad_history": grad_history}


def solve(grid_spec: GridSpec, ctx: ScalingContext, omega: float, seeds=None,
          options: SolverOptions | None = None, initial: np.ndarray | None = None) -> SolveReport:
    """Minimize the discrete functional from the TF ansatz (plus optional seeded vortices)."""
    grid = make_grid(grid_spec, ctx, omega)
    grid.field = initial_field(grid, seeds) if initial is None else np.array(initial, dtype=complex)
    out = minimize_field(grid, options)
    return build_report(grid, out)


def build_report(grid: GpGrid, out: dict) -> SolveReport:
    op = _Operator(grid)
    u = grid.field
    E = op.energy(u)
    q = op.quartic(u)
    mu_gp = op.inner(u, op.gradient(u))
    vort = detect_vortices(grid)
    X, Y = grid.mesh()
    rho = tf_density(X, Y, grid.trap)
    a2 = np.abs(u) ** 2
    l2 = float(np.sum((a2 - rho) ** 2)) * grid.cell_area
    outside = rho <= 0.0
    tail = float(np.sum((a2 * a2)[outside])) * grid.cell_area
    return SolveReport(E, mu_gp, vort, l2, tail, out["iterations"], out["converged"], q,
                       out["grad_norm"], boundary_circulation(grid), out["history"], grid)


# ---------------------------------------------------------------------------
# vortex detection


def _phase_step(a, b):
    """Phase increment from a to b in (-pi, pi], taken from b conj(a) so signed zeros cannot flip it."""
    return np.angle(b * np.conj(a))


def _cell_mask(grid: GpGrid) -> np.ndarray:
    m = grid.inner_mask()
    return m[:-1, :-1] & m[1:, :-1] & m[:-1, 1:] & m[1:, 1:]


def plaquette_windings(field: np.ndarray) -> np.ndarray:
    """Winding of each plaquette: counterclockwise sum of wrapped phase differences / 2 pi."""
    f = np.asarray(field)
    # one increment per edge, reused with opposite signs by the two cells sharing it
    ex = _phase_step(f[:-1, :], f[1:, :])
    ey = _phase_step(f[:, :-1], f[:, 1:])
    d_bottom = ex[:, :-1]
    d_right = ey[1:, :]
    d_top = -ex[:, 1:]
    d_left = -ey[:-1, :]
    return np.rint((d_bottom + d_right + d_top + d_left) / (2.0 * np.pi)).astype(int)


def _bilinear_zero(c00, c10, c01, c11):
    """Zero of the bilinear interpolant on the unit cell, or None if not found inside it."""
    p = np.array([0.5, 0.5])
    for _ in range(30):
        a, b = p
        f = (1 - a) * (1 - b) * c00 + a * (1 - b) * c10 + (1 - a) * b * c01 + a * b * c11
        fa = -(1 - b) * c00 + (1 - b) * c10 - b * c01 + b * c11
        fb = -(1 - a) * c00 - a * c10 + (1 - a) * c01 + a * c11
        J = np.array([[fa.real, fb.real], [fa.imag, fb.imag]])
        try:
            step = np.linalg.solve(J, [f.real, f.imag])
        except np.linalg.LinAlgError:
            return None
        p = p - step
        if np.max(np.abs(step)) < 1e-12:
            break
    if np.all(p >= -1e-9) and np.all(p <= 1 + 1e-9):
        return p
    return None


def detect_vortices(grid: GpGrid, field_values=None):
    """Vortices in D^in as a list of ((x, y), winding), sorted by position.

    Plaquettes with nonzero winding are grouped into 8-connected clusters; the
    winding of a cluster is the sum over its cells and its position is the
    mean of the cell zero locations weighted by 1/(mean corner amplitude), so
    the deepest cells dominate. The cell zero location is the zero of the
    bilinear interpolant when it lies in the cell, else the cell centre.
    """
    u = grid.field if field_values is None else field_values
    wind = plaquette_windings(u)
    wind = np.where(_cell_mask(grid), wind, 0)
    labels, count = ndimage.label(wind != 0, structure=np.ones((3, 3), dtype=int))
    x, y = grid.x, grid.y
    hx, hy = grid.spacing
    amp = np.abs(u)
    out = []
    for lab in range(1, count + 1):
        ii, jj = np.nonzero(labels == lab)
        total = int(wind[ii, jj].sum())
        pts, wts = [], []
        for i, j in zip(ii, jj):
            z = _bilinear_zero(u[i, j], u[i + 1, j], u[i, j + 1], u[i + 1, j + 1])
            loc = (0.5, 0.5) if z is None else z
            pts.append((x[i] + loc[0] * hx, y[j] + loc[1] * hy))
            mean_amp = 0.25 * (amp[i, j] + amp[i + 1, j] + amp[i, j + 1] + amp[i + 1, j + 1])
            wts.append(1.0 / (mean_amp + 1e-300))
        pts = np.asarray(pts)
        wts = np.asarray(wts)
        c = (wts[:, None] * pts).sum(axis=0) / wts.sum()
        if total != 0:
            out.append(((float(c[0]), float(c[1])), total))
    out.sort(key=lambda v: (round(v[0][0], 12), round(v[0][1], 12)))
    return out


def boundary_circulation(grid: GpGrid, field_values=None) -> int:
    """Phase circulation / 2 pi along the boundary of the D^in plaquette region.

    Only edges with a D^in cell on one side and a non-D^in cell on the other
    are summed, oriented counterclockwise around the region.
    """
    u = grid.field if field_values is None else field_values
    nx, ny = grid.nx, grid.ny
    # pad[i+1, j+1] is cell (i, j) with corners (i, j)..(i+1, j+1); the border is outside
    pad = np.zeros((nx + 1, ny + 1), dtype=bool)
    pad[1:-1, 1:-1] = _cell_mask(grid)
    total = 0.0
    # x-edge (i, j) -> (i+1, j): cell (i, j) above it, cell (i, j-1) below it
    dx = _phase_step(u[:-1, :], u[1:, :])
    above, below = pad[1:nx, 1:ny + 1], pad[1:nx, 0:ny]
    total += dx[above & ~below].sum() - dx[below & ~above].sum()
    # y-edge (i, j) -> (i, j+1): cell (i, j) to its right, cell (i-1, j) to its left
    dy = _phase_step(u[:, :-1], u[:, 1:])
    right, left = pad[1:nx + 1, 1:ny], pad[0:nx, 1:ny]
    total += dy[left & ~right].sum() - dy[right & ~left].sum()
    return int(round(total / (2.0 * np.pi)))


# ---------------------------------------------------------------------------
# comparisons with the TF profile


def density_comparison(report_or_grid, grid: GpGrid | None = None, trap: TrapParams | None = None):
    """(sum (|u|^2 - rho_TF)^2 h_x h_y over the box, max over D^in of ||u| - sqrt(rho)|/sqrt(rho))."""
    if grid is None:
        grid = report_or_grid.grid if isinstance(report_or_grid, SolveReport) else report_or_grid
    trap = trap or grid.trap
    X, Y = grid.mesh()
    rho = tf_density(X, Y, trap)
    amp = np.abs(grid.field)
    l2 = float(np.sum((amp**2 - rho) ** 2)) * grid.cell_area
    inner = grid.inner_mask()
    sr = np.sqrt(rho[inner])
    pointwise = float(np.max(np.abs(amp[inner] - sr) / sr)) if inner.any() else 0.0
    return l2, pointwise


def exterior_max_density(grid: GpGrid) -> float:
    """max |u|^2 over {V > mu + eps^(1/3)} inside the box (0 if that set has no nodes)."""
    ext = grid.exterior_mask()
    if not ext.any():
        return 0.0
    return float(np.max(np.abs(grid.field[ext]) ** 2))


def tail_bound_shape(epsilon: float) -> float:
    return epsilon ** (1.0 / 6.0) * math.sqrt(abs(math.log(epsilon)))


def calibrate_tail_constant(grid: GpGrid) -> float:
    return exterior_max_density(grid) / tail_bound_shape(grid.ctx.epsilon)


def tail_check(report_or_grid, grid: GpGrid | None = None, trap=None, ctx=None,
               constant: float | None = None):
    """Maximum exterior density and whether it obeys C eps^(1/6) |ln eps|^(1/2).

    Returns (max_density, holds); ``holds`` is None when no constant is given.
    """
    if grid is None:
        grid = report_or_grid.grid if isinstance(report_or_grid, SolveReport) else report_or_grid
    value = exterior_max_density(grid)
    if constant is None:
        return value, None
    eps = (ctx or grid.ctx).epsilon
    return value, bool(value <= constant * tail_bound_shape(eps))


# ---------------------------------------------------------------------------
# symmetry checks


def rotated_field(grid: GpGrid, angle: float) -> np.ndarray:
    """Field rotated about the origin; exact for quarter turns on a square grid."""
    u = grid.field
    quarter = angle / (0.5 * math.pi)
    k = int(round(quarter))
    if abs(quarter - k) < 1e-12 and grid.nx == grid.ny and abs(grid.lx - grid.ly) < 1e-15:
        # rot90 on (x, y)-indexed arrays turns by +90 degrees
        return np.rot90(u, k % 4)
    X, Y = grid.mesh()
    c, s = math.cos(angle), math.sin(angle)
    xs, ys = c * X + s * Y, -s * X + c * Y
    hx, hy = grid.spacing
    fi = (xs + grid.lx) / hx - 1.0
    fj = (ys + grid.ly) / hy - 1.0
    re = ndimage.map_coordinates(u.real, [fi, fj], order=3, mode="constant", cval=0.0)
    im = ndimage.map_coordinates(u.imag, [fi, fj], order=3, mode="constant", cval=0.0)
    v = re + 1j * im
    return v / math.sqrt(grid.norm2(v))


def rotation_energy_change(grid: GpGrid, angle: float) -> float:
    op = _Operator(grid)
    E0 = op.energy(grid.field)
    return abs(op.energy(rotated_field(grid, angle)) - E0) / abs(E0)


# ---------------------------------------------------------------------------
# ground state selection and nucleation


def ground_state(grid_spec: GridSpec, ctx: ScalingContext, omega: float,
                 candidate_seeds=((),), options: SolverOptions | None = None) -> SolveReport:
    """Lowest-energy converged state among solves started from each seed set."""
    best = None
    for seeds in candidate_seeds:
        rep = solve(grid_spec, ctx, omega, seeds=list(seeds), options=options)
        if best is None or rep.energy < best.energy:
            best = rep
    return best


@dataclass
class NucleationResult:
    omega_star: float
    omega_low: float
    omega_high: float
    ratio: float
    c1: float
    vortices_at_high: list
    evaluations: list = field(default_factory=list)
    omega_star_bisection: float = math.nan

    def as_dict(self) -> dict:
        return {
            "omega_star": self.omega_star, "omega_star_bisection": self.omega_star_bisection,
            "omega_low": self.omega_low, "omega_high": self.omega_high,
            "ratio_to_log_eps": self.ratio, "c1": self.c1,
            "vortices_at_high": [{"position": list(p), "winding": d} for p, d in self.vortices_at_high],
            "evaluations": self.evaluations,
        }


def nucleation_sweep(ctx: ScalingContext, omega_range, steps: int = 8,
                     grid_spec: GridSpec | None = None,
                     options: SolverOptions | None = None) -> NucleationResult:
    """Bisection on Omega for the first ground state with a vortex in D^in.

    At each Omega the vortex-free start and a start with one unit vortex at the
    origin are both minimized and the lower energy wins. Once the bracket is
    final, Omega* is refined by linear interpolation of the energy gap between
    the two branches at the bracket ends (the gap is close to linear in Omega);
    if either end lacks a one-vortex branch the bracket midpoint is used.
    """
    lo, hi = float(omega_range[0]), float(omega_range[1])
    if not 0 <= lo < hi:
        raise DomainError("Omega range must satisfy 0 <= low < high")
    if grid_spec is None:
        grid_spec = default_grid_spec(ctx)
    evals = []

    def evaluate(om):
        free = solve(grid_spec, ctx, om, options=options)
        seeded = solve(grid_spec, ctx, om, seeds=[((0.0, 0.0), 1)], options=options)
        best = seeded if seeded.energy < free.energy else free
        n = sum(abs(d) for _, d in best.vortices)
        n_seeded = sum(abs(d) for _, d in seeded.vortices)
        evals.append({"omega": om, "count": n, "energy": best.energy,
                      "energy_vortex_free": free.energy, "energy_seeded": seeded.energy,
                      "seeded_count": n_seeded,
                      "converged": bool(free.converged and seeded.converged)})
        return n, best, evals[-1]

    n_lo, _, e_lo = evaluate(lo)
    n_hi, rep_hi, e_hi = evaluate(hi)
    if n_lo != 0 or n_hi < 1:
        raise DomainError(
            f"Omega range [{lo}, {hi}] does not bracket nucleation (counts {n_lo}, {n_hi})")
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        n_mid, rep_mid, e_mid = evaluate(mid)
        if n_mid == 0:
            lo, e_lo = mid, e_mid
        else:
            hi, rep_hi, e_hi = mid, rep_mid, e_mid
    midpoint = 0.5 * (lo + hi)
    star = midpoint
    if e_lo["seeded_count"] == 1 and e_hi["seeded_count"] == 1:
        gap_lo = e_lo["energy_seeded"] - e_lo["energy_vortex_free"]
        gap_hi = e_hi["energy_seeded"] - e_hi["energy_vortex_free"]
        if gap_lo > 0 >= gap_hi:
            star = lo + (hi - lo) * gap_lo / (gap_lo - gap_hi)
    return NucleationResult(star, lo, hi, star / ctx.log_eps, c1(ctx.trap), rep_hi.vortices,
                            evals, midpoint)


def default_grid_spec(ctx: ScalingContext, cells_per_eps: float = 2.0) -> GridSpec:
    """Smallest grid with h <= eps/cells_per_eps whose sine transforms are fast.

    The sine transform of n nodes runs an FFT of length 2(n+1), so n+1 is
    chosen free of prime factors above 5.
    """
    lx = BOX_FACTOR * ctx.trap.semi_axis_x
    nodes = max(int(math.ceil(2.0 * lx * cells_per_eps / ctx.epsilon)), 5)
    return GridSpec(fft.next_fast_len(nodes, real=True) - 1)


# ---------------------------------------------------------------------------
# snapshots


_HEADER = struct.Struct("<8sqq6d")


def snapshot_bytes(grid: GpGrid) -> bytes:
    """Binary snapshot: header then nx*ny interleaved (re, im) float64, row-major over (x, y)."""
    t = grid.trap
    head = _HEADER.pack(SNAPSHOT_MAGIC, grid.nx, grid.ny, grid.lx, grid.ly, grid.ctx.epsilon,
                        grid.omega, t.s, t.lam)
    body = np.ascontiguousarray(grid.field, dtype="<c16").tobytes()
    return head + body


def write_snapshot(path, grid: GpGrid) -> None:
    from .serialization import atomic_write_bytes
    atomic_write_bytes(path, snapshot_bytes(grid))


def read_snapshot(path_or_bytes) -> GpGrid:
    data = path_or_bytes
    if not isinstance(data, (bytes, bytearray)):
        with open(data, "rb") as fh:
            data = fh.read()
    magic, nx, ny, lx, ly, eps, om, s, lam = _HEADER.unpack_from(data, 0)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError("not a GP grid snapshot")
    vals = np.frombuffer(data, dtype="<c16", count=nx * ny, offset=_HEADER.size)
    ctx = ScalingContext(eps, TrapParams(s, lam))
    return GpGrid(lx, ly, int(nx), int(ny), ctx, om, vals.reshape(nx, ny).astype(complex))


def report_json(report: SolveReport) -> str:
    from .serialization import dumps
    return dumps(report.as_dict())


def report_from_json(text: str) -> SolveReport:
    return SolveReport.from_dict(json.loads(text))

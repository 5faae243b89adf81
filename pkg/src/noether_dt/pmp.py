"""Hamiltonian kernels of the discrete maximum principle and an extremal solver.

The solver stacks, for a horizon of ``N`` periods, the dynamics equations,
the adjoint recursion and the stationarity form of the maximality condition
into one square nonlinear system and applies damped Newton.  The Newton
matrix is assembled from per-period blocks computed with nested dual numbers,
so it is exact up to rounding.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from . import dual
from .errors import DomainError, ModelError
from .model import ControlSet, Extremal, ProblemSpec, Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    max_newton_iters: int = 100
    newton_tol: float = 1e-10
    backtrack: float = 0.5
    min_step: float = 2.0**-30
    abnormal_fallback: bool = True
    # 0 disables the grid certification of the maximality condition
    maximality_grid_points: int = 0

    def __post_init__(self):
        if self.max_newton_iters < 1:
            raise ModelError("max_newton_iters must be >= 1")
        if not self.newton_tol > 0:
            raise ModelError("newton_tol must be positive")
        if not 0 < self.backtrack < 1:
            raise ModelError("backtrack factor must lie in (0, 1)")
        if not 0 < self.min_step <= 1:
            raise ModelError("min_step must lie in (0, 1]")
        if self.maximality_grid_points < 0:
            raise ModelError("maximality_grid_points must be >= 0")


@dataclass(frozen=True)
class ResidualReport:
    dynamics_res: float
    adjoint_res: float
    stationarity_res: float
    maximality_ok: bool
    worst_k: int

    @property
    def max_residual(self) -> float:
        return max(self.dynamics_res, self.adjoint_res, self.stationarity_res)

    def to_dict(self) -> dict:
        return {**asdict(self), "max_residual": self.max_residual}


@dataclass(frozen=True)
class MaximalityReport:
    ok: bool
    stationarity_res: float
    worst_k: int
    in_control_set: bool
    grid_checked: bool
    grid_violation: float


@dataclass(frozen=True)
class SolveResult:
    extremal: Extremal
    report: ResidualReport
    converged: bool
    branch: str  # "normal" or "abnormal"
    iterations: int
    abnormal_attempted: bool
    message: str = ""


# ------------------------------------------------------------------ kernels


def hamiltonian(p: ProblemSpec, k, x, u, psi0, psi):
    """H = psi0 * L(k,x,u) + psi . phi(k,x,u)."""
    h = dual.mul(psi0, p.L(k, x, u))
    for c, f in zip(psi, p.phi(k, x, u)):
        h = dual.add(h, dual.mul(c, f))
    return h


def _h_gradient(p: ProblemSpec, k, x, u, psi0, psi_next):
    n = p.n

    def h(z):
        return hamiltonian(p, k, z[:n], z[n:], psi0, psi_next)

    g = dual.gradient(h, list(x) + list(u))
    return g[:n], g[n:]


def adjoint_step(p: ProblemSpec, k, x, u, psi0, psi_next):
    """dH/dx at (k, x, u, psi0, psi(k+1)); the right side of the adjoint recursion."""
    n = p.n
    u = list(u)
    return dual.gradient(lambda z: hamiltonian(p, k, z, u, psi0, psi_next), list(x)[:n])


def _stationarity(omega: ControlSet, u, hu):
    if not omega.is_box:
        return list(hu)
    moved = omega.project([dual.add(a, b) for a, b in zip(u, hu)])
    return [dual.sub(a, b) for a, b in zip(u, moved)]


def stationarity_residual(p: ProblemSpec, k, x, u, psi0, psi_next):
    """dH/du, or the projected residual ``u - clamp(u + dH/du)`` on a box."""
    x = list(x)
    hu = dual.gradient(lambda z: hamiltonian(p, k, x, z, psi0, psi_next), list(u))
    return dual._vector(_stationarity(p.omega, u, hu))


def _inf(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.max(np.abs(v))) if v.size else 0.0


def extremal_residuals(p: ProblemSpec, e: Extremal, tol: float = 1e-10) -> ResidualReport:
    """Dynamics, adjoint and stationarity defects of a candidate extremal."""
    t = e.trajectory
    worst = (-1.0, p.M)

    def note(val, k):
        nonlocal worst
        if val > worst[0]:
            worst = (val, k)
        return val

    dyn = note(_inf(t.x_at(p.M) - np.asarray(p.x_start)), p.M)
    if p.x_end is not None:
        xe = t.x_at(p.horizon.end)
        mism = [abs(xe[j] - v) for j, v in enumerate(p.x_end) if v is not None]
        dyn = max(dyn, note(max(mism, default=0.0), p.horizon.end))
    adj = stat = 0.0
    in_set = True
    for k in p.horizon.control_times:
        x, u, pn = t.x_at(k), t.u_at(k), e.psi_at(k + 1)
        dyn = max(dyn, note(_inf(t.x_at(k + 1) - np.asarray(p.phi(k, x, u))), k))
        hx, hu = _h_gradient(p, k, x, u, e.psi0, pn)
        if k > p.M:
            adj = max(adj, note(_inf(e.psi_at(k) - hx), k))
        stat = max(stat, note(_inf(_stationarity(p.omega, u, hu)), k))
        in_set = in_set and p.omega.contains(u, tol)
    return ResidualReport(dyn, adj, stat, bool(stat <= tol and in_set), worst[1])


def maximality_check(p: ProblemSpec, e: Extremal, opts: Optional[SolverOptions] = None,
                     tol: Optional[float] = None):
    """Check the maximality condition period by period.

    Always checks stationarity (projected on boxes).  With
    ``opts.maximality_grid_points > 0`` and a bounded box, also samples a
    uniform grid over the box and requires ``H(u_grid) <= H(u(k)) + tol``.
    Returns ``(ok, MaximalityReport)``.
    """
    opts = opts or SolverOptions()
    tol = opts.newton_tol if tol is None else tol
    t = e.trajectory
    stat, worst_k, in_set = 0.0, p.M, True
    grid_violation = 0.0
    lo, hi = p.omega.bounds(p.r)
    grid = (
        opts.maximality_grid_points > 0
        and p.omega.is_box
        and all(math.isfinite(v) for v in (*lo, *hi))
    )
    if grid:
        axes = [np.linspace(a, b, opts.maximality_grid_points) for a, b in zip(lo, hi)]
    for k in p.horizon.control_times:
        x, u, pn = t.x_at(k), t.u_at(k), e.psi_at(k + 1)
        s = _inf(stationarity_residual(p, k, x, u, e.psi0, pn))
        if s > stat:
            stat, worst_k = s, k
        in_set = in_set and p.omega.contains(u, tol)
        if grid:
            h0 = hamiltonian(p, k, x, u, e.psi0, pn)
            slack = tol * (1.0 + abs(h0))
            for ug in itertools.product(*axes):
                excess = hamiltonian(p, k, x, ug, e.psi0, pn) - h0 - slack
                if excess > grid_violation:
                    grid_violation = excess
                    worst_k = k
    ok = stat <= tol and in_set and grid_violation <= 0.0
    return ok, MaximalityReport(ok, stat, worst_k, in_set, grid, grid_violation)


# ------------------------------------------------------------ stacked system


class PontryaginSystem:
    """Residual and Newton matrix of the stacked extremal equations.

    Unknowns ``z = [x(M+1..M+N-1), u(M..M+N-1), psi(M+1..M+N)]``.  Equations:
    dynamics for k = M..M+N-1 (boundary states substituted), adjoint for
    k = M+1..M+N-1, stationarity for k = M..M+N-1, and with ``normalize`` a
    final row ``sum_k |psi(k)|^2 - 1``.
    """

    def __init__(self, p: ProblemSpec, psi0: float, normalize: bool = False):
        self.p = p
        self.psi0 = psi0
        self.normalize = normalize
        n, r, N = p.n, p.r, p.N
        self.nx, self.nu, self.npsi = (N - 1) * n, N * r, N * n
        self.size = self.nx + self.nu + self.npsi
        self.n_eq = N * n + (N - 1) * n + N * r + (1 if normalize else 0)
        self.x_first = np.asarray(p.x_start, dtype=float)
        self.x_last = np.asarray(p.x_end, dtype=float)

    # layout helpers
    def _xcol(self, j):
        return (j - 1) * self.p.n if 1 <= j <= self.p.N - 1 else None

    def _ucol(self, j):
        return self.nx + j * self.p.r

    def _psicol(self, j):  # psi(M+j), j = 1..N
        return self.nx + self.nu + (j - 1) * self.p.n

    def pack(self, x_interior, u, psi) -> np.ndarray:
        return np.concatenate([
            np.asarray(x_interior, dtype=float).ravel(),
            np.asarray(u, dtype=float).ravel(),
            np.asarray(psi, dtype=float).ravel(),
        ])

    def unpack(self, z):
        p = self.p
        n, r, N = p.n, p.r, p.N
        xs = np.vstack([self.x_first, z[: self.nx].reshape(N - 1, n), self.x_last])
        us = z[self.nx: self.nx + self.nu].reshape(N, r)
        psis = z[self.nx + self.nu:].reshape(N, n)
        return xs, us, psis

    def extremal(self, z) -> Extremal:
        xs, us, psis = self.unpack(z)
        return Extremal(Trajectory(self.p.M, xs, us), self.psi0, psis)

    def _stage(self, k, x, u, pn, need_adjoint=True):
        p = self.p
        phi = p.phi(k, x, u)
        hx, hu = _h_gradient(p, k, x, u, self.psi0, pn)
        return list(phi), (list(hx) if need_adjoint else []), _stationarity(p.omega, u, hu)

    def residual(self, z) -> np.ndarray:
        p = self.p
        n, r, N = p.n, p.r, p.N
        xs, us, psis = self.unpack(z)
        F = np.empty(self.n_eq)
        adj0, stat0 = N * n, N * n + (N - 1) * n
        for j in range(N):
            k = p.M + j
            phi, hx, st = self._stage(k, xs[j], us[j], psis[j], need_adjoint=j > 0)
            F[j * n:(j + 1) * n] = xs[j + 1] - np.asarray(phi, dtype=float)
            if j > 0:
                F[adj0 + (j - 1) * n: adj0 + j * n] = psis[j - 1] - np.asarray(hx, dtype=float)
            F[stat0 + j * r: stat0 + (j + 1) * r] = np.asarray(st, dtype=float)
        if self.normalize:
            F[-1] = float(np.sum(psis * psis)) - 1.0
        return F

    def jacobian(self, z) -> np.ndarray:
        p = self.p
        n, r, N = p.n, p.r, p.N
        xs, us, psis = self.unpack(z)
        J = np.zeros((self.n_eq, self.size))
        adj0, stat0 = N * n, N * n + (N - 1) * n
        eye = np.eye(n)
        for j in range(N):
            k = p.M + j

            def local(v, k=k, j=j):
                phi, hx, st = self._stage(k, v[:n], v[n:n + r], v[n + r:], need_adjoint=j > 0)
                return phi + hx + st

            point = np.concatenate([xs[j], us[j], psis[j]])
            B = dual.jacobian(local, point)
            Bphi = B[:n]
            Bhx = B[n:2 * n] if j > 0 else None
            Bst = B[n + (n if j > 0 else 0):]
            cx, cu, cp = self._xcol(j), self._ucol(j), self._psicol(j + 1)
            # dynamics rows
            R = j * n
            nxt = self._xcol(j + 1)
            if nxt is not None:
                J[R:R + n, nxt:nxt + n] += eye
            if cx is not None:
                J[R:R + n, cx:cx + n] -= Bphi[:, :n]
            J[R:R + n, cu:cu + r] -= Bphi[:, n:n + r]
            # adjoint rows
            if j > 0:
                R = adj0 + (j - 1) * n
                own = self._psicol(j)
                J[R:R + n, own:own + n] += eye
                if cx is not None:
                    J[R:R + n, cx:cx + n] -= Bhx[:, :n]
                J[R:R + n, cu:cu + r] -= Bhx[:, n:n + r]
                J[R:R + n, cp:cp + n] -= Bhx[:, n + r:]
            # stationarity rows
            R = stat0 + j * r
            if cx is not None:
                J[R:R + r, cx:cx + n] += Bst[:, :n]
            J[R:R + r, cu:cu + r] += Bst[:, n:n + r]
            J[R:R + r, cp:cp + n] += Bst[:, n + r:]
        if self.normalize:
            c = self._psicol(1)
            J[-1, c:] = 2.0 * psis.ravel()
        return J


# ------------------------------------------------------------------- solver


def _rcond(J):
    """LAPACK 1-norm reciprocal condition estimate (0 for exactly singular J)."""
    if J.shape[0] != J.shape[1]:
        return 0.0, None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = scipy.linalg.lu_factor(J, check_finite=False)
        rcond, _ = lapack.dgecon(lu, np.linalg.norm(J, 1), norm="1")
    return float(rcond), (lu, piv)


SINGULAR_RCOND = 1e-15


def _newton_step(J, F, least_squares: bool, iteration: int):
    """Newton direction, or a minimum-norm least-squares direction when J is singular."""
    if least_squares:
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        return step, ""
    rcond, factors = _rcond(J)
    if rcond > SINGULAR_RCOND:
        return scipy.linalg.lu_solve(factors, -F, check_finite=False), ""
    cond = math.inf if rcond == 0 else 1.0 / rcond
    step, *_ = np.linalg.lstsq(J, -F, rcond=None)
    return step, f"singular Jacobian at iteration {iteration} (condition estimate {cond:.3g})"


def _safe_residual(system, z):
    try:
        F = system.residual(z)
    except DomainError:
        return None
    return F if np.all(np.isfinite(F)) else None


def _newton(system: PontryaginSystem, z0, opts: SolverOptions, least_squares: bool):
    """Damped Newton (Gauss-Newton when ``least_squares``).

    Returns ``(z, converged, iterations, notes)``; ``z`` is the best iterate and
    ``notes`` collects singular-matrix events and the failure reason.
    """
    z = z0
    notes = []
    F = _safe_residual(system, z)
    if F is None:
        return z, False, 0, ["residual undefined at the initial guess"]
    best_z, best = z, _inf(F)
    for it in range(opts.max_newton_iters):
        res = _inf(F)
        log.debug("newton iteration %d: residual %.3e", it, res)
        if res <= opts.newton_tol:
            return z, True, it, notes
        try:
            J = system.jacobian(z)
        except DomainError as exc:
            return best_z, False, it, notes + [f"derivative undefined at iteration {it}: {exc}"]
        step, msg = _newton_step(J, F, least_squares, it)
        if msg:
            log.info(msg)
            notes.append(msg)
        merit = float(F @ F)
        alpha = 1.0
        while alpha >= opts.min_step:
            z_new = z + alpha * step
            F_new = _safe_residual(system, z_new)
            if F_new is not None and float(F_new @ F_new) <= (1.0 - 1e-4 * alpha) ** 2 * merit:
                break
            alpha *= opts.backtrack
        else:
            return best_z, False, it + 1, notes + [f"line search failed at iteration {it}"]
        z, F = z_new, F_new
        if _inf(F) < best:
            best_z, best = z, _inf(F)
    if _inf(F) <= opts.newton_tol:
        return z, True, opts.max_newton_iters, notes
    return best_z, False, opts.max_newton_iters, notes + [
        f"no convergence after {opts.max_newton_iters} iterations (residual {best:.3e})"
    ]


def initial_guess(p: ProblemSpec, seed: Optional[Trajectory] = None):
    """Starting point for Newton: linear state interpolation, zero co-states.

    Controls start at the default point of Omega and take one linearized
    least-squares step towards reproducing the interpolated states, which
    avoids the rank loss bilinear dynamics show at u = 0.
    """
    if seed is not None:
        if seed.M != p.M or seed.N != p.N:
            raise ModelError("seed trajectory does not match the problem horizon")
        return seed.x[1:-1].copy(), seed.u.copy(), np.zeros((p.N, p.n))
    a = np.asarray(p.x_start, dtype=float)
    b = np.asarray(p.x_end, dtype=float)
    theta = np.arange(0, p.N + 1)[:, None] / p.N
    xs = (1 - theta) * a + theta * b
    us = np.tile(p.omega.default_point(p.r), (p.N, 1))
    for j, k in enumerate(p.horizon.control_times):
        us[j] = _fit_control(p, k, xs[j], xs[j + 1], us[j])
    return xs[1:-1].reshape(p.N - 1, p.n), us, np.zeros((p.N, p.n))


def _fit_control(p: ProblemSpec, k, x, x_next, u_ref):
    """One linearized least-squares step towards phi(k, x, u) = x_next, kept in Omega.

    Falls back to ``u_ref`` where phi is undefined.
    """
    if p.r == 0:
        return u_ref
    try:
        phi0 = np.asarray(p.phi(k, x, u_ref), dtype=float)
        B = dual.jacobian(lambda v: p.phi(k, x, v), list(u_ref))
    except DomainError:
        return u_ref
    du, *_ = np.linalg.lstsq(B, x_next - phi0, rcond=None)
    return np.asarray(p.omega.project(u_ref + du), dtype=float)


def multiplier_estimate(p: ProblemSpec, xs, us, psi0: float) -> np.ndarray:
    """Least-squares co-states for fixed states and controls.

    The adjoint recursion and the unconstrained stationarity condition are
    affine in psi; solving them jointly gives a start on which projected
    stationarity on a box still depends on psi.
    """
    n, r, N = p.n, p.r, p.N
    rows, rhs = [], []
    for j, k in enumerate(p.horizon.control_times):
        x, u = xs[j], us[j]
        z = [*x, *u]
        try:
            grad_L = dual.gradient(lambda v: p.L(k, v[:n], v[n:]), z)
            jac = dual.jacobian(lambda v: p.phi(k, v[:n], v[n:]), z)
        except DomainError:
            return np.zeros((N, n))
        # psi(k+1) enters through phi_x^T psi and phi_u^T psi
        col = j * n  # psi(M+1+j)
        if j > 0:
            for c in range(n):
                row = np.zeros(N * n)
                row[col - n + c] = 1.0
                row[col:col + n] -= jac[:, c]
                rows.append(row)
                rhs.append(psi0 * grad_L[c])
        for c in range(r):
            row = np.zeros(N * n)
            row[col:col + n] = jac[:, n + c]
            rows.append(row)
            rhs.append(-psi0 * grad_L[n + c])
    if not rows:
        return np.zeros((N, n))
    sol, *_ = np.linalg.lstsq(np.asarray(rows), np.asarray(rhs), rcond=None)
    return sol.reshape(N, n)


def solve_extremal(p: ProblemSpec, opts: Optional[SolverOptions] = None,
                   seed: Optional[Trajectory] = None) -> SolveResult:
    """Compute an extremal of ``p``.

    The normal branch fixes ``psi0 = -1`` and starts from the least-squares
    multiplier estimate at the initial states and controls.  If it fails and
    ``opts.abnormal_fallback`` is set, ``psi0 = 0`` is tried with the extra
    normalization ``sum_k |psi(k)|^2 = 1`` (solved by Gauss-Newton, since the
    abnormal system is overdetermined by one equation).  A failed solve
    returns the best iterate with ``converged=False``.
    """
    opts = opts or SolverOptions()
    if not p.end_fixed:
        raise ModelError(
            "solve_extremal needs every terminal coordinate fixed; free endpoints are not supported"
        )
    x0, u0, psi_guess = initial_guess(p, seed)

    if seed is None or not np.any(psi_guess):
        xs = np.vstack([np.asarray(p.x_start, dtype=float), x0, np.asarray(p.x_end, dtype=float)])
        psi_guess = multiplier_estimate(p, xs, u0, -1.0)
    normal = PontryaginSystem(p, -1.0)
    z, ok, iters, notes = _newton(normal, normal.pack(x0, u0, psi_guess), opts, False)
    e = normal.extremal(z)
    if ok and not np.any(e.psi):
        rcond, _ = _rcond(normal.jacobian(z))
        if rcond <= SINGULAR_RCOND:
            # psi == 0 on a singular system: the multipliers carry no information
            ok = False
            notes.append("degenerate solution: zero co-states and singular Jacobian")
    msg = "; ".join(notes)
    if ok:
        return SolveResult(e, extremal_residuals(p, e, opts.newton_tol), True, "normal",
                           iters, False, msg)
    log.info("normal branch failed: %s", msg)
    fallback = SolveResult(e, extremal_residuals(p, e, opts.newton_tol), False, "normal",
                           iters, False, msg)
    if not opts.abnormal_fallback:
        return fallback

    abnormal = PontryaginSystem(p, 0.0, normalize=True)
    psi_a = np.full((p.N, p.n), 1.0 / math.sqrt(p.N * p.n))
    za, ok_a, iters_a, notes_a = _newton(abnormal, abnormal.pack(x0, u0, psi_a), opts, True)
    msg_a = "; ".join(notes_a)
    ea = abnormal.extremal(za)
    if ok_a and ea.nontrivial:
        return SolveResult(ea, extremal_residuals(p, ea, opts.newton_tol), True, "abnormal",
                           iters + iters_a, True, f"normal branch failed: {msg}")
    log.info("abnormal branch failed: %s", msg_a)
    return SolveResult(
        fallback.extremal, fallback.report, False, "normal", iters + iters_a, True,
        f"normal branch: {msg}; abnormal branch: {msg_a or 'trivial multipliers'}",
    )

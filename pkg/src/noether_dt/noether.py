"""Quasi-invariance checks and Noether integrals for discrete optimal control.

A family ``X(k,x,u,s)``, ``u(k,s)``, ``Phi(k,x,u,s)`` leaves the problem
quasi-invariant when, for every parameter ``s_i``, the s-derivatives at
``s = 0`` of

* ``L(k, X, u(k,s)) - L(k, x, u) - (Phi(k+1, ...) - Phi(k, ...))`` and
* ``phi(k, X, u(k,s)) - X(k+1, x(k+1), u(k+1), s)``

vanish along admissible trajectories.  The two residuals are checked
independently.  Both need data at ``k+1``, so they are evaluated for
``k = M..M+N-2``.

Along any extremal the quantity ``psi0 * dPhi/ds_i + psi(k) . dX/ds_i`` is then
independent of ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import dual
from .errors import DomainError, ModelError
from .model import (
    Extremal,
    ProblemSpec,
    SymmetryFamily,
    Trajectory,
    dynamics_residual,
    rollout,
)

INVARIANCE_TOL = 1e-9
CONSERVATION_RTOL = 1e-8
SAMPLE_SEED = 0x5EED


def _unit(rho: int, i: int) -> list[float]:
    if not 0 <= i < rho:
        raise ModelError(f"parameter index {i} out of range for rho={rho}")
    d = [0.0] * rho
    d[i] = 1.0
    return d


def _check_k(p: ProblemSpec, k: int) -> None:
    if not p.M <= k <= p.M + p.N - 2:
        raise ModelError(
            f"k={k} outside M..M+N-2 = {p.M}..{p.M + p.N - 2} (needs data at k+1)"
        )


def lagrangian_residual_derivative(p: ProblemSpec, fam: SymmetryFamily, t: Trajectory,
                                   k: int, i: int) -> float:
    """d/ds_i at 0 of L(k, X, u(k,s)) - L(k, x, u) - (Phi(k+1,.) - Phi(k,.)); ``i`` is 0-based."""
    _check_k(p, k)
    x, u = t.x_at(k), t.u_at(k)
    x1, u1 = t.x_at(k + 1), t.u_at(k + 1)

    def residual(s):
        X = fam.transform(k, x, u, s)
        us = fam.control(k, x, u, s)
        dphi = fam.gauge(k + 1, x1, u1, s) - fam.gauge(k, x, u, s)
        return p.L(k, X, us) - dphi

    return float(dual.directional_derivative(residual, [0.0] * fam.rho, _unit(fam.rho, i)))


def dynamics_residual_derivative(p: ProblemSpec, fam: SymmetryFamily, t: Trajectory,
                                 k: int, i: int) -> np.ndarray:
    """d/ds_i at 0 of phi(k, X, u(k,s)) - X(k+1, x(k+1), u(k+1), s), one entry per state."""
    _check_k(p, k)
    x, u = t.x_at(k), t.u_at(k)
    x1, u1 = t.x_at(k + 1), t.u_at(k + 1)

    def residual(s):
        X = fam.transform(k, x, u, s)
        us = fam.control(k, x, u, s)
        nxt = fam.transform(k + 1, x1, u1, s)
        return [a - b for a, b in zip(p.phi(k, X, us), nxt)]

    _, d = dual.jvp(residual, [0.0] * fam.rho, _unit(fam.rho, i))
    return np.asarray(d, dtype=float)


def sample_trajectories(p: ProblemSpec, count: int = 10, seed: int = SAMPLE_SEED,
                        max_attempts: Optional[int] = None) -> list[Trajectory]:
    """Rollouts of uniform [-1, 1] controls (clipped to Omega) from perturbed starts.

    Rollouts that leave the domain of ``phi`` are redrawn.
    """
    rng = np.random.default_rng(seed)
    start = np.asarray(p.x_start, dtype=float)
    out: list[Trajectory] = []
    attempts = max_attempts if max_attempts is not None else 20 * count
    for _ in range(attempts):
        if len(out) == count:
            break
        x0 = start + rng.uniform(-1.0, 1.0, p.n)
        u = rng.uniform(-1.0, 1.0, (p.N, p.r))
        u = np.array([np.asarray(p.omega.project(row), dtype=float) for row in u]).reshape(p.N, p.r)
        try:
            t = rollout(p, u, x0)
        except DomainError:
            continue
        if np.all(np.isfinite(t.x)):
            out.append(t)
    if len(out) < count:
        raise ModelError(f"only {len(out)} of {count} sample rollouts stayed in the domain")
    return out


@dataclass
class InvarianceReport:
    lagrangian: np.ndarray  # (rho,) max |derivative| per parameter
    dynamics: np.ndarray  # (rho, n) max |derivative| per parameter and component
    max_abs: float
    tol: float
    passed: bool
    worst: Optional[tuple] = None  # (trajectory index, k, parameter index, kind)

    def to_dict(self) -> dict:
        return {
            "lagrangian_residual_deriv": self.lagrangian.tolist(),
            "dynamics_residual_deriv": self.dynamics.tolist(),
            "max_abs": self.max_abs,
            "tol": self.tol,
            "pass": self.passed,
            "worst": list(self.worst) if self.worst else None,
        }


def check_quasi_invariance(p: ProblemSpec, fam: SymmetryFamily,
                           trajectories: Optional[Sequence[Trajectory]] = None,
                           tol: float = INVARIANCE_TOL) -> InvarianceReport:
    """Largest residual s-derivative over all samples, parameters and k = M..M+N-2."""
    fam.validate_for(p)
    if trajectories is None:
        trajectories = sample_trajectories(p)
    lag = np.zeros(fam.rho)
    dyn = np.zeros((fam.rho, p.n))
    worst, worst_val = None, -1.0
    for j, t in enumerate(trajectories):
        res = dynamics_residual(p, t)
        if not res <= 1e-9 * (1.0 + float(np.max(np.abs(t.x)))):
            raise ModelError(f"sample trajectory {j} is not admissible (dynamics residual {res:.3e})")
        for k in range(p.M, p.M + p.N - 1):
            for i in range(fam.rho):
                a = abs(lagrangian_residual_derivative(p, fam, t, k, i))
                b = np.abs(dynamics_residual_derivative(p, fam, t, k, i))
                lag[i] = max(lag[i], a)
                dyn[i] = np.maximum(dyn[i], b)
                if a > worst_val:
                    worst, worst_val = (j, k, i, "lagrangian"), a
                if b.size and b.max() > worst_val:
                    worst, worst_val = (j, k, i, f"dynamics[{int(b.argmax())}]"), float(b.max())
    max_abs = float(max(lag.max(initial=0.0), dyn.max(initial=0.0)))
    return InvarianceReport(lag, dyn, max_abs, tol, bool(max_abs <= tol), worst)


def noether_integral(fam: SymmetryFamily, e: Extremal, k: int, i: int,
                     u_override=None) -> float:
    """psi0 * dPhi/ds_i + psi(k) . dX/ds_i at s = 0, with ``i`` 0-based.

    Valid for ``k = M+1..M+N-1``; ``u_override`` supplies the control when
    evaluating at ``k = M+N``.
    """
    t = e.trajectory
    if u_override is None:
        if not t.M + 1 <= k <= t.M + t.N - 1:
            raise ModelError(f"k={k} outside M+1..M+N-1 = {t.M + 1}..{t.M + t.N - 1}")
        u = t.u_at(k)
    else:
        u = np.asarray(u_override, dtype=float)
    x = t.x_at(k)
    psi = e.psi_at(k)

    def integrand(s):
        X = fam.transform(k, x, u, s)
        return [fam.gauge(k, x, u, s), *X]

    _, d = dual.jvp(integrand, [0.0] * fam.rho, _unit(fam.rho, i))
    d = np.asarray(d, dtype=float)
    return float(e.psi0 * d[0] + psi @ d[1:])


@dataclass
class ConservationReport:
    ks: list
    values: np.ndarray  # (rho, len(ks))
    drift: np.ndarray  # (rho,)
    tol: np.ndarray  # (rho,)
    passed: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": list(self.ks),
            "values": self.values.tolist(),
            "drift": self.drift.tolist(),
            "tol": self.tol.tolist(),
            "pass": self.passed,
            "notes": list(self.notes),
        }


def conservation_report(fam: SymmetryFamily, e: Extremal,
                        rtol: float = CONSERVATION_RTOL) -> ConservationReport:
    """Noether integrals over k = M+1..M+N-1, plus k = M+N when X and Phi ignore u.

    Each parameter passes when max - min <= rtol * (1 + max |I|).
    """
    t = e.trajectory
    ks = list(range(t.M + 1, t.M + t.N))
    notes = []
    end = t.M + t.N
    include_end = not fam.depends_on_controls
    if include_end:
        ks.append(end)
    else:
        notes.append(f"k={end} skipped: X or Phi depends on u, and u({end}) is undefined")
    vals = np.zeros((fam.rho, len(ks)))
    for i in range(fam.rho):
        for j, k in enumerate(ks):
            if k == end:
                vals[i, j] = noether_integral(fam, e, k, i, u_override=t.u_at(end - 1))
            else:
                vals[i, j] = noether_integral(fam, e, k, i)
    if ks:
        drift = vals.max(axis=1) - vals.min(axis=1)
        tol = rtol * (1.0 + np.abs(vals).max(axis=1))
    else:
        drift = np.zeros(fam.rho)
        tol = np.full(fam.rho, rtol)
    return ConservationReport(ks, vals, drift, tol, bool(np.all(drift <= tol)), notes)

"""Problem data for discrete-time optimal control in Lagrange form.

A problem minimizes (or extremizes) ``sum_{k=M}^{M+N-1} L(k, x(k), u(k))``
subject to ``x(k+1) = phi(k, x(k), u(k))``, fixed endpoints and
``u(k) in Omega``.  States are indexed ``M..M+N``, controls ``M..M+N-1`` and
co-states ``M+1..M+N``; all sequences are stored as numpy arrays whose row 0
corresponds to the first valid index.

``L`` and ``phi`` are assumed convex in ``u`` for fixed ``(k, x)``; this is
not checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import dual
from .errors import DomainError, ModelError
from .expr import Expr, check_vocabulary, compile_expr, free_vars


def state_names(n: int) -> list[str]:
    return [f"x{i}" for i in range(1, n + 1)]


def control_names(r: int) -> list[str]:
    return [f"u{i}" for i in range(1, r + 1)]


def next_state_names(n: int) -> list[str]:
    return [f"xp{i}" for i in range(1, n + 1)]


def param_names(rho: int) -> list[str]:
    return [f"s{i}" for i in range(1, rho + 1)]


@dataclass(frozen=True)
class Horizon:
    M: int
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ModelError(f"empty horizon: N must be positive, got {self.N}")

    @property
    def control_times(self) -> range:
        return range(self.M, self.M + self.N)

    @property
    def state_times(self) -> range:
        return range(self.M, self.M + self.N + 1)

    @property
    def end(self) -> int:
        return self.M + self.N


@dataclass(frozen=True)
class ControlSet:
    kind: str = "free"
    lower: tuple = ()
    upper: tuple = ()

    def __post_init__(self):
        if self.kind not in ("free", "box"):
            raise ModelError(f"unknown control set kind {self.kind!r}")
        if self.kind == "box":
            if len(self.lower) != len(self.upper):
                raise ModelError("box bounds must have equal length")
            if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
                raise ModelError("box lower bound exceeds upper bound")

    @classmethod
    def free(cls) -> "ControlSet":
        return cls("free")

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "ControlSet":
        return cls("box", tuple(float(v) for v in lower), tuple(float(v) for v in upper))

    @property
    def is_box(self) -> bool:
        return self.kind == "box"

    def bounds(self, r: int):
        if self.is_box:
            return list(self.lower), list(self.upper)
        return [-math.inf] * r, [math.inf] * r

    def project(self, u):
        """Componentwise projection onto the set (works on duals)."""
        if not self.is_box:
            return list(u)
        return [dual.clamp(v, lo, hi) for v, lo, hi in zip(u, self.lower, self.upper)]

    def contains(self, u, tol: float = 0.0) -> bool:
        if not self.is_box:
            return True
        return all(lo - tol <= v <= hi + tol for v, lo, hi in zip(u, self.lower, self.upper))

    def default_point(self, r: int) -> np.ndarray:
        """Box midpoint where both bounds are finite, else 0 projected into the set."""
        if not self.is_box:
            return np.zeros(r)
        out = []
        for lo, hi in zip(self.lower, self.upper):
            if math.isfinite(lo) and math.isfinite(hi):
                out.append(0.5 * (lo + hi))
            else:
                out.append(min(max(0.0, lo), hi))
        return np.asarray(out, dtype=float)


@dataclass(frozen=True)
class ProblemSpec:
    horizon: Horizon
    n: int
    r: int
    lagrangian: Expr
    dynamics: tuple
    omega: ControlSet = field(default_factory=ControlSet.free)
    x_start: tuple = ()
    x_end: Optional[tuple] = None  # entries may be None for free coordinates

    _L: object = field(init=False, repr=False, compare=False)
    _phi: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.r < 0:
            raise ModelError("state dimension must be >= 1 and control dimension >= 0")
        if len(self.dynamics) != self.n:
            raise ModelError(f"expected {self.n} dynamics expressions, got {len(self.dynamics)}")
        if len(self.x_start) != self.n:
            raise ModelError(f"x_start must have length {self.n}")
        if self.x_end is not None and len(self.x_end) != self.n:
            raise ModelError(f"x_end must have length {self.n}")
        if self.omega.is_box and len(self.omega.lower) != self.r:
            raise ModelError(f"box bounds must have length {self.r}")
        allowed = ["k", *state_names(self.n), *control_names(self.r)]
        check_vocabulary(self.lagrangian, allowed, "lagrangian")
        for i, e in enumerate(self.dynamics, 1):
            check_vocabulary(e, allowed, f"dynamics phi{i}")
        object.__setattr__(self, "_L", compile_expr(self.lagrangian))
        object.__setattr__(self, "_phi", [compile_expr(e) for e in self.dynamics])
        object.__setattr__(self, "_xn", state_names(self.n))
        object.__setattr__(self, "_un", control_names(self.r))

    @property
    def M(self) -> int:
        return self.horizon.M

    @property
    def N(self) -> int:
        return self.horizon.N

    @property
    def end_fixed(self) -> bool:
        return self.x_end is not None and all(v is not None for v in self.x_end)

    @property
    def end_free(self) -> bool:
        return self.x_end is None or all(v is None for v in self.x_end)

    def env(self, k, x, u) -> dict:
        env = dict(zip(self._xn, x))
        env.update(zip(self._un, u))
        env["k"] = float(k)
        return env

    def L(self, k, x, u):
        return self._L(self.env(k, x, u))

    def phi(self, k, x, u) -> list:
        env = self.env(k, x, u)
        return [f(env) for f in self._phi]


@dataclass(frozen=True, eq=False)
class Trajectory:
    M: int
    x: np.ndarray  # shape (N+1, n), row j is x(M+j)
    u: np.ndarray  # shape (N, r), row j is u(M+j)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        u = np.asarray(self.u, dtype=float)
        if u.ndim == 1:
            u = u.reshape(len(u), -1) if len(u) else u.reshape(0, 0)
        if x.shape[0] != u.shape[0] + 1:
            raise ModelError(
                f"trajectory has {x.shape[0]} states but {u.shape[0]} controls"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    def x_at(self, k: int) -> np.ndarray:
        j = k - self.M
        if not 0 <= j <= self.N:
            raise IndexError(f"state index {k} outside {self.M}..{self.M + self.N}")
        return self.x[j]

    def u_at(self, k: int) -> np.ndarray:
        j = k - self.M
        if not 0 <= j < self.N:
            raise IndexError(f"control index {k} outside {self.M}..{self.M + self.N - 1}")
        return self.u[j]


@dataclass(frozen=True, eq=False)
class Extremal:
    trajectory: Trajectory
    psi0: float
    psi: np.ndarray  # shape (N, n), row j is psi(M+1+j)

    def __post_init__(self):
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        if psi.shape[0] != self.trajectory.N:
            raise ModelError("co-state sequence must have N entries (indices M+1..M+N)")
        if self.psi0 > 0:
            raise ModelError("psi0 must be <= 0")
        object.__setattr__(self, "psi", psi)

    @property
    def M(self) -> int:
        return self.trajectory.M

    @property
    def N(self) -> int:
        return self.trajectory.N

    @property
    def is_normal(self) -> bool:
        return self.psi0 != 0

    @property
    def nontrivial(self) -> bool:
        return abs(self.psi0) + float(np.max(np.abs(self.psi), initial=0.0)) > 0

    def psi_at(self, k: int) -> np.ndarray:
        j = k - self.M - 1
        if not 0 <= j < self.N:
            raise IndexError(f"co-state index {k} outside {self.M + 1}..{self.M + self.N}")
        return self.psi[j]

    def scaled(self, lam: float) -> "Extremal":
        return Extremal(self.trajectory, lam * self.psi0, lam * self.psi)


@dataclass(frozen=True)
class SymmetryFamily:
    """rho-parameter transformation ``X(k,x,u,s)``, control deformation ``u(k,s)``
    and gauge term ``Phi(k,x,u,s)``."""

    rho: int
    X: tuple
    Phi: Expr
    u_def: tuple
    epsilon: Optional[float] = None

    _X: object = field(init=False, repr=False, compare=False)
    _Phi: object = field(init=False, repr=False, compare=False)
    _U: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.rho < 1:
            raise ModelError("a symmetry family needs at least one parameter")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ModelError("epsilon must be positive")
        allowed = self.vocabulary
        for i, e in enumerate(self.X, 1):
            check_vocabulary(e, allowed, f"symmetry X{i}")
        check_vocabulary(self.Phi, allowed, "symmetry Phi")
        for i, e in enumerate(self.u_def, 1):
            check_vocabulary(e, allowed, f"symmetry u{i}")
        object.__setattr__(self, "_X", [compile_expr(e) for e in self.X])
        object.__setattr__(self, "_Phi", compile_expr(self.Phi))
        object.__setattr__(self, "_U", [compile_expr(e) for e in self.u_def])
        object.__setattr__(self, "_names", (state_names(self.n), control_names(self.r),
                                            param_names(self.rho)))

    @classmethod
    def identity(cls, n: int, r: int, rho: int = 1) -> "SymmetryFamily":
        from .expr import Num, Var

        return cls(
            rho,
            tuple(Var(v) for v in state_names(n)),
            Num(0.0),
            tuple(Var(v) for v in control_names(r)),
        )

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def r(self) -> int:
        return len(self.u_def)

    @property
    def vocabulary(self) -> list[str]:
        return ["k", *state_names(self.n), *control_names(self.r), *param_names(self.rho)]

    @property
    def depends_on_controls(self) -> bool:
        used = set().union(*(free_vars(e) for e in (*self.X, self.Phi)))
        return bool(used & set(control_names(self.r)))

    def env(self, k, x, u, s) -> dict:
        xn, un, sn = self._names
        env = dict(zip(xn, x))
        env.update(zip(un, u))
        env.update(zip(sn, s))
        env["k"] = float(k)
        return env

    def transform(self, k, x, u, s) -> list:
        env = self.env(k, x, u, s)
        return [f(env) for f in self._X]

    def gauge(self, k, x, u, s):
        return self._Phi(self.env(k, x, u, s))

    def control(self, k, x, u, s) -> list:
        env = self.env(k, x, u, s)
        return [f(env) for f in self._U]

    def validate_for(self, p: ProblemSpec) -> None:
        if self.n != p.n or self.r != p.r:
            raise ModelError(
                f"symmetry family is for n={self.n}, r={self.r}; problem has n={p.n}, r={p.r}"
            )

    def check_identity(self, samples: int = 32, seed: int = 0) -> None:
        """Require X(k,x,u,0) == x and u(k,0) == u exactly on sampled points."""
        rng = np.random.default_rng(seed)
        zero = [0.0] * self.rho
        for _ in range(samples):
            k = int(rng.integers(-5, 6))
            x = rng.uniform(-2.0, 2.0, self.n)
            u = rng.uniform(-2.0, 2.0, self.r)
            if np.any(np.asarray(self.transform(k, x, u, zero)) != x):
                raise ModelError(f"X(k,x,u,0) != x at k={k}, x={x.tolist()}, u={u.tolist()}")
            if np.any(np.asarray(self.control(k, x, u, zero)) != u):
                raise ModelError(f"u(k,0) != u at k={k}, x={x.tolist()}, u={u.tolist()}")


def _check_dims(p: ProblemSpec, t: Trajectory) -> None:
    if t.M != p.M or t.N != p.N:
        raise ModelError(f"trajectory horizon ({t.M}, {t.N}) != problem horizon ({p.M}, {p.N})")
    if t.x.shape[1] != p.n or (p.r and t.u.shape[1] != p.r):
        raise ModelError(
            f"trajectory dimensions ({t.x.shape[1]}, {t.u.shape[1]}) != problem ({p.n}, {p.r})"
        )


def cost(p: ProblemSpec, t: Trajectory) -> float:
    """J = sum of L(k, x(k), u(k)) over k = M..M+N-1."""
    _check_dims(p, t)
    return float(sum(p.L(k, t.x_at(k), t.u_at(k)) for k in p.horizon.control_times))


def rollout(p: ProblemSpec, u_seq, x_start=None) -> Trajectory:
    """Forward recursion x(k+1) = phi(k, x(k), u(k)); terminal data is not enforced."""
    u = np.asarray(u_seq, dtype=float).reshape(p.N, p.r)
    x0 = np.asarray(p.x_start if x_start is None else x_start, dtype=float)
    xs = np.empty((p.N + 1, p.n))
    xs[0] = x0
    for j, k in enumerate(p.horizon.control_times):
        try:
            xs[j + 1] = p.phi(k, xs[j], u[j])
        except DomainError as exc:
            raise DomainError(f"{exc} at k={k}") from None
    return Trajectory(p.M, xs, u)


def dynamics_residual(p: ProblemSpec, t: Trajectory) -> float:
    """max_k ||x(k+1) - phi(k, x(k), u(k))||_inf."""
    _check_dims(p, t)
    worst = 0.0
    for k in p.horizon.control_times:
        d = np.asarray(t.x_at(k + 1)) - np.asarray(p.phi(k, t.x_at(k), t.u_at(k)))
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


def boundary_residual(p: ProblemSpec, t: Trajectory, include_end: bool = True) -> float:
    worst = float(np.max(np.abs(t.x_at(p.M) - np.asarray(p.x_start))))
    if include_end and p.x_end is not None:
        xe = t.x_at(p.horizon.end)
        for j, v in enumerate(p.x_end):
            if v is not None:
                worst = max(worst, abs(float(xe[j]) - v))
    return worst


def admissibility_residual(p: ProblemSpec, t: Trajectory, include_end: bool = True) -> float:
    """Dynamics defect plus the largest boundary mismatch."""
    return dynamics_residual(p, t) + boundary_residual(p, t, include_end)

"""Discrete calculus of variations, first and higher order.

A first-order problem extremizes ``sum_{k=M}^{M+N-1} L(k, x(k), x(k+1))``; its
Lagrangian is written over ``k``, ``x1..xn`` and ``xp1..xpn`` (``xp`` is
``x(k+1)``).  An order-``m`` problem extremizes
``sum_{k=M}^{M+N-1} L(k, x(k), ..., x(k+m))`` with ``L`` written over
``xj_i`` = component ``i`` of ``x(k+j)``, ``j = 0..m``.

Both reduce to the optimal control form: first order by ``u = x(k+1)``,
order ``m`` by stacking ``x(k), ..., x(k+m-1)`` into the state (``x{j*n+i}``)
and taking ``u = x(k+m)``.

State sequences are numpy arrays whose row 0 is ``x(M)``: ``N+1`` rows at
first order and ``N+m`` rows at order ``m``.  A :class:`Trajectory` is also
accepted wherever a sequence is expected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dual
from .errors import ModelError
from .expr import BinOp, Expr, Num, Var, check_vocabulary, compile_expr, free_vars, substitute
from .model import (
    ControlSet,
    Horizon,
    ProblemSpec,
    SymmetryFamily,
    Trajectory,
    control_names,
    param_names,
    state_names,
)
from .pmp import SolveResult, SolverOptions, solve_extremal


def next_names(n: int) -> list[str]:
    return [f"xp{i}" for i in range(1, n + 1)]


def stencil_names(n: int, j: int) -> list[str]:
    return [f"x{j}_{i}" for i in range(1, n + 1)]


def _rows(t) -> np.ndarray:
    if isinstance(t, Trajectory):
        return t.x
    a = np.asarray(t, dtype=float)
    return a.reshape(len(a), -1)


def _vec(v, n: int, what: str) -> tuple:
    v = tuple(float(a) for a in np.asarray(v, dtype=float).ravel())
    if len(v) != n:
        raise ModelError(f"{what} has {len(v)} entries, expected {n}")
    return v


# ---------------------------------------------------------------- first order


@dataclass(frozen=True)
class CVProblem:
    horizon: Horizon
    n: int
    L: Expr
    x_start: tuple
    x_end: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("state dimension n must be at least 1")
        check_vocabulary(self.L, ["k", *state_names(self.n), *next_names(self.n)], "CV Lagrangian")
        object.__setattr__(self, "x_start", _vec(self.x_start, self.n, "x_start"))
        object.__setattr__(self, "x_end", _vec(self.x_end, self.n, "x_end"))
        object.__setattr__(self, "_L", compile_expr(self.L))
        object.__setattr__(self, "_names", (state_names(self.n), next_names(self.n)))

    @property
    def M(self) -> int:
        return self.horizon.M

    @property
    def N(self) -> int:
        return self.horizon.N

    def lagrangian(self, k, x, xp):
        xn, pn = self._names
        env = dict(zip(xn, x))
        env.update(zip(pn, xp))
        env["k"] = float(k)
        return self._L(env)

    def partials(self, k, x, xp) -> tuple[np.ndarray, np.ndarray]:
        """(dL/dx, dL/dxp) at one stage."""
        n = self.n
        g = dual.gradient(lambda z: self.lagrangian(k, z[:n], z[n:]), [*x, *xp])
        return g[:n], g[n:]


def cv_to_oc(cv: CVProblem) -> ProblemSpec:
    """Optimal control form: r = n, phi = u, Omega free, xp renamed to u."""
    names = {a: Var(b) for a, b in zip(next_names(cv.n), control_names(cv.n))}
    return ProblemSpec(
        cv.horizon,
        cv.n,
        cv.n,
        substitute(cv.L, names),
        tuple(Var(u) for u in control_names(cv.n)),
        ControlSet.free(),
        cv.x_start,
        cv.x_end,
    )


def cv_cost(cv: CVProblem, t) -> float:
    xs = _rows(t)
    return float(sum(cv.lagrangian(cv.M + j, xs[j], xs[j + 1]) for j in range(cv.N)))


def el_residual(cv: CVProblem, t, k: int) -> np.ndarray:
    """dL/dx(k+1, x(k+1), x(k+2)) + dL/dxp(k, x(k), x(k+1)), for k = M..M+N-2."""
    xs = _rows(t)
    j = k - cv.M
    if not 0 <= j or j + 2 >= len(xs):
        raise ModelError(f"k={k} outside M..M+N-2 for a sequence of {len(xs)} states")
    lx, _ = cv.partials(k + 1, xs[j + 1], xs[j + 2])
    _, lp = cv.partials(k, xs[j], xs[j + 1])
    return lx + lp


def max_el_residual(cv: CVProblem, t) -> float:
    xs = _rows(t)
    vals = [np.max(np.abs(el_residual(cv, xs, k))) for k in range(cv.M, cv.M + len(xs) - 2)]
    return float(max(vals, default=0.0))


class _StencilFamily:
    """rho-parameter transformation X and gauge Phi over a fixed set of slot variables."""

    def _setup(self, slots: list[str], n: int):
        if self.rho < 1:
            raise ModelError("a symmetry family needs at least one parameter")
        if len(self.X) != n:
            raise ModelError(f"family has {len(self.X)} X components, expected {n}")
        allowed = ["k", *slots, *param_names(self.rho)]
        for i, e in enumerate(self.X, 1):
            check_vocabulary(e, allowed, f"symmetry X{i}")
        check_vocabulary(self.Phi, allowed, "symmetry Phi")
        object.__setattr__(self, "_slots", slots)
        object.__setattr__(self, "_cX", [compile_expr(e) for e in self.X])
        object.__setattr__(self, "_cPhi", compile_expr(self.Phi))

    def _env(self, k, values, s) -> dict:
        env = dict(zip(self._slots, values))
        env.update(zip(param_names(self.rho), s))
        env["k"] = float(k)
        return env

    def s_derivatives(self, k, values, i: int) -> tuple[float, np.ndarray]:
        """(dPhi/ds_i, dX/ds_i) at s = 0 for slot values ``values``; ``i`` is 0-based."""
        if not 0 <= i < self.rho:
            raise ModelError(f"parameter index {i} out of range for rho={self.rho}")
        d = [0.0] * self.rho
        d[i] = 1.0

        def f(s):
            env = self._env(k, values, s)
            return [self._cPhi(env), *(g(env) for g in self._cX)]

        _, t = dual.jvp(f, [0.0] * self.rho, d)
        t = np.asarray(t, dtype=float)
        return float(t[0]), t[1:]


@dataclass(frozen=True)
class CVFamily(_StencilFamily):
    """Transformation ``X(k, x, xp, s)`` with gauge ``Phi(k, x, xp, s)``."""

    rho: int
    X: tuple
    Phi: Expr = field(default_factory=lambda: Num(0.0))

    def __post_init__(self):
        n = len(self.X)
        self._setup([*state_names(n), *next_names(n)], n)

    @property
    def n(self) -> int:
        return len(self.X)

    @classmethod
    def identity(cls, n: int, rho: int = 1) -> "CVFamily":
        return cls(rho, tuple(Var(v) for v in state_names(n)), Num(0.0))

    @property
    def depends_on_next(self) -> bool:
        """True when X uses ``xp`` (Phi may use it freely)."""
        used = set().union(*(free_vars(e) for e in self.X))
        return bool(used & set(next_names(self.n)))


def cv_noether_integral(cv: CVProblem, fam: CVFamily, t, k: int, i: int) -> float:
    """dL/dxp(k-1, x(k-1), x(k)) . dX/ds_i - dPhi/ds_i, at k = M+1..M+N-1.

    X and Phi are evaluated at ``(k, x(k), x(k+1))``.
    """
    xs = _rows(t)
    j = k - cv.M
    if not 1 <= j or j + 1 >= len(xs):
        raise ModelError(f"k={k} outside M+1..M+N-1 for a sequence of {len(xs)} states")
    _, lp = cv.partials(k - 1, xs[j - 1], xs[j])
    dphi, dX = fam.s_derivatives(k, [*xs[j], *xs[j + 1]], i)
    return float(lp @ dX - dphi)


def cv_integral_values(cv: CVProblem, fam: CVFamily, t, i: int = 0) -> np.ndarray:
    xs = _rows(t)
    return np.array([cv_noether_integral(cv, fam, xs, k, i)
                     for k in range(cv.M + 1, cv.M + len(xs) - 1)])


def _shift_k(e: Expr, by: int) -> Expr:
    return substitute(e, {"k": BinOp("+", Var("k"), Num(float(by)))})


def cv_family_to_oc(fam: CVFamily) -> SymmetryFamily:
    """Optimal control family for a transformation whose X ignores ``xp``.

    The deformed control is ``u(k, s) = X(k+1, u, s)`` since ``u = x(k+1)``;
    ``xp`` in Phi becomes ``u``.
    """
    if fam.depends_on_next:
        raise ModelError("only families with X independent of xp map to the control form")
    n = fam.n
    to_u = {a: Var(b) for a, b in zip(state_names(n), control_names(n))}
    u_def = tuple(substitute(_shift_k(e, 1), to_u) for e in fam.X)
    xp_to_u = {a: Var(b) for a, b in zip(next_names(n), control_names(n))}
    return SymmetryFamily(fam.rho, tuple(fam.X), substitute(fam.Phi, xp_to_u), u_def)


# --------------------------------------------------------------- higher order


@dataclass(frozen=True)
class HOProblem:
    """Order-``m`` problem over ``N`` stages; the sequence has ``N + m`` states.

    ``x_start`` holds ``x(M..M+m-1)`` and ``x_end`` holds
    ``x(M+N..M+N+m-1)``, each as ``m`` rows of length ``n``.
    """

    m: int
    n: int
    horizon: Horizon
    L: Expr
    x_start: tuple
    x_end: tuple

    def __post_init__(self):
        if self.m < 1:
            raise ModelError("order m must be at least 1")
        if self.n < 1:
            raise ModelError("state dimension n must be at least 1")
        check_vocabulary(self.L, ["k", *self.slots], f"order-{self.m} Lagrangian")
        for name in ("x_start", "x_end"):
            v = _vec(getattr(self, name), self.m * self.n, name)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "_L", compile_expr(self.L))

    @property
    def slots(self) -> list[str]:
        return [v for j in range(self.m + 1) for v in stencil_names(self.n, j)]

    @property
    def M(self) -> int:
        return self.horizon.M

    @property
    def N(self) -> int:
        return self.horizon.N

    def lagrangian(self, k, window):
        """L at stage k; ``window`` is the flattened ``x(k), ..., x(k+m)``."""
        env = dict(zip(self.slots, window))
        env["k"] = float(k)
        return self._L(env)

    def partials(self, k, window) -> np.ndarray:
        """(m+1, n) array; row j is dL/dx^j."""
        g = dual.gradient(lambda z: self.lagrangian(k, z), list(window))
        return np.asarray(g, dtype=float).reshape(self.m + 1, self.n)


def _window(xs: np.ndarray, j: int, m: int) -> np.ndarray:
    return xs[j:j + m + 1].ravel()


def cv_to_ho(cv: CVProblem) -> HOProblem:
    """The same first-order problem written as an order-1 problem."""
    names = {a: Var(b) for a, b in zip(state_names(cv.n), stencil_names(cv.n, 0))}
    names.update({a: Var(b) for a, b in zip(next_names(cv.n), stencil_names(cv.n, 1))})
    return HOProblem(1, cv.n, cv.horizon, substitute(cv.L, names), cv.x_start, cv.x_end)


def ho_to_oc(ho: HOProblem) -> ProblemSpec:
    """Stacked-state optimal control form: n*m states, n controls, shift-chain dynamics."""
    n, m = ho.n, ho.m
    aug = state_names(n * m)
    names = {}
    for j in range(m):
        names.update({a: Var(aug[j * n + i]) for i, a in enumerate(stencil_names(n, j))})
    names.update({a: Var(b) for a, b in zip(stencil_names(n, m), control_names(n))})
    dyn = [Var(aug[(j + 1) * n + i]) for j in range(m - 1) for i in range(n)]
    dyn += [Var(u) for u in control_names(n)]
    return ProblemSpec(
        ho.horizon, n * m, n, substitute(ho.L, names), tuple(dyn), ControlSet.free(),
        ho.x_start, ho.x_end,
    )


def ho_states(ho: HOProblem, t: Trajectory) -> np.ndarray:
    """Original sequence ``x(M..M+N+m-1)`` from a trajectory of the stacked problem."""
    head = t.x[:-1, :ho.n]
    tail = t.x[-1].reshape(ho.m, ho.n)
    return np.vstack([head, tail])


def ho_cost(ho: HOProblem, t) -> float:
    xs = _rows(t)
    return float(sum(ho.lagrangian(ho.M + j, _window(xs, j, ho.m)) for j in range(ho.N)))


def euler_poisson_residual(ho: HOProblem, t, k: int) -> np.ndarray:
    """sum_{j=0}^{m} dL/dx^j at stage k+m-j, for k = M..M+N-m-1."""
    xs = _rows(t)
    m = ho.m
    base = k - ho.M
    if base < 0 or base + 2 * m >= len(xs):
        raise ModelError(f"k={k}: stencil k..k+{2 * m} leaves the sequence of {len(xs)} states")
    total = np.zeros(ho.n)
    for j in range(m + 1):
        s = base + m - j
        total += ho.partials(ho.M + s, _window(xs, s, m))[j]
    return total


def max_euler_poisson_residual(ho: HOProblem, t) -> float:
    xs = _rows(t)
    ks = range(ho.M, ho.M + len(xs) - 2 * ho.m)
    return float(max((np.max(np.abs(euler_poisson_residual(ho, xs, k))) for k in ks), default=0.0))


@dataclass(frozen=True)
class HOFamily(_StencilFamily):
    """Transformation ``X(k, x0, ..., xm, s)`` with gauge ``Phi`` over the same slots."""

    rho: int
    m: int
    X: tuple
    Phi: Expr = field(default_factory=lambda: Num(0.0))

    def __post_init__(self):
        n = len(self.X)
        self._setup([v for j in range(self.m + 1) for v in stencil_names(n, j)], n)

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def depends_on_window(self) -> bool:
        """True when X uses anything beyond ``k`` and ``x0_*``."""
        allowed = {"k", *stencil_names(self.n, 0), *param_names(self.rho)}
        return any(free_vars(e) - allowed for e in self.X)

    @classmethod
    def identity(cls, n: int, m: int, rho: int = 1) -> "HOFamily":
        return cls(rho, m, tuple(Var(v) for v in stencil_names(n, 0)), Num(0.0))


def ho_family_to_oc(fam: HOFamily) -> SymmetryFamily:
    """Stacked-state family for a transformation X(k, x0, s).

    Block j of the stacked state transforms as ``X(k+j, x^j, s)`` and the
    control as ``X(k+m, u, s)``; Phi is rewritten over the stacked variables.
    """
    n, m = fam.n, fam.m
    if fam.depends_on_window:
        raise ModelError("only families with X depending on k and x0_* map to the control form")
    aug = state_names(n * m)

    def block(j, targets):
        return {a: Var(b) for a, b in zip(stencil_names(n, 0), targets)}

    X = tuple(substitute(_shift_k(e, j), block(j, aug[j * n:(j + 1) * n]))
              for j in range(m) for e in fam.X)
    U = tuple(substitute(_shift_k(e, m), block(m, control_names(n))) for e in fam.X)
    names = {}
    for j in range(m):
        names.update({a: Var(aug[j * n + i]) for i, a in enumerate(stencil_names(n, j))})
    names.update({a: Var(b) for a, b in zip(stencil_names(n, m), control_names(n))})
    return SymmetryFamily(fam.rho, X, substitute(fam.Phi, names), U)


def cv_family_to_ho(fam: CVFamily) -> HOFamily:
    n = fam.n
    names = {a: Var(b) for a, b in zip(state_names(n), stencil_names(n, 0))}
    names.update({a: Var(b) for a, b in zip(next_names(n), stencil_names(n, 1))})
    return HOFamily(fam.rho, 1, tuple(substitute(e, names) for e in fam.X),
                    substitute(fam.Phi, names))


def ho_noether_integral(ho: HOProblem, fam: HOFamily, t, k: int, i: int) -> float:
    """dPhi/ds_i + sum_{j<m} sum_{l<=j} dL/dx^l(k+j-l) . dX/ds_i(k+j).

    Every term is evaluated on its own stencil window; valid for
    ``k = M..M+N-m``.
    """
    if fam.m != ho.m or fam.n != ho.n:
        raise ModelError("family order or dimension does not match the problem")
    xs = _rows(t)
    m = ho.m
    base = k - ho.M
    if base < 0 or base + 2 * m - 1 >= len(xs):
        raise ModelError(f"k={k}: stencil k..k+{2 * m - 1} leaves the sequence of {len(xs)} states")
    dphi, _ = fam.s_derivatives(k, _window(xs, base, m), i)
    total = dphi
    for j in range(m):
        _, dX = fam.s_derivatives(k + j, _window(xs, base + j, m), i)
        for l in range(j + 1):
            s = base + j - l
            total += float(ho.partials(ho.M + s, _window(xs, s, m))[l] @ dX)
    return float(total)


def ho_integral_values(ho: HOProblem, fam: HOFamily, t, i: int = 0) -> np.ndarray:
    xs = _rows(t)
    return np.array([ho_noether_integral(ho, fam, xs, k, i)
                     for k in range(ho.M, ho.M + len(xs) - 2 * ho.m + 1)])


# ------------------------------------------------------------------- solvers


def solve_cv(cv: CVProblem, opts: Optional[SolverOptions] = None) -> tuple[SolveResult, np.ndarray]:
    """Extremal of the control form and the corresponding state sequence."""
    res = solve_extremal(cv_to_oc(cv), opts)
    return res, res.extremal.trajectory.x.copy()


def solve_ho(ho: HOProblem, opts: Optional[SolverOptions] = None) -> tuple[SolveResult, np.ndarray]:
    res = solve_extremal(ho_to_oc(ho), opts)
    return res, ho_states(ho, res.extremal.trajectory)

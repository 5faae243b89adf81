"""Search for one-parameter symmetries inside a finite dictionary.

The ansatz is ``X = x + s*a(k,x,u)``, ``u(k,s) = u + s*b(k,x,u)`` and
``Phi = s*g(k,x,u)``, with each of ``a``, ``b`` and ``g`` a linear combination
of dictionary functions.  The s-derivatives of the two invariance residuals
at ``s = 0`` are then linear in the coefficients:

* Lagrangian: ``L_x.a(k) + L_u.b(k) - (g(k+1) - g(k))``
* dynamics:   ``phi_x a(k) + phi_u b(k) - a(k+1)``

Stacking these over sampled trajectories gives a homogeneous linear system.
Its smallest right singular vector is the best candidate generator.  A
constant gauge term is a trivial solution, so constants are left out of
``g``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import dual
from .errors import ModelError
from .expr import BinOp, Expr, Num, Var, check_vocabulary, compile_expr, linear_combination, parse
from .model import ProblemSpec, SymmetryFamily, Trajectory, control_names, state_names
from .noether import SAMPLE_SEED, sample_trajectories

SINGULAR_THRESHOLD = 1e-10
DISCOVERY_TOL = 1e-8


@dataclass(frozen=True)
class GeneratorAnsatz:
    """Dictionary of basis functions over ``(k, x*, u*)`` shared by a, b and g."""

    basis: tuple

    def __post_init__(self):
        if not self.basis:
            raise ModelError("the dictionary is empty")
        object.__setattr__(self, "_compiled", [compile_expr(e) for e in self.basis])

    @classmethod
    def default(cls, n: int, r: int, cap: int = 64) -> "GeneratorAnsatz":
        """Constant, x_j, u_j, x_i*x_j (i <= j) and x_i*u_j, truncated to ``cap`` entries."""
        xs = [Var(v) for v in state_names(n)]
        us = [Var(v) for v in control_names(r)]
        basis: list[Expr] = [Num(1.0), *xs, *us]
        basis += [BinOp("*", xs[i], xs[j]) for i in range(n) for j in range(i, n)]
        basis += [BinOp("*", a, b) for a in xs for b in us]
        return cls(tuple(basis[:cap]))

    @classmethod
    def from_texts(cls, texts: Sequence[str]) -> "GeneratorAnsatz":
        return cls(tuple(parse(t) for t in texts))

    def validate_for(self, p: ProblemSpec) -> None:
        allowed = ["k", *state_names(p.n), *control_names(p.r)]
        for e in self.basis:
            check_vocabulary(e, allowed, "dictionary entry")

    @property
    def size(self) -> int:
        return len(self.basis)

    def is_constant(self, j: int) -> bool:
        return isinstance(self.basis[j], Num)

    def values(self, p: ProblemSpec, k, x, u) -> np.ndarray:
        env = p.env(k, x, u)
        return np.array([float(f(env)) for f in self._compiled])


@dataclass
class DiscoveryResult:
    family: SymmetryFamily
    residual: float
    a: np.ndarray  # (n, D) coefficients of the state generator
    b: np.ndarray  # (r, D) coefficients of the control generator
    g: np.ndarray  # (D,) coefficients of the gauge generator (constant entries are 0)
    singular_values: np.ndarray
    null_dim: int
    discovered: bool
    trivial: bool
    message: str

    def to_dict(self) -> dict:
        from .expr import to_text

        return {
            "residual": self.residual,
            "discovered": self.discovered,
            "trivial": self.trivial,
            "null_dim": self.null_dim,
            "X": [to_text(e) for e in self.family.X],
            "u": [to_text(e) for e in self.family.u_def],
            "Phi": to_text(self.family.Phi),
            "message": self.message,
        }


def _g_columns(ansatz: GeneratorAnsatz) -> list[int]:
    return [j for j in range(ansatz.size) if not ansatz.is_constant(j)]


def _stage_derivatives(p: ProblemSpec, k, x, u):
    n = p.n
    z = [*x, *u]
    grad = dual.gradient(lambda v: p.L(k, v[:n], v[n:]), z)
    jac = dual.jacobian(lambda v: p.phi(k, v[:n], v[n:]), z)
    return grad[:n], grad[n:], jac[:, :n], jac[:, n:]


def assemble(p: ProblemSpec, ansatz: GeneratorAnsatz, samples: Sequence[Trajectory]) -> np.ndarray:
    """Rows of the homogeneous system; columns are [vec(a), vec(b), g without constants]."""
    n, r, D = p.n, p.r, ansatz.size
    gcols = _g_columns(ansatz)
    width = (n + r) * D + len(gcols)
    rows = []
    for t in samples:
        theta = [ansatz.values(p, k, t.x_at(k), t.u_at(k)) for k in p.horizon.control_times]
        for j, k in enumerate(range(p.M, p.M + p.N - 1)):
            lx, lu, jx, ju = _stage_derivatives(p, k, t.x_at(k), t.u_at(k))
            th, th1 = theta[j], theta[j + 1]
            row = np.zeros(width)
            for c in range(n):
                row[c * D:(c + 1) * D] = lx[c] * th
            for c in range(r):
                row[(n + c) * D:(n + c + 1) * D] = lu[c] * th
            row[(n + r) * D:] = -(th1[gcols] - th[gcols])
            rows.append(row)
            for c in range(n):
                row = np.zeros(width)
                for d in range(n):
                    row[d * D:(d + 1) * D] = jx[c, d] * th
                row[c * D:(c + 1) * D] -= th1
                for d in range(r):
                    row[(n + d) * D:(n + d + 1) * D] = ju[c, d] * th
                rows.append(row)
    return np.asarray(rows).reshape(len(rows), width)


def _normalize_sign(v: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(v))
    if scale == 0:
        return v
    v = np.where(np.abs(v) <= 1e-12 * scale, 0.0, v)
    first = v[np.nonzero(v)[0][0]]
    return v / np.linalg.norm(v) * np.sign(first)


def _family(p: ProblemSpec, ansatz: GeneratorAnsatz, A, B, G) -> SymmetryFamily:
    s = Var("s1")

    def shifted(base: str, coefs) -> Expr:
        gen = linear_combination(zip(coefs, ansatz.basis))
        if isinstance(gen, Num) and gen.value == 0:
            return Var(base)
        return BinOp("+", Var(base), BinOp("*", s, gen))

    X = tuple(shifted(v, A[c]) for c, v in enumerate(state_names(p.n)))
    U = tuple(shifted(v, B[c]) for c, v in enumerate(control_names(p.r)))
    g = linear_combination(zip(G, ansatz.basis))
    Phi = Num(0.0) if isinstance(g, Num) and g.value == 0 else BinOp("*", s, g)
    return SymmetryFamily(1, X, Phi, U)


def discover(p: ProblemSpec, ansatz: Optional[GeneratorAnsatz] = None,
             samples: Optional[Sequence[Trajectory]] = None, seed: int = SAMPLE_SEED,
             tol: float = DISCOVERY_TOL) -> DiscoveryResult:
    """Best one-parameter generator in the dictionary span.

    Without explicit samples, seeded rollouts are drawn until the system has
    at least twice as many rows as unknowns.  The returned coefficients have
    unit norm with the first nonzero entry positive; ``residual`` is the
    largest entry of the system applied to them.
    """
    ansatz = ansatz or GeneratorAnsatz.default(p.n, p.r)
    ansatz.validate_for(p)
    n, r, D = p.n, p.r, ansatz.size
    if p.N < 2:
        raise ModelError("discovery needs N >= 2 (residuals use data at k+1)")
    width = (n + r) * D + len(_g_columns(ansatz))
    if samples is None:
        per_traj = (p.N - 1) * (1 + n)
        count = max(10, -(-2 * width // per_traj))
        samples = sample_trajectories(p, count=count, seed=seed)
    A = assemble(p, ansatz, samples)
    if not A.size or np.max(np.abs(A)) == 0:
        v = np.zeros(width)
        v[0] = 1.0
        sv = np.zeros(min(A.shape)) if A.size else np.zeros(0)
        trivial, message = True, "everything is a symmetry: the invariance system is identically zero"
        null_dim = width
    else:
        _, sv, vt = np.linalg.svd(A, full_matrices=True)
        v = vt[-1]
        full = np.zeros(width)
        full[:len(sv)] = sv
        null_dim = int(np.sum(full <= SINGULAR_THRESHOLD * sv[0]))
        trivial = False
        message = ""
    v = _normalize_sign(v)
    residual = float(np.max(np.abs(A @ v))) if A.size else 0.0
    a = v[:n * D].reshape(n, D)
    b = v[n * D:(n + r) * D].reshape(r, D)
    g = np.zeros(D)
    g[_g_columns(ansatz)] = v[(n + r) * D:]
    fam = _family(p, ansatz, a, b, g)
    discovered = residual <= tol
    if not message:
        message = (
            f"symmetry found (null space dimension {null_dim})" if discovered
            else f"no symmetry in the dictionary span (residual {residual:.3e})"
        )
    return DiscoveryResult(fam, residual, a, b, g, sv, null_dim, discovered, trivial, message)

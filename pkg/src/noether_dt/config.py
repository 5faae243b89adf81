"""INI problem documents and CSV trajectory files.

A document describes one of three problem kinds:

* optimal control: ``[lagrangian] expr`` and ``[dynamics] phi1..phin``;
* first-order variational: ``[cv] L`` over ``x*`` and ``xp*``;
* order-m variational: ``[ho] m, L`` over ``xj_i``.

Example::

    [horizon]
    M = 0
    N = 4

    [dims]
    n = 3
    r = 2

    [lagrangian]
    expr = u1^2 - u2^2

    [dynamics]
    phi1 = x2 + u1
    phi2 = x1 + u2
    phi3 = x2*u1

    [boundary]
    x_start = 1, 1, 0
    x_end = 5.875, 1, 6.90625

    [symmetry]
    rho = 1
    X1 = x1 + 2*s1
    ...

Number lists are comma separated; ``inf``/``-inf`` are accepted for box
bounds and ``*`` (or ``free``) marks a free terminal coordinate.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .calcvar import (
    CVFamily,
    CVProblem,
    HOFamily,
    HOProblem,
    cv_family_to_oc,
    ho_family_to_oc,
    cv_to_oc,
    ho_to_oc,
)
from .errors import ConfigError, ExprSyntaxError, ModelError
from .expr import Expr, parse, to_text
from .model import (
    ControlSet,
    Extremal,
    Horizon,
    ProblemSpec,
    SymmetryFamily,
    Trajectory,
    control_names,
    state_names,
)
from .pmp import SolverOptions

FREE_MARKERS = ("*", "free")


@dataclass
class Config:
    kind: str  # "oc", "cv" or "ho"
    problem: ProblemSpec  # control form (derived for cv and ho)
    family: Optional[SymmetryFamily] = None  # control-form family, when one exists
    cv: Optional[CVProblem] = None
    cv_family: Optional[CVFamily] = None
    ho: Optional[HOProblem] = None
    ho_family: Optional[HOFamily] = None
    solver: SolverOptions = SolverOptions()


def _new_parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def _get(cp, section: str, key: str, default=None) -> str:
    if not cp.has_section(section):
        if default is not None:
            return default
        raise ConfigError(f"missing section [{section}]")
    if not cp.has_option(section, key):
        if default is not None:
            return default
        raise ConfigError(f"[{section}] missing key '{key}'")
    return cp.get(section, key).strip()


def _int(cp, section, key, default=None) -> int:
    raw = _get(cp, section, key, None if default is None else str(default))
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}") from None


def _expr(cp, section, key, default=None) -> Expr:
    raw = _get(cp, section, key, default)
    try:
        return parse(raw)
    except ExprSyntaxError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def _number(text: str, where: str, allow_free: bool = False):
    t = text.strip()
    if allow_free and t.lower() in FREE_MARKERS:
        return None
    try:
        return float(t)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {t!r} as a number") from None


def _numbers(cp, section, key, length: int, allow_free: bool = False) -> tuple:
    raw = _get(cp, section, key)
    parts = [p for p in raw.split(",")]
    if len(parts) != length:
        raise ConfigError(f"[{section}] {key}: expected {length} values, got {len(parts)}")
    return tuple(_number(p, f"[{section}] {key}", allow_free) for p in parts)


def _control_set(cp, r: int) -> ControlSet:
    kind = _get(cp, "control_set", "kind", "free").lower()
    if kind == "free":
        return ControlSet.free()
    if kind != "box":
        raise ConfigError(f"[control_set] kind: expected 'free' or 'box', got {kind!r}")
    lower = _numbers(cp, "control_set", "lower", r)
    upper = _numbers(cp, "control_set", "upper", r)
    return ControlSet.box(lower, upper)


def _solver_options(cp) -> SolverOptions:
    if not cp.has_section("solver"):
        return SolverOptions()
    kwargs = {}
    types = {f.name: f.type for f in fields(SolverOptions)}
    for key, raw in cp.items("solver"):
        if key not in types:
            raise ConfigError(f"[solver] unknown option '{key}'")
        default = getattr(SolverOptions(), key)
        try:
            if isinstance(default, bool):
                kwargs[key] = cp.getboolean("solver", key)
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        except ValueError:
            raise ConfigError(f"[solver] {key}: invalid value {raw!r}") from None
    try:
        return SolverOptions(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from exc


def _family_exprs(cp, n: int, r: Optional[int]):
    rho = _int(cp, "symmetry", "rho", 1)
    X = tuple(_expr(cp, "symmetry", f"X{i}") for i in range(1, n + 1))
    Phi = _expr(cp, "symmetry", "Phi", "0")
    U = None
    if r is not None:
        U = tuple(_expr(cp, "symmetry", f"u{i}", f"u{i}") for i in range(1, r + 1))
    eps = None
    if cp.has_option("symmetry", "epsilon"):
        eps = _number(cp.get("symmetry", "epsilon"), "[symmetry] epsilon")
    return rho, X, Phi, U, eps


def parse_config(text: str) -> Config:
    cp = _new_parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed document: {exc}") from exc
    try:
        return _build(cp)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def _build(cp) -> Config:
    horizon = Horizon(_int(cp, "horizon", "M", 0), _int(cp, "horizon", "N"))
    n = _int(cp, "dims", "n")
    solver = _solver_options(cp)
    has_sym = cp.has_section("symmetry")

    if cp.has_section("ho"):
        m = _int(cp, "ho", "m")
        if m < 1:
            raise ConfigError(f"[ho] m: order must be at least 1, got {m}")
        ho = HOProblem(m, n, horizon, _expr(cp, "ho", "L"),
                       _numbers(cp, "boundary", "x_start", m * n),
                       _numbers(cp, "boundary", "x_end", m * n))
        fam = None
        if has_sym:
            rho, X, Phi, _, _ = _family_exprs(cp, n, None)
            fam = HOFamily(rho, m, X, Phi)
        oc_fam = None
        if fam is not None and not fam.depends_on_window:
            oc_fam = ho_family_to_oc(fam)
        return Config("ho", ho_to_oc(ho), oc_fam, ho=ho, ho_family=fam, solver=solver)

    if cp.has_section("cv"):
        cv = CVProblem(horizon, n, _expr(cp, "cv", "L"),
                       _numbers(cp, "boundary", "x_start", n),
                       _numbers(cp, "boundary", "x_end", n))
        fam = oc_fam = None
        if has_sym:
            rho, X, Phi, _, _ = _family_exprs(cp, n, None)
            fam = CVFamily(rho, X, Phi)
            if not fam.depends_on_next:
                oc_fam = cv_family_to_oc(fam)
        return Config("cv", cv_to_oc(cv), oc_fam, cv=cv, cv_family=fam, solver=solver)

    r = _int(cp, "dims", "r")
    L = _expr(cp, "lagrangian", "expr")
    dyn = tuple(_expr(cp, "dynamics", f"phi{i}") for i in range(1, n + 1))
    x_end = None
    if cp.has_option("boundary", "x_end"):
        x_end = _numbers(cp, "boundary", "x_end", n, allow_free=True)
    p = ProblemSpec(horizon, n, r, L, dyn, _control_set(cp, r),
                    _numbers(cp, "boundary", "x_start", n), x_end)
    fam = None
    if has_sym:
        rho, X, Phi, U, eps = _family_exprs(cp, n, r)
        fam = SymmetryFamily(rho, X, Phi, U, eps)
    return Config("oc", p, fam, solver=solver)


# ------------------------------------------------------------------- dumping


def _fmt(v) -> str:
    if v is None:
        return "*"
    return repr(float(v))


def _fmt_list(vs) -> str:
    return ", ".join(_fmt(v) for v in vs)


def dump_config(cfg: Config) -> str:
    """Serialize a configuration; ``parse_config(dump_config(c))`` is equivalent to ``c``."""
    cp = _new_parser()
    p = cfg.problem
    cp["horizon"] = {"M": str(p.M), "N": str(p.N)}
    if cfg.kind == "oc":
        cp["dims"] = {"n": str(p.n), "r": str(p.r)}
        cp["lagrangian"] = {"expr": to_text(p.lagrangian)}
        cp["dynamics"] = {f"phi{i}": to_text(e) for i, e in enumerate(p.dynamics, 1)}
        if p.omega.is_box:
            cp["control_set"] = {"kind": "box", "lower": _fmt_list(p.omega.lower),
                                 "upper": _fmt_list(p.omega.upper)}
        else:
            cp["control_set"] = {"kind": "free"}
        bnd = {"x_start": _fmt_list(p.x_start)}
        if p.x_end is not None:
            bnd["x_end"] = _fmt_list(p.x_end)
        cp["boundary"] = bnd
        if cfg.family is not None:
            f = cfg.family
            sym = {"rho": str(f.rho)}
            sym.update({f"X{i}": to_text(e) for i, e in enumerate(f.X, 1)})
            sym["Phi"] = to_text(f.Phi)
            sym.update({f"u{i}": to_text(e) for i, e in enumerate(f.u_def, 1)})
            if f.epsilon is not None:
                sym["epsilon"] = _fmt(f.epsilon)
            cp["symmetry"] = sym
    else:
        src = cfg.cv if cfg.kind == "cv" else cfg.ho
        fam = cfg.cv_family if cfg.kind == "cv" else cfg.ho_family
        cp["dims"] = {"n": str(src.n)}
        if cfg.kind == "cv":
            cp["cv"] = {"L": to_text(src.L)}
        else:
            cp["ho"] = {"m": str(src.m), "L": to_text(src.L)}
        cp["boundary"] = {"x_start": _fmt_list(src.x_start), "x_end": _fmt_list(src.x_end)}
        if fam is not None:
            sym = {"rho": str(fam.rho)}
            sym.update({f"X{i}": to_text(e) for i, e in enumerate(fam.X, 1)})
            sym["Phi"] = to_text(fam.Phi)
            cp["symmetry"] = sym
    defaults = SolverOptions()
    changed = {f.name: getattr(cfg.solver, f.name) for f in fields(SolverOptions)
               if getattr(cfg.solver, f.name) != getattr(defaults, f.name)}
    if changed:
        cp["solver"] = {k: (repr(v) if isinstance(v, float) else str(v)) for k, v in changed.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------- CSV files


def _cell(v) -> str:
    return "" if v is None else repr(float(v))


def write_trajectory_csv(path_or_buf, t: Trajectory, e: Optional[Extremal] = None) -> None:
    """Header ``k,x1..xn,u1..ur[,psi0,psi1..psin]``; missing entries are empty cells."""
    n = t.x.shape[1]
    r = t.u.shape[1] if t.u.ndim == 2 else 0
    header = ["k", *state_names(n), *control_names(r)]
    if e is not None:
        header += ["psi0", *[f"psi{i}" for i in range(1, n + 1)]]
    rows = []
    for j in range(t.N + 1):
        k = t.M + j
        row = [str(k), *(_cell(v) for v in t.x[j])]
        row += [_cell(v) for v in t.u[j]] if j < t.N else [""] * r
        if e is not None:
            row.append(_cell(e.psi0))
            row += [_cell(v) for v in e.psi[j - 1]] if j > 0 else [""] * n
        rows.append(row)
    own = not hasattr(path_or_buf, "write")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if own:
            fh.close()


def read_trajectory_csv(path, n: int, r: int):
    """Returns ``(trajectory, extremal or None, states)`` from a CSV file.

    Only ``k`` and ``x1..xn`` are required; ``states`` holds every x row.
    Without control columns the trajectory has zero controls.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    cols = rows[0].keys()
    for c in ["k", *state_names(n)]:
        if c not in cols:
            raise ConfigError(f"{path}: missing column '{c}'")

    def val(row, c, line):
        raw = (row.get(c) or "").strip()
        if raw == "":
            return None
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{path}:{line}: column {c}: cannot read {raw!r}") from None

    ks = [int(float(row["k"])) for row in rows]
    if ks != list(range(ks[0], ks[0] + len(ks))):
        raise ConfigError(f"{path}: k must increase by 1 on every row")
    raw_states = [[val(row, c, i + 2) for c in state_names(n)] for i, row in enumerate(rows)]
    if any(v is None for r_ in raw_states for v in r_):
        raise ConfigError(f"{path}: missing state value")
    states = np.array(raw_states, dtype=float)
    N = len(rows) - 1
    has_u = r > 0 and all(c in cols for c in control_names(r))
    u = np.zeros((N, r))
    if has_u:
        for j in range(N):
            vals = [val(rows[j], c, j + 2) for c in control_names(r)]
            if None in vals:
                raise ConfigError(f"{path}:{j + 2}: missing control value")
            u[j] = vals
    t = Trajectory(ks[0], states, u) if N >= 1 else None
    ext = None
    psi_cols = ["psi0", *[f"psi{i}" for i in range(1, n + 1)]]
    if t is not None and all(c in cols for c in psi_cols):
        psi0 = val(rows[0], "psi0", 2)
        psi = [[val(rows[j], c, j + 2) for c in psi_cols[1:]] for j in range(1, N + 1)]
        if psi0 is None or any(v is None for r_ in psi for v in r_):
            raise ConfigError(f"{path}: incomplete co-state columns")
        psi = np.array(psi, dtype=float)
        try:
            ext = Extremal(t, psi0, psi)
        except ModelError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return t, ext, states


def json_ready(obj):
    """Convert numpy data to plain Python; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_ready(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj

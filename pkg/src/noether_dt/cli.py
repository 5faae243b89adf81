"""``noether-dt`` command line: solve, check, noether, el, ep, discover.

Every command prints one JSON object on stdout; diagnostics go to stderr.
Exit codes: 0 success, 1 usage or configuration error, 2 solver
non-convergence, 3 failed check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .calcvar import (
    cv_integral_values,
    cv_to_ho,
    el_residual,
    euler_poisson_residual,
    ho_integral_values,
    ho_states,
)
from .config import Config, json_ready, load_config, read_trajectory_csv, write_trajectory_csv
from .discovery import discover
from .errors import ConfigError, DomainError, ModelError, NoetherDTError
from .model import cost
from .noether import INVARIANCE_TOL, SAMPLE_SEED, check_quasi_invariance, conservation_report, sample_trajectories
from .pmp import SolveResult, solve_extremal

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3

log = logging.getLogger("noether_dt")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="noether-dt", description="Discrete-time Noether toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "solve": "compute an extremal",
        "check": "check quasi-invariance of the problem under the [symmetry] family",
        "noether": "evaluate the Noether integrals along an extremal",
        "el": "Euler-Lagrange residuals of a state sequence",
        "ep": "Euler-Poisson residuals of a state sequence",
        "discover": "search the default dictionary for a one-parameter symmetry",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("config", type=Path)
        cmd.add_argument("--extremal", type=Path, default=None,
                         help="CSV with k,x1..xn[,u1..ur][,psi0,psi1..psin] instead of solving")
        cmd.add_argument("--tol", type=float, default=None)
        cmd.add_argument("--seed", type=int, default=SAMPLE_SEED)
        cmd.add_argument("--out", type=Path, default=None, help="also write the report here")
        if name == "solve":
            cmd.add_argument("--save-extremal", type=Path, default=None,
                             help="write the extremal as CSV")
    return parser


def _extremal_payload(res: SolveResult, p) -> dict:
    e = res.extremal
    t = e.trajectory
    return {
        "converged": res.converged,
        "branch": res.branch,
        "iterations": res.iterations,
        "abnormal_attempted": res.abnormal_attempted,
        "message": res.message,
        "psi0": e.psi0,
        "k": list(range(t.M, t.M + t.N + 1)),
        "x": t.x,
        "u": t.u,
        "psi": e.psi,
        "cost": cost(p, t),
        "residuals": res.report.to_dict(),
    }


def _solve(cfg: Config):
    res = solve_extremal(cfg.problem, cfg.solver)
    if not res.converged:
        log.warning("solver did not converge: %s", res.message)
    return res


def _states(cfg: Config, args) -> tuple[np.ndarray, Optional[SolveResult]]:
    """Original-variable state sequence, loaded from --extremal or solved for."""
    if args.extremal is not None:
        _, _, states = read_trajectory_csv(args.extremal, cfg.cv.n if cfg.cv else cfg.ho.n, 0)
        return states, None
    res = _solve(cfg)
    t = res.extremal.trajectory
    return (ho_states(cfg.ho, t) if cfg.kind == "ho" else t.x.copy()), res


def cmd_solve(cfg: Config, args) -> tuple[dict, int]:
    res = _solve(cfg)
    payload = _extremal_payload(res, cfg.problem)
    if cfg.kind == "ho":
        payload["states"] = ho_states(cfg.ho, res.extremal.trajectory)
    if args.save_extremal is not None:
        write_trajectory_csv(args.save_extremal, res.extremal.trajectory, res.extremal)
    return payload, EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_check(cfg: Config, args) -> tuple[dict, int]:
    if cfg.family is None:
        raise ConfigError("check needs a [symmetry] family expressible in control form "
                          "(k, x*, u*, s*); order-m families and families using xp are not")
    tol = INVARIANCE_TOL if args.tol is None else args.tol
    samples = sample_trajectories(cfg.problem, seed=args.seed)
    rep = check_quasi_invariance(cfg.problem, cfg.family, samples, tol)
    return {"invariance": rep.to_dict()}, EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def _drift_payload(ks, values, rtol) -> tuple[dict, bool]:
    values = np.atleast_2d(values)
    drift = values.max(axis=1) - values.min(axis=1) if values.size else np.zeros(len(values))
    tol = rtol * (1.0 + (np.abs(values).max(axis=1) if values.size else 0.0))
    ok = bool(np.all(drift <= tol))
    return {"k": ks, "values": values, "drift": drift, "tol": tol, "pass": ok}, ok


def cmd_noether(cfg: Config, args) -> tuple[dict, int]:
    rtol = 1e-8 if args.tol is None else args.tol
    payload: dict = {}
    status = EXIT_OK
    if cfg.kind == "oc":
        if cfg.family is None:
            raise ConfigError("noether needs a [symmetry] section")
        if args.extremal is not None:
            _, e, _ = read_trajectory_csv(args.extremal, cfg.problem.n, cfg.problem.r)
            if e is None:
                raise ConfigError(f"{args.extremal}: co-state columns psi0, psi1.. are required")
        else:
            res = _solve(cfg)
            payload["solve"] = {"converged": res.converged, "branch": res.branch,
                                "message": res.message}
            if not res.converged:
                status = EXIT_NONCONVERGED
            e = res.extremal
        rep = conservation_report(cfg.family, e, rtol)
        payload["conservation"] = rep.to_dict()
        payload["psi0"] = e.psi0
        ok = rep.passed
    else:
        states, res = _states(cfg, args)
        if res is not None:
            payload["solve"] = {"converged": res.converged, "branch": res.branch,
                                "message": res.message}
            if not res.converged:
                status = EXIT_NONCONVERGED
        if cfg.kind == "cv":
            fam = cfg.cv_family
            if fam is None:
                raise ConfigError("noether needs a [symmetry] section")
            vals = [cv_integral_values(cfg.cv, fam, states, i) for i in range(fam.rho)]
            ks = list(range(cfg.cv.M + 1, cfg.cv.M + len(states) - 1))
        else:
            fam = cfg.ho_family
            if fam is None:
                raise ConfigError("noether needs a [symmetry] section")
            vals = [ho_integral_values(cfg.ho, fam, states, i) for i in range(fam.rho)]
            ks = list(range(cfg.ho.M, cfg.ho.M + len(states) - 2 * cfg.ho.m + 1))
        payload["conservation"], ok = _drift_payload(ks, np.array(vals), rtol)
    if status == EXIT_OK and not ok:
        status = EXIT_CHECK_FAILED
    return payload, status


def _residual_payload(ks, rows, tol) -> tuple[dict, int]:
    rows = np.asarray(rows, dtype=float)
    worst = float(np.max(np.abs(rows))) if rows.size else 0.0
    ok = worst <= tol
    return ({"k": ks, "residual": rows, "max_abs": worst, "tol": tol, "pass": ok},
            EXIT_OK if ok else EXIT_CHECK_FAILED)


def cmd_el(cfg: Config, args) -> tuple[dict, int]:
    if cfg.kind != "cv":
        raise ConfigError("el needs a [cv] problem")
    states, res = _states(cfg, args)
    ks = list(range(cfg.cv.M, cfg.cv.M + len(states) - 2))
    payload, status = _residual_payload(ks, [el_residual(cfg.cv, states, k) for k in ks],
                                        1e-8 if args.tol is None else args.tol)
    if res is not None and not res.converged:
        status = EXIT_NONCONVERGED
    return payload, status


def cmd_ep(cfg: Config, args) -> tuple[dict, int]:
    if cfg.kind not in ("cv", "ho"):
        raise ConfigError("ep needs a [cv] or [ho] problem")
    ho = cfg.ho if cfg.kind == "ho" else cv_to_ho(cfg.cv)
    states, res = _states(cfg, args)
    ks = list(range(ho.M, ho.M + len(states) - 2 * ho.m))
    payload, status = _residual_payload(ks, [euler_poisson_residual(ho, states, k) for k in ks],
                                        1e-8 if args.tol is None else args.tol)
    if res is not None and not res.converged:
        status = EXIT_NONCONVERGED
    return payload, status


def cmd_discover(cfg: Config, args) -> tuple[dict, int]:
    if cfg.kind != "oc":
        raise ConfigError("discover works on control-form problems ([lagrangian] and [dynamics])")
    kwargs = {"seed": args.seed}
    if args.tol is not None:
        kwargs["tol"] = args.tol
    res = discover(cfg.problem, **kwargs)
    return {"discovery": res.to_dict()}, EXIT_OK if res.discovered else EXIT_CHECK_FAILED


COMMANDS = {
    "solve": cmd_solve,
    "check": cmd_check,
    "noether": cmd_noether,
    "el": cmd_el,
    "ep": cmd_ep,
    "discover": cmd_discover,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    report = {"command": args.command, "config": str(args.config)}
    try:
        cfg = load_config(args.config)
        payload, status = COMMANDS[args.command](cfg, args)
    except (ConfigError, ModelError) as exc:
        print(f"noether-dt: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, NoetherDTError) as exc:
        print(f"noether-dt: evaluation failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report.update(payload)
    report["status"] = status
    text = json.dumps(json_ready(report), indent=2)
    print(text)
    if args.out is not None:
        args.out.write_text(text + "\n", encoding="utf-8")
    return status


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Examples
--------
    thinodal solve-ode --family wedge --eps 0.1
    thinodal scaling --family trapezoid --eps-list 0.2,0.1,0.05,0.025
    thinodal verify-all --family trapezoid --out results --no-timestamp
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, artifacts
from .geometry import FAMILIES, make_domain, width_profile
from .laplace2d import (auto_resolution, build_mesh, cross_section_average, nodal_set,
                        solve_first_neumann)
from .sl_solver import rayleigh_quotient_1d, solve_first_eigen, weighted_integral
from .verify import (CSV_COLUMNS, SLOPE_QUANTITIES, STABILITY_QUANTITIES, SlopeFit,
                     sandwich_check, scaling_study)

__all__ = ["RunConfig", "ConfigError", "parse_config", "render", "execute", "main"]

COMMANDS = ("solve-ode", "solve-pde", "nodal", "scaling", "verify-all")
SINGLE_EPS = ("solve-ode", "solve-pde", "nodal")
FORMATS = ("csv", "json", "svg")
DEFAULT_EPS = 0.1
DEFAULT_EPS_LIST = (0.2, 0.1, 0.05, 0.025)
DEFAULT_OUT = "thinodal_out"

# slope windows for the order claims: (quantity, lower, upper)
ORDER_WINDOWS = (("gap", 0.9, math.inf), ("sup_diff", 0.9, math.inf),
                 ("dist_s1", 0.9, math.inf), ("width", 1.8, 2.2))
MIN_R2 = {"gap": 0.95, "sup_diff": 0.95}
WIDTH_REFINEMENT = 0.1


class ConfigError(ValueError):
    """Invalid command-line or config-file input."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    family: str
    eps: Optional[float] = None
    eps_list: Optional[tuple] = None
    nx: object = "auto"
    ny: object = "auto"
    tol: float = 1e-10
    out_dir: str = DEFAULT_OUT
    formats: tuple = FORMATS
    jobs: Optional[int] = None
    no_timestamp: bool = False


_KEYS = {f.name for f in fields(RunConfig)}


def _resolution(v):
    if v is None or v == "auto":
        return "auto"
    try:
        n = int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"resolution must be an integer or 'auto', got {v!r}") from None
    if n < 1:
        raise ConfigError("resolution must be positive")
    return n


def _eps_list(v) -> tuple:
    if isinstance(v, str):
        v = [s for s in v.split(",") if s.strip()]
    try:
        return tuple(float(e) for e in v)
    except (TypeError, ValueError):
        raise ConfigError(f"malformed eps list {v!r}") from None


def _formats(v) -> tuple:
    items = v.split(",") if isinstance(v, str) else list(v)
    items = [s.strip() for s in items if s.strip()]
    bad = [s for s in items if s not in FORMATS]
    if bad:
        raise ConfigError(f"unknown format {bad[0]!r}")
    return tuple(f for f in FORMATS if f in items)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thinodal",
                                description="Neumann eigenpairs and nodal sets of thin domains.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    p.add_argument("--family")
    p.add_argument("--eps", type=float)
    p.add_argument("--eps-list", dest="eps_list")
    p.add_argument("--nx")
    p.add_argument("--ny")
    p.add_argument("--tol", type=float)
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--formats")
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-timestamp", dest="no_timestamp", action="store_true", default=None)
    return p


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Flags plus an optional ``--config`` JSON file; flags win over file values."""
    parser = _build_parser()
    parser.__class__ = _Parser
    ns = parser.parse_args(list(argv))
    values: dict = {}
    if ns.config:
        try:
            data = json.loads(Path(ns.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON config: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(data) - _KEYS)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        values.update(data)
    for k, v in vars(ns).items():
        if k != "config" and v is not None:
            values[k] = v
    values["command"] = ns.command
    if values.get("command") != ns.command:
        raise ConfigError("command mismatch")
    return _validate(values)


def _validate(values: dict) -> RunConfig:
    cmd = values["command"]
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}")
    family = values.get("family")
    if not family:
        raise ConfigError("missing required flag --family")
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}")
    eps, eps_list = values.get("eps"), values.get("eps_list")
    if eps is not None and eps_list is not None:
        raise ConfigError("conflicting epsilon specifications: give --eps or --eps-list")
    if cmd in SINGLE_EPS:
        if eps_list is not None:
            raise ConfigError(f"{cmd} takes a single --eps")
        eps = DEFAULT_EPS if eps is None else float(eps)
    else:
        if eps is not None:
            raise ConfigError(f"{cmd} takes --eps-list")
        eps_list = DEFAULT_EPS_LIST if eps_list is None else _eps_list(eps_list)
        if len(eps_list) < 4:
            raise ConfigError("a scaling study needs at least four widths")
    tol = float(values.get("tol", 1e-10))
    if not 1e-13 <= tol <= 1e-6:
        raise ConfigError("tol must lie in [1e-13, 1e-6]")
    out_dir = values.get("out_dir") or os.environ.get("THINODAL_OUT") or DEFAULT_OUT
    jobs = values.get("jobs")
    if jobs is not None and int(jobs) < 1:
        raise ConfigError("jobs must be positive")
    return RunConfig(cmd, family, eps, eps_list, _resolution(values.get("nx")),
                     _resolution(values.get("ny")), tol, str(out_dir),
                     _formats(values.get("formats", FORMATS)),
                     None if jobs is None else int(jobs), bool(values.get("no_timestamp")))


def render(cfg: RunConfig) -> list[str]:
    """Argument vector that parses back to ``cfg``."""
    argv = [cfg.command, "--family", cfg.family]
    if cfg.eps is not None:
        argv += ["--eps", repr(cfg.eps)]
    if cfg.eps_list is not None:
        argv += ["--eps-list", ",".join(repr(e) for e in cfg.eps_list)]
    argv += ["--nx", str(cfg.nx), "--ny", str(cfg.ny), "--tol", repr(cfg.tol),
             "--out", cfg.out_dir, "--formats", ",".join(cfg.formats)]
    if cfg.jobs is not None:
        argv += ["--jobs", str(cfg.jobs)]
    if cfg.no_timestamp:
        argv.append("--no-timestamp")
    return argv


# --- execution ---------------------------------------------------------------

@dataclass
class _Run:
    cfg: RunConfig
    out: Path
    artifacts: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    predicates: dict = field(default_factory=dict)

    def want(self, fmt: str) -> bool:
        return fmt in self.cfg.formats

    def csv(self, name, columns, rows, header=None):
        if self.want("csv"):
            artifacts.write_csv(self.out / name, columns, rows, header)
            self.artifacts.append(name)

    def json(self, name, obj):
        if self.want("json"):
            artifacts.write_json(self.out / name, obj)
            self.artifacts.append(name)

    def svg(self, name, series, **kw):
        if self.want("svg"):
            artifacts.line_plot_svg(self.out / name, series, timestamp=not self.cfg.no_timestamp,
                                    **kw)
            self.artifacts.append(name)


def _ode_tol(cfg):
    return max(cfg.tol, 1e-12)


def _pde_tol(cfg):
    return max(cfg.tol, 1e-10)


def _solve_ode(run: _Run):
    cfg = run.cfg
    dom = make_domain(cfg.family, cfg.eps)
    w = width_profile(dom)
    e = solve_first_eigen(w, _ode_tol(cfg))
    orth = abs(weighted_integral(w, e.xs, e.phi)) / weighted_integral(w, e.xs, np.abs(e.phi))
    rq = rayleigh_quotient_1d(w, e.xs, e.phi, e.dphi)
    mono = float(np.max(np.diff(e.phi)))
    run.diagnostics.update(mu=e.mu, s1=e.s1, orthogonality=orth, rayleigh_rel=abs(rq - e.mu) / e.mu,
                           max_increase=mono, glue_mismatch=e.glue_mismatch)
    run.predicates.update(orthogonality=orth <= 1e-8, rayleigh=abs(rq - e.mu) <= 1e-8 * e.mu,
                          monotone=mono <= 1e-10)
    header = {"mu": e.mu, "s1": e.s1, "family": cfg.family, "eps": cfg.eps}
    run.csv("phi.csv", ("x", "phi", "dphi"), zip(e.xs, e.phi, e.dphi), header)
    run.svg("phi.svg", [("phi", e.xs, e.phi, "-")], title=f"{cfg.family}, mu = {e.mu:.10g}",
            xlabel="x", ylabel="phi")


def _pde(cfg):
    dom = make_domain(cfg.family, cfg.eps)
    nx, ny = auto_resolution(cfg.eps, cfg.nx, cfg.ny)
    sol = solve_first_neumann(build_mesh(dom, nx, ny), _pde_tol(cfg))
    return dom, sol, cross_section_average(sol)


def _solve_pde(run: _Run):
    cfg = run.cfg
    dom, sol, prof = _pde(cfg)
    mesh = sol.mesh
    mean = sol.integral_u / sol.integral_abs_u
    run.diagnostics.update(**{"lambda": sol.lam}, nx=mesh.nx, ny=mesh.ny, residual=sol.residual,
                           iterations=sol.iterations, mean_u=mean, sup_u=sol.sup_u,
                           inf_u=sol.inf_u, mean_omega_ubar=prof.mean_defect)
    run.predicates.update(mean_zero=abs(mean) <= 1e-8, sign_change=sol.sup_u > 0 > sol.inf_u,
                          ubar0_positive=prof.ubar[0] > 0)
    header = {"lambda": sol.lam, "eps": cfg.eps, "nx": mesh.nx, "ny": mesh.ny,
              "family": cfg.family}
    run.csv("nodes.csv", ("x", "y", "u"),
            zip(mesh.nodes[:, 0], mesh.nodes[:, 1], sol.u), header)
    run.csv("elements.csv", ("v0", "v1", "v2"), mesh.elements.tolist(), header)
    run.csv("profile.csv", ("x", "omega", "ubar", "dubar", "eta"),
            zip(prof.xs, prof.omega, prof.ubar, prof.dubar, prof.eta), header)
    if run.want("svg"):
        e = solve_first_eigen(width_profile(dom), _ode_tol(cfg))
        phi, _ = e.evaluate(prof.xs)
        run.svg("profile.svg", [("ubar", prof.xs, prof.ubar, "-"),
                                ("phi", prof.xs, phi * prof.ubar[0], "--")],
                title=f"{cfg.family}, eps = {cfg.eps}", xlabel="x", ylabel="")


def _nodal(run: _Run):
    cfg = run.cfg
    _, sol, prof = _pde(cfg)
    rep = nodal_set(sol, prof)
    h = 1.0 / sol.mesh.nx
    report = {"eps": rep.eps, "s0": rep.s0, "s0_prime": rep.s0_prime, "proj_min": rep.proj_min,
              "proj_max": rep.proj_max, "width": rep.width, "lambda": sol.lam,
              "row_roots": rep.row_roots.tolist(),
              "per_column_roots": [list(t) for t in rep.per_column_roots]}
    run.diagnostics.update({k: report[k] for k in ("s0", "s0_prime", "width", "lambda")})
    run.predicates["roots_inside_projection"] = bool(
        rep.proj_min - h <= rep.s0 <= rep.proj_max + h
        and rep.proj_min - h <= rep.s0_prime <= rep.proj_max + h)
    run.json("nodal_report.json", report)


def _slope_points(rep, q):
    return [(r.eps, r.get(q)) for r in rep.rows]


def _scaling(run: _Run):
    cfg = run.cfg
    rep = scaling_study(cfg.family, cfg.eps_list, cfg.nx, cfg.ny, _pde_tol(cfg), jobs=cfg.jobs)
    run.csv("scaling_report.csv", CSV_COLUMNS, [r.csv_values() for r in rep.rows],
            {"family": cfg.family, "eps_list": list(cfg.eps_list)})
    extra = ("eps", "tol_disc", "lambda_coarse", "lambda_fine", "s1", "s0", "s0_prime",
             "oscillation", "sup_l2", "energy_ratio", "interior_decrease", "lipschitz",
             "eta_ratio_phi", "ubar0_over_sup", "mean_u", "mean_omega_ubar",
             "eta_identity_residual")
    run.csv("scaling_diagnostics.csv", extra, [[r.get(c) for c in extra] for r in rep.rows],
            {"family": cfg.family})
    summary = rep.summary()
    run.diagnostics["scaling"] = summary
    run.predicates["enough_rows"] = not rep.flagged
    eps = np.array([r.eps for r in rep.rows])
    for q in SLOPE_QUANTITIES:
        vals = np.array([r.get(q) for r in rep.rows])
        series = [(q, eps, vals, "o")]
        s = rep.slope(q)
        if s is not None:
            series.append((f"slope {s.slope:.3f}", eps, np.exp(s.intercept) * eps ** s.slope, "-"))
        if np.all(vals > 0):
            run.svg(f"{q}_scaling.svg", series, title=f"{cfg.family}: {q}", xlabel="eps",
                    ylabel=q, loglog=True)
    return rep, summary


def _verify_all(run: _Run):
    rep, summary = _scaling(run)
    preds = run.predicates
    for r in rep.rows:
        res = sandwich_check(r)
        preds[f"sandwich_eps_{r.eps!r}"] = res.passed
    for q, lo, hi in ORDER_WINDOWS:
        s = rep.slopes.get(q)
        if isinstance(s, SlopeFit):
            ok = lo <= s.slope <= hi and s.r2 >= MIN_R2.get(q, 0.0)
        else:
            # a quantity at the numerical floor satisfies any upper bound
            ok = s == "floor"
        preds[f"slope_{q}"] = bool(ok)
    if isinstance(rep.slopes.get("width"), SlopeFit):
        preds["width_refinement"] = rep.refinement_deltas.get("width", math.inf) < WIDTH_REFINEMENT
    summary["stability_within_2x"] = {k: v < 2.0 for k, v in rep.stability.items()}
    run.json("summary.json", summary)


_DISPATCH = {"solve-ode": _solve_ode, "solve-pde": _solve_pde, "nodal": _nodal,
             "scaling": lambda run: run.json("summary.json", _scaling(run)[1]),
             "verify-all": _verify_all}


def execute(cfg: RunConfig) -> int:
    """Run ``cfg``; returns 0 iff every predicate passes, 1 on a failed predicate, 2 on error."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg, out)
    t0 = time.perf_counter()
    error = None
    try:
        _DISPATCH[cfg.command](run)
    except Exception as exc:  # solver failures become a manifest record
        error = {"type": type(exc).__name__, "message": str(exc)}
    status = 2 if error else (0 if all(run.predicates.values()) else 1)
    manifest = {
        "config": asdict(cfg),
        "versions": {"thinodal": __version__, "numpy": np.__version__,
                     "scipy": __import__("scipy").__version__,
                     "python": platform.python_version()},
        "diagnostics": run.diagnostics,
        "predicates": run.predicates,
        "artifacts": run.artifacts,
        "status": status,
    }
    if error:
        manifest["error"] = error
    if not cfg.no_timestamp:
        manifest["wall_time_s"] = time.perf_counter() - t0
    artifacts.write_json(out / "manifest.json", manifest)
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"thinodal: error: {exc}", file=sys.stderr)
        return 2
    status = execute(cfg)
    print(f"thinodal {cfg.command}: status {status} -> {cfg.out_dir}/manifest.json")
    return status


if __name__ == "__main__":
    sys.exit(main())

"""Batch experiment driver: one subcommand per reported experiment.

Commands write diff-able CSV artifacts (exact headers, deterministic
formatting) plus one-line summaries on stdout; ``identities`` emits a
JSON report instead.  Exit codes: 0 success, 2 invalid flags, 3
numerical failure (a factorization broke down), 4 failed identity
suite.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import acoustics as ac
from . import errors as err
from . import lsq, mixed_core, solver
from .mesh import build_mesh
from .spaces import build_test_layout, build_trial_layout

__all__ = [
    "ExperimentConfig",
    "ValidationError",
    "run_table1",
    "run_hconv",
    "run_identities",
    "run_solve",
    "run_lsq_compare",
    "main",
]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IDENTITIES = 4

# identity suite report ids and the records backing them
IDENTITY_IDS = ("3.15", "3.16", "3.17", "3.18", "3.19", "3.20", "3.21", "3.22", "3.23", "3.24")
_RECORD_FOR_ID = {
    "3.15": "pythagoras",
    "3.16": "dual_norm",
    "3.17": "fundamental",
    "3.18": "stability_combined",
    "3.19": "apost_combined",
    "3.20": "stability_energy",
    "3.21": "apost_energy",
    "3.22": "stability_psi",
    "3.23": "apost_psi",
    "3.24": "energy_split",
}
IDENTITY_RTOL = 1e-10


class ValidationError(Exception):
    """Bad flag combination; the message names the offending flag."""


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    nx: int = 2
    ny: int = 2
    p: int | None = None
    dp: int | None = None
    dp_max: int | None = None
    wavelengths: float = 2.0
    angle_deg: float = 40.0
    norm: str = ac.NORM_GRAPH
    alpha: float = 1.0
    method: str = solver.METHOD_DPG
    goal: str = ac.GOAL_MANUFACTURED
    alphas: tuple[float, ...] = (1.0, 0.1, 0.01, 0.001)
    sample_grid: int = 20
    seed: int = 0
    out: str | None = None

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.wavelengths

    def acoustics(self, p: int, dp: int) -> ac.AcousticsConfig:
        return ac.AcousticsConfig(
            omega=self.omega, angle_deg=self.angle_deg, p=p, dp=dp, norm=self.norm, alpha=self.alpha
        )

    def validate(self):
        if self.nx < 1 or self.ny < 1:
            raise ValidationError("--nx and --ny must be at least 1")
        if self.p is not None and self.p < 1:
            raise ValidationError("--p must be at least 1")
        if self.dp is not None and self.dp < 0:
            raise ValidationError("--dp must be nonnegative")
        if self.dp_max is not None and self.dp_max < 0:
            raise ValidationError("--dp-max must be nonnegative")
        if self.dp is not None and self.dp_max is not None and self.dp_max < self.dp:
            raise ValidationError("--dp-max must not be smaller than --dp")
        if self.wavelengths <= 0:
            raise ValidationError("--wavelengths must be positive")
        if not 0 <= self.angle_deg < 360:
            raise ValidationError("--angle-deg must lie in [0, 360)")
        if self.method not in (solver.METHOD_DPG, solver.METHOD_DPGSTAR):
            raise ValidationError("--method must be dpg or dpgstar")
        if self.goal not in (ac.GOAL_MANUFACTURED, ac.GOAL_UNIFORM_PRESSURE):
            raise ValidationError("--goal must be manufactured or uniform-pressure")
        if self.sample_grid < 2:
            raise ValidationError("--sample-grid must be at least 2")
        if not self.alphas or any(a <= 0 for a in self.alphas):
            raise ValidationError("--alphas must be positive")
        if any(nxt >= prev for prev, nxt in zip(self.alphas, self.alphas[1:])):
            raise ValidationError("--alphas must be strictly descending")
        if self.norm == ac.NORM_SCALED and self.alpha <= 0:
            raise ValidationError("--norm scaled:<alpha> needs a positive alpha")


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_csv(path: str, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run_table1(cfg: ExperimentConfig) -> str:
    """dp sweep on one mesh: DPG and DPG* L2 errors plus the DPG* graph error."""
    cfg.validate()
    p = cfg.p if cfg.p is not None else 3
    dp_max = cfg.dp_max if cfg.dp_max is not None else 6
    mesh = build_mesh(cfg.nx, cfg.ny)
    rows = []
    for dp in range(dp_max + 1):
        acfg = cfg.acoustics(p, dp)
        wave = acfg.wave()
        bundle_dpg, bundle_star = solver.run_pair(acfg, mesh, cfg.goal)
        dpg_pct = err.field_l2_error(bundle_dpg, wave).l2_rel_pct
        star_pct = err.field_l2_error(bundle_star, wave).l2_rel_pct
        graph_pct = err.graph_norm_error(bundle_star, wave)
        rows.append((dp, dpg_pct, star_pct, graph_pct))
        print(f"table1 dp={dp}: dpg={dpg_pct:.2f}% dpgstar={star_pct:.2f}% graph={graph_pct:.2f}%")
    out = cfg.out or "table1.csv"
    _write_csv(out, "dp,dpg_l2_pct,dpgstar_l2_pct,dpgstar_graph_pct", rows)
    return out


def run_hconv(cfg: ExperimentConfig) -> str:
    """Uniform refinement sweeps: error and consecutive h-rates per (p, dp) series."""
    cfg.validate()
    p_list = [cfg.p] if cfg.p is not None else [1, 2, 3, 4]
    dp_max = cfg.dp_max if cfg.dp_max is not None else 3
    dp_list = [cfg.dp] if cfg.dp is not None else list(range(dp_max + 1))
    nx_list = [n for n in (2, 4, 8, 16) if n <= max(cfg.nx, 2)]
    rows = []
    for p in p_list:
        for dp in dp_list:
            acfg = cfg.acoustics(p, dp)
            wave = acfg.wave()
            series = []
            for nx in nx_list:
                mesh = build_mesh(nx, nx)
                bundle = solver.run(acfg, mesh, cfg.method, cfg.goal)
                pct = err.field_l2_error(bundle, wave).l2_rel_pct
                series.append((1.0 / nx, pct))
                ndof = bundle.trial_layout.n_total
                rate = ""
                if len(series) > 1:
                    rate = err.convergence_rates(series[-2:]).per_interval[0]
                rows.append((p, dp, nx, ndof, pct, rate))
                print(
                    f"hconv p={p} dp={dp} nx={nx}: ndof={ndof} l2={pct:.3f}% "
                    f"rate={'-' if rate == '' else f'{rate:.2f}'} cond={bundle.cond_estimate:.3e}"
                )
    out = cfg.out or "hconv.csv"
    _write_csv(out, "p,dp,nx,ndof_trial,l2_err_pct,rate_h", rows)
    return out


def _aggregate(results: dict, name: str, record: mixed_core.IdentityRecord) -> None:
    entry = results.setdefault(
        name,
        {"kind": record.kind, "count": 0, "max_rel_gap": 0.0, "min_rel_slack": np.inf, "pass": True},
    )
    entry["count"] += 1
    if record.kind == "identity":
        entry["max_rel_gap"] = max(entry["max_rel_gap"], record.rel_gap)
    else:
        entry["min_rel_slack"] = min(entry["min_rel_slack"], record.rel_slack)
    entry["pass"] = entry["pass"] and record.ok(IDENTITY_RTOL)


def _matrix_identity_suite(seed: int, count: int = 100) -> dict:
    rng = np.random.default_rng(seed)
    results: dict = {}
    for _ in range(count):
        n = int(rng.integers(5, 41))
        m = int(rng.integers(1, n))
        sys_ = mixed_core.random_mixed_system(rng, n, m)
        sol = mixed_core.solve_mixed(sys_)
        for report in (
            mixed_core.verify_fundamental_identity(sys_, sol),
            mixed_core.verify_stability_bounds(sys_, sol),
            mixed_core.aposteriori_bounds(
                sys_,
                sol,
                rng.standard_normal(n) + 1j * rng.standard_normal(n),
                rng.standard_normal(m) + 1j * rng.standard_normal(m),
            ),
        ):
            for record in report.records:
                _aggregate(results, record.name, record)
        # nested coarse solve for the energy split identity
        w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        fine = mixed_core.MixedSystem(
            sys_.gram, sys_.b_matrix, sys_.b_matrix @ w, np.zeros(m, dtype=complex)
        )
        mc = int(rng.integers(1, m + 1))
        nc = int(rng.integers(mc + 1, n + 1))
        p_u = rng.standard_normal((m, mc)) + 1j * rng.standard_normal((m, mc))
        p_v = rng.standard_normal((n, nc)) + 1j * rng.standard_normal((n, nc))
        report = mixed_core.energy_error_identity(fine, p_u, p_v)
        for record in report.records:
            _aggregate(results, record.name, record)
    return results


def _pde_check_suite(cfg: ExperimentConfig) -> dict:
    p = cfg.p if cfg.p is not None else 3
    dp = cfg.dp if cfg.dp is not None else 1
    acfg = cfg.acoustics(p, dp)
    mesh = build_mesh(cfg.nx, cfg.ny)
    trial = build_trial_layout(mesh, p)
    test = build_test_layout(mesh, p, dp, family=acfg.family, trial_layout=trial)
    checks: dict = {}

    worst, scale = 0.0, 0.0
    for e in range(mesh.n_elements):
        pairing = ac.exact_solution_pairing(acfg, mesh, e, test)
        load = ac.assemble_load_primal(acfg, mesh, e, test)
        worst = max(worst, float(np.abs(pairing - load).max()))
        scale = max(scale, float(np.abs(pairing).max()), float(np.abs(load).max()))
    checks["consistency"] = {"residual": worst, "scale": scale, "pass": worst <= 1e-8 * scale}

    gs_dpg, _ = solver._assemble_system(acfg, mesh, solver.METHOD_DPG, cfg.goal)
    gs_star, _ = solver._assemble_system(acfg, mesh, solver.METHOD_DPGSTAR, cfg.goal)
    shared = bool(np.array_equal(gs_dpg.s_matrix, gs_star.s_matrix))
    checks["stiffness_sharing"] = {"bit_identical": shared, "pass": shared}

    g_hat = ac.assemble_load_adjoint(acfg, mesh, trial, ac.GOAL_MANUFACTURED)
    g_scale = float(np.abs(g_hat).max())
    boundary = trial.boundary_phat_mask()
    off_support = float(np.abs(g_hat[~boundary]).max())
    checks["adjoint_load_support"] = {
        "off_boundary_max": off_support,
        "scale": g_scale,
        "pass": off_support <= 1e-10 * g_scale,
    }

    primal = solver.run(acfg, mesh, solver.METHOD_DPG)
    goal_checks = {}
    ok = True
    rng = np.random.default_rng(cfg.seed + 1)
    for goal_name in (ac.GOAL_MANUFACTURED, ac.GOAL_UNIFORM_PRESSURE, "random"):
        if goal_name == "random":
            gs, _ = solver._assemble_system(acfg, mesh, solver.METHOD_DPGSTAR, ac.GOAL_MANUFACTURED)
            random_g = rng.standard_normal(trial.n_total) + 1j * rng.standard_normal(trial.n_total)
            gs.rhs = -random_g
            dual = solver._finish(acfg, mesh, gs, solver.solve_global(gs), random_g)
        else:
            dual = solver.run(acfg, mesh, solver.METHOD_DPGSTAR, goal_name)
        result = err.goal_orthogonality_check(primal, dual, acfg.wave())
        entry_ok = result.b_pairing <= 1e-8 * result.scale_b and result.v_inner <= 1e-8 * result.scale_v
        goal_checks[goal_name] = {
            "b_pairing": result.b_pairing,
            "v_inner": result.v_inner,
            "scale_b": result.scale_b,
            "scale_v": result.scale_v,
            "pass": entry_ok,
        }
        ok = ok and entry_ok
    checks["goal_orthogonality"] = {"goals": goal_checks, "pass": ok}
    return checks


def run_identities(cfg: ExperimentConfig) -> tuple[str, bool]:
    """Matrix-level identity suite plus the PDE-level structural checks."""
    cfg.validate()
    matrix_results = _matrix_identity_suite(cfg.seed)
    identities = {}
    for ident in IDENTITY_IDS:
        entry = dict(matrix_results[_RECORD_FOR_ID[ident]])
        entry["tolerance"] = IDENTITY_RTOL
        if not np.isfinite(entry["min_rel_slack"]):
            del entry["min_rel_slack"]
        identities[ident] = entry
    pde_checks = _pde_check_suite(cfg)
    all_pass = all(entry["pass"] for entry in identities.values()) and all(
        entry["pass"] for entry in pde_checks.values()
    )
    report = {
        "seed": cfg.seed,
        "systems": 100,
        "identities": identities,
        "pde_checks": pde_checks,
        "pass": all_pass,
    }
    out = cfg.out or "identities.json"
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    for ident in IDENTITY_IDS:
        print(f"identity {ident}: {'pass' if identities[ident]['pass'] else 'FAIL'}")
    for name, entry in pde_checks.items():
        print(f"check {name}: {'pass' if entry['pass'] else 'FAIL'}")
    return out, all_pass


def run_solve(cfg: ExperimentConfig) -> str:
    """One solve, sampled on a uniform grid; prints the error summary line."""
    cfg.validate()
    p = cfg.p if cfg.p is not None else 3
    dp = cfg.dp if cfg.dp is not None else 2
    acfg = cfg.acoustics(p, dp)
    mesh = build_mesh(cfg.nx, cfg.ny)
    bundle = solver.run(acfg, mesh, cfg.method, cfg.goal)
    wave = acfg.wave()
    report = err.field_l2_error(bundle, wave)
    samples = err.sample_solution(bundle, cfg.sample_grid)
    rows = [
        (
            float(x),
            float(y),
            p_val.real,
            p_val.imag,
            u1.real,
            u1.imag,
            u2.real,
            u2.imag,
        )
        for (x, y, p_val, u1, u2) in samples
    ]
    out = cfg.out or "solution.csv"
    _write_csv(out, "x,y,re_p,im_p,re_u1,im_u1,re_u2,im_u2", rows)
    summary = f"solve method={cfg.method} l2_rel_pct={report.l2_rel_pct:.6g}"
    if cfg.method == solver.METHOD_DPGSTAR:
        summary += f" graph_rel_pct={err.graph_norm_error(bundle, wave):.6g}"
    summary += f" cond={bundle.cond_estimate:.3e}"
    print(summary)
    return out


def run_lsq_compare(cfg: ExperimentConfig) -> str:
    """Scaled-norm DPG* runs against the weakly conforming least-squares limit."""
    cfg.validate()
    p = cfg.p if cfg.p is not None else 3
    dp = cfg.dp if cfg.dp is not None else 3
    acfg = cfg.acoustics(p, dp)
    mesh = build_mesh(cfg.nx, cfg.ny)
    rows = lsq.alpha_sweep(acfg, mesh, list(cfg.alphas))
    out = cfg.out or "lsq.csv"
    _write_csv(
        out,
        "alpha,dist_to_lsq_l2,dpgstar_l2_err_pct,lsq_l2_err_pct",
        [(r.alpha, r.dist_to_lsq_l2, r.dpgstar_l2_err_pct, r.lsq_l2_err_pct) for r in rows],
    )
    for r in rows:
        print(
            f"lsq-compare alpha={r.alpha:g}: dist={r.dist_to_lsq_l2:.6g} "
            f"dpgstar={r.dpgstar_l2_err_pct:.4f}% lsq={r.lsq_l2_err_pct:.4f}%"
        )
    return out


def _parse_norm(text: str) -> tuple[str, float]:
    if text == "graph":
        return ac.NORM_GRAPH, 1.0
    if text == "math":
        return ac.NORM_MATH, 1.0
    if text.startswith("scaled:"):
        try:
            alpha = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise ValidationError(f"--norm scaled:<alpha> needs a numeric alpha, got {text!r}") from exc
        if alpha <= 0:
            raise ValidationError("--norm scaled:<alpha> needs a positive alpha")
        return ac.NORM_SCALED, alpha
    raise ValidationError(f"--norm must be graph, math or scaled:<alpha>, got {text!r}")


def _parse_alphas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ValidationError(f"--alphas must be a comma-separated list of numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpgstar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "table1": "dp sweep of DPG/DPG* errors on one mesh",
        "hconv": "uniform h-refinement convergence sweeps",
        "identities": "matrix-level identity suite and structural checks",
        "solve": "single solve sampled on a uniform grid",
        "lsq-compare": "DPG* scaled-norm runs against weakly conforming least squares",
    }
    for name, help_text in specs.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--nx", type=int, default=None)
        cmd.add_argument("--ny", type=int, default=None)
        cmd.add_argument("--p", type=int, default=None)
        cmd.add_argument("--dp", type=int, default=None)
        cmd.add_argument("--dp-max", type=int, default=None)
        cmd.add_argument("--wavelengths", type=float, default=None)
        cmd.add_argument("--angle-deg", type=float, default=40.0)
        cmd.add_argument("--norm", type=str, default="graph")
        cmd.add_argument("--method", type=str, default=solver.METHOD_DPG)
        cmd.add_argument("--goal", type=str, default=ac.GOAL_MANUFACTURED)
        cmd.add_argument("--alphas", type=str, default="1,0.1,0.01,0.001")
        cmd.add_argument("--sample-grid", type=int, default=20)
        cmd.add_argument("--seed", type=int, default=0)
        cmd.add_argument("--out", type=str, default=None)
    return parser


_DEFAULT_WAVELENGTHS = {"table1": 2.0, "hconv": 1.0, "identities": 2.0, "solve": 2.0, "lsq-compare": 2.0}
_DEFAULT_NX = {"table1": 2, "hconv": 16, "identities": 2, "solve": 2, "lsq-compare": 2}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    norm, alpha = _parse_norm(args.norm)
    alphas = _parse_alphas(args.alphas)
    nx = args.nx if args.nx is not None else _DEFAULT_NX[args.command]
    ny = args.ny if args.ny is not None else nx
    wavelengths = args.wavelengths if args.wavelengths is not None else _DEFAULT_WAVELENGTHS[args.command]
    return ExperimentConfig(
        command=args.command,
        nx=nx,
        ny=ny,
        p=args.p,
        dp=args.dp,
        dp_max=args.dp_max,
        wavelengths=wavelengths,
        angle_deg=args.angle_deg,
        norm=norm,
        alpha=alpha,
        method=args.method,
        goal=args.goal,
        alphas=alphas,
        sample_grid=args.sample_grid,
        seed=args.seed,
        out=args.out,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if cfg.command == "table1":
            run_table1(cfg)
        elif cfg.command == "hconv":
            run_hconv(cfg)
        elif cfg.command == "identities":
            _, ok = run_identities(cfg)
            if not ok:
                return EXIT_IDENTITIES
        elif cfg.command == "solve":
            run_solve(cfg)
        elif cfg.command == "lsq-compare":
            run_lsq_compare(cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (mixed_core.FactorizationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

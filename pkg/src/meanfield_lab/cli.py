"""Command-line entry point: ``meanfield-lab <subcommand> ...``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
divergence, 4 validation failure (including a geometry violation during a
run).  Errors are also written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

from .agent_state import time_marginal
from .chaos import chaos_sweep
from .config import ExperimentConfig
from .errors import ConfigError, DivergenceError, GeometryViolation, InputError, MeanfieldLabError
from .fields import StateSampler, estimate_lipschitz, validate_geometry
from .meanfield import fixed_point
from .oracle_check import run_oracle_check
from .sde_engine import ROLE_AGENTS, default_workers, solve_n_particle

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_VALIDATION = 4


class _Failed(Exception):
    def __init__(self, code: int, payload: dict):
        super().__init__(payload.get("message", ""))
        self.code = code
        self.payload = payload


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _workers(args) -> int:
    env = os.environ.get("MEANFIELD_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("MEANFIELD_LAB_THREADS must be an integer", value=env) from None
    return args.threads if args.threads else default_workers()


def _load(args, kind: str | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if kind is not None and cfg.kind != kind:
        # the subcommand wins; knobs of the other experiment kind do not apply
        data = cfg.to_dict()
        data["experiment"] = {"kind": kind}
        cfg = ExperimentConfig.from_dict(data)
    if getattr(args, "seed", None) is not None:
        data = cfg.to_dict()
        data["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(data)
    return cfg


def cmd_simulate(args) -> str:
    cfg = _load(args, "simulate")
    sim = cfg.sim_config()
    f = cfg.build_field()
    init = cfg.init.draw(sim.seed, range(sim.N), role=ROLE_AGENTS)
    bundle = solve_n_particle(init, f, sim, workers=_workers(args))
    atomic_write(args.out, bundle.to_csv())
    final = time_marginal(bundle, bundle.K)
    return (
        f"simulate: N={sim.N} K={sim.K} T={sim.T} seed={sim.seed} "
        f"mean|x_T|={float((final.positions**2).sum(axis=1).mean() ** 0.5):.6g} -> {args.out}"
    )


def cmd_meanfield(args) -> str:
    cfg = _load(args, "meanfield")
    sim = cfg.sim_config()
    tol = args.tol if args.tol is not None else cfg.knobs["tol"]
    max_iter = args.max_iter if args.max_iter is not None else cfg.knobs["max_iter"]
    law, report = fixed_point(
        cfg.build_field(), cfg.init, sim, tol, max_iter, space=cfg.space, workers=_workers(args)
    )
    out = Path(args.out)
    report_path = Path(args.report) if args.report else _sidecar(out, ".report.json")
    atomic_write(out, law.bundle.to_csv())
    atomic_write(report_path, _dump({**report.to_dict(), "law_size": law.size}))
    last = report.gaps[-1] if report.gaps else float("nan")
    return (
        f"meanfield: iterations={report.iterations} converged={str(report.converged).lower()} "
        f"last_gap={last:.3e} seed={sim.seed} -> {out}"
    )


def cmd_chaos(args) -> str:
    cfg = _load(args, "chaos")
    knobs = cfg.knobs
    n_grid = [int(v) for v in args.n_grid.split(",")] if args.n_grid else list(knobs["n_grid"])
    reps = args.reps if args.reps is not None else knobs["reps"]
    sim = cfg.sim_config(N=max(n_grid))
    sweep = chaos_sweep(
        cfg.build_field(),
        sim,
        n_grid,
        reps,
        sim.seed,
        cfg.init,
        space=cfg.space,
        law_factor=knobs["law_factor"],
        law_tol=knobs["law_tol"],
        law_max_iter=knobs["law_max_iter"],
        reference_w2=knobs["reference_w2"],
        workers=_workers(args),
    )
    out = Path(args.out)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "rep", "err", "wall_ms"])
    for n, rep, err, ms in sweep.rows():
        writer.writerow([n, rep, repr(float(err)), repr(round(float(ms), 3))])
    summary_path = Path(args.summary) if args.summary else _sidecar(out, ".summary.json")
    atomic_write(out, buf.getvalue())
    atomic_write(summary_path, _dump(sweep.summary()))
    slope = "undefined" if sweep.slope is None else f"{sweep.slope:.3f}"
    errs = " ".join(f"{e:.3e}" for e in sweep.errs)
    return f"chaos: N={n_grid} err=[{errs}] slope={slope} seed={sim.seed} -> {out}"


def cmd_validate(args) -> str:
    cfg = _load(args, "validate")
    f = cfg.build_field(strict=False)
    problems = cfg.field_spec.check(cfg.theta)
    n_samples = args.n_samples if args.n_samples is not None else cfg.knobs["n_samples"]
    sampler = StateSampler(cfg.sim["d"], cfg.M)
    geometry = validate_geometry(f, sampler, n_samples, cfg.seed)
    lip = estimate_lipschitz(f, cfg.space, sampler, cfg.knobs["n_pairs"], cfg.seed)
    report = {
        "passed": geometry.passed and not problems,
        "field": cfg.field_spec.variant,
        "theta": cfg.theta,
        "seed": cfg.seed,
        "parameter_problems": problems,
        "geometry": geometry.to_dict(),
        "lipschitz_estimate": {"v": lip.v, "sigma": lip.sigma, "flux": lip.flux, "n_pairs": lip.n_pairs},
        "declared_lipschitz": list(f.declared_lipschitz) if f.declared_lipschitz else None,
    }
    if args.out:
        atomic_write(args.out, _dump(report))
    line = (
        f"validate: {cfg.field_spec.variant} theta={cfg.theta} "
        f"{'pass' if report['passed'] else 'FAIL'} worst_margin={geometry.worst_margin:.3e}"
    )
    if not report["passed"]:
        raise _Failed(EXIT_VALIDATION, {"error": "validation_failed", "message": line, "report": report})
    return line


def cmd_oracle_check(args) -> str:
    report = run_oracle_check(
        n_instances=args.instances,
        max_support=args.max_support,
        max_assignment=args.max_assignment,
        seed=args.seed,
        inject_fault=args.inject_fault,
    )
    if args.out:
        atomic_write(args.out, _dump(report.to_dict()))
    line = (
        f"oracle-check: {report.n_instances} instances worst_error={report.worst_error:.3e} "
        f"{'pass' if report.passed else 'FAIL'} seed={report.seed}"
    )
    if not report.passed:
        raise _Failed(
            EXIT_VALIDATION, {"error": "oracle_mismatch", "message": line, "worst": report.worst}
        )
    return line


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meanfield-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", required=out_required)
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker threads (env MEANFIELD_LAB_THREADS wins)")

    p = sub.add_parser("simulate", help="integrate the N-particle system, write paths CSV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("meanfield", help="fixed-point solve for the mean-field law")
    common(p)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--report", help="report JSON (default: <out>.report.json)")
    p.set_defaults(func=cmd_meanfield)

    p = sub.add_parser("chaos", help="propagation-of-chaos sweep over N")
    common(p)
    p.add_argument("--n-grid", help="comma-separated N values, e.g. 8,16,32")
    p.add_argument("--reps", type=int)
    p.add_argument("--summary", help="summary JSON (default: <out>.summary.json)")
    p.set_defaults(func=cmd_chaos)

    p = sub.add_parser("validate", help="audit a field's geometric condition and Lipschitz constants")
    common(p, out_required=False)
    p.add_argument("--n-samples", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle-check", help="cross-check production metrics against the oracles")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--max-support", type=int, default=6)
    p.add_argument("--max-assignment", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--threads", type=int, help=argparse.SUPPRESS)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def _error_payload(exc: MeanfieldLabError) -> dict:
    payload = exc.to_dict()
    if isinstance(exc, DivergenceError) and exc.last_finite is not None:
        payload["last_finite"] = json.loads(exc.last_finite.to_json())
    return payload


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    code, payload = EXIT_OK, None
    try:
        print(args.func(args))
    except _Failed as exc:
        code, payload = exc.code, exc.payload
    except DivergenceError as exc:
        code, payload = EXIT_DIVERGENCE, _error_payload(exc)
    except GeometryViolation as exc:
        code, payload = EXIT_VALIDATION, _error_payload(exc)
    except (InputError, MeanfieldLabError) as exc:
        code, payload = EXIT_CONFIG, _error_payload(exc)
    except Exception as exc:  # noqa: BLE001 - still report as JSON
        code, payload = 1, {"error": "internal_error", "message": f"{type(exc).__name__}: {exc}"}
    if payload is not None:
        payload.setdefault("command", args.command)
        print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Experiment orchestration: solve, assemble, measure, persist, verify.

A run executes stages in a fixed order — trajectory (solve or exact
identity), constants, operator assembly and spectra, inequality
harness — and writes every artifact through :mod:`fredlab.container`.
Every boolean verdict lands in ``checks.json`` as an operator/operand
record so ``verify`` can re-evaluate it from the stored numbers, and
``manifest.json`` indexes all files by content hash.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .basis import StreamBasis, random_stream_values
from .config import ExperimentConfig
from .container import (
    MANIFEST_NAME,
    check_manifest,
    read_csv,
    read_json,
    write_array,
    write_csv,
    write_field,
    write_json,
    write_manifest,
)
from .derivatives import x_derivative, y_derivative_fd
from .errors import ConfigError, NumericsError
from .euler import GeodesicTrajectory, shear_profile, solve_euler
from .grid import ChannelGrid
from .inequalities import HarnessContext, inequality_harness
from .lab import (
    assemble_operator,
    compactness_signature,
    conjugate_scan,
    invertibility_certificate,
)
from .operators import (
    LambdaInverse,
    gamma_apply,
    k_apply,
    lambda_apply,
    omega_hat_apply,
    phi_apply,
    trajectory_contexts,
    uniform_quad_weights,
)
from .sobolev import constants_from_trajectory

__all__ = [
    "run_experiment",
    "render_report",
    "verify_artifacts",
    "OUTPUT_ROOT_VAR",
    "THREADS_VAR",
]

OUTPUT_ROOT_VAR = "FREDLAB_OUTPUT_ROOT"
THREADS_VAR = "FREDLAB_THREADS"
_SEED_STRIDE = 7919  # distinct deterministic substream per inequality tag


def _identity_trajectory(grid: ChannelGrid, times: np.ndarray) -> GeodesicTrajectory:
    """Exact zero-velocity trajectory (no solve needed)."""
    n = times.size
    X, Y = grid.meshgrid()
    return GeodesicTrajectory(
        grid=grid,
        times=times.copy(),
        U=np.zeros((n, grid.ny)),
        zeta=np.zeros((n, grid.nx, grid.ny)),
        eta_x=np.broadcast_to(X, (n, grid.nx, grid.ny)).copy(),
        eta_y=np.broadcast_to(Y, (n, grid.nx, grid.ny)).copy(),
        inv_x=np.zeros((n, grid.nx, grid.ny)),
        inv_y=np.zeros((n, grid.nx, grid.ny)),
        energy=np.zeros(n),
        enstrophy=np.zeros(n),
        dt=float(times[1] - times[0]),
        steps_total=0,
    )


def _initial_vorticity(cfg: ExperimentConfig, grid: ChannelGrid) -> np.ndarray:
    """Fluctuation vorticity for the non-shear initial-data selectors."""
    if cfg.initial == "random-seeded":
        rng = np.random.default_rng([cfg.seed, 0])
        psi = cfg.amplitude * random_stream_values(grid, rng)
    else:  # file: a stream-function container
        from .container import read_field

        psi, meta = read_field(cfg.initial_file)
        if psi.ndim != 2 or psi.shape != grid.shape:
            raise ConfigError(
                f"initial_file field shape {psi.shape} does not match grid {grid.shape}"
            )
        psi = cfg.amplitude * psi
    return x_derivative(psi, grid, 2) + y_derivative_fd(psi, grid, 2, acc=6)


def _solve_stage(cfg: ExperimentConfig, grid: ChannelGrid) -> GeodesicTrajectory:
    n_ckpt = cfg.n_checkpoints()
    if cfg.initial == "zero":
        return _identity_trajectory(grid, np.linspace(0.0, cfg.t_final, n_ckpt))
    if cfg.initial == "shear":
        U0 = cfg.amplitude * shear_profile(grid)
        zeta0 = None
    else:
        U0 = None
        zeta0 = _initial_vorticity(cfg, grid)
    return solve_euler(grid, U0=U0, zeta0=zeta0, t_final=cfg.t_final, n_checkpoints=n_ckpt)


def _persist_trajectory(outdir: Path, traj: GeodesicTrajectory) -> None:
    grid = traj.grid
    write_field(outdir / "trajectory-eta-x.bin", traj.eta_x, grid, "map-x")
    write_field(outdir / "trajectory-eta-y.bin", traj.eta_y, grid, "map-y")
    write_field(outdir / "trajectory-inv-x.bin", traj.inv_x, grid, "invmap-x")
    write_field(outdir / "trajectory-inv-y.bin", traj.inv_y, grid, "invmap-y")
    write_field(outdir / "trajectory-zeta.bin", traj.zeta, grid, "vorticity")
    write_array(outdir / "trajectory-U.bin", traj.U, "mean-profile", height=grid.height)
    write_json(
        outdir / "trajectory.json",
        {
            "times": traj.times,
            "dt": traj.dt,
            "steps_total": traj.steps_total,
            "energy": traj.energy,
            "enstrophy": traj.enstrophy,
            "clamped_queries": traj.clamp.clamped,
            "total_queries": traj.clamp.total,
        },
    )


def _check(checks: list, name: str, lhs: float, op: str, rhs: float) -> bool:
    held = {"<=": lhs <= rhs, "<": lhs < rhs, ">=": lhs >= rhs, "==": lhs == rhs}[op]
    checks.append(
        {"name": name, "lhs": float(lhs), "op": op, "rhs": float(rhs), "held": bool(held)}
    )
    return bool(held)


def _operator_stage(
    cfg: ExperimentConfig,
    outdir: Path,
    traj: GeodesicTrajectory,
    basis: StreamBasis,
    constants: dict,
    checks: list,
) -> dict:
    grid = traj.grid
    times = np.asarray(traj.times)
    ctxs = trajectory_contexts(traj)
    ctx_final = ctxs[-1]
    quad_w = uniform_quad_weights(times.size, float(times[1] - times[0]))
    meta_common = {
        "t": float(times[-1]),
        "pairing": "l2-velocity",
        "basis": {"max_k": basis.max_k, "max_l": basis.max_l, "n": basis.n},
        "grid": {"nx": grid.nx, "ny": grid.ny, "height": grid.height},
    }
    reports: dict = {}

    def persist(opm, extra=None):
        write_array(outdir / f"op-{opm.name}.bin", opm.pairing, "matrix")
        meta = dict(meta_common, operator=opm.name)
        if extra:
            meta.update(extra)
        write_json(outdir / f"op-{opm.name}.json", meta)

    for op in cfg.operator_list():
        if op == "lambda":
            opm = assemble_operator(
                "lambda", basis, lambda F: lambda_apply(ctx_final.metric, F)
            )
            B = opm.pairing
            sym_defect = float(np.linalg.norm(B - B.T) / np.linalg.norm(B))
            persist(opm, {"symmetry_rel_frobenius": sym_defect})
            rep = invertibility_certificate(opm)
            rep["symmetry_rel_frobenius"] = sym_defect
            _check(checks, "lambda:symmetric", sym_defect, "<=", 1e-6)
            reports["lambda"] = rep
        elif op == "omega_hat":
            invs = [LambdaInverse(c.metric) for c in ctxs]
            opm = assemble_operator(
                "omega-hat", basis, lambda F: omega_hat_apply(invs, quad_w, F)
            )
            B = opm.pairing
            sym_defect = float(np.linalg.norm(B - B.T) / np.linalg.norm(B))
            persist(opm, {"symmetry_rel_frobenius": sym_defect})
            cert = invertibility_certificate(opm, floor=0.9 * constants["C_t"])
            cert["symmetry_rel_frobenius"] = sym_defect
            _check(checks, "omega-hat:symmetric", sym_defect, "<=", 1e-6)
            _check(
                checks,
                "omega-hat:floor",
                cert["symmetric_lambda_min"],
                ">=",
                cert["floor"],
            )
            if cfg.enlargement_check:
                big = StreamBasis(
                    grid, max_k=round(1.5 * cfg.max_k), max_l=round(1.5 * cfg.max_l)
                )
                big_opm = assemble_operator(
                    "omega-hat-enlarged", basis=big,
                    apply_fn=lambda F: omega_hat_apply(invs, quad_w, F),
                )
                sig_big = big_opm.singular_values()
                rel = abs(float(sig_big[-1]) - cert["sigma_min"]) / cert["sigma_min"]
                cert["n_enlarged"] = big_opm.n
                cert["sigma_min_enlarged"] = float(sig_big[-1])
                cert["enlargement_rel_change"] = rel
                _check(checks, "omega-hat:enlargement-stable", rel, "<", 0.05)
            reports["omega_hat"] = cert
        elif op in ("gamma", "k"):
            if op == "gamma":
                opm = assemble_operator(
                    "gamma", basis, lambda F: gamma_apply(ctxs, times, F)
                )
            else:
                opm = assemble_operator("k", basis, lambda F: k_apply(ctx_final, F))
            persist(opm)
            rep = compactness_signature(opm)
            rep.pop("singular_values")
            if rep["decay_fit_alpha"] is None:
                _check(checks, f"{op}:zero-matrix", rep["sigma_max"], "==", 0.0)
            else:
                _check(checks, f"{op}:alpha-positive", 0.0, "<", rep["decay_fit_alpha"])
            reports[op] = rep
        elif op == "phi":
            opm = assemble_operator(
                "phi", basis, lambda F: phi_apply(ctxs, times, F).phi_stream
            )
            persist(opm)
            rep = invertibility_certificate(opm)
            rep["sigma_min_over_t"] = rep["sigma_min"] / float(times[-1])
            reports["phi"] = rep
        else:
            raise ConfigError(f"unknown operator stage {op!r}")

    if cfg.conjugate_scan:
        rows = conjugate_scan(ctxs, times, basis)
        header = list(rows[0].keys())
        write_csv(outdir / "scan-conjugate.csv", header, [[r[k] for k in header] for r in rows])
        worst = min(rows, key=lambda r: r["sigma_min_over_t"])
        reports["conjugate_scan"] = {
            "n_times": len(rows),
            "min_sigma_min_over_t": worst["sigma_min_over_t"],
            "argmin_t": worst["t"],
            "candidates": [r["t"] for r in rows if r["candidate"]],
            "max_multiplicity": max(r["multiplicity"] for r in rows),
        }
    return reports


def _harness_stage(
    cfg: ExperimentConfig,
    outdir: Path,
    traj: GeodesicTrajectory,
    constants: dict,
    checks: list,
) -> dict:
    tags = cfg.inequality_list()
    if not tags:
        return {}
    ctx_final = trajectory_contexts(traj, [len(traj) - 1])[0]
    eps = None if cfg.eps_policy == "half-max" else cfg.eps
    hctx = HarnessContext.build(ctx_final, s=cfg.s_level, eps=eps)
    out: dict = {}
    for idx, tag in enumerate(tags):
        result = inequality_harness(
            tag,
            hctx,
            seed=cfg.seed + _SEED_STRIDE * idx,
            n_trials=cfg.inequality_samples,
            n_calibration=cfg.calibration_samples,
        )
        rows = result["rows"]
        header = list(rows[0].keys())
        write_csv(
            outdir / f"ledger-{tag}.csv", header, [[r[k] for k in header] for r in rows]
        )
        summary = dict(result["summary"])
        if result["constant"] is not None:
            summary["constant_safety"] = result["constant"].safety
            summary["calibration_samples"] = result["constant"].n_samples
        _check(
            checks,
            f"inequality:{tag}:all-held",
            summary["n_held"],
            "==",
            summary["n_rows"],
        )
        out[tag] = summary
    return out


def run_experiment(
    cfg: ExperimentConfig,
    output_root: str | os.PathLike | None = None,
    config_text: str | None = None,
) -> Path:
    """Execute the full pipeline; returns the artifact directory.

    On a numerical failure the manifest is still written (status
    ``failed`` with diagnostics) and the error re-raised for the caller
    to map to an exit code.
    """
    root = Path(
        output_root
        if output_root is not None
        else os.environ.get(OUTPUT_ROOT_VAR, "runs")
    )
    outdir = Path(cfg.output_dir) if cfg.output_dir else root / cfg.name
    outdir.mkdir(parents=True, exist_ok=True)
    for stale in sorted(outdir.rglob("*")):
        if stale.is_file():
            stale.unlink()

    if config_text is not None:
        (outdir / "config.cfg").write_text(config_text, encoding="utf-8")
    write_json(outdir / "config.json", cfg.to_dict())

    checks: list[dict] = []
    try:
        grid = ChannelGrid(cfg.nx, cfg.ny, height=cfg.height)
        basis = StreamBasis(grid, max_k=cfg.max_k, max_l=cfg.max_l)
        traj = _solve_stage(cfg, grid)
        _persist_trajectory(outdir, traj)

        constants = constants_from_trajectory(traj, cfg.t_final, cfg.s_level,
                                              eps=None if cfg.eps_policy == "half-max" else cfg.eps)
        spec = constants["spec"]
        constants_out = {
            k: constants[k]
            for k in ("K_eps", "Q_eps", "C_eta", "K_eta_inf", "C_t", "eps", "eps_max")
        }
        constants_out["s"] = cfg.s_level
        constants_out["weights"] = spec.weights
        write_json(outdir / "constants.json", constants_out)

        operator_reports = _operator_stage(cfg, outdir, traj, basis, constants_out, checks)
        for name, rep in operator_reports.items():
            write_json(outdir / f"spectra-{name}.json", rep)
        harness_reports = _harness_stage(cfg, outdir, traj, constants_out, checks)
        if harness_reports:
            write_json(outdir / "inequalities.json", harness_reports)

        summary = {
            "name": cfg.name,
            "grid": {"nx": cfg.nx, "ny": cfg.ny, "height": cfg.height},
            "s": cfg.s_level,
            "seed": cfg.seed,
            "t_final": cfg.t_final,
            "initial": cfg.initial,
            "constants": constants_out,
            "operators": operator_reports,
            "inequalities": harness_reports,
            "all_checks_held": all(c["held"] for c in checks),
        }
        write_json(outdir / "checks.json", checks)
        write_json(outdir / "summary.json", summary)
    except NumericsError as exc:
        write_json(outdir / "checks.json", checks)
        write_manifest(outdir, status="failed", diagnostics=[str(exc)], config=cfg.to_dict())
        raise
    write_manifest(outdir, status="ok", config=cfg.to_dict())
    return outdir


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render_report(artifact_dir) -> str:
    """One-page text summary of a finished run."""
    outdir = Path(artifact_dir)
    if not (outdir / MANIFEST_NAME).is_file():
        raise ConfigError(f"no {MANIFEST_NAME} in {outdir}; not a run directory")
    manifest = read_json(outdir / MANIFEST_NAME)
    summary = read_json(outdir / "summary.json")
    consts = summary["constants"]
    lines = []
    g = summary["grid"]
    lines.append(
        f"experiment {summary['name']}  grid {g['nx']}x{g['ny']} height {_fmt(g['height'])}"
        f"  initial {summary['initial']}  t_final {_fmt(summary['t_final'])}"
        f"  s {summary['s']}  seed {summary['seed']}"
    )
    lines.append(
        "constants: "
        + "  ".join(
            f"{k}={_fmt(consts[k])}"
            for k in ("K_eta_inf", "C_t", "K_eps", "Q_eps", "eps", "C_eta")
        )
    )
    lines.append("weights B = [" + ", ".join(_fmt(b) for b in consts["weights"]) + "]")
    for name, rep in summary["operators"].items():
        if name == "conjugate_scan":
            cands = rep["candidates"]
            lines.append(
                f"conjugate scan: min sigma_min/t = {_fmt(rep['min_sigma_min_over_t'])}"
                f" at t = {_fmt(rep['argmin_t'])}; "
                + ("no conjugate-point candidates" if not cands else f"candidates at t = {cands}")
            )
            continue
        bits = [f"sigma_min={_fmt(rep['sigma_min'])}", f"sigma_max={_fmt(rep['sigma_max'])}"]
        if "floor" in rep:
            bits.append(f"floor={_fmt(rep['floor'])} certified={rep['certified']}")
        if "enlargement_rel_change" in rep:
            bits.append(f"enlargement_change={_fmt(rep['enlargement_rel_change'])}")
        if "decay_fit_alpha" in rep:
            alpha = rep["decay_fit_alpha"]
            bits.append("zero matrix" if alpha is None else f"alpha={_fmt(alpha)}")
        if "tail_max_ratio" in rep:
            bits.append(f"tail_ratio={_fmt(rep['tail_max_ratio'])}")
        if "symmetry_rel_frobenius" in rep:
            bits.append(f"asym={_fmt(rep['symmetry_rel_frobenius'])}")
        lines.append(f"operator {name}: " + "  ".join(bits))
    for tag, rep in summary.get("inequalities", {}).items():
        extra = ""
        if "constant" in rep:
            extra = f"  frozen C={_fmt(rep['constant'])}"
        lines.append(
            f"inequality {tag}: {rep['n_held']}/{rep['n_rows']} held"
            f"  worst={_fmt(rep.get('max_ratio', rep.get('max_rel', 0.0)))}{extra}"
        )
    scan_csv = outdir / "scan-conjugate.csv"
    if scan_csv.is_file():
        lines.append(f"sigma_min curve: {scan_csv.name}")
    ledgers = sorted(p.name for p in outdir.glob("ledger-*.csv"))
    if ledgers:
        lines.append("sample ledgers: " + ", ".join(ledgers))
    n_art = len(manifest["artifacts"])
    lines.append(
        f"verdict: {'all checks held' if summary['all_checks_held'] else 'SOME CHECKS FAILED'}"
        f"  ({n_art} artifacts indexed, status {manifest['status']})"
    )
    return "\n".join(lines) + "\n"


_OPS = {"<=": lambda a, b: a <= b, "<": lambda a, b: a < b,
        ">=": lambda a, b: a >= b, "==": lambda a, b: a == b}


def verify_artifacts(artifact_dir) -> tuple[bool, list[str]]:
    """Re-hash every artifact and re-evaluate every recorded boolean."""
    outdir = Path(artifact_dir)
    ok, problems = check_manifest(outdir)
    checks_path = outdir / "checks.json"
    if not checks_path.is_file():
        problems.append("checks.json missing")
        return False, problems
    for check in read_json(checks_path):
        held = _OPS[check["op"]](check["lhs"], check["rhs"])
        if bool(held) != bool(check["held"]):
            problems.append(
                f"check {check['name']}: recorded held={check['held']} but "
                f"{check['lhs']} {check['op']} {check['rhs']} evaluates to {held}"
            )
    for ledger in sorted(outdir.glob("ledger-*.csv")):
        header, rows = read_csv(ledger)
        if "held" not in header:
            continue
        held_col = header.index("held")
        n_held = sum(1 for row in rows if row[held_col] == "true")
        tag = ledger.stem.removeprefix("ledger-")
        recorded = _find_check(outdir, f"inequality:{tag}:all-held")
        if recorded is not None and int(recorded["lhs"]) != n_held:
            problems.append(
                f"{ledger.name}: held rows {n_held} != recorded count {int(recorded['lhs'])}"
            )
    return (not problems), problems


def _find_check(outdir: Path, name: str) -> dict | None:
    for check in read_json(outdir / "checks.json"):
        if check["name"] == name:
            return check
    return None

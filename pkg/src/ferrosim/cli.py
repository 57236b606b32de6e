"""Command-line surface: simulate, verify, sweep, inspect.

Every command takes ``--config PATH`` plus optional ``--seed`` (override),
``--threads`` (worker pool for sweep points), and ``--out DIR``.  Reports
are written as CSV with matching PNG figures; a nonzero exit status means
some audit failed, with the machine-readable failure list in
``failures.csv``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import diagnostics as diag
from . import io as fio
from . import plots
from .config import ExperimentConfig, load_config
from .noise import validate_assumptions
from .sde import ensemble_run


def _ensure_out(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.run = dataclasses.replace(cfg.run, seed=args.seed)
    return cfg


def cmd_simulate(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> int:
    """Run the configured ensemble; write trajectories, ledger CSV, figures."""
    out = _ensure_out(out_dir)
    noise = cfg.noise_model()
    initial = cfg.initial_state()
    ens = ensemble_run(initial, cfg.physics, noise, cfg.run, with_ledger=cfg.ledger)
    digest = cfg.digest()
    for m in range(min(ens.members, 4)):  # first members as individual artifacts
        rec = ens.member(m)
        fio.write_trajectory(os.path.join(out, f"trajectory_{m:03d}.bin"), rec, digest, cfg.run.seed)
    if ens.ledger is not None:
        fio.export_ledger_csv(ens.ledger, os.path.join(out, "ledger.csv"), member=0)
        plots.energy_figure(ens.ledger, os.path.join(out, "energy.png"))
        plots.ledger_balance_figure(ens.ledger, os.path.join(out, "ledger_balance.png"))
    stopped = int(np.sum(~np.isnan(ens.stopped_at)))
    failed = int(ens.failed.sum())
    summary = {
        "members": ens.members,
        "stopped": stopped,
        "failed": failed,
        "config_hash": digest,
    }
    with open(os.path.join(out, "run_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"simulate: {ens.members} member(s), {stopped} stopped, {failed} failed -> {out}")
    return 1 if failed else 0


def cmd_verify(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> int:
    """Run the audit suite for this configuration; exit 1 on any failure."""
    out = _ensure_out(out_dir)
    reports = []
    failures = []

    report = validate_assumptions(cfg.noise_model(), grid_size=cfg.noise_grid)
    reports.append(
        diag.EstimateReport(
            "noise assumptions",
            min(report.c.values()),
            2.0,
            0.0,
            report.passed,
            details={"c": report.c, "C": [report.C5, report.C6, report.C7, report.C8]},
        )
    )

    try:
        adm = diag.admissibility_check(cfg.physics, cfg.admissibility, cfg.admissibility_mode)
        lo, hi = adm.lambda_window
        reports.append(
            diag.EstimateReport(
                "admissibility window", lo, hi, 0.0, adm.lam_admissible,
                details={"summary": adm.summary()},
            )
        )
    except ValueError as exc:
        reports.append(diag.EstimateReport("admissibility window", 0.0, 0.0, 0.0, False, {"error": str(exc)}))

    noise = cfg.noise_model()
    initial = cfg.initial_state()
    ens = ensemble_run(initial, cfg.physics, noise, cfg.run, with_ledger=True)

    # martingale columns must have mean within 3 standard errors of zero
    led = ens.ledger
    keep = ens.survivors()
    for name in diag.MARTINGALE_TERMS:
        sums = led.columns[name][keep].sum(axis=-1)
        if np.allclose(sums, 0.0):
            continue
        se = float(sums.std(ddof=1) / math.sqrt(sums.size)) if sums.size > 1 else 0.0
        mean = float(np.absolute(sums.mean()))
        reports.append(
            diag.EstimateReport(f"martingale mean {name}", mean, 3.0 * se, se, mean <= 3.0 * se)
        )

    try:
        rep = diag.apriori_check(
            ens, cfg.physics, {
                "velocity": cfg.admissibility.c1,
                "rotation": cfg.admissibility.c2,
                "magnetization": cfg.admissibility.c3,
                "field": cfg.admissibility.c4,
            }, cfg.admissibility.C0,
        )
        reports.append(rep)
    except ValueError as exc:
        reports.append(diag.EstimateReport("apriori energy inequality", 0.0, 0.0, 0.0, False, {"error": str(exc)}))

    resid = float(np.absolute(led.residual_totals()[keep].mean()))
    scale = float(led.columns["e_tot"][keep, 0].mean()) or 1.0
    tol = 50.0 * cfg.run.dt * scale
    reports.append(diag.EstimateReport("ledger residual mean", resid, tol, 0.0, resid <= tol))

    for p in (2.0, 4.0):
        try:
            reports.append(diag.pmoment_check(ens, cfg.physics, p))
        except ValueError as exc:
            reports.append(
                diag.EstimateReport(f"p-moment bound (p={p:g})", 0.0, 0.0, 0.0, False, {"error": str(exc)})
            )

    reports.append(diag.drift_dual_norm_audit(ens, cfg.physics, max_members=4))

    if len(ens.times) >= 5:
        dt_snap = float(ens.times[1] - ens.times[0])
        thetas = [k * dt_snap for k in (1, 2, 4) if k * dt_snap <= float(ens.times[-1])]
        if len(thetas) >= 2:
            reports.append(diag.translation_diagnostic(ens, cfg.physics, thetas))

    rows = [
        (r.name, r.lhs, r.rhs, r.se, "pass" if r.passed else "fail") for r in reports
    ]
    fio.export_table_csv(os.path.join(out, "verify_report.csv"),
                         ["check", "lhs", "rhs", "se", "status"], rows)
    plots.estimate_figure(reports, os.path.join(out, "verify_report.png"))
    if led is not None:
        plots.energy_figure(led, os.path.join(out, "energy.png"))

    for r in reports:
        print(r.line())
        if not r.passed:
            failures.append((r.name, r.lhs, r.rhs))
    if failures:
        fio.export_table_csv(os.path.join(out, "failures.csv"), ["check", "lhs", "rhs"], failures)
        print(f"verify: {len(failures)} check(s) FAILED -> {out}")
        return 1
    print(f"verify: all {len(reports)} checks passed -> {out}")
    return 0


def _sweep_point(cfg: ExperimentConfig, lam: float):
    params = dataclasses.replace(cfg.physics, lam=lam)
    c = {
        "velocity": cfg.admissibility.c1,
        "rotation": cfg.admissibility.c2,
        "magnetization": cfg.admissibility.c3,
        "field": cfg.admissibility.c4,
    }
    br = diag.all_energy_brackets(params, c["velocity"], c["rotation"], c["magnetization"], c["field"], cfg.admissibility.C0)
    try:
        lo, hi = diag.lambda_window(params, cfg.admissibility)
        in_window = int(lo < lam < hi)
    except ValueError:
        in_window = 0
    run = dataclasses.replace(cfg.run, ensemble_size=cfg.sweep_ensemble)
    noise = cfg.noise_model()
    ens = ensemble_run(cfg.initial_state(), params, noise, run, with_ledger=True)
    led = ens.ledger
    keep = ens.survivors()
    g_m, g_h = diag.growth_coefficients(params, c["magnetization"], c["field"], cfg.admissibility.C0)
    ints = {name: led.columns[name].sum(axis=-1) * led.dt for name in diag.RAW_TERMS}
    mart = sum(led.columns[nm].sum(axis=-1) for nm in diag.MARTINGALE_TERMS)
    lhs = (
        led.final_energy()
        + br["grad_u"] * ints["raw_grad_u2"]
        + br["grad_w"] * ints["raw_grad_w2"]
        + br["curl_m"] * ints["raw_curl_m2"]
        + br["curl_h"] * ints["raw_curl_h2"]
        + br["div_m"] * ints["raw_div_m2"]
        + 2.0 / params.tau * ints["raw_m2"]
        + 2.0 * (params.lambda1 + params.lambda2) * ints["raw_div_w2"]
        + 2.0 * params.alpha * ints["raw_spin2"]
    )
    rhs = led.columns["e_tot"][..., 0] + g_m * ints["raw_m2"] + g_h * ints["raw_h2"] + mart
    scale = np.maximum(led.columns["e_tot"][..., 0], 1.0)
    tol = 50.0 * led.dt * scale
    ok = (lhs <= rhs + tol) & keep
    pass_rate = float(ok.sum() / max(keep.sum(), 1))
    sup_e = led.sup_energy()[keep].mean() if keep.any() else math.nan
    return [
        lam, in_window,
        br["grad_u"], br["grad_w"], br["curl_m"], br["curl_h"], br["div_m"],
        int(all(v > 0 for v in br.values())),
        pass_rate, float(sup_e), int(keep.sum()),
    ]


def cmd_sweep(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> int:
    """Scan diffusion coefficients across and beyond the admissible window."""
    out = _ensure_out(out_dir)
    lams = cfg.sweep_lambdas
    if not lams:
        try:
            lo, hi = diag.lambda_window(cfg.physics, cfg.admissibility)
        except ValueError:
            lo, hi = 0.0, 2.0 / (cfg.physics.sigma * cfg.physics.mu0**2)
        grid = np.linspace(max(lo, 1e-3), hi * 1.5, 7)
        lams = [float(x) for x in grid]
    columns = [
        "lambda", "in_window",
        "br_grad_u", "br_grad_w", "br_curl_m", "br_curl_h", "br_div_m",
        "all_brackets_positive", "path_pass_rate", "mean_sup_energy", "survivors",
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda lam: _sweep_point(cfg, lam), lams))
    else:
        rows = [_sweep_point(cfg, lam) for lam in lams]
    fio.export_table_csv(os.path.join(out, "sweep.csv"), columns, rows)
    roots = diag.bracket_roots_in_lambda(
        cfg.physics, cfg.admissibility.c3, cfg.admissibility.c4, cfg.admissibility.C0
    )
    plots.sweep_figure(rows, columns, roots, os.path.join(out, "sweep.png"))
    for row in rows:
        print(
            f"lambda={row[0]:<10.5g} in_window={row[1]} brackets_positive={row[7]} "
            f"pass_rate={row[8]:.3f}"
        )
    print(f"sweep: {len(rows)} points -> {out}")
    return 0


def cmd_inspect(path: str, out_dir: str | None = None, config_path: str | None = None) -> int:
    """Print trajectory metadata and verify the embedded digests."""
    header, record = fio.read_trajectory(path)
    for key, value in header.items():
        print(f"{key} = {value}")
    if config_path is not None:
        cfg = load_config(config_path)
        if cfg.digest() != header["config_hash"]:
            print(
                f"error: artifact was produced by config {header['config_hash'][:12]}..., "
                f"given config hashes to {cfg.digest()[:12]}...",
                file=sys.stderr,
            )
            return 1
        print("config hash matches the artifact")
    from .diagnostics import energy_total

    energies = []
    for i in range(record.n_snapshots):
        st = record.state_at(i)
        # mu0 is not stored in the file; energy with unit weight documents shape
        energies.append(energy_total(st, 1.0))
    print(f"snapshots: {record.n_snapshots}, t in [{record.times[0]:g}, {record.times[-1]:g}]")
    print(f"E_tot(mu0=1): start {energies[0]:.6g}, end {energies[-1]:.6g}")
    if record.stopped_at is not None:
        print(f"stopped at t = {record.stopped_at:g}")
    if out_dir:
        out = _ensure_out(out_dir)
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(record.times, energies, "k.-")
        ax.set_xlabel("time")
        ax.set_ylabel("E_tot (mu0 = 1)")
        fig.tight_layout()
        fig.savefig(os.path.join(out, "inspect_energy.png"), dpi=150)
        plt.close(fig)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ferrosim",
        description="Spectral stochastic-Galerkin simulator for the conductive ferrofluid system",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate the configured ensemble and write artifacts"),
        ("verify", "run the audit suite for a configuration"),
        ("sweep", "scan diffusion coefficients across the admissible window"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the INI configuration")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (sweep points)")
        p.add_argument("--out", default="out", help="output directory")
    p = sub.add_parser("inspect", help="print trajectory-file metadata and stats")
    p.add_argument("trajectory", help="path to a trajectory file")
    p.add_argument("--out", default=None, help="optional directory for the energy figure")
    p.add_argument("--config", default=None, help="refuse the artifact unless its hash matches")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "inspect":
        return cmd_inspect(args.trajectory, args.out, args.config)
    try:
        cfg = load_config(args.config)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    cfg = _apply_overrides(cfg, args)
    if args.command == "simulate":
        return cmd_simulate(cfg, args.out, args.threads)
    if args.command == "verify":
        return cmd_verify(cfg, args.out, args.threads)
    return cmd_sweep(cfg, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``metadyn <command> [flags]``.

Each command writes its CSV files, a ``summary.csv`` of headline scalars and
the effective configuration (``config.txt``) into ``--out``. A failure
leaves a ``failure.csv`` record and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import sys
import traceback
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import discrete, ray_knight, sand, torus
from .config import GLOBALS, SCHEMAS, ConfigError, ExperimentConfig, build_config, read_config_file
from .nonadiabatic import bins, simp, twod
from .stats import chi2_uniform, ks_two_sample
from .streams import derive_stream

Table = tuple[list[str], list[list]]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# runners: each returns {file name: (header, rows)} including "summary.csv"


def run_torus(cfg: ExperimentConfig) -> dict[str, Table]:
    p = cfg.params
    F = torus.TrigPotential(p["cos"], p["sin"])
    grid = -np.pi + 2 * np.pi * np.arange(p["grid"]) / p["grid"]
    profile_rows, mode_rows, summary = [], [], []
    for rep in range(cfg.replicas):
        rng = derive_stream(cfg.seed, rep)
        state = torus.init_from_potential(F, p["N"], p["gamma"], p["beta"], allow_violation=p["allow_violation"])
        final, trace = torus.run(state, p["horizon"], p["dt"], rng, trace_spacing=1.0)
        avg_psi = torus.averaged_penalty(final, grid)
        target = -(F.value(grid) - F.mean)
        profile_rows += [[rep, z, a, b] for z, a, b in zip(grid, avg_psi, target)]
        if trace.z.size >= 2:
            moments = torus.invariant_moments(trace)
            var_a, var_b = moments.var_alpha, moments.var_beta
            _, chi2_p = chi2_uniform(trace.z[::10], 32, -np.pi, np.pi) if trace.z.size >= 320 else (np.nan, np.nan)
        else:
            var_a = var_b = np.full(final.bias.N, np.nan)
            chi2_p = np.nan
        for k in range(final.bias.N):
            mode_rows.append([rep, k + 1, final.running_avg_alpha[k], final.running_avg_beta[k], var_a[k], var_b[k]])
        summary.append([rep, final.t, float(np.max(np.abs(avg_psi - target))), chi2_p])
    return {
        "profile.csv": (["replica", "z", "avg_psi", "minus_F_plus_mean"], profile_rows),
        "modes.csv": (["replica", "mode", "avg_alpha", "avg_beta", "var_alpha", "var_beta"], mode_rows),
        "summary.csv": (["replica", "t", "sup_error", "chi2_uniform_p"], summary),
    }


def run_discrete(cfg: ExperimentConfig) -> dict[str, Table]:
    p = cfg.params
    K = p["K"]
    landscape = discrete.Landscape(p["A"]) if p["A"] else discrete.Landscape.flat(K)
    params = discrete.SimParams(p["beta"], p["gamma"], p["horizon"], cfg.seed)
    header = ["replica", "k", "t", "M_t", "minus_A_prime", "stderr", "clt_variance"]
    if p["sand_check"]:
        header.append("sand_residual")
    rows = []
    for rep in range(cfg.replicas):
        traj = discrete.simulate(
            landscape,
            discrete.PdmpState.start(np.zeros(K), p["i0"], p["gamma"]),
            params,
            derive_stream(cfg.seed, rep),
            checkpoints=p["batches"],
            log_events=p["sand_check"],
        )
        residual = None
        if p["sand_check"]:
            residual = sand.sand_drift_check(traj).max_residual if traj.log_complete else np.nan
        for k in range(1, K + 1):
            bm = discrete.clt_variance(traj, k=k, batches=p["batches"])
            row = [rep, k, traj.t, discrete.ergodic_mean_x(traj, k), 0.0 - landscape.increments[k - 1], bm.stderr, bm.variance]
            if p["sand_check"]:
                row.append(residual)
            rows.append(row)
    return {"summary.csv": (header, rows)}


def run_rayknight(cfg: ExperimentConfig) -> dict[str, Table]:
    p = cfg.params
    K, j = p["K"], p["j"]
    args = (K, None, p["i0"], j, p["r"], p["beta"], cfg.replicas)
    direct = ray_knight.sample_profiles("direct", *args, seed=cfg.seed)
    walk = ray_knight.sample_profiles("walk", *args, seed=cfg.seed + 1)
    profile_rows = []
    for source, data in (("direct", direct), ("walk", walk)):
        for rep in range(cfg.replicas):
            for k in range(K + 1):
                profile_rows.append([k, source, rep, data[rep, k]])
    summary = []
    for k in range(K + 1):
        if k == j:
            summary.append([k, 0.0, 1.0, direct[:, k].mean(), walk[:, k].mean()])
            continue
        d, pval = ks_two_sample(direct[:, k], walk[:, k])
        summary.append([k, d, pval, direct[:, k].mean(), walk[:, k].mean()])
    return {
        "profiles.csv": (["k", "source", "replica", "lambda"], profile_rows),
        "summary.csv": (["k", "ks_statistic", "ks_p_value", "mean_direct", "mean_walk"], summary),
    }


def run_twod(cfg: ExperimentConfig) -> dict[str, Table]:
    p = cfg.params
    config = twod.TwoDConfig(gamma=p["gamma"], inv_temp=p["beta"], dt=p["dt"], horizon=p["horizon"], I=p["I"],
                             x0=p["x0"], y0=p["y0"])
    slopes, gaps = [], []
    nodes = None
    for rep in range(cfg.replicas):
        state = twod.run_2d(config, derive_stream(cfg.seed, rep))
        slopes.append(state.avg_node_slope)
        gaps.append(twod.bias_gap(state))
        nodes = state.mesh.nodes
    mean_slope = np.mean(slopes, axis=0)
    target = -twod.free_energy_grad(nodes)
    return {
        "profile.csv": (["x_node", "avg_dpsi_dx", "minus_Fprime"], [list(r) for r in zip(nodes, mean_slope, target)]),
        "summary.csv": (
            ["replica", "gap"],
            [[rep, g] for rep, g in enumerate(gaps)] + [["mean", float(np.max(np.abs(mean_slope - target)))]],
        ),
    }


def run_bins(cfg: ExperimentConfig) -> dict[str, Table]:
    p = cfg.params
    model = bins.BinnedModel(np.array(p["V"]), np.array(p["bins"]))
    heuristic = bins.cycle_heuristic(model, p["beta"], p["gamma"]) if model.B == 1 else np.nan
    fe_diff = bins.free_energy_difference(model, p["beta"]) if model.B == 1 else np.nan
    trace, summary = [], []
    for rep in range(cfg.replicas):
        run = bins.binned_simulate(model, p["beta"], p["gamma"], p["horizon"], derive_stream(cfg.seed, rep), i0=p["i0"])
        for t, integ, x in zip(run.checkpoint_times, run.checkpoint_integral_x[:, 0], run.checkpoint_x[:, 0]):
            trace.append([rep, t, x, integ / t, heuristic, fe_diff])
        bm = run.batch_means()
        summary.append([rep, run.t, run.ergodic_mean(), bm.stderr, heuristic, fe_diff, run.n_events])
    return {
        "trace.csv": (["replica", "t", "X_t", "ergodic_mean", "heuristic", "fe_diff"], trace),
        "summary.csv": (["replica", "t", "ergodic_mean", "stderr", "heuristic", "fe_diff", "events"], summary),
    }


def run_simp(cfg: ExperimentConfig) -> dict[str, Table]:
    p = cfg.params
    params = simp.SimpParams(p["beta"], p["gamma"], p["d_plus"], p["d_minus"])
    quad_mean = simp.simp_mean_quadrature(params)
    runs = [
        simp.simp_simulate(params, p["horizon"], derive_stream(cfg.seed, rep), sample_dt=0.1)
        for rep in range(cfg.replicas)
    ]
    samples = np.concatenate([r.samples for r in runs])
    lo, hi = np.quantile(samples, [0.001, 0.999])
    edges = np.linspace(lo, hi, p["grid"] + 1)
    counts, _ = np.histogram(samples, bins=edges)
    empirical = counts / (samples.size * np.diff(edges))
    centres = 0.5 * (edges[1:] + edges[:-1])
    mu_m, mu_0, mu_p = simp.simp_invariant_density(centres, params)
    density = [list(r) for r in zip(centres, mu_m, mu_0, mu_p, empirical)]
    summary = []
    for rep, r in enumerate(runs):
        bm = r.batch_means()
        summary.append([rep, r.final.t, r.mean, bm.stderr, quad_mean, quad_mean / simp.asymptotic_mean(params)])
    return {
        "density.csv": (["x", "mu_minus", "mu_zero", "mu_plus", "empirical"], density),
        "summary.csv": (["replica", "t", "mean", "stderr", "quadrature_mean", "ratio_to_asymptotic"], summary),
    }


RUNNERS = {
    "torus": run_torus,
    "discrete": run_discrete,
    "rayknight-validate": run_rayknight,
    "nonadiabatic-2d": run_twod,
    "bins": run_bins,
    "simp": run_simp,
}


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run ``cfg`` and write its artifacts; returns the process exit status."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    cfg.write_sidecar(cfg.out / "config.txt")
    failure = cfg.out / "failure.csv"
    if failure.exists():
        failure.unlink()
    try:
        tables = RUNNERS[cfg.command](cfg)
    except Exception as exc:  # reported as a failure record, not a traceback
        write_csv(failure, ["command", "error_type", "message"], [[cfg.command, type(exc).__name__, str(exc)]])
        print(f"{cfg.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        traceback.print_exc(file=sys.stderr)
        return 1
    for name, (header, rows) in tables.items():
        write_csv(cfg.out / name, header, rows)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    for name, param in GLOBALS.items():
        common.add_argument(_flag(name), dest=name, default=argparse.SUPPRESS, help=param.help)
    common.add_argument("--config", dest="config", default=argparse.SUPPRESS, help="flat key = value file")

    parser = argparse.ArgumentParser(prog="metadyn", description="Metadynamics simulators and checks.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in SCHEMAS.items():
        sp = sub.add_parser(command, parents=[common])
        for name, param in schema.items():
            if param.parse.__name__ == "_bool":
                sp.add_argument(_flag(name), dest=name, action="store_const", const=True,
                                default=argparse.SUPPRESS, help=param.help)
            else:
                sp.add_argument(_flag(name), dest=name, default=argparse.SUPPRESS, help=f"{param.help} (default {param.default!r})")
    return parser


def parse_config(argv: Sequence[str] | None = None) -> ExperimentConfig:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    file_values = read_config_file(config_path) if config_path else {}
    return build_config(command, file_values, args)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())

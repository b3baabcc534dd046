"""Command-line entry point: qedbohm run | plot | verify.

Exit codes: 0 success, 1 user/validation error, 2 runtime physics-invariant
failure (norm drift, both-pointer event, excessive aborts, failed oracles).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bohmian, observables as obs, svgplot
from .basis import make_bases, pointer_packet
from .config import ConfigError, config_digest, load_scenario, rabi_estimate, validate
from .evolution import NormDriftError, evolve, initial_state, sector_probability
from .hamiltonian import assemble, build_space, mu_of_t
from .wavefield import marginal_density

EXIT_OK = 0
EXIT_USER = 1
EXIT_INVARIANT = 2


def scenario_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, val = pair.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _split_extras(extras: list[str]) -> tuple[list[str], str | None]:
    """Positional arguments: KEY=VALUE pairs are overrides, a bare path is
    the output directory (the flag forms take precedence)."""
    pairs, out_dir = [], None
    for item in extras:
        if "=" in item:
            pairs.append(item)
        else:
            out_dir = item
    return pairs, out_dir


def cmd_run(args) -> int:
    t_begin = time.time()
    timings: dict[str, float] = {}
    extra_pairs, extra_out = _split_extras(args.extra or [])
    overrides = _parse_overrides((args.set or []) + extra_pairs)
    if args.seed is not None:
        overrides["rng_seed"] = str(args.seed)
    if args.no_measure:
        overrides["measurement_enabled"] = "false"
    if args.out is None:
        args.out = extra_out or "out"
    try:
        config = load_scenario(args.scenario, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER

    report = validate(config)
    for line in report.format().splitlines():
        print(f"validate: {line}", file=sys.stderr)
    if not report.ok:
        return EXIT_USER
    timings["validate"] = time.time() - t_begin

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    bases = make_bases(config)
    space = build_space(config)
    terms = assemble(config, space, bases)
    packets = None
    if config.measurement_enabled:
        packets = pointer_packet(bases.pointer, config.pointer_packet_width_modes)
    state0 = initial_state(space, bases, "001", packets, packets)
    timings["assemble"] = time.time() - t_begin

    stride = max(1, round(config.dt_traj / config.dt_coeff))
    t_stage = time.time()
    try:
        series = evolve(
            terms, space, state0, config.sim_duration, config.dt_coeff,
            lambda t: mu_of_t(config, t), snapshot_stride=stride,
        )
    except NormDriftError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    timings["evolve"] = time.time() - t_stage

    odd_mask, even_mask = space.parity_masks()
    even_prob = max(sector_probability(series.state(i), even_mask) for i in range(len(series.times)))
    un = obs.unconditional_series(series, space, bases, terms)
    report = obs.RunReport(unconditional=un)
    omega_r, period_r = rabi_estimate(config)

    # output cadence for the csv panels: nearest multiple of dt_traj to T_R/200
    # that also divides the trajectory step count evenly
    out_every = max(1, round((period_r / 200.0) / config.dt_traj))
    n_steps_traj = max(1, round(config.sim_duration / config.dt_traj))
    while out_every > 1 and n_steps_traj % out_every != 0:
        out_every -= 1
    sub = slice(None, None, out_every)
    un_out = obs.UnconditionalSeries(
        times=un.times[sub], populations=un.populations[sub],
        energy_x1=un.energy_x1[sub], energy_x2=un.energy_x2[sub],
        energy_field=un.energy_field[sub], energy_pointer=un.energy_pointer[sub],
        energy_interaction=un.energy_interaction[sub], norm=un.norm[sub],
        rabi_period=un.rabi_period,
    )
    obs.export_populations_csv(out_dir / "populations.csv", un_out, space)
    obs.export_energies_csv(out_dir / "energies.csv", un_out)
    written += [out_dir / "populations.csv", out_dir / "energies.csv"]

    summary_lines = [
        f"qedbohm_version = {__version__}",
        f"config_hash = {config_digest(config)}",
        f"rng_seed = {config.rng_seed}",
        f"rabi_omega_rad_per_fs = {omega_r!r}",
        f"rabi_period_fs = {period_r!r}",
        f"rabi_period_detected_fs = {un.rabi_period!r}",
        f"max_norm_drift = {series.max_norm_drift!r}",
        f"max_even_sector_probability = {even_prob!r}",
        f"total_energy_drift_ev = {float(np.ptp(un.energy_total))!r}",
    ]

    exit_code = EXIT_OK
    ensemble = None
    born = None
    ks_stats = None
    if config.measurement_enabled:
        t_stage = time.time()
        try:
            ensemble = bohmian.run_ensemble(
                config, series, space, bases, state0, config.n_trajectories,
                record_stride=out_every,
            )
        except (RuntimeError, ValueError) as exc:
            print(f"invariant failure: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        timings["ensemble"] = time.time() - t_stage

        state_end = series.state(-1)
        ks_stats = obs.ensemble_ks_stats(ensemble, state_end, space, bases)
        report.branch_stats = ensemble.counts()
        report.equivariance = ks_stats
        try:
            born = obs.born_summary(ensemble, series, space, config.meas_center_time)
            report.branch_fractions = {"y": born.y_fraction, "z": born.z_fraction}
        except ValueError:
            born = None
        obs.export_trajectories_csv(out_dir / "trajectories.csv", ensemble)
        obs.export_branch_summary(out_dir / "branch_summary.txt", ensemble, born, ks_stats)
        written += [out_dir / "trajectories.csv", out_dir / "branch_summary.txt"]

        _write_marginals(out_dir, written, ensemble, series, space, bases)

        for branch, fname in ((bohmian.BRANCH_Y, "conditional_y.csv"), (bohmian.BRANCH_Z, "conditional_z.csv")):
            exemplar = next(
                (tr for tr in ensemble.trajectories if not tr.aborted and tr.branch == branch),
                None,
            )
            if exemplar is not None:
                cond = obs.conditional_series(exemplar, series, space, bases, config)
                obs.export_conditional_csv(out_dir / fname, cond)
                written.append(out_dir / fname)

        counts = ensemble.counts()
        both = ensemble.both_pointer_events()
        summary_lines += [f"{k} = {v}" for k, v in counts.items()]
        summary_lines.append(f"both_pointer_events = {both}")
        if both > 0:
            print(
                f"invariant failure: {both} trajectories displaced both pointers "
                f"beyond {ensemble.branch_threshold:.1f} nm",
                file=sys.stderr,
            )
            exit_code = EXIT_INVARIANT

    violations = report.invariant_violations()
    for msg in violations:
        print(f"invariant failure: {msg}", file=sys.stderr)
    if violations:
        exit_code = EXIT_INVARIANT

    summary_path = out_dir / "run_summary.txt"
    summary_path.write_text("\n".join(summary_lines) + "\n")
    written.append(summary_path)

    timings["total"] = time.time() - t_begin
    manifest = {
        "qedbohm_version": __version__,
        "config_hash": config_digest(config),
        "rng_seed": config.rng_seed,
        "scenario": str(args.scenario),
        "files": {p.name: _sha256(p) for p in written},
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return exit_code


def _write_marginals(out_dir, written, ensemble, series, space, bases) -> None:
    """Per-coordinate histogram vs analytic marginal at the final time."""
    state = series.state(-1)
    pts = ensemble.positions_at(len(ensemble.times) - 1)
    cols = {"x1": 0, "x2": 1, "q": 2, "y": 3, "z": 4}
    for name, col in cols.items():
        samples = pts[:, col]
        lo, hi = float(np.min(samples)), float(np.max(samples))
        pad = 0.1 * (hi - lo if hi > lo else 1.0)
        edges = np.linspace(lo - pad, hi + pad, 41)
        hist, _ = np.histogram(samples, bins=edges, density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        if name in ("x1", "x2"):
            L = bases.well.length
            centers = np.clip(centers, 1e-9 * L, L * (1 - 1e-9))
        dens = marginal_density(state, space, bases, name, centers)
        total = np.trapezoid(dens, centers)
        if total > 0:
            dens = dens / total
        path = out_dir / f"marginal_{name}.csv"
        with open(path, "w") as fh:
            fh.write("value,empirical_density,analytic_density\n")
            for v, e, a in zip(centers, hist, dens):
                fh.write(f"{float(v)!r},{float(e)!r},{float(a)!r}\n")
        written.append(path)


def cmd_plot(args) -> int:
    _, extra_out = _split_extras(args.extra or [])
    out_dir = Path(args.out or extra_out or "out")
    pop_path = out_dir / "populations.csv"
    if not pop_path.is_file():
        print(f"error: missing {pop_path}; run the simulation first", file=sys.stderr)
        return EXIT_USER

    def read_csv(path):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
        data = np.array(rows)
        return header, data

    header, data = read_csv(pop_path)
    t = data[:, 0]
    wanted = ["p001", "p100", "p010", "p111"]
    series = [
        (name, data[:, header.index(name)].tolist())
        for name in wanted
        if name in header
    ]
    svgplot.line_plot(out_dir / "populations.svg", t.tolist(), series,
                      "state populations", "t [fs]", "population")

    en_path = out_dir / "energies.csv"
    if en_path.is_file():
        header, data = read_csv(en_path)
        t = data[:, 0]
        series = [
            (name, data[:, header.index(name)].tolist())
            for name in ("E_x1", "E_x2", "E_field", "E_total")
            if name in header
        ]
        svgplot.line_plot(out_dir / "energies.svg", t.tolist(), series,
                          "energy expectations", "t [fs]", "energy [eV]")

    for branch in ("y", "z"):
        path = out_dir / f"conditional_{branch}.csv"
        if path.is_file():
            header, data = read_csv(path)
            t = data[:, 0]
            series = [
                (name, data[:, header.index(name)].tolist())
                for name in ("p100", "p010", "p001", "p111")
            ]
            svgplot.line_plot(out_dir / f"conditional_{branch}.svg", t.tolist(), series,
                              f"conditional populations ({branch.upper()} branch)",
                              "t [fs]", "population")

    for name in ("x1", "x2", "q", "y", "z"):
        path = out_dir / f"marginal_{name}.csv"
        if path.is_file():
            header, data = read_csv(path)
            centers = data[:, 0]
            width = centers[1] - centers[0] if len(centers) > 1 else 1.0
            edges = np.concatenate((centers - width / 2, [centers[-1] + width / 2]))
            svgplot.histogram_overlay(
                out_dir / f"marginal_{name}.svg", edges.tolist(), data[:, 1].tolist(),
                centers.tolist(), data[:, 2].tolist(),
                f"equivariance check: {name}", name,
            )
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import format_table, run_oracles

    try:
        config = load_scenario(args.scenario, _parse_overrides(args.set or []))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    report = validate(config)
    if not report.ok:
        for msg in report.errors:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_USER
    results = run_oracles(config)
    print(format_table(results))
    import math as _math

    failed = [r for r in results if not r.passed and not _math.isinf(r.tolerance)]
    return EXIT_INVARIANT if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qedbohm",
        description="cavity-QED wave-function + Bohmian trajectory simulator",
    )
    parser.add_argument("--version", action="version", version=f"qedbohm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario end to end")
    p_run.add_argument("scenario", help="scenario file (.scn)")
    p_run.add_argument("extra", nargs="*", metavar="OUT_DIR|KEY=VALUE",
                       help="output directory and/or scenario overrides")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scenario key (repeatable)")
    p_run.add_argument("--seed", type=int, default=None, help="override rng_seed")
    p_run.add_argument("--no-measure", action="store_true",
                       help="force measurement_enabled = false")
    p_run.set_defaults(func=cmd_run)

    p_plot = sub.add_parser("plot", help="render SVG panels from run outputs")
    p_plot.add_argument("extra", nargs="*", metavar="OUT_DIR")
    p_plot.add_argument("--out", default=None, help="directory holding run outputs")
    p_plot.set_defaults(func=cmd_plot)

    p_verify = sub.add_parser("verify", help="run the oracle battery")
    p_verify.add_argument(
        "scenario", nargs="?", default=str(scenario_dir() / "unmeasured.scn"),
        help="scenario file (defaults to the shipped unmeasured scenario)",
    )
    p_verify.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())

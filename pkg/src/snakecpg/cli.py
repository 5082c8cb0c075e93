"""Command-line front end: reproducible experiments that emit plot-ready data.

Every subcommand resolves its configuration (YAML files + --set overrides +
flags), runs, and writes CSV/JSON files whose comment headers carry the full
resolved config and seed.  Exit codes: 0 success, 2 configuration error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import analysis, evolve as ev, io, ppoc, robot, tasks
from .cpg import (IntegrationDivergedError, NetworkState, OscillatorParams,
                  TonicInputs, TRAJECTORY_COLUMNS, simulate, validate_params)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _parse_overrides(pairs):
    cpg_over, phys_over = {}, {}
    for pair in pairs or []:
        if "=" not in pair:
            raise io.ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        key, val = pair.split("=", 1)
        key = key.strip()
        try:
            value = float(val)
        except ValueError:
            raise io.ConfigError(f"--set {key}: {val!r} is not a number")
        if key.startswith("phys."):
            phys_over[key[5:]] = value
        elif key.startswith("cpg."):
            cpg_over[key[4:]] = value
        else:
            cpg_over[key] = value
    return cpg_over, phys_over


def _resolve(args):
    cpg_over, phys_over = _parse_overrides(getattr(args, "set", None))
    params = io.load_params(getattr(args, "params", None), cpg_over)
    phys = io.load_physics(getattr(args, "physics", None), phys_over)
    out = io.default_out_dir(getattr(args, "out", None))
    return params, phys, out


def _header(args, params=None, phys=None, **extra):
    head = {"command": args.command, "seed": args.seed}
    if params is not None:
        head["cpg"] = params.to_dict()
    if phys is not None:
        head["phys"] = phys.to_dict()
    head.update(extra)
    return head


def _span(text, default_n=50):
    """Parse 'lo:hi' or 'lo:hi:n' into a linspace."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise io.ConfigError(f"expected lo:hi or lo:hi:n, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    n = int(parts[2]) if len(parts) == 3 else default_n
    if n < 2:
        raise io.ConfigError("grid needs at least 2 points")
    return np.linspace(lo, hi, n)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate_cpg(args):
    params, phys, out = _resolve(args)
    drive = TonicInputs.constant(args.u, params.n_oscillators)
    traj = simulate(params, drive, args.duration, dt=args.dt)
    n = params.n_oscillators
    cols = TRAJECTORY_COLUMNS(n)
    rows = np.column_stack([
        traj.t,
        traj.states[:, 0:n], traj.states[:, 2 * n:3 * n],
        traj.states[:, n:2 * n], traj.states[:, 3 * n:4 * n],
        traj.u_e, traj.u_f, traj.psi,
    ])
    path = out / "trajectory.csv"
    io.write_csv(path, cols, rows, _header(args, params, u=args.u,
                                           duration=args.duration))
    print(path)
    return EXIT_OK


def cmd_validate_params(args):
    params, phys, out = _resolve(args)
    report = validate_params(params)
    payload = {"oscillation_possible": report.oscillation_possible,
               "lhs": report.lhs, "rhs": report.rhs, "cpg": params.to_dict()}
    io.write_json(out / "stability.json", payload)
    print(f"oscillation_possible={report.oscillation_possible} "
          f"lhs={report.lhs:.6g} rhs={report.rhs:.6g}")
    return EXIT_OK


def cmd_bias_sweep(args):
    params, phys, out = _resolve(args)
    kn_values = [float(x) for x in args.kn.split(",")] if args.kn else None
    panels = analysis.bias_sweep(params, k_n_values=kn_values or (0.19, 0.39, 0.53, 0.66, 0.79),
                                 u_grid=np.linspace(0.0, 0.5, args.points),
                                 duration=args.duration, n_jobs=args.jobs)
    summary = {}
    for panel in panels:
        tag = f"kn_{panel.k_n:g}".replace(".", "p")
        rows = zip(panel.u_e, panel.measured, panel.predicted, panel.residual,
                   panel.is_limit_cycle.astype(int), panel.amplitude)
        io.write_csv(out / f"bias_sweep_{tag}.csv",
                     ["u_e", "measured_bias", "predicted_bias", "residual",
                      "is_limit_cycle", "amplitude"],
                     rows, _header(args, params, k_n=panel.k_n, a=panel.a))
        summary[tag] = {"k_n": panel.k_n, "slope": panel.slope,
                        "intercept": panel.intercept, "r2": panel.r2,
                        "bifurcation_detected": panel.bifurcation_detected}
    io.write_json(out / "bias_sweep_summary.json", summary)
    print(out / "bias_sweep_summary.json")
    return EXIT_OK


def cmd_duty_sweep(args):
    params, phys, out = _resolve(args)
    res = analysis.duty_sweep(params, duty_grid=np.linspace(0.15, 0.85, args.points),
                              duration=args.duration, n_jobs=args.jobs)
    rows = zip(res.duty, res.measured, res.predicted, res.residual,
               res.is_limit_cycle.astype(int))
    io.write_csv(out / "duty_sweep.csv",
                 ["duty", "measured_bias", "predicted_bias", "residual",
                  "is_limit_cycle"],
                 rows, _header(args, params, drive_period=res.drive_period))
    io.write_json(out / "duty_sweep_summary.json",
                  {"slope": res.slope, "intercept": res.intercept, "r2": res.r2,
                   "k_m": res.fit.k_m, "m": res.fit.m,
                   "drive_period": res.drive_period})
    print(out / "duty_sweep_summary.json")
    return EXIT_OK


def cmd_freq_sweep(args):
    params, phys, out = _resolve(args)
    res = analysis.frequency_sweep(params, k_f_grid=_span(args.kf, 13),
                                   duration=args.duration, n_jobs=args.jobs)
    rows = zip(res.k_f, res.frequency, res.reference, res.residual)
    io.write_csv(out / "freq_sweep.csv",
                 ["k_f", "measured_freq", "sqrt_scaling_reference", "residual"],
                 rows, _header(args, params))
    io.write_json(out / "freq_sweep_summary.json",
                  {"exponent": res.exponent, "exponent_r2": res.exponent_r2})
    print(f"log-log exponent: {res.exponent:.4f}")
    return EXIT_OK


def cmd_threshold(args):
    params, phys, out = _resolve(args)
    params = params.replace(c=args.c)
    omegas = _span(args.omega, 100)
    a0 = analysis.entrainment_threshold(omegas, params)
    io.write_csv(out / "threshold.csv", ["omega", "a0"], zip(omegas, a0),
                 _header(args, params))
    payload = {"a0_min": float(np.min(a0)), "a0_max": float(np.max(a0)),
               "omega_lo": float(omegas[0]), "omega_hi": float(omegas[-1]),
               "natural_frequency": analysis.natural_frequency(params)}
    io.write_json(out / "threshold_summary.json", payload)
    print(f"A0 range over [{omegas[0]:g}, {omegas[-1]:g}]: "
          f"[{payload['a0_min']:.4f}, {payload['a0_max']:.4f}]")
    return EXIT_OK


def cmd_velocity_sweep(args):
    params, phys, out = _resolve(args)
    res = robot.velocity_sweep(_span(args.c, 10), _span(args.kf, 10), phys,
                               params=params, duration=args.duration,
                               n_jobs=args.jobs)
    rows = [(c, kf, res.speed[i, j])
            for i, c in enumerate(res.c_grid)
            for j, kf in enumerate(res.k_f_grid)]
    io.write_csv(out / "velocity_sweep.csv", ["c", "k_f", "speed"], rows,
                 _header(args, params, phys=phys, duration=args.duration))
    io.write_json(out / "velocity_sweep_summary.json",
                  {"failures": res.failures,
                   "speed_min": float(np.nanmin(res.speed)),
                   "speed_max": float(np.nanmax(res.speed))})
    print(out / "velocity_sweep.csv")
    return EXIT_OK


def cmd_tune_gp(args):
    params, phys, out = _resolve(args)
    rng = np.random.default_rng(args.seed)
    bounds = ev.default_bounds(params, spread=args.spread)
    fit_cfg = ev.FitnessConfig(horizon=args.horizon)
    result = ev.evolve(bounds, pop_size=args.pop, generations=args.generations,
                       rng=rng,
                       fitness_fn=lambda g: ev.fitness(g, fit_cfg, phys, params),
                       n_jobs=args.jobs)
    hist_rows = [(g, *result.history[g]) for g in range(len(result.history))]
    io.write_csv(out / "gp_history.csv",
                 ["generation", "best", "mean", "std"], hist_rows,
                 _header(args, params, phys=phys, pop=args.pop))
    io.save_params(result.best_params, out / "gp_best_params.yaml")
    io.write_json(out / "gp_summary.json",
                  {"best_fitness": result.best_fitness,
                   "best_genome": dict(zip(ev.GENE_FIELDS, result.best_genome))})
    print(f"best fitness {result.best_fitness:.3f} -> {out / 'gp_best_params.yaml'}")
    return EXIT_OK


def cmd_train(args):
    params, phys, out = _resolve(args)
    curriculum = (tasks.smoke_curriculum(window=args.window)
                  if args.levels == 2 else tasks.TABLE_CURRICULUM[:args.levels])
    cfg = ppoc.TrainConfig(
        variant=args.variant, seed=args.seed, max_episodes=args.episodes,
        hidden=tuple(int(h) for h in args.hidden.split(",")),
        curriculum=curriculum, params=params, phys=phys,
        early_stop_success=args.early_stop, out_dir=str(out),
        checkpoint_every=args.checkpoint_every)
    result = ppoc.train(cfg)
    io.write_json(out / "train_summary.json",
                  {"level_reached": result.level_reached,
                   "episodes": len(result.episodes),
                   "final_success_rate": result.final_success_rate,
                   "aborted": result.aborted})
    print(f"level_reached={result.level_reached} "
          f"success={result.final_success_rate:.2f} "
          f"checkpoint={out / 'checkpoint.pt'}")
    return EXIT_OK


def cmd_rollout(args):
    params, phys, out = _resolve(args)
    ckpt = ppoc.PolicyCheckpoint.load(args.checkpoint)
    policy = ppoc.TorchPolicy(ckpt, seed=args.seed)
    goals = ppoc.make_waypoints(args.script, distance=args.distance,
                                angle_deg=args.angle, radius=args.radius)
    logs = ppoc.rollout(policy, phys, goals, params=params, seed=args.seed)
    dt = params.control_dt
    for leg, log in enumerate(logs):
        rows = [(k * dt, log.head[k, 0], log.head[k, 1],
                 log.observations[k, 0], log.observations[k, 2], log.v_g[k],
                 *log.observations[k, 4:8], *log.psi[k])
                for k in range(log.steps)]
        io.write_csv(out / f"rollout_leg{leg}.csv",
                     ["t", "head_x", "head_y", "rho_g", "theta_g", "v_g",
                      "kappa1", "kappa2", "kappa3", "kappa4",
                      "psi1", "psi2", "psi3", "psi4"],
                     rows, _header(args, params, phys=phys, leg=leg,
                                   outcome=log.outcome.value))
    io.write_json(out / "rollout_summary.json",
                  {"legs": [log.to_dict() for log in logs]})
    print(out / "rollout_summary.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snakecpg",
        description="CPG locomotion lab: simulate, analyze, tune, train.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--params", help="oscillator parameter YAML")
        p.add_argument("--physics", help="surrogate physics YAML")
        p.add_argument("--out", help=f"output directory (default ${io.OUTDIR_ENV} or .)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value (prefix phys. for physics)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")

    p = sub.add_parser("simulate-cpg", help="dump a network trajectory as CSV")
    common(p)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--u", type=float, default=1.0, help="constant tonic drive")
    p.set_defaults(func=cmd_simulate_cpg)

    p = sub.add_parser("validate-params", help="oscillation-existence report")
    common(p)
    p.set_defaults(func=cmd_validate_params)

    p = sub.add_parser("bias-sweep", help="bias vs constant tonic drive panels")
    common(p)
    p.add_argument("--kn", help="comma-separated harmonic gains")
    p.add_argument("--points", type=int, default=26)
    p.add_argument("--duration", type=float, default=40.0)
    p.set_defaults(func=cmd_bias_sweep)

    p = sub.add_parser("duty-sweep", help="bias vs pulse duty cycle")
    common(p)
    p.add_argument("--points", type=int, default=15)
    p.add_argument("--duration", type=float, default=60.0)
    p.set_defaults(func=cmd_duty_sweep)

    p = sub.add_parser("freq-sweep", help="oscillation frequency vs K_f")
    common(p)
    p.add_argument("--kf", default="0.45:1.05:13", help="grid lo:hi[:n]")
    p.add_argument("--duration", type=float, default=40.0)
    p.set_defaults(func=cmd_freq_sweep)

    p = sub.add_parser("threshold", help="entrainment threshold A0 over omega")
    common(p)
    p.add_argument("--c", type=float, default=0.75)
    p.add_argument("--omega", default="3.77:5.02:100", help="grid lo:hi[:n]")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("velocity-sweep", help="surrogate speed over (c, K_f)")
    common(p)
    p.add_argument("--c", default="0.4:0.8:10", help="grid lo:hi[:n]")
    p.add_argument("--kf", default="0.45:1.05:10", help="grid lo:hi[:n]")
    p.add_argument("--duration", type=float, default=20.0)
    p.set_defaults(func=cmd_velocity_sweep)

    p = sub.add_parser("tune-gp", help="evolve CPG parameters for locomotion")
    common(p)
    p.add_argument("--pop", type=int, default=32)
    p.add_argument("--generations", type=int, default=30)
    p.add_argument("--horizon", type=float, default=6.4)
    p.add_argument("--spread", type=float, default=0.5)
    p.set_defaults(func=cmd_tune_gp)

    p = sub.add_parser("train", help="curriculum PPOC training")
    common(p)
    p.add_argument("--variant", default="foc-ppoc-cpg",
                   choices=list(ppoc.VARIANTS))
    p.add_argument("--episodes", type=int, default=400)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--hidden", default="64,64")
    p.add_argument("--early-stop", type=float, default=None)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rollout", help="evaluate a checkpoint on waypoint scripts")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--script", default="single",
                   choices=["single", "zigzag", "square"])
    p.add_argument("--angle", type=float, default=0.0)
    p.add_argument("--distance", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=0.175)
    p.set_defaults(func=cmd_rollout)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except io.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationDivergedError as err:
        print(f"numerical divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())

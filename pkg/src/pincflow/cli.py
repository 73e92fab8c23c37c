"""Command-line entry point: train, simulate, mpc, evaluate.

Heavy imports happen inside the command handlers so the thread cap can be
applied to the numerical backend before numpy is loaded.

Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pincflow",
        description="Physics-trained flow surrogates, reference plant, and predictive control.",
    )
    parser.add_argument(
        "--threads", type=int, default=None,
        help="cap numerical backend threads; 1 gives bitwise-reproducible runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a steady or transient network")
    train.add_argument("--config", required=True)
    train.add_argument("--regime", choices=("steady", "transient"), required=True)
    train.add_argument("--ss-model", help="steady-state model file (transient only)")
    train.add_argument("--output", default=".", help="output directory")

    simulate = sub.add_parser("simulate", help="run a control schedule on plant or surrogate")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--source", choices=("plant", "pinc"), required=True)
    simulate.add_argument("--schedule", required=True, help="control schedule file")
    simulate.add_argument("--model", help="transient model file (source=pinc)")
    simulate.add_argument("--probes", help="comma-separated normalized positions")
    simulate.add_argument("--output", default=".")

    mpc = sub.add_parser("mpc", help="closed-loop control against the plant")
    mpc.add_argument("--config", required=True)
    mpc.add_argument("--model", help="transient model file")
    mpc.add_argument("--perfect-model", action="store_true",
                     help="use the plant itself as predictor (diagnostic)")
    mpc.add_argument("--y-min-schedule", help="file of 't_seconds floor' lines")
    mpc.add_argument("--output", default=".")

    evaluate = sub.add_parser("evaluate", help="error metrics between two trajectory files")
    evaluate.add_argument("--true", dest="true_path", required=True)
    evaluate.add_argument("--est", dest="est_path", required=True)
    evaluate.add_argument("--regime", default="transient", help="label for the report")
    evaluate.add_argument("--output", default=".")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .config import ConfigError
    from .fileio import FileFormatError
    from .network import ModelFormatError
    from .physics import PhysicsError
    from .plant import PlantError
    from .training import TrainingError

    handlers = {
        "train": _cmd_train,
        "simulate": _cmd_simulate,
        "mpc": _cmd_mpc,
        "evaluate": _cmd_evaluate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FileFormatError, ModelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, PlantError, PhysicsError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _outdir(args) -> Path:
    path = Path(args.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_train(args) -> int:
    from .config import ConfigError, RunConfig
    from .fileio import loss_report_to_csv
    from .network import load_model, save_model
    from .training import best_of_seeds, train_steady, train_transient

    cfg = RunConfig.from_file(args.config)
    sys_ = cfg.fluid_system()
    norm = cfg.normalization()
    arch = cfg.architecture(args.regime)
    tcfg = cfg.training_config(args.regime)
    sweep = cfg.seed_sweep()

    ss_model = None
    if args.regime == "transient":
        if not args.ss_model:
            raise ConfigError("transient training needs --ss-model")
        ss_model = load_model(args.ss_model)

    if sweep > 1:
        seeds = [tcfg.sampling_seed + i for i in range(sweep)]
        model, report, summary = best_of_seeds(
            args.regime, sys_, norm, arch, tcfg, seeds,
            ss_model=ss_model, refine_max_iters=cfg.refine_max_iters() or None,
        )
        for entry in summary:
            print(f"seed {entry['seed']}: validation loss {entry['val_total']:.6e}")
    elif args.regime == "steady":
        model, report = train_steady(sys_, norm, arch, tcfg)
    else:
        model, report = train_transient(sys_, norm, arch, tcfg, ss_model)

    out = _outdir(args)
    model_path = out / f"model_{args.regime}.json"
    save_model(model, model_path)
    loss_path = out / f"loss_{args.regime}.csv"
    loss_path.write_text(loss_report_to_csv(report), encoding="utf-8")
    print(f"wrote {model_path} and {loss_path}")
    print(f"final training loss {report.last_value('total'):.6e}, "
          f"validation loss {report.last_value('val_total'):.6e}")
    return EXIT_OK


def _parse_probes(text, default):
    if not text:
        return default
    return [float(part) for part in text.split(",") if part.strip()]


def _cmd_simulate(args) -> int:
    from .config import ConfigError, RunConfig
    from .fileio import read_schedule, write_trajectory
    from .forwardsim import pinc_forward
    from .network import load_model
    from .plant import simulate_plant

    cfg = RunConfig.from_file(args.config)
    sys_ = cfg.fluid_system()
    norm = cfg.normalization()
    window = cfg.window_settings()
    schedule = read_schedule(args.schedule, window["window_seconds"], window["steps_per_window"])
    probes = _parse_probes(args.probes, [cfg.mpc_config().probe_x])

    if args.source == "plant":
        traj = simulate_plant(sys_, schedule, probes, norm, cfg.plant_grid(), cfg.plant_dt())
    else:
        if not args.model:
            raise ConfigError("source=pinc needs --model")
        model = load_model(args.model)
        if model.norm != norm:
            raise ConfigError("model normalization differs from the configured system")
        traj = pinc_forward(model, schedule, probes, sys_)

    out = _outdir(args) / f"trajectory_{args.source}.csv"
    write_trajectory(traj, out)
    print(f"wrote {out} ({len(traj.times)} samples x {len(traj.probes)} probes)")
    return EXIT_OK


def _cmd_mpc(args) -> int:
    from .config import ConfigError, RunConfig
    from .fileio import closed_loop_to_csv, read_floor_schedule
    from .mpc import PlantPredictor, SurrogatePredictor, closed_loop
    from .network import load_model

    cfg = RunConfig.from_file(args.config)
    sys_ = cfg.fluid_system()
    norm = cfg.normalization()
    mpc_cfg = cfg.mpc_config()
    grid = cfg.plant_grid()
    scenario = cfg.mpc_scenario()

    if args.perfect_model:
        predictor = PlantPredictor(sys_, norm, grid, mpc_cfg)
    else:
        if not args.model:
            raise ConfigError("mpc needs --model (or --perfect-model)")
        model = load_model(args.model)
        if model.norm != norm:
            raise ConfigError("model normalization differs from the configured system")
        predictor = SurrogatePredictor(model, mpc_cfg)

    floor_schedule = None
    if args.y_min_schedule:
        floor_schedule = read_floor_schedule(args.y_min_schedule)
    elif mpc_cfg.y_min is not None:
        floor_schedule = [(0.0, mpc_cfg.y_min)]

    history = closed_loop(
        predictor, sys_, norm, mpc_cfg, grid,
        u_init=scenario["u_init"], duration_seconds=scenario["duration_seconds"],
        dt=cfg.plant_dt(), y_min_schedule=floor_schedule,
    )
    out = _outdir(args) / "closed_loop.csv"
    out.write_text(closed_loop_to_csv(history), encoding="utf-8")
    violations = history.rate_violations(mpc_cfg.output_move_max, norm.p_ref)
    hard_failures = sum(1 for s in history.status if s != "converged")
    print(f"wrote {out}")
    print(f"rate-bound violations: {violations}; non-converged solves: {hard_failures}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    import numpy as np

    from .fileio import FileFormatError, metrics_to_csv, read_trajectory
    from .metrics import fit_compare, mape

    truth = read_trajectory(args.true_path)
    estimate = read_trajectory(args.est_path)
    if truth.fluid != estimate.fluid:
        raise FileFormatError("trajectory files describe different fluids")
    if truth.pressure.shape != estimate.pressure.shape:
        raise FileFormatError("row/probe counts differ between the two files")
    if not np.allclose(truth.probes, estimate.probes):
        raise FileFormatError("probe positions differ between the two files")
    if not np.allclose(truth.times, estimate.times):
        raise FileFormatError("sample times differ between the two files")

    variables = {"pressure": (truth.pressure, estimate.pressure),
                 "velocity": (truth.velocity, estimate.velocity)}
    if truth.fluid == "ideal_gas":
        variables["density"] = (truth.density, estimate.density)
        variables["mass_rate"] = (truth.mass_rate, estimate.mass_rate)

    rows = []
    for name, (true_m, est_m) in variables.items():
        fits = []
        for j, x in enumerate(truth.probes):
            tag = f"{name}@{x:g}"
            if np.all(true_m[:, j] != 0.0):
                rows.append(("mape", tag, args.regime, mape(true_m[:, j], est_m[:, j])))
            if np.ptp(true_m[:, j]) > 0:
                fit = fit_compare(true_m[:, j], est_m[:, j])
                fits.append(fit)
                rows.append(("fit_compare", tag, args.regime, fit))
        if np.all(true_m != 0.0):
            rows.append(("mape", name, args.regime, mape(true_m.ravel(), est_m.ravel())))
        if fits:
            rows.append(("fit_mean", name, args.regime, float(np.mean(fits))))

    out = _outdir(args) / "metrics.csv"
    out.write_text(metrics_to_csv(rows), encoding="utf-8")
    for metric, variable, regime, value in rows:
        print(f"{metric:12s} {variable:20s} {regime:10s} {value:10.4f}")
    print(f"wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Experiment harness for the maglev closed-loop identification study.

Subcommands
-----------
simulate    generate one closed-loop dataset CSV
identify    run one identification method on one dataset
montecarlo  run a seeded campaign of datasets x methods, with summaries
freqresp    tabulate a frequency response as omega,mag,phase_deg

Configuration is a single JSON file with a versioned schema; every constant
of the benchmark (true theta, controllers, noise scales, sample period,
pulse shape) ships in the built-in default config, so each experiment is
one command. All numeric output uses 17 significant digits so reruns are
byte-comparable.

Exit codes: 2 config parse failure, 3 unstable-loop refusal, 4 no stable
candidate (spem), 5 rank-deficient regression (direct methods), 6 campaign
with more than 10% failed runs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys

import numpy as np

from . import coprime, direct, lti, simulate, spem

SCHEMA_VERSION = 1

EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_NO_STABLE = 4
EXIT_RANK = 5
EXIT_CAMPAIGN = 6

FMT = "%.17g"


class ConfigError(Exception):
    """Raised when the configuration cannot be parsed or validated."""


def default_config() -> dict:
    """Built-in campaign configuration with every benchmark constant."""
    return {
        "schema": SCHEMA_VERSION,
        "experiment": {
            "theta": list(simulate.THETA_TRUE),
            "controller": "K",
            "duration": simulate.DEFAULT_DURATION,
            "ts": simulate.DEFAULT_TS,
            "pulse": {
                "start": simulate.DEFAULT_PULSE_START,
                "width": simulate.DEFAULT_PULSE_WIDTH,
                "height": simulate.DEFAULT_PULSE_HEIGHT,
            },
            "noise": {
                "sigma_w": simulate.DEFAULT_SIGMA_W,
                "sigma_xi": simulate.DEFAULT_SIGMA_XI,
            },
        },
        "methods": [
            {"tag": "spem_k", "method": "spem", "kind": "blackbox4",
             "controller": "K"},
            {"tag": "spem_kpid", "method": "spem", "kind": "blackbox4",
             "controller": "K_PID"},
            {"tag": "arx", "method": "arx", "orders": [1, 2, 3, 4, 5, 6]},
            {"tag": "armax", "method": "armax", "orders": [1, 2, 3, 4, 5, 6]},
            {"tag": "dual_youla", "method": "dual_youla", "order": 7},
        ],
        "runs": 100,
        "omega_grid": {"lo": 1.0, "hi": 1e3, "points": 200},
        "output_dir": "campaign",
        "base_seed": 0,
    }


def load_config(path: str | None) -> dict:
    if path is None:
        return default_config()
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path!r}: {err}")
    if not isinstance(cfg, dict) or cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"config schema must be {SCHEMA_VERSION}")
    merged = default_config()
    merged.update(cfg)
    return merged


def _controller(name: str) -> lti.TransferFunction:
    if name == "K":
        return simulate.maglev_controller()
    if name == "K_PID":
        return simulate.pid_controller()
    raise ConfigError(f"unknown controller {name!r} (expected K or K_PID)")


def experiment_from_config(cfg: dict, seed: int | None = None) -> simulate.ExperimentSpec:
    exp = cfg["experiment"]
    try:
        pulse = simulate.PulseReference(**exp["pulse"])
        noise = simulate.NoiseSpec(
            sigma_w=exp["noise"]["sigma_w"],
            sigma_xi=exp["noise"]["sigma_xi"],
            seed=cfg["base_seed"] if seed is None else seed)
        return simulate.ExperimentSpec(
            plant=simulate.maglev_plant(np.asarray(exp["theta"], dtype=float)),
            controller=_controller(exp["controller"]),
            reference=pulse, duration=exp["duration"], ts=exp["ts"],
            noise=noise)
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"invalid experiment section: {err}")


def omega_from_config(cfg: dict) -> np.ndarray:
    grid = cfg["omega_grid"]
    try:
        lo, hi, points = grid["lo"], grid["hi"], int(grid["points"])
    except (KeyError, TypeError) as err:
        raise ConfigError(f"invalid omega_grid: {err}")
    if not (0 < lo < hi and points >= 2):
        raise ConfigError("omega_grid must satisfy 0 < lo < hi, points >= 2")
    return np.logspace(np.log10(lo), np.log10(hi), points)


# ---------------------------------------------------------------------------
# single-method execution


def run_method(method: dict, data: simulate.Dataset, cfg: dict,
               omega: np.ndarray) -> dict:
    """One method on one dataset -> parameters, order, Bode columns."""
    kind = method["method"]
    if kind == "spem":
        param = spem.PlantParameterization(method.get("kind", "blackbox4"))
        k_hat = _controller(method.get("controller", "K"))
        opt = None
        if "optimizer" in method:
            o = method["optimizer"]
            from .optimize import OptimizerConfig
            opt = OptimizerConfig(
                bounds=param.default_bounds(),
                swarm_size=o.get("swarm_size", 0),
                max_iterations=o.get("max_iterations", 0),
                seed=o.get("seed", 0),
                polish_max_evals=o.get("polish_max_evals", 2000))
        result = spem.identify_spem(param, k_hat, data, opt)
        theta = np.asarray(result.theta_hat)
        plant = param.plant(theta)
        resp = lti.freq_response(plant, omega).value
        return {"theta": theta, "order": len(plant.den) - 1,
                "cost": result.cost, "mag": np.abs(resp),
                "phase": np.degrees(np.angle(resp))}
    if kind in ("arx", "armax"):
        orders = list(method.get("orders", [1, 2, 3, 4, 5, 6]))
        fit = direct.fit_arx if kind == "arx" else direct.fit_armax
        best_n, _ = direct.select_order_aic(data, kind, orders)
        model, loss = fit(data, best_n)
        tf = direct.polynomial_to_tf(model)
        resp = lti.freq_response(tf, omega).value
        theta = np.concatenate([model.a, model.b, model.c])
        return {"theta": theta, "order": best_n, "cost": loss,
                "mag": np.abs(resp), "phase": np.degrees(np.angle(resp))}
    if kind == "dual_youla":
        k_true = _controller(cfg["experiment"]["controller"])
        factors = coprime.doubly_coprime_factorize(k_true)
        signals = coprime.youla_signals(data, factors)
        q_hat = coprime.identify_q(signals, int(method.get("order", 7)))
        plant = coprime.recover_plant(q_hat, factors)
        resp = lti.freq_response(plant, omega).value
        theta = np.concatenate([plant.num, plant.den])
        return {"theta": theta, "order": len(plant.den) - 1,
                "cost": float("nan"), "mag": np.abs(resp),
                "phase": np.degrees(np.angle(resp))}
    raise ConfigError(f"unknown method {kind!r}")


def _campaign_run(cfg: dict, run_index: int) -> dict:
    """Worker: simulate one seeded dataset and apply every method."""
    seed = cfg["base_seed"] + run_index
    exp = experiment_from_config(cfg, seed=seed)
    data = simulate.simulate_closed_loop(exp)
    omega = omega_from_config(cfg)
    out = {}
    for method in cfg["methods"]:
        tag = method["tag"]
        try:
            out[tag] = run_method(method, data, cfg, omega)
            out[tag]["status"] = "ok"
        except Exception as err:  # recorded, never aborts the campaign
            out[tag] = {"status": f"error:{type(err).__name__}"}
    return out


# ---------------------------------------------------------------------------
# artifact writers/readers (every file round-trips through its reader)


def write_table(path: str, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else FMT % v
                             for v in row])


def read_table(path: str):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def write_theta_csv(path: str, results: list) -> None:
    width = max((r["theta"].size for r in results if r["status"] == "ok"),
                default=0)
    header = ["run", "status"] + [f"p{i}" for i in range(width)]
    rows = []
    for i, r in enumerate(results):
        row = [FMT % i, r["status"]]
        if r["status"] == "ok":
            row += list(r["theta"]) + [""] * (width - r["theta"].size)
        else:
            row += [""] * width
        rows.append(row)
    write_table(path, header, rows)


def read_theta_csv(path: str):
    header, rows = read_table(path)
    out = []
    for row in rows:
        vals = [float(v) for v in row[2:] if v != ""]
        out.append((int(float(row[0])), row[1], np.asarray(vals)))
    return out


def write_bode_csv(path: str, omega: np.ndarray, results: list) -> None:
    header = ["run", "omega", "mag", "phase_deg"]
    rows = []
    for i, r in enumerate(results):
        if r["status"] != "ok":
            continue
        for om, mag, ph in zip(omega, r["mag"], r["phase"]):
            rows.append([FMT % i, om, mag, ph])
    write_table(path, header, rows)


def read_bode_csv(path: str):
    header, rows = read_table(path)
    data = np.array([[float(v) for v in row] for row in rows]) \
        if rows else np.empty((0, 4))
    return data  # columns run, omega, mag, phase_deg


def write_orders_csv(path: str, results: list) -> None:
    rows = [[FMT % i, r["status"],
             FMT % r["order"] if r["status"] == "ok" else ""]
            for i, r in enumerate(results)]
    write_table(path, ["run", "status", "order"], rows)


def write_summary_csv(path: str, campaign: dict) -> None:
    rows = []
    for tag, results in campaign.items():
        thetas = [r["theta"] for r in results if r["status"] == "ok"]
        if not thetas:
            continue
        width = min(t.size for t in thetas)
        mat = np.vstack([t[:width] for t in thetas])
        for j in range(width):
            q = np.percentile(mat[:, j], [0, 25, 50, 75, 100])
            rows.append([tag, f"p{j}"] + list(q))
    write_table(path, ["method", "parameter", "min", "q1", "median",
                       "q3", "max"], rows)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    exp = experiment_from_config(
        cfg, seed=args.seed if args.seed is not None else None)
    try:
        data = simulate.simulate_closed_loop(exp)
    except simulate.UnstableLoopError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_UNSTABLE
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "dataset.csv")
    simulate.write_csv(path, data)
    loop = lti.feedback(lti.tf_to_ss(exp.plant), lti.tf_to_ss(exp.controller))
    poles = lti.poles(loop)
    print(f"wrote {path} ({data.t.size} samples, ts={exp.ts:g} s)")
    print("closed-loop poles:",
          ", ".join(f"{p.real:.4g}{p.imag:+.4g}j" for p in poles))
    return 0


def cmd_identify(args) -> int:
    cfg = load_config(args.config)
    data = simulate.read_csv(args.data)
    omega = omega_from_config(cfg)
    methods = {m["tag"]: m for m in cfg["methods"]}
    if args.method not in methods:
        print(f"error: unknown method tag {args.method!r}; "
              f"have {sorted(methods)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_method(methods[args.method], data, cfg, omega)
    except spem.NoStableCandidateError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NO_STABLE
    except direct.RankDeficientError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RANK
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"identify_{args.method}.csv")
    write_theta_csv(path, [dict(result, status="ok")])
    theta = result["theta"]
    print(f"method {args.method}: cost {result['cost']:.6g}, "
          f"order {result['order']}")
    print("parameters:", ", ".join(FMT % v for v in theta))
    method = methods[args.method]
    if method["method"] == "spem":
        param = spem.PlantParameterization(method.get("kind", "blackbox4"))
        plant = param.plant(theta)
        k_true = _controller(cfg["experiment"]["controller"])
        loop = lti.feedback(lti.tf_to_ss(plant), lti.tf_to_ss(k_true))
        print("estimated plant poles:",
              ", ".join(f"{p:.4g}" for p in lti.poles(plant)))
        print("closed loop with configured controller:",
              "stable" if lti.is_stable(loop) else "unstable")
    print(f"wrote {path}")
    return 0


def cmd_montecarlo(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["base_seed"] = args.seed
    runs = int(cfg["runs"])
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    omega = omega_from_config(cfg)
    out = args.out or cfg["output_dir"]
    os.makedirs(out, exist_ok=True)

    if args.workers and args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(_campaign_run, [cfg] * runs, range(runs)))
    else:
        results = [_campaign_run(cfg, i) for i in range(runs)]

    campaign = {m["tag"]: [res[m["tag"]] for res in results]
                for m in cfg["methods"]}
    for m in cfg["methods"]:
        tag = m["tag"]
        write_theta_csv(os.path.join(out, f"theta_{tag}.csv"), campaign[tag])
        write_bode_csv(os.path.join(out, f"bode_{tag}.csv"), omega,
                       campaign[tag])
        write_orders_csv(os.path.join(out, f"orders_{tag}.csv"),
                         campaign[tag])
    write_summary_csv(os.path.join(out, "summary.csv"), campaign)
    meta = {"schema": SCHEMA_VERSION, "config": cfg,
            "seeds": list(range(cfg["base_seed"], cfg["base_seed"] + runs))}
    with open(os.path.join(out, "campaign.meta"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    n_ok = sum(all(res[m["tag"]]["status"] == "ok" for m in cfg["methods"])
               for res in results)
    print(f"campaign: {n_ok}/{runs} runs fully succeeded; artifacts in {out}")
    return 0 if n_ok >= 0.9 * runs else EXIT_CAMPAIGN


def cmd_freqresp(args) -> int:
    cfg = load_config(args.config)
    omega = omega_from_config(cfg)
    if args.model == "true":
        sys_ = simulate.maglev_plant(
            np.asarray(cfg["experiment"]["theta"], dtype=float))
    elif args.model in ("K", "K_PID"):
        sys_ = _controller(args.model)
    elif args.model == "unit":
        sys_ = lti.TransferFunction([1.0], [1.0])
    else:
        try:
            theta = np.asarray([float(v) for v in args.model.split(",")])
            sys_ = simulate.maglev_plant(theta)
        except ValueError:
            print(f"error: model must be true|K|K_PID|unit or a theta list, "
                  f"got {args.model!r}", file=sys.stderr)
            return EXIT_CONFIG
    resp = lti.freq_response(sys_, omega).value
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "freqresp.csv")
    write_table(path, ["omega", "mag", "phase_deg"],
                [[om, abs(v), np.degrees(np.angle(v))]
                 for om, v in zip(omega, resp)])
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="clsid", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config path (default built-in)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override base seed")

    p = sub.add_parser("simulate", parents=[common],
                       help="generate a dataset CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", parents=[common],
                       help="run one method on one dataset")
    p.add_argument("--method", required=True, help="method tag from config")
    p.add_argument("--data", required=True, help="dataset CSV path")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("montecarlo", parents=[common],
                       help="run a Monte-Carlo campaign")
    p.add_argument("--workers", type=int, default=1,
                   help="process pool size (default 1)")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("freqresp", parents=[common],
                       help="tabulate a frequency response")
    p.add_argument("--model", default="true",
                   help="true | K | K_PID | unit | comma-separated theta")
    p.set_defaults(func=cmd_freqresp)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

import numpy as np

from .calibrate import iterate_sigma_eta, tune_eta
from .config import RunConfig, load_bound_config, parse_config
from .errors import ConfigError
from .estimator import FALLBACKS, EstimatorSettings, estimate_all, pairwise_distance
from .harness import ReplicationRecord, choose_eta, run_montecarlo
from .inference import population_estimate, prediction_halfwidths
from .io import _jsonable, emit_results, format_value, load_log, records_to_csv, records_to_json, save_log
from .model import build_mean_tensor
from .rng import Streams
from .simulate import run_experiment, sample_latent
from .theory import TheoryParams, eta_schedule, phi_discrete, thm1_bound

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _config(args) -> RunConfig:
    raw = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{args.config}: invalid JSON ({e})") from None
    raw = json.loads(json.dumps(raw))
    cfg = parse_config(raw)
    over = {}
    for flag in ("seed", "reps", "threads"):
        v = getattr(args, flag, None)
        if v is not None:
            over[flag] = v
    if over:
        d = cfg.normalized()
        d["replication"].update(over)
        cfg = parse_config(d, env=False)
    return cfg


def _write(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def cmd_simulate(args) -> int:
    cfg = _config(args)
    ex = cfg.experiment
    streams = Streams(cfg.replication.seed, args.rep)
    latent = sample_latent(ex.latent.spec(), ex.N, ex.T, ex.actions, streams, ex.mean_fn)
    log = run_experiment(latent, ex.noise.spec(), ex.policy.spec(), streams)
    if args.out:
        save_log(args.out, log, latent)
    else:
        from .io import log_to_dict
        _write(json.dumps(log_to_dict(log, latent)), None)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _config(args)
    log, latent = load_log(args.log)
    a = cfg.estimator.action
    eta, sigma_hat_sq = choose_eta(cfg, log)
    settings = EstimatorSettings(eta=eta, action=a, cap=cfg.estimator.cap,
                                 alpha=cfg.estimator.alpha, cap_seed=cfg.replication.seed)
    tab = estimate_all(log, pairwise_distance(log, a), settings)
    hw = prediction_halfwidths(tab, float(np.sqrt(sigma_hat_sq)), settings.alpha)
    theta = build_mean_tensor(latent).theta[:, :, a] if latent is not None else None
    N, T = tab.shape
    if args.format == "json":
        body = {"eta": eta, "sigma_hat_sq": sigma_hat_sq, "action": a,
                "population_estimate": population_estimate(log, tab, a),
                "value": tab.value, "neighbor_count": tab.count,
                "fallback": [[FALLBACKS[c] for c in row] for row in tab.fallback],
                "pi_half_width": hw}
        if theta is not None:
            body["theta"] = theta
        _write(json.dumps(_jsonable(body), allow_nan=False), args.out)
        return EXIT_OK
    cols = ["unit", "time", "value", "neighbor_count", "fallback", "pi_half_width"]
    if theta is not None:
        cols.append("theta")
    lines = [",".join(cols)]
    for i in range(N):
        for t in range(T):
            row = [str(i), str(t), format_value(float(tab.value[i, t])), str(int(tab.count[i, t])),
                   FALLBACKS[int(tab.fallback[i, t])],
                   "" if np.isnan(hw[i, t]) else format_value(float(hw[i, t]))]
            if theta is not None:
                row.append(format_value(float(theta[i, t])))
            lines.append(",".join(row))
    _write("\r\n".join(lines) + "\r\n", args.out)
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _config(args)
    log, _ = load_log(args.log)
    a = cfg.estimator.action
    tr = tune_eta(log, a, cfg.estimator.grid_k)
    body = {"eta_grid": tr.eta_grid, "losses": tr.losses, "eta_tuned": tr.eta_tuned,
            "sigma_hat_sq": tr.sigma_hat_sq, "self_fallback_frac": tr.self_fallback_frac,
            "split": [int(tr.split[0].size), int(tr.split[1].size)]}
    if args.eta0 is not None:
        it = iterate_sigma_eta(log, a, args.eta0, args.max_iters, args.tol)
        body["iteration"] = {"eta": it.eta, "sigma_hat_sq": it.sigma_hat_sq,
                             "converged": it.converged, "iterations": it.iterations,
                             "trace": [list(x) for x in it.trace]}
    _write(json.dumps(_jsonable(body), indent=2, allow_nan=False), args.out)
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = _config(args)
    records, summary = run_montecarlo(cfg)
    fmt = args.format or cfg.output.format
    out = args.out or cfg.output.path
    if out:
        emit_results(records, summary, fmt, out, ReplicationRecord)
    else:
        _write(records_to_csv(records, ReplicationRecord) if fmt == "csv"
               else records_to_json(records, summary), None)
    summ = args.summary or cfg.output.summary_path
    if summ:
        with open(summ, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(summary), fh, indent=2, allow_nan=False)
    return EXIT_OK


def cmd_bound(args) -> int:
    if not args.config:
        raise ConfigError("bound needs --config")
    bc = load_bound_config(args.config)
    params = TheoryParams(bc.c_u, bc.c_v, bc.c_eps, bc.lambda_a, bc.sigma_sq, bc.delta,
                          tuple(bc.pmin), bc.big_c)
    if isinstance(bc.phi, dict):
        try:
            sup, sv, u = bc.phi["support"], bc.phi["sigma_v"], bc.phi["u"]
        except KeyError as e:
            raise ConfigError(f"phi.{e.args[0]}: required for a discrete phi") from None
        phi_at = lambda r: phi_discrete(sup, sv, u, r)  # noqa: E731
    else:
        const = float(bc.phi)
        phi_at = lambda r: const  # noqa: E731
    if bc.eta is not None:
        eta = bc.eta
    elif bc.schedule is not None:
        eta = eta_schedule(bc.schedule, params, bc.N, bc.T, bc.beta)
    else:
        raise ConfigError("eta: give either eta or schedule")
    t = bc.T - 1 if bc.t is None else bc.t
    res = thm1_bound(params, bc.N, bc.T, t, eta, phi_at)
    body = {"eta": eta, **res.__dict__}
    _write(json.dumps(_jsonable(body), indent=2, allow_nan=False), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides config and SEQCF_SEED)")
    common.add_argument("--reps", type=int, help="number of replications")
    common.add_argument("--threads", type=int, help="worker threads (overrides SEQCF_THREADS)")
    common.add_argument("--out", help="output path (stdout if omitted)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")

    p = argparse.ArgumentParser(prog="seqcf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="simulate one experiment log")
    s.add_argument("--rep", type=int, default=0, help="replication index of the stream")
    s.set_defaults(func=cmd_simulate)
    e = sub.add_parser("estimate", parents=[common], help="estimate from a stored log")
    e.add_argument("--log", required=True)
    e.set_defaults(func=cmd_estimate, format="csv")
    t = sub.add_parser("tune", parents=[common], help="tune eta and estimate sigma^2")
    t.add_argument("--log", required=True)
    t.add_argument("--eta0", type=float, help="also run the eta/sigma iteration from this start")
    t.add_argument("--max-iters", type=int, default=25)
    t.add_argument("--tol", type=float, default=1e-3)
    t.set_defaults(func=cmd_tune)
    m = sub.add_parser("montecarlo", parents=[common], help="run a Monte Carlo study")
    m.add_argument("--summary", help="write the summary JSON here")
    m.set_defaults(func=cmd_montecarlo)
    b = sub.add_parser("bound", parents=[common], help="evaluate the error bound")
    b.set_defaults(func=cmd_bound)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "estimate" and args.format is None:
        args.format = "csv"
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

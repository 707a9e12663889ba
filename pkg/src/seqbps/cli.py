"""Command line driver.

Subcommands::

    seqbps filter         SMC with MCMC interventions
    seqbps gibbs          repeated-Gibbs baseline
    seqbps ldf            loss-discounted combinations over discount grids
    seqbps bench          kernel timings per backend
    seqbps estimate-time  Gibbs wall-time estimate from an SMC step time

Flags given on the command line override values from ``--config``.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import _accel, datasets
from .agents import MacroSeries, run_agents
from .bench import estimate_mcmc_time, run_bench
from .config import ConfigError, RunConfig, default_config_path, load_config
from .evaluation import DEFAULT_PROBS, ForecastRecord, emit_traces, lpdr
from .ingest import IngestError, ingest
from .ldf import DiscountGrid, run_ldf_bps_multi, run_two_layer_ldf
from .pipeline import DBPSPipeline, repeated_gibbs


def _parse_grid(text: str):
    """A preset name or ``beta:delta`` pairs separated by commas."""
    if ":" not in text:
        return text
    try:
        return tuple(tuple(float(v) for v in item.split(":")) for item in text.split(","))
    except ValueError:
        raise ConfigError(f"grid: cannot parse {text!r}; use a preset or 'beta:delta,...'") from None


def build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else load_config(default_config_path())
    chain = args.chain
    return cfg.with_overrides(
        seed=args.seed, M=args.particles, N=chain, gibbs_N=chain, C=args.ess_threshold, ldf_C=args.ess_threshold,
        grid=None if args.grid is None else _parse_grid(args.grid),
        gamma=args.gamma, out=args.out, threads=args.threads,
        data_path=None if args.data is None else str(Path(args.data).resolve()),
    )


def load_inputs(cfg: RunConfig):
    data = ingest(datasets.resolve(cfg.resolved_data_path()))
    if cfg.eval_end > len(data):
        raise ConfigError(f"eval_end: {cfg.eval_end} exceeds the series length {len(data)}")
    forecasts = run_agents(cfg.agents(), data)
    return data, forecasts


def _quantile_fields(q) -> dict:
    if q is None:
        return {}
    return {"q05": float(q[0]), "q50": float(q[1]), "q95": float(q[2])}


def _record(data: MacroSeries, t: int, scores: dict, q=None, ess=math.nan, intervened=False) -> ForecastRecord:
    return ForecastRecord(t + 1, data.dates[t], float(data.y[t]), scores, ess=ess, intervened=intervened,
                          **_quantile_fields(q))


def _agent_scores(forecasts, agent_names, t) -> dict:
    return {name: float(forecasts.logscore[t, k]) for k, name in enumerate(agent_names)}


def _write_rows(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _r(v) -> str:
    return repr(float(v))


def cmd_filter(cfg: RunConfig, log=print) -> dict:
    data, forecasts = load_inputs(cfg)
    names = [a.name for a in cfg.agents()]
    pipe = DBPSPipeline(
        data.y, forecasts, cfg.synthesis(), cfg.t0, cfg.M, threshold=cfg.C, chain_size=cfg.N,
        burn_in=cfg.burn_in, seed=cfg.seed, scheme=cfg.scheme, adaptive=cfg.adaptive,
        record_predictive=False, probs=DEFAULT_PROBS,
    )
    records = []
    for t in range(cfg.t0, cfg.stop):
        rec = pipe.advance()
        rec.predictive = None
        scores = {"dbps": rec.logscore, **_agent_scores(forecasts, names, t)}
        records.append(_record(data, t, scores, rec.quantiles, rec.ess, rec.intervened))
    out = Path(cfg.out)
    paths = {
        "traces": emit_traces(records, out / "filter_traces.csv", ["dbps", *names]),
        "interventions": _write_rows(
            out / "filter_interventions.csv", ["t", "date", "ess", "chain_size"],
            [[e.t + 1, data.dates[e.t], _r(e.ess), e.chain_size] for e in pipe.interventions]),
        "timing": _write_rows(
            out / "filter_timing.csv", ["t", "date", "wall_time"],
            [[r.t + 1, data.dates[r.t], _r(r.wall_time)] for r in pipe.records]),
    }
    ev = cfg.eval_start - cfg.t0
    total = float(np.sum([r.logscore for r in pipe.records][ev:]))
    log(f"filter: {len(records)} steps, {len(pipe.interventions)} interventions, "
        f"eval log score {total:.3f}; wrote {paths['traces']}")
    return paths


def cmd_gibbs(cfg: RunConfig, log=print) -> dict:
    data, forecasts = load_inputs(cfg)
    positions = list(range(cfg.t0, cfg.stop, cfg.gibbs_every))
    recs = repeated_gibbs(data.y, forecasts, cfg.synthesis(), cfg.t0, positions, cfg.gibbs_N,
                          burn_in=cfg.burn_in, seed=cfg.seed, probs=DEFAULT_PROBS, keep_predictive=False)
    records = [_record(data, r.t, {"gibbs": r.logscore}, r.quantiles) for r in recs]
    out = Path(cfg.out)
    paths = {
        "traces": emit_traces(records, out / "gibbs_traces.csv", ["gibbs"]),
        "timing": _write_rows(out / "gibbs_timing.csv", ["t", "date", "wall_time"],
                              [[r.t + 1, data.dates[r.t], _r(r.wall_time)] for r in recs]),
    }
    log(f"gibbs: {len(records)} steps with N={cfg.gibbs_N}; wrote {paths['traces']}")
    return paths


def cmd_ldf(cfg: RunConfig, log=print) -> dict:
    data, forecasts = load_inputs(cfg)
    grid: DiscountGrid = cfg.discount_grid()
    run = run_ldf_bps_multi(
        data.y, forecasts, grid, cfg.gamma, cfg.ldf_weights, cfg.synthesis(), cfg.t0, cfg.stop, cfg.M,
        seed=cfg.seed, probs=DEFAULT_PROBS, threads=cfg.threads, threshold=cfg.ldf_threshold, chain_size=cfg.N,
        burn_in=cfg.burn_in, scheme=cfg.scheme, adaptive=cfg.adaptive,
    )
    out = Path(cfg.out)
    paths = {}
    bench_pair = (round(cfg.beta, 10), round(cfg.delta, 10))
    bench_idx = grid.pairs.index(bench_pair) if bench_pair in grid.pairs else None
    members = run.member_logscores()
    selected_cols, selected_header = [], []
    for w, res in run.combos.items():
        method = f"ldf_B_{w}"
        rows = []
        for i, t in enumerate(res.positions):
            scores = {method: res.logscore[i]}
            if bench_idx is not None:
                scores["dbps_fixed"] = members[i, bench_idx]
            rows.append(_record(data, t, scores, res.quantiles[i]))
        paths[method] = emit_traces(rows, out / f"{method}_traces.csv")
        pairs = [grid.pairs[j] for j in res.selected]
        selected_header += [f"beta_{method}", f"delta_{method}"]
        selected_cols += [[p[0] for p in pairs], [p[1] for p in pairs]]
        if bench_idx is not None:
            gain = lpdr(res.logscore, members[:, bench_idx], cfg.eval_start - cfg.t0)[-1]
            log(f"ldf: {method} LPDR vs fixed ({cfg.beta}, {cfg.delta}) = {gain:.3f}")
    gam = cfg.gamma1_grid()
    for pair in cfg.two_layer:
        a1, a2 = pair.split(",")
        res = run_two_layer_ldf(data.y, forecasts, gam, cfg.gamma2, a1, a2, cfg.t0, cfg.stop, probs=DEFAULT_PROBS)
        method = f"ldf_{a1}_{a2}"
        rows = []
        for i, t in enumerate(res.positions):
            scores = {method: res.logscore[i]}
            if bench_idx is not None:
                scores["dbps_fixed"] = members[i, bench_idx]
            rows.append(_record(data, t, scores, res.quantiles[i]))
        paths[method] = emit_traces(rows, out / f"{method}_traces.csv")
        selected_header.append(f"gamma1_{method}")
        selected_cols.append([gam[j] for j in res.selected])
    positions = list(range(cfg.t0, cfg.stop))
    paths["selected"] = _write_rows(
        out / "ldf_selected.csv", ["t", "date", *selected_header],
        [[t + 1, data.dates[t], *[_r(c[i]) for c in selected_cols]] for i, t in enumerate(positions)],
    )
    log(f"ldf: {len(grid)} pipelines, {len(run.combos)} grid combinations, "
        f"{len(cfg.two_layer)} two-layer variants; wrote {out}")
    return paths


def cmd_bench(cfg: RunConfig, log=print) -> dict:
    results = run_bench(M=cfg.M)
    rows = []
    for r in results:
        est = estimate_mcmc_time(cfg.eval_end, cfg.t0 + 1, cfg.N, cfg.M, r.smc_step)
        rows.append([r.backend, _r(r.smc_step), _r(r.gibbs_sweep_per_period), _r(est)])
        log(f"{r.backend:>6}: SMC step (M={cfg.M}) {r.smc_step * 1e3:8.2f} ms | "
            f"Gibbs {r.gibbs_sweep_per_period * 1e6:7.3f} us per draw-period | "
            f"estimated Gibbs run at t={cfg.eval_end}, N={cfg.N}: {est:8.1f} s")
    path = _write_rows(Path(cfg.out) / "bench.csv",
                       ["backend", "smc_step", "gibbs_per_draw_period", "estimated_gibbs_time"], rows)
    return {"bench": path}


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="TOML run configuration (default: packaged defaults)")
    p.add_argument("--data", help="quarterly date,y,u,r CSV (overrides data.path)")
    p.add_argument("--seed", type=int)
    p.add_argument("--particles", type=int, help="SMC particle count M")
    p.add_argument("--chain", type=int, help="Gibbs chain length N (interventions and baseline)")
    p.add_argument("--ess-threshold", type=float, help="ESS threshold C")
    p.add_argument("--grid", help="discount grid preset or 'beta:delta,...'")
    p.add_argument("--gamma", type=float, help="LDF discount factor")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads")
    return p


COMMANDS = {"filter": cmd_filter, "gibbs": cmd_gibbs, "ldf": cmd_ldf, "bench": cmd_bench}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqbps", description="Sequential Bayesian predictive synthesis.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()
    sub.add_parser("filter", parents=[common], help="SMC with MCMC interventions")
    sub.add_parser("gibbs", parents=[common], help="repeated Gibbs baseline")
    sub.add_parser("ldf", parents=[common], help="loss-discounted combinations")
    sub.add_parser("bench", parents=[common], help="time kernels on each backend")
    est = sub.add_parser("estimate-time", help="estimate Gibbs wall time from an SMC step time")
    est.add_argument("--T", type=int, default=248)
    est.add_argument("--t0", type=int, default=66)
    est.add_argument("--N", type=float, default=10000)
    est.add_argument("--M", type=float, default=10000)
    est.add_argument("--step", type=float, required=True, help="seconds per SMC step")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "estimate-time":
            print(f"{estimate_mcmc_time(args.T, args.t0, args.N, args.M, args.step):.2f}")
            return 0
        cfg = build_config(args)
        _accel.set_threads(cfg.threads)
        COMMANDS[args.command](cfg)
    except (ConfigError, IngestError, datasets.MissingDataError) as exc:
        print(f"seqbps: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI reports every failure as one line
        print(f"seqbps: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

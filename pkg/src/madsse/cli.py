"""Command-line entry point: ``madsse <command> [options]``."""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import errors
from .estimator import (NonlinearFeedback, make_feedback, run_realtime, solve_gauss_newton,
                        solve_gradient)
from .grid import (FeederSpec, feeder_json, generate_feeder, load_feeder, partition,
                   sample_feeder_37)
from .measurements import (NoisePolicy, diurnal_profile, load_timeseries, meter_entries,
                           synthesize)
from .multiarea import build_agents, export_log, run_protocol
from .observability import build_H, export_report
from .powerflow import solve_nonlinear
from .sensitivity import build

SCHEMA = "# schema_version=1\n"
OUT_ENV = "MADSSE_OUT"


@dataclass
class RunConfig:
    feeder: str = None
    generate: str = None
    roots: list = field(default_factory=list)
    meters: str = "frac=0.05"
    sigma_v: float = 0.01
    sigma_rel: float = 0.5
    solver: str = "gradient"
    feedback: str = "nonlinear"
    eps: str = "auto"
    delta: float = 1e-6
    max_iters: int = 500
    trials: int = 1
    seed: int = 0
    out: str = None

    def noise(self):
        return NoisePolicy(self.sigma_v, self.sigma_rel)


# --------------------------------------------------------------------------
# parsing helpers


def parse_kv(text):
    out = {}
    for part in filter(None, (text or "").split(",")):
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _num(v):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def feeder_from(cfg):
    if cfg.feeder:
        path = Path(cfg.feeder)
        if not path.exists():
            raise FileNotFoundError(f"feeder not found: {path}")
        return load_feeder(path)
    kv = {k: _num(v) for k, v in parse_kv(cfg.generate or "size=36").items()}
    if kv.get("layout") == 37:
        return sample_feeder_37(seed=kv.get("seed", 37))
    if "multiphase" in kv:
        flag = str(kv["multiphase"]).lower()
        if flag not in ("1", "0", "true", "false", "yes", "no"):
            raise ValueError(f"multiphase must be true or false, got {kv['multiphase']!r}")
        kv["multiphase"] = flag in ("1", "true", "yes")
    try:
        spec = FeederSpec(**kv)
    except TypeError:
        known = sorted(FeederSpec.__dataclass_fields__)
        raise ValueError(f"unknown generator key in {cfg.generate!r}; known: {known}") from None
    return generate_feeder(spec)


def parse_meters(text):
    """``frac=0.05`` or ``list=6,12,34`` (ids) / ``list=6a,12b`` (with phases)."""
    if text.startswith("frac="):
        return float(text[5:])
    if text.startswith("list="):
        items = []
        for tok in filter(None, text[5:].split(",")):
            if tok[-1].isalpha():
                items.append((int(tok[:-1]), tok[-1]))
            else:
                items.append(int(tok))
        return items
    if text == "none":
        return []
    raise ValueError(f"bad --meters value {text!r}")


def out_dir(cfg):
    d = Path(cfg.out or os.environ.get(OUT_ENV) or "madsse-out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_config(cfg, d, extra=None):
    data = asdict(cfg)
    data["out"] = None  # output location is not part of the experiment
    if extra:
        data.update(extra)
    (d / "config.json").write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(SCHEMA)
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def voltage_errors(v_est, v_true):
    """Per-entry magnitude error in percent."""
    vt = np.sqrt(v_true)
    return np.abs(np.sqrt(v_est) - vt) / vt * 100.0


def trial_meters(model, placement, seed):
    if isinstance(placement, float):
        return meter_entries(model, placement, np.random.default_rng([seed, 1]))
    return meter_entries(model, placement)


# --------------------------------------------------------------------------
# commands


def cmd_generate(cfg, args):
    model = feeder_from(cfg)
    d = out_dir(cfg)
    (d / "feeder.json").write_text(feeder_json(model))
    write_config(cfg, d)
    print(f"feeder with {model.N} nodes -> {d / 'feeder.json'}")
    return 0


def cmd_partition(cfg, args):
    model = feeder_from(cfg)
    part = partition(model, cfg.roots)
    d = out_dir(cfg)
    doc = {"format_version": 1, "nested": part.nested,
           "areas": [{"area": a.k, "root": a.root, "nodes": sorted(a.nodes)} for a in part.areas],
           "unclustered": sorted(part.unclustered)}
    (d / "partition.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    write_config(cfg, d)
    print(f"{part.K} areas, {len(part.unclustered)} unclustered nodes")
    return 0


def _solve_one(cfg, model, sm, ms, part):
    t0 = time.perf_counter()
    if cfg.solver == "gradient":
        fb = make_feedback(cfg.feedback, sm, model)
        eps = cfg.eps if cfg.eps == "auto" else float(cfg.eps)
        st = solve_gradient(ms, sm, fb, eps=eps, max_iters=cfg.max_iters, delta=cfg.delta)
    elif cfg.solver == "multiarea":
        fb = make_feedback(cfg.feedback, sm, model)
        eps = cfg.eps if cfg.eps == "auto" else float(cfg.eps)
        ds, ams = build_agents(model, sm, ms, part, fb, eps=eps)
        st, _, transport = run_protocol(ds, ams, ms, sm, cfg.delta, cfg.max_iters, strict=False)
        st.log = transport.log
    elif cfg.solver == "gauss-newton":
        st = solve_gauss_newton(ms, model)
    else:
        raise ValueError(f"unknown solver {cfg.solver!r}")
    return st, time.perf_counter() - t0


def _truth(model):
    return model.p_nom.copy(), model.q_nom.copy()


def cmd_estimate(cfg, args):
    model = feeder_from(cfg)
    sm = build(model)
    part = partition(model, cfg.roots)
    placement = parse_meters(cfg.meters)
    p_true, q_true = _truth(model)
    truth = solve_nonlinear(model, p_true, q_true)
    rows, timing, traces = [], [], []
    for t in range(cfg.trials):
        seed = cfg.seed + t
        meters = trial_meters(model, placement, seed)
        ms = synthesize(model, p_true, q_true, cfg.noise(), meters=meters, seed=seed, truth=truth)
        st, wall = _solve_one(cfg, model, sm, ms, part)
        if st.v is None:
            avg = mx = float("nan")
        else:
            err = voltage_errors(st.v, truth.v)
            avg, mx = float(err.mean()), float(err.max())
        rows.append((t, seed, ms.digest()[:16], avg, mx, st.s, bool(st.converged)))
        timing.append((t, wall))
        traces += [(t, it, obj, dz, dv) for it, obj, dz, dv, _ in st.trace]
    d = out_dir(cfg)
    write_csv(d / "trials.csv", ["trial", "seed", "digest", "avg_error_pct", "max_error_pct",
                                 "iterations", "converged"], rows)
    write_csv(d / "traces.csv", ["trial", "iteration", "objective", "dz", "dv"], traces)
    write_csv(d / "timing.csv", ["trial", "wall_time_s"], timing)
    avg = np.array([r[3] for r in rows])
    mx = np.array([r[4] for r in rows])
    write_csv(d / "summary.csv", ["solver", "trials", "avg_error_pct", "avg_max_error_pct",
                                  "nonconverged"],
              [(cfg.solver, cfg.trials, float(np.nanmean(avg)), float(np.nanmean(mx)),
                sum(not r[6] for r in rows))])
    write_config(cfg, d)
    print(f"{cfg.solver}: mean error {np.nanmean(avg):.4f}% mean max {np.nanmean(mx):.4f}% "
          f"mean time {np.mean([w for _, w in timing]):.4f}s")
    return 0


def cmd_compare(cfg, args):
    model = feeder_from(cfg)
    sm = build(model)
    placement = parse_meters(cfg.meters)
    p_true, q_true = _truth(model)
    truth = solve_nonlinear(model, p_true, q_true)
    rows, timing = [], []
    for t in range(cfg.trials):
        seed = cfg.seed + t
        meters = trial_meters(model, placement, seed)
        ms = synthesize(model, p_true, q_true, cfg.noise(), meters=meters, seed=seed, truth=truth)
        t0 = time.perf_counter()
        g = solve_gradient(ms, sm, make_feedback(cfg.feedback, sm, model),
                           max_iters=cfg.max_iters, delta=cfg.delta)
        t1 = time.perf_counter()
        try:
            gn = solve_gauss_newton(ms, model)
            gn_v, gn_s, gn_ok = gn.v, gn.s, gn.converged
        except errors.GaussNewtonError:
            gn_v, gn_s, gn_ok = None, 0, False
        t2 = time.perf_counter()
        eg = voltage_errors(g.v, truth.v)
        en = voltage_errors(gn_v, truth.v) if gn_v is not None else np.array([np.nan])
        rows.append((t, seed, ms.digest()[:16], float(eg.mean()), float(eg.max()), g.s,
                     float(en.mean()), float(en.max()), gn_s, gn_ok))
        timing.append((t, t1 - t0, t2 - t1))
    d = out_dir(cfg)
    write_csv(d / "compare.csv", ["trial", "seed", "digest", "gradient_avg_pct",
                                  "gradient_max_pct", "gradient_iters", "gn_avg_pct",
                                  "gn_max_pct", "gn_iters", "gn_converged"], rows)
    ga = np.array([r[3] for r in rows])
    na = np.array([r[6] for r in rows])
    finite = na[np.isfinite(na)]
    hi = max(float(ga.max()), float(finite.max()) if finite.size else 0.0) or 1.0
    edges = np.linspace(0.0, hi * 1.0001, 21)
    hg, _ = np.histogram(ga, edges)
    hn, _ = np.histogram(finite, edges)
    write_csv(d / "histogram.csv", ["bin_lo", "bin_hi", "gradient", "gauss_newton"],
              [(edges[k], edges[k + 1], int(hg[k]), int(hn[k])) for k in range(len(hg))])
    write_csv(d / "timing.csv", ["trial", "gradient_s", "gauss_newton_s"], timing)
    nonconv = sum(not r[9] for r in rows)
    write_csv(d / "summary.csv", ["solver", "trials", "avg_error_pct", "avg_max_error_pct",
                                  "nonconverged"],
              [("gradient", cfg.trials, float(ga.mean()), float(np.mean([r[4] for r in rows])), 0),
               ("gauss-newton", cfg.trials, float(np.nanmean(na)),
                float(np.nanmean([r[7] for r in rows])), nonconv)])
    write_config(cfg, d)
    print(f"gradient {ga.mean():.4f}%  gauss-newton {np.nanmean(na):.4f}%  "
          f"gauss-newton non-converged {nonconv}/{cfg.trials}")
    return 0


def cmd_realtime(cfg, args):
    model = feeder_from(cfg)
    sm = build(model)
    if args.timeseries:
        scenarios = load_timeseries(model, args.timeseries, seed=cfg.seed)
    else:
        scenarios = diurnal_profile(model, args.ticks, seed=cfg.seed)
    placement = parse_meters(cfg.meters)
    meters = trial_meters(model, placement, cfg.seed)
    noise = NoisePolicy(cfg.sigma_v, cfg.sigma_rel, sigma_basis="nominal")
    eps = cfg.eps if cfg.eps == "auto" else float(cfg.eps)
    recs, cc = run_realtime(model, sm, scenarios, noise, meters, cfg.feedback, eps)
    n_sample = min(5, model.n_state)
    sample = np.linspace(0, model.n_state - 1, n_sample).round().astype(int)
    labels = [f"{model.state_index[k][0]}{'abc'[model.state_index[k][1]]}" for k in sample]
    header = ["tick", "avg_error_pct", "max_error_pct", "run_avg_pct", "run_max_pct"]
    header += [f"vtrue_{x}" for x in labels] + [f"vest_{x}" for x in labels]
    rows = [(r.t, r.avg_error, r.max_error, r.run_avg, r.run_max, *r.v_true[sample], *r.v_est[sample])
            for r in recs]
    d = out_dir(cfg)
    write_csv(d / "realtime.csv", header, rows)
    write_csv(d / "timing.csv", ["tick", "wall_time_s"], [(r.t, r.wall) for r in recs])
    write_config(cfg, d, {"ticks": len(scenarios), "timeseries": args.timeseries,
                          "step_size": cc.eps})
    print(f"{len(recs)} ticks: running average error {recs[-1].run_avg:.4f}% "
          f"running average max {recs[-1].run_max:.4f}%")
    return 0


def cmd_observability(cfg, args):
    model = feeder_from(cfg)
    placement = parse_meters(cfg.meters)
    meters = trial_meters(model, placement, cfg.seed)
    ms = synthesize(model, model.p_nom, model.q_nom, cfg.noise(), meters=meters, seed=cfg.seed)
    pm, qm = ms.p_mask.copy(), ms.q_mask.copy()
    if args.pseudo in ("p-only", "none"):
        qm[:] = False
    if args.pseudo == "none":
        pm[:] = False
    for nid in args.drop or []:
        pm[model.entries_of([nid])] = False
    from dataclasses import replace
    ms = replace(ms, p_mask=pm, q_mask=qm)
    rep = build_H(model, ms, extra=tuple(args.extra or ()))
    d = out_dir(cfg)
    export_report(rep, d / "observability.json", d / "null_space.csv")
    write_config(cfg, d, {"pseudo": args.pseudo, "drop": args.drop, "extra": args.extra})
    print(f"rank {rep.rank} of {rep.n_state}: observability index {rep.index_percent:.2f}%")
    return 0


COMMANDS = {"generate": cmd_generate, "partition": cmd_partition, "estimate": cmd_estimate,
            "compare": cmd_compare, "realtime": cmd_realtime,
            "observability": cmd_observability}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--feeder", help="feeder JSON file or directory with nodes.csv/lines.csv")
    src.add_argument("--generate", help="generator spec, e.g. size=36,seed=7 or layout=37")
    common.add_argument("--roots", default="", help="comma-separated area root ids")
    common.add_argument("--meters", default="frac=0.05", help="frac=F | list=ID,... | none")
    common.add_argument("--sigma-v", type=float, default=0.01)
    common.add_argument("--sigma-rel", type=float, default=0.5)
    common.add_argument("--solver", choices=["gradient", "multiarea", "gauss-newton"],
                        default="gradient")
    common.add_argument("--feedback", choices=["linear", "nonlinear"], default="nonlinear")
    common.add_argument("--eps", default="auto")
    common.add_argument("--delta", type=float, default=1e-6)
    common.add_argument("--max-iters", type=int, default=500)
    common.add_argument("--trials", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./madsse-out)")
    p = argparse.ArgumentParser(prog="madsse", description="multi-area WLS state estimation")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("generate", "partition", "estimate", "compare"):
        sub.add_parser(name, parents=[common])
    rt = sub.add_parser("realtime", parents=[common])
    rt.add_argument("--timeseries", help="CSV with tick,node,phase,p,q[,vmag]")
    rt.add_argument("--ticks", type=int, default=3600, help="synthetic ticks if no file")
    ob = sub.add_parser("observability", parents=[common])
    ob.add_argument("--pseudo", choices=["all", "p-only", "none"], default="all")
    ob.add_argument("--drop", type=int, nargs="*", help="node ids losing their p pseudo channel")
    ob.add_argument("--extra", nargs="*", choices=["flows", "slack"])
    return p


def config_from(args):
    roots = [int(r) for r in filter(None, args.roots.split(","))]
    return RunConfig(feeder=args.feeder, generate=args.generate, roots=roots, meters=args.meters,
                     sigma_v=args.sigma_v, sigma_rel=args.sigma_rel, solver=args.solver,
                     feedback=args.feedback, eps=args.eps, delta=args.delta,
                     max_iters=args.max_iters, trials=args.trials, seed=args.seed, out=args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from(args)
        return COMMANDS[args.command](cfg, args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

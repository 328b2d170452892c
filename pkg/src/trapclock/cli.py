"""Command line interface and the configured experiment runner.

Exit codes: 0 success (or all checks passed), 1 a ``--check`` verdict
failed, 2 invalid arguments or configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import limits as lim
from . import randscape as rs
from . import rng as rngmod
from . import verify as ver
from .config import ConfigError, ExperimentConfig, resolve_bn

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


# ---------------------------------------------------------------------------
# experiment runner

def _fmt(x) -> str:
    return repr(float(x))


def _target_for(kind: str, abar: float, rho: float, s: float, prm, a: float):
    if kind == "arcsine":
        return lim.asl_cdf(abar, 1.0 / (1.0 + rho)) if rho == rho else None
    if kind == "stranded":
        return 1.0
    if kind == "stationary":
        return lim.stationary_correlation(prm, a, s)
    return None


def _row_pass(kind, ck, est, target):
    if kind == "arcsine":
        return abs(est.mean - target) < ck["tol"]
    if kind == "stranded":
        return est.mean >= ck["tol"]
    if kind == "stationary":
        return abs(est.mean - target) <= ck["tol"] * est.stderr + ck["systematic"]
    return None


def _stationary_pairs(rows, ck) -> bool:
    """Estimates at different t (same n, landscape, s) agree within the
    combined-error tolerance."""
    ok = True
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["n"], r["landscape"], r["s"]), []).append(r)
    for grp in groups.values():
        for i in range(len(grp)):
            for j in range(i + 1, len(grp)):
                x, y = grp[i], grp[j]
                tol = ck["tol"] * math.hypot(x["stderr"], y["stderr"]) + ck["systematic"]
                ok &= abs(x["mean"] - y["mean"]) <= tol
    return bool(ok)


def _limit_tail_for(cfg: ExperimentConfig, tail, prm):
    a, alpha = cfg.model["a"], cfg.model["alpha"]
    kind = cfg.limits["kind"]
    if kind == "auto":
        cls = cfg.scale["class"]
        if cls == "constant":
            kind = "cst_minus"
        elif cls == "intermediate":
            kind = "int_minus" if a < alpha else "delta_inf"
        else:
            kind = "ext_minus" if a < alpha else "ext_plus"
    if kind == "cst_minus":
        return lim.LevyTail.cst_minus(tail, a, cfg.scale["r"])
    if kind == "int_minus":
        return lim.LevyTail.int_minus(alpha, a, tail.moment(a))
    if kind == "delta_inf":
        return lim.LevyTail.delta_inf()
    if kind == "ext_minus":
        return lim.LevyTail.ext_minus(prm, a, tail.moment(a))
    if kind == "ext_plus":
        return lim.LevyTail.ext_plus(prm, a)
    raise ConfigError("limits.kind", f"unsupported kind {kind!r}")


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> dict:
    """Run the configured sweep and write the output bundle.

    Returns a dict with the written paths and the check verdict (None when no
    check is configured). Outputs depend only on the config, never on
    ``threads``.
    """
    out = Path(out_dir if out_dir is not None else cfg.data["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    m, sc, dy, ck = cfg.model, cfg.scale, cfg.dynamics, cfg.check
    alpha, a = float(m["alpha"]), float(m["a"])
    tail = cfg.tail()
    abar = lim.alpha_bar(alpha, a) if a < alpha else float("nan")
    master = cfg.master_seed
    kind = ck["kind"]
    fmts = cfg.data["output"]["formats"]
    written = {"config": str(out / "config.yaml")}
    (out / "config.yaml").write_text(cfg.to_yaml())

    all_rows, scales, prm_last = [], {}, None
    for n_idx, n in enumerate(m["n"]):
        bn = None if sc["class"] == "constant" else resolve_bn(sc["b_n"], n)
        scale = rs.space_scale(tail, sc["class"], b_n=bn, a=a, n=n, r=sc["r"])
        scales[str(n)] = scale.to_dict()
        csv_rows = []
        for r in range(dy["landscapes"]):
            prm = None
            if kind == "stationary" or sc["class"] == "extreme":
                g, prm = rs.lepage_landscape(n, tail, scale.r_n, seed=master, replica=r, tol=cfg.limits["prm_tol"])
                land = rs.lepage_to_landscape(g, tail, scale.r_n, prm.seed)
                prm_last = prm
            else:
                land = rs.sample_landscape(n, tail, master, replica=r)
            chain = dyn.build_chain(land, a, scale)
            for j, t in enumerate(dy["t"]):
                seq = np.random.SeedSequence(master, spawn_key=(rngmod.DYNAMICS, n_idx, r, j))
                D = dyn.first_passage(chain, dy["initial"], float(t), dy["replicas"], seq, threads)
                pairs = [(float(rho) * t, float(rho)) for rho in dy["rho"]]
                pairs += [(float(s), float(s) / t if t > 0 else float("nan")) for s in dy["s"]]
                for s, rho in pairs:
                    est = dyn.estimate_from_passage(D, float(t), s, land.landscape_id)
                    target = _target_for(kind, abar, rho, s, prm, a)
                    row = {"n": n, "landscape": r, "t": float(t), "s": s, "rho": rho, "mean": est.mean,
                           "stderr": est.stderr, "M": est.replicas, "target": target,
                           "pass": _row_pass(kind, ck, est, target)}
                    all_rows.append(row)
                    csv_rows.append({
                        "n": n, "alpha": alpha, "a": a, "scale_class": sc["class"],
                        "b_n": "" if bn is None else bn, "t": _fmt(t), "rho": _fmt(rho) if rho == rho else "",
                        "mean": _fmt(est.mean), "stderr": _fmt(est.stderr), "M": est.replicas,
                        "landscape_seed": f"{master}/{r}",
                    })
        if "csv" in fmts:
            p = out / f"corr_n{n}.csv"
            p.write_text(dyn.write_correlation_csv(csv_rows))
            written[f"csv_n{n}"] = str(p)
        p = out / f"plot_n{n}.dat"
        p.write_text(_plot_data([r for r in all_rows if r["n"] == n]))
        written[f"plot_n{n}"] = str(p)

    limit_rows = []
    if cfg.limits["kind"] and cfg.limits["replicas"] > 0:
        ltail = _limit_tail_for(cfg, tail, prm_last)
        delay = lim.stationary_delay(prm_last, a) if dy["initial"] == "gibbs" and prm_last is not None else None
        for j, t in enumerate(dy["t"]):
            seq = np.random.SeedSequence(master, spawn_key=(rngmod.LIMIT, j))
            pairs = [(float(rho) * t, float(rho)) for rho in dy["rho"]] + \
                    [(float(s), float(s) / t if t > 0 else float("nan")) for s in dy["s"]]
            for s, rho in pairs:
                est = lim.limit_correlation(ltail, delay, float(t), s, cfg.limits["replicas"], seq,
                                            eps=cfg.limits["eps"], threads=threads)
                limit_rows.append({"n": "", "alpha": alpha, "a": a, "scale_class": "limit", "b_n": "",
                                   "t": _fmt(t), "rho": _fmt(rho) if rho == rho else "", "mean": _fmt(est.mean),
                                   "stderr": _fmt(est.stderr), "M": est.replicas, "landscape_seed": ""})
        if "csv" in fmts:
            p = out / "corr_limit.csv"
            p.write_text(dyn.write_correlation_csv(limit_rows))
            written["csv_limit"] = str(p)

    verdict = None
    if kind != "none":
        verdict = all(r["pass"] for r in all_rows)
        if kind == "stationary":
            verdict = verdict and _stationary_pairs(all_rows, ck)
    report = {"schema_version": SCHEMA_VERSION, "name": cfg.name, "config": cfg.data, "scales": scales,
              "rows": all_rows, "limit_rows": limit_rows, "check": {"kind": kind, "verdict": verdict}}
    if "json" in fmts:
        p = out / "report.json"
        p.write_text(json.dumps(ver._plain(report), indent=1, sort_keys=True))
        written["json"] = str(p)
    p = out / "plot.gp"
    p.write_text(_gnuplot_script([n for n in m["n"]], kind))
    written["gnuplot"] = str(p)
    return {"paths": written, "verdict": verdict, "rows": all_rows}


def _plot_data(rows) -> str:
    lines = ["# landscape t s rho mean stderr target"]
    for r in rows:
        tgt = "nan" if r["target"] is None else _fmt(r["target"])
        lines.append(" ".join([str(r["landscape"]), _fmt(r["t"]), _fmt(r["s"]), _fmt(r["rho"]), _fmt(r["mean"]),
                               _fmt(r["stderr"]), tgt]))
    return "\n".join(lines) + "\n"


def _gnuplot_script(ns, kind) -> str:
    lines = ["set xlabel 'rho'", "set ylabel 'C(t, rho t)'", "set key left bottom"]
    parts = []
    for n in ns:
        parts.append(f"'plot_n{n}.dat' using 4:5:6 with yerrorbars title 'n={n}'")
        if kind != "none":
            parts.append(f"'plot_n{n}.dat' using 4:7 with lines title 'target n={n}'")
    lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# output helpers

def _emit(rows: list[dict], fmt: str, out, value_key: str | None = None) -> None:
    if fmt == "json":
        text = json.dumps(ver._plain(rows), indent=1, sort_keys=True) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        text = buf.getvalue()
    else:
        if value_key is not None:
            text = "".join(f"{r[value_key]!r}\n" if isinstance(r[value_key], float) else f"{r[value_key]}\n"
                           for r in rows)
        else:
            text = "".join(" ".join(f"{k}={_short(v)}" for k, v in r.items()) + "\n" for r in rows)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _short(v):
    return f"{v:.12g}" if isinstance(v, float) else v


def _tail_from_args(args) -> rs.TailSpec:
    if getattr(args, "tau_const", None) is not None:
        return rs.TailSpec.degenerate(args.tau_const)
    return rs.TailSpec.pareto(args.alpha, args.x_min)


def _scale_from_args(args, tail, n):
    bn = args.bn
    if args.scale_class == "extreme" and bn is None:
        bn = n
    if args.scale_class == "intermediate" and bn is None and n is not None:
        bn = math.ceil(math.sqrt(n))
    return rs.space_scale(tail, args.scale_class, b_n=bn if args.scale_class != "constant" else None, a=args.a,
                          n=n, r=args.r)


def _model_from_args(args):
    """(tail, scale, landscape, prm); extreme scales use the coupled construction."""
    tail = _tail_from_args(args)
    scale = _scale_from_args(args, tail, args.n)
    seed = args.landscape_seed if getattr(args, "landscape_seed", None) is not None else args.seed
    prm = None
    if args.scale_class == "extreme" and tail.kind != "degenerate":
        g, prm = rs.lepage_landscape(args.n, tail, scale.r_n, seed=seed)
        land = rs.lepage_to_landscape(g, tail, scale.r_n, prm.seed)
    else:
        land = rs.sample_landscape(args.n, tail, seed)
    return tail, scale, land, prm


# ---------------------------------------------------------------------------
# subcommands

def cmd_landscape_gen(args):
    tail = _tail_from_args(args)
    land = rs.sample_landscape(args.n, tail, args.seed)
    if args.format == "csv":
        _emit([{"x": i, "tau": float(v)} for i, v in enumerate(land.tau)], "csv", args.out)
    else:
        text = land.to_json(args.out) if args.out else land.to_json()
        if not args.out:
            sys.stdout.write(text + "\n")
    return EXIT_OK


def cmd_scale_solve(args):
    tail = _tail_from_args(args)
    sc = _scale_from_args(args, tail, args.n)
    d = sc.to_dict()
    _emit([{"class": d["class"], "b_n": d["b_n"], "r_n": d["r_n"], "c_n": d["c_n"], "a_n": d["a_n"], "a": d["a"]}],
          args.format, args.out)
    return EXIT_OK


def cmd_simulate_corr(args):
    tail, scale, land, _ = _model_from_args(args)
    chain = dyn.build_chain(land, args.a, scale)
    initial = int(args.initial) if args.initial.isdigit() else args.initial
    rows = []
    for j, t in enumerate(args.t):
        seq = np.random.SeedSequence(args.seed, spawn_key=(rngmod.DYNAMICS, 0, 0, j))
        D = dyn.first_passage(chain, initial, t, args.replicas, seq, args.threads)
        svals = [(s, s / t if t > 0 else float("nan")) for s in (args.s or [])]
        svals += [(rho * t, rho) for rho in (args.rho or [])]
        for s, rho in svals:
            est = dyn.estimate_from_passage(D, t, s, land.landscape_id)
            rows.append({"n": args.n, "alpha": tail.alpha if tail.kind != "degenerate" else "",
                         "a": args.a, "scale_class": scale.scale_class,
                         "b_n": "" if scale.b_n is None else scale.b_n, "t": t, "rho": rho, "mean": est.mean,
                         "stderr": est.stderr, "M": est.replicas, "landscape_seed": land.landscape_id})
    _emit(rows, args.format, args.out)
    return EXIT_OK


def _levy_from_args(args):
    k = args.kind
    if k == "stable":
        return lim.LevyTail.stable(args.abar, args.kappa)
    tail = _tail_from_args(args)
    if k == "cst_minus":
        return lim.LevyTail.cst_minus(tail, args.a, args.r)
    if k == "int_minus":
        return lim.LevyTail.int_minus(args.alpha, args.a, tail.moment(args.a))
    if k == "delta_inf":
        return lim.LevyTail.delta_inf()
    prm = rs.prm_points(args.alpha, args.K, seed=args.seed)
    if k == "ext_minus":
        return lim.LevyTail.ext_minus(prm, args.a, tail.moment(args.a))
    return lim.LevyTail.ext_plus(prm, args.a)


def cmd_limits_asl(args):
    rows = [{"u": u, "cdf": lim.asl_cdf(args.alpha, u)} for u in args.u]
    _emit(rows, args.format, args.out, value_key="cdf")
    return EXIT_OK


def cmd_limits_tail(args):
    lt = _levy_from_args(args)
    rows = [{"u": u, "nu": float(lt.survival(u))} for u in args.u]
    _emit(rows, args.format, args.out, value_key="nu")
    return EXIT_OK


def cmd_limits_sample(args):
    lt = _levy_from_args(args)
    gen = rngmod.generator(args.seed, rngmod.LIMIT)
    if args.k_max is not None:
        path = lim.simulate_renewal(lt, args.k_max, gen)
        rows = [{"k": int(k), "size": float(x), "value": float(v)}
                for k, x, v in zip(path.indices, path.sizes, path.values)]
    else:
        eps = args.eps if args.eps is not None else 1e-4
        path = lim.simulate_subordinator(lt, args.T, eps, gen)
        rows = [{"time": float(t), "size": float(x), "value": float(v)}
                for t, x, v in zip(path.times, path.sizes, path.values)]
    _emit(rows, args.format, args.out)
    return EXIT_OK


def cmd_verify_conditions(args):
    tail, scale, land, prm = _model_from_args(args)
    chain = dyn.build_chain(land, args.a, scale)
    alpha = tail.alpha
    if scale.scale_class == "constant":
        target = lim.LevyTail.cst_minus(tail, args.a, scale.r_n)
    elif scale.scale_class == "intermediate":
        target = lim.LevyTail.int_minus(alpha, args.a, tail.moment(args.a)) if args.a < alpha \
            else lim.LevyTail.delta_inf()
    else:
        target = lim.LevyTail.ext_minus(prm, args.a, tail.moment(args.a)) if args.a < alpha \
            else lim.LevyTail.ext_plus(prm, args.a)
    initial = args.initial
    if initial == "gibbs" and prm is not None:
        a0_target = lim.stationary_delay(prm, args.a)
    elif scale.a_n > 1:
        a0_target = "zero"
    else:
        a0_target = target
    reports = [
        ver.check_condition_A0(chain, initial, a0_target, args.v, args.tol),
        ver.check_condition_A1(chain, target, args.t, args.u, args.tol),
        ver.check_condition_A2(chain, args.t, args.u, args.tol),
        ver.check_condition_A3(chain, args.delta),
    ]
    if args.format == "json":
        _emit([r.to_dict() for r in reports], "json", args.out)
    elif args.format == "csv":
        _emit([{"condition": r.condition, "max_deviation": r.max_deviation, "tol": r.tol,
                "verdict": "" if r.verdict is None else r.verdict} for r in reports], "csv", args.out)
    else:
        text = "\n".join(r.summary() for r in reports) + "\n"
        Path(args.out).write_text(text) if args.out else sys.stdout.write(text)
    if args.check and any(r.verdict is False for r in reports):
        return EXIT_CHECK
    return EXIT_OK


def cmd_experiment_run(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.data["seeds"]["master"] = int(args.seed)
    if args.format is not None:
        cfg.data["output"]["formats"] = [args.format]
    res = run_experiment(cfg, args.out, threads=args.threads)
    v = res["verdict"]
    sys.stdout.write(f"{cfg.name}: wrote {len(res['paths'])} files; check verdict: "
                     f"{'n/a' if v is None else ('PASS' if v else 'FAIL')}\n")
    if args.check and v is False:
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _common(p, default_format="text", formats=("text", "csv", "json"), seed_default=0):
    p.add_argument("--seed", type=int, default=seed_default, help="master seed")
    p.add_argument("--out", default=None, help="output file (stdout if omitted)")
    p.add_argument("--format", choices=formats, default=default_format)


def _model_args(p, class_default="constant", n_default=1):
    p.add_argument("--n", type=int, default=n_default)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--x-min", type=float, default=1.0)
    p.add_argument("--tau-const", type=float, default=None, help="degenerate landscape with this depth")
    p.add_argument("--class", dest="scale_class", choices=("constant", "intermediate", "extreme"),
                   default=class_default)
    p.add_argument("--bn", type=float, default=None, help="auxiliary sequence b_n")
    p.add_argument("--r", type=float, default=1.0, help="space scale for the constant class")
    p.add_argument("--landscape-seed", type=int, default=None)


def _levy_args(p):
    p.add_argument("--kind", choices=lim.KINDS[:5] + ("delta_inf",), required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--x-min", type=float, default=1.0)
    p.add_argument("--tau-const", type=float, default=None)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--abar", type=float, default=0.5)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--K", type=int, default=10000, help="number of PRM atoms for the ext kinds")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trapclock", description="Trap-model clock simulation and checks.")
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("landscape").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("gen", help="sample a landscape")
    _common(p, "json", ("csv", "json"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--x-min", type=float, default=1.0)
    p.add_argument("--tau-const", type=float, default=None)
    p.set_defaults(func=cmd_landscape_gen)

    g = sub.add_parser("scale").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("solve", help="space, time and index scales")
    _common(p)
    _model_args(p, class_default="intermediate", n_default=None)
    p.set_defaults(func=cmd_scale_solve)

    g = sub.add_parser("simulate").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("corr", help="Monte Carlo correlation estimate")
    _common(p)
    _model_args(p)
    p.add_argument("--initial", default="pi")
    p.add_argument("--t", type=float, nargs="+", required=True)
    p.add_argument("--s", type=float, nargs="+")
    p.add_argument("--rho", type=float, nargs="+")
    p.add_argument("--replicas", type=int, default=10000)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_simulate_corr)

    g = sub.add_parser("limits").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("asl", help="generalized arcsine distribution function")
    _common(p)
    p.add_argument("--alpha", type=float, required=True, help="arcsine index")
    p.add_argument("--u", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_limits_asl)
    p = g.add_parser("tail", help="evaluate nu(u, inf)")
    _common(p)
    _levy_args(p)
    p.add_argument("--u", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_limits_tail)
    p = g.add_parser("sample", help="simulate a subordinator (--T) or renewal process (--k-max)")
    _common(p, "csv")
    _levy_args(p)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.set_defaults(func=cmd_limits_sample)

    g = sub.add_parser("verify").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("conditions", help="evaluate conditions A0 to A3 for one chain")
    _common(p)
    _model_args(p, class_default="intermediate")
    p.add_argument("--initial", default="pi")
    p.add_argument("--t", type=float, nargs="+", default=[1.0])
    p.add_argument("--u", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    p.add_argument("--v", type=float, nargs="+", default=[0.0, 0.1, 1.0])
    p.add_argument("--delta", type=float, nargs="+", default=[0.01, 0.1, 1.0])
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=cmd_verify_conditions)

    g = sub.add_parser("experiment").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("run", help="run a configured experiment")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--check", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_experiment_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

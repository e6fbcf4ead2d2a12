"""Command-line entry point: ``cellharq {dlt-curve,qq,simulate,rate-opt}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cfmath import Approx, QuadratureError
from .config import ConfigError, load
from .dlt import dlt_curve, dlt_table, optimize_rate, write_rows
from .policies import rs_avg_x
from .sim import (
    QQ_COLUMNS,
    SUMMARY_COLUMNS,
    TRIAL_COLUMNS,
    BisectionError,
    ScenarioConfig,
    SingleLinkConfig,
    empirical_effective_sinr,
    qq_data,
    run_scenario,
    single_link_dlt_sim,
)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
CURVE_COLUMNS = ["approx", "R", "S_R", "n_max"]
DECISION_COLUMNS = ["r", "alpha", "approx", "r_star", "s_at_r_star"]


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


class Output:
    def __init__(self, out_dir, fmt):
        self.dir = Path(out_dir)
        self.fmt = fmt
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def table(self, name, columns, rows):
        rows = list(rows)
        path = self.dir / f"{name}.{self.fmt}"
        if self.fmt == "csv":
            write_rows(path, columns, rows)
        else:
            path.write_text(json.dumps([{c: r.get(c) for c in columns} for r in rows], indent=1)
                            + "\n")
        self.files.append(path)
        return path


def _link(cfg, r, alpha=None):
    try:
        return SingleLinkConfig(topology=cfg.topology(alpha), r=r, theta=cfg["sim.theta"],
                                rho=cfg.rho, w0_mag2=cfg["channel.w0_mag2"],
                                n_max=cfg["dlt.n_max"])
    except ValueError as exc:
        raise ConfigError(f"sim.r: {exc}") from None


def cmd_dlt_curve(cfg, seed, out: Output):
    q, search, n_max = cfg.quadrature, cfg.search, cfg["dlt.n_max"]
    rates = search.grid
    decisions = []
    for i, r in enumerate(cfg["sim.r"]):
        for j, alpha in enumerate(cfg["geometry.alpha"]):
            link = _link(cfg, r, alpha)
            rows = []
            for kind in (Approx.GA, Approx.IPLA):
                spec = link.spec(kind)
                rows += list(dlt_curve(spec, rates, n_max, q).rows())
                d = optimize_rate(spec, n_max, q, search)
                decisions.append({"r": r, "alpha": alpha, "approx": kind.value,
                                  "r_star": d.r_star, "s_at_r_star": d.s_at_r_star})
            avg = rs_avg_x(link.model())
            decisions.append({"r": r, "alpha": alpha, "approx": "avgx", "r_star": avg.r_source,
                              "s_at_r_star": ""})
            rng = _rng(seed, i, j)
            gains = rng.standard_exponential((cfg["sim.processes"], n_max, link.model().K))
            for dominant in (None, 3):
                sim = single_link_dlt_sim(link, rates, None, None, dominant=dominant, paths=gains)
                rows += [{"approx": sim.variant, "R": float(x), "S_R": float(v), "n_max": n_max}
                         for x, v in zip(sim.rates, sim.mean)]
                if dominant is None:
                    k = int(np.argmax(sim.mean))
                    decisions.append({"r": r, "alpha": alpha, "approx": "exact_grid",
                                      "r_star": float(rates[k]), "s_at_r_star": float(sim.mean[k])})
            out.table(f"dlt_r{r:g}_alpha{alpha:g}", CURVE_COLUMNS, rows)
    out.table("rate_decisions", DECISION_COLUMNS, decisions)


def cmd_qq(cfg, seed, out: Output):
    q, n_max = cfg.quadrature, cfg["dlt.n_max"]
    link = _link(cfg, cfg["sim.link_r"])
    ns = cfg["sim.n"] or tuple(range(1, n_max + 1))
    m = cfg["sim.quantiles"]
    probs = np.arange(1, m + 1) / (m + 1)
    rows = []
    for n in ns:
        samples = empirical_effective_sinr(link, n, cfg["sim.samples"], _rng(seed, n))
        for a in cfg["sim.approx"]:
            rows += list(qq_data(samples, link.spec(Approx(a), n), probs, q).rows())
    out.table("qq", QQ_COLUMNS, rows)


def cmd_simulate(cfg, seed, out: Output):
    topo = cfg.topology()
    trial_rows, summary = [], []
    for n_users in cfg["sim.users"]:
        for policy in cfg.policies:
            sc = ScenarioConfig(topology=topo, n_users=n_users, user_radii=cfg["sim.user_radii"],
                                n_max=cfg["dlt.n_max"], rho=cfg.rho, policy=policy,
                                horizon=cfg["sim.horizon"], trials=cfg["sim.trials"], seed=seed,
                                t_c=cfg["mac.t_c"], delta=cfg["policies.delta"],
                                pf_mode=cfg["mac.pf_update"], quadrature=cfg.quadrature,
                                search=cfg.search)
            engine = None
            if policy.expected_throughput:
                order = 1 if policy.approx is Approx.GA else topo.K
                engine = dlt_table(order, sc.n_max, sc.quadrature, sc.search)
            rep = run_scenario(sc, engine)
            trial_rows += list(rep.trial_rows())
            summary.append(rep.summary_row())
            print(f"N={n_users:3d} {policy.value:6s} system_dlt={rep.system_dlt:.4f}"
                  f" +/- {rep.system_dlt_ci:.4f}  fairness={rep.fairness:.3f}"
                  f" +/- {rep.fairness_ci:.3f}", file=sys.stderr)
    out.table("results", TRIAL_COLUMNS, trial_rows)
    out.table("summary", SUMMARY_COLUMNS, summary)


def cmd_rate_opt(cfg, seed, out: Output, dump_curve=False):
    q, search, n_max = cfg.quadrature, cfg.search, cfg["dlt.n_max"]
    link = _link(cfg, cfg["sim.link_r"])
    rows = []
    for a in cfg["sim.approx"]:
        spec = link.spec(Approx(a))
        d = optimize_rate(spec, n_max, q, search)
        flags = ";".join(f for f, on in (("rate_cap", d.capped), ("non_unimodal", not d.unimodal))
                         if on)
        rows.append({"approx": a, "r": link.r, "r_star": d.r_star, "s_at_r_star": d.s_at_r_star,
                     "search_resolution": d.search_resolution, "flags": flags})
        print(f"{a}: R* = {d.r_star:.4f} bit/s/Hz, S(R*) = {d.s_at_r_star:.4f} bit/s/Hz")
        if dump_curve:
            out.table(f"curve_{a}_r{link.r:g}", CURVE_COLUMNS,
                      dlt_curve(spec, search.grid, n_max, q).rows())
    out.table("rate_opt", ["approx", "r", "r_star", "s_at_r_star", "search_resolution", "flags"],
              rows)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file (a previous manifest works)")
    common.add_argument("--seed", type=int, help="root seed (default 0)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--n-max", dest="dlt.n_max")
    common.add_argument("--rho-db", dest="channel.rho_db")

    p = argparse.ArgumentParser(prog="cellharq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("dlt-curve", parents=[common], help="analytical and simulated DLT curves")
    c.add_argument("--r", dest="sim.r", help="user distances, comma separated (m)")
    c.add_argument("--alpha", dest="geometry.alpha", help="path-loss exponents, comma separated")
    c.add_argument("--theta", dest="sim.theta")
    c.add_argument("--processes", dest="sim.processes", help="HARQ processes per rate")
    c.add_argument("--r-max", dest="dlt.r_max")
    c.add_argument("--step", dest="dlt.step")

    c = sub.add_parser("qq", parents=[common], help="Q-Q data of GA/IPLA against Monte Carlo")
    c.add_argument("--samples", dest="sim.samples")
    c.add_argument("--approx", dest="sim.approx", help="ga, ipla or both")
    c.add_argument("--n", dest="sim.n", help="attempt counts, comma separated")
    c.add_argument("--r", dest="sim.link_r", help="user distance (m)")
    c.add_argument("--theta", dest="sim.theta")
    c.add_argument("--quantiles", dest="sim.quantiles", help="number of probability levels")

    c = sub.add_parser("simulate", parents=[common], help="system-level policy comparison")
    c.add_argument("--users", dest="sim.users", help="user counts, comma separated")
    c.add_argument("--policies", dest="policies.policies")
    c.add_argument("--horizon", dest="sim.horizon", help="slots per trial")
    c.add_argument("--trials", dest="sim.trials")
    c.add_argument("--t-c", dest="mac.t_c")
    c.add_argument("--pf-update", dest="mac.pf_update")
    c.add_argument("--delta", dest="policies.delta")

    c = sub.add_parser("rate-opt", parents=[common], help="single rate decision")
    c.add_argument("--approx", dest="sim.approx")
    c.add_argument("--r", dest="sim.link_r", help="user distance (m)")
    c.add_argument("--theta", dest="sim.theta")
    c.add_argument("--alpha", dest="geometry.alpha")
    c.add_argument("--dump-curve", action="store_true")
    return p


COMMANDS = {"dlt-curve": cmd_dlt_curve, "qq": cmd_qq, "simulate": cmd_simulate,
            "rate-opt": cmd_rate_opt}


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if "." in k and v is not None}
    try:
        cfg, manifest_seed = load(args.config, overrides)
        seed = args.seed if args.seed is not None else (manifest_seed or 0)
        out = Output(args.out, args.format)
        (out.dir / "manifest.ini").write_text(cfg.to_ini(args.command, seed))
        if args.command == "rate-opt":
            cmd_rate_opt(cfg, seed, out, args.dump_curve)
        else:
            COMMANDS[args.command](cfg, seed, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, BisectionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    grantfree analytic  --n 40 --b 48 --lambda-per-s 5 --model full
    grantfree simulate  --n 40 --b 48 --lambda-per-s 5 --packets-min 1e7
    grantfree size      --n-list 40,60,80,100 --model full
    grantfree dynamic   --n-bar 60 --p-leave 2.3e-6 --auto-table --packets-min 1e8
    grantfree compare   --n 40 --b 48 --lambda-per-s 5 --packets-min 1e7
    grantfree replay    out/analytic_manifest.json

Flags use physical units (packets/s, dBm, dB); everything internal is in
TTIs. Every command writes a ``<prefix>_manifest.json`` holding the
resolved parameters and SHA-256 digests of its outputs. Exit codes: 0 ok,
2 modeled outcome (no fixed point, unstable, infeasible, table miss),
1 usage or internal error. Errors are also printed to stderr as JSON.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import shutil
import sys
import tempfile

import numpy as np

from . import __version__
from .errors import ConfigError, GrantFreeError, ModelError
from .params import TTIS_PER_SECOND, ChannelParams, SystemParams

MODEL_CHOICES = ("full", "no-1pr", "no-queue")


# ------------------------------------------------------------------ parsing

def _common(p: argparse.ArgumentParser, need_b: bool = True) -> None:
    p.add_argument("--config", help="flat key = value file or a previous manifest (flags override it)")
    g = p.add_argument_group("system")
    g.add_argument("--n", type=int, help="number of UEs")
    if need_b:
        g.add_argument("--b", type=int, help="number of RBs per TTI")
    g.add_argument("--lambda-per-s", type=float, default=5.0, help="packets/s per UE (default 5)")
    g.add_argument("--mu-db", type=float, default=4.0, help="SINR threshold in dB (default 4)")
    g.add_argument("--noise-dbm", type=float, default=-112.0, help="noise power (default -112)")
    g.add_argument("--power-dbm", type=float, default=-60.0, help="mean received power (default -60)")
    g.add_argument("--ttis-per-s", type=float, default=TTIS_PER_SECOND, help="TTIs per second (default 7000)")
    o = p.add_argument_group("output")
    o.add_argument("--out-dir", default=".", help="output directory (default .)")
    o.add_argument("--prefix", help="file name prefix (default: command name)")
    o.add_argument("--plot", action="store_true", help="also render PNG figures")


def _sim_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("simulation")
    g.add_argument("--packets-min", type=float, help="target delivered packets (sets the horizon)")
    g.add_argument("--horizon-ttis", type=int, help="simulated TTIs including warm-up")
    g.add_argument("--warmup-ttis", type=int, default=100_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--replications", type=int, default=1)
    g.add_argument("--workers", type=int, default=None, help="processes for replications (default: CPUs)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="grantfree", description="Grant-free URLLC access: delay model, simulator and RB sizing.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="analytic delay CCDF and outage")
    _common(p)
    p.add_argument("--model", choices=MODEL_CHOICES, default="full")
    p.add_argument("--grid-step", type=float, default=0.01, help="CCDF grid in TTIs (default 0.01)")
    p.add_argument("--t-max", type=float, help="last grid point in TTIs (default: automatic)")
    p.add_argument("--threshold-tti", type=float, default=7.0)
    p.add_argument("--attempt-rates", action="store_true", help="also solve the full retransmission chain")

    p = sub.add_parser("simulate", help="discrete-event simulation")
    _common(p)
    _sim_flags(p)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--raw", action="store_true", help="export per-packet delays")
    p.add_argument("--raw-limit", type=int, default=1_000_000, help="max packets in the raw export")

    p = sub.add_parser("size", help="minimum B per N meeting the outage target")
    _common(p, need_b=False)
    p.add_argument("--n-list", default="40,60,80,100", help="comma list or a:b range (inclusive)")
    p.add_argument("--model", choices=MODEL_CHOICES + ("simulation",), default="full")
    p.add_argument("--target", type=float, default=1e-5)
    p.add_argument("--threshold-tti", type=float, default=7.0)
    p.add_argument("--b-init", type=int, default=1)
    p.add_argument("--b-step", type=int, default=8)
    p.add_argument("--b-max", type=int, default=500)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="simulation model only")
    p.add_argument("--sim-max-packets", type=float, default=1e9, help="simulation model only")

    p = sub.add_parser("dynamic", help="UE churn with table-driven B")
    _common(p, need_b=False)
    _sim_flags(p)
    p.add_argument("--n-bar", type=int, required=False)
    p.add_argument("--p-leave", type=float, default=2.3e-6, help="per-TTI leave probability")
    p.add_argument("--table", help="CSV with n_ues,b_star columns (e.g. from `size`)")
    p.add_argument("--auto-table", action="store_true", help="build the table analytically")
    p.add_argument("--table-model", choices=MODEL_CHOICES, default="full")
    p.add_argument("--target", type=float, default=1e-5)

    p = sub.add_parser("compare", help="analytic vs simulated (or another model's) CCDF")
    _common(p)
    _sim_flags(p)
    p.add_argument("--model", choices=MODEL_CHOICES, default="full")
    p.add_argument("--against", choices=("simulation",) + MODEL_CHOICES, default="simulation")
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--min-prob", type=float, default=1e-5, help="gap summary over ccdf >= this")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", help="output directory (default: the manifest's)")
    return ap


def read_config(path: str) -> dict:
    """Parse a flat ``key = value`` file, or take the parameters of a manifest."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return dict(data.get("parameters", data))
    out = {}
    for i, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def _apply_config(sp: argparse.ArgumentParser, cfg: dict) -> None:
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, val in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest in ("config", "command", "help"):
            continue
        if dest not in actions:
            raise ConfigError(f"unknown config key {key!r}")
        act = actions[dest]
        if isinstance(val, str):
            if isinstance(act, argparse._StoreTrueAction):
                val = val.lower() in ("1", "true", "yes", "on")
            elif act.type is not None:
                val = act.type(val)
        defaults[dest] = val
    sp.set_defaults(**defaults)


def parse(argv) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        sp = ap._subparsers._group_actions[0].choices[args.command]
        _apply_config(sp, read_config(args.config))
        args = ap.parse_args(argv)
    return args


# ------------------------------------------------------------------ helpers

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Outputs:
    """Stage files in a temp dir; publish them (plus a manifest) only on success."""

    def __init__(self, args):
        self.out_dir = args.out_dir
        self.prefix = args.prefix or args.command
        os.makedirs(self.out_dir, exist_ok=True)
        self.stage = tempfile.mkdtemp(prefix=".stage-", dir=self.out_dir)
        self.files: list = []

    def path(self, suffix: str) -> str:
        name = f"{self.prefix}_{suffix}"
        self.files.append(name)
        return os.path.join(self.stage, name)

    def publish(self, manifest: dict) -> list:
        manifest["outputs"] = {f: _sha256(os.path.join(self.stage, f)) for f in self.files}
        _dump(manifest, self.path("manifest.json"))
        published = []
        for f in self.files:
            dst = os.path.join(self.out_dir, f)
            os.replace(os.path.join(self.stage, f), dst)
            published.append(dst)
        self.discard()
        return published

    def discard(self) -> None:
        shutil.rmtree(self.stage, ignore_errors=True)


def _parameters(args) -> dict:
    skip = {"config", "command", "out_dir", "prefix"}
    return {k.replace("_", "-"): v for k, v in sorted(vars(args).items()) if k not in skip}


def _manifest(args, sys_params=None, ch=None, seeds=None, extra=None) -> dict:
    m = {
        "command": args.command,
        "parameters": _parameters(args),
        "tool": {"name": "grantfree", "version": __version__, "python": platform.python_version(),
                 "numpy": np.__version__},
    }
    derived = {}
    if sys_params is not None:
        derived["lambda_tti"] = sys_params.lambda_tti
    if ch is not None:
        derived.update(rho=ch.rho, mu=ch.mu)
    if derived:
        m["derived"] = derived
    if seeds is not None:
        m["seeds"] = list(seeds)
    if extra:
        m.update(extra)
    return m


def _channel(args) -> ChannelParams:
    return ChannelParams(args.noise_dbm, args.power_dbm, args.mu_db)


def _system(args, n=None, b=None) -> SystemParams:
    n = args.n if n is None else n
    b = getattr(args, "b", None) if b is None else b
    if n is None:
        raise ConfigError("--n is required")
    if b is None:
        raise ConfigError("--b is required")
    return SystemParams(n, b, args.lambda_per_s, args.ttis_per_s)


def _model_key(m: str) -> str:
    return m.replace("-", "_")


def _analytic_dist(model: str, sys_p, ch, grid_step, t_max=None):
    from .delay import delay_distribution, delay_no_1pr, delay_no_queue, no_1pr_solution, solve_simplified

    if model == "no-1pr":
        return no_1pr_solution(sys_p, ch), delay_no_1pr(sys_p, ch, grid_step, t_max)
    sol = solve_simplified(sys_p, ch)
    if model == "no-queue":
        return sol, delay_no_queue(sol, grid_step, t_max)
    return sol, delay_distribution(sol, sys_p, grid_step, t_max)


def _sim_config(args, sys_p, ch, n_for_rate=None, dynamic=None, record_limit=0):
    from .des import SimConfig, horizon_for_packets

    if args.horizon_ttis is None and args.packets_min is None:
        raise ConfigError("give --packets-min or --horizon-ttis")
    if args.replications < 1:
        raise ConfigError("--replications must be >= 1")
    if args.horizon_ttis is not None:
        horizon = args.horizon_ttis
    else:
        per_rep = args.packets_min / args.replications
        span = horizon_for_packets(per_rep, n_for_rate or sys_p.n_ues, sys_p.lambda_tti, 0)
        horizon = args.warmup_ttis + span
    return SimConfig(sys_p, ch, horizon, args.warmup_ttis, args.seed, dynamic, record_limit)


def _simulate(config, args):
    from .des import replication_seeds, run_replications

    stats = run_replications(config, args.replications, args.workers)
    return stats, replication_seeds(config.seed, args.replications)


# ------------------------------------------------------------------ commands

def cmd_analytic(args) -> int:
    from .delay import outage

    sys_p, ch = _system(args), _channel(args)
    sol, dist = _analytic_dist(args.model, sys_p, ch, args.grid_step, args.t_max)
    summary = sol.summary()
    summary.update(model=args.model, outage_1ms=outage(dist, args.threshold_tti),
                   threshold_tti=args.threshold_tti, utilization=sol.utilization,
                   t_max_tti=dist.t_max, truncation_error=dist.truncation_error)
    if args.attempt_rates:
        from .attempt import solve_full_chain

        fc = solve_full_chain(sys_p, ch)
        summary["full_chain"] = {
            "g_f": fc.g_f, "g_r": fc.g_r[:8], "p_f": fc.p_f, "p_r": fc.p_r[:8], "alpha": fc.alpha,
            "transmitters_per_tti": fc.transmitters_per_tti(sys_p.n_ues), "iterations": fc.iterations,
        }
    out = Outputs(args)
    try:
        dist.write_csv(out.path("ccdf.csv"), sys_p.ttis_per_second)
        _dump(summary, out.path("summary.json"))
        if args.plot:
            from .report import plot_ccdfs

            plot_ccdfs([(args.model, dist)], out.path("ccdf.png"), sys_p.ttis_per_second,
                       threshold_tti=args.threshold_tti, title=f"N={sys_p.n_ues}, B={sys_p.n_rbs}")
        files = out.publish(_manifest(args, sys_p, ch))
    except BaseException:
        out.discard()
        raise
    _report(summary, files)
    return 0


def cmd_simulate(args) -> int:
    from .des import empirical_ccdf

    sys_p, ch = _system(args), _channel(args)
    config = _sim_config(args, sys_p, ch, record_limit=args.raw_limit if args.raw else 0)
    stats, seeds = _simulate(config, args)
    summary = stats.summary()
    summary["horizon_ttis"] = config.horizon_ttis
    out = Outputs(args)
    try:
        if stats.n_delivered:
            empirical_ccdf(stats, args.grid_step).write_csv(out.path("ccdf.csv"), sys_p.ttis_per_second)
        else:
            print("no packets delivered; CCDF not written", file=sys.stderr)
        stats.write_histogram(out.path("hist.csv"))
        if args.raw:
            stats.write_raw(out.path("raw.csv"))
        _dump(summary, out.path("stats.json"))
        if args.plot and stats.n_delivered:
            from .report import plot_ccdfs

            plot_ccdfs([("simulation", empirical_ccdf(stats, args.grid_step))], out.path("ccdf.png"),
                       sys_p.ttis_per_second, title=f"N={sys_p.n_ues}, B={sys_p.n_rbs}")
        files = out.publish(_manifest(args, sys_p, ch, seeds))
    except BaseException:
        out.discard()
        raise
    _report({k: summary[k] for k in ("n_delivered", "n_late") if k in summary}, files)
    return 0


def parse_n_list(text: str) -> list:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ":" in part:
            a, b = part.split(":")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ConfigError("empty --n-list")
    return out


def cmd_size(args) -> int:
    from .sizing import SizingSpec, b_star_table, write_table

    ch = _channel(args)
    spec = SizingSpec(model=_model_key(args.model), outage_target=args.target,
                      threshold_tti=args.threshold_tti, b_init=args.b_init, b_step=args.b_step,
                      b_max=args.b_max, seed=args.seed, sim_max_packets=args.sim_max_packets)
    n_list = parse_n_list(args.n_list)
    template = SystemParams(n_list[0], 1, args.lambda_per_s, args.ttis_per_s)
    rows = b_star_table(n_list, template, ch, spec, workers=args.workers)
    out = Outputs(args)
    try:
        write_table(rows, out.path("table.csv"))
        files = out.publish(_manifest(args, template, ch))
    except BaseException:
        out.discard()
        raise
    table = {r.n_ues: r.b_star for r in rows}
    _report({"model": args.model, "b_star": table}, files)
    bad = [r for r in rows if r.b_star is None]
    if bad:
        _error("Infeasible", f"{len(bad)} of {len(rows)} rows infeasible", rows=[r.n_ues for r in bad])
        return 2
    return 0


def read_table(path) -> dict:
    import csv

    table = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            b = row.get("b_star", "").strip()
            table[int(row["n_ues"])] = int(b) if b else None
    return table


def auto_table_range(n_bar: int) -> list:
    """N range holding the churn population with overwhelming probability.

    The stationary population is Binomial(2 n_bar, 1/2): sd = sqrt(n_bar / 2).
    """
    half = int(math.ceil(8.0 * math.sqrt(n_bar / 2.0))) + 2
    return list(range(max(2, n_bar - half), n_bar + half + 1))


def cmd_dynamic(args) -> int:
    from .des import DynamicConfig
    from .sizing import SizingSpec, b_star_table, table_mapping

    if args.n_bar is None:
        raise ConfigError("--n-bar is required")
    ch = _channel(args)
    if args.table:
        table = read_table(args.table)
    elif args.auto_table:
        template = SystemParams(args.n_bar, 1, args.lambda_per_s, args.ttis_per_s)
        rows = b_star_table(auto_table_range(args.n_bar), template, ch,
                            SizingSpec(model=_model_key(args.table_model), outage_target=args.target))
        table = table_mapping(rows)
    else:
        raise ConfigError("give --table or --auto-table")
    if table.get(args.n_bar) is None:
        raise ConfigError(f"table has no feasible entry for n_bar={args.n_bar}")
    dyn = DynamicConfig(args.p_leave, args.n_bar, table)
    sys_p = SystemParams(args.n_bar, table[args.n_bar], args.lambda_per_s, args.ttis_per_s)
    config = _sim_config(args, sys_p, ch, n_for_rate=args.n_bar, dynamic=dyn)
    stats, seeds = _simulate(config, args)
    report = stats.summary()
    report.update(horizon_ttis=config.horizon_ttis, table={str(k): v for k, v in sorted(table.items())})
    out = Outputs(args)
    try:
        _dump(report, out.path("report.json"))
        stats.write_churn_log(out.path("churn.csv"))
        if args.plot:
            from .report import plot_churn

            plot_churn(stats.churn_log, out.path("churn.png"), title=f"N_bar={args.n_bar}")
        files = out.publish(_manifest(args, sys_p, ch, seeds))
    except BaseException:
        out.discard()
        raise
    _report({k: report.get(k) for k in ("n_delivered", "outage_1ms", "outage_ci99")}, files)
    return 0


def compare_ccdfs(ana, emp, min_prob: float):
    """Rows (t, ccdf_a, ccdf_e, rel_gap) on the common grid and the max gap where ccdf_a >= min_prob."""
    if abs(ana.grid_step - emp.grid_step) > 1e-12:
        raise ConfigError("grids differ")
    n = min(len(ana.ccdf), len(emp.ccdf))
    a, e = ana.ccdf[:n], emp.ccdf[:n]
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.where(a > 0, np.abs(e - a) / a, np.nan)
    mask = a >= min_prob
    worst = float(np.nanmax(gap[mask])) if mask.any() else math.nan
    return ana.t[:n], a, e, gap, worst


def cmd_compare(args) -> int:
    from .des import empirical_ccdf

    sys_p, ch = _system(args), _channel(args)
    sol, ana = _analytic_dist(args.model, sys_p, ch, args.grid_step)
    seeds = None
    extra = {}
    if args.against == "simulation":
        config = _sim_config(args, sys_p, ch)
        stats, seeds = _simulate(config, args)
        emp = empirical_ccdf(stats, args.grid_step)
        extra = {"n_delivered": stats.n_delivered, "horizon_ttis": config.horizon_ttis}
    else:
        _, emp = _analytic_dist(args.against, sys_p, ch, args.grid_step, ana.t_max)
    t, a, e, gap, worst = compare_ccdfs(ana, emp, args.min_prob)
    summary = {"model": args.model, "against": args.against, "max_rel_gap": worst,
               "min_prob": args.min_prob, **extra}
    out = Outputs(args)
    try:
        import csv

        with open(out.path("compare.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_tti", "ccdf_analytic", "ccdf_empirical", "rel_gap"])
            for row in zip(t, a, e, gap):
                w.writerow([f"{row[0]:.6g}", repr(float(row[1])), repr(float(row[2])),
                            "" if not math.isfinite(row[3]) else repr(float(row[3]))])
        _dump(summary, out.path("summary.json"))
        if args.plot:
            from .report import plot_ccdfs

            plot_ccdfs([(args.model, ana), (args.against, emp)], out.path("compare.png"),
                       sys_p.ttis_per_second, title=f"N={sys_p.n_ues}, B={sys_p.n_rbs}")
        files = out.publish(_manifest(args, sys_p, ch, seeds))
    except BaseException:
        out.discard()
        raise
    _report(summary, files)
    return 0


def cmd_replay(args) -> int:
    with open(args.manifest) as fh:
        man = json.load(fh)
    argv = [man["command"], "--config", args.manifest,
            "--out-dir", args.out_dir or os.path.dirname(os.path.abspath(args.manifest))]
    return main(argv)


COMMANDS = {"analytic": cmd_analytic, "simulate": cmd_simulate, "size": cmd_size,
            "dynamic": cmd_dynamic, "compare": cmd_compare, "replay": cmd_replay}


def _report(summary: dict, files) -> None:
    print(json.dumps(_jsonable(summary), sort_keys=True))
    for f in files:
        print(f"wrote {f}", file=sys.stderr)


def _error(code: str, message: str, **extra) -> None:
    print(json.dumps({"error": code, "message": message, **_jsonable(extra)}), file=sys.stderr)


def main(argv=None) -> int:
    try:
        args = parse(argv)
    except GrantFreeError as exc:
        _error(exc.code, str(exc))
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ModelError as exc:
        _error(exc.code, str(exc))
        return 2
    except (GrantFreeError, ValueError) as exc:
        code = exc.code if isinstance(exc, GrantFreeError) else "ValueError"
        _error(code, str(exc))
        return 1
    except OSError as exc:
        _error("IOError", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())

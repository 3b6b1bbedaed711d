"""Command-line entry point.

Subcommands: simulate, powerflow, ergodicity, check-contraction, case,
reproduce. All outputs are CSV (plus gnuplot-ready .dat mirrors for the
plottable files); every run directory starts with a manifest that pins the
exact configuration, so any result can be re-created byte for byte.

Exit codes: 0 success, 1 runtime failure (e.g. non-convergence budget
exceeded), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, control
from .casefmt import CaseError, serialize_matpower_case, serialize_native_case
from .ensemble import Ifs
from .ergodic import Thresholds, build_ergodicity_report, estimate_average_contraction
from .powerflow import solve_power_flow
from .simloop import (
    ConfigError,
    SERIES,
    SimConfig,
    default_threads,
    load_network,
    load_sim_config,
    run_ensemble,
    with_overrides,
)

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

PRESET_DIR = Path(__file__).parent / "presets"

FIGURE_IDS = ("serial-aggregate", "serial-signal", "serial-agents", "bus3-all", "case118-signal")
_FIGURE_PRESET = {
    "serial-aggregate": "serial.toml",
    "serial-signal": "serial.toml",
    "serial-agents": "serial.toml",
    "bus3-all": "bus3.toml",
    "case118-signal": "case118.toml",
}
_FIGURE_FOCUS = {
    "serial-aggregate": "ensemble mean and std of the aggregate power p",
    "serial-signal": "ensemble mean and std of the control signal pi and controller state x_c",
    "serial-agents": "per-agent long-run average outputs (agents_mean.csv)",
    "bus3-all": "all loop series on the 3-bus case, both controllers",
    "case118-signal": "control signal on the 118-bus case with DER substitutions",
}


def _fmt_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_table(path: Path, header, rows, dat_mirror: bool = False) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    if dat_mirror:
        dat = ["# " + " ".join(header)]
        for line in lines[1:]:
            dat.append(line.replace(",", " "))
        path.with_suffix(".dat").write_text("\n".join(dat) + "\n")


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    s = str(v).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{s}"'


@dataclass
class RunManifest:
    """Reproducibility record written at the top of every output directory."""

    command: str
    preset: str
    seed: int
    output_dir: str
    config: dict
    duration_s: float = 0.0

    def write(self, path: Path) -> None:
        lines = ["[run]"]
        lines.append(f'tool_version = "{__version__}"')
        lines.append(f'command = {_toml_scalar(self.command)}')
        lines.append(f'preset = {_toml_scalar(self.preset)}')
        lines.append(f"seed = {self.seed}")
        lines.append(f"output_dir = {_toml_scalar(self.output_dir)}")
        lines.append(f"duration_s = {_toml_scalar(float(self.duration_s))}")
        lines.append("")
        lines.append("[config]")
        for k, v in self.config.items():
            lines.append(f"{k} = {_toml_scalar(v)}")
        lines.append("")
        path.write_text("\n".join(lines))


def _config_snapshot(cfg: SimConfig, config_file: str) -> dict:
    return {
        "config_file": config_file,
        "reference_mode": cfg.reference_mode,
        "r_base": cfg.r_base,
        "horizon": cfg.horizon,
        "runs": cfg.runs,
        "seed": cfg.seed,
        "controller_kind": cfg.controller_kind,
        "k_p": cfg.k_p,
        "k_i": cfg.k_i,
        "leak": cfg.leak,
        "x_c0": cfg.x_c0,
        "initial_on": list(cfg.initial_on),
        "agent_thin": cfg.agent_thin,
        "pf_tol": cfg.pf_tol,
        "pf_max_iter": cfg.pf_max_iter,
    }


def _emit_ensemble(outdir: Path, cfg: SimConfig, stats, traces) -> None:
    h = cfg.horizon
    ks = np.arange(1, h + 1)
    for t in traces:
        rows = zip(ks, t.pi, t.e, t.p, t.p_hat, t.losses, t.nonconverged, t.x_c)
        _write_table(
            outdir / f"trace_run{t.run_id}.csv",
            ["k", "pi", "e", "p", "p_hat", "losses", "nonconverged", "x_c"],
            rows,
        )
    header = ["k"] + list(SERIES)
    mean_rows = zip(ks, *[stats.series_mean[n] for n in SERIES])
    std_rows = zip(ks, *[stats.series_std[n] for n in SERIES])
    _write_table(outdir / "ensemble_mean.csv", header, mean_rows, dat_mirror=True)
    _write_table(outdir / "ensemble_std.csv", header, std_rows, dat_mirror=True)

    groups = [d.group for d in cfg.network.ders]
    agent_rows = [
        (j, groups[j], stats.agent_rbar_mean[j], stats.agent_rbar_std[j])
        for j in range(cfg.network.n_der)
    ]
    _write_table(
        outdir / "agents_mean.csv",
        ["agent_id", "group", "r_bar_mean", "r_bar_std"],
        agent_rows,
        dat_mirror=True,
    )
    run_rows = []
    for t in traces:
        for j in range(cfg.network.n_der):
            run_rows.append((t.run_id, j, groups[j], t.agent_tail_avg[j]))
    _write_table(
        outdir / "agents_runs.csv",
        ["run_id", "agent_id", "group", "r_bar"],
        run_rows,
    )


def _run_to_dir(
    cfg: SimConfig, outdir: Path, preset: str, config_file: str, threads: int, command: str
):
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=command,
        preset=preset,
        seed=cfg.seed,
        output_dir=str(outdir),
        config=_config_snapshot(cfg, config_file),
    )
    manifest.write(outdir / "manifest.toml")  # before any data file
    t0 = time.monotonic()
    stats, traces = run_ensemble(cfg, threads=threads)
    _emit_ensemble(outdir, cfg, stats, traces)
    manifest.duration_s = time.monotonic() - t0
    manifest.write(outdir / "manifest.toml")
    return stats, traces


def _figure_map_simulate(outdir: Path, preset: str) -> None:
    lines = [
        f"figure data map for preset {preset!r}:",
        "  aggregate power trajectory: ensemble_mean.csv / ensemble_std.csv, column p",
        "  filtered power and reference tracking: columns p_hat and e",
        "  control signal trajectory: columns pi and x_c",
        "  losses trajectory: column losses",
        "  per-agent long-run averages: agents_mean.csv",
    ]
    (outdir / "figure_map.txt").write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_sim_config(args.config)
    cfg = with_overrides(
        cfg,
        controller_kind=args.controller,
        x_c0=args.xc0,
        runs=args.runs,
        horizon=args.horizon,
        seed=args.seed,
        agent_thin=args.agent_thin,
    )
    outdir = Path(args.out) if args.out else Path(Path(args.config).stem + "_out")
    preset = Path(args.config).stem
    stats, _ = _run_to_dir(
        cfg, outdir, preset, str(Path(args.config).resolve()), args.threads, "simulate"
    )
    _figure_map_simulate(outdir, preset)
    print(f"wrote {cfg.runs} runs to {outdir}")
    if stats.nonconverged_steps > args.nonconv_budget:
        print(
            f"non-convergence budget exceeded: {stats.nonconverged_steps} flagged steps "
            f"(budget {args.nonconv_budget})",
            file=sys.stderr,
        )
        return 1
    return 0


def cmd_powerflow(args) -> int:
    net = load_network(args.case, args.der)
    commit = None
    if args.commit is not None:
        if set(args.commit) - {"0", "1"}:
            raise ConfigError("--commit must be a string of 0s and 1s")
        commit = [int(c) for c in args.commit]
    sol = solve_power_flow(net, commit)
    print("bus,vm,va_deg,p_inj,q_inj")
    for i, bus in enumerate(net.buses):
        row = (bus.id, sol.v_mag[i], np.degrees(sol.v_ang[i]), sol.p_inj[i], sol.q_inj[i])
        print(",".join(_fmt_cell(v) for v in row))
    print(
        f"# losses_mw={_fmt_cell(sol.losses)} iterations={sol.iterations} "
        f"converged={str(sol.converged).lower()}"
    )
    return 0 if sol.converged else 1


def cmd_case(args) -> int:
    path = Path(args.path)
    if args.tool == "validate":
        try:
            net = load_network(path, args.der)
        except CaseError as e:
            print(f"invalid: {e}", file=sys.stderr)
            return 2
        print(f"OK: {path} ({len(net.buses)} buses, {net.n_der} DERs)")
        return 0

    net = load_network(path, args.der)
    if args.tool == "info":
        total_load = sum(b.p_load for b in net.buses)
        der_cap = sum(net.gens[d.gen_index].p_out for d in net.ders)
        print(f"{len(net.buses)} buses, {len(net.branches)} branches, {net.n_der} DERs")
        print(f"generators: {len(net.gens)}")
        print(f"base_mva = {net.base_mva!r}")
        print(f"slack bus: {net.buses[net.slack_index].id}")
        print(f"total load: {total_load!r} MW")
        print(f"DER capacity: {der_cap!r} MW")
        return 0

    # convert
    if args.to == "native":
        text = serialize_native_case(net)
    else:
        text = serialize_matpower_case(net)
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


@dataclass(frozen=True, eq=False)
class _CsvTrace:
    """Trace columns re-read from a run directory, for offline diagnostics."""

    run_id: int
    pi: np.ndarray
    p: np.ndarray
    x_c: np.ndarray
    agent_tail_avg: np.ndarray
    burn_in_used: int

    def series(self, name):
        return getattr(self, name)


def _read_arm(arm_dir: Path):
    mpath = arm_dir / "manifest.toml"
    if not mpath.exists():
        raise ConfigError(f"{arm_dir}: no manifest.toml")
    manifest = tomllib.loads(mpath.read_text())
    horizon = int(manifest["config"]["horizon"])
    burn_in = horizon // 2

    agents = {}
    groups_by_id = {}
    apath = arm_dir / "agents_runs.csv"
    if not apath.exists():
        raise ConfigError(f"{arm_dir}: no agents_runs.csv")
    for line in apath.read_text().splitlines()[1:]:
        rid_s, aid_s, group, rbar_s = line.split(",")
        agents.setdefault(int(rid_s), {})[int(aid_s)] = float(rbar_s)
        groups_by_id[int(aid_s)] = group
    n_agents = len(groups_by_id)
    groups = [groups_by_id[j] for j in range(n_agents)]

    traces = []
    for rid in sorted(agents):
        tpath = arm_dir / f"trace_run{rid}.csv"
        if not tpath.exists():
            raise ConfigError(f"{arm_dir}: missing {tpath.name}")
        data = np.genfromtxt(tpath, delimiter=",", names=True)
        tail = np.array([agents[rid][j] for j in range(n_agents)])
        traces.append(
            _CsvTrace(
                run_id=rid,
                pi=np.atleast_1d(data["pi"]),
                p=np.atleast_1d(data["p"]),
                x_c=np.atleast_1d(data["x_c"]),
                agent_tail_avg=tail,
                burn_in_used=burn_in,
            )
        )
    return traces, groups, burn_in, manifest


def cmd_ergodicity(args) -> int:
    traces_a, groups, burn_a, man_a = _read_arm(Path(args.arm_a))
    traces_b, _, burn_b, man_b = _read_arm(Path(args.arm_b))
    if burn_a != burn_b:
        raise ConfigError("arms have different horizons")
    for key in ("config_file", "controller_kind", "r_base", "seed", "runs", "horizon"):
        if man_a["config"].get(key) != man_b["config"].get(key):
            raise ConfigError(f"arms differ in {key}; they must differ only in x_c0")
    burn_in = args.burn_in if args.burn_in is not None else burn_a
    thresholds = Thresholds(
        gap_se_factor=args.gap_se_factor, ks_max=args.ks_max,
        fairness_sigma_factor=args.fairness_sigma_factor,
    )
    report = build_ergodicity_report(traces_a, traces_b, groups, burn_in, thresholds)
    out = Path(args.out) if args.out else Path("ergodicity_report.csv")
    _write_table(out, ["metric", "value", "threshold", "verdict"], report.rows())
    for metric, value, threshold, verdict in report.rows():
        print(f"{metric}: {value!r} (threshold {threshold!r}) {verdict}")
    print(f"wrote {out}")
    return 0


def cmd_check_contraction(args) -> int:
    spec = tomllib.loads(Path(args.spec).read_text())
    maps_spec = spec.get("map")
    if not isinstance(maps_spec, list) or not maps_spec:
        raise ConfigError(f"{args.spec}: no [[map]] entries")
    maps, probs = [], []
    for m in maps_spec:
        slope = float(m.get("slope", 1.0))
        intercept = float(m.get("intercept", 0.0))
        p = float(m["prob"])
        maps.append(lambda x, a=slope, b=intercept: a * x + b)
        probs.append(lambda pi, q=p: q)
    sys_ifs = Ifs(maps=tuple(maps), probs=tuple(probs))
    rng = np.random.default_rng(int(spec.get("seed", 0)))
    lo = float(spec.get("pair_low", -1.0))
    hi = float(spec.get("pair_high", 1.0))

    def sampler(r):
        return r.uniform(lo, hi), r.uniform(lo, hi)

    est = estimate_average_contraction(
        sys_ifs,
        pi_grid=spec.get("pi_grid", [0.0]),
        pair_sampler=sampler,
        samples=int(spec.get("samples", 100)),
        rng=rng,
        margin=float(spec.get("margin", 0.0)),
    )
    print(f"max_ratio = {est.max_ratio!r}")
    print(f"mean_ratio = {est.mean_ratio!r}")
    print(f"samples = {est.samples} (skipped {est.skipped})")
    print(f"certified = {str(est.certified).lower()}")
    return 0


def cmd_reproduce(args) -> int:
    preset_file = PRESET_DIR / _FIGURE_PRESET[args.figure]
    base_cfg = load_sim_config(preset_file)
    base_cfg = with_overrides(base_cfg, runs=args.runs, horizon=args.horizon, seed=args.seed)
    outdir = Path(args.out) if args.out else Path(args.figure.replace("-", "_") + "_out")
    outdir.mkdir(parents=True, exist_ok=True)

    manifest = RunManifest(
        command=f"reproduce {args.figure}",
        preset=_FIGURE_PRESET[args.figure],
        seed=base_cfg.seed,
        output_dir=str(outdir),
        config=_config_snapshot(base_cfg, str(preset_file)),
    )
    manifest.write(outdir / "manifest.toml")
    t0 = time.monotonic()

    xc0s = (0.0, base_cfg.r_base)
    groups = [d.group for d in base_cfg.network.ders]
    burn_in = base_cfg.horizon // 2
    arm_names = []
    for kind in (control.LAG, control.PI):
        arm_traces = []
        arm_cfgs = []
        for xc0 in xc0s:
            cfg = with_overrides(base_cfg, controller_kind=kind, x_c0=xc0)
            arm = outdir / f"{kind.lower()}_xc{int(xc0)}"
            _, traces = _run_to_dir(
                cfg, arm, _FIGURE_PRESET[args.figure], str(preset_file),
                args.threads, f"reproduce {args.figure}",
            )
            arm_traces.append(traces)
            arm_cfgs.append(cfg)
            arm_names.append(arm.name)
        report = build_ergodicity_report(
            arm_traces[0], arm_traces[1], groups, burn_in,
            cfg_a=arm_cfgs[0], cfg_b=arm_cfgs[1],
        )
        _write_table(
            outdir / f"ergodicity_{kind.lower()}.csv",
            ["metric", "value", "threshold", "verdict"],
            report.rows(),
        )

    lines = [
        f"figure id: {args.figure}",
        f"focus: {_FIGURE_FOCUS[args.figure]}",
        "arms (controller x initial state, paired seeds):",
    ]
    for name in arm_names:
        lines.append(f"  {name}/: ensemble_mean.csv, ensemble_std.csv, agents_mean.csv")
    lines.append("reports: ergodicity_lag.csv, ergodicity_pi.csv")
    (outdir / "figure_map.txt").write_text("\n".join(lines) + "\n")

    manifest.duration_s = time.monotonic() - t0
    manifest.write(outdir / "manifest.toml")
    print(f"wrote 4 arms and 2 reports to {outdir}")
    return 0


# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="derloop",
        description="Closed-loop DER aggregation simulator and diagnostics",
    )
    ap.add_argument("--version", action="version", version=f"derloop {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo ensemble from a config file")
    sim.add_argument("config")
    sim.add_argument("--controller", choices=(control.PI, control.LAG), default=None)
    sim.add_argument("--xc0", type=float, default=None)
    sim.add_argument("--runs", type=int, default=None)
    sim.add_argument("--horizon", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--agent-thin", dest="agent_thin", type=int, default=None)
    sim.add_argument("--threads", type=int, default=default_threads())
    sim.add_argument("--nonconv-budget", dest="nonconv_budget", type=int, default=0)
    sim.add_argument("--out", default=None)
    sim.set_defaults(func=cmd_simulate)

    pf = sub.add_parser("powerflow", help="solve one power flow and print the solution")
    pf.add_argument("case")
    pf.add_argument("--commit", default=None, help="bitstring over DER units")
    pf.add_argument("--der", default=None, help="DER substitution sidecar (TOML)")
    pf.set_defaults(func=cmd_powerflow)

    case = sub.add_parser("case", help="case-file tools")
    case.add_argument("tool", choices=("info", "validate", "convert"))
    case.add_argument("path")
    case.add_argument("--der", default=None, help="DER substitution sidecar (TOML)")
    case.add_argument("--to", choices=("native", "matpower"), default="native")
    case.add_argument("-o", "--output", default=None)
    case.set_defaults(func=cmd_case)

    erg = sub.add_parser("ergodicity", help="compare two arm directories")
    erg.add_argument("--arm-a", required=True)
    erg.add_argument("--arm-b", required=True)
    erg.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    erg.add_argument("--ks-max", dest="ks_max", type=float, default=0.1)
    erg.add_argument("--gap-se-factor", dest="gap_se_factor", type=float, default=2.0)
    erg.add_argument(
        "--fairness-sigma-factor", dest="fairness_sigma_factor", type=float, default=3.0
    )
    erg.add_argument("--out", default=None)
    erg.set_defaults(func=cmd_ergodicity)

    cc = sub.add_parser("check-contraction", help="estimate the average contraction ratio")
    cc.add_argument("spec")
    cc.set_defaults(func=cmd_check_contraction)

    rep = sub.add_parser("reproduce", help="run a named two-controller experiment")
    rep.add_argument("figure", choices=FIGURE_IDS)
    rep.add_argument("--runs", type=int, default=None)
    rep.add_argument("--horizon", type=int, default=None)
    rep.add_argument("--seed", type=int, default=None)
    rep.add_argument("--threads", type=int, default=default_threads())
    rep.add_argument("--out", default=None)
    rep.set_defaults(func=cmd_reproduce)

    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (CaseError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failures keep a distinct exit code
        print(f"runtime error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""The closed aggregation loop and Monte-Carlo ensembles over it.

One step k does, in order: aggregate the previous DER outputs, filter them
(loss aware), compare with the reference, update the controller, broadcast
the new signal, sample the new commitment, and re-solve the power flow.
The losses entering the filter at step k are those of the solve that
produced P(k-1), the most recent physical state.

Runs are independent given their (seed, run_id) stream and embarrassingly
parallel; ensemble statistics are reduced in run-id order so results do not
depend on scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import control
from .casefmt import (
    InvalidCaseError,
    Network,
    apply_der_sidecar,
    parse_matpower_case,
    parse_native_case,
)
from .ensemble import RngStream, agents_from_network, sample_commitment
from .powerflow import SingularJacobian, solve_power_flow, total_der_output

FIXED_R = "FIXED_R"
R_PLUS_INITIAL_LOSSES = "R_PLUS_INITIAL_LOSSES"
_REF_MODES = (FIXED_R, R_PLUS_INITIAL_LOSSES)

SERIES = ("pi", "e", "p", "p_hat", "losses", "x_c")


class ConfigError(ValueError):
    """Simulation configuration is invalid."""


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one stochastic closed-loop experiment."""

    network: Network
    r_base: float
    horizon: int
    runs: int = 1
    seed: int = 0
    reference_mode: str = R_PLUS_INITIAL_LOSSES
    controller_kind: str = control.LAG
    k_p: float = 0.02
    k_i: float = 0.01
    leak: float = 0.99
    x_c0: float = 0.0
    initial_on: tuple[int, ...] = ()
    agent_thin: int = 1  # 0 disables per-agent series; averages always kept
    pf_tol: float = 1e-8
    pf_max_iter: int = 20

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.reference_mode not in _REF_MODES:
            raise ConfigError(f"unknown reference_mode {self.reference_mode!r}")
        if self.controller_kind not in (control.PI, control.LAG):
            raise ConfigError(
                f"controller kind must be PI or LAG in configs, got "
                f"{self.controller_kind!r}"
            )
        if self.agent_thin < 0:
            raise ConfigError("agent_thin must be >= 0")
        n = self.network.n_der
        if n == 0:
            raise ConfigError("network has no DER units")
        for a in self.initial_on:
            if not 0 <= a < n:
                raise ConfigError(f"initial_on agent id {a} out of range")

    def controller_state(self) -> control.ControllerState:
        return control.ControllerState(
            kind=self.controller_kind,
            x_c=self.x_c0,
            k_p=self.k_p,
            k_i=self.k_i,
            leak=self.leak,
        )

    @property
    def burn_in(self) -> int:
        """Default tail window start used for recorded per-agent averages."""
        return self.horizon // 2


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """Per-step series of one run. Row index i holds step k = i + 1."""

    run_id: int
    seed: int
    r: float
    pi: np.ndarray
    e: np.ndarray
    p: np.ndarray
    p_hat: np.ndarray
    losses: np.ndarray
    x_c: np.ndarray
    nonconverged: np.ndarray
    agent_rows: np.ndarray | None  # k values of the thinned per-agent rows
    agent_y: np.ndarray | None  # shape (len(agent_rows), n_der), MW
    agent_tail_avg: np.ndarray  # per-agent mean of y over k > burn_in
    burn_in_used: int

    def series(self, name: str) -> np.ndarray:
        if name not in SERIES:
            raise KeyError(f"unknown series {name!r}")
        return getattr(self, name)


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Across-run mean and std (population, ddof=0) of every series."""

    runs: int
    series_mean: dict
    series_std: dict
    agent_rbar_mean: np.ndarray
    agent_rbar_std: np.ndarray
    nonconverged_steps: int


def run(cfg: SimConfig, run_id: int = 0) -> SimulationTrace:
    """Execute one closed-loop run; fully determined by (cfg.seed, run_id)."""
    net = cfg.network
    agents = agents_from_network(net)
    n = len(agents)
    rng = RngStream(cfg.seed, run_id).generator()

    bits0 = np.zeros(n)
    bits0[list(cfg.initial_on)] = 1.0

    sol = solve_power_flow(net, bits0, tol=cfg.pf_tol, max_iter=cfg.pf_max_iter)
    if not sol.converged:
        raise ConfigError("power flow for the initial commitment did not converge")
    der_rows = np.array(net.der_gen_indices(), dtype=int)
    p_units = sol.p_gen[der_rows].copy()  # P(k-1) per DER unit, MW
    losses_prev = sol.losses

    r = cfg.r_base + (losses_prev if cfg.reference_mode == R_PLUS_INITIAL_LOSSES else 0.0)

    ctrl = cfg.controller_state()
    filt = control.FilterState(p_prev=float(p_units.sum()), losses_current=losses_prev)

    h = cfg.horizon
    burn_in = cfg.burn_in
    out = {name: np.empty(h) for name in SERIES}
    nonconv = np.zeros(h, dtype=bool)
    thin = cfg.agent_thin
    if thin > 0:
        rows = np.arange(1, h + 1, thin)
        agent_y = np.empty((len(rows), n))
    else:
        rows = None
        agent_y = None
    tail_acc = np.zeros(n)
    tail_count = 0

    for k in range(1, h + 1):
        p_k = float(p_units.sum())
        filt, p_hat = control.filter_step(filt, p_k, losses_prev)
        e_k = control.error_signal(r, p_hat)
        ctrl, pi_k = control.controller_step(ctrl, e_k)
        commit = sample_commitment(agents, pi_k, rng)

        i = k - 1
        out["p"][i] = p_k
        out["p_hat"][i] = p_hat
        out["e"][i] = e_k
        out["pi"][i] = pi_k
        out["losses"][i] = losses_prev
        out["x_c"][i] = float(ctrl.x_c)  # scalar for PI/LAG, the only loop kinds
        if thin > 0 and (k - 1) % thin == 0:
            agent_y[(k - 1) // thin] = p_units
        if k > burn_in:
            tail_acc += p_units
            tail_count += 1

        try:
            sol = solve_power_flow(
                net, commit, tol=cfg.pf_tol, max_iter=cfg.pf_max_iter
            )
            if sol.converged:
                p_units = sol.p_gen[der_rows].copy()
                losses_prev = sol.losses
            else:
                nonconv[i] = True  # carry P(k-1) and its losses forward
        except SingularJacobian:
            nonconv[i] = True

    tail_avg = tail_acc / max(tail_count, 1)
    for arr in out.values():
        arr.setflags(write=False)
    return SimulationTrace(
        run_id=run_id,
        seed=cfg.seed,
        r=r,
        pi=out["pi"],
        e=out["e"],
        p=out["p"],
        p_hat=out["p_hat"],
        losses=out["losses"],
        x_c=out["x_c"],
        nonconverged=nonconv,
        agent_rows=rows,
        agent_y=agent_y,
        agent_tail_avg=tail_avg,
        burn_in_used=burn_in,
    )


def _run_worker(args) -> SimulationTrace:
    cfg, run_id = args
    return run(cfg, run_id)


def run_ensemble(
    cfg: SimConfig, threads: int = 1
) -> tuple[EnsembleStats, list[SimulationTrace]]:
    """Run all Monte-Carlo repetitions and reduce their statistics.

    The reduction is a deterministic fold in run-id order; serial and
    parallel execution produce bit-identical statistics.
    """
    jobs = [(cfg, rid) for rid in range(cfg.runs)]
    if threads > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(_run_worker, jobs, chunksize=max(1, cfg.runs // (4 * threads))))
    else:
        traces = [run(cfg, rid) for rid in range(cfg.runs)]

    series_mean, series_std = {}, {}
    for name in SERIES:
        stack = np.vstack([t.series(name) for t in traces])
        series_mean[name] = stack.mean(axis=0)
        series_std[name] = stack.std(axis=0, ddof=0)
    rbar = np.vstack([t.agent_tail_avg for t in traces])
    stats = EnsembleStats(
        runs=cfg.runs,
        series_mean=series_mean,
        series_std=series_std,
        agent_rbar_mean=rbar.mean(axis=0),
        agent_rbar_std=rbar.std(axis=0, ddof=0),
        nonconverged_steps=int(sum(t.nonconverged.sum() for t in traces)),
    )
    return stats, traces


# --------------------------------------------------------------------------
# Config files. TOML sections: [case] (file, optional der_sidecar),
# [simulation], [controller], optional [powerflow]. Paths are resolved
# relative to the config file itself.
# --------------------------------------------------------------------------

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


def parse_span_list(spec) -> tuple[int, ...]:
    """Agent id list: TOML int array, or a string like '0-3,7,9-11'."""
    if isinstance(spec, list):
        if not all(isinstance(v, int) for v in spec):
            raise ConfigError("initial_on list must contain integers")
        return tuple(spec)
    if not isinstance(spec, str):
        raise ConfigError("initial_on must be a list of ints or a span string")
    ids: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            ids.extend(range(int(lo), int(hi) + 1))
        else:
            ids.append(int(part))
    return tuple(ids)


def load_network(case_path: str | Path, der_sidecar: str | Path | None = None) -> Network:
    """Load a case by extension (.m MATPOWER, anything else native TOML)."""
    case_path = Path(case_path)
    text = case_path.read_text()
    if case_path.suffix == ".m":
        net = parse_matpower_case(text)
    else:
        net = parse_native_case(text)
    if der_sidecar is not None:
        net = apply_der_sidecar(net, Path(der_sidecar).read_text())
    return net


def load_sim_config(path: str | Path) -> SimConfig:
    """Read a simulation config file into a SimConfig."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: TOML syntax error: {e}") from None

    case = data.get("case")
    if not isinstance(case, dict) or "file" not in case:
        raise ConfigError(f"{path}: missing [case] section with a 'file' key")
    sidecar = case.get("der_sidecar")
    net = load_network(
        path.parent / case["file"],
        path.parent / sidecar if sidecar else None,
    )

    sim = data.get("simulation", {})
    ctl = data.get("controller", {})
    pf = data.get("powerflow", {})
    try:
        return SimConfig(
            network=net,
            r_base=float(sim["r_base"]),
            horizon=int(sim["horizon"]),
            runs=int(sim.get("runs", 1)),
            seed=int(sim.get("seed", 0)),
            reference_mode=sim.get("reference_mode", R_PLUS_INITIAL_LOSSES),
            controller_kind=ctl.get("kind", control.LAG),
            k_p=float(ctl.get("k_p", 0.02)),
            k_i=float(ctl.get("k_i", 0.01)),
            leak=float(ctl.get("leak", 0.99)),
            x_c0=float(ctl.get("x_c0", 0.0)),
            initial_on=parse_span_list(sim.get("initial_on", [])),
            agent_thin=int(sim.get("agent_thin", 1)),
            pf_tol=float(pf.get("tol", 1e-8)),
            pf_max_iter=int(pf.get("max_iter", 20)),
        )
    except KeyError as e:
        raise ConfigError(f"{path}: missing required field {e.args[0]!r}") from None
    except (InvalidCaseError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from None


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    """Apply CLI-style overrides (None values are ignored)."""
    changes = {k: v for k, v in kw.items() if v is not None}
    if not changes:
        return cfg
    try:
        return replace(cfg, **changes)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def default_threads() -> int:
    return os.cpu_count() or 1

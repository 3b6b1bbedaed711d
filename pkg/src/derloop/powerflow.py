"""AC power flow by Newton-Raphson in polar form.

The solver is the nonlinear physics inside the aggregation loop: committed
DER generators inject their full rated active power, uncommitted ones
inject nothing, and the slack bus absorbs the residual including losses.

Modeling choices, fixed on purpose:
  - flat start every call (no warm starting, so repeated solves are
    path-independent),
  - DERs are PQ injections with Q = 0, never PV buses,
  - reactive limits of conventional generators are not enforced.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .casefmt import BusKind, Network


class PowerFlowError(RuntimeError):
    pass


class SingularBranch(PowerFlowError):
    """A branch with r = x = 0 cannot be stamped."""


class SingularJacobian(PowerFlowError):
    """Newton step failed: the Jacobian is numerically singular."""


@dataclass(frozen=True)
class Commitment:
    """Bit-vector over DER generators, in agent-id order."""

    on: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.on):
            raise ValueError("commitment bits must be 0 or 1")


@dataclass(frozen=True, eq=False)
class PowerFlowSolution:
    """One solved operating point. Angles in radians, powers in MW/MVAr."""

    v_mag: np.ndarray
    v_ang: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    p_gen: np.ndarray
    losses: float
    iterations: int
    converged: bool


def build_ybus(net: Network) -> np.ndarray:
    """Dense bus admittance matrix with pi-model branch stamps and shunts."""
    n = len(net.buses)
    y = np.zeros((n, n), dtype=complex)
    yff, yft, ytf, ytt = _branch_stamps(net)
    for k, br in enumerate(net.branches):
        if not br.status:
            continue
        f, t = br.from_bus, br.to_bus
        y[f, f] += yff[k]
        y[f, t] += yft[k]
        y[t, f] += ytf[k]
        y[t, t] += ytt[k]
    for i, bus in enumerate(net.buses):
        y[i, i] += bus.shunt_g + 1j * bus.shunt_b
    return y


def _branch_stamps(net: Network):
    """Per-branch 2x2 admittance stamps (yff, yft, ytf, ytt)."""
    nb = len(net.branches)
    yff = np.zeros(nb, dtype=complex)
    yft = np.zeros(nb, dtype=complex)
    ytf = np.zeros(nb, dtype=complex)
    ytt = np.zeros(nb, dtype=complex)
    for k, br in enumerate(net.branches):
        if br.r == 0.0 and br.x == 0.0:
            raise SingularBranch(f"branch {br.from_bus}-{br.to_bus}: r = x = 0")
        ys = 1.0 / complex(br.r, br.x)
        bc = 0.5j * br.b_charging
        tau = br.tap
        yff[k] = (ys + bc) / (tau * tau)
        yft[k] = -ys / tau
        ytf[k] = -ys / tau
        ytt[k] = ys + bc
    return yff, yft, ytf, ytt


@dataclass(frozen=True, eq=False)
class _Model:
    """Everything about a Network the solver needs, precomputed once."""

    net: Network
    ybus: np.ndarray
    stamps: tuple
    pv: np.ndarray
    pq: np.ndarray
    pvpq: np.ndarray
    p_load: np.ndarray  # p.u.
    q_load: np.ndarray  # p.u.
    v_flat: np.ndarray
    gen_bus: np.ndarray
    gen_p: np.ndarray  # p.u.
    der_rows: np.ndarray  # generator indices in agent order
    slack_gen: int  # first non-DER generator at the slack bus, or -1


@lru_cache(maxsize=16)
def _model(net: Network) -> _Model:
    n = len(net.buses)
    kinds = [b.kind for b in net.buses]
    pv = np.array([i for i, k in enumerate(kinds) if k is BusKind.PV], dtype=int)
    pq = np.array([i for i, k in enumerate(kinds) if k is BusKind.PQ], dtype=int)
    pvpq = np.concatenate([pv, pq])
    base = net.base_mva
    p_load = np.array([b.p_load for b in net.buses]) / base
    q_load = np.array([b.q_load for b in net.buses]) / base
    v_flat = np.ones(n, dtype=complex)
    for i, b in enumerate(net.buses):
        if b.kind is not BusKind.PQ:
            v_flat[i] = b.v_set
    gen_bus = np.array([g.bus for g in net.gens], dtype=int)
    gen_p = np.array([g.p_out for g in net.gens]) / base
    der_rows = np.array(net.der_gen_indices(), dtype=int)
    slack_gen = -1
    for gi, g in enumerate(net.gens):
        if g.bus == net.slack_index and not g.is_der:
            slack_gen = gi
            break
    return _Model(
        net=net,
        ybus=build_ybus(net),
        stamps=_branch_stamps(net),
        pv=pv,
        pq=pq,
        pvpq=pvpq,
        p_load=p_load,
        q_load=q_load,
        v_flat=v_flat,
        gen_bus=gen_bus,
        gen_p=gen_p,
        der_rows=der_rows,
        slack_gen=slack_gen,
    )


def _commit_bits(net: Network, commit) -> np.ndarray:
    n = net.n_der
    if commit is None:
        return np.zeros(n, dtype=float)
    if isinstance(commit, Commitment):
        bits = np.asarray(commit.on, dtype=float)
    else:
        bits = np.asarray(commit, dtype=float)
    if bits.shape != (n,):
        raise ValueError(f"commitment length {bits.shape} does not match {n} DERs")
    if not np.all((bits == 0.0) | (bits == 1.0)):
        raise ValueError("commitment bits must be 0 or 1")
    return bits


def solve_power_flow(
    net: Network,
    commit=None,
    tol: float = 1e-8,
    max_iter: int = 20,
) -> PowerFlowSolution:
    """Solve the AC power flow for one DER commitment.

    commit may be a Commitment, any 0/1 sequence over the DER units in
    agent order, or None for all-off. Non-convergence is reported via
    converged=False on the best iterate; a singular Newton step raises
    SingularJacobian.
    """
    mdl = _model(net)
    bits = _commit_bits(net, commit)
    base = net.base_mva

    gen_on = mdl.gen_p.copy()
    if mdl.der_rows.size:
        gen_on[mdl.der_rows] *= bits

    n = len(net.buses)
    p_spec = -mdl.p_load.copy()
    np.add.at(p_spec, mdl.gen_bus, gen_on)
    q_spec = -mdl.q_load.copy()  # generators inject no fixed Q

    y = mdl.ybus
    pv, pq, pvpq = mdl.pv, mdl.pq, mdl.pvpq
    npvpq, npq = pvpq.size, pq.size

    v = mdl.v_flat.copy()
    vm = np.abs(v)
    va = np.angle(v)

    iterations = 0
    converged = False
    for _ in range(max_iter + 1):
        ibus = y @ v
        s = v * np.conj(ibus)
        mism = np.concatenate(
            [(s.real - p_spec)[pvpq], (s.imag - q_spec)[pq]]
        )
        if mism.size == 0 or np.max(np.abs(mism)) <= tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        # Complex-form partials of S = diag(V) conj(Ybus V).
        vnorm = v / vm
        ds_dvm = v[:, None] * np.conj(y * vnorm[None, :])
        ds_dvm[np.arange(n), np.arange(n)] += np.conj(ibus) * vnorm
        ds_dva = 1j * v[:, None] * np.conj(-y * v[None, :])
        ds_dva[np.arange(n), np.arange(n)] += 1j * v * np.conj(ibus)

        j11 = ds_dva[np.ix_(pvpq, pvpq)].real
        j12 = ds_dvm[np.ix_(pvpq, pq)].real
        j21 = ds_dva[np.ix_(pq, pvpq)].imag
        j22 = ds_dvm[np.ix_(pq, pq)].imag
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, -mism)
        except np.linalg.LinAlgError:
            raise SingularJacobian(
                f"singular Jacobian at iteration {iterations}"
            ) from None
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq:npq + npvpq]
        v = vm * np.exp(1j * va)
        iterations += 1

    s = v * np.conj(y @ v)
    p_inj = s.real * base
    q_inj = s.imag * base

    losses = _total_losses(net, mdl.stamps, v) * base

    # Per-generator active output: fixed plants keep p_out, DER units inject
    # bit * p_out, and the first conventional generator at the slack bus
    # picks up the network residual.
    p_gen = gen_on * base
    if mdl.slack_gen >= 0:
        si = net.slack_index
        need = p_inj[si] + net.buses[si].p_load
        others = p_gen[mdl.gen_bus == si].sum() - p_gen[mdl.slack_gen]
        p_gen[mdl.slack_gen] = need - others

    for arr in (vm, va, p_inj, q_inj, p_gen):
        arr.setflags(write=False)
    return PowerFlowSolution(
        v_mag=vm,
        v_ang=va,
        p_inj=p_inj,
        q_inj=q_inj,
        p_gen=p_gen,
        losses=float(losses),
        iterations=iterations,
        converged=converged,
    )


def _total_losses(net: Network, stamps, v: np.ndarray) -> float:
    """Total series + charging active losses over in-service branches, p.u."""
    yff, yft, ytf, ytt = stamps
    total = 0.0
    for k, br in enumerate(net.branches):
        if not br.status:
            continue
        vf, vt = v[br.from_bus], v[br.to_bus]
        sf = vf * np.conj(yff[k] * vf + yft[k] * vt)
        st = vt * np.conj(ytf[k] * vf + ytt[k] * vt)
        total += (sf + st).real
    return total


def total_der_output(sol: PowerFlowSolution, net: Network) -> float:
    """Aggregate active output p = sum of P over DER generators only (MW)."""
    rows = np.array(net.der_gen_indices(), dtype=int)
    if rows.size == 0:
        return 0.0
    return float(sol.p_gen[rows].sum())

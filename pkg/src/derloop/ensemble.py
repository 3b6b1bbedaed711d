"""Binary-state DER agents with signal-dependent response probabilities.

Each agent flips a coin every step: the probability of committing depends
on the broadcast control signal pi through a saturated sigmoid. Two
response laws are built in, an increasing one (TYPE1) and a decreasing one
(TYPE2); both are bounded away from 0 and 1 so no agent is ever certain.

A small iterated-function-system (IFS) abstraction with signal-dependent
map-selection probabilities covers the same sampling pattern for generic
state spaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .casefmt import Network
from .powerflow import Commitment


class ProbabilityMassError(ValueError):
    """Map-selection probabilities do not sum to 1."""


@dataclass(frozen=True)
class ProbFunction:
    """Commitment probability as a function of the control signal.

    TYPE1: 0.02 + 0.95 / (1 + exp(-xi*pi - x0)), increasing in pi,
           range [0.02, 0.97].
    TYPE2: 0.98 - 0.95 / (1 + exp(-xi*pi - x0)), decreasing in pi,
           range [0.03, 0.98].
    CONSTANT: fixed value, for degenerate and synthetic cases.
    """

    kind: str
    xi: float = 0.0
    x0: float = 0.0
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("TYPE1", "TYPE2", "CONSTANT"):
            raise ValueError(f"unknown probability kind {self.kind!r}")
        if self.kind in ("TYPE1", "TYPE2") and not self.xi > 0:
            raise ValueError("xi must be > 0 for TYPE1/TYPE2")
        if self.kind == "CONSTANT" and not 0.0 <= self.value <= 1.0:
            raise ValueError("CONSTANT value must lie in [0, 1]")


def _sigmoid(z):
    """Numerically stable logistic 1/(1 + exp(-z)), elementwise."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def eval_prob(f: ProbFunction, pi):
    """Evaluate the response law at signal pi (scalar or array)."""
    scalar = np.isscalar(pi)
    pi_arr = np.asarray(pi, dtype=float)
    if f.kind == "CONSTANT":
        val = np.full_like(pi_arr, f.value, dtype=float)
    else:
        # exponent argument is -(xi*pi) - x0, so 1/(1+exp(.)) = sigmoid(xi*pi + x0)
        s = _sigmoid(f.xi * pi_arr + f.x0)
        if f.kind == "TYPE1":
            val = 0.02 + 0.95 * s
        else:
            val = 0.98 - 0.95 * s
    return float(val) if scalar else val


@dataclass(frozen=True)
class DerAgent:
    """One binary-state agent tied to a DER generator."""

    id: int
    gen_index: int
    prob: ProbFunction
    group: str
    state: int = 0

    def __post_init__(self):
        if self.state not in (0, 1):
            raise ValueError("agent state must be 0 or 1")


def agents_from_network(net: Network) -> tuple[DerAgent, ...]:
    """Materialize the agent list from a network's der annotations."""
    agents = []
    for j, d in enumerate(net.ders):
        agents.append(
            DerAgent(
                id=j,
                gen_index=d.gen_index,
                prob=ProbFunction(kind=d.kind, xi=d.xi, x0=d.x0, value=d.value),
                group=d.group,
            )
        )
    return tuple(agents)


@lru_cache(maxsize=32)
def _batch(agents: tuple[DerAgent, ...]):
    """Vectorized view of the agents' response parameters."""
    kinds = np.array([a.prob.kind for a in agents])
    xi = np.array([a.prob.xi for a in agents])
    x0 = np.array([a.prob.x0 for a in agents])
    value = np.array([a.prob.value for a in agents])
    return kinds == "TYPE1", kinds == "TYPE2", xi, x0, value


def commitment_probs(agents: Sequence[DerAgent], pi: float) -> np.ndarray:
    """Per-agent commitment probabilities at signal pi."""
    t1, t2, xi, x0, value = _batch(tuple(agents))
    s = _sigmoid(xi * pi + x0)
    probs = value.copy()
    probs[t1] = 0.02 + 0.95 * s[t1]
    probs[t2] = 0.98 - 0.95 * s[t2]
    return probs


def sample_commitment(
    agents: Sequence[DerAgent], pi: float, rng: np.random.Generator
) -> Commitment:
    """Draw the next commitment: independent Bernoulli per agent.

    Exactly len(agents) uniforms are consumed from rng, in agent order, so
    commitment sequences are reproducible for a fixed stream.
    """
    if not len(agents):
        raise ValueError("sample_commitment needs at least one agent")
    probs = commitment_probs(agents, pi)
    u = rng.random(len(probs))
    return Commitment(on=tuple(int(b) for b in (u < probs)))


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream: (seed, stream_id) fully determine it.

    Streams for distinct run ids are statistically independent (Philox
    keyed by both words), which is what makes parallel Monte-Carlo runs
    bit-reproducible regardless of scheduling.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream_id]))


@dataclass(frozen=True, eq=False)
class Ifs:
    """Iterated function system with signal-dependent selection probabilities.

    maps[m] takes a state to a state; probs[m] gives the selection weight of
    map m as a function of the signal pi. Weights must sum to 1 wherever the
    system is stepped.
    """

    maps: tuple[Callable, ...]
    probs: tuple[Callable, ...]

    def __post_init__(self):
        if len(self.maps) != len(self.probs):
            raise ValueError("maps and probs must have equal length")
        if not self.maps:
            raise ValueError("need at least one map")

    def weights(self, pi: float) -> np.ndarray:
        return np.array([q(pi) for q in self.probs], dtype=float)


def ifs_step(sys: Ifs, state, pi: float, rng: np.random.Generator):
    """Apply one randomly selected map, inverse-CDF over list order."""
    w = sys.weights(pi)
    total = w.sum()
    if abs(total - 1.0) > 1e-12:
        raise ProbabilityMassError(f"selection probabilities sum to {total!r}")
    if np.any(w < 0):
        raise ProbabilityMassError("negative selection probability")
    cdf = np.cumsum(w)
    m = int(np.searchsorted(cdf, rng.random(), side="right"))
    m = min(m, len(sys.maps) - 1)  # guard the u == 1.0 - eps edge
    return sys.maps[m](state)

"""Controller and filter blocks of the aggregation loop.

Three controller kinds share one stepping interface. PI integrates the
error exactly; LAG is the same structure with a leaky integrator (leak
strictly inside the unit circle), and LINEAR_SS is a general discrete
linear SISO state-space controller. All of them update the state first and
compute the output from the updated state:

    x' = A x + B e        pi = C x' + D e

PI corresponds to (A, B, C, D) = (1, 1, K_i, K_p) and LAG to
(leak, 1, K_i, K_p). The incremental probe below measures how fast two
controller copies forget their initial disagreement under a common input,
which is the property separating LAG from PI in the closed loop.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

PI = "PI"
LAG = "LAG"
LINEAR_SS = "LINEAR_SS"
_KINDS = (PI, LAG, LINEAR_SS)


@dataclass(frozen=True, eq=False)
class ControllerState:
    """Controller kind, gains, and current internal state."""

    kind: str
    x_c: float | np.ndarray = 0.0
    k_p: float = 0.02
    k_i: float = 0.01
    leak: float = 0.99
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    C: np.ndarray | None = None
    D: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if self.kind == LAG and not 0.0 < self.leak < 1.0:
            raise ValueError("LAG leak must satisfy 0 < leak < 1")
        if self.kind == LINEAR_SS:
            if self.A is None or self.B is None or self.C is None:
                raise ValueError("LINEAR_SS needs A, B, C matrices")
            a = np.atleast_2d(np.asarray(self.A, dtype=float))
            if a.shape[0] != a.shape[1]:
                raise ValueError("A must be square")
            object.__setattr__(self, "A", a)
            object.__setattr__(
                self, "B", np.asarray(self.B, dtype=float).reshape(a.shape[0])
            )
            object.__setattr__(
                self, "C", np.asarray(self.C, dtype=float).reshape(a.shape[0])
            )
            x = np.asarray(self.x_c, dtype=float)
            if x.ndim == 0:
                x = np.full(a.shape[0], float(x))
            object.__setattr__(self, "x_c", x.reshape(a.shape[0]))


def controller_step(st: ControllerState, e: float) -> tuple[ControllerState, float]:
    """Advance one step on error e; returns (next state, control signal)."""
    if st.kind == PI:
        x_new = st.x_c + e
        pi = st.k_p * e + st.k_i * x_new
        return replace(st, x_c=x_new), pi
    if st.kind == LAG:
        x_new = st.leak * st.x_c + e
        pi = st.k_p * e + st.k_i * x_new
        return replace(st, x_c=x_new), pi
    x_new = st.A @ st.x_c + st.B * e
    pi = float(st.C @ x_new + st.D * e)
    return replace(st, x_c=x_new), pi


@dataclass(frozen=True)
class FilterState:
    """Moving-average filter memory: previous aggregate and current losses."""

    p_prev: float
    losses_current: float = 0.0


def filter_step(st: FilterState, p: float, losses: float) -> tuple[FilterState, float]:
    """Loss-aware moving average: p_hat = (p + p_prev)/2 + losses."""
    p_hat = 0.5 * (p + st.p_prev) + losses
    return FilterState(p_prev=p, losses_current=losses), p_hat


def error_signal(r: float, p_hat: float) -> float:
    """Tracking error e = r - p_hat."""
    return r - p_hat


def state_norm(x) -> float:
    """Scalar magnitude of a controller state (abs or euclidean norm)."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    return float(np.linalg.norm(arr))


def incremental_iss_probe(
    template: ControllerState,
    x0_a,
    x0_b,
    input_seq,
    horizon: int | None = None,
) -> np.ndarray:
    """Run two controller copies on the SAME input from different states.

    Returns ||x_a(k) - x_b(k)|| for k = 0..horizon. A controller that
    forgets its initial state (LAG) shows geometric decay; a marginally
    stable one (PI) keeps the difference forever.
    """
    inputs = np.asarray(input_seq, dtype=float)
    if horizon is None:
        horizon = len(inputs)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if len(inputs) < horizon:
        raise ValueError("input_seq shorter than horizon")
    st_a = replace(template, x_c=x0_a)
    st_b = replace(template, x_c=x0_b)
    diffs = np.empty(horizon + 1)
    diffs[0] = state_norm(np.asarray(st_a.x_c) - np.asarray(st_b.x_c))
    for k in range(horizon):
        e = float(inputs[k])
        st_a, _ = controller_step(st_a, e)
        st_b, _ = controller_step(st_b, e)
        diffs[k + 1] = state_norm(np.asarray(st_a.x_c) - np.asarray(st_b.x_c))
    return diffs


@dataclass(frozen=True)
class StabilityVerdict:
    classification: str  # one of the _CLASS values
    poles: tuple[complex, ...]


ASYMPTOTICALLY_STABLE = "asymptotically-stable"
MARGINALLY_STABLE = "marginally-stable"
UNSTABLE = "unstable"


def is_marginally_unstable(st: ControllerState, tol: float = 1e-9) -> StabilityVerdict:
    """Classify the controller's internal dynamics by its pole moduli."""
    if st.kind == PI:
        a = np.array([[1.0]])
    elif st.kind == LAG:
        a = np.array([[st.leak]])
    else:
        a = st.A
    poles = tuple(complex(z) for z in np.linalg.eigvals(a))
    moduli = np.abs(np.array(poles))
    if np.any(moduli > 1.0 + tol):
        cls = UNSTABLE
    elif np.any(np.abs(moduli - 1.0) <= tol):
        cls = MARGINALLY_STABLE
    else:
        cls = ASYMPTOTICALLY_STABLE
    return StabilityVerdict(classification=cls, poles=poles)

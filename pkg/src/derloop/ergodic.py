"""Diagnostics for predictability, fairness, and unique ergodicity.

Everything here is a pure function over finished simulation traces or IFS
descriptions. The operational reading of "uniquely ergodic" is empirical:
two experiment arms that differ only in initial conditions must produce
tail time-averages whose gap is statistically indistinguishable from zero
and tail signal distributions that nearly coincide (small KS distance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import reduce

import numpy as np

from .ensemble import Ifs, ProbabilityMassError
from .simloop import SimConfig, SimulationTrace


class EmptyWindow(ValueError):
    """Burn-in leaves no samples."""


class EmptySample(ValueError):
    """KS distance needs non-empty samples."""


class ConfigMismatch(ValueError):
    """Arms differ in something besides the initial condition."""


class DegeneratePair(ValueError):
    """All sampled state pairs were identical."""


def time_average(series, burn_in: int) -> float:
    """Arithmetic mean of series[burn_in:]."""
    arr = np.asarray(series, dtype=float)
    if burn_in < 0 or burn_in >= arr.shape[0]:
        raise EmptyWindow(f"burn_in {burn_in} leaves no window in {arr.shape[0]} samples")
    return float(arr[burn_in:].mean())


def ks_distance(sample_a, sample_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: sup |F_a - F_b|."""
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


@dataclass(frozen=True)
class SeriesGap:
    """Cross-arm comparison of one series' tail time-averages."""

    arm_a_mean: float
    arm_b_mean: float
    gap: float
    se: float  # unpaired standard error of the gap across runs


@dataclass(frozen=True, eq=False)
class PredictabilityResult:
    burn_in: int
    gaps: dict  # series name -> SeriesGap
    ks_pi: float


def _tail_averages(traces, name: str, burn_in: int) -> np.ndarray:
    return np.array([time_average(t.series(name), burn_in) for t in traces])


def check_arm_configs(cfg_a: SimConfig, cfg_b: SimConfig) -> None:
    """Arms must share everything except the controller's initial state."""
    if replace(cfg_a, x_c0=0.0) != replace(cfg_b, x_c0=0.0):
        raise ConfigMismatch(
            "arm configs differ in more than the initial controller state"
        )


def predictability_gap(
    traces_a,
    traces_b,
    burn_in: int,
    cfg_a: SimConfig | None = None,
    cfg_b: SimConfig | None = None,
    series=("pi", "p"),
) -> PredictabilityResult:
    """Initial-condition dependence of tail averages, plus KS on pi.

    Arms are expected to share noise streams per run index (common random
    numbers); when configs are passed, anything differing beyond x_c0
    raises ConfigMismatch.
    """
    if cfg_a is not None and cfg_b is not None:
        check_arm_configs(cfg_a, cfg_b)
    gaps = {}
    for name in series:
        avg_a = _tail_averages(traces_a, name, burn_in)
        avg_b = _tail_averages(traces_b, name, burn_in)
        se = math.sqrt(
            avg_a.var(ddof=0) / avg_a.size + avg_b.var(ddof=0) / avg_b.size
        )
        gaps[name] = SeriesGap(
            arm_a_mean=float(avg_a.mean()),
            arm_b_mean=float(avg_b.mean()),
            gap=float(abs(avg_a.mean() - avg_b.mean())),
            se=se,
        )
    pool_a = np.concatenate([np.asarray(t.series("pi"))[burn_in:] for t in traces_a])
    pool_b = np.concatenate([np.asarray(t.series("pi"))[burn_in:] for t in traces_b])
    return PredictabilityResult(
        burn_in=burn_in, gaps=gaps, ks_pi=ks_distance(pool_a, pool_b)
    )


@dataclass(frozen=True, eq=False)
class FairnessResult:
    r_bar: np.ndarray  # per-agent long-run average output, MW
    per_agent_std: np.ndarray  # std of the per-run averages, across runs
    within_group_gap: dict  # group -> max pairwise |r_bar_i - r_bar_j|
    cross_group_gap: dict  # (group_a, group_b) -> |group mean difference|
    sigma_hat: float  # max over agents of per_agent_std


def _rbar_matrix(traces, burn_in) -> np.ndarray:
    if isinstance(traces, np.ndarray):
        if traces.ndim != 2:
            raise ValueError("r_bar matrix must be 2-D (runs, agents)")
        return traces
    rows = []
    for t in traces:
        if burn_in is not None and burn_in != t.burn_in_used:
            raise ValueError(
                f"trace recorded agent averages at burn-in {t.burn_in_used}, "
                f"requested {burn_in}"
            )
        rows.append(t.agent_tail_avg)
    return np.vstack(rows)


def fairness_gap(traces, groups, burn_in: int | None = None) -> FairnessResult:
    """Within-group and cross-group gaps of per-agent long-run averages.

    traces: list of SimulationTrace, or directly a (runs, agents) matrix of
    per-run time averages. groups: one tag per agent.
    """
    mat = _rbar_matrix(traces, burn_in)
    groups = list(groups)
    if mat.shape[1] != len(groups):
        raise ValueError("groups length does not match agent count")
    r_bar = mat.mean(axis=0)
    per_std = mat.std(axis=0, ddof=0)
    within = {}
    means = {}
    for g in sorted(set(groups)):
        idx = [i for i, t in enumerate(groups) if t == g]
        vals = r_bar[idx]
        within[g] = float(vals.max() - vals.min())
        means[g] = float(vals.mean())
    cross = {}
    tags = sorted(means)
    for i, ga in enumerate(tags):
        for gb in tags[i + 1 :]:
            cross[(ga, gb)] = float(abs(means[ga] - means[gb]))
    return FairnessResult(
        r_bar=r_bar,
        per_agent_std=per_std,
        within_group_gap=within,
        cross_group_gap=cross,
        sigma_hat=float(per_std.max()),
    )


# --------------------------------------------------------------------------
# Contraction on average
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionEstimate:
    """Sampled bound on E_m ||F_m(x) - F_m(x')|| / ||x - x'||."""

    max_ratio: float
    mean_ratio: float
    samples: int
    skipped: int
    margin: float
    certified: bool


def estimate_average_contraction(
    sys: Ifs,
    pi_grid,
    pair_sampler,
    samples: int,
    rng: np.random.Generator | None = None,
    margin: float = 0.0,
) -> ContractionEstimate:
    """Monte-Carlo estimate of the average contraction ratio.

    pair_sampler(rng) must yield a pair of states; pairs with zero
    separation are skipped. certified means max ratio < 1 - margin.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    pis = np.atleast_1d(np.asarray(pi_grid, dtype=float))
    ratios = []
    skipped = 0
    for _ in range(samples):
        x, x_hat = pair_sampler(rng)
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        xb = np.atleast_1d(np.asarray(x_hat, dtype=float))
        denom = float(np.linalg.norm(xa - xb))
        if denom == 0.0:
            skipped += 1
            continue
        for pi in pis:
            w = sys.weights(float(pi))
            if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
                raise ProbabilityMassError(
                    f"selection probabilities sum to {w.sum()!r} at pi={pi}"
                )
            num = 0.0
            for m, f in enumerate(sys.maps):
                fa = np.atleast_1d(np.asarray(f(x), dtype=float))
                fb = np.atleast_1d(np.asarray(f(x_hat), dtype=float))
                num += w[m] * float(np.linalg.norm(fa - fb))
            ratios.append(num / denom)
    if not ratios:
        raise DegeneratePair("every sampled pair had zero separation")
    max_ratio = float(max(ratios))
    return ContractionEstimate(
        max_ratio=max_ratio,
        mean_ratio=float(np.mean(ratios)),
        samples=samples - skipped,
        skipped=skipped,
        margin=margin,
        certified=bool(max_ratio < 1.0 - margin),
    )


# --------------------------------------------------------------------------
# Discreteness of the additive group generated by {r - y}
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Irrational:
    """Exact symbolic value coef * symbol, with symbol irrational (e.g. sqrt2).

    Distinct symbols are treated as incommensurable with each other and
    with the rationals.
    """

    symbol: str
    coef: Fraction = Fraction(1)


@dataclass(frozen=True)
class SymbolicValue:
    """Exact linear combination over basis {1} | {symbols}, for reporting."""

    terms: tuple  # of (Fraction, str | None)

    def __str__(self):
        parts = []
        for coef, sym in self.terms:
            parts.append(str(coef) if sym is None else f"{coef}*{sym}")
        return " + ".join(parts) if parts else "0"


@dataclass(frozen=True)
class GroupCheckResult:
    discrete: bool
    generator: object  # Fraction | Irrational | SymbolicValue | None


def _to_vec(v) -> dict:
    """Represent a value as {basis symbol or None: Fraction coefficient}."""
    if isinstance(v, Irrational):
        return {v.symbol: Fraction(v.coef)} if v.coef != 0 else {}
    if isinstance(v, (int, Fraction)):
        return {None: Fraction(v)} if v != 0 else {}
    raise TypeError(f"values must be int, Fraction, or Irrational, got {type(v)!r}")


def _vec_sub(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, coef in b.items():
        out[k] = out.get(k, Fraction(0)) - coef
        if out[k] == 0:
            del out[k]
    return out


def _frac_gcd(values) -> Fraction:
    def g2(a: Fraction, b: Fraction) -> Fraction:
        num = math.gcd(a.numerator * b.denominator, b.numerator * a.denominator)
        return Fraction(num, a.denominator * b.denominator)

    return reduce(g2, values)


def _vec_to_value(vec: dict):
    terms = tuple(sorted(vec.items(), key=lambda kv: (kv[0] is not None, kv[0] or "")))
    if not terms:
        return Fraction(0)
    if len(terms) == 1:
        sym, coef = terms[0]
        return coef if sym is None else Irrational(sym, coef)
    return SymbolicValue(terms=tuple((coef, sym) for sym, coef in terms))


def discrete_group_check(output_values, r) -> GroupCheckResult:
    """Is the additive group generated by {r - y : y in output_values} discrete?

    All-rational inputs always give a discrete group, generated by the gcd
    of the differences. Symbolically tagged irrationals are supported as
    exact values; the group is discrete exactly when all nonzero generators
    are rational multiples of one another.
    """
    r_vec = _to_vec(r)
    gens = []
    for y in output_values:
        vec = _vec_sub(r_vec, _to_vec(y))
        if vec:
            gens.append(vec)
    if not gens:
        return GroupCheckResult(discrete=True, generator=Fraction(0))

    base = gens[0]
    base_keys = set(base)
    lambdas = [Fraction(1)]
    anchor = next(iter(base_keys))
    for vec in gens[1:]:
        if set(vec) != base_keys:
            return GroupCheckResult(discrete=False, generator=None)
        lam = vec[anchor] / base[anchor]
        if any(vec[k] != lam * base[k] for k in base_keys):
            return GroupCheckResult(discrete=False, generator=None)
        lambdas.append(lam)

    g = _frac_gcd([abs(l) for l in lambdas if l != 0])
    gen_vec = {k: g * coef for k, coef in base.items()}
    return GroupCheckResult(discrete=True, generator=_vec_to_value(gen_vec))


# --------------------------------------------------------------------------
# Combined report
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    gap_se_factor: float = 2.0  # pi tail-average gap <= factor * SE
    ks_max: float = 0.1
    fairness_sigma_factor: float = 3.0  # within-group gap <= factor * sigma_hat


@dataclass(frozen=True, eq=False)
class ErgodicityReport:
    """Everything the ergodicity verdict rests on, with thresholds."""

    burn_in: int
    predictability: PredictabilityResult
    fairness: FairnessResult
    thresholds: Thresholds
    pi_gap_ok: bool
    ks_ok: bool
    fairness_ok: bool
    uniquely_ergodic: bool

    def rows(self):
        """(metric, value, threshold, verdict) rows for CSV emission."""
        t = self.thresholds
        pg = self.predictability.gaps["pi"]
        rows = [
            ("burn_in", float(self.burn_in), "", "info"),
            ("pi_tail_avg_arm_a", pg.arm_a_mean, "", "info"),
            ("pi_tail_avg_arm_b", pg.arm_b_mean, "", "info"),
            (
                "pi_tail_avg_gap",
                pg.gap,
                t.gap_se_factor * pg.se,
                "pass" if self.pi_gap_ok else "fail",
            ),
            ("pi_tail_avg_gap_se", pg.se, "", "info"),
            ("ks_pi", self.predictability.ks_pi, t.ks_max, "pass" if self.ks_ok else "fail"),
        ]
        if "p" in self.predictability.gaps:
            sg = self.predictability.gaps["p"]
            rows.append(("p_tail_avg_arm_a", sg.arm_a_mean, "", "info"))
            rows.append(("p_tail_avg_arm_b", sg.arm_b_mean, "", "info"))
            rows.append(("p_tail_avg_gap", sg.gap, "", "info"))
        if "x_c" in self.predictability.gaps:
            sg = self.predictability.gaps["x_c"]
            rows.append(("x_c_tail_avg_gap", sg.gap, "", "info"))
        for g, gap in sorted(self.fairness.within_group_gap.items()):
            rows.append(
                (
                    f"fairness_within_{g}",
                    gap,
                    t.fairness_sigma_factor * self.fairness.sigma_hat,
                    "pass" if gap <= t.fairness_sigma_factor * self.fairness.sigma_hat else "fail",
                )
            )
        for (ga, gb), gap in sorted(self.fairness.cross_group_gap.items()):
            rows.append((f"fairness_cross_{ga}_{gb}", gap, "", "info"))
        rows.append(
            (
                "uniquely_ergodic",
                1.0 if self.uniquely_ergodic else 0.0,
                "",
                "pass" if self.uniquely_ergodic else "fail",
            )
        )
        return rows


def build_ergodicity_report(
    traces_a,
    traces_b,
    groups,
    burn_in: int,
    thresholds: Thresholds = Thresholds(),
    cfg_a: SimConfig | None = None,
    cfg_b: SimConfig | None = None,
) -> ErgodicityReport:
    """Run the predictability and fairness diagnostics and apply thresholds."""
    pred = predictability_gap(
        traces_a, traces_b, burn_in, cfg_a=cfg_a, cfg_b=cfg_b, series=("pi", "p", "x_c")
    )
    both = list(traces_a) + list(traces_b)
    fair = fairness_gap(both, groups)
    pg = pred.gaps["pi"]
    pi_ok = pg.gap <= thresholds.gap_se_factor * pg.se
    ks_ok = pred.ks_pi <= thresholds.ks_max
    fair_ok = all(
        gap <= thresholds.fairness_sigma_factor * fair.sigma_hat
        for gap in fair.within_group_gap.values()
    )
    return ErgodicityReport(
        burn_in=burn_in,
        predictability=pred,
        fairness=fair,
        thresholds=thresholds,
        pi_gap_ok=pi_ok,
        ks_ok=ks_ok,
        fairness_ok=fair_ok,
        uniquely_ergodic=pi_ok and ks_ok,
    )

"""Agent response laws, commitment sampling, and the IFS abstraction."""

import numpy as np
import pytest

from derloop.ensemble import (
    DerAgent,
    Ifs,
    ProbabilityMassError,
    ProbFunction,
    RngStream,
    agents_from_network,
    commitment_probs,
    eval_prob,
    ifs_step,
    sample_commitment,
)

PI_GRID = np.linspace(-8.0, 8.0, 401)


def agent(kind, xi=100.0, x0=0.0, value=0.0, i=0, group="g"):
    return DerAgent(
        id=i, gen_index=i, prob=ProbFunction(kind=kind, xi=xi, x0=x0, value=value),
        group=group,
    )


# --------------------------------------------------------------------------
# Response laws
# --------------------------------------------------------------------------


def test_type1_saturation_is_exact():
    f = ProbFunction(kind="TYPE1", xi=100.0, x0=0.0)
    assert eval_prob(f, 50.0) == 0.97
    assert eval_prob(f, -50.0) == 0.02


def test_type2_saturation_is_exact():
    f = ProbFunction(kind="TYPE2", xi=100.0, x0=0.0)
    assert eval_prob(f, -50.0) == 0.98
    assert abs(eval_prob(f, 50.0) - 0.03) <= 1e-15


def test_laws_are_complementary():
    # 0.02 + 0.95 s and 0.98 - 0.95 s sum to 1 for the same (xi, x0)
    t1 = ProbFunction(kind="TYPE1", xi=100.0, x0=40.0)
    t2 = ProbFunction(kind="TYPE2", xi=100.0, x0=40.0)
    total = eval_prob(t1, PI_GRID) + eval_prob(t2, PI_GRID)
    assert np.max(np.abs(total - 1.0)) <= 1e-12


def test_type1_increasing_type2_decreasing():
    t1 = eval_prob(ProbFunction(kind="TYPE1", xi=100.0, x0=200.0), PI_GRID)
    t2 = eval_prob(ProbFunction(kind="TYPE2", xi=100.0, x0=200.0), PI_GRID)
    assert np.all(np.diff(t1) >= 0)
    assert np.all(np.diff(t2) <= 0)


def test_bounds_hold_everywhere():
    wide = np.linspace(-1e4, 1e4, 1001)
    t1 = eval_prob(ProbFunction(kind="TYPE1", xi=100.0, x0=200.0), wide)
    t2 = eval_prob(ProbFunction(kind="TYPE2", xi=100.0, x0=40.0), wide)
    assert t1.min() >= 0.02 and t1.max() <= 0.97
    assert t2.min() >= 0.03 - 1e-15 and t2.max() <= 0.98


def test_midpoint_value():
    # at pi = -x0/xi the sigmoid argument is zero
    f = ProbFunction(kind="TYPE1", xi=100.0, x0=150.0)
    assert eval_prob(f, -1.5) == pytest.approx(0.02 + 0.475, abs=1e-15)


def test_scalar_and_array_agree():
    f = ProbFunction(kind="TYPE2", xi=100.0, x0=40.0)
    arr = eval_prob(f, PI_GRID)
    for i in (0, 57, 400):
        assert eval_prob(f, float(PI_GRID[i])) == arr[i]


def test_constant_kind():
    f = ProbFunction(kind="CONSTANT", value=0.25)
    assert eval_prob(f, -3.0) == 0.25
    assert np.all(eval_prob(f, PI_GRID) == 0.25)


def test_prob_function_validation():
    with pytest.raises(ValueError):
        ProbFunction(kind="TYPE3")
    with pytest.raises(ValueError):
        ProbFunction(kind="TYPE1", xi=0.0)
    with pytest.raises(ValueError):
        ProbFunction(kind="CONSTANT", value=-0.1)


def test_commitment_probs_matches_eval(bus3_net):
    agents = agents_from_network(bus3_net)
    for pi in (-2.0, -1.02, 0.0):
        probs = commitment_probs(agents, pi)
        for a in agents:
            assert probs[a.id] == eval_prob(a.prob, pi)


def test_agents_from_network(bus3_net):
    agents = agents_from_network(bus3_net)
    assert len(agents) == 10
    assert {a.group for a in agents} == {"g1", "g2"}
    assert tuple(a.gen_index for a in agents) == bus3_net.der_gen_indices()


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def test_sample_mean_matches_probability():
    agents = tuple(agent("TYPE1", x0=200.0, i=i) for i in range(60))
    pi = -1.2
    p = eval_prob(agents[0].prob, pi)
    rng = RngStream(seed=11, stream_id=0).generator()
    draws = 5000
    total = 0
    for _ in range(draws):
        total += sum(sample_commitment(agents, pi, rng).on)
    n = 60 * draws
    se = np.sqrt(p * (1 - p) / n)
    assert abs(total / n - p) <= 4 * se


def test_sample_is_threshold_on_uniforms():
    agents = tuple(agent("TYPE2", x0=40.0, i=i) for i in range(7))
    pi = -0.55
    probs = commitment_probs(agents, pi)
    u = RngStream(seed=3, stream_id=5).generator().random(7)
    got = sample_commitment(agents, pi, RngStream(seed=3, stream_id=5).generator())
    assert got.on == tuple(int(b) for b in (u < probs))


def test_sample_consumes_one_uniform_per_agent():
    agents = (agent("CONSTANT", value=1.0, i=0), agent("CONSTANT", value=0.0, i=1))
    g = RngStream(seed=9).generator()
    bits = sample_commitment(agents, 0.0, g)
    assert bits.on == (1, 0)  # certain units regardless of the draw
    ref = RngStream(seed=9).generator()
    ref.random(2)
    assert g.random() == ref.random()


def test_sample_requires_agents():
    with pytest.raises(ValueError):
        sample_commitment((), 0.0, np.random.default_rng(0))


def test_rng_stream_reproducible():
    a = RngStream(seed=42, stream_id=7).generator().random(16)
    b = RngStream(seed=42, stream_id=7).generator().random(16)
    assert np.array_equal(a, b)


def test_rng_streams_distinct():
    a = RngStream(seed=42, stream_id=0).generator().random(16)
    b = RngStream(seed=42, stream_id=1).generator().random(16)
    c = RngStream(seed=43, stream_id=0).generator().random(16)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rng_stream_is_counter_based():
    g = RngStream(seed=0).generator()
    assert type(g.bit_generator).__name__ == "Philox"


# --------------------------------------------------------------------------
# IFS
# --------------------------------------------------------------------------


def test_ifs_weights_must_sum_to_one():
    sys = Ifs(maps=(lambda x: x,), probs=(lambda pi: 0.9,))
    with pytest.raises(ProbabilityMassError):
        ifs_step(sys, 0.0, 0.0, np.random.default_rng(0))


def test_ifs_rejects_negative_weights():
    sys = Ifs(
        maps=(lambda x: x, lambda x: x),
        probs=(lambda pi: -0.2, lambda pi: 1.2),
    )
    with pytest.raises(ProbabilityMassError):
        ifs_step(sys, 0.0, 0.0, np.random.default_rng(0))


def test_ifs_needs_matching_lengths():
    with pytest.raises(ValueError):
        Ifs(maps=(lambda x: x,), probs=())


def test_ifs_signal_dependent_selection():
    # weight flips with the sign of pi, making selection deterministic
    sys = Ifs(
        maps=(lambda x: x + 1.0, lambda x: x - 1.0),
        probs=(lambda pi: 1.0 if pi > 0 else 0.0, lambda pi: 0.0 if pi > 0 else 1.0),
    )
    rng = np.random.default_rng(0)
    x = 0.0
    for _ in range(10):
        x = ifs_step(sys, x, 1.0, rng)
    assert x == 10.0
    for _ in range(4):
        x = ifs_step(sys, x, -1.0, rng)
    assert x == 6.0


def test_ifs_selection_frequencies():
    sys = Ifs(
        maps=(lambda x: x + 1.0, lambda x: x - 1.0),
        probs=(lambda pi: 0.7, lambda pi: 0.3),
    )
    rng = np.random.default_rng(123)
    steps = 5000
    x = 0.0
    for _ in range(steps):
        x = ifs_step(sys, x, 0.0, rng)
    # increments are +-1 with mean 0.4 and variance 0.84
    se = np.sqrt(0.84 / steps)
    assert abs(x / steps - 0.4) <= 4 * se

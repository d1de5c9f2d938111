import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fqpsa.dualsolve import DataUserState, RealTimeDemand, ResourceBudget, f_a, f_a_inv, solve
from fqpsa.sched import RateLedger, SchedConfig, fqpsa_frame, update_average
from fqpsa.selftest import random_instance
from fqpsa.traffic import Klass, drain, generate_arrivals, make_session, select_realtime

seeds = st.integers(0, 2 ** 32 - 1)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_fa_increasing_convex(a, b):
    a, b = min(a, b), max(a, b)
    # f_a(x) ~ x^2/2 underflows below ~1e-160; ask for resolvable pairs
    assume(b > 1e-150 and b - a > 1e-12 * b)
    assert f_a(a) < f_a(b)
    assert f_a(0.5 * (a + b)) <= 0.5 * (f_a(a) + f_a(b)) + 1e-12 * max(1.0, f_a(b))


@given(st.floats(1e-6, 1e5))
def test_fa_round_trip(x):
    assert abs(f_a_inv(f_a(x)) - x) <= 1e-9 * max(1.0, x)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(1e-3, 1e3))
def test_scale_covariance(seed, c):
    inst = random_instance(np.random.default_rng(seed), max_data=6, max_rt=3)
    base = solve(inst.data, inst.rt, inst.budget)
    b = inst.budget
    # averaged rates carry rate units, so they scale with the budgets too
    data = [DataUserState(u.user_id, u.noise_coeff, c * u.avg_rate, u.smoothing) for u in inst.data]
    rt = [RealTimeDemand(d.user_id, d.noise_coeff, c * d.rate_req) for d in inst.rt]
    scaled = solve(data, rt, ResourceBudget(c * b.total_power, c * b.total_bandwidth))
    for s0, s1 in zip(base.shares, scaled.shares):
        assert s1.bandwidth == pytest.approx(c * s0.bandwidth, rel=1e-8, abs=1e-12 * c * b.total_bandwidth)
        assert s1.power == pytest.approx(c * s0.power, rel=1e-8, abs=1e-12 * c * b.total_power)
        if s0.bandwidth > 0:
            assert s1.eff_sinr == pytest.approx(s0.eff_sinr, rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(1e-3, 1e3), st.integers(1, 6), st.integers(0, 3))
def test_equal_noise_equalizes(seed, n, nd, nr):
    rng = np.random.default_rng(seed)
    P, W = 10.0, 1.0
    data = [DataUserState(i, n, float(rng.uniform(0.1, 10)), 0.999) for i in range(nd)]
    x_eq = P / (n * W)
    rt = [RealTimeDemand(nd + j, n, float(rng.uniform(0.01, 0.3)) * W * math.log1p(x_eq) / max(nr, 1))
          for j in range(nr)]
    res = solve(data, rt, ResourceBudget(P, W))
    for s in res.shares:
        if s.bandwidth > 0:
            assert s.eff_sinr == pytest.approx(x_eq, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_budget_equality_and_kkt(seed):
    inst = random_instance(np.random.default_rng(seed))
    res = solve(inst.data, inst.rt, inst.budget)
    assert res.total_bandwidth == pytest.approx(inst.budget.total_bandwidth, rel=1e-6)
    assert res.total_power == pytest.approx(inst.budget.total_power, rel=1e-6)
    for s in res.shares:
        if s.bandwidth > 0:
            n = next(u.noise_coeff for u in inst.data + inst.rt if u.user_id == s.user_id)
            assert n * f_a(s.eff_sinr) == pytest.approx(res.dual.lambda_a, rel=1e-6)


@given(st.floats(0, 1e9), st.floats(0, 1e9), st.floats(1e-6, 1 - 1e-6))
def test_update_average_convex(R, r, a):
    out = update_average(R, r, a)
    assert min(R, r) * (1 - 1e-12) <= out <= max(R, r) * (1 + 1e-12)


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 1e7)), min_size=1, max_size=50),
       st.floats(0.5, 0.9999))
def test_ledger_positive_after_grant(grants, a):
    led = RateLedger(alpha=a, init_rate=0.0)
    led.register(0)
    seen = False
    for g in grants:
        led.update(0, g)
        seen = seen or g > 0
        if seen:
            assert led[0] > 0


@given(st.sampled_from([Klass.VOICE, Klass.VIDEO, Klass.DATA]),
       st.lists(st.floats(0, 5000), min_size=1, max_size=300))
def test_queue_conservation(klass, grants):
    s = make_session(0, klass)
    for f, g in enumerate(grants):
        generate_arrivals(s, f * 1e-3)
        drain(s, g, (f + 1) * 1e-3)
        assert s.delivered_bits + s.queued_bits == pytest.approx(s.generated_bits, rel=1e-12, abs=1e-6)
    elapsed = len(grants) * 1e-3
    assert all(0 <= d <= elapsed + 1e-12 for d in s.delay_samples)


@given(st.integers(1, 40))
def test_voice_exact_cbr(periods):
    s = make_session(0, Klass.VOICE)
    for f in range(periods * 20):
        generate_arrivals(s, f * 1e-3)
    assert s.generated_bits == 32000 * periods * 0.020


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(0, 5), st.floats(0.001, 0.05))
def test_selection_monotone_in_hol(seed, who, extra):
    rng = np.random.default_rng(seed)
    k = 6

    def build(shift):
        ss = []
        for i in range(k):
            s = make_session(i, Klass.VOICE if i % 2 else Klass.VIDEO)
            age = float(rng_ages[i]) + (shift if i == who else 0.0)
            s._enqueue(640, -age)
            ss.append(s)
        return ss

    rng_ages = rng.uniform(0.06, 0.09, size=k)
    noise = {i: float(10 ** rng.uniform(-13, -10)) for i in range(k)}
    rates = {i: float(rng.uniform(1e3, 1e5)) for i in range(k)}

    def rank(shift):
        sel = select_realtime(build(shift), noise, rates, 0.0, 1e-3)
        return [d.user_id for d in sel.demands].index(who)

    assert rank(extra) <= rank(0.0)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_fqpsa_frame_within_budget(seed):
    rng = np.random.default_rng(seed)
    budget = ResourceBudget(20.0, 8.3e6)
    sessions, noise = [], {}
    for i, klass in enumerate([Klass.VOICE] * 6 + [Klass.VIDEO] * 6 + [Klass.DATA] * 4):
        s = make_session(i, klass)
        generate_arrivals(s, 0.0)
        for j in range(int(rng.integers(0, 30))):
            s._enqueue(s.profile.packet_bits, -0.005 * j)
        sessions.append(s)
        noise[i] = float(10 ** rng.uniform(-13, -8))
    led = RateLedger()
    for i in noise:
        led.register(i)
    ref = {i: noise[i] * float(rng.exponential()) for i in noise}
    alloc = fqpsa_frame(sessions, noise, led, budget, SchedConfig(), 0.2, channel_ref=ref)
    assert not alloc.fallback
    assert alloc.total_bandwidth <= budget.total_bandwidth * (1 + 1e-6)
    assert alloc.total_power <= budget.total_power * (1 + 1e-6)
    assert all(v >= 0 for v in list(alloc.bandwidth.values()) + list(alloc.power.values()))


@settings(max_examples=60)
@given(seeds, st.integers(1, 15), st.floats(0.05, 1.0))
def test_admission_independent_of_guess(seed, k, share):
    from fqpsa.dualsolve import check_feasible
    from fqpsa.sched import admit_realtime
    rng = np.random.default_rng(seed)
    budget = ResourceBudget(1.0, 1.0)
    demands = [RealTimeDemand(i, float(10 ** rng.uniform(-2, 1)), float(rng.uniform(0.01, 0.3)))
               for i in range(k)]
    results = {len(admit_realtime(demands, budget, share, g)) for g in [None, 1, 2, k // 2 + 1, k]}
    assert len(results) == 1
    m = results.pop()
    cap = ResourceBudget(share, 1.0)
    assert m == 1 or check_feasible(demands[:m], cap)[0]
    assert m == k or not check_feasible(demands[:m + 1], cap)[0]

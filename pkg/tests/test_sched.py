import math
from dataclasses import replace

import numpy as np
import pytest

from fqpsa.channel import shannon_rate
from fqpsa.dualsolve import RealTimeDemand, ResourceBudget
from fqpsa.sched import (RateLedger, SchedConfig, admit_realtime, fqpsa_frame, log_sum,
                         mlwdf_frame, mlwdf_metric, mlwdf_weight, update_average)
from fqpsa.traffic import LN2, VOICE, Klass, generate_arrivals, make_session

BUDGET = ResourceBudget(20.0, 8.3e6)


@pytest.mark.parametrize("R, r, a, out", [(100, 200, 0.9, 110), (50, 50, 0.3, 50), (0, 100, 0.999, 0.1)])
def test_update_average(R, r, a, out):
    assert update_average(R, r, a) == pytest.approx(out, rel=1e-12)


class TestLogSum:
    def ledger(self, rates_bits):
        led = RateLedger()
        for k, r in enumerate(rates_bits):
            led.rates[k] = r * LN2
        return led

    def test_examples(self):
        assert log_sum(self.ledger([1.0, 1.0, 1.0]), [0, 1, 2]) == pytest.approx(0.0, abs=1e-14)
        assert log_sum(self.ledger([math.e, math.e ** 2]), [0, 1]) == pytest.approx(3.0, rel=1e-14)

    def test_scaling(self):
        base = log_sum(self.ledger([3.0, 7.0, 11.0]), [0, 1, 2])
        assert log_sum(self.ledger([30.0, 70.0, 110.0]), [0, 1, 2]) == pytest.approx(base + 3 * math.log(10))

    def test_zero(self):
        assert log_sum(self.ledger([0.0, 1.0]), [0, 1]) == -math.inf


def _data_sessions(k):
    out = []
    for uid in range(k):
        s = make_session(uid, Klass.DATA)
        generate_arrivals(s, 0.0)
        out.append(s)
    return out


def _ledger(ids, rate=1.0):
    led = RateLedger(init_rate=rate)
    for uid in ids:
        led.register(uid)
    return led


class TestFqpsaFrame:
    def test_single_data_user(self):
        ss = _data_sessions(1)
        led = _ledger([0])
        n = 1e-12
        alloc = fqpsa_frame(ss, {0: n}, led, BUDGET, SchedConfig(), 0.0)
        assert alloc.bandwidth[0] == pytest.approx(BUDGET.total_bandwidth, rel=1e-6)
        assert alloc.power[0] == pytest.approx(BUDGET.total_power, rel=1e-6)
        r = shannon_rate(BUDGET.total_bandwidth, BUDGET.total_power, n)
        assert led[0] == pytest.approx(update_average(1.0, r, led.alpha), rel=1e-6)

    def test_symmetric_grants(self):
        ss = _data_sessions(2)
        alloc = fqpsa_frame(ss, {0: 1e-12, 1: 1e-12}, _ledger([0, 1]), BUDGET, SchedConfig(), 0.0)
        assert alloc.rate[0] == pytest.approx(alloc.rate[1], rel=1e-9)

    def test_degradation_flagged(self):
        v = make_session(9, Klass.VOICE)
        for k in range(6):
            v._enqueue(1e9, 0.0)  # far more than one frame can carry
        ss = _data_sessions(1) + [v]
        noise = {0: 1e-12, 9: 1e-6}
        cfg = SchedConfig(rt_power_share=None)
        alloc = fqpsa_frame(ss, noise, _ledger([0, 9]), BUDGET, cfg, 0.06)
        assert alloc.degraded and alloc.degraded[0][0] == 9
        assert not alloc.fallback
        assert alloc.total_power <= BUDGET.total_power * (1 + 1e-6)
        assert alloc.total_bandwidth <= BUDGET.total_bandwidth * (1 + 1e-6)

    def test_quantized_only_for_data(self):
        ss = _data_sessions(1)
        alloc = fqpsa_frame(ss, {0: 1e-12}, _ledger([0]), BUDGET, SchedConfig(quantize=True), 0.0)
        assert alloc.quantized_rate[0] <= alloc.rate[0]
        assert alloc.granted_bits[0] == pytest.approx(alloc.quantized_rate[0] * 1e-3 / LN2)


def test_admit_prefix():
    budget = ResourceBudget(1.0, 1.0)
    d = [RealTimeDemand(k, 1.0, 0.1) for k in range(10)]
    kept = admit_realtime(d, budget, 0.5)
    assert 1 <= len(kept) < 10 and kept == d[:len(kept)]
    assert admit_realtime(d, budget, None) == d
    # the first demand survives even when it alone is too expensive
    assert admit_realtime([RealTimeDemand(0, 1.0, 5.0), d[0]], budget, 0.1) == [RealTimeDemand(0, 1.0, 5.0)]


class TestMlwdf:
    def test_weight(self):
        s = make_session(0, Klass.VOICE)
        assert mlwdf_weight(s, 1e6) == pytest.approx(2.9957e-5, rel=1e-4)

    def test_metric_linear_in_hol(self):
        s = make_session(0, Klass.VOICE)
        assert mlwdf_metric(s, 1.0, 1e-12, BUDGET, 24, 0.0) == 0.0
        s._enqueue(640, 0.0)
        m1 = mlwdf_metric(s, 1.0, 1e-12, BUDGET, 24, 0.01)
        m2 = mlwdf_metric(s, 1.0, 1e-12, BUDGET, 24, 0.02)
        assert m1 > 0 and m2 == pytest.approx(2 * m1)

    def test_empty_queues_decay(self):
        ss = [make_session(k, Klass.VOICE) for k in range(2)]
        led = _ledger([0, 1], rate=5.0)
        alloc = mlwdf_frame(ss, {0: 1e-12, 1: 1e-12}, led, BUDGET, SchedConfig(), 0.0)
        assert not alloc.bandwidth and led[0] == pytest.approx(5.0 * led.alpha)

    def test_single_user_takes_all(self):
        ss = _data_sessions(1)
        ss[0].queue[0][1] = -0.01
        alloc = mlwdf_frame(ss, {0: 1e-12}, _ledger([0]), BUDGET, SchedConfig(), 0.0)
        assert alloc.bandwidth[0] == pytest.approx(BUDGET.total_bandwidth)
        assert alloc.total_power == pytest.approx(BUDGET.total_power)

    def _pair(self):
        ss = _data_sessions(2)
        for s in ss:
            s.queue[0][1] = -0.01
        return ss

    def test_alternation_by_hand(self):
        # step the per-subchannel update by hand: R0 = 1, four subchannels
        alpha, n, k = 0.999, 1e-12, 4
        w_sub, p_sub = BUDGET.total_bandwidth / k, BUDGET.total_power / k
        r_sub = w_sub * math.log1p(p_sub / (n * w_sub))
        R = [alpha * 1.0, alpha * 1.0]
        frame = [0.0, 0.0]
        seq = []
        for _ in range(k):
            i = 0 if 1 / R[0] >= 1 / R[1] else 1
            seq.append(i)
            frame[i] += r_sub
            R[i] = alpha * 1.0 + (1 - alpha) * frame[i]
        assert seq == [0, 1, 0, 1]
        alloc = mlwdf_frame(self._pair(), {0: n, 1: n}, _ledger([0, 1]), BUDGET,
                            SchedConfig(n_sub=k), 0.0)
        assert alloc.bandwidth == {0: 2 * w_sub, 1: 2 * w_sub}

    def test_once_per_frame_variant(self):
        alloc = mlwdf_frame(self._pair(), {0: 1e-12, 1: 1e-12}, _ledger([0, 1]), BUDGET,
                            SchedConfig(n_sub=4, mlwdf_per_subchannel=False), 0.0)
        assert alloc.bandwidth == {0: BUDGET.total_bandwidth}

    def test_argmax_invariance(self):
        def winners(delta):
            prof = replace(VOICE, exceed_prob=delta)
            ss = []
            for k in range(3):
                s = make_session(k, Klass.VOICE, profile=prof)
                for j in range(5):
                    s._enqueue(640, -0.01 * (k + 1) - 0.02 * j)
                ss.append(s)
            noise = {0: 1e-12, 1: 3e-12, 2: 2e-13}
            led = _ledger(range(3))
            led.rates.update({0: 1e5, 1: 2e5, 2: 4e5})
            return mlwdf_frame(ss, noise, led, BUDGET, SchedConfig(), 0.0).bandwidth
        assert winners(0.05) == winners(0.01)

    def test_every_subchannel_once(self):
        ss = [make_session(k, Klass.VIDEO) for k in range(5)] + _data_sessions(0)
        rng = np.random.default_rng(3)
        for s in ss:
            for j in range(40):
                s._enqueue(1280, -0.001 * j)
        noise = {k: float(10 ** rng.uniform(-14, -10)) for k in range(5)}
        alloc = mlwdf_frame(ss, noise, _ledger(range(5)), BUDGET, SchedConfig(), 0.0)
        assert alloc.total_bandwidth == pytest.approx(BUDGET.total_bandwidth)
        assert alloc.total_power == pytest.approx(BUDGET.total_power)

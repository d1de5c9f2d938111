"""Randomized invariant checks for the per-frame solver.

Used by ``fqpsa selftest`` and by the test suite.  Each family reports the
number of instances checked and the worst relative violation seen.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dualsolve import (DataUserState, RealTimeDemand, ResourceBudget, check_feasible, f_a,
                        solve)

TOL = 1e-6


@dataclass
class Instance:
    data: list
    rt: list
    budget: ResourceBudget


def random_instance(rng: np.random.Generator, max_data: int = 20, max_rt: int = 10,
                    noise_decades: float = 6.0, power: float = 10.0,
                    bandwidth: float = 1.0) -> Instance:
    """A random feasible instance.

    Noise coefficients are log-uniform over ``noise_decades`` decades
    centred so that the median user sees an SNR of order one.  Real-time
    rates are drawn and then scaled down until the demand set is feasible.
    """
    budget = ResourceBudget(power, bandwidth)
    nd = int(rng.integers(1, max_data + 1))
    nr = int(rng.integers(0, max_rt + 1))
    centre = math.log10(power / bandwidth)
    half = noise_decades / 2.0

    def noise(k):
        return 10.0 ** rng.uniform(centre - half, centre + half, size=k)

    alpha = 0.999
    data = [DataUserState(i, float(n), float(10.0 ** rng.uniform(-1, 1)) * bandwidth, alpha)
            for i, n in enumerate(noise(nd))]
    n_r = noise(nr)
    share = rng.uniform(0.05, 0.6, size=nr) * bandwidth / max(nr, 1)
    rates = share * np.log1p(power / (n_r * bandwidth))
    rt = [RealTimeDemand(nd + j, float(n), float(r)) for j, (n, r) in enumerate(zip(n_r, rates))]
    while rt and not check_feasible(rt, budget)[0]:
        rt = [RealTimeDemand(d.user_id, d.noise_coeff, 0.5 * d.rate_req) for d in rt]
    return Instance(data, rt, budget)


@dataclass
class FamilyResult:
    name: str
    checked: int = 0
    worst: float = 0.0
    tol: float = TOL
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and self.worst <= self.tol

    def record(self, index: int, value: float):
        self.checked += 1
        if not value <= self.worst:
            self.worst = value
        if not value <= self.tol and len(self.failures) < 5:
            self.failures.append((index, value))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.checked} checks, worst {self.worst:.3e} (tol {self.tol:.0e})"


def check_instance(inst: Instance, families: dict, index: int):
    res = solve(inst.data, inst.rt, inst.budget)
    W, P = inst.budget.total_bandwidth, inst.budget.total_power
    by_id = {s.user_id: s for s in res.shares}
    lam = res.dual.lambda_a
    families["budget"].record(index, max(abs(res.total_bandwidth - W) / W,
                                         abs(res.total_power - P) / P))
    worst = 0.0
    for u in inst.data:
        s = by_id[u.user_id]
        if s.bandwidth > 0:
            worst = max(worst, abs(u.noise_coeff * f_a(s.eff_sinr) - lam) / lam)
        else:
            # an idle data user must not want bandwidth at this water level
            level = u.noise_coeff * (1.0 + s.eff_sinr) * u.avg_rate * u.alpha_tilde
            worst = max(worst, max(res.dual.lambda_p - level, 0.0) / max(res.dual.lambda_p, 1e-300))
    for d in inst.rt:
        s = by_id[d.user_id]
        worst = max(worst, abs(d.noise_coeff * f_a(s.eff_sinr) - lam) / lam)
    families["kkt"].record(index, worst)
    worst = 0.0
    for d in inst.rt:
        worst = max(worst, abs(by_id[d.user_id].rate - d.rate_req) / d.rate_req)
    families["rt_rates"].record(index, worst)
    neg = max([0.0] + [-min(s.bandwidth, s.power) for s in res.shares])
    families["nonnegative"].record(index, neg)


def run_selftest(n_instances: int = 1000, seed: int = 0):
    """Returns ``(families, elapsed_seconds)``."""
    rng = np.random.default_rng(seed)
    families = {name: FamilyResult(name) for name in ("budget", "kkt", "rt_rates", "nonnegative")}
    families["solver"] = FamilyResult("solver", tol=0.0)
    start = time.perf_counter()
    for i in range(n_instances):
        inst = random_instance(rng)
        try:
            check_instance(inst, families, i)
            families["solver"].record(i, 0.0)
        except Exception as exc:  # noqa: BLE001 - any failure is reported, not raised
            families["solver"].record(i, math.inf)
            families["solver"].failures[-1:] = [(i, repr(exc))]
    return families, time.perf_counter() - start

"""Per-frame schedulers: FQPSA (dual solver) and the M-LWDF-PF benchmark."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .channel import DEFAULT_MCS, McsTable, quantize_rate, shannon_rate
from .dualsolve import (DataUserState, RealTimeDemand, ResourceBudget, SolverError, UserShare,
                        check_feasible, solve)
from .traffic import LN2, Klass, RealTimePolicy, Session, drain, hol_delay, select_realtime

log = logging.getLogger(__name__)

FQPSA = "fqpsa"
MLWDF = "mlwdf"


def update_average(R: float, r: float, alpha: float) -> float:
    """Exponentially averaged rate ``alpha R + (1 - alpha) r``."""
    return alpha * R + (1.0 - alpha) * r


@dataclass
class RateLedger:
    """Averaged received rate per user, in nats/s."""

    alpha: float = 0.999
    init_rate: float = 1.0
    rates: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    def register(self, user_id):
        self.rates.setdefault(user_id, self.init_rate)

    def __getitem__(self, user_id) -> float:
        return self.rates[user_id]

    def update(self, user_id, r: float):
        self.rates[user_id] = update_average(self.rates[user_id], r, self.alpha)


def log_sum(ledger: RateLedger, users: Sequence[Hashable]) -> float:
    """Sum of ln R over ``users`` with R in bits/s; -inf if any rate is zero."""
    total = 0.0
    for uid in users:
        R = ledger[uid]
        if R <= 0:
            log.warning("log-sum undefined: user %s has zero average rate", uid)
            return -math.inf
        total += math.log(R / LN2)
    return total


@dataclass
class SchedConfig:
    frame_len: float = 1e-3
    quantize: bool = False
    mcs: McsTable = DEFAULT_MCS
    rt_cap: int | None = 18
    n_sub: int = 24
    # M-LWDF-PF: refresh R after every subchannel (else once per frame)
    mlwdf_per_subchannel: bool = True
    rt_policy: RealTimePolicy = RealTimePolicy()
    # admit real-time demands while their minimum power stays below this
    # share of P; None admits every selected demand
    rt_power_share: float | None = 0.25

    def __post_init__(self):
        if not self.frame_len > 0:
            raise ValueError("frame_len must be positive")
        if self.n_sub < 1:
            raise ValueError("n_sub must be at least 1")
        if self.rt_power_share is not None and not 0 < self.rt_power_share <= 1:
            raise ValueError("rt_power_share must lie in (0, 1]")


@dataclass
class FrameAllocation:
    scheduler_id: str
    bandwidth: dict = field(default_factory=dict)
    power: dict = field(default_factory=dict)
    rate: dict = field(default_factory=dict)  # continuous, nats/s
    quantized_rate: dict = field(default_factory=dict)  # nats/s
    granted_bits: dict = field(default_factory=dict)
    fallback: bool = False
    degraded: list = field(default_factory=list)
    lambda_a: float | None = None
    admitted: int = 0  # real-time demands passed to the solver

    @property
    def total_bandwidth(self) -> float:
        return math.fsum(self.bandwidth.values())

    @property
    def total_power(self) -> float:
        return math.fsum(self.power.values())


def _equal_split(users: Sequence[Hashable], noise: Mapping, budget: ResourceBudget):
    k = len(users)
    w, p = budget.total_bandwidth / k, budget.total_power / k
    return [UserShare(uid, w, p, p / (noise[uid] * w)) for uid in users]


def admit_realtime(demands: Sequence[RealTimeDemand], budget: ResourceBudget,
                   share: float | None, guess: int | None = None) -> list[RealTimeDemand]:
    """Longest prefix of ``demands`` (already in priority order) whose
    minimum power fits in ``share * P``; the first demand is always kept.

    Minimum power grows with every demand added, so the prefix length is
    found by galloping out from ``guess`` (e.g. last frame's count) and then
    bisecting; the answer does not depend on ``guess``.
    """
    demands = list(demands)
    k = len(demands)
    if share is None or k <= 1:
        return demands
    cap = ResourceBudget(share * budget.total_power, budget.total_bandwidth)

    def fits(m):
        return check_feasible(demands[:m], cap)[0]

    g = min(max(guess if guess is not None else k, 1), k)
    # invariant: prefix lo fits (or lo == 1), prefix hi does not (or hi == k + 1)
    if g == 1 or fits(g):
        lo, step = g, 1
        hi = k + 1
        while lo < k:
            m = min(lo + step, k)
            if fits(m):
                lo, step = m, 2 * step
            else:
                hi = m
                break
    else:
        hi, step = g, 1
        lo = 1
        while hi > 2:
            m = max(hi - step, 1)
            if m == 1 or fits(m):
                lo = m
                break
            hi, step = m, 2 * step
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return demands[:lo]


def fqpsa_frame(sessions: Sequence[Session], noise: Mapping, ledger: RateLedger,
                budget: ResourceBudget, cfg: SchedConfig, now: float,
                lambda_hint: float | None = None,
                channel_ref: Mapping | None = None,
                admit_hint: int | None = None) -> FrameAllocation:
    """One FQPSA frame: select real-time demands, solve, serve, update averages.

    ``noise`` maps user id to its link coefficient ``n_i``.  Queues are
    drained at ``now + frame_len``.  ``channel_ref`` is passed to the
    real-time selection; ``lambda_hint`` and ``admit_hint`` (last frame's
    ``lambda_a`` and admitted count) only speed up the searches.
    """
    T = cfg.frame_len
    W, P = budget.total_bandwidth, budget.total_power
    full_rate = {s.user_id: shannon_rate(W, P, noise[s.user_id]) / LN2
                 for s in sessions if s.klass.realtime and s.queue}
    selection = select_realtime(sessions, noise, ledger.rates, now, T, cfg.rt_cap, channel_ref,
                                full_rate, cfg.rt_policy)
    rt = admit_realtime(selection.demands, budget, cfg.rt_power_share, admit_hint)
    data = [DataUserState(s.user_id, noise[s.user_id], ledger[s.user_id], ledger.alpha)
            for s in sessions if s.klass is Klass.DATA and s.queue]
    alloc = FrameAllocation(FQPSA, admitted=len(rt))
    if data or rt:
        try:
            result = solve(data, rt, budget, lambda_hint=lambda_hint)
            shares = result.shares
            alloc.degraded = result.degraded_rates
            alloc.lambda_a = result.dual.lambda_a
        except SolverError as exc:
            log.warning("solver failed at t=%.4f (%s); equal split this frame", now, exc)
            users = [u.user_id for u in data] + [d.user_id for d in rt]
            shares = _equal_split(users, noise, budget)
            alloc.fallback = True
        for sh in shares:
            alloc.bandwidth[sh.user_id] = sh.bandwidth
            alloc.power[sh.user_id] = sh.power
            alloc.rate[sh.user_id] = sh.rate
            alloc.quantized_rate[sh.user_id] = quantize_rate(sh, cfg.mcs) if cfg.quantize else sh.rate
    done = now + T
    for s in sessions:
        uid = s.user_id
        r = alloc.rate.get(uid, 0.0)
        # real-time grants are sized by the solver to carry their demand
        realized = alloc.quantized_rate.get(uid, 0.0) if cfg.quantize and not s.klass.realtime else r
        bits = realized * T / LN2
        alloc.granted_bits[uid] = bits
        drain(s, bits, done)
        ledger.update(uid, r)
    return alloc


def mlwdf_weight(session: Session, avg_rate: float) -> float:
    """``a_i = -ln(delta) / (D_max R)``."""
    return -math.log(session.exceed_prob) / (session.delay_bound * avg_rate)


def mlwdf_metric(session: Session, avg_rate: float, noise_coeff: float,
                 budget: ResourceBudget, n_sub: int, now: float) -> float:
    """``a_i D_HOL ln(1 + p_sub / (n_i w_sub))`` with power split equally
    over ``n_sub`` subchannels."""
    w_sub = budget.total_bandwidth / n_sub
    p_sub = budget.total_power / n_sub
    return mlwdf_weight(session, avg_rate) * hol_delay(session, now) * math.log1p(
        p_sub / (noise_coeff * w_sub))


def mlwdf_frame(sessions: Sequence[Session], noise: Mapping, ledger: RateLedger,
                budget: ResourceBudget, cfg: SchedConfig, now: float) -> FrameAllocation:
    """Subchannel-by-subchannel M-LWDF-PF with equal power per subchannel."""
    if cfg.n_sub < 1:
        raise ValueError("n_sub must be at least 1")
    T = cfg.frame_len
    w_sub = budget.total_bandwidth / cfg.n_sub
    p_sub = budget.total_power / cfg.n_sub
    k = len(sessions)
    ids = [s.user_id for s in sessions]
    n = np.array([noise[u] for u in ids], dtype=float)
    x = p_sub / (n * w_sub)
    eff = cfg.mcs.efficiency(x) if cfg.quantize else np.log1p(x)
    eff = np.asarray(eff, dtype=float).reshape(k)
    r_sub = w_sub * eff  # nats/s per subchannel
    urgency = np.array([-math.log(s.exceed_prob) / s.delay_bound * hol_delay(s, now)
                        for s in sessions], dtype=float)
    backlog = np.array([s.queued_bits for s in sessions], dtype=float)
    R_prev = np.array([ledger[u] for u in ids], dtype=float)
    alpha = ledger.alpha
    won = np.zeros(k, dtype=int)
    r_frame = np.zeros(k)
    R_now = alpha * R_prev
    alloc = FrameAllocation(MLWDF)
    for _ in range(cfg.n_sub):
        eligible = backlog - r_frame * T / LN2 > 1e-9
        if not eligible.any():
            break
        metric = np.where(eligible, urgency * eff / R_now, -np.inf)
        i = int(np.argmax(metric))  # first maximum, i.e. lowest index on ties
        won[i] += 1
        r_frame[i] += r_sub[i]
        if cfg.mlwdf_per_subchannel:
            R_now[i] = alpha * R_prev[i] + (1.0 - alpha) * r_frame[i]
    done = now + T
    for j, s in enumerate(sessions):
        uid = ids[j]
        if won[j]:
            alloc.bandwidth[uid] = won[j] * w_sub
            alloc.power[uid] = won[j] * p_sub
            alloc.rate[uid] = float(r_frame[j])
            alloc.quantized_rate[uid] = float(r_frame[j])
        bits = float(r_frame[j]) * T / LN2
        alloc.granted_bits[uid] = bits
        drain(s, bits, done)
        ledger.update(uid, float(r_frame[j]))
    return alloc

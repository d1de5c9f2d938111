"""Frame-level simulation engine, metric collection and parameter sweeps."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channel import (DEFAULT_MCS, McsTable, PropagationParams, link_coefficient, new_channel,
                      update_channel)
from .dualsolve import ResourceBudget
from .sched import FQPSA, MLWDF, RateLedger, SchedConfig, fqpsa_frame, log_sum, mlwdf_frame
from .traffic import Klass, RealTimePolicy, generate_arrivals, make_session

log = logging.getLogger(__name__)

SCHEDULERS = (FQPSA, MLWDF)
AXES = {"voice": "voice_users", "video": "video_users", "data": "data_users"}

# per-class spawn-key prefixes; user k of a class always draws the same stream
_CLASS_CODE = {Klass.VOICE: 1, Klass.VIDEO: 2, Klass.DATA: 3}


@dataclass(frozen=True)
class ScenarioConfig:
    voice_users: int = 20
    video_users: int = 20
    data_users: int = 20
    distances: tuple[float, ...] = (300.0, 600.0, 900.0, 1200.0, 1500.0)
    budget: ResourceBudget = ResourceBudget(20.0, 8.3e6)
    frame_len: float = 1e-3
    frames: int = 60_000
    warmup: float = 2.0
    seed: int = 1
    scheduler: str = FQPSA
    propagation: PropagationParams = PropagationParams()
    quantize: bool = False
    mcs: McsTable = DEFAULT_MCS
    alpha: float = 0.999
    init_rate: float = 1.0
    rt_cap: int | None = 18
    n_sub: int = 24
    voice_activity: float = 1.0
    mlwdf_per_subchannel: bool = True
    # rank real-time users on fast fading relative to their slow channel
    relative_channel: bool = True
    rt_policy: RealTimePolicy = RealTimePolicy()
    rt_power_share: float | None = 0.25

    def validate(self):
        counts = (self.voice_users, self.video_users, self.data_users)
        if any(c < 0 for c in counts) or sum(counts) < 1:
            raise ValueError(f"user counts must be >= 0 with at least one user, got {counts}")
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        if not self.frame_len > 0:
            raise ValueError("frame_len must be positive")
        if not self.distances or any(d < 1 for d in self.distances):
            raise ValueError("distances must be a nonempty list of values >= 1 m")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {SCHEDULERS}, got {self.scheduler!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.n_sub < 1:
            raise ValueError("n_sub must be >= 1")
        if self.rt_cap is not None and self.rt_cap < 0:
            raise ValueError("rt_cap must be >= 0")
        if not 0 <= self.voice_activity <= 1:
            raise ValueError("voice_activity must lie in [0, 1]")
        if not 0 <= self.warmup:
            raise ValueError("warmup must be >= 0")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        return self

    @property
    def duration(self) -> float:
        return self.frames * self.frame_len


@dataclass
class MetricsReport:
    scheduler: str
    data_throughput: float  # bits/s
    logsum: float
    # 95th-percentile delay (s) per real-time class for the nearest ("G")
    # and farthest ("B") distance groups
    delay_p95: dict
    fallback_frames: int
    degradation_events: int
    delay_samples: dict = field(default_factory=dict)
    channel_checksum: str = ""

    def rows(self) -> list[tuple[str, float]]:
        out = []
        for klass in ("voice", "video"):
            for grp in ("G", "B"):
                out.append((f"{klass}_p95_{grp}_ms", 1e3 * self.delay_p95[klass][grp]))
        out += [
            ("data_throughput_mbps", self.data_throughput / 1e6),
            ("logsum", self.logsum),
            ("fallback_frames", float(self.fallback_frames)),
            ("degradation_events", float(self.degradation_events)),
        ]
        return out


def _stream(seed: int, klass: Klass, index: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_CLASS_CODE[klass], index, purpose)))


def _p95(samples) -> float:
    return float(np.percentile(samples, 95)) if len(samples) else math.nan


def run_scenario(cfg: ScenarioConfig) -> MetricsReport:
    """Simulate ``cfg.frames`` frames and collect metrics after the warm-up."""
    cfg.validate()
    params = cfg.propagation
    T = cfg.frame_len
    sched_cfg = SchedConfig(frame_len=T, quantize=cfg.quantize, mcs=cfg.mcs, rt_cap=cfg.rt_cap,
                            n_sub=cfg.n_sub, mlwdf_per_subchannel=cfg.mlwdf_per_subchannel,
                            rt_policy=cfg.rt_policy, rt_power_share=cfg.rt_power_share)
    ledger = RateLedger(alpha=cfg.alpha, init_rate=cfg.init_rate)
    sessions, channels, chan_rngs, traffic_rngs, group = [], [], [], [], {}
    far = max(range(len(cfg.distances)), key=lambda j: cfg.distances[j])
    near = min(range(len(cfg.distances)), key=lambda j: cfg.distances[j])
    for klass, count in ((Klass.VOICE, cfg.voice_users), (Klass.VIDEO, cfg.video_users),
                         (Klass.DATA, cfg.data_users)):
        for k in range(count):
            uid = f"{klass.value}{k}"
            j = k % len(cfg.distances)
            activity = cfg.voice_activity if klass is Klass.VOICE else 1.0
            sessions.append(make_session(uid, klass, activity=activity))
            rng = _stream(cfg.seed, klass, k, 0)
            chan_rngs.append(rng)
            traffic_rngs.append(_stream(cfg.seed, klass, k, 1))
            channels.append(new_channel(uid, cfg.distances[j], rng, params))
            group[uid] = "G" if j == near else ("B" if j == far else None)
            ledger.register(uid)
    data_ids = [s.user_id for s in sessions if s.klass is Klass.DATA]

    digest = hashlib.sha256()
    warm_frame = int(math.ceil(cfg.warmup / T - 1e-9))
    if warm_frame >= cfg.frames:
        raise ValueError("warm-up must be shorter than the simulated duration")
    noise, slow = {}, {}
    next_fast = 0.0
    hint = admitted = None
    fallbacks = degradations = 0
    delivered_at_warm = {}
    delays_at_warm = {}
    logsum_acc = 0.0
    for f in range(cfg.frames):
        now = f * T
        if f == 0 or now >= next_fast - 1e-9:
            for i, ch in enumerate(channels):
                if f:
                    channels[i] = ch = update_channel(ch, now, chan_rngs[i], params)
                noise[ch.user_id] = link_coefficient(ch.gain, params)
                slow[ch.user_id] = noise[ch.user_id] * ch.fastfade_power
            digest.update(np.array([ch.gain for ch in channels]).tobytes())
            next_fast = now + params.fast_coherence
        for s, rng in zip(sessions, traffic_rngs):
            generate_arrivals(s, now, rng)
        if f == warm_frame:
            delivered_at_warm = {s.user_id: s.delivered_bits for s in sessions}
            delays_at_warm = {s.user_id: len(s.delay_samples) for s in sessions}
        if cfg.scheduler == FQPSA:
            alloc = fqpsa_frame(sessions, noise, ledger, cfg.budget, sched_cfg, now, hint,
                                slow if cfg.relative_channel else None, admitted)
            if alloc.lambda_a is not None:
                hint = alloc.lambda_a
            admitted = alloc.admitted or None
        else:
            alloc = mlwdf_frame(sessions, noise, ledger, cfg.budget, sched_cfg, now)
        if f >= warm_frame:
            fallbacks += alloc.fallback
            degradations += len(alloc.degraded)
            if data_ids:
                logsum_acc += log_sum(ledger, data_ids)

    measured = (cfg.frames - warm_frame) * T
    throughput = sum(s.delivered_bits - delivered_at_warm[s.user_id]
                     for s in sessions if s.klass is Klass.DATA) / measured
    delay_p95, delay_samples = {}, {}
    for klass in (Klass.VOICE, Klass.VIDEO):
        delay_p95[klass.value], delay_samples[klass.value] = {}, {}
        for grp in ("G", "B"):
            pooled = [d for s in sessions if s.klass is klass and group[s.user_id] == grp
                      for d in s.delay_samples[delays_at_warm[s.user_id]:]]
            delay_samples[klass.value][grp] = len(pooled)
            delay_p95[klass.value][grp] = _p95(pooled)
    logsum = logsum_acc / (cfg.frames - warm_frame) if data_ids else math.nan
    return MetricsReport(cfg.scheduler, throughput, logsum, delay_p95, fallbacks, degradations,
                         delay_samples, digest.hexdigest())


# table rows in the order the evaluation tables use
ROW_ORDER = [
    ("FQPSA Voice (G) ms", FQPSA, "voice_p95_G_ms"),
    ("FQPSA Voice (B) ms", FQPSA, "voice_p95_B_ms"),
    ("MLWDF Voice (G) ms", MLWDF, "voice_p95_G_ms"),
    ("MLWDF Voice (B) ms", MLWDF, "voice_p95_B_ms"),
    ("FQPSA Video (G) ms", FQPSA, "video_p95_G_ms"),
    ("FQPSA Video (B) ms", FQPSA, "video_p95_B_ms"),
    ("MLWDF Video (G) ms", MLWDF, "video_p95_G_ms"),
    ("MLWDF Video (B) ms", MLWDF, "video_p95_B_ms"),
    ("FQPSA Mbps", FQPSA, "data_throughput_mbps"),
    ("FQPSA log-sum", FQPSA, "logsum"),
    ("MLWDF Mbps", MLWDF, "data_throughput_mbps"),
    ("MLWDF log-sum", MLWDF, "logsum"),
    ("FQPSA fallback frames", FQPSA, "fallback_frames"),
    ("FQPSA degradation events", FQPSA, "degradation_events"),
]


@dataclass
class SweepTable:
    axis: str
    values: list
    rows: list  # (label, [cell per value])
    reports: dict  # (scheduler, value) -> MetricsReport


def sweep(base: ScenarioConfig, axis: str, values: Sequence[int],
          schedulers: Sequence[str] = SCHEDULERS) -> SweepTable:
    """Run each scheduler at every value of ``axis`` on common random numbers."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {sorted(AXES)}, got {axis!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    reports = {}
    for v in values:
        for name in schedulers:
            cfg = replace(base, scheduler=name, **{AXES[axis]: int(v)})
            log.info("sweep %s=%s scheduler=%s", axis, v, name)
            reports[(name, v)] = run_scenario(cfg)
    rows = []
    for label, name, key in ROW_ORDER:
        if name not in schedulers:
            continue
        rows.append((label, [dict(reports[(name, v)].rows())[key] for v in values]))
    return SweepTable(axis, values, rows, reports)

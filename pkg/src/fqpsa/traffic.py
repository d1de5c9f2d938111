"""Voice, video and data sessions: packet generation, queues and real-time selection."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .dualsolve import RealTimeDemand

LN2 = math.log(2.0)
# granted bits within this much of a packet still carry it (float round-off)
_BIT_SLACK = 1e-6
# arrivals scheduled within this much after ``now`` count as arrived
_TIME_SLACK = 1e-9


class Klass(enum.Enum):
    VOICE = "voice"
    VIDEO = "video"
    DATA = "data"

    @property
    def realtime(self) -> bool:
        return self is not Klass.DATA


@dataclass(frozen=True)
class TrafficProfile:
    packet_bits: float
    interval: float  # seconds between packets; ignored for data
    delay_bound: float
    exceed_prob: float = 0.05


VOICE = TrafficProfile(packet_bits=640, interval=0.020, delay_bound=0.1)
VIDEO = TrafficProfile(packet_bits=1280, interval=0.010, delay_bound=0.4)
DATA = TrafficProfile(packet_bits=5 * 8e6, interval=math.inf, delay_bound=1.0)

PROFILES = {Klass.VOICE: VOICE, Klass.VIDEO: VIDEO, Klass.DATA: DATA}


@dataclass
class Session:
    user_id: Hashable
    klass: Klass
    profile: TrafficProfile
    activity: float = 1.0
    # optional packet sizes (bits) cycled in place of the constant size
    trace: Sequence[float] | None = None
    queue: deque = field(default_factory=deque)  # [bits_remaining, arrival_time]
    queued_bits: float = 0.0
    delivered_bits: float = 0.0
    generated_bits: float = 0.0
    delay_samples: list = field(default_factory=list)
    next_index: int = 0

    @property
    def delay_bound(self) -> float:
        return self.profile.delay_bound

    @property
    def exceed_prob(self) -> float:
        return self.profile.exceed_prob

    def _enqueue(self, bits: float, arrival: float):
        self.queue.append([bits, arrival])
        self.queued_bits += bits
        self.generated_bits += bits


def make_session(user_id, klass: Klass, profile: TrafficProfile | None = None,
                 **kwargs) -> Session:
    return Session(user_id, klass, profile or PROFILES[klass], **kwargs)


def generate_arrivals(session: Session, now: float,
                      rng: np.random.Generator | None = None) -> int:
    """Enqueue every packet that has arrived by ``now``; returns the count.

    Real-time sources are periodic (packet ``k`` arrives at ``k * interval``).
    A data session holds one file at all times; drain reloads it.
    """
    if session.klass is Klass.DATA:
        if not session.queue:
            session._enqueue(session.profile.packet_bits, now)
            return 1
        return 0
    count = 0
    interval = session.profile.interval
    while session.next_index * interval <= now + _TIME_SLACK:
        k = session.next_index
        session.next_index += 1
        if session.activity < 1.0 and (rng is None or rng.random() >= session.activity):
            continue
        if session.trace:
            bits = float(session.trace[k % len(session.trace)])
        else:
            bits = session.profile.packet_bits
        session._enqueue(bits, k * interval)
        count += 1
    return count


def hol_delay(session: Session, now: float) -> float:
    if not session.queue:
        return 0.0
    return max(now - session.queue[0][1], 0.0)


def drain(session: Session, granted_bits: float, now: float) -> int:
    """Serve the queue FIFO with ``granted_bits``; returns packets completed.

    Service is fluid: a partly sent head packet keeps its progress and its
    delay sample is taken when the last bit leaves.  Grant beyond the queue
    is lost, except that a finished data file is replaced at once.
    """
    if granted_bits <= 0 or not session.queue:
        return 0
    done = 0
    budget = granted_bits
    is_data = session.klass is Klass.DATA
    while budget > 0 and session.queue:
        head = session.queue[0]
        take = min(head[0], budget)
        head[0] -= take
        budget -= take
        session.queued_bits -= take
        session.delivered_bits += take
        if head[0] <= _BIT_SLACK:
            session.queue.popleft()
            session.queued_bits -= head[0]
            session.delivered_bits += head[0]
            budget -= head[0]
            session.delay_samples.append(now - head[1])
            done += 1
            if is_data:
                session._enqueue(session.profile.packet_bits, now)
    if not session.queue:
        session.queued_bits = 0.0
    return done


@dataclass
class RealTimeSelection:
    demands: list[RealTimeDemand]
    selected_ids: set

    def __len__(self):
        return len(self.demands)


def urgency(session: Session, now: float, noise_coeff: float, avg_rate: float) -> float:
    """Selection score: ``a_i * D_HOL / n_i`` with ``a_i = -ln(delta) / (D_max R_i)``."""
    a = -math.log(session.exceed_prob) / (session.delay_bound * avg_rate)
    return a * hol_delay(session, now) / noise_coeff


@dataclass(frozen=True)
class RealTimePolicy:
    """How much a selected real-time session asks for in one frame.

    A session whose channel is at least ``fade_threshold`` times its
    reference level asks for its whole backlog, capped at
    ``burst_fraction`` of what the full cell could carry to it.  Otherwise
    it asks only for packets older than ``due_fraction`` of the delay bound,
    paced over their remaining slack.
    """

    fade_threshold: float = 1.0
    burst_fraction: float = 0.2
    due_fraction: float = 0.5

    def __post_init__(self):
        if not self.fade_threshold >= 0:
            raise ValueError("fade_threshold must be nonnegative")
        if not 0 < self.burst_fraction <= 1:
            raise ValueError("burst_fraction must lie in (0, 1]")
        if not 0 <= self.due_fraction <= 1:
            raise ValueError("due_fraction must lie in [0, 1]")


def rate_requirement(session: Session, now: float, frame_len: float,
                     due_fraction: float = 0.5) -> float:
    """Bits/s that keep the due backlog on schedule; 0 if nothing is due.

    Packets older than ``due_fraction * D_max`` are due.  Each is paced over
    its slack to the delay bound (one frame once the slack is shorter) and
    the rate is the largest FIFO cumulative backlog over slack.
    """
    if not session.queue:
        return 0.0
    bound = session.delay_bound
    hot = due_fraction * bound
    need = cum = 0.0
    for bits, arrival in session.queue:
        age = now - arrival
        if age < hot:
            break  # FIFO: everything behind is younger
        cum += bits
        need = max(need, cum / max(frame_len, bound - age))
    return need


def select_realtime(sessions: Iterable[Session], noise_coeffs: Mapping, avg_rates: Mapping,
                    now: float, frame_len: float, rt_cap: int | None = None,
                    channel_ref: Mapping | None = None, full_rate: Mapping | None = None,
                    policy: RealTimePolicy = RealTimePolicy()) -> RealTimeSelection:
    """Rank backlogged voice/video sessions by urgency and take the top ``rt_cap``.

    The score's channel term is ``1 / n_i``.  ``channel_ref`` gives each user
    a reference coefficient (its channel without fast fading); the channel
    term and the burst test then use ``n_ref / n_i``, how good the channel
    is now relative to the user's own typical level.  Without it every
    session passes the burst test.  ``full_rate``
    (bits/s over the whole cell) caps bursts.  Sessions that need nothing
    this frame are skipped.  Rate requirements are returned in nats/s.
    """
    if not frame_len > 0:
        raise ValueError("frame_len must be positive")
    ranked = []
    for order, s in enumerate(sessions):
        if not s.klass.realtime or not s.queue:
            continue
        uid = s.user_id
        n = noise_coeffs[uid]
        ratio = channel_ref[uid] / n if channel_ref is not None else 1.0
        need = rate_requirement(s, now, frame_len, policy.due_fraction)
        if ratio >= policy.fade_threshold:
            burst = s.queued_bits / frame_len
            if full_rate is not None:
                burst = min(burst, policy.burst_fraction * full_rate[uid])
            need = max(need, burst)
        if need <= 0:
            continue
        chan = 1.0 / ratio if channel_ref is not None else n
        ranked.append((-urgency(s, now, chan, avg_rates[uid]), order, s, need))
    ranked.sort(key=lambda item: (item[0], item[1]))
    if rt_cap is not None:
        ranked = ranked[:max(int(rt_cap), 0)]
    demands = [RealTimeDemand(s.user_id, noise_coeffs[s.user_id], need * LN2)
               for _, _, s, need in ranked]
    return RealTimeSelection(demands, {d.user_id for d in demands})

"""Propagation model, link coefficients and rate mapping.

Gains combine distance path loss, lognormal shadowing redrawn every slow
coherence interval and Rayleigh fading redrawn every fast coherence interval
(block fading).  Rates are in nats/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Hashable, Iterable

import numpy as np

from .dualsolve import UserShare

# -174 dBm/Hz in W/Hz
DEFAULT_NOISE_PSD = 10 ** ((-174.0 - 30.0) / 10.0)

# redraw when at least this much of a coherence interval has elapsed
_TIME_SLACK = 1e-9


@dataclass(frozen=True)
class PropagationParams:
    noise_psd: float = DEFAULT_NOISE_PSD
    snr_gap: float = 0.25
    shadow_mean_db: float = 0.0
    shadow_sigma_db: float = 8.0
    fast_coherence: float = 5e-3
    slow_coherence: float = 0.3

    def __post_init__(self):
        if not self.noise_psd > 0:
            raise ValueError("noise_psd must be positive")
        if not 0 < self.snr_gap <= 1:
            raise ValueError("snr_gap must lie in (0, 1]")
        if not self.shadow_sigma_db >= 0:
            raise ValueError("shadow_sigma_db must be nonnegative")
        if not (self.fast_coherence > 0 and self.slow_coherence > 0):
            raise ValueError("coherence times must be positive")


@dataclass(frozen=True)
class ChannelState:
    user_id: Hashable
    distance: float
    pathloss_db: float
    shadow_db: float
    fastfade_power: float
    last_slow_update: float
    last_fast_update: float

    @property
    def gain(self) -> float:
        return 10.0 ** ((self.pathloss_db + self.shadow_db) / 10.0) * self.fastfade_power


def path_loss_db(distance: float) -> float:
    """Distance-dependent channel gain in dB (negative), exponent 3.5."""
    if not distance >= 1.0:
        raise ValueError(f"path loss model needs distance >= 1 m, got {distance}")
    return -31.5 - 35.0 * math.log10(distance)


def new_channel(user_id, distance: float, rng: np.random.Generator,
                params: PropagationParams = PropagationParams(), now: float = 0.0) -> ChannelState:
    """Fresh channel with shadowing and fading drawn at ``now``."""
    return ChannelState(
        user_id=user_id,
        distance=distance,
        pathloss_db=path_loss_db(distance),
        shadow_db=float(rng.normal(params.shadow_mean_db, params.shadow_sigma_db)),
        fastfade_power=float(rng.exponential(1.0)),
        last_slow_update=now,
        last_fast_update=now,
    )


def update_channel(state: ChannelState, now: float, rng: np.random.Generator,
                   params: PropagationParams = PropagationParams()) -> ChannelState:
    """Advance block fading to time ``now``.

    Shadowing and fast fading are redrawn only once their coherence interval
    has elapsed; otherwise the state is returned unchanged.  The slow draw,
    when due, is taken before the fast one so the stream order is fixed.
    """
    slow_due = now - state.last_slow_update >= params.slow_coherence - _TIME_SLACK
    fast_due = now - state.last_fast_update >= params.fast_coherence - _TIME_SLACK
    if not (slow_due or fast_due):
        return state
    changes = {}
    if slow_due:
        changes["shadow_db"] = float(rng.normal(params.shadow_mean_db, params.shadow_sigma_db))
        changes["last_slow_update"] = now
    if fast_due:
        changes["fastfade_power"] = float(rng.exponential(1.0))
        changes["last_fast_update"] = now
    return replace(state, **changes)


def link_coefficient(gain: float, params: PropagationParams = PropagationParams()) -> float:
    """Noise power per hertz per unit effective SINR, ``N0 / (beta h)``."""
    if not gain > 0:
        raise ValueError(f"channel gain must be positive, got {gain}")
    return params.noise_psd / (params.snr_gap * gain)


def shannon_rate(w: float, p: float, n: float) -> float:
    """``w ln(1 + p / (n w))`` in nats/s; zero bandwidth carries nothing."""
    if w <= 0:
        return 0.0
    return w * math.log1p(p / (n * w))


@dataclass(frozen=True)
class McsTable:
    """Effective-SINR thresholds (linear) and their spectral efficiencies (nats/s/Hz)."""

    min_eff_sinr: tuple[float, ...]
    spectral_eff: tuple[float, ...]

    def __post_init__(self):
        thr = np.asarray(self.min_eff_sinr, dtype=float)
        eff = np.asarray(self.spectral_eff, dtype=float)
        if thr.size == 0 or thr.size != eff.size:
            raise ValueError("MCS table needs matching, nonempty threshold and efficiency lists")
        if np.any(np.diff(thr) <= 0) or np.any(np.diff(eff) <= 0):
            raise ValueError("MCS thresholds and efficiencies must be strictly increasing")
        if np.any(thr <= 0) or np.any(eff <= 0):
            raise ValueError("MCS thresholds and efficiencies must be positive")
        if np.any(eff > np.log1p(thr) * (1 + 1e-12)):
            raise ValueError("an MCS tier exceeds the Shannon rate at its threshold")

    @classmethod
    def from_db(cls, rows: Iterable[tuple[float, float]]) -> "McsTable":
        rows = list(rows)
        return cls(tuple(10.0 ** (db / 10.0) for db, _ in rows), tuple(e for _, e in rows))

    @classmethod
    def load(cls, path) -> "McsTable":
        """Read ``sinr_db efficiency`` rows; ``#`` starts a comment."""
        rows = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'sinr_db efficiency', got {line!r}")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric entry {line!r}") from None
        return cls.from_db(rows)

    @property
    def max_efficiency(self) -> float:
        return self.spectral_eff[-1]

    def efficiency(self, eff_sinr):
        """Spectral efficiency of the highest tier at or below ``eff_sinr``."""
        idx = np.searchsorted(self.min_eff_sinr, eff_sinr, side="right") - 1
        table = np.concatenate([[0.0], self.spectral_eff])
        out = table[np.asarray(idx) + 1]
        return float(out) if np.ndim(out) == 0 else out


# QPSK 1/2 through 64-QAM 3/4
DEFAULT_MCS = McsTable.from_db([
    (2.9, 0.693),
    (6.3, 1.039),
    (8.6, 1.386),
    (12.7, 2.079),
    (16.3, 2.773),
    (18.7, 3.119),
])


def quantize_rate(share: UserShare, mcs: McsTable = DEFAULT_MCS) -> float:
    if share.bandwidth <= 0:
        return 0.0
    return share.bandwidth * mcs.efficiency(share.eff_sinr)

"""Per-frame proportional-fair power/bandwidth allocation with real-time rate constraints.

The optimum of the per-frame problem is parameterized by two scalars,
``lambda_a`` (which fixes every user's effective SINR through ``f_a``) and
``lambda_p`` (which sets the data users' water level).  :func:`solve` finds
them with an outer search on ``lambda_a`` and an exact inner solve for
``lambda_p`` that meets the bandwidth budget.

All rates are in nats/s and all logarithms are natural.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np
from numba import njit

__all__ = [
    "ResourceBudget",
    "DataUserState",
    "RealTimeDemand",
    "DualPair",
    "UserShare",
    "AllocationResult",
    "SolverError",
    "NoDataBandwidthError",
    "DEGRADE_FACTOR",
    "REMOVAL_FLOOR",
    "f_a",
    "f_a_inv",
    "data_user_share",
    "realtime_share",
    "resource_sums",
    "lambda_p_for_bandwidth",
    "feasibility_lambda",
    "check_feasible",
    "degrade_infeasible",
    "solve",
    "objective",
]

DEGRADE_FACTOR = 0.5
REMOVAL_FLOOR = 1e-3

_MAX_BRACKET_LOG2 = 200.0
_EPS = np.finfo(float).eps
_LOG_LAMBDA_MAX = math.log(1e300)


class SolverError(RuntimeError):
    """Numerical failure inside the dual search.

    ``diagnostics`` carries the best point reached so far.
    """

    def __init__(self, message: str, diagnostics: Mapping | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NoDataBandwidthError(ValueError):
    """Real-time users already consume the whole bandwidth at this lambda_a."""


@dataclass(frozen=True)
class ResourceBudget:
    total_power: float
    total_bandwidth: float

    def __post_init__(self):
        if not (self.total_power > 0 and math.isfinite(self.total_power)):
            raise ValueError(f"total_power must be positive, got {self.total_power}")
        if not (self.total_bandwidth > 0 and math.isfinite(self.total_bandwidth)):
            raise ValueError(f"total_bandwidth must be positive, got {self.total_bandwidth}")


@dataclass(frozen=True)
class DataUserState:
    user_id: Hashable
    noise_coeff: float
    avg_rate: float
    smoothing: float = 0.999

    def __post_init__(self):
        if not self.noise_coeff > 0:
            raise ValueError(f"noise_coeff must be positive, got {self.noise_coeff}")
        if not self.avg_rate >= 0:
            raise ValueError(f"avg_rate must be nonnegative, got {self.avg_rate}")
        if not 0 < self.smoothing < 1:
            raise ValueError(f"smoothing must lie in (0, 1), got {self.smoothing}")

    @property
    def alpha_tilde(self) -> float:
        return self.smoothing / (1.0 - self.smoothing)


@dataclass(frozen=True)
class RealTimeDemand:
    user_id: Hashable
    noise_coeff: float
    rate_req: float

    def __post_init__(self):
        if not self.noise_coeff > 0:
            raise ValueError(f"noise_coeff must be positive, got {self.noise_coeff}")
        if not self.rate_req > 0:
            raise ValueError(f"rate_req must be positive, got {self.rate_req}")


@dataclass(frozen=True)
class DualPair:
    lambda_a: float
    lambda_p: float

    @property
    def lambda_w(self) -> float:
        return self.lambda_p / self.lambda_a if self.lambda_a > 0 else math.inf


@dataclass(frozen=True)
class UserShare:
    user_id: Hashable
    bandwidth: float
    power: float
    eff_sinr: float

    @property
    def rate(self) -> float:
        """Shannon rate in nats/s (SNR gap already folded into the SINR)."""
        if self.bandwidth <= 0:
            return 0.0
        return self.bandwidth * math.log1p(self.eff_sinr)


@dataclass
class AllocationResult:
    shares: list[UserShare]
    feasible_as_given: bool
    degraded_rates: list[tuple[Hashable, float, float]]
    dual: DualPair
    iterations: int
    # ids of real-time demands dropped after falling below the removal floor
    removed: list[Hashable] = field(default_factory=list)

    def share_of(self, user_id) -> UserShare:
        for s in self.shares:
            if s.user_id == user_id:
                return s
        raise KeyError(user_id)

    @property
    def total_bandwidth(self) -> float:
        return math.fsum(s.bandwidth for s in self.shares)

    @property
    def total_power(self) -> float:
        return math.fsum(s.power for s in self.shares)


# ---------------------------------------------------------------------------
# f_a and its inverse


_SERIES_COEFFS = tuple(((-1.0) ** k) / (k * (k - 1)) for k in range(12, 1, -1))


@njit(cache=True)
def _f_a_scalar(x):
    if x < 0.05:
        # the closed form cancels badly near 0; sum_{k>=2} (-1)^k x^k / (k (k-1))
        acc = 0.0
        for c in _SERIES_COEFFS:
            acc = acc * x + c
        return acc * x * x
    return (1.0 + x) * math.log1p(x) - x


@njit(cache=True)
def _f_a_inv_scalar(y):
    if y <= 0.0:
        return 0.0
    if y > 10.0:
        # ln(1+x) = 1 + W((y-1)/e), asymptotic Lambert W
        l1 = math.log(max((y - 1.0) / math.e, 3.0))
        l2 = math.log(l1)
        x = math.expm1(1.0 + l1 - l2 + l2 / l1)
    else:
        # series reversion in s = sqrt(2y)
        s = math.sqrt(2.0 * y)
        x = s + s * s / 6.0 - s * s * s / 72.0
    # f_a is convex, so after the first Newton step every iterate sits right
    # of the root and the sequence decreases onto it
    for k in range(100):
        step = (_f_a_scalar(x) - y) / math.log1p(x)
        x -= step
        if k > 0 and step <= 1e-12 * x:
            break
    return x


@njit(cache=True)
def _f_a_array(x):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = _f_a_scalar(x[i])
    return out


@njit(cache=True)
def _f_a_inv_array(y):
    out = np.empty(y.size)
    for i in range(y.size):
        out[i] = _f_a_inv_scalar(y[i])
    return out


@njit(cache=True)
def _rt_bandwidth_kernel(n, r, lam):
    # sum_i r_i / ln(1+x_i) and its derivative along t = ln(lam)
    w_sum = 0.0
    dw_sum = 0.0
    for i in range(n.size):
        y = lam / n[i]
        x = _f_a_inv_scalar(y)
        L = math.log1p(x)
        w = r[i] / L
        w_sum += w
        dw_sum -= w * (y / L) / (L * (1.0 + x))
    return w_sum, dw_sum


def f_a(x):
    """``(1+x) ln(1+x) - x``; accepts scalars or arrays, x >= 0."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("f_a is defined for finite x >= 0")
    out = _f_a_array(np.ascontiguousarray(arr.ravel()))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def f_a_inv(y):
    """Inverse of :func:`f_a` on ``[0, inf)``; scalars or arrays."""
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("f_a_inv is defined for finite y >= 0")
    out = _f_a_inv_array(np.ascontiguousarray(arr.ravel()))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


# ---------------------------------------------------------------------------
# Vectorized problem core


class _Problem:
    """Array view of one frame's users.

    Derivatives are taken with respect to ``t = ln(lambda_a)``.  Along that
    variable every user's SINR moves as ``dx/dt = (lambda_a/n) / ln(1+x)``.
    """

    def __init__(self, data: Sequence[DataUserState], rt: Sequence[RealTimeDemand],
                 W: float = math.inf):
        self.W = W
        self.data = list(data)
        self.rt = list(rt)
        self.nd = len(self.data)
        self.n_d = np.array([u.noise_coeff for u in self.data], dtype=float)
        self.ra_d = np.array([u.avg_rate * u.alpha_tilde for u in self.data], dtype=float)
        self.n_r = np.array([d.noise_coeff for d in self.rt], dtype=float)
        self.r_r = np.array([d.rate_req for d in self.rt], dtype=float)
        self.n_all = np.concatenate([self.n_d, self.n_r])
        self.evaluations = 0
        self.last = None

    def _rt_terms(self, x, y):
        L = np.log1p(x)
        q = y / L
        w = self.r_r / L
        dw = -self.r_r * q / (L * L * (1.0 + x))
        p = self.n_r * x * w
        dp = self.n_r * (x * dw + w * q)
        return w, dw, p, dp

    def rt_bandwidth(self, lambda_a: float):
        """(bandwidth, d bandwidth / dt) of the real-time set alone."""
        if lambda_a <= 0:
            raise ValueError("real-time user cannot meet positive rate with zero SINR")
        return _rt_bandwidth_kernel(self.n_r, self.r_r, lambda_a)

    def rt_parts(self, lambda_a: float):
        if not self.rt:
            return 0.0, 0.0, np.empty(0)
        if lambda_a <= 0:
            raise ValueError("real-time user cannot meet positive rate with zero SINR")
        x = _f_a_inv_array(lambda_a / self.n_r)
        w = self.r_r / np.log1p(x)
        return math.fsum(w), math.fsum(w * self.n_r * x), x

    def data_coeffs(self, lambda_a: float, x=None):
        if x is None:
            x = _f_a_inv_array(lambda_a / self.n_d)
        c = self.n_d * (1.0 + x) * self.ra_d
        d = np.log1p(x) * (1.0 + x) * self.n_d
        return x, c, d

    def data_alloc(self, lambda_p: float, x, c, d):
        w = np.maximum(lambda_p - c, 0.0) / d
        return w, w * self.n_d * x

    @staticmethod
    def lambda_p_exact(c: np.ndarray, d: np.ndarray, w_data: float) -> float:
        # sum_i [L - c_i]^+ / d_i is piecewise linear and increasing in L
        order = np.argsort(c, kind="stable")
        cs = c[order]
        g = 1.0 / d[order]
        G = np.cumsum(g)
        C = np.cumsum(cs * g)
        # bandwidth used when L sits at breakpoint cs[k] (users 0..k-1 active)
        at_break = np.empty_like(cs)
        at_break[0] = 0.0
        at_break[1:] = cs[1:] * G[:-1] - C[:-1]
        k = int(np.searchsorted(at_break, w_data, side="left"))
        return float((w_data + C[k - 1]) / G[k - 1])

    def power_at(self, lambda_a: float, with_derivative: bool = False):
        """Total power once lambda_p meets the bandwidth budget.

        Returns ``(S_p, lambda_p, dS_p/dt)``.
        """
        self.evaluations += 1
        y = lambda_a / self.n_all
        x = _f_a_inv_array(y)
        nd = self.nd
        xd, yd = x[:nd], y[:nd]
        if self.rt:
            wr, dwr, pr, dpr = self._rt_terms(x[nd:], y[nd:])
            w_rt = math.fsum(wr)
        else:
            w_rt = 0.0
        w_data = self.W - w_rt
        if not w_data > 0:
            raise NoDataBandwidthError("no bandwidth remains for data at this lambda_a")
        Ld = np.log1p(xd)
        c = self.n_d * (1.0 + xd) * self.ra_d
        d = Ld * (1.0 + xd) * self.n_d
        lp = self.lambda_p_exact(c, d, w_data)
        w = np.maximum(lp - c, 0.0) / d
        p = w * self.n_d * xd
        total = math.fsum(p) + (math.fsum(pr) if self.rt else 0.0)
        self.last = (lambda_a, lp, x, np.concatenate([w, wr]) if self.rt else w,
                     np.concatenate([p, pr]) if self.rt else p)
        if not with_derivative:
            return total, lp, math.nan
        qd = yd / Ld
        dc = self.n_d * self.ra_d * qd
        dd = self.n_d * (1.0 + Ld) * qd
        active = w > 0
        inv_d = np.where(active, 1.0 / d, 0.0)
        rt_dw = float(dwr.sum()) if self.rt else 0.0
        dlp = (float(np.sum((dc + w * dd) * inv_d)) - rt_dw) / float(inv_d.sum())
        dw = (dlp - dc - w * dd) * inv_d
        dp = self.n_d * (xd * dw + w * qd)
        deriv = float(dp.sum()) + (float(dpr.sum()) if self.rt else 0.0)
        return total, lp, deriv


def _as_problem(data, rt, W: float = math.inf) -> _Problem:
    return _Problem(data, rt, W)


# ---------------------------------------------------------------------------
# Scalar root finding on monotone functions


def _safe_newton(fd: Callable[[float], tuple[float, float]], t: float, tol: float,
                 maxiter: int, lo: float = -math.inf, flo: float = math.nan,
                 hi: float = math.inf):
    """Root of an increasing function given ``fd(t) -> (f, f')``.

    Newton steps are kept inside the sign-change bracket once one is known and
    replaced by bisection when they leave it or fail to halve the residual.
    Before a bracket exists the search steps geometrically outwards.
    Returns ``(t, f, evaluations)``.
    """
    t0 = t
    limit = _MAX_BRACKET_LOG2 * math.log(2.0)
    f, df = fd(t)
    evals = 1
    explore = 1.0
    prev_f = math.inf
    while True:
        if abs(f) <= tol:
            return t, f, evals
        if f < 0:
            lo, flo = t, f
        else:
            hi = t
        bracketed = math.isfinite(lo) and math.isfinite(hi)
        if bracketed and hi - lo <= 4 * _EPS * max(abs(lo), abs(hi), 1.0):
            raise SolverError("bracket collapsed before reaching tolerance",
                              {"t": t, "residual": f, "evaluations": evals})
        newton_ok = df > 0 and math.isfinite(df) and abs(f) <= 0.5 * abs(prev_f)
        tn = t - f / df if df > 0 and math.isfinite(df) else math.nan
        if bracketed:
            if not (lo < tn < hi) or not newton_ok:
                tn = 0.5 * (lo + hi)
        else:
            # no sign change seen yet: Newton, but never further than a
            # geometrically growing exploration step
            step = tn - t if math.isfinite(tn) else math.copysign(math.inf, -f)
            if abs(step) > explore or not (lo < tn < hi):
                tn = t + math.copysign(explore, -f)
                explore *= 2.0
        if abs(tn - t0) > limit:
            raise SolverError("bracket growth exceeded 2^200 scale",
                              {"t": t, "residual": f, "evaluations": evals})
        if evals >= maxiter:
            raise SolverError("iteration cap exceeded",
                              {"t": t, "residual": f, "bracket": (lo, hi), "evaluations": evals})
        prev_f = f
        t = tn
        f, df = fd(t)
        evals += 1


# ---------------------------------------------------------------------------
# Public operations


def data_user_share(dual: DualPair, u: DataUserState) -> UserShare:
    if not dual.lambda_a > 0:
        raise ValueError("data_user_share needs lambda_a > 0")
    x = f_a_inv(dual.lambda_a / u.noise_coeff)
    level = dual.lambda_p - u.noise_coeff * (1.0 + x) * u.avg_rate * u.alpha_tilde
    if level <= 0 or x <= 0:
        return UserShare(u.user_id, 0.0, 0.0, x)
    w = level / (math.log1p(x) * (1.0 + x) * u.noise_coeff)
    return UserShare(u.user_id, w, w * u.noise_coeff * x, x)


def realtime_share(lambda_a: float, d: RealTimeDemand) -> UserShare:
    if not lambda_a > 0:
        raise ValueError("real-time user cannot meet positive rate with zero SINR")
    x = f_a_inv(lambda_a / d.noise_coeff)
    w = d.rate_req / math.log1p(x)
    return UserShare(d.user_id, w, d.noise_coeff * w * x, x)


def resource_sums(dual: DualPair, data: Sequence[DataUserState],
                  rt: Sequence[RealTimeDemand]) -> tuple[float, float]:
    """Total (bandwidth, power) implied by a dual pair."""
    prob = _as_problem(data, rt)
    w_rt, p_rt, _ = prob.rt_parts(dual.lambda_a)
    if not data or dual.lambda_p <= 0:
        return w_rt, p_rt
    if not dual.lambda_a > 0:
        raise ValueError("data shares need lambda_a > 0")
    x, c, d = prob.data_coeffs(dual.lambda_a)
    w, p = prob.data_alloc(dual.lambda_p, x, c, d)
    return w_rt + math.fsum(w), p_rt + math.fsum(p)


def lambda_p_for_bandwidth(lambda_a: float, data: Sequence[DataUserState],
                           rt: Sequence[RealTimeDemand], W: float) -> float:
    """The water level ``lambda_p`` at which total bandwidth equals ``W``.

    The data bandwidth is piecewise linear in ``lambda_p`` with breakpoints
    at each user's threshold, so the level is found exactly by scanning the
    sorted thresholds.
    """
    if not data:
        raise ValueError("lambda_p_for_bandwidth needs at least one data user")
    if not lambda_a > 0:
        raise ValueError("lambda_p_for_bandwidth needs lambda_a > 0")
    prob = _as_problem(data, rt)
    w_rt, _, _ = prob.rt_parts(lambda_a)
    if not W - w_rt > 0:
        raise NoDataBandwidthError("no bandwidth remains for data at this lambda_a")
    _, c, d = prob.data_coeffs(lambda_a)
    return float(prob.lambda_p_exact(c, d, W - w_rt))


def _rt_floor_log(prob: _Problem, W: float, hint: float | None = None,
                  tol_rel: float = 1e-13) -> float:
    """ln(lambda_a) at which the real-time bandwidth alone equals W."""

    def excess(t: float):
        # increasing in t: real-time bandwidth shrinks as lambda_a grows
        w, dw = prob.rt_bandwidth(math.exp(t))
        return W - w, -dw

    # giving everyone the common SINR that fits W exactly, priced at the
    # worst user's noise, bounds the floor from above
    nats_per_hz = float(prob.r_r.sum()) / W
    x_common = math.expm1(min(nats_per_hz, 700.0))
    t0 = math.log(float(np.max(prob.n_r)) * max(float(f_a(x_common)), 1e-300))
    # beyond this lambda_a some f_a_inv argument overflows a double
    t_cap = _LOG_LAMBDA_MAX + math.log(float(np.min(prob.n_r)))
    if (t0 >= t_cap or nats_per_hz > 700.0) and excess(t_cap)[0] < 0:
        return math.inf
    if hint is not None and 0 < hint < math.inf:
        t0 = min(t0, math.log(hint))
    t, _, _ = _safe_newton(excess, min(t0, t_cap), tol_rel * W, 400, hi=t_cap)
    return t


def feasibility_lambda(rt: Sequence[RealTimeDemand], W: float,
                       hint: float | None = None) -> float:
    """Smallest ``lambda_a`` at which the real-time demands fit in ``W`` alone.

    Returns 0.0 (no floor) when there are no real-time demands and inf when
    the floor is too large to represent (hopelessly infeasible demands).
    """
    if not (math.isfinite(W) and W > 0):
        raise ValueError(f"bandwidth must be finite and positive, got {W}")
    if not rt:
        return 0.0
    prob = _as_problem((), rt)
    if not np.all(np.isfinite(prob.n_r)) or not np.all(np.isfinite(prob.r_r)):
        raise ValueError("real-time demands must be finite")
    return math.exp(_rt_floor_log(prob, W, hint))


@lru_cache(maxsize=32)
def _floor_and_power(rt: tuple, W: float) -> tuple[float, float]:
    # a scheduler frame asks for the same set twice (admission, then solve)
    lam0 = feasibility_lambda(rt, W)
    if math.isinf(lam0):
        return lam0, math.inf
    return lam0, _as_problem((), rt).rt_parts(lam0)[1]


def check_feasible(rt: Sequence[RealTimeDemand], budget: ResourceBudget,
                   hint: float | None = None) -> tuple[bool, float, float]:
    """(feasible, lambda_a floor, power the real-time set needs at that floor)."""
    if not rt:
        return True, 0.0, 0.0
    if hint is None:
        lam0, p_floor = _floor_and_power(tuple(rt), budget.total_bandwidth)
        return p_floor < budget.total_power, lam0, p_floor
    lam0 = feasibility_lambda(rt, budget.total_bandwidth, hint)
    if math.isinf(lam0):
        return False, lam0, math.inf
    _, p_floor, _ = _as_problem((), rt).rt_parts(lam0)
    return p_floor < budget.total_power, lam0, p_floor


def degrade_infeasible(rt: Sequence[RealTimeDemand], budget: ResourceBudget,
                       original_rates: Mapping | None = None,
                       lambda_floor: float | None = None):
    """Halve the rate of the real-time demand drawing the most power.

    Returns ``(new_rt, removed_ids)``.  A demand whose rate falls below
    ``REMOVAL_FLOOR`` times its original rate is dropped from the set.
    ``lambda_floor`` may pass an already computed floor for ``rt``.
    """
    rt = list(rt)
    if not rt:
        return rt, []
    originals = dict(original_rates) if original_rates is not None else {
        d.user_id: d.rate_req for d in rt}
    lam0 = lambda_floor if lambda_floor is not None else feasibility_lambda(
        rt, budget.total_bandwidth)
    prob = _as_problem((), rt)
    # an unrepresentable floor is ranked at the largest usable lambda_a
    lam0 = min(lam0, math.exp(_LOG_LAMBDA_MAX) * float(np.min(prob.n_r)))
    x = _f_a_inv_array(lam0 / prob.n_r)
    powers = prob.n_r * x * prob.r_r / np.log1p(x)
    worst = int(np.argmax(powers))
    d = rt[worst]
    new_rate = d.rate_req * DEGRADE_FACTOR
    if new_rate < REMOVAL_FLOOR * originals.get(d.user_id, d.rate_req):
        return rt[:worst] + rt[worst + 1:], [d.user_id]
    rt[worst] = RealTimeDemand(d.user_id, d.noise_coeff, new_rate)
    return rt, []


def objective(shares: Sequence[UserShare], data: Sequence[DataUserState]) -> float:
    """Product over data users of ``alpha + (1 - alpha) r / R``."""
    by_id = {s.user_id: s for s in shares}
    log_total = 0.0
    for u in data:
        s = by_id.get(u.user_id)
        r = s.rate if s is not None else 0.0
        log_total += math.log(u.smoothing + (1.0 - u.smoothing) * r / u.avg_rate)
    return math.exp(log_total)


def solve(data: Sequence[DataUserState], rt: Sequence[RealTimeDemand],
          budget: ResourceBudget, *, power_tol: float = 1e-7,
          max_outer: int = 200, lambda_hint: float | None = None) -> AllocationResult:
    """Optimal per-frame allocation.

    ``lambda_hint`` seeds the outer search (e.g. the previous frame's
    ``lambda_a``); it changes iteration counts, not the answer.
    """
    data = list(data)
    rt = list(rt)
    if not data and not rt:
        raise ValueError("solve needs at least one user")
    W, P = budget.total_bandwidth, budget.total_power

    # Step 1: feasibility check and real-time rate degradation
    originals = {d.user_id: d.rate_req for d in rt}
    degraded: dict = {}
    removed: list = []
    feasible_as_given = True
    max_rounds = 10 * len(rt) + 1
    lam0 = 0.0
    p_floor = 0.0
    hint = None
    for _ in range(max_rounds + 1):
        ok, lam0, p_floor = check_feasible(rt, budget, hint)
        if ok:
            break
        feasible_as_given = False
        rt, gone = degrade_infeasible(rt, budget, originals, lam0)
        removed.extend(gone)
        # rates only went down, so the old floor bounds the new one from above
        hint = lam0 if math.isfinite(lam0) else None
    else:  # pragma: no cover - halving bounds the loop
        raise SolverError("degradation did not terminate", {"rt": rt})
    for d in rt:
        if d.rate_req != originals[d.user_id]:
            degraded[d.user_id] = d.rate_req
    for uid in removed:
        degraded[uid] = 0.0
    degraded_rates = [(uid, originals[uid], r) for uid, r in degraded.items()]

    if not data:
        if not rt:
            return AllocationResult([], feasible_as_given, degraded_rates,
                                    DualPair(0.0, 0.0), 0, removed)
        shares = [realtime_share(lam0, d) for d in rt]
        return AllocationResult(shares, feasible_as_given, degraded_rates,
                                DualPair(lam0, 0.0), 0, removed)

    # Step 2: outer search on log(lambda_a); inner lambda_p is exact
    prob = _as_problem(data, rt, W)
    f_floor = p_floor - P  # strictly negative once feasible

    def power_excess(t: float):
        try:
            total, _, deriv = prob.power_at(math.exp(t), with_derivative=True)
        except NoDataBandwidthError:
            # numerically at the floor: data gets nothing
            return f_floor, math.inf
        return total - P, deriv

    tol = power_tol * P
    if rt:
        t_lo = math.log(lam0)
        t0 = math.log(lambda_hint) if lambda_hint is not None and lambda_hint > lam0 else t_lo + 1e-3
        t_star, _, _ = _safe_newton(power_excess, t0, tol, max_outer, lo=t_lo, flo=f_floor)
    else:
        if lambda_hint is not None and lambda_hint > 0:
            t0 = math.log(lambda_hint)
        else:
            # equal-SINR allocation at the geometric-mean noise level
            n_typ = math.exp(float(np.mean(np.log(prob.n_d))))
            t0 = math.log(n_typ * f_a(P / (n_typ * W)))
        t_star, _, _ = _safe_newton(power_excess, t0, tol, max_outer)
    it = prob.evaluations
    if it > max_outer:
        raise SolverError("outer iteration cap exceeded",
                          {"lambda_a": math.exp(t_star), "iterations": it})

    # Step 3: shares at the final dual pair
    lambda_a = math.exp(t_star)
    if prob.last is None or prob.last[0] != lambda_a:
        prob.power_at(lambda_a)
    _, lambda_p, x, w, p = prob.last
    users = [u.user_id for u in data] + [d.user_id for d in rt]
    shares = [UserShare(uid, float(w[i]), float(p[i]), float(x[i]))
              for i, uid in enumerate(users)]
    return AllocationResult(shares, feasible_as_given, degraded_rates,
                            DualPair(lambda_a, float(lambda_p)), it, removed)

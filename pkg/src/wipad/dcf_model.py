"""Analytical saturation model of 802.11 DCF with backoff freezing, a retry
limit, a capped contention window and random bit errors.

A station's backoff process is an embedded Markov chain over states
(stage i, timer k), sampled at every channel-state change.  The chain's
stationary mass on k = 0 gives the transmission probability tau, which is
coupled to the collision and failure probabilities through the number of
contending stations.  The resulting scalar fixed point is solved by
bisection, and channel-state probabilities and durations give the
saturation throughput and the throughput of the padding covert channels.

All durations are in microseconds and all throughputs in Mbit/s (bits/us).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from wipad.phy_padding import (
    ACK_OCTETS,
    PhyRate,
    airtime_us,
    pad_capacity_bits,
    rate_by_mbps,
)

SOLVER_TOL = 1e-12
SOLVER_MAX_ITER = 200
_CLAMP_TOL = 1e-15


class ConvergenceError(ArithmeticError):
    def __init__(self, message: str, residual: float) -> None:
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class DcfParams:
    """MAC/PHY parameters of one homogeneous saturated DCF scenario.

    Defaults are 802.11g ERP-OFDM ("g"-only) values.  ``t_eifs_us=None``
    selects the standard rule SIFS + PHY header + ACK airtime at 6 Mbit/s
    + DIFS.  ``delta_us`` (propagation delay) defaults to 1 us.
    """

    n: int = 1
    cw_min: int = 15
    cw_max: int = 1023
    m: int = 7
    sigma_us: float = 9.0
    delta_us: float = 1.0
    t_sifs_us: float = 10.0
    t_difs_us: float = 28.0
    t_eifs_us: float | None = None
    t_phyhdr_us: float = 20.0
    frame_octets: int = 214
    mac_overhead_octets: int = 28
    ack_octets: int = ACK_OCTETS
    p_b: float = 0.0
    signal_extension_us: float = 0.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.cw_min < 0 or self.cw_max < self.cw_min:
            raise ValueError(f"invalid contention window [{self.cw_min}, {self.cw_max}]")
        ratio, rem = divmod(self.cw_max + 1, self.cw_min + 1)
        if rem or ratio & (ratio - 1):
            raise ValueError(
                f"cw_max + 1 must be a power-of-two multiple of cw_min + 1 "
                f"(got cw_min={self.cw_min}, cw_max={self.cw_max})"
            )
        if self.m < 0:
            raise ValueError(f"m must be >= 0, got {self.m}")
        if self.frame_octets <= self.mac_overhead_octets:
            raise ValueError("frame_octets must exceed mac_overhead_octets")
        if self.ack_octets < 0 or self.mac_overhead_octets < 0:
            raise ValueError("frame sizes must be non-negative")
        for name in ("sigma_us", "t_sifs_us", "t_difs_us", "t_phyhdr_us"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.t_eifs_us is not None and self.t_eifs_us <= 0:
            raise ValueError("t_eifs_us must be positive")
        if self.delta_us < 0 or self.signal_extension_us < 0:
            raise ValueError("delta_us and signal_extension_us must be >= 0")
        if not 0.0 <= self.p_b <= 1.0:
            raise ValueError(f"p_b must lie in [0, 1], got {self.p_b}")

    @property
    def w0(self) -> int:
        return self.cw_min + 1

    @property
    def m_prime(self) -> int:
        """Last stage at which the window still doubles."""
        return ((self.cw_max + 1) // (self.cw_min + 1)).bit_length() - 1

    @property
    def eifs_us(self) -> float:
        if self.t_eifs_us is not None:
            return self.t_eifs_us
        ack_6 = float(airtime_us(self.ack_octets, rate_by_mbps(6)))
        return self.t_sifs_us + self.t_phyhdr_us + ack_6 + self.t_difs_us

    @property
    def payload_bits(self) -> int:
        return 8 * (self.frame_octets - self.mac_overhead_octets)

    def with_(self, **changes) -> DcfParams:
        return replace(self, **changes)


def backoff_params(w0: int, m: int, m_prime: int, **kw) -> DcfParams:
    """DcfParams from the chain's own parameters (W_0, m, m')."""
    return DcfParams(cw_min=w0 - 1, cw_max=w0 * 2**m_prime - 1, m=m, **kw)


def cw_schedule(params: DcfParams) -> list[int]:
    """Window sizes W_0..W_m; doubling stops after stage m'."""
    w0, mp = params.w0, params.m_prime
    return [w0 * 2 ** min(i, mp) for i in range(params.m + 1)]


def _check_probs(p_f: float, p_coll: float) -> None:
    if not 0.0 <= p_f < 1.0:
        raise ValueError(f"p_f must lie in [0, 1), got {p_f}")
    if not 0.0 <= p_coll < 1.0:
        raise ValueError(f"p_coll must lie in [0, 1), got {p_coll}")


def tau_given(p_f: float, p_coll: float, params: DcfParams) -> float:
    """Stationary transmission probability for fixed p_f and p_coll.

    Evaluated as a ratio of finite sums over the stages, which is free of
    the removable singularity the geometric closed form has at p_f = 1/2.
    """
    _check_probs(p_f, p_coll)
    freeze = 2.0 * (1.0 - p_coll)
    num = 0.0
    den = 0.0
    weight = 1.0
    for w in cw_schedule(params):
        num += weight
        den += weight * (1.0 + (w - 1) / freeze)
        weight *= p_f
    return num / den


def tau_closed_form(p_f: float, p_coll: float, params: DcfParams) -> float:
    """Geometric-series closed form of ``tau_given``.

    Singular at p_f = 1/2 and p_f = 1; kept as an independent check of the
    summation form.
    """
    _check_probs(p_f, p_coll)
    m, mp, w0 = params.m, params.m_prime, params.w0
    top = min(m, mp)
    stages = (1.0 - p_f ** (m + 1)) / (1.0 - p_f)
    psi = (1.0 - p_f) * w0 * (1.0 - (2.0 * p_f) ** (top + 1)) - (1.0 - 2.0 * p_f) * (
        1.0 - p_f ** (m + 1)
    )
    if m > mp:
        psi += w0 * 2**mp * p_f ** (mp + 1) * (1.0 - 2.0 * p_f) * (1.0 - p_f ** (m - mp))
    b00_inv = psi / (2.0 * (1.0 - 2.0 * p_f) * (1.0 - p_f) * (1.0 - p_coll)) + stages
    return stages / b00_inv


@dataclass(frozen=True)
class BackoffChainOracle:
    """Explicit (stage, timer) chain with its numerically solved stationary law."""

    schedule: list[int]
    states: list[tuple[int, int]]
    matrix: np.ndarray
    stationary: np.ndarray
    _index: dict[tuple[int, int], int] = field(repr=False, compare=False)

    def b(self, i: int, k: int) -> float:
        return float(self.stationary[self._index[i, k]])

    @property
    def tau(self) -> float:
        return float(sum(self.b(i, 0) for i in range(len(self.schedule))))


def _chain_states(schedule: list[int]) -> list[tuple[int, int]]:
    return [(i, k) for i, w in enumerate(schedule) for k in range(w)]


def stationary_oracle(p_f: float, p_coll: float, params: DcfParams) -> BackoffChainOracle:
    """Build the full transition matrix and solve pi P = pi directly."""
    _check_probs(p_f, p_coll)
    sched = cw_schedule(params)
    m = params.m
    w0 = sched[0]
    states = _chain_states(sched)
    idx = {s: j for j, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))

    for i, w in enumerate(sched):
        for k in range(1, w):
            P[idx[i, k], idx[i, k - 1]] += 1.0 - p_coll  # idle slot: count down
            P[idx[i, k], idx[i, k]] += p_coll  # busy: frozen
        src = idx[i, 0]
        if i < m:
            for k in range(w0):
                P[src, idx[0, k]] += (1.0 - p_f) / w0
            w_next = sched[i + 1]
            for k in range(w_next):
                P[src, idx[i + 1, k]] += p_f / w_next
        else:
            for k in range(w0):
                P[src, idx[0, k]] += 1.0 / w0

    size = len(states)
    A = np.vstack([P.T - np.eye(size), np.ones((1, size))])
    rhs = np.zeros(size + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    if np.abs(pi @ P - pi).max() > 1e-10 or pi.min() < -1e-12:
        raise RuntimeError("backoff chain has no unique stationary distribution")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return BackoffChainOracle(sched, states, P, pi, idx)


def stationary_closed_form(p_f: float, p_coll: float, params: DcfParams) -> dict[tuple[int, int], float]:
    """Occupancy b_{i,k} from the product-form solution, keyed by (i, k)."""
    sched = cw_schedule(params)
    b00 = tau_given(p_f, p_coll, params) / sum(p_f**i for i in range(len(sched)))
    out = {}
    for i, w in enumerate(sched):
        head = p_f**i * b00
        out[i, 0] = head
        for k in range(1, w):
            out[i, k] = (w - k) / (w * (1.0 - p_coll)) * head
    return out


def _frame_error(p_b: float, bits: int) -> float:
    if bits == 0 or p_b == 0.0:
        return 0.0
    if p_b == 1.0:
        return 1.0
    return -math.expm1(bits * math.log1p(-p_b))


def error_probs(p_b: float, data_bits: int, ack_bits: int) -> tuple[float, float, float]:
    """(p_e_data, p_e_ack, p_e) for i.i.d. bit errors at rate ``p_b``."""
    if not 0.0 <= p_b <= 1.0:
        raise ValueError(f"p_b must lie in [0, 1], got {p_b}")
    if data_bits < 0 or ack_bits < 0:
        raise ValueError("bit counts must be >= 0")
    pe_data = _frame_error(p_b, data_bits)
    pe_ack = _frame_error(p_b, ack_bits)
    pe = 1.0 - (1.0 - pe_data) * (1.0 - pe_ack)
    return pe_data, pe_ack, pe


def params_error_probs(params: DcfParams) -> tuple[float, float, float]:
    return error_probs(params.p_b, 8 * params.frame_octets, 8 * params.ack_octets)


@dataclass(frozen=True)
class FixedPoint:
    tau: float
    p_coll: float
    p_f: float
    p_e: float
    iterations: int
    residual: float


def _coupling(tau: float, n: int, p_e: float) -> tuple[float, float]:
    p_coll = 1.0 - (1.0 - tau) ** (n - 1)
    p_f = 1.0 - (1.0 - p_coll) * (1.0 - p_e)
    return p_coll, p_f


def solve_fixed_point(
    params: DcfParams, tol: float = SOLVER_TOL, max_iter: int = SOLVER_MAX_ITER
) -> FixedPoint:
    """Solve tau = tau_given(p_f(tau), p_coll(tau)) for the station count n.

    tau_given decreases in both p_f and p_coll, which both increase with
    tau, so the residual tau_given(...) - tau is strictly decreasing on
    [0, 1) and bisection brackets its single root.
    """
    _, _, p_e = params_error_probs(params)
    if p_e >= 1.0:
        raise ConvergenceError("frame error probability is 1; no transmission succeeds", math.inf)
    n = params.n

    if n == 1:
        p_coll, p_f = 0.0, p_e
        tau = tau_given(p_f, p_coll, params)
        return FixedPoint(tau, p_coll, p_f, p_e, 0, 0.0)

    def g(tau: float) -> float:
        p_coll, p_f = _coupling(tau, n, p_e)
        return tau_given(p_f, p_coll, params) - tau

    lo, hi = 0.0, 1.0
    it = 0
    while it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    tau = lo if hi >= 1.0 or abs(g(lo)) <= abs(g(hi)) else hi
    residual = abs(g(tau))
    if residual > tol:
        raise ConvergenceError(
            f"fixed point not reached after {it} iterations (residual {residual:.3e})", residual
        )
    p_coll, p_f = _coupling(tau, n, p_e)
    return FixedPoint(tau, p_coll, p_f, p_e, it, residual)


@dataclass(frozen=True)
class ChannelStateSet:
    t_i: float
    t_s: float
    t_c: float
    t_e_data: float
    t_e_ack: float
    p_i: float = 0.0
    p_s: float = 0.0
    p_c: float = 0.0
    p_e_data_state: float = 0.0
    p_e_ack_state: float = 0.0

    @property
    def durations(self) -> tuple[float, float, float, float, float]:
        return (self.t_i, self.t_s, self.t_c, self.t_e_data, self.t_e_ack)

    @property
    def probs(self) -> tuple[float, float, float, float, float]:
        return (self.p_i, self.p_s, self.p_c, self.p_e_data_state, self.p_e_ack_state)

    @property
    def mean_duration(self) -> float:
        return sum(t * p for t, p in zip(self.durations, self.probs))


def state_durations(params: DcfParams, rate: PhyRate) -> ChannelStateSet:
    """Durations of idle, success, collision, data-error and ACK-error states.

    Probabilities are left at zero; see ``state_probs``.
    """
    ext = params.signal_extension_us
    t_data = float(airtime_us(params.frame_octets, rate, ext))
    t_ack = float(airtime_us(params.ack_octets, rate, ext))
    hdr, d = params.t_phyhdr_us, params.delta_us
    t_s = 2 * hdr + t_data + 2 * d + params.t_sifs_us + t_ack + params.t_difs_us
    t_c = hdr + t_data + d + params.eifs_us
    t_e_data = hdr + d + t_data + params.eifs_us
    return ChannelStateSet(params.sigma_us, t_s, t_c, t_e_data, t_s)


def _clamp(p: float) -> float:
    if p < -_CLAMP_TOL or p > 1.0 + _CLAMP_TOL:
        raise ValueError(f"probability {p!r} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def state_probs(
    tau: float, n: int, p_e_data: float, p_e_ack: float
) -> tuple[float, float, float, float, float]:
    """(P_I, P_S, P_C, P_E_DATA, P_E_ACK) for one channel-state event."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p_idle = (1.0 - tau) ** n
    p_single = n * tau * (1.0 - tau) ** (n - 1)
    p_s = p_single * (1.0 - p_e_data) * (1.0 - p_e_ack)
    # two or more transmitters, summed directly to avoid cancellation
    p_c = math.fsum(math.comb(n, j) * tau**j * (1.0 - tau) ** (n - j) for j in range(2, n + 1))
    p_ed = p_single * p_e_data
    p_ea = p_single * (1.0 - p_e_data) * p_e_ack
    return tuple(_clamp(p) for p in (p_idle, p_s, p_c, p_ed, p_ea))  # type: ignore[return-value]


@dataclass(frozen=True)
class ModelSolution:
    tau: float
    p_coll: float
    p_f: float
    p_e: float
    p_e_data: float
    p_e_ack: float
    states: ChannelStateSet
    s_mbps: float
    s_data_mbps: float
    s_ack_mbps: float
    c_data_bits: int
    c_ack_bits: int
    iterations: int
    residual: float


def throughputs(params: DcfParams, rate: PhyRate) -> ModelSolution:
    """Solve the model and return saturation and covert-channel throughputs.

    S_DATA and S_ACK are per covert pair: the aggregate pad capacity of all
    successful exchanges divided by the number of stations.
    """
    fp = solve_fixed_point(params)
    pe_data, pe_ack, pe = params_error_probs(params)
    probs = state_probs(fp.tau, params.n, pe_data, pe_ack)
    states = replace(
        state_durations(params, rate),
        p_i=probs[0],
        p_s=probs[1],
        p_c=probs[2],
        p_e_data_state=probs[3],
        p_e_ack_state=probs[4],
    )
    l_pld = params.payload_bits
    s = states.p_s * l_pld / states.mean_duration
    c_data = pad_capacity_bits(params.frame_octets, rate)
    c_ack = pad_capacity_bits(params.ack_octets, rate)
    per_pair = s / (params.n * l_pld)
    return ModelSolution(
        tau=fp.tau,
        p_coll=fp.p_coll,
        p_f=fp.p_f,
        p_e=pe,
        p_e_data=pe_data,
        p_e_ack=pe_ack,
        states=states,
        s_mbps=s,
        s_data_mbps=c_data * per_pair,
        s_ack_mbps=c_ack * per_pair,
        c_data_bits=c_data,
        c_ack_bits=c_ack,
        iterations=fp.iterations,
        residual=fp.residual,
    )

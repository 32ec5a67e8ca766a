"""Slot-synchronous discrete-event simulator of n saturated DCF stations.

Each event is one channel state: idle slot, success, collision, data-frame
error or ACK error.  Stations whose timer is zero transmit; on an idle
event every timer counts down, on a busy event the non-transmitting
stations freeze.  A transmitter draws a fresh timer from its new stage's
window: stage 0 after success, the next stage after a failure, and stage 0
again (frame dropped) after a failure at stage m.

The simulator shares no code with the analytical chain beyond parameters,
window schedule and state durations, so it serves as an independent check
of the decoupling approximation in ``dcf_model``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from wipad.dcf_model import DcfParams, cw_schedule, params_error_probs, state_durations
from wipad.phy_padding import PhyRate, pad_capacity_bits

log = logging.getLogger(__name__)

STATE_NAMES = ("idle", "success", "collision", "data_error", "ack_error")
IDLE, SUCCESS, COLLISION, DATA_ERROR, ACK_ERROR = range(5)


@dataclass(frozen=True)
class SimConfig:
    params: DcfParams
    rate: PhyRate
    seed: int = 0
    horizon_events: int = 1_000_000
    warmup_events: int = 10_000
    batches: int = 20

    def __post_init__(self) -> None:
        if self.warmup_events < 0:
            raise ValueError("warmup_events must be >= 0")
        if self.horizon_events <= self.warmup_events:
            raise ValueError("horizon_events must exceed warmup_events")
        if self.batches < 2:
            raise ValueError("need at least 2 batches")
        if self.horizon_events - self.warmup_events < self.batches:
            raise ValueError("fewer measured events than batches")


@dataclass(frozen=True)
class SimReport:
    """Counters and estimates over the measured (post-warmup) events.

    A frame that fails at the last backoff stage is dropped; ``drops``
    counts these.  Covert throughputs are per station pair, like the
    analytical ones.  ``ci_halfwidth_s`` is the 95% batch-means half-width
    of ``s_mbps``.
    """

    seed: int
    events: int
    counts: tuple[int, int, int, int, int]
    elapsed_us: float
    transmissions: int
    drops: int
    payload_bits_delivered: int
    covert_bits_data: int
    covert_bits_ack: int
    s_mbps: float
    s_data_mbps: float
    s_ack_mbps: float
    observed_tau: float
    observed_p_coll: float
    observed_p_f: float
    ci_halfwidth_s: float

    def count(self, state: str) -> int:
        return self.counts[STATE_NAMES.index(state)]

    @property
    def state_frequencies(self) -> tuple[float, ...]:
        return tuple(c / self.events for c in self.counts)


class _Uniforms:
    """Buffered U[0, 1) draws from one generator."""

    __slots__ = ("_gen", "_buf", "_pos")

    def __init__(self, gen: np.random.Generator) -> None:
        self._gen = gen
        self._buf: list[float] = []
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._gen.random(4096).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


class _Segment:
    __slots__ = ("counts", "tx", "collided_tx", "failed_tx", "drops")

    def __init__(self) -> None:
        self.counts = [0, 0, 0, 0, 0]
        self.tx = 0
        self.collided_tx = 0
        self.failed_tx = 0
        self.drops = 0


def run(config: SimConfig) -> SimReport:
    p = config.params
    n = p.n
    sched = cw_schedule(p)
    m = p.m
    pe_data, pe_ack, _ = params_error_probs(p)
    durations = state_durations(p, config.rate).durations
    l_pld = p.payload_bits
    c_data = pad_capacity_bits(p.frame_octets, config.rate)
    c_ack = pad_capacity_bits(p.ack_octets, config.rate)

    seqs = np.random.SeedSequence(config.seed).spawn(n + 1)
    draw = [_Uniforms(np.random.default_rng(s)) for s in seqs[:n]]
    channel = _Uniforms(np.random.default_rng(seqs[n]))

    horizon, warmup, n_batches = config.horizon_events, config.warmup_events, config.batches
    measured = horizon - warmup
    ends = [warmup] + [warmup + measured * (b + 1) // n_batches for b in range(n_batches)]
    segments = [_Segment() for _ in ends]

    stage = [0] * n
    timer = [int(draw[j]() * sched[0]) for j in range(n)]

    ev = 0
    seg_i = 0
    while seg_i < len(ends) and ends[seg_i] == ev:
        seg_i += 1
    seg = segments[seg_i]
    seg_end = ends[seg_i]

    while ev < horizon:
        d = min(timer)
        if d > 0:
            span = min(d, seg_end - ev)
            seg.counts[IDLE] += span
            timer = [k - span for k in timer]
            ev += span
        else:
            tx = [j for j in range(n) if timer[j] == 0]
            if len(tx) > 1:
                state = COLLISION
                seg.collided_tx += len(tx)
            elif pe_data and channel() < pe_data:
                state = DATA_ERROR
            elif pe_ack and channel() < pe_ack:
                state = ACK_ERROR
            else:
                state = SUCCESS
            seg.counts[state] += 1
            seg.tx += len(tx)
            for j in tx:
                if state == SUCCESS:
                    stage[j] = 0
                else:
                    seg.failed_tx += 1
                    if stage[j] < m:
                        stage[j] += 1
                    else:
                        stage[j] = 0
                        seg.drops += 1
                timer[j] = int(draw[j]() * sched[stage[j]])
            ev += 1
        while ev == seg_end and ev < horizon:
            seg_i += 1
            seg = segments[seg_i]
            seg_end = ends[seg_i]

    batches = segments[1:]
    counts = tuple(sum(b.counts[s] for b in batches) for s in range(5))
    elapsed = math.fsum(c * t for c, t in zip(counts, durations))
    tx = sum(b.tx for b in batches)
    successes = counts[SUCCESS]
    payload = successes * l_pld

    batch_s = np.array(
        [b.counts[SUCCESS] * l_pld / math.fsum(c * t for c, t in zip(b.counts, durations)) for b in batches]
    )
    t_crit = stats.t.ppf(0.975, n_batches - 1)
    ci = float(t_crit * batch_s.std(ddof=1) / math.sqrt(n_batches))

    return SimReport(
        seed=config.seed,
        events=measured,
        counts=counts,  # type: ignore[arg-type]
        elapsed_us=elapsed,
        transmissions=tx,
        drops=sum(b.drops for b in batches),
        payload_bits_delivered=payload,
        covert_bits_data=successes * c_data,
        covert_bits_ack=successes * c_ack,
        s_mbps=payload / elapsed,
        s_data_mbps=successes * c_data / (n * elapsed),
        s_ack_mbps=successes * c_ack / (n * elapsed),
        observed_tau=tx / (n * measured),
        observed_p_coll=sum(b.collided_tx for b in batches) / tx if tx else 0.0,
        observed_p_f=sum(b.failed_tx for b in batches) / tx if tx else 0.0,
        ci_halfwidth_s=ci,
    )


def _run_guarded(config: SimConfig) -> SimReport | Exception:
    try:
        return run(config)
    except Exception as exc:  # reported per config, the sweep goes on
        log.warning("simulation failed for seed %d: %s", config.seed, exc)
        return exc


def sweep(configs: Sequence[SimConfig], workers: int = 1) -> list[SimReport | Exception]:
    """Run independent simulations; results keep input order.

    A config that fails yields its exception in place of a report.
    """
    if workers <= 1 or len(configs) <= 1:
        return [_run_guarded(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_guarded, configs))

"""BBR v1 and its ProbeBW gain-cycling variants.

Variants share the bandwidth / min-RTT model and the StartUp, Drain,
ProbeBW, ProbeRTT state machine; they differ only in how the ProbeBW
pacing gain advances:

* ``bbr``        every slot lasts one min RTT, probe-down may end early once
                 inflight has drained to the BDP
* ``bbr_prime``  the 0.75 gain is held across the following slots until
                 inflight <= BDP; the slot timer keeps running, so the next
                 probe-up still starts on schedule
* ``bbr_hsr``    BBR+ table [1.5, 0.5, ...] with BBR slot timing, optional
                 RTprop compensation
* ``tsunami``    table [1.5, 0.75, 1.25 x 6] with BBR slot timing
* ``bbrplus``    randomized cycle length with inflight/loss driven gain
                 changes
"""

import math
import statistics
from collections import deque

from ..transport import MSS
from .base import Controller

STARTUP_GAIN = 2 / math.log(2)
DRAIN_GAIN = math.log(2) / 2
CWND_GAIN = 2.0
FULL_BW_THRESH = 1.25
FULL_BW_COUNT = 3
BW_WINDOW_ROUNDS = 10
MIN_RTT_WINDOW_US = 10_000_000
PROBE_RTT_DURATION_US = 200_000
MIN_CWND_SEGMENTS = 4

BBR_GAINS = (1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
HSR_GAINS = (1.5, 0.5, 1.5, 0.5, 1.5, 0.5, 1.5, 0.5)
TSUNAMI_GAINS = (1.5, 0.75, 1.25, 1.25, 1.25, 1.25, 1.25, 1.25)

GAIN_TABLES = {
    "bbr": BBR_GAINS,
    "bbr_prime": BBR_GAINS,
    "bbrplus": BBR_GAINS,
    "bbr_hsr": HSR_GAINS,
    "tsunami": TSUNAMI_GAINS,
}

# BBRPlus cycle randomization
K_GAIN_CYCLE_LEN = 8
CYCLE_RAND = 7
RAND_MAX = 2**31 - 1

STARTUP = "StartUp"
DRAIN = "Drain"
PROBE_BW = "ProbeBW"
PROBE_RTT = "ProbeRTT"


class BandwidthFilter:
    """Windowed max of bandwidth samples over the last ``window`` rounds.

    Monotonic deque of (round, bw): bandwidths strictly decrease from the
    front, so the front is always the max of the retained window.
    """

    def __init__(self, window=BW_WINDOW_ROUNDS):
        self.window = window
        self._q = deque()
        self.current_round = 0

    def update(self, bw, round_index, app_limited=False):
        q = self._q
        self.current_round = round_index
        while q and q[0][0] <= round_index - self.window:
            q.popleft()
        if app_limited and q and bw < q[0][1]:
            return q[0][1]
        while q and q[-1][1] <= bw:
            q.pop()
        q.append((round_index, bw))
        return q[0][1]

    @property
    def max(self):
        return self._q[0][1] if self._q else 0.0


class MinRttFilter:
    """Minimum RTT over a 10 s window; an expired estimate is replaced by the next sample."""

    def __init__(self, window_us=MIN_RTT_WINDOW_US):
        self.window_us = window_us
        self.rtt_min = None
        self.stamped_at = None

    def update(self, rtt_sample, now):
        if rtt_sample <= 0:
            raise ValueError("rtt sample must be positive")
        expired = self.stamped_at is not None and now - self.stamped_at > self.window_us
        if self.rtt_min is None or rtt_sample <= self.rtt_min or expired:
            self.rtt_min = rtt_sample
            self.stamped_at = now
        return self.rtt_min, expired

    def refresh(self, now):
        self.stamped_at = now


def check_full_bandwidth(state, bw):
    """One round of the StartUp plateau detector. ``state`` has full_bw / full_bw_count."""
    if bw >= state.full_bw * FULL_BW_THRESH:
        state.full_bw = bw
        state.full_bw_count = 0
        return False
    state.full_bw_count += 1
    return state.full_bw_count >= FULL_BW_COUNT


def rtprop_compensation(rtt_min, rtt_history, lam):
    """RTT_min plus ``lam`` sample standard deviations of the RTT history."""
    if lam == 0 or len(rtt_history) < 2:
        return rtt_min
    return rtt_min + lam * statistics.stdev(rtt_history)


class BbrCore(Controller):
    """Bandwidth / min-RTT model shared by the v1 variants and BBRv2."""

    name = "bbr_core"

    def __init__(self, rng=None, mss=MSS):
        super().__init__(mss)
        self.rng = rng
        self.mode = STARTUP
        self.pacing_gain = STARTUP_GAIN
        self.cwnd_gain = CWND_GAIN
        self.bw_filter = BandwidthFilter()
        self.rtt_filter = MinRttFilter()
        self.round_count = 0
        self.full_bw = 0.0
        self.full_bw_count = 0
        self.full_bw_reached = False
        self.delivered = 0
        self.prior_cwnd = 0
        self.probe_rtt_done_at = None
        self.probe_rtt_count = 0
        self.probe_rtt_times = []
        self.has_loss = False
        self.pacing_rate = self.cwnd * 1000.0  # initial cwnd per nominal 1 ms

    @property
    def bw(self):
        return self.bw_filter.max

    @property
    def min_rtt(self):
        return self.rtt_filter.rtt_min

    def rtprop(self):
        return self.rtt_filter.rtt_min

    def bdp(self, bw=None):
        if bw is None:
            bw = self.bw
        rtt = self.rtprop()
        if rtt is None or bw <= 0:
            return self.mss * 10
        return bw * rtt / 1e6

    @property
    def min_cwnd(self):
        return MIN_CWND_SEGMENTS * self.mss

    def on_loss(self, now, lost, inflight):
        self.has_loss = True

    def _update_model(self, now, acked, samples):
        acked_bytes = 0
        for rec in acked:
            acked_bytes += rec.size
        self.delivered += acked_bytes
        round_end = False
        rtt = None
        bw_filter = self.bw_filter
        for s in samples:
            if s.is_round_end:
                self.round_count += 1
                round_end = True
            bw_filter.update(s.bw_es, self.round_count, s.is_app_limited)
            if rtt is None or s.rtt_sample < rtt:
                rtt = s.rtt_sample
        expired = False
        if rtt is not None:
            _, expired = self.rtt_filter.update(rtt, now)
            self._on_rtt_sample(rtt, now)
        return acked_bytes, round_end, expired

    def _on_rtt_sample(self, rtt, now):
        pass

    def _set_pacing_rate(self):
        bw = self.bw
        if bw > 0:
            self.pacing_rate = self.pacing_gain * bw


class Bbr(BbrCore):
    """BBR v1 family; ``variant`` selects the ProbeBW gain policy."""

    def __init__(self, variant="bbr", rng=None, rtprop_lambda=None, mss=MSS, **_):
        if variant not in GAIN_TABLES:
            raise ValueError(f"unknown BBR variant {variant!r}")
        super().__init__(rng, mss)
        self.name = variant
        self.variant = variant
        self.gains = GAIN_TABLES[variant]
        self.cycle_offset = 0
        self.cycle_stamp = 0
        self.cycle_len = K_GAIN_CYCLE_LEN
        self.rtprop_lambda = rtprop_lambda if variant == "bbr_hsr" else None
        self._rtt_hist = deque()
        self.cycle_lens = []

    # -- RTprop compensation (BBR+ only, off unless lambda given) ----------
    def _on_rtt_sample(self, rtt, now):
        if self.rtprop_lambda is None:
            return
        hist = self._rtt_hist
        hist.append((now, rtt))
        while hist and now - hist[0][0] > MIN_RTT_WINDOW_US:
            hist.popleft()
        while len(hist) > 1000:
            hist.popleft()

    def rtprop(self):
        rtt_min = self.rtt_filter.rtt_min
        if self.rtprop_lambda is None or rtt_min is None:
            return rtt_min
        return rtprop_compensation(rtt_min, [r for _, r in self._rtt_hist], self.rtprop_lambda)

    # -- randomness --------------------------------------------------------
    def _rand(self):
        """C-style rand(): uniform integer in [0, RAND_MAX]."""
        if self.rng is None:
            return 0
        return self.rng.randbelow(RAND_MAX + 1)

    def _random_entry_slot(self):
        # any slot except probe-down
        slots = [0] + list(range(2, len(self.gains)))
        if self.rng is None:
            return slots[0]
        return slots[self.rng.randbelow(len(slots))]

    # -- ProbeBW -----------------------------------------------------------
    def enter_probe_bw(self, now):
        self.mode = PROBE_BW
        self.cwnd_gain = CWND_GAIN
        self.cycle_stamp = now
        if self.variant == "bbrplus":
            self.cycle_len = K_GAIN_CYCLE_LEN - self._rand() % CYCLE_RAND
            self.cycle_lens.append(self.cycle_len)
            self.pacing_gain = 1.0
        else:
            self.cycle_offset = self._random_entry_slot()
            self.pacing_gain = self.gains[self.cycle_offset]

    def _advance_slot(self, now, hold_low=False):
        self.cycle_offset = (self.cycle_offset + 1) % len(self.gains)
        self.cycle_stamp = now
        gain = self.gains[self.cycle_offset]
        if hold_low and gain == 1.0:
            return
        self.pacing_gain = gain

    def advance_gain_cycle(self, now, inflight, has_loss):
        """Update the ProbeBW pacing gain for one ACK; returns the new gain."""
        min_rtt = self.min_rtt
        if self.variant == "bbrplus":
            return self._update_gain_cycle_phase(now, inflight, has_loss)
        full_length = now - self.cycle_stamp > min_rtt
        gain = self.pacing_gain
        drained = gain < 1.0 and inflight <= self.bdp()
        if self.variant == "bbr_prime":
            if drained and self.gains[self.cycle_offset] < 1.0:
                self._advance_slot(now)
            elif full_length:
                # slots keep their timer; a held low gain is released only by
                # draining or by reaching the next probing slot
                self._advance_slot(now, hold_low=gain < 1.0 and not drained)
            elif drained:
                self.pacing_gain = self.gains[self.cycle_offset]
        elif full_length or drained:
            self._advance_slot(now)
        return self.pacing_gain

    def _update_gain_cycle_phase(self, now, inflight, has_loss):
        min_rtt = self.min_rtt
        bdp = self.bdp()
        elapsed = now - self.cycle_stamp
        if elapsed > self.cycle_len * min_rtt:
            self.cycle_stamp = now
            self.cycle_len = K_GAIN_CYCLE_LEN - self._rand() % CYCLE_RAND
            self.cycle_lens.append(self.cycle_len)
            self.pacing_gain = 1.25
            return self.pacing_gain
        if self.pacing_gain == 1.0:
            return self.pacing_gain
        if self.pacing_gain < 1.0:
            if inflight <= bdp:
                self.pacing_gain = 1.0
        elif elapsed > min_rtt and (inflight > 1.25 * bdp or has_loss):
            self.pacing_gain = 0.75
        return self.pacing_gain

    # -- ProbeRTT ----------------------------------------------------------
    def enter_probe_rtt(self, now):
        self.mode = PROBE_RTT
        self.prior_cwnd = self.cwnd
        self.pacing_gain = 1.0
        self.probe_rtt_done_at = None
        self.probe_rtt_count += 1
        self.probe_rtt_times.append(now)

    def _probe_rtt_target(self):
        return self.min_cwnd

    def _handle_probe_rtt(self, now, inflight):
        if self.probe_rtt_done_at is None:
            if inflight <= self._probe_rtt_target():
                self.probe_rtt_done_at = now + PROBE_RTT_DURATION_US
        elif now >= self.probe_rtt_done_at:
            self.exit_probe_rtt(now)

    def exit_probe_rtt(self, now):
        self.rtt_filter.refresh(now)
        self.probe_rtt_done_at = None
        self.cwnd = max(self.cwnd, self.prior_cwnd)
        if self.full_bw_reached:
            self.enter_probe_bw(now)
        else:
            self.mode = STARTUP
            self.pacing_gain = STARTUP_GAIN
            self.cwnd_gain = CWND_GAIN

    # -- main entry point --------------------------------------------------
    def step_state_machine(self, now, inflight, round_end, rtt_expired, has_loss):
        if round_end and not self.full_bw_reached and self.bw > 0:
            self.full_bw_reached = check_full_bandwidth(self, self.bw)
        if self.mode == STARTUP and self.full_bw_reached:
            self.mode = DRAIN
            self.pacing_gain = DRAIN_GAIN
            self.cwnd_gain = CWND_GAIN
        if self.mode == DRAIN and inflight <= self.bdp():
            self.enter_probe_bw(now)
        elif self.mode == PROBE_BW:
            self.advance_gain_cycle(now, inflight, has_loss)
        if rtt_expired and self.mode != PROBE_RTT:
            self.enter_probe_rtt(now)
        if self.mode == PROBE_RTT:
            self._handle_probe_rtt(now, inflight)
        return self.mode, self.pacing_gain, self.cwnd_gain

    def on_ack(self, now, acked, samples, inflight):
        acked_bytes, round_end, expired = self._update_model(now, acked, samples)
        has_loss = self.has_loss
        self.has_loss = False
        if self.min_rtt is None:
            return
        self.step_state_machine(now, inflight, round_end, expired, has_loss)
        self._set_pacing_rate()
        self._set_cwnd(acked_bytes)

    def _set_cwnd(self, acked_bytes):
        if self.mode == PROBE_RTT:
            self.cwnd = self.min_cwnd
            return
        if self.bw <= 0:
            return
        target = self.cwnd_gain * self.bdp()
        cwnd = self.cwnd
        if self.full_bw_reached:
            cwnd = min(cwnd + acked_bytes, target)
        elif cwnd < target or self.delivered < 10 * self.mss:
            cwnd += acked_bytes
        self.cwnd = max(cwnd, self.min_cwnd)

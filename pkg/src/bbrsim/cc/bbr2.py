"""BBR v2: loss-aware StartUp exit, inflight_lo / inflight_hi bounds and the
probe_down -> probe_cruise -> probe_refill -> probe_up ProbeBW cycle."""

from collections import deque

from ..transport import MSS
from .bbr import (
    CWND_GAIN,
    DRAIN,
    DRAIN_GAIN,
    PROBE_BW,
    PROBE_RTT,
    PROBE_RTT_DURATION_US,
    STARTUP,
    STARTUP_GAIN,
    BbrCore,
    check_full_bandwidth,
)

LOSS_THRESHOLD = 0.02
K_BETA = 0.3
K_HEADROOM = 0.15
FULL_LOSS_COUNT = 8
PROBE_UP_GAIN = 1.25
PROBE_DOWN_GAIN = 0.75
MAX_PROBE_UP_ROUNDS = 30
CRUISE_MIN_US = 2_000_000
CRUISE_MAX_US = 3_000_000

DOWN = "Down"
CRUISE = "Cruise"
REFILL = "Refill"
UP = "Up"

PHASE_GAINS = {DOWN: PROBE_DOWN_GAIN, CRUISE: 1.0, REFILL: 1.0, UP: PROBE_UP_GAIN}


def is_inflight_too_high(lost_packets, sent_packets):
    return lost_packets / max(1, sent_packets) > LOSS_THRESHOLD


def startup_loss_exit(lost_in_round, loss_rate_in_round):
    return lost_in_round > FULL_LOSS_COUNT and loss_rate_in_round > LOSS_THRESHOLD


def update_inflight_lo(inflight_lo, delta_delivered):
    """inflight_lo = max(delta_delivered, inflight_lo * (1 - kBeta))."""
    return max(delta_delivered, inflight_lo * (1 - K_BETA))


def cruise_cwnd(inflight_lo, inflight_hi):
    """min(inflight_lo, inflight_hi * (1 - kHeadRoom)); an unset lo is +inf."""
    headroom = inflight_hi * (1 - K_HEADROOM)
    if inflight_lo is None:
        return headroom
    return min(inflight_lo, headroom)


class Bbr2(BbrCore):
    name = "bbr2"

    def __init__(self, rng=None, mss=MSS, **_):
        super().__init__(rng, mss)
        self.phase = None
        self.inflight_lo = None
        self.inflight_hi = None
        self.cruise_deadline = None
        self.cruise_durations = []
        self.refill_round = 0
        self.probe_up_acked = 0
        self.probe_up_bytes = mss
        self.probe_up_rounds = 0
        self.lost_in_round = 0
        self.delivered_in_round = 0
        self.max_inflight_in_round = 0
        # (sent_time, inflight) per send, to recover inflight at the time a lost packet left
        self._send_log = deque(maxlen=8192)
        self.loss_inflight_in_round = None
        self.cwnd_limited = False
        self.too_high = False
        self.probe_rtt_cwnd = None
        self.phase_log = []

    # -- round accounting --------------------------------------------------
    def on_packet_sent(self, now, size, inflight):
        if inflight > self.max_inflight_in_round:
            self.max_inflight_in_round = inflight
        self._send_log.append((now, inflight))
        if inflight + size > self.cwnd:
            self.cwnd_limited = True

    def _inflight_at_send(self, sent_time):
        log = self._send_log
        while log and log[0][0] < sent_time:
            log.popleft()
        if log and log[0][0] == sent_time:
            return log[0][1]
        return None

    def on_loss(self, now, lost, inflight):
        self.has_loss = True
        self.lost_in_round += len(lost)
        if self.loss_inflight_in_round is None:
            self.loss_inflight_in_round = self._inflight_at_send(lost[0].sent_time)

    def _round_loss_rate(self):
        resolved = self.lost_in_round + self.delivered_in_round
        return self.lost_in_round / max(1, resolved)

    def _reset_round(self, inflight):
        self.lost_in_round = 0
        self.delivered_in_round = 0
        self.max_inflight_in_round = inflight
        self.loss_inflight_in_round = None
        self.cwnd_limited = False

    # -- bounds ------------------------------------------------------------
    def update_inflight_hi_on_loss(self):
        # the round max includes the overshoot that caused the drops; the
        # inflight when the first lost packet was sent marks where the pipe overflowed
        observed = self.loss_inflight_in_round
        if observed is None:
            observed = self.max_inflight_in_round
        if self.inflight_hi is None:
            self.inflight_hi = observed
        else:
            self.inflight_hi = min(self.inflight_hi, observed)
        self.inflight_hi = max(self.inflight_hi, self.min_cwnd)

    def adapt_inflight_lo(self, delta_delivered):
        if self.inflight_lo is None:
            self.inflight_lo = self.cwnd
        self.inflight_lo = update_inflight_lo(self.inflight_lo, delta_delivered)
        return self.inflight_lo

    def probe_inflight_high_upward(self, bytes_acked, is_round_end):
        """Grow inflight_hi by one MSS per probe_up_bytes acked; double the slope each round."""
        self.probe_up_acked += bytes_acked
        if self.probe_up_acked >= self.probe_up_bytes:
            delta = self.probe_up_acked // self.probe_up_bytes
            self.probe_up_acked -= delta * self.probe_up_bytes
            self.inflight_hi += delta * self.mss
        if is_round_end:
            self._raise_probe_up_slope()
        return self.inflight_hi, self.probe_up_bytes

    def _raise_probe_up_slope(self):
        growth = 1 << self.probe_up_rounds
        self.probe_up_rounds = min(MAX_PROBE_UP_ROUNDS, self.probe_up_rounds + 1)
        self.probe_up_bytes = max(self.mss, int(self.cwnd) // growth)

    # -- phase transitions -------------------------------------------------
    def _set_phase(self, phase, now):
        self.mode = PROBE_BW
        self.phase = phase
        self.pacing_gain = PHASE_GAINS[phase]
        self.cwnd_gain = CWND_GAIN
        self.phase_log.append((now, phase))
        if phase == CRUISE:
            span = CRUISE_MAX_US - CRUISE_MIN_US
            draw = self.rng.random() if self.rng is not None else 0.5
            duration = CRUISE_MIN_US + int(span * draw)
            self.cruise_durations.append(duration)
            self.cruise_deadline = now + duration
        elif phase == REFILL:
            self.inflight_lo = None
            self.refill_round = self.round_count
        elif phase == UP:
            if self.inflight_hi is None:
                self.inflight_hi = max(self.cwnd, self.min_cwnd)
            self.probe_up_acked = 0
            self.probe_up_rounds = 0
            self.cwnd = self.inflight_hi
            self._raise_probe_up_slope()

    def probe_bw_advance(self, now, inflight, bdp, round_end):
        phase = self.phase
        if phase == DOWN:
            if inflight <= bdp or self.too_high:
                self._set_phase(CRUISE, now)
        elif phase == CRUISE:
            if now >= self.cruise_deadline:
                self._set_phase(REFILL, now)
        elif phase == REFILL:
            if self.too_high and round_end:
                self._set_phase(DOWN, now)
            elif self.round_count > self.refill_round:
                self._set_phase(UP, now)
        elif phase == UP:
            if (round_end and self.too_high) or (
                    inflight >= PROBE_UP_GAIN * bdp and self.lost_in_round > 0):
                self._set_phase(DOWN, now)
        return self.phase

    # -- ProbeRTT ----------------------------------------------------------
    def enter_probe_rtt(self, now):
        self.mode = PROBE_RTT
        self.prior_cwnd = self.cwnd
        self.probe_rtt_cwnd = max(self.cwnd / 2, self.min_cwnd)
        self.cwnd = self.probe_rtt_cwnd
        self.pacing_gain = 1.0
        self.probe_rtt_done_at = None
        self.probe_rtt_count += 1
        self.probe_rtt_times.append(now)

    def _handle_probe_rtt(self, now, inflight):
        if self.probe_rtt_done_at is None:
            if inflight <= self.probe_rtt_cwnd:
                self.probe_rtt_done_at = now + PROBE_RTT_DURATION_US
        elif now >= self.probe_rtt_done_at:
            self.rtt_filter.refresh(now)
            self.probe_rtt_done_at = None
            if self.full_bw_reached:
                self._set_phase(CRUISE, now)
            else:
                self.mode = STARTUP
                self.phase = None
                self.pacing_gain = STARTUP_GAIN

    # -- main entry point --------------------------------------------------
    def on_ack(self, now, acked, samples, inflight):
        acked_bytes, round_end, expired = self._update_model(now, acked, samples)
        self.delivered_in_round += len(acked)
        self.has_loss = False
        if self.min_rtt is None:
            return
        bdp = self.bdp()
        if round_end:
            self._on_round_end(now, samples)

        if self.mode == STARTUP and self.full_bw_reached:
            self.mode = DRAIN
            self.pacing_gain = DRAIN_GAIN
        if self.mode == DRAIN and inflight <= bdp:
            self._set_phase(DOWN, now)
        if self.mode == PROBE_BW:
            # raise the bound only while it is what limits sending
            if self.phase == UP and self.cwnd_limited:
                self.probe_inflight_high_upward(acked_bytes, round_end)
            self.probe_bw_advance(now, inflight, bdp, round_end)
        if expired and self.mode != PROBE_RTT:
            self.enter_probe_rtt(now)
        if self.mode == PROBE_RTT:
            self._handle_probe_rtt(now, inflight)
        if round_end:
            self._reset_round(inflight)
        self._set_pacing_rate()
        self._set_cwnd(acked_bytes, bdp)

    def _on_round_end(self, now, samples):
        lost = self.lost_in_round
        rate = self._round_loss_rate()
        if self.mode == STARTUP:
            if self.bw > 0 and check_full_bandwidth(self, self.bw):
                self.full_bw_reached = True
            if startup_loss_exit(lost, rate):
                self.full_bw_reached = True
                self.inflight_hi = max(self.bdp(), self.min_cwnd)
            self.too_high = False
            return
        self.too_high = is_inflight_too_high(lost, lost + self.delivered_in_round)
        if self.mode != PROBE_BW:
            return
        if self.too_high:
            self.update_inflight_hi_on_loss()
        if lost > 0 and self.phase in (DOWN, CRUISE) and samples:
            self.adapt_inflight_lo(samples[-1].delta_delivered_bytes)

    def _set_cwnd(self, acked_bytes, bdp):
        if self.mode == PROBE_RTT:
            self.cwnd = self.probe_rtt_cwnd
            return
        if self.bw <= 0:
            return
        target = max(CWND_GAIN * bdp, self.min_cwnd)
        hi = self.inflight_hi
        lo = self.inflight_lo
        if self.mode in (STARTUP, DRAIN):
            cwnd = self.cwnd
            if self.full_bw_reached:
                cwnd = min(cwnd + acked_bytes, target)
            elif cwnd < target or self.delivered < 10 * self.mss:
                cwnd += acked_bytes
            if hi is not None:
                cwnd = min(cwnd, hi)
        elif self.phase == CRUISE:
            if hi is not None:
                cwnd = cruise_cwnd(lo, hi)
            else:
                cwnd = target if lo is None else min(lo, target)
        elif self.phase == DOWN:
            cwnd = target
            if lo is not None:
                cwnd = min(cwnd, lo)
            if hi is not None:
                cwnd = min(cwnd, hi)
        else:  # REFILL / UP
            cwnd = hi if hi is not None else target
        self.cwnd = max(cwnd, self.min_cwnd)

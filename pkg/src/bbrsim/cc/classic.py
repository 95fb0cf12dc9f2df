"""Loss-based baselines: Reno (AIMD) and Cubic."""

import math

from ..transport import MSS
from .base import Controller

RENO_BETA = 0.5
CUBIC_C = 0.4
CUBIC_BETA = 0.7


class Reno(Controller):
    """AIMD: +1 MSS per RTT in congestion avoidance, halve once per round on loss.

    Recovery is QUIC-style: a loss of a packet sent before the current
    recovery period started is not another congestion event, and ACKs for
    such packets do not grow the window.
    """

    name = "reno"

    def __init__(self, mss=MSS, **_):
        super().__init__(mss)
        self.ssthresh = math.inf
        self.recovery_start = -1
        self.in_recovery = False

    def reno_on_ack(self, acked_bytes):
        if self.cwnd < self.ssthresh:
            self.cwnd += acked_bytes
        else:
            self.cwnd += self.mss * acked_bytes / self.cwnd
        return self.cwnd

    def reno_on_loss(self):
        self.ssthresh = max(RENO_BETA * self.cwnd, 2 * self.mss)
        self.cwnd = self.ssthresh
        return self.cwnd

    def on_ack(self, now, acked, samples, inflight):
        start = self.recovery_start
        for rec in acked:
            if rec.sent_time <= start:
                continue
            self.in_recovery = False
            self.reno_on_ack(rec.size)

    def on_loss(self, now, lost, inflight):
        if lost[-1].sent_time <= self.recovery_start:
            return
        self.recovery_start = now
        self.in_recovery = True
        self.reno_on_loss()


def cubic_k(w_max, beta=CUBIC_BETA, c=CUBIC_C):
    """Seconds until the cubic curve climbs back to ``w_max`` (in MSS)."""
    return (w_max * (1 - beta) / c) ** (1 / 3)


def cubic_window(w_max, t, k=None, c=CUBIC_C):
    """W(t) = C (t - K)^3 + w_max, all windows in MSS, t in seconds."""
    if k is None:
        k = cubic_k(w_max)
    return c * (t - k) ** 3 + w_max


class Cubic(Controller):
    name = "cubic"

    def __init__(self, mss=MSS, **_):
        super().__init__(mss)
        self.ssthresh = math.inf
        self.recovery_start = -1
        self.w_max = 0.0  # MSS
        self.k = 0.0
        self.epoch_start = None
        self.w_est = 0.0  # Reno-friendly estimate, MSS
        self.min_rtt = None

    def cubic_target(self, now, rtt):
        """Window target in bytes for the ACK at ``now`` (cubic evaluated at t + RTT)."""
        t = (now - self.epoch_start) / 1e6
        target = cubic_window(self.w_max, t + rtt / 1e6, self.k)
        return target * self.mss

    def on_ack(self, now, acked, samples, inflight):
        for s in samples:
            if self.min_rtt is None or s.rtt_sample < self.min_rtt:
                self.min_rtt = s.rtt_sample
        mss = self.mss
        for rec in acked:
            if rec.sent_time <= self.recovery_start:
                continue
            if self.cwnd < self.ssthresh:
                self.cwnd += rec.size
                continue
            if self.epoch_start is None:
                # congestion avoidance entered without a prior loss
                self.epoch_start = now
                self.w_max = self.cwnd / mss
                self.k = 0.0
                self.w_est = self.cwnd / mss
            rtt = self.min_rtt or 100_000
            target = self.cubic_target(now, rtt)
            # Reno-friendly region
            self.w_est += 3 * (1 - CUBIC_BETA) / (1 + CUBIC_BETA) * rec.size / self.cwnd
            friendly = self.w_est * mss
            if friendly > target:
                target = friendly
            if target > self.cwnd:
                self.cwnd += (target - self.cwnd) / self.cwnd * rec.size
            else:
                self.cwnd += 0.01 * mss * rec.size / self.cwnd

    def on_loss(self, now, lost, inflight):
        if lost[-1].sent_time <= self.recovery_start:
            return
        self.recovery_start = now
        self.cubic_on_congestion(now)

    def cubic_on_congestion(self, now):
        mss = self.mss
        self.w_max = self.cwnd / mss
        self.cwnd = max(self.cwnd * CUBIC_BETA, 2 * mss)
        self.ssthresh = self.cwnd
        self.k = cubic_k(self.w_max)
        self.epoch_start = now
        self.w_est = self.cwnd / mss
        return self.cwnd

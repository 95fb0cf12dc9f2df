"""Shared congestion-controller contract."""

from ..transport import INITIAL_CWND, MSS


class Controller:
    """Base controller: holds cwnd (bytes) and pacing_rate (bytes/s or None).

    Callbacks, all with ``now`` in integer microseconds:

    * ``on_packet_sent(now, size, inflight)``
    * ``on_ack(now, acked_records, rate_samples, inflight)``
    * ``on_loss(now, lost_records, inflight)``
    """

    name = "base"

    def __init__(self, mss=MSS):
        self.mss = mss
        self.cwnd = INITIAL_CWND
        self.pacing_rate = None

    def on_packet_sent(self, now, size, inflight):
        pass

    def on_ack(self, now, acked, samples, inflight):
        pass

    def on_loss(self, now, lost, inflight):
        pass

"""Minimal reliable transport: STREAM / STOP_WAITING / ACK frames over the simulated network.

Handles pacing, loss detection, RTT smoothing and the per-ACK delivery-rate
samples that feed the congestion controllers. Byte counts (inflight,
delivered, bandwidth) are in wire bytes so that a saturated 5 Mbps link
reads as 625 000 B/s.
"""

import math
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field

from .engine import US_PER_S

MSS = 1400
HEADER = 40
MTU = MSS + HEADER
ACK_SIZE = 40

PACKET_THRESHOLD = 3
TIME_THRESHOLD = 9 / 8
INITIAL_CWND = 10 * MSS
INITIAL_PTO_US = 1_000_000
MAX_ACK_RANGES = 32
RATE_BIN_US = 100_000


@dataclass(frozen=True)
class StreamFrame:
    offset: int
    length: int


@dataclass(frozen=True)
class StopWaitingFrame:
    least_unacked: int


@dataclass
class AckFrame:
    largest_acked: int
    ack_delay: int = 0
    ranges: tuple = ()  # inclusive (lo, hi), disjoint, descending

    def validate(self):
        if self.ranges and self.ranges[0][1] != self.largest_acked:
            raise ValueError("first ack range must end at largest_acked")
        prev_lo = None
        for lo, hi in self.ranges:
            if lo > hi:
                raise ValueError(f"bad ack range ({lo}, {hi})")
            if prev_lo is not None and hi >= prev_lo - 1:
                raise ValueError("ack ranges must be disjoint and descending")
            prev_lo = lo
        return self


class Packet:
    __slots__ = ("flow_id", "pn", "size", "sent_time", "is_ack", "route", "hop", "dest",
                 "stream", "stop_waiting", "ack")

    def __init__(self, flow_id, pn, size, sent_time, is_ack, route, dest,
                 stream=None, stop_waiting=None, ack=None):
        self.flow_id = flow_id
        self.pn = pn
        self.size = size
        self.sent_time = sent_time
        self.is_ack = is_ack
        self.route = route
        self.hop = 0
        self.dest = dest
        self.stream = stream
        self.stop_waiting = stop_waiting
        self.ack = ack


class SentPacketRecord:
    """Per-packet send-time snapshot used for delivery-rate sampling."""

    __slots__ = ("pn", "size", "sent_time", "total_byte_acked_snapshot",
                 "last_acked_packet_ack_time_snapshot", "is_app_limited", "stream")

    def __init__(self, pn, size, sent_time, total_byte_acked, last_ack_time,
                 is_app_limited=False, stream=None):
        self.pn = pn
        self.size = size
        self.sent_time = sent_time
        self.total_byte_acked_snapshot = total_byte_acked
        self.last_acked_packet_ack_time_snapshot = last_ack_time
        self.is_app_limited = is_app_limited
        self.stream = stream

    def __repr__(self):
        return (f"SentPacketRecord(pn={self.pn}, size={self.size}, sent={self.sent_time}, "
                f"acked_snap={self.total_byte_acked_snapshot}, "
                f"ack_time_snap={self.last_acked_packet_ack_time_snapshot})")


class RateSample:
    __slots__ = ("delta_delivered_bytes", "delta_t", "bw_es", "rtt_sample",
                 "bytes_lost_in_round", "is_round_end", "is_app_limited", "acked_bytes",
                 "sent_time", "prior_delivered")

    def __init__(self, delta_delivered_bytes, delta_t, rtt_sample, bytes_lost_in_round=0,
                 is_round_end=False, is_app_limited=False, acked_bytes=0, sent_time=0,
                 prior_delivered=0):
        self.delta_delivered_bytes = delta_delivered_bytes
        self.delta_t = delta_t
        self.bw_es = delta_delivered_bytes * US_PER_S / delta_t
        self.rtt_sample = rtt_sample
        self.bytes_lost_in_round = bytes_lost_in_round
        self.is_round_end = is_round_end
        self.is_app_limited = is_app_limited
        self.acked_bytes = acked_bytes
        self.sent_time = sent_time
        self.prior_delivered = prior_delivered

    def __repr__(self):
        return (f"RateSample(bw_es={self.bw_es:.1f}, dd={self.delta_delivered_bytes}, "
                f"dt={self.delta_t}, rtt={self.rtt_sample}, round_end={self.is_round_end})")


class SentPacketTracker:
    """Outstanding-packet bookkeeping, delivery-rate sampling and loss detection.

    Packets travel a FIFO path and are acknowledged individually, so ACKs
    for a flow arrive in packet-number order. Only packet numbers above the
    previous largest acknowledged one are examined on each ACK, which keeps
    processing proportional to the newly acknowledged set.
    """

    def __init__(self, start_time=0):
        self.total_byte_acked = 0
        self.last_acked_packet_ack_time = start_time
        self.inflight = 0
        self.unacked = OrderedDict()
        self.largest_acked = -1
        self.newly_acked = []

        self.latest_rtt = None
        self.smoothed_rtt = None
        self.rttvar = None
        self.min_rtt = None

        self.round_count = 0
        self.next_round_delivered = 0
        self.bytes_lost_in_round = 0
        self.bytes_lost = 0

    def on_packet_sent(self, pn, size, now, is_app_limited=False, stream=None):
        rec = SentPacketRecord(pn, size, now, self.total_byte_acked,
                               self.last_acked_packet_ack_time, is_app_limited, stream)
        self.unacked[pn] = rec
        self.inflight += size
        return rec

    def least_unacked(self, default):
        for pn in self.unacked:
            return pn
        return default

    def on_ack_received(self, ack, now):
        """Process an ACK frame; returns the rate samples it produced.

        Newly acknowledged records are left in :attr:`newly_acked`.
        """
        prev = self.largest_acked
        self.newly_acked = acked = []
        if ack.largest_acked <= prev:
            return []
        pns = []
        for lo, hi in ack.ranges:
            if hi <= prev:
                break
            if lo <= prev:
                lo = prev + 1
            pns.extend(range(lo, hi + 1))
        pns.sort()
        unacked = self.unacked
        samples = []
        largest_rec = None
        for pn in pns:
            rec = unacked.pop(pn, None)
            if rec is None:
                continue
            acked.append(rec)
            self.inflight -= rec.size
            self.total_byte_acked += rec.size
            self.last_acked_packet_ack_time = now
            round_end = False
            if rec.total_byte_acked_snapshot >= self.next_round_delivered:
                self.next_round_delivered = self.total_byte_acked
                self.round_count += 1
                round_end = True
            dt = now - rec.last_acked_packet_ack_time_snapshot
            rtt = now - rec.sent_time
            if dt > 0 and rtt > 0:
                samples.append(RateSample(
                    self.total_byte_acked - rec.total_byte_acked_snapshot, dt, rtt,
                    self.bytes_lost_in_round, round_end, rec.is_app_limited, rec.size,
                    rec.sent_time, rec.total_byte_acked_snapshot))
            if round_end:
                self.bytes_lost_in_round = 0
            largest_rec = rec
        self.largest_acked = ack.largest_acked
        if largest_rec is not None and largest_rec.pn == ack.largest_acked:
            self._update_rtt(now - largest_rec.sent_time - ack.ack_delay)
        return samples

    def _update_rtt(self, rtt):
        if rtt <= 0:
            return
        self.latest_rtt = rtt
        if self.min_rtt is None or rtt < self.min_rtt:
            self.min_rtt = rtt
        if self.smoothed_rtt is None:
            self.smoothed_rtt = rtt
            self.rttvar = rtt / 2
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.smoothed_rtt - rtt)
            self.smoothed_rtt = 0.875 * self.smoothed_rtt + 0.125 * rtt

    def detect_losses(self, now):
        """Declare lost every record below the largest ACK that crossed a threshold."""
        lost = []
        largest = self.largest_acked
        unacked = self.unacked
        delay = TIME_THRESHOLD * self.smoothed_rtt if self.smoothed_rtt is not None else None
        while unacked:
            pn, rec = next(iter(unacked.items()))
            if pn >= largest:
                break
            if largest - pn >= PACKET_THRESHOLD or (delay is not None and now - rec.sent_time >= delay):
                unacked.popitem(last=False)
                self.inflight -= rec.size
                self.bytes_lost_in_round += rec.size
                self.bytes_lost += rec.size
                lost.append(rec)
            else:
                break
        return lost

    def loss_time(self):
        """When the oldest packet below the largest ACK crosses the time threshold."""
        if not self.unacked or self.smoothed_rtt is None:
            return None
        pn, rec = next(iter(self.unacked.items()))
        if pn >= self.largest_acked:
            return None
        return rec.sent_time + TIME_THRESHOLD * self.smoothed_rtt

    def pto_us(self):
        if self.smoothed_rtt is None:
            return INITIAL_PTO_US
        return self.smoothed_rtt + max(4 * self.rttvar, 1000)


class Pacer:
    """Rate pacer with a two-packet burst allowance."""

    BURST = 2

    def __init__(self):
        self.t_next = -math.inf

    def earliest(self, now):
        return now if self.t_next <= now else self.t_next

    def on_sent(self, now, size, rate):
        gap = size * US_PER_S / rate
        base = self.t_next
        floor = now - (self.BURST - 1) * gap
        if base < floor:
            base = floor
        self.t_next = base + gap

    def pace_next_send(self, pacing_rate, size, now):
        """Departure time for a packet that is ready at ``now``; records the send."""
        if pacing_rate <= 0:
            raise ValueError("pacing_rate must be positive")
        dep = self.earliest(now)
        self.on_sent(dep, size, pacing_rate)
        return dep


_PATTERN = bytes(range(256)) * ((MSS // 256) + 2)


def stream_bytes(offset, length):
    """Synthetic payload: the byte at stream offset k is k mod 256."""
    start = offset % 256
    return _PATTERN[start:start + length]


def stream_crc(total_bytes):
    crc = 0
    off = 0
    while off < total_bytes:
        n = min(MSS, total_bytes - off)
        crc = zlib.crc32(stream_bytes(off, n), crc)
        off += n
    return crc


@dataclass
class SenderStats:
    packets_sent: int = 0
    bytes_sent: int = 0
    packets_lost: int = 0
    retransmissions: int = 0
    rate_trace: list = field(default_factory=list)  # (bin start us, mean rate B/s)


class Sender:
    """Bulk-data sender driven by a congestion controller.

    The controller exposes ``cwnd`` (bytes) and ``pacing_rate`` (bytes/s, or
    None for cwnd-clocked senders) and receives ``on_packet_sent``,
    ``on_ack`` and ``on_loss`` callbacks.
    """

    def __init__(self, sim, flow_id, controller, route, start_us=0, stop_us=None,
                 send_jitter_us=0, jitter_rng=None):
        self.sim = sim
        self.flow_id = flow_id
        self.cc = controller
        self.route = route
        self.start_us = start_us
        self.stop_us = stop_us
        self.receiver = None
        self.tracker = SentPacketTracker(start_us)
        self.pacer = Pacer()
        self.stats = SenderStats()
        self.active = False
        self.next_pn = 0
        self.next_offset = 0
        self.retransmit_queue = []
        self.pto_count = 0
        self.send_hook = None
        self._wake = None
        self._timer = None
        self._bin = -1
        self._bin_sum = 0.0
        self._bin_n = 0
        # host-side jitter: breaks droptail phase lock between ACK-clocked flows
        self.send_jitter_us = send_jitter_us
        self.jitter_rng = jitter_rng
        self._last_release = 0
        sim.schedule(start_us, self.start)
        if stop_us is not None:
            sim.schedule(stop_us, self.stop)

    # -- lifecycle ---------------------------------------------------------
    def start(self):
        self.active = True
        self.tracker.last_acked_packet_ack_time = self.sim.now
        self._try_send()

    def stop(self):
        self.active = False
        self.sim.cancel(self._wake)
        self.sim.cancel(self._timer)
        self._flush_rate_bin()

    # -- sending -----------------------------------------------------------
    def _try_send(self):
        if not self.active:
            return
        sim = self.sim
        now = sim.now
        tracker = self.tracker
        cc = self.cc
        pacer = self.pacer
        while tracker.inflight + MTU <= cc.cwnd:
            rate = cc.pacing_rate
            if rate:
                t = pacer.earliest(now)
                if t > now:
                    fire = int(math.ceil(t))
                    wake = self._wake
                    if wake is None or wake[2] is None or wake[0] > fire:
                        sim.cancel(wake)
                        self._wake = sim.schedule(fire, self._on_wake)
                    break
            self._send_one(now)
            if rate:
                pacer.on_sent(now, MTU, rate)
        self._arm_timer()

    def _on_wake(self):
        self._try_send()

    def _send_one(self, now):
        if self.retransmit_queue:
            stream = self.retransmit_queue.pop()
            self.stats.retransmissions += 1
        else:
            stream = StreamFrame(self.next_offset, MSS)
            self.next_offset += MSS
        pn = self.next_pn
        self.next_pn += 1
        tracker = self.tracker
        least = tracker.least_unacked(pn)
        tracker.on_packet_sent(pn, MTU, now, False, stream)
        pkt = Packet(self.flow_id, pn, MTU, now, False, self.route, self.receiver.on_packet,
                     stream, least)
        st = self.stats
        st.packets_sent += 1
        st.bytes_sent += MTU
        self.cc.on_packet_sent(now, MTU, tracker.inflight)
        self._trace_rate(now)
        if self.send_hook is not None:
            self.send_hook(self, now)
        if self.send_jitter_us:
            # order-preserving release delay in [0, send_jitter_us)
            t = now + int(self.jitter_rng.random() * self.send_jitter_us)
            if t < self._last_release:
                t = self._last_release
            self._last_release = t
            if t > now:
                self.sim.schedule(t, self.route[0].send, pkt)
                return
        self.route[0].send(pkt)

    def _trace_rate(self, now):
        rate = self.cc.pacing_rate
        if not rate:
            srtt = self.tracker.smoothed_rtt
            rate = self.cc.cwnd * US_PER_S / srtt if srtt else 0.0
        b = now // RATE_BIN_US
        if b != self._bin:
            self._flush_rate_bin()
            self._bin = b
        self._bin_sum += rate
        self._bin_n += 1

    def _flush_rate_bin(self):
        if self._bin_n:
            self.stats.rate_trace.append((self._bin * RATE_BIN_US, self._bin_sum / self._bin_n))
        self._bin_sum = 0.0
        self._bin_n = 0

    # -- ACK / loss handling -----------------------------------------------
    def on_ack_packet(self, pkt):
        if not self.active:
            return
        now = self.sim.now
        tracker = self.tracker
        samples = tracker.on_ack_received(pkt.ack, now)
        acked = tracker.newly_acked
        if not acked:
            return
        self.pto_count = 0
        lost = tracker.detect_losses(now)
        if lost:
            self._on_lost(now, lost)
        self.cc.on_ack(now, acked, samples, tracker.inflight)
        self._try_send()

    def _on_lost(self, now, lost):
        self.stats.packets_lost += len(lost)
        rq = self.retransmit_queue
        for rec in reversed(lost):
            rq.append(rec.stream)
        self.cc.on_loss(now, lost, self.tracker.inflight)

    def _deadline(self):
        tracker = self.tracker
        lt = tracker.loss_time()
        if lt is not None:
            return lt
        if tracker.unacked:
            last_sent = next(reversed(tracker.unacked.values())).sent_time
            return last_sent + tracker.pto_us() * (1 << min(self.pto_count, 10))
        return None

    def _arm_timer(self):
        deadline = self._deadline()
        if deadline is None:
            return
        fire = int(math.ceil(deadline))
        if fire < self.sim.now:
            fire = self.sim.now
        timer = self._timer
        if timer is not None and timer[2] is not None and timer[0] <= fire:
            return
        self.sim.cancel(timer)
        self._timer = self.sim.schedule(fire, self._on_timer)

    def _on_timer(self):
        if not self.active:
            return
        now = self.sim.now
        deadline = self._deadline()
        if deadline is None:
            return
        if deadline > now:
            self._arm_timer()
            return
        tracker = self.tracker
        if tracker.loss_time() is not None:
            lost = tracker.detect_losses(now)
            if lost:
                self._on_lost(now, lost)
            self._try_send()
            return
        # probe timeout: two probe packets outside cwnd and pacing
        self.pto_count += 1
        for _ in range(2):
            self._send_one(now)
        self._arm_timer()


@dataclass
class ReceiverStats:
    packets_received: int = 0
    bytes_received: int = 0
    bytes_received_app: int = 0
    duplicate_packets: int = 0
    owd_time: list = field(default_factory=list)
    owd_us: list = field(default_factory=list)


class Receiver:
    """Acknowledges every packet immediately and reassembles the byte stream."""

    def __init__(self, sim, flow_id, route, verify_stream=False):
        self.sim = sim
        self.flow_id = flow_id
        self.route = route
        self.sender = None
        self.stats = ReceiverStats()
        self.ranges = []  # ascending [lo, hi]
        self.next_expected = 0
        self._ooo = {}
        self.verify_stream = verify_stream
        self.crc = 0

    def _record_pn(self, pn):
        """Insert pn into the received set; False if it was already there."""
        ranges = self.ranges
        if ranges and pn == ranges[-1][1] + 1:
            ranges[-1][1] = pn
            return True
        if not ranges or pn > ranges[-1][1] + 1:
            ranges.append([pn, pn])
            return True
        for i in range(len(ranges) - 1, -1, -1):
            lo, hi = ranges[i]
            if lo <= pn <= hi:
                return False
            if pn == hi + 1:
                ranges[i][1] = pn
                if i + 1 < len(ranges) and ranges[i + 1][0] == pn + 1:
                    ranges[i][1] = ranges[i + 1][1]
                    del ranges[i + 1]
                return True
            if pn == lo - 1:
                if i > 0 and ranges[i - 1][1] == pn - 1:
                    ranges[i - 1][1] = hi
                    del ranges[i]
                else:
                    ranges[i][0] = pn
                return True
            if pn > hi:
                ranges.insert(i + 1, [pn, pn])
                return True
        ranges.insert(0, [pn, pn])
        return True

    def _prune(self, least_unacked):
        ranges = self.ranges
        while len(ranges) > 1 and ranges[0][1] < least_unacked:
            del ranges[0]

    def receiver_on_packet(self, pkt, now):
        """Record the packet and build the ACK frame for it."""
        st = self.stats
        if self._record_pn(pkt.pn):
            st.packets_received += 1
            st.bytes_received += pkt.size
            st.owd_time.append(now)
            st.owd_us.append(now - pkt.sent_time)
            if pkt.stream is not None:
                self._on_stream(pkt.stream)
        else:
            st.duplicate_packets += 1
        if pkt.stop_waiting is not None:
            self._prune(pkt.stop_waiting)
        ranges = self.ranges
        n = len(ranges)
        k = n - MAX_ACK_RANGES if n > MAX_ACK_RANGES else 0
        ack_ranges = tuple((ranges[i][0], ranges[i][1]) for i in range(n - 1, k - 1, -1))
        return AckFrame(ranges[-1][1], 0, ack_ranges)

    def on_packet(self, pkt):
        now = self.sim.now
        ack = self.receiver_on_packet(pkt, now)
        reply = Packet(self.flow_id, pkt.pn, ACK_SIZE, now, True, self.route,
                       self.sender.on_ack_packet, ack=ack)
        self.route[0].send(reply)

    def _on_stream(self, frame):
        off = frame.offset
        if off + frame.length <= self.next_expected:
            return
        if off != self.next_expected:
            self._ooo[off] = frame.length
            return
        self._deliver(off, frame.length)
        ooo = self._ooo
        while self.next_expected in ooo:
            off = self.next_expected
            self._deliver(off, ooo.pop(off))

    def _deliver(self, off, length):
        self.next_expected = off + length
        self.stats.bytes_received_app += length
        if self.verify_stream:
            self.crc = zlib.crc32(stream_bytes(off, length), self.crc)


class Flow:
    """A sender/receiver pair wired over a topology route."""

    def __init__(self, sim, flow_id, controller, fwd_route, rev_route, start_us=0,
                 stop_us=None, verify_stream=False, send_jitter_us=0, jitter_rng=None):
        self.flow_id = flow_id
        self.start_us = start_us
        self.stop_us = stop_us
        self.sender = Sender(sim, flow_id, controller, fwd_route, start_us, stop_us,
                             send_jitter_us, jitter_rng)
        self.receiver = Receiver(sim, flow_id, rev_route, verify_stream)
        self.sender.receiver = self.receiver
        self.receiver.sender = self.sender

    @property
    def controller(self):
        return self.sender.cc

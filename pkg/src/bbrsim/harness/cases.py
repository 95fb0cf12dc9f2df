"""Bottleneck configuration tables for the five experiment families."""

from dataclasses import dataclass

MBPS = 1_000_000


@dataclass(frozen=True)
class CaseRow:
    case: int
    bandwidth_mbps: int
    prop_delay_ms: int
    queue_ms: int  # queue limit = bandwidth * queue_ms

    @property
    def bandwidth_bps(self):
        return self.bandwidth_mbps * MBPS

    @property
    def queue_label(self):
        return f"{self.bandwidth_mbps}Mbps*{self.queue_ms}ms"


def _table(rows):
    return {r[0]: CaseRow(*r) for r in rows}


# l2 for intra-protocol fairness (also the utilization cases C2..C10)
INTRA_FAIRNESS = _table([
    (1, 5, 50, 100),
    (2, 5, 50, 150),
    (3, 5, 50, 200),
    (4, 6, 50, 100),
    (5, 6, 50, 150),
    (6, 7, 50, 150),
    (7, 7, 100, 300),
    (8, 8, 100, 200),
    (9, 8, 100, 300),
    (10, 10, 50, 150),
    (11, 10, 50, 200),
])

# l2 for RTT unfairness; queue = bw * 1.5 * max round-trip propagation
RTT_UNFAIRNESS = _table([
    (1, 4, 10, 150),
    (2, 4, 20, 180),
    (3, 4, 30, 210),
    (4, 6, 10, 150),
    (5, 6, 20, 180),
    (6, 6, 30, 210),
    (7, 8, 10, 150),
    (8, 8, 20, 180),
    (9, 8, 30, 210),
])

# l2 for inter-protocol fairness against Cubic
INTER_PROTOCOL = _table([
    (1, 4, 50, 100),
    (2, 4, 50, 150),
    (3, 4, 50, 200),
    (4, 6, 50, 100),
    (5, 6, 50, 150),
    (6, 6, 50, 200),
    (7, 8, 50, 150),
    (8, 10, 50, 150),
    (9, 12, 50, 150),
])

UTILIZATION_CASES = (2, 5, 7, 9, 10)
UTILIZATION_LOSS_RATES = (0.0, 0.01, 0.03, 0.05)

# RTT-unfairness side links: 100 Mbps; path1 (flow1) 10 ms per side hop,
# path2 (flow2) 20 ms per side hop
SIDE_BANDWIDTH_MBPS = 100
PATH1_SIDE_DELAY_MS = 10
PATH2_SIDE_DELAY_MS = 20

# intra-fairness flow lifetimes, seconds
INTRA_SCHEDULE = ((0, 400), (40, 400), (80, 200), (120, 300))

RESPONSIVENESS_PROP_MS = 50
RESPONSIVENESS_QUEUE_BYTES = int(1.5 * 4 * MBPS * 0.100 / 8)
RESPONSIVENESS_HIGH_BPS = 4 * MBPS
RESPONSIVENESS_LOW_BPS = 1 * MBPS
RESPONSIVENESS_PERIOD_S = 50

DURATIONS_S = {
    "intra_fairness": 400,
    "rtt_unfairness": 200,
    "utilization": 400,
    "responsiveness": 400,
    "inter_protocol": 200,
}

SCENARIOS = tuple(DURATIONS_S)

CASE_TABLES = {
    "intra_fairness": INTRA_FAIRNESS,
    "rtt_unfairness": RTT_UNFAIRNESS,
    "utilization": {c: INTRA_FAIRNESS[c] for c in UTILIZATION_CASES},
    "inter_protocol": INTER_PROTOCOL,
}


def rtt_max_prop_ms(row):
    """Largest round-trip propagation of the two RTT-unfairness paths."""
    return 2 * (2 * PATH2_SIDE_DELAY_MS + row.prop_delay_ms)


def default_capacity_schedule(duration_s, period_s=RESPONSIVENESS_PERIOD_S,
                              high=RESPONSIVENESS_HIGH_BPS, low=RESPONSIVENESS_LOW_BPS):
    """Alternate high/low capacity every ``period_s`` seconds, starting high."""
    out = []
    t = 0
    i = 0
    while t < duration_s:
        out.append((t, high if i % 2 == 0 else low))
        t += period_s
        i += 1
    return out

"""Per-flow statistics and the evaluation formulas (rate, Jain, ratio, utilization, delay, loss)."""

import csv
from dataclasses import dataclass, field

from .engine import US_PER_S

BIN_US = 100_000

RATES_HEADER = ["time_s", "flow_id", "rate_bps"]
OWD_HEADER = ["time_s", "flow_id", "owd_ms"]
SUMMARY_HEADER = ["scenario", "case", "algo", "flow_id", "avg_rate_bps", "jain", "ratio", "util",
                  "mean_owd_ms", "loss_rate"]


class MetricError(ValueError):
    pass


@dataclass
class FlowStats:
    flow_id: int
    algo: str
    start_s: float
    stop_s: float
    bytes_received_app: int = 0
    bytes_sent: int = 0
    packets_sent: int = 0
    packets_lost: int = 0
    owd_samples: list = field(default_factory=list)  # (time_s, owd_ms), 100 ms bin means
    owd_mean_ms: float = float("nan")
    owd_count: int = 0
    rate_trace: list = field(default_factory=list)  # (time_s, rate_bps)
    delivered_trace: list = field(default_factory=list)  # (bin start s, app bytes in bin)

    @property
    def duration(self):
        return self.stop_s - self.start_s


@dataclass
class ScenarioSummary:
    scenario: str
    case: str
    algo: str
    rates: dict  # flow_id -> bytes/s
    jain_index: float
    ratio: float
    utilization: float
    mean_owd_ms: float
    mean_loss_rate: float
    flows: list = field(default_factory=list)
    link_stats: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def average_rate(bytes_received, duration_s):
    """Bytes per second over the active lifetime."""
    if duration_s <= 0:
        raise MetricError("duration must be positive")
    return bytes_received / duration_s


def jain_index(rates):
    rates = list(rates)
    if not rates:
        raise MetricError("jain_index needs at least one rate")
    if any(r < 0 for r in rates):
        raise MetricError("rates must be non-negative")
    total = sum(rates)
    sq = sum(r * r for r in rates)
    if sq == 0:
        raise MetricError("jain_index undefined for all-zero rates")
    return total * total / (len(rates) * sq)


def max_min_ratio(rates):
    rates = list(rates)
    lo = min(rates)
    if lo <= 0:
        raise MetricError("ratio undefined when the minimum rate is zero")
    return max(rates) / lo


def channel_utilization(bytes_per_flow, cap_bps, duration_s):
    """Application bytes delivered over raw capacity * duration."""
    if cap_bps <= 0 or duration_s <= 0:
        raise MetricError("capacity and duration must be positive")
    return sum(bytes_per_flow) * 8 / (cap_bps * duration_s)


def mean_owd(flows):
    """Mean one-way delay in ms: per-flow mean, then unweighted mean over flows."""
    means = [f.owd_mean_ms for f in flows if f.owd_count > 0]
    if not means:
        raise MetricError("no one-way-delay samples")
    return sum(means) / len(means)


def mean_loss_rate(flows):
    sent = sum(f.packets_sent for f in flows)
    if sent == 0:
        raise MetricError("no packets sent")
    return sum(f.packets_lost for f in flows) / sent


def bin_means(times_us, values, bin_us=BIN_US):
    """Collapse (time, value) samples into per-bin means: [(bin_start_us, mean)]."""
    out = []
    cur = None
    acc = 0.0
    n = 0
    for t, v in zip(times_us, values):
        b = t // bin_us
        if b != cur:
            if n:
                out.append((cur * bin_us, acc / n))
            cur = b
            acc = 0.0
            n = 0
        acc += v
        n += 1
    if n:
        out.append((cur * bin_us, acc / n))
    return out


def summarize(scenario, case, algo, flows, cap_bps, duration_s, link_stats=None, extra=None):
    rates = {f.flow_id: average_rate(f.bytes_received_app, f.duration) for f in flows}
    values = list(rates.values())
    try:
        jain = jain_index(values)
    except MetricError:
        jain = float("nan")
    try:
        ratio = max_min_ratio(values)
    except MetricError:
        ratio = float("inf")
    util = channel_utilization([f.bytes_received_app for f in flows], cap_bps, duration_s)
    try:
        owd = mean_owd(flows)
    except MetricError:
        owd = float("nan")
    return ScenarioSummary(scenario, str(case), algo, rates, jain, ratio, util, owd,
                           mean_loss_rate(flows), flows, link_stats or {}, extra or {})


def _fmt(x, nd=6):
    return f"{x:.{nd}f}"


def write_rates_csv(path, flows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATES_HEADER)
        rows = [(t, f.flow_id, r) for f in flows for t, r in f.rate_trace]
        rows.sort(key=lambda row: (row[0], row[1]))
        for t, fid, r in rows:
            w.writerow([_fmt(t, 1), fid, _fmt(r, 1)])


def write_owd_csv(path, flows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OWD_HEADER)
        rows = [(t, f.flow_id, d) for f in flows for t, d in f.owd_samples]
        rows.sort(key=lambda row: (row[0], row[1]))
        for t, fid, d in rows:
            w.writerow([_fmt(t, 1), fid, _fmt(d, 3)])


def summary_rows(summary):
    rows = []
    for f in summary.flows:
        rows.append([summary.scenario, summary.case, f.algo, f.flow_id,
                     _fmt(summary.rates[f.flow_id] * 8, 1), _fmt(summary.jain_index),
                     _fmt(summary.ratio), _fmt(summary.utilization), _fmt(summary.mean_owd_ms, 3),
                     _fmt(summary.mean_loss_rate)])
    return rows


def write_summary_csv(path, summary):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        w.writerows(summary_rows(summary))


def read_summary_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

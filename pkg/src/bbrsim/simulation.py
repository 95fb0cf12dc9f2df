"""Assemble a topology, flows and controllers into one runnable simulation."""

from dataclasses import dataclass, field

from . import metrics
from .cc import make_controller
from .engine import EventQueue, RngStream, US_PER_S, seconds
from .netsim import build_dumbbell
from .transport import MSS, Flow

FLOW_RNG_BASE = 100
JITTER_RNG_BASE = 200
DEFAULT_SEND_JITTER_US = 500


@dataclass
class FlowSpec:
    flow_id: int
    algo: str
    path: list
    start_s: float
    stop_s: float
    options: dict = field(default_factory=dict)


class Simulation:
    """One self-contained simulation instance (single-threaded)."""

    def __init__(self, bottleneck, side_links, flows, seed=0, capacity_schedule=None,
                 verify_stream=False, send_hook=None, send_jitter_us=DEFAULT_SEND_JITTER_US):
        self.sim = EventQueue()
        self.seed = seed
        self.flow_specs = list(flows)
        paths = {f.flow_id: f.path for f in self.flow_specs}
        self.topology = build_dumbbell(self.sim, bottleneck, side_links or {}, paths, seed=seed)
        self.bottleneck = self.topology.links["l2"]
        self.capacity_schedule = list(capacity_schedule or [])
        for at_s, bps in self.capacity_schedule:
            at = seconds(at_s)
            if at == 0:
                self.bottleneck.set_bandwidth(bps)
            else:
                self.bottleneck.set_bandwidth(bps, at)
        self.flows = []
        for spec in self.flow_specs:
            rng = RngStream(seed, FLOW_RNG_BASE + spec.flow_id)
            cc = make_controller(spec.algo, rng=rng, **spec.options)
            flow = Flow(self.sim, spec.flow_id, cc, self.topology.route(spec.flow_id),
                        self.topology.reverse_route(spec.flow_id), seconds(spec.start_s),
                        seconds(spec.stop_s), verify_stream=verify_stream,
                        send_jitter_us=send_jitter_us,
                        jitter_rng=RngStream(seed, JITTER_RNG_BASE + spec.flow_id))
            flow.sender.send_hook = send_hook
            self.flows.append(flow)

    def run(self, duration_s):
        self.duration_s = duration_s
        self.sim.run_until(seconds(duration_s))
        for flow in self.flows:
            if flow.sender.active:
                flow.sender._flush_rate_bin()
        return self.flow_stats()

    def flow_stats(self):
        out = []
        for spec, flow in zip(self.flow_specs, self.flows):
            snd = flow.sender.stats
            rcv = flow.receiver.stats
            owd_ms = [d / 1000.0 for d in rcv.owd_us]
            fs = metrics.FlowStats(
                flow_id=spec.flow_id, algo=spec.algo, start_s=spec.start_s, stop_s=spec.stop_s,
                bytes_received_app=rcv.bytes_received_app, bytes_sent=snd.bytes_sent,
                packets_sent=snd.packets_sent, packets_lost=snd.packets_lost,
                owd_count=len(owd_ms),
                owd_mean_ms=(sum(owd_ms) / len(owd_ms)) if owd_ms else float("nan"),
                owd_samples=[(t / US_PER_S, v) for t, v in metrics.bin_means(rcv.owd_time, owd_ms)],
                rate_trace=[(t / US_PER_S, r * 8) for t, r in snd.rate_trace],
            )
            fs.delivered_trace = _delivered_bins(rcv)
            out.append(fs)
        return out

    def link_stats(self):
        return {ch.name: ch.stats() for ch in self.topology.channels()}

    def conservation_ok(self):
        return all(ch.conservation_ok() for ch in self.topology.channels())


def _delivered_bins(rcv, bin_us=metrics.BIN_US):
    """Received payload bytes per 100 ms bin, from owd sample times (one per packet)."""
    bins = {}
    for t in rcv.owd_time:
        b = t // bin_us
        bins[b] = bins.get(b, 0) + MSS
    return sorted((b * bin_us / US_PER_S, v) for b, v in bins.items())

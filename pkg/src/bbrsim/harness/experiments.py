"""Experiment definitions: resolve a scenario/case/algo into a config, run it, emit CSVs."""

import configparser
import io
import os
from dataclasses import dataclass, field, replace

from .. import metrics
from ..cc import ALGORITHMS, UnknownAlgorithm
from ..engine import millis
from ..netsim import LinkConfig, bdp_bytes
from ..simulation import FlowSpec, Simulation
from . import cases as C


class ConfigError(ValueError):
    pass


INTRA_PATH = ["n2", "n3"]
PATH1 = ["n0", "n2", "n3", "n4"]
PATH2 = ["n1", "n2", "n3", "n5"]
STAGGER_S = 0.1


@dataclass
class ExperimentConfig:
    scenario: str
    case: str
    algo: str
    bandwidth_bps: int
    prop_delay_ms: float
    queue_bytes: int
    random_loss_rate: float = 0.0
    flow_algos: list = field(default_factory=list)
    flow_paths: list = field(default_factory=list)
    flow_schedule: list = field(default_factory=list)  # (start_s, stop_s)
    duration_s: float = 200.0
    seed: int = 1
    output_dir: str = None
    capacity_schedule: list = field(default_factory=list)  # (at_s, bps)
    side_bandwidth_bps: int = None
    side_delays_ms: dict = field(default_factory=dict)  # link name -> ms
    side_queue_ms: float = None
    rtprop_lambda: float = None

    def validate(self):
        if self.scenario not in C.SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        for algo in set(self.flow_algos) | {self.algo}:
            if algo not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
        if not (len(self.flow_algos) == len(self.flow_paths) == len(self.flow_schedule)):
            raise ConfigError("flow algos, paths and schedule must have equal length")
        for start, stop in self.flow_schedule:
            if not 0 <= start < stop <= self.duration_s:
                raise ConfigError(f"flow lifetime ({start}, {stop}) outside the run")
        if not 0 <= self.random_loss_rate <= 1:
            raise ConfigError("loss rate must lie in [0, 1]")
        times = [t for t, _ in self.capacity_schedule]
        if times and (times[0] != 0 or any(b <= a for a, b in zip(times, times[1:]))):
            raise ConfigError("capacity schedule times must start at 0 and strictly increase")
        return self

    def mean_capacity_bps(self):
        """Time-averaged bottleneck capacity over the run."""
        if not self.capacity_schedule:
            return self.bandwidth_bps
        total = 0.0
        sched = list(self.capacity_schedule) + [(self.duration_s, None)]
        for (t0, bps), (t1, _) in zip(sched, sched[1:]):
            t1 = min(t1, self.duration_s)
            if t1 > t0:
                total += bps * (t1 - t0)
        return total / self.duration_s


def _case_row(scenario, case):
    table = C.CASE_TABLES[scenario]
    try:
        return table[int(str(case).lstrip("Cc"))]
    except (KeyError, ValueError):
        raise ConfigError(f"unknown case {case!r} for {scenario}; valid: "
                          f"{', '.join(str(k) for k in table)}") from None


def resolve_config(scenario, case=None, algo="bbr", loss=0.0, seed=1, duration_s=None,
                   output_dir=None):
    """Default configuration for one run of a scenario."""
    if scenario not in C.SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(C.SCENARIOS)}")
    if algo not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    duration = duration_s if duration_s is not None else C.DURATIONS_S[scenario]
    if scenario == "intra_fairness":
        row = _case_row(scenario, case)
        cfg = ExperimentConfig(
            scenario, str(row.case), algo, row.bandwidth_bps, row.prop_delay_ms,
            bdp_bytes(row.bandwidth_bps, millis(row.queue_ms)),
            flow_algos=[algo] * 4, flow_paths=[INTRA_PATH] * 4,
            flow_schedule=[(a, min(b, duration)) for a, b in C.INTRA_SCHEDULE if a < duration])
        cfg.flow_algos = cfg.flow_algos[:len(cfg.flow_schedule)]
        cfg.flow_paths = cfg.flow_paths[:len(cfg.flow_schedule)]
    elif scenario == "rtt_unfairness":
        row = _case_row(scenario, case)
        qdelay_ms = 1.5 * C.rtt_max_prop_ms(row)
        cfg = ExperimentConfig(
            scenario, str(row.case), algo, row.bandwidth_bps, row.prop_delay_ms,
            bdp_bytes(row.bandwidth_bps, millis(row.queue_ms)),
            flow_algos=[algo, algo], flow_paths=[PATH1, PATH2],
            flow_schedule=[(0, duration), (0, duration)],
            side_bandwidth_bps=C.SIDE_BANDWIDTH_MBPS * C.MBPS,
            side_delays_ms={"l1": C.PATH1_SIDE_DELAY_MS, "l4": C.PATH1_SIDE_DELAY_MS,
                            "l3": C.PATH2_SIDE_DELAY_MS, "l5": C.PATH2_SIDE_DELAY_MS},
            side_queue_ms=qdelay_ms)
    elif scenario == "utilization":
        row = _case_row(scenario, case)
        rtt_ms = 2 * row.prop_delay_ms
        cfg = ExperimentConfig(
            scenario, f"C{row.case}", algo, row.bandwidth_bps, row.prop_delay_ms,
            int(1.5 * bdp_bytes(row.bandwidth_bps, millis(rtt_ms))),
            random_loss_rate=loss, flow_algos=[algo] * 4, flow_paths=[INTRA_PATH] * 4,
            flow_schedule=[(round(i * STAGGER_S, 6), duration) for i in range(4)])
    elif scenario == "responsiveness":
        cfg = ExperimentConfig(
            scenario, "1", algo, C.RESPONSIVENESS_HIGH_BPS, C.RESPONSIVENESS_PROP_MS,
            C.RESPONSIVENESS_QUEUE_BYTES, flow_algos=[algo] * 2, flow_paths=[INTRA_PATH] * 2,
            flow_schedule=[(round(i * STAGGER_S, 6), duration) for i in range(2)],
            capacity_schedule=C.default_capacity_schedule(duration))
    else:  # inter_protocol
        row = _case_row(scenario, case)
        cfg = ExperimentConfig(
            scenario, str(row.case), algo, row.bandwidth_bps, row.prop_delay_ms,
            bdp_bytes(row.bandwidth_bps, millis(row.queue_ms)),
            flow_algos=[algo, algo, "cubic", "cubic"], flow_paths=[INTRA_PATH] * 4,
            flow_schedule=[(round(i * STAGGER_S, 6), duration) for i in range(4)])
    cfg.duration_s = duration
    cfg.seed = seed
    cfg.output_dir = output_dir
    if loss and scenario != "utilization":
        cfg.random_loss_rate = loss
    return cfg.validate()


def with_duration(cfg, duration_s):
    """Copy of ``cfg`` running for ``duration_s``; flows that ran to the old end
    (or past the new one) are clipped to the new end."""
    old = cfg.duration_s
    out = replace(cfg, duration_s=duration_s)
    out.flow_schedule = [(a, duration_s if b >= old or b > duration_s else b)
                         for a, b in cfg.flow_schedule]
    return out.validate()


def build_simulation(cfg, verify_stream=False, send_hook=None):
    cfg.validate()
    bottleneck = LinkConfig(cfg.bandwidth_bps, millis(cfg.prop_delay_ms), cfg.queue_bytes,
                            cfg.random_loss_rate)
    side = {}
    if cfg.side_bandwidth_bps:
        qms = cfg.side_queue_ms or 100
        for name, delay in cfg.side_delays_ms.items():
            side[name] = LinkConfig(cfg.side_bandwidth_bps, millis(delay),
                                    bdp_bytes(cfg.side_bandwidth_bps, millis(qms)))
    opts = {}
    if cfg.rtprop_lambda is not None:
        opts["rtprop_lambda"] = cfg.rtprop_lambda
    flows = []
    for i, (algo, path, (start, stop)) in enumerate(
            zip(cfg.flow_algos, cfg.flow_paths, cfg.flow_schedule), start=1):
        flows.append(FlowSpec(i, algo, list(path), start, stop,
                              dict(opts) if algo == "bbr_hsr" else {}))
    return Simulation(bottleneck, side, flows, seed=cfg.seed,
                      capacity_schedule=cfg.capacity_schedule, verify_stream=verify_stream,
                      send_hook=send_hook)


def run_experiment(cfg, verify_stream=False, send_hook=None):
    """Run one configuration; write CSVs when ``cfg.output_dir`` is set."""
    sim = build_simulation(cfg, verify_stream=verify_stream, send_hook=send_hook)
    flows = sim.run(cfg.duration_s)
    summary = metrics.summarize(cfg.scenario, cfg.case, cfg.algo, flows,
                                cfg.mean_capacity_bps(), cfg.duration_s,
                                link_stats=sim.link_stats())
    summary.extra["conservation_ok"] = sim.conservation_ok()
    if verify_stream:
        summary.extra["stream_crc"] = [f.receiver.crc for f in sim.flows]
    summary.extra["controllers"] = [f.sender.cc for f in sim.flows]
    if cfg.capacity_schedule:
        summary.extra["segments"] = segment_tracking(flows, cfg.capacity_schedule, cfg.duration_s)
    if cfg.output_dir:
        write_outputs(cfg, summary)
    return summary


def segment_tracking(flows, schedule, duration_s, transient_s=5.0):
    """Aggregate delivered rate per capacity segment, skipping the first ``transient_s``.

    Returns [(t0, t1, capacity_bps, delivered_bps)] with delivered counting
    application payload of all flows.
    """
    sched = list(schedule) + [(duration_s, None)]
    out = []
    for (t0, cap), (t1, _) in zip(sched, sched[1:]):
        t1 = min(t1, duration_s)
        lo = t0 + transient_s
        if t1 <= lo:
            continue
        total = 0
        for f in flows:
            for t, b in f.delivered_trace:
                if lo <= t < t1:
                    total += b
        out.append((t0, t1, cap, total * 8 / (t1 - lo)))
    return out


def write_outputs(cfg, summary):
    os.makedirs(cfg.output_dir, exist_ok=True)
    metrics.write_rates_csv(os.path.join(cfg.output_dir, "rates.csv"), summary.flows)
    metrics.write_owd_csv(os.path.join(cfg.output_dir, "owd.csv"), summary.flows)
    metrics.write_summary_csv(os.path.join(cfg.output_dir, "summary.csv"), summary)
    with open(os.path.join(cfg.output_dir, "config.ini"), "w") as fh:
        fh.write(dump_config(cfg))


# -- scenario entry points ---------------------------------------------------
def run_intra_fairness(case, algo, seed=1, **kw):
    return run_experiment(resolve_config("intra_fairness", case, algo, seed=seed, **kw))


def run_rtt_unfairness(case, algo, seed=1, **kw):
    return run_experiment(resolve_config("rtt_unfairness", case, algo, seed=seed, **kw))


def run_utilization(case, algo, loss=0.0, seed=1, **kw):
    return run_experiment(resolve_config("utilization", case, algo, loss=loss, seed=seed, **kw))


def run_responsiveness(algo, seed=1, capacity_schedule=None, **kw):
    cfg = resolve_config("responsiveness", None, algo, seed=seed, **kw)
    if capacity_schedule is not None:
        cfg.capacity_schedule = list(capacity_schedule)
        cfg.bandwidth_bps = cfg.capacity_schedule[0][1]
    return run_experiment(cfg.validate())


def run_inter_protocol(case, algo, seed=1, **kw):
    return run_experiment(resolve_config("inter_protocol", case, algo, seed=seed, **kw))


# -- config files --------------------------------------------------------------
def _num(x):
    return str(int(x)) if float(x).is_integer() else f"{x:g}"


def _fmt_pairs(pairs):
    return ", ".join(f"{_num(a)}:{_num(b)}" for a, b in pairs)


def _parse_pairs(text, cast=float):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            out.append((float(a), cast(float(b))))
        except ValueError:
            raise ConfigError(f"bad pair {item!r}; expected A:B") from None
    return out


def dump_config(cfg):
    cp = configparser.ConfigParser()
    cp["experiment"] = {
        "scenario": cfg.scenario,
        "case": cfg.case,
        "algo": cfg.algo,
        "seed": str(cfg.seed),
        "duration_s": f"{cfg.duration_s:g}",
        "random_loss_rate": f"{cfg.random_loss_rate:g}",
    }
    cp["bottleneck"] = {
        "bandwidth_bps": str(cfg.bandwidth_bps),
        "prop_delay_ms": f"{cfg.prop_delay_ms:g}",
        "queue_bytes": str(cfg.queue_bytes),
    }
    cp["flows"] = {
        "algos": ", ".join(cfg.flow_algos),
        "paths": "; ".join(" ".join(p) for p in cfg.flow_paths),
        "schedule": _fmt_pairs(cfg.flow_schedule),
    }
    if cfg.side_bandwidth_bps:
        cp["side_links"] = {
            "bandwidth_bps": str(cfg.side_bandwidth_bps),
            "queue_ms": f"{cfg.side_queue_ms:g}",
            "delays_ms": ", ".join(f"{k}:{v:g}" for k, v in sorted(cfg.side_delays_ms.items())),
        }
    if cfg.capacity_schedule:
        cp["capacity"] = {"schedule": _fmt_pairs(cfg.capacity_schedule)}
    if cfg.rtprop_lambda is not None:
        cp["bbr_hsr"] = {"rtprop_lambda": f"{cfg.rtprop_lambda:g}"}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path_or_text, base=None):
    """Read an INI config; keys present override ``base`` (or the scenario default)."""
    cp = configparser.ConfigParser()
    if os.path.exists(path_or_text):
        cp.read(path_or_text)
    else:
        cp.read_string(path_or_text)
    if base is None:
        if not cp.has_option("experiment", "scenario"):
            raise ConfigError("config needs [experiment] scenario")
        exp = cp["experiment"]
        base = resolve_config(exp["scenario"], exp.get("case"), exp.get("algo", "bbr"),
                              loss=exp.getfloat("random_loss_rate", 0.0),
                              seed=exp.getint("seed", 1),
                              duration_s=exp.getfloat("duration_s", None))
    cfg = replace(base)
    try:
        if cp.has_section("experiment"):
            exp = cp["experiment"]
            cfg.seed = exp.getint("seed", cfg.seed)
            cfg.duration_s = exp.getfloat("duration_s", cfg.duration_s)
            cfg.random_loss_rate = exp.getfloat("random_loss_rate", cfg.random_loss_rate)
        if cp.has_section("bottleneck"):
            b = cp["bottleneck"]
            cfg.bandwidth_bps = b.getint("bandwidth_bps", cfg.bandwidth_bps)
            cfg.prop_delay_ms = b.getfloat("prop_delay_ms", cfg.prop_delay_ms)
            cfg.queue_bytes = b.getint("queue_bytes", cfg.queue_bytes)
        if cp.has_section("flows"):
            fl = cp["flows"]
            if "algos" in fl:
                cfg.flow_algos = [a.strip() for a in fl["algos"].split(",") if a.strip()]
            if "paths" in fl:
                cfg.flow_paths = [p.split() for p in fl["paths"].split(";") if p.strip()]
            if "schedule" in fl:
                cfg.flow_schedule = _parse_pairs(fl["schedule"])
        if cp.has_section("side_links"):
            sl = cp["side_links"]
            cfg.side_bandwidth_bps = sl.getint("bandwidth_bps", cfg.side_bandwidth_bps)
            cfg.side_queue_ms = sl.getfloat("queue_ms", cfg.side_queue_ms)
            if "delays_ms" in sl:
                cfg.side_delays_ms = {}
                for item in sl["delays_ms"].split(","):
                    name, _, ms = item.strip().partition(":")
                    cfg.side_delays_ms[name] = float(ms)
        if cp.has_section("capacity"):
            cfg.capacity_schedule = _parse_pairs(cp["capacity"]["schedule"], int)
            if cfg.capacity_schedule:
                cfg.bandwidth_bps = cfg.capacity_schedule[0][1]
        if cp.has_section("bbr_hsr"):
            cfg.rtprop_lambda = cp["bbr_hsr"].getfloat("rtprop_lambda")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


__all__ = ["ConfigError", "ExperimentConfig", "UnknownAlgorithm", "build_simulation",
           "dump_config", "load_config", "resolve_config", "run_experiment",
           "run_inter_protocol", "run_intra_fairness", "run_responsiveness",
           "run_rtt_unfairness", "run_utilization", "segment_tracking", "with_duration"]

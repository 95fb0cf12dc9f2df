import os

import pytest

from bbrsim.harness import cases as C
from bbrsim.harness import experiments as E
from bbrsim.harness.experiments import ConfigError
from bbrsim.netsim import bdp_bytes
from bbrsim.engine import millis

GOLDEN = os.path.join(os.path.dirname(__file__), "data", "case_tables.txt")


def _golden_rows():
    with open(GOLDEN) as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                yield line.split()


def test_case_tables_match_golden_copy():
    seen = {s: set() for s in ("intra_fairness", "rtt_unfairness", "inter_protocol")}
    for scenario, case, bw, delay, queue in _golden_rows():
        row = C.CASE_TABLES[scenario][int(case)]
        assert f"{row.bandwidth_mbps}Mbps" == bw
        assert f"{row.prop_delay_ms}ms" == delay
        assert row.queue_label == queue
        seen[scenario].add(int(case))
    for scenario, cases in seen.items():
        assert cases == set(C.CASE_TABLES[scenario])


def test_rtt_unfairness_queue_is_one_and_a_half_max_rtt():
    for row in C.RTT_UNFAIRNESS.values():
        assert row.queue_ms == 1.5 * C.rtt_max_prop_ms(row)


def test_resolve_intra_fairness():
    cfg = E.resolve_config("intra_fairness", "1", "bbr")
    assert cfg.bandwidth_bps == 5_000_000 and cfg.prop_delay_ms == 50
    assert cfg.queue_bytes == bdp_bytes(5_000_000, millis(100))
    assert cfg.flow_schedule == [(0, 400), (40, 400), (80, 200), (120, 300)]
    assert cfg.duration_s == 400
    short = E.resolve_config("intra_fairness", "1", "bbr", duration_s=60)
    assert short.flow_schedule == [(0, 60), (40, 60)]


def test_resolve_rtt_unfairness_paths():
    cfg = E.resolve_config("rtt_unfairness", "7", "reno")
    assert cfg.flow_paths == [E.PATH1, E.PATH2]
    assert cfg.flow_schedule == [(0, 200), (0, 200)]
    assert cfg.side_bandwidth_bps == 100_000_000
    # round-trip propagation: 2*(10+10+10) = 60 ms and 2*(20+10+20) = 100 ms
    short = 2 * (cfg.side_delays_ms["l1"] + cfg.prop_delay_ms + cfg.side_delays_ms["l4"])
    long_ = 2 * (cfg.side_delays_ms["l3"] + cfg.prop_delay_ms + cfg.side_delays_ms["l5"])
    assert (short, long_) == (60, 100)


def test_resolve_utilization_buffer_and_loss():
    cfg = E.resolve_config("utilization", "C7", "cubic", loss=0.05)
    assert cfg.case == "C7"
    assert cfg.queue_bytes == int(1.5 * bdp_bytes(7_000_000, millis(200)))
    assert cfg.random_loss_rate == 0.05
    assert [s for s, _ in cfg.flow_schedule] == pytest.approx([0, 0.1, 0.2, 0.3])
    with pytest.raises(ConfigError):
        E.resolve_config("utilization", "3", "bbr")


def test_resolve_inter_protocol_pairs_with_cubic():
    cfg = E.resolve_config("inter_protocol", "5", "bbr2")
    assert cfg.flow_algos == ["bbr2", "bbr2", "cubic", "cubic"]
    assert cfg.bandwidth_bps == 6_000_000


def test_resolve_responsiveness_schedule():
    cfg = E.resolve_config("responsiveness", None, "bbr")
    assert cfg.capacity_schedule[:3] == [(0, 4_000_000), (50, 1_000_000), (100, 4_000_000)]
    assert len(cfg.capacity_schedule) == 8
    assert cfg.queue_bytes == 75_000
    assert cfg.mean_capacity_bps() == 2_500_000


@pytest.mark.parametrize("args", [
    ("nope", "1", "bbr"),
    ("intra_fairness", "12", "bbr"),
    ("intra_fairness", "x", "bbr"),
    ("intra_fairness", "1", "vegas"),
])
def test_resolve_errors(args):
    with pytest.raises(ConfigError):
        E.resolve_config(*args)


@pytest.mark.parametrize("scenario,case", [
    ("intra_fairness", "3"), ("rtt_unfairness", "4"), ("utilization", "C9"),
    ("responsiveness", None), ("inter_protocol", "2"),
])
def test_config_dump_load_roundtrip(scenario, case):
    cfg = E.resolve_config(scenario, case, "bbr_hsr", seed=9)
    cfg.rtprop_lambda = 0.5
    again = E.load_config(E.dump_config(cfg))
    assert again == cfg


def test_config_overrides_and_errors(tmp_path):
    base = E.resolve_config("intra_fairness", "1", "bbr")
    cfg = E.load_config("[bottleneck]\nqueue_bytes = 1234\n", base=base)
    assert cfg.queue_bytes == 1234 and cfg.bandwidth_bps == base.bandwidth_bps
    path = tmp_path / "c.ini"
    path.write_text("[experiment]\nscenario = responsiveness\n[capacity]\nschedule = 0:2000000, 10:3000000\n")
    cfg = E.load_config(str(path))
    assert cfg.capacity_schedule == [(0, 2_000_000), (10, 3_000_000)]
    assert cfg.bandwidth_bps == 2_000_000
    for bad in ("[capacity]\nschedule = 5:1000000\n",
                "[capacity]\nschedule = 0:1, 0:2\n",
                "[capacity]\nschedule = 0-1\n",
                "[flows]\nschedule = 0:999, 0:10\n",
                "[experiment]\nrandom_loss_rate = 2\n",
                "[bottleneck]\nqueue_bytes = lots\n"):
        with pytest.raises(ConfigError):
            E.load_config(bad, base=base)
    with pytest.raises(ConfigError):
        E.load_config("[bottleneck]\nqueue_bytes = 1\n")


def test_segment_tracking():
    class F:
        delivered_trace = [(t / 10, 1000) for t in range(0, 200)]  # 10 kB/s in 0.1 s bins
    segs = E.segment_tracking([F(), F()], [(0, 200_000), (10, 100_000)], 20, transient_s=5)
    assert [(a, b, c) for a, b, c, _ in segs] == [(0, 10, 200_000), (10, 20, 100_000)]
    assert all(d == pytest.approx(2 * 10_000 * 8) for *_, d in segs)


def test_short_run_writes_outputs_and_is_reproducible(tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg = E.resolve_config("rtt_unfairness", "1", "bbr", duration_s=8,
                               output_dir=str(tmp_path / name))
        s = E.run_experiment(cfg, verify_stream=True)
        assert s.extra["conservation_ok"]
        outs.append(tmp_path / name)
    for fname in ("rates.csv", "owd.csv", "summary.csv", "config.ini"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
    reloaded = E.load_config(str(outs[0] / "config.ini"))
    assert reloaded.seed == 1 and reloaded.duration_s == 8


def test_responsiveness_short_schedule_tracks_capacity():
    s = E.run_responsiveness("bbr", capacity_schedule=[(0, 4_000_000), (20, 1_000_000)],
                             duration_s=40)
    for _, _, cap, got in s.extra["segments"]:
        assert abs(got - cap) / cap < 0.15

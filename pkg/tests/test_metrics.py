import csv

import pytest
from hypothesis import given, strategies as st

from bbrsim import metrics as M
from bbrsim.metrics import FlowStats, MetricError


def test_average_rate():
    assert M.average_rate(10_000_000, 100) == 100_000
    assert M.average_rate(0, 5) == 0
    assert M.average_rate(9_000_000, 300 - 120) == 50_000
    with pytest.raises(MetricError):
        M.average_rate(1, 0)


def test_jain_examples():
    assert M.jain_index([840, 2970]) == pytest.approx(0.76, abs=0.005)
    assert M.jain_index([7, 7, 7, 7]) == 1.0
    assert M.jain_index([1, 2, 3]) == pytest.approx(36 / 42)
    with pytest.raises(MetricError):
        M.jain_index([0, 0])
    with pytest.raises(MetricError):
        M.jain_index([])


def test_ratio_examples():
    assert M.max_min_ratio([840, 2970]) == pytest.approx(3.53, abs=0.01)
    assert M.max_min_ratio([5, 5]) == 1.0
    assert M.max_min_ratio([1000, 4000]) == 4.0
    with pytest.raises(MetricError):
        M.max_min_ratio([0, 10])


def test_utilization_examples():
    # 593.75 kB/s of payload in total on a 5 Mbps link
    assert M.channel_utilization([148_437.5 * 100] * 4, 5_000_000, 100) == pytest.approx(0.95)
    assert M.channel_utilization([0, 0], 5_000_000, 100) == 0


positive = st.floats(1e-3, 1e9, allow_nan=False)


@given(st.lists(positive, min_size=1, max_size=20), st.floats(1e-3, 1e3))
def test_jain_scale_invariant_and_bounded(xs, c):
    j = M.jain_index(xs)
    assert 1 / len(xs) - 1e-12 <= j <= 1 + 1e-12
    assert M.jain_index([c * x for x in xs]) == pytest.approx(j, rel=1e-9)


@given(positive, positive)
def test_ratio_one_iff_jain_one(a, b):
    assert M.max_min_ratio([a, b]) >= 1
    assert (M.max_min_ratio([a, b]) == 1) == (a == b)
    if a == b:
        assert M.jain_index([a, b]) == pytest.approx(1.0)


def _flow(fid, sent, lost, owd_ms, owd_count=10):
    f = FlowStats(fid, "bbr", 0.0, 10.0, bytes_received_app=1000 * fid, packets_sent=sent,
                  packets_lost=lost)
    f.owd_mean_ms = owd_ms
    f.owd_count = owd_count
    return f


def test_mean_owd_is_per_flow_then_mean():
    flows = [_flow(1, 10, 0, 50.0, owd_count=1000), _flow(2, 10, 0, 150.0, owd_count=1)]
    assert M.mean_owd(flows) == 100.0
    with pytest.raises(MetricError):
        M.mean_owd([_flow(1, 10, 0, 0.0, owd_count=0)])


def test_mean_loss_rate_pools_packets():
    assert M.mean_loss_rate([_flow(1, 100, 10, 1), _flow(2, 300, 10, 1)]) == 20 / 400
    assert M.mean_loss_rate([_flow(1, 100, 0, 1)]) == 0
    with pytest.raises(MetricError):
        M.mean_loss_rate([_flow(1, 0, 0, 1)])


def test_bin_means():
    t = [0, 50_000, 99_999, 100_000, 350_000]
    v = [1, 2, 3, 10, 7]
    assert M.bin_means(t, v) == [(0, 2.0), (100_000, 10.0), (300_000, 7.0)]
    assert M.bin_means([], []) == []


def test_csv_headers_and_summary_roundtrip(tmp_path):
    flows = [_flow(1, 100, 1, 55.0), _flow(2, 100, 3, 65.0)]
    flows[0].rate_trace = [(0.1, 1000.0), (0.0, 900.0)]
    flows[1].owd_samples = [(0.2, 61.25)]
    s = M.summarize("intra_fairness", 1, "bbr", flows, 5_000_000, 10.0)
    M.write_rates_csv(tmp_path / "rates.csv", flows)
    M.write_owd_csv(tmp_path / "owd.csv", flows)
    M.write_summary_csv(tmp_path / "summary.csv", s)

    def header(name):
        with open(tmp_path / name) as fh:
            return fh.readline().strip()

    assert header("rates.csv") == "time_s,flow_id,rate_bps"
    assert header("owd.csv") == "time_s,flow_id,owd_ms"
    assert header("summary.csv") == ("scenario,case,algo,flow_id,avg_rate_bps,jain,ratio,util,"
                                     "mean_owd_ms,loss_rate")
    with open(tmp_path / "rates.csv") as fh:
        times = [row["time_s"] for row in csv.DictReader(fh)]
    assert times == ["0.0", "0.1"]  # sorted by time

    rows = M.read_summary_csv(tmp_path / "summary.csv")
    assert [int(r["flow_id"]) for r in rows] == [1, 2]
    assert float(rows[1]["avg_rate_bps"]) == pytest.approx(s.rates[2] * 8)
    assert float(rows[0]["jain"]) == pytest.approx(s.jain_index, abs=1e-6)
    assert float(rows[0]["ratio"]) == pytest.approx(2.0)
    assert float(rows[0]["loss_rate"]) == pytest.approx(0.02)
    assert float(rows[0]["mean_owd_ms"]) == pytest.approx(60.0)


def test_summarize_handles_starved_flow():
    flows = [_flow(1, 10, 0, 1), _flow(2, 10, 0, 1)]
    flows[1].bytes_received_app = 0
    s = M.summarize("x", "1", "bbr", flows, 1_000_000, 10)
    assert s.ratio == float("inf")
    assert s.jain_index == pytest.approx(0.5)

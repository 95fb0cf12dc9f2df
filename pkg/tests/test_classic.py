import pytest

from bbrsim.cc.classic import Cubic, Reno, cubic_k, cubic_window
from bbrsim.transport import MSS, SentPacketRecord


def rec(pn, sent, size=MSS):
    return SentPacketRecord(pn, size, sent, 0, 0)


def test_reno_congestion_avoidance_increment():
    r = Reno()
    r.cwnd = 10 * MSS
    r.ssthresh = 5 * MSS
    r.reno_on_ack(MSS)
    assert r.cwnd == pytest.approx(10 * MSS + MSS / 10)


def test_reno_slow_start():
    r = Reno()
    r.cwnd = 10 * MSS
    r.reno_on_ack(MSS)
    assert r.cwnd == 11 * MSS


def test_reno_one_round_adds_about_one_mss():
    r = Reno()
    r.cwnd = r.ssthresh = 20 * MSS
    for _ in range(20):
        r.reno_on_ack(MSS)
    assert r.cwnd - 20 * MSS == pytest.approx(MSS, rel=0.05)


def test_reno_halving_and_floor():
    r = Reno()
    r.cwnd = 20 * MSS
    assert r.reno_on_loss() == 10 * MSS
    r.cwnd = 3 * MSS
    assert r.reno_on_loss() == 2 * MSS


def test_reno_single_halving_per_round():
    r = Reno()
    r.cwnd = 20 * MSS
    r.on_loss(1000, [rec(1, 10)], 0)
    r.on_loss(1500, [rec(2, 20)], 0)  # sent before recovery started
    assert r.cwnd == 10 * MSS
    r.on_loss(5000, [rec(9, 2000)], 0)  # sent after recovery began
    assert r.cwnd == 5 * MSS


def test_cubic_k_and_window():
    k = cubic_k(100)
    assert k == pytest.approx((30 / 0.4) ** (1 / 3))
    assert k == pytest.approx(4.217, abs=1e-3)
    assert cubic_window(100, 0, k) == pytest.approx(70)
    assert cubic_window(100, k, k) == pytest.approx(100)


def test_cubic_reduction():
    c = Cubic()
    c.cwnd = 100 * MSS
    c.cubic_on_congestion(0)
    assert c.cwnd == pytest.approx(70 * MSS)
    assert c.w_max == pytest.approx(100)
    assert c.k == pytest.approx(4.217, abs=1e-3)


def test_cubic_target_continuous_through_k():
    c = Cubic()
    c.cwnd = 100 * MSS
    c.cubic_on_congestion(0)
    k_us = c.k * 1e6
    vals = [c.cubic_target(int(k_us + d), 0) / MSS for d in (-2000, -1000, 0, 1000, 2000)]
    assert vals[2] == pytest.approx(100, abs=1e-6)
    assert max(vals) - min(vals) < 1e-3


def test_cubic_grows_after_reduction():
    c = Cubic()
    c.cwnd = 50 * MSS
    c.cubic_on_congestion(0)
    start = c.cwnd
    t = 0
    pn = 0
    while t < 3_000_000:
        t += 10_000
        pn += 1
        c.on_ack(t, [rec(pn, t - 1)], [], 0)
    assert c.cwnd > start


def test_controllers_are_cwnd_clocked():
    assert Reno().pacing_rate is None
    assert Cubic().pacing_rate is None

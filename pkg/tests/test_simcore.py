import pytest

from mptunnel.simcore import (EventQueue, LatencyStep, PastEventError,
                              PathModel, PathState, TrafficSource,
                              serialization_us)


def test_serialization_exact_values():
    assert serialization_us(1500, 10_000_000) == 1200
    assert serialization_us(1000, 1_000_000) == 8000
    assert serialization_us(1000, 10_000_000) == 800


def test_queue_single_element_pops():
    q = EventQueue()
    fired = []
    q.schedule(0, lambda t: fired.append(("x", t)))
    at, fn = q.pop()
    fn(at)
    assert fired == [("x", 0)]


def test_queue_fifo_tie_break():
    q = EventQueue()
    fired = []
    q.schedule(5, lambda t: fired.append("a"))
    q.schedule(5, lambda t: fired.append("b"))
    while True:
        item = q.pop()
        if item is None:
            break
        item[1](item[0])
    assert fired == ["a", "b"]


def test_queue_rejects_past_events():
    q = EventQueue()
    q.schedule(4, lambda t: None)
    q.pop()
    assert q.now == 4
    with pytest.raises(PastEventError):
        q.schedule(3, lambda t: None)


def test_queue_cancel():
    q = EventQueue()
    fired = []
    eid = q.schedule(1, lambda t: fired.append("a"))
    q.schedule(2, lambda t: fired.append("b"))
    q.cancel(eid)
    while (item := q.pop()) is not None:
        item[1](item[0])
    assert fired == ["b"]


def test_path_transmit_delivery_time():
    # 1500 bytes at 10 Mbps is 1.2 ms serialization plus 10 ms latency.
    p = PathState(PathModel(0, 10_000, 10_000_000), seed=1)
    assert p.transmit(1500, 0) == 11_200


def test_path_transmit_certain_loss():
    p = PathState(PathModel(0, 10_000, 10_000_000, loss_rate=1.0), seed=1)
    assert p.transmit(1500, 0) is None
    # the lost packet still occupied the link
    assert p.busy_until_us == 1200


def test_path_back_to_back_serialization_spacing():
    p = PathState(PathModel(0, 10_000, 10_000_000), seed=1)
    first = p.transmit(1500, 0)
    second = p.transmit(1500, 0)
    assert second - first == 1200


def test_path_latency_step_spares_in_flight():
    p = PathState(PathModel(0, 0, 10_000_000), seed=1)
    in_flight = p.transmit(1500, 0)
    p.apply_latency_step(40_000)
    later = p.transmit(1500, 2000)
    assert in_flight == 1200          # kept its old zero-latency delivery
    assert later == 2000 + 1200 + 40_000


def test_path_latency_step_to_same_value_is_identity():
    p = PathState(PathModel(0, 10_000, 10_000_000), seed=1)
    before = p.transmit(1000, 0)
    p.apply_latency_step(10_000)
    after = p.transmit(1000, 100_000)
    assert after - 100_000 == before  # identical delay profile


def test_path_loss_sequence_is_per_path_and_seeded():
    draws_a = [PathState(PathModel(0, 0, 1_000_000, loss_rate=0.5), seed=9).transmit(100, i * 1000)
               for i in range(50)]
    draws_b = [PathState(PathModel(0, 0, 1_000_000, loss_rate=0.5), seed=9).transmit(100, i * 1000)
               for i in range(50)]
    assert [d is None for d in draws_a] == [d is None for d in draws_b]


def test_cbr_emission_schedule_is_exact():
    src = TrafficSource("cbr", packet_size_bytes=1000, rate_bps=1_000_000)
    times = [src.emission_time_us(k) for k in range(4)]
    assert times == [0, 8000, 16000, 24000]
    # 1 Mbps of 1000-byte packets over 10 s emits exactly 1250 packets
    count = 0
    while src.emission_time_us(count) < 10_000_000:
        count += 1
    assert count == 1250


def test_traffic_validation():
    assert TrafficSource("cbr", 1000, rate_bps=0).validate()
    assert TrafficSource("warp", 1000).validate()
    assert not TrafficSource("greedy", 1000).validate()


def test_path_model_validation():
    bad = PathModel(0, -1, 0, loss_rate=2.0,
                    latency_steps=[LatencyStep(5, 1), LatencyStep(5, 2)])
    problems = bad.validate()
    assert len(problems) == 4
    assert not PathModel(0, 10_000, 1_000_000).validate()

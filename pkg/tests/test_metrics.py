import pytest
from hypothesis import given, strategies as st

from trifactor.adversary import AdversaryKind, AdversaryProfile
from trifactor.metrics import MetricsRecorder, MetricsReport, format_value, windowed_pdr
from trifactor.network import TRIPLE_FACTOR, Flow, Network
from trifactor.simkernel import MobilityModel

from conftest import make_spec


def test_pdr_example():
    m = MetricsRecorder()
    for uid in range(100):
        m.record(0.0, "originated", uid, 0, 1)
    for uid in range(80):
        m.record(1.0, "delivered", uid, 0.01, 4096)
    r = m.finalize(200.0)
    assert r.pdr == 0.8
    assert r.throughput == pytest.approx(1638.4)
    assert r.still_buffered == 20


def test_nothing_delivered_sentinel():
    m = MetricsRecorder()
    m.record(0.0, "originated", 1, 0, 1)
    m.record(0.0, "control_tx", 1)
    r = m.finalize(10.0)
    assert (r.nro, r.pdr, r.throughput) == ("inf", 0.0, 0.0)
    assert format_value(r.nro) == "inf"


def test_zero_control_gives_zero_nro():
    m = MetricsRecorder()
    m.record(0.0, "originated", 1, 0, 1)
    m.record(0.1, "delivered", 1, 0.1, 8)
    assert m.finalize(1.0).nro == 0.0


def test_counters():
    m = MetricsRecorder()
    m.record(0.0, "blacklist", 0, 1, True)
    m.record(0.0, "blacklist", 0, 2, False)
    m.record(0.0, "path_rejection", 3)
    r = m.finalize(1.0)
    assert (r.blacklist_events, r.false_accusations, r.path_rejections) == (2, 1, 1)


def test_terminal_state_recorded_once():
    m = MetricsRecorder()
    m.record(0.0, "originated", 1, 0, 1)
    assert m.record(0.1, "dropped", 1, "loss")
    assert not m.record(0.2, "delivered", 1, 0.2, 8)
    assert not m.record(0.3, "dropped", 1, "adversary")
    r = m.finalize(1.0)
    assert (r.delivered, r.dropped_by_loss, r.dropped_by_adversary) == (0, 1, 0)
    assert len(m.log) == 2


def test_unknown_event_rejected():
    with pytest.raises(ValueError):
        MetricsRecorder().record(0.0, "bogus")


def test_windowed_pdr():
    log = [(0.0, "originated", 1, 0, 1), (5.0, "originated", 2, 0, 1),
           (6.0, "originated", 3, 0, 1), (7.0, "delivered", 2, 2.0, 8)]
    assert windowed_pdr(log, 5.0) == 0.5
    assert windowed_pdr(log, 0.0, 5.0) == 0.0
    assert windowed_pdr(log, 50.0) != windowed_pdr(log, 50.0)  # nan


def test_columns_match_fields():
    cols = MetricsReport.columns()
    assert cols[:10] == ["originated", "delivered", "pdr", "throughput", "control_packets",
                         "nro", "path_rejections", "false_accusations", "blacklist_events",
                         "mean_delay"]
    assert len(MetricsReport().values()) == len(cols)


def _run(seed):
    spec = make_spec([(0.0, 0.0)] * 10, mode=TRIPLE_FACTOR, rng=250.0, loss=0.05, duration=60.0,
                     traffic=[Flow(0, 9, 1.0, 0.5, 64, 100), Flow(3, 6, 2.0, 0.5, 64, 100)],
                     adversaries=[AdversaryProfile(4, AdversaryKind.GRAYHOLE, drop_prob=0.6)])
    spec.positions = None
    spec.arena = (600.0, 600.0)
    spec.mobility = MobilityModel(1.0, 8.0, 2.0)
    return Network(spec, seed).run()


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_replay_equals_live_and_accounting_identity(seed):
    res = _run(seed)
    r = res.report
    assert MetricsRecorder.replay(res.metrics_log).finalize(60.0) == r
    assert r.originated == (r.delivered + r.dropped_by_adversary + r.dropped_by_loss
                            + r.dropped_no_route + r.still_buffered)
    assert 0.0 <= r.pdr <= 1.0 and r.delivered <= r.originated
    assert all(v >= 0 for v in r.values() if not isinstance(v, str))


@given(st.lists(st.tuples(st.sampled_from(["o", "d", "x"]), st.integers(0, 20)), max_size=80))
def test_replay_property(ops):
    m = MetricsRecorder()
    for i, (op, uid) in enumerate(ops):
        if op == "o":
            m.record(float(i), "originated", uid + 1000 * i, 0, 1)
        elif op == "d":
            m.record(float(i), "delivered", uid, 0.5, 8)
        else:
            m.record(float(i), "dropped", uid, "loss")
    assert MetricsRecorder.replay(m.log).finalize(10.0) == m.finalize(10.0)

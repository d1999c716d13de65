import pytest
from hypothesis import given
from hypothesis import strategies as st

from repsim.monitor import PacketBuffer, window_of


def make_buffer(grace=0.0):
    return PacketBuffer(owner=0, window_len=1.0, grace_fraction=grace)


class TestWindowOf:
    def test_floor(self):
        assert window_of(1.4, 1.0) == 1

    def test_boundary(self):
        assert window_of(1.0, 1.0) == 1

    def test_grace_defers_tail(self):
        assert window_of(0.95, 1.0, grace_fraction=0.1) == 1
        assert window_of(0.85, 1.0, grace_fraction=0.1) == 0


class TestRegisterAndMatch:
    def test_register_pending(self):
        buf = make_buffer()
        buf.register_sent(1, 5, 0.1)
        assert 1 in buf.pending

    def test_duplicate_register_counts_once(self):
        buf = make_buffer()
        buf.register_sent(1, 5, 0.1)
        buf.register_sent(1, 5, 0.2)
        assert len(buf.pending) == 1
        assert buf.close_window(0) [0].missing == 1

    def test_overhear_matches(self):
        buf = make_buffer()
        buf.register_sent(1, 5, 0.1)
        assert buf.on_overheard(1, 5)
        assert 1 not in buf.pending

    def test_unknown_packet_ignored(self):
        buf = make_buffer()
        assert not buf.on_overheard(9, 5)

    def test_wrong_forwarder_ignored(self):
        buf = make_buffer()
        buf.register_sent(1, 5, 0.1)
        assert not buf.on_overheard(1, 6)
        assert 1 in buf.pending


class TestCloseWindow:
    def test_all_matched(self):
        buf = make_buffer()
        for pid in range(10):
            buf.register_sent(pid, 5, 0.1 + pid * 0.05)
            buf.on_overheard(pid, 5)
        (report,) = buf.close_window(0)
        assert (report.forwarded, report.missing) == (10, 0)

    def test_partial_match_conserves(self):
        buf = make_buffer()
        for pid in range(10):
            buf.register_sent(pid, 5, 0.1)
        for pid in range(7):
            buf.on_overheard(pid, 5)
        (report,) = buf.close_window(0)
        assert (report.forwarded, report.missing) == (7, 3)

    def test_empty_window(self):
        assert make_buffer().close_window(0) == []

    def test_reclose_rejected(self):
        buf = make_buffer()
        buf.close_window(0)
        with pytest.raises(ValueError):
            buf.close_window(0)

    def test_late_forward_has_no_effect(self):
        buf = make_buffer()
        buf.register_sent(1, 5, 0.1)
        (report,) = buf.close_window(0)
        assert report.missing == 1
        assert not buf.on_overheard(1, 5)
        assert buf.close_window(1) == []

    def test_reports_per_neighbor_sorted(self):
        buf = make_buffer()
        buf.register_sent(1, 7, 0.1)
        buf.register_sent(2, 4, 0.1)
        reports = buf.close_window(0)
        assert [r.neighbor for r in reports] == [4, 7]

    def test_blackhole_limit(self):
        buf = make_buffer()
        for pid in range(5):
            buf.register_sent(pid, 3, 0.2)
        (report,) = buf.close_window(0)
        assert report.missing == 5

    def test_grace_period_shifts_ledger(self):
        buf = make_buffer(grace=0.1)
        buf.register_sent(1, 5, 0.95)
        assert buf.close_window(0) == []
        (report,) = buf.close_window(1)
        assert report.missing == 1


@given(st.lists(
    st.tuples(st.integers(0, 3),      # neighbor
              st.floats(0.0, 9.99),   # send time
              st.booleans()),         # forwarded in time?
    max_size=200))
def test_conservation_over_random_traffic(traffic):
    buf = PacketBuffer(owner=0, window_len=1.0, grace_fraction=0.0)
    registered: dict[tuple[int, int], int] = {}
    for pid, (nb, t, fwd) in enumerate(traffic):
        buf.register_sent(pid, nb, t)
        key = (nb, window_of(t, 1.0))
        registered[key] = registered.get(key, 0) + 1
        if fwd:
            buf.on_overheard(pid, nb)
    totals: dict[tuple[int, int], int] = {}
    for w in range(11):
        for report in buf.close_window(w):
            totals[(report.neighbor, w)] = report.forwarded + report.missing
    assert totals == registered

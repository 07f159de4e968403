import numpy as np
import pytest

from millforge.transport import (LAN, MOBILE, PRESETS, WAN, ChannelStats, Frame, ProtocolError, Tag,
                                 dump_transcript, load_transcript, open_session, replay_stats, run_parties,
                                 simulated_time)

SCHEDULERS = ("threads", "lockstep")


def test_fresh_session_zero():
    s, r = open_session()
    assert s.stats == ChannelStats() and s.stats is r.stats


@pytest.mark.parametrize("scheduler", SCHEDULERS)
def test_one_send_one_round(scheduler):
    s_ep, r_ep = open_session()

    def sender():
        s_ep.send(Tag.DATA, b"0123456789")
        return None
        yield

    def receiver():
        return (yield r_ep.recv(Tag.DATA))

    _, got = run_parties(s_ep, sender(), r_ep, receiver(), scheduler)
    assert got == b"0123456789"
    assert (s_ep.stats.bytes_s2r, s_ep.stats.rounds, s_ep.stats.bits_s2r) == (10, 1, 80)


def _ping_pong(k, scheduler):
    s_ep, r_ep = open_session()

    def sender():
        for i in range(k):
            s_ep.send(Tag.DATA, bytes([i]))
            yield s_ep.recv(Tag.DATA)

    def receiver():
        for i in range(k):
            got = yield r_ep.recv(Tag.DATA)
            r_ep.send(Tag.DATA, got)

    run_parties(s_ep, sender(), r_ep, receiver(), scheduler)
    return s_ep


@pytest.mark.parametrize("scheduler", SCHEDULERS)
@pytest.mark.parametrize("k", [1, 2, 5])
def test_ping_pong_rounds(k, scheduler):
    assert _ping_pong(k, scheduler).stats.rounds == 2 * k


@pytest.mark.parametrize("scheduler", SCHEDULERS)
def test_simultaneous_exchange_is_one_round(scheduler):
    s_ep, r_ep = open_session()

    def party(ep):
        ep.send_bits(Tag.DATA, np.ones(3, np.uint8))
        return (yield ep.recv_bits(Tag.DATA, 3))

    a, b = run_parties(s_ep, party(s_ep), r_ep, party(r_ep), scheduler)
    assert s_ep.stats.rounds == 1 and a.tolist() == b.tolist() == [1, 1, 1]
    assert s_ep.stats.bits_s2r == 3 and s_ep.stats.bytes_s2r == 1


def test_schedulers_produce_identical_transcripts():
    dumps = [dump_transcript(_ping_pong(4, s).channel.transcript()) for s in SCHEDULERS * 2]
    assert len(set(dumps)) == 1


def test_replay_matches_live_stats():
    ep = _ping_pong(3, "threads")
    assert replay_stats(dump_transcript(ep.channel.transcript())) == ep.stats
    entries = load_transcript(dump_transcript(ep.channel.transcript()))
    assert [e.tag for e in entries] == [Tag.DATA] * 6


def test_frame_roundtrip_and_rejects():
    f = Frame(Tag.LEAF_MSGS, b"\x01\x02")
    raw = f.encode()
    assert raw[:5] == bytes([0x11, 2, 0, 0, 0])
    assert Frame.decode(raw) == (f, 7)
    with pytest.raises(ProtocolError):
        Frame.decode(b"\x7f\x00\x00\x00\x00")
    with pytest.raises(ProtocolError):
        Frame.decode(raw[:-1])


def test_wrong_tag_is_protocol_error():
    s_ep, r_ep = open_session()

    def sender():
        s_ep.send(Tag.DATA, b"x")
        return None
        yield

    def receiver():
        return (yield r_ep.recv(Tag.LEAF_MSGS))

    with pytest.raises(ProtocolError):
        run_parties(s_ep, sender(), r_ep, receiver(), "lockstep")


@pytest.mark.parametrize("scheduler", SCHEDULERS)
def test_deadlock_detected(scheduler):
    s_ep, r_ep = open_session()

    def waiter(ep):
        return (yield ep.recv(Tag.DATA))

    with pytest.raises(ProtocolError):
        run_parties(s_ep, waiter(s_ep), r_ep, waiter(r_ep), scheduler)


def test_presets():
    assert (LAN.bandwidth, LAN.one_way_latency) == (3e9, 0.3e-3)
    assert (WAN.bandwidth, WAN.one_way_latency) == (200e6, 50e-3)
    assert (MOBILE.bandwidth, MOBILE.one_way_latency) == (100e6, 80e-3)
    assert set(PRESETS) == {"lan", "wan", "mobile"}


def test_simulated_time_examples():
    assert simulated_time(ChannelStats(rounds=1), MOBILE) == pytest.approx(0.16)
    assert simulated_time(ChannelStats(bytes_s2r=100_000_000 // 8), MOBILE) == pytest.approx(1.0)
    assert simulated_time(ChannelStats(rounds=3, bytes_r2s=10**6), WAN) == pytest.approx(0.34)

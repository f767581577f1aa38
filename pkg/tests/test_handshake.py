from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbanzkp.cli import handshake_vectors
from wbanzkp.handshake import (
    BROADCAST,
    Kind,
    MalformedMessage,
    ProtocolMessage,
    Scheme,
    provision,
    run_session,
)
from wbanzkp.zkp_math import GroupParams, element_to_bytes

GOLDEN = Path(__file__).parent / "golden"
SMALL = GroupParams.compact()


def pair(scheme, seed=0, **kw):
    nodes = provision([0, 1], scheme, SMALL, seed=seed, **kw)
    return nodes[0], nodes[1]


def session_totals(a, b):
    return a.outgoing[b.id].counters + b.incoming[a.id].counters


@pytest.mark.parametrize("scheme", list(Scheme))
def test_first_contact_is_five_messages(scheme):
    a, b = pair(scheme)
    delivered, wire = run_session(a, b, b"reading")
    assert delivered == b"reading"
    assert [m.kind for m in wire] == [Kind.AUTH1, Kind.AUTH2, Kind.AUTH3, Kind.AUTH4, Kind.AUTH5_DATA]
    totals = session_totals(a, b)
    assert totals.messages_sent == 5
    assert totals.multiplications == 4
    assert totals.enc_dec_ops == 5


def test_banzkp_never_takes_a_shortcut():
    a, b = pair(Scheme.BANZKP)
    for _ in range(3):
        _, wire = run_session(a, b, b"x")
        assert len(wire) == 5
    assert b.known_peers == {}


def test_ban_gzkp_fast_path_after_first_contact():
    a, b = pair(Scheme.BAN_GZKP)
    run_session(a, b, b"first")
    assert b.known_peers == {0: True}
    delivered, wire = run_session(a, b, b"second")
    assert delivered == b"second"
    assert [m.kind for m in wire] == [Kind.AUTH1, Kind.AUTH2_OPT, Kind.AUTH3_OPT_DATA]
    totals = session_totals(a, b)
    assert (totals.messages_sent, totals.multiplications, totals.enc_dec_ops) == (3, 4, 3)


def test_fast_path_is_per_ordered_pair():
    a, b = pair(Scheme.BAN_GZKP)
    run_session(a, b, b"a to b")
    _, wire = run_session(b, a, b"b to a")
    assert len(wire) == 5


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), scheme=st.sampled_from(list(Scheme)),
       data=st.binary(min_size=0, max_size=60))
def test_parties_agree_on_every_derived_value(seed, scheme, data):
    a, b = pair(scheme, seed)
    for _ in range(2):
        delivered, _ = run_session(a, b, data)
        assert delivered == data
        ini, res = a.outgoing[1], b.incoming[0]
        assert ini.completed and res.completed
        assert ini.session_secret == res.session_secret
        assert ini.interval == res.interval
        if scheme == Scheme.BAN_GZKP:
            assert ini.k_r is not None and ini.k_r == res.k_r


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6), scheme=st.sampled_from(list(Scheme)))
def test_wire_never_carries_v_or_initial_key(seed, scheme):
    a, b = pair(scheme, seed)
    blob = b""
    for _ in range(2):
        _, wire = run_session(a, b, b"payload")
        blob += b"".join(m.encode() for m in wire)
    ident = a.identity
    assert element_to_bytes(ident.shared_secret, SMALL) not in blob
    assert ident.initial_key.to_bytes() not in blob


def test_pairwise_keys_differ_per_pair():
    nodes = provision([0, 1, 2], Scheme.BANZKP, SMALL, pairwise_keys=True)
    assert nodes[0].identity.key_for(1) == nodes[1].identity.key_for(0)
    assert nodes[0].identity.key_for(1) != nodes[0].identity.key_for(2)
    delivered, _ = run_session(nodes[0], nodes[2], b"ok")
    assert delivered == b"ok"


def test_wrong_initial_key_fails_closed():
    a, _ = pair(Scheme.BAN_GZKP, seed=1)
    _, b = pair(Scheme.BAN_GZKP, seed=2)
    delivered, wire = run_session(a, b, b"secret")
    assert delivered is None
    assert len(wire) == 1
    assert 0 not in b.incoming
    assert a.outgoing[1].data == b"secret" and not a.outgoing[1].completed


def test_tampered_auth3_closes_responder_without_key():
    a, b = pair(Scheme.BAN_GZKP)
    m1 = a.start(1, b"data")
    m2 = b.handle(m1).replies[0]
    m3 = a.handle(m2).replies[0]
    bad = ProtocolMessage(m3.kind, m3.sender_id, m3.receiver_id, (bytes(len(m3.fields[0])),))
    reaction = b.handle(bad)
    assert reaction.failed
    assert b.incoming[0].closed and b.incoming[0].k_r is None


def test_replayed_data_into_new_ban_gzkp_session_is_rejected():
    a, b = pair(Scheme.BAN_GZKP)
    _, wire = run_session(a, b, b"old")
    old_data = wire[-1]
    m1 = a.start(1, b"new")
    b.handle(m1)
    reaction = b.handle(old_data)
    assert reaction.delivered is None
    assert b.incoming[0].closed


def test_timeout_closes_session_and_keeps_peer_table():
    a, b = pair(Scheme.BAN_GZKP)
    a.start(1, b"data", now=0.0)
    assert a.expire(499.0) == []
    closed = a.expire(500.0)
    assert [s.close_reason for s in closed] == ["timeout"]
    assert a.outgoing[1].data is None
    assert a.known_peers == {} and b.known_peers == {}


def test_new_auth1_replaces_live_responder_session():
    a, b = pair(Scheme.BANZKP)
    b.handle(a.start(1, b"one"))
    first = b.incoming[0]
    b.handle(a.start(1, b"two"))
    assert first.closed and b.incoming[0] is not first


def test_broadcast_auth1_forks_per_responder():
    nodes = provision([0, 1, 3], Scheme.BAN_GZKP, SMALL)
    m1 = nodes[0].start(BROADCAST, b"pkt")
    r1 = nodes[1].handle(m1).replies[0]
    r3 = nodes[3].handle(m1).replies[0]
    assert nodes[0].handle(r1).replies[0].receiver_id == 1
    assert nodes[0].handle(r3).replies[0].receiver_id == 3


def test_message_codec_round_trip():
    msg = ProtocolMessage(Kind.AUTH2, 1, 0, (b"\x01\x02", b"", b"abc"))
    raw = msg.encode()
    assert raw[:3] == bytes((2, 1, 0))
    assert ProtocolMessage.decode(raw) == msg
    assert len(msg) == len(raw)


@pytest.mark.parametrize("raw", [b"", b"\x01\x00", b"\x63\x00\x01", b"\x01\x00\x01\x00\x05ab"])
def test_malformed_bytes(raw):
    with pytest.raises(MalformedMessage):
        ProtocolMessage.decode(raw)


def test_zero_length_injection_is_rejected():
    _, b = pair(Scheme.BANZKP)
    reaction = b.handle(ProtocolMessage(Kind.AUTH1, 0, 1, (b"",)))
    assert reaction.failed and not reaction.replies


def test_golden_handshake_vectors():
    assert handshake_vectors(seed=0) == (GOLDEN / "handshake_vectors.txt").read_text()

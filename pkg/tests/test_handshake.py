import os

import pytest

from conftest import Party, build_node, establish
from icnshare import handshake as hs
from icnshare import ibpre
from icnshare.encoding import pack_fields
from icnshare.handshake import ChannelError, HandshakeError, State
from icnshare.wire import Frame, MsgType


@pytest.fixture
def node(alice, bob):
    return build_node(alice, 1, [bob], {"friends": ["bob"]}, scope="file:report")


def tamper_tag(frame):
    tag = bytearray(frame.fields[-1])
    tag[0] ^= 1
    return Frame(frame.msg_type, frame.fields[:-1] + (bytes(tag),))


def test_honest_run(node, alice, bob):
    sess, node_sess = establish(node.tables, "file:report", bob, alice.params)
    assert node_sess.state is State.ESTABLISHED
    assert sess.pending_session_key == node_sess.session_key and len(node_sess.session_key) == 16
    assert sess.request_key == node_sess.request_key and sess.reply_key == node_sess.reply_key
    assert sess.subscriber_nonce == node_sess.subscriber_nonce and sess.node_nonce == node_sess.node_nonce
    assert node_sess.peer_identity == "bob"
    # subscriber confirms on the node's first valid frame
    hs.channel_open(sess, hs.channel_seal(node_sess, b"hello"))
    assert sess.state is State.ESTABLISHED and sess.session_key == node_sess.session_key


def test_message_layout(alice):
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    scope, c_scope, enc, tag = m1.fields
    assert scope == b"file:report"
    c = ibpre.LeveledCiphertext.from_bytes(c_scope)
    assert c.level == 1 and c.target_id == "file:report"
    assert len(tag) == hs.TAG_LEN
    assert b"bob" not in enc  # the subscriber identity travels encrypted


def test_node_without_scope_key(alice, bob):
    node = build_node(alice, 1, [bob], {"friends": ["bob"]}, scope="other:")
    _, m1 = hs.initiate("file:report", "bob", alice.params)
    with pytest.raises(HandshakeError) as exc:
        hs.respond(node.tables, m1)
    assert exc.value.step == 2


def test_node_with_wrong_pkg_scope_key(alice, bob):
    impostor = Party("alice")  # same labels, different master secret
    node = build_node(impostor, 1, [bob], {"friends": ["bob"]}, scope="file:report")
    _, m1 = hs.initiate("file:report", "bob", alice.params)
    with pytest.raises(HandshakeError) as exc:
        hs.respond(node.tables, m1)
    assert exc.value.step == 2


def test_forged_node_reply(alice, bob):
    """A node that cannot open the scope ciphertext guesses nonce and MAC key; step 3 aborts."""
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    k_prime, c_user = hs._wrap_key(bob.params, "bob", "hs-reply")
    inner = pack_fields([os.urandom(16), os.urandom(16), hs._dh_public(
        hs.ec.generate_private_key(hs._CURVE))])
    fields = [c_user.to_bytes(), hs._seal(k_prime, inner)]
    fields.append(hs._tag(os.urandom(32), MsgType.MSG2, fields))
    with pytest.raises(HandshakeError) as exc:
        hs.finalize(sess, Frame(MsgType.MSG2, tuple(fields)), bob.sk, bob.params)
    assert exc.value.step == 3
    assert sess.state is State.FAILED


def test_forged_node_reply_with_known_h(alice, bob):
    # even with a correct tag the unknown r gives the forgery away
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    k_prime, c_user = hs._wrap_key(bob.params, "bob", "hs-reply")
    inner = pack_fields([os.urandom(16), os.urandom(16), hs._dh_public(
        hs.ec.generate_private_key(hs._CURVE))])
    fields = [c_user.to_bytes(), hs._seal(k_prime, inner)]
    fields.append(hs._tag(sess.mac_key, MsgType.MSG2, fields))
    with pytest.raises(HandshakeError) as exc:
        hs.finalize(sess, Frame(MsgType.MSG2, tuple(fields)), bob.sk, bob.params)
    assert exc.value.step == 3 and "echoed nonce" in exc.value.reason


def test_subscriber_without_secret_key(node, alice):
    """An attacker claiming to be bob cannot open the reply key, so guesses the node nonce."""
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    node_sess, m2 = hs.respond(node.tables, m1)
    guessed = os.urandom(16)
    shared = hs._dh_shared(sess.dh_local, node_sess.dh_local.public_key().public_bytes(
        hs.serialization.Encoding.X962, hs.serialization.PublicFormat.CompressedPoint))
    s = hs._session_key(shared, sess.subscriber_nonce, guessed)
    fields = [hs._seal(s, guessed)]
    fields.append(hs._tag(sess.mac_key, MsgType.MSG3, fields))
    with pytest.raises(HandshakeError) as exc:
        hs.confirm(node_sess, Frame(MsgType.MSG3, tuple(fields)))
    assert exc.value.step == 4
    assert not node_sess.established


def test_subscriber_with_foreign_key_fails_locally(node, alice):
    fake = Party("bob")  # own PKG, same identity string
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    _, m2 = hs.respond(node.tables, m1)
    with pytest.raises(HandshakeError) as exc:
        hs.finalize(sess, m2, fake.sk, fake.params)
    assert exc.value.step == 3


def test_unknown_subscriber(node, alice):
    _, m1 = hs.initiate("file:report", "mallory", alice.params)
    with pytest.raises(HandshakeError) as exc:
        hs.respond(node.tables, m1)
    assert exc.value.step == 2


@pytest.mark.parametrize("which,step", [(1, 2), (2, 3), (3, 4)])
def test_tampered_tags(node, alice, bob, which, step):
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    with pytest.raises(HandshakeError) as exc:
        if which == 1:
            hs.respond(node.tables, tamper_tag(m1))
        node_sess, m2 = hs.respond(node.tables, m1)
        if which == 2:
            hs.finalize(sess, tamper_tag(m2), bob.sk, bob.params)
        m3 = hs.finalize(sess, m2, bob.sk, bob.params)
        hs.confirm(node_sess, tamper_tag(m3))
    assert exc.value.step == step
    assert "HMAC" in exc.value.reason


def test_tampered_body_fields(node, alice, bob):
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    enc = bytearray(m1.fields[2])
    enc[-1] ^= 1
    bad = Frame(MsgType.MSG1, (m1.fields[0], m1.fields[1], bytes(enc), m1.fields[3]))
    with pytest.raises(HandshakeError) as exc:
        hs.respond(node.tables, bad)
    assert exc.value.step == 2


def test_man_in_the_middle(node, alice, bob):
    """Mallory relays msg1 but substitutes her own msg2 to learn the session."""
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    hs.respond(node.tables, m1)
    k_prime, c_user = hs._wrap_key(bob.params, "bob", "hs-reply")
    mallory_dh = hs.ec.generate_private_key(hs._CURVE)
    inner = pack_fields([os.urandom(16), os.urandom(16), hs._dh_public(mallory_dh)])
    fields = [c_user.to_bytes(), hs._seal(k_prime, inner)]
    fields.append(hs._tag(os.urandom(32), MsgType.MSG2, fields))
    with pytest.raises(HandshakeError) as exc:
        hs.finalize(sess, Frame(MsgType.MSG2, tuple(fields)), bob.sk, bob.params)
    assert exc.value.step == 3


def test_replayed_msg3_on_new_session(node, alice, bob):
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    node_sess, m2 = hs.respond(node.tables, m1)
    m3 = hs.finalize(sess, m2, bob.sk, bob.params)
    hs.confirm(node_sess, m3)
    fresh_sess, _ = hs.respond(node.tables, m1)  # replayed msg1 gets a new r'
    with pytest.raises(HandshakeError) as exc:
        hs.confirm(fresh_sess, m3)
    assert exc.value.step == 4


def test_state_machine_order(node, alice, bob):
    sess, m1 = hs.initiate("file:report", "bob", alice.params)
    node_sess, m2 = hs.respond(node.tables, m1)
    with pytest.raises(HandshakeError):
        hs.confirm(node_sess, m1)  # wrong message type
    assert node_sess.state is State.FAILED
    m3 = hs.finalize(sess, m2, bob.sk, bob.params)
    with pytest.raises(HandshakeError, match="already failed"):
        hs.confirm(node_sess, m3)
    with pytest.raises(HandshakeError):
        hs.finalize(sess, m2, bob.sk, bob.params)  # step repeated


def test_channel(node, alice, bob):
    sess, node_sess = establish(node.tables, "file:report", bob, alice.params)
    f1 = hs.channel_seal(sess, b"GET one")
    f2 = hs.channel_seal(sess, b"GET two")
    assert hs.channel_open(node_sess, f1) == b"GET one"
    with pytest.raises(ChannelError):
        hs.channel_open(node_sess, f1)  # replay
    assert hs.channel_open(node_sess, f2) == b"GET two"
    reply = hs.channel_seal(node_sess, b"ok")
    assert hs.channel_open(sess, reply) == b"ok"
    # a frame reflected back to its sender uses the wrong direction nonce
    own = hs.channel_seal(sess, b"x")
    with pytest.raises(ChannelError):
        hs.channel_open(sess, own)
    with pytest.raises(ChannelError):
        hs.channel_open(node_sess, tamper_tag(hs.channel_seal(sess, b"y")))
    ctrl = hs.channel_seal(sess, b"verb", MsgType.CONTROL)
    retyped = Frame(MsgType.CHANNEL, ctrl.fields)
    with pytest.raises(ChannelError):
        hs.channel_open(node_sess, retyped)


def test_channel_needs_session(alice):
    sess, _ = hs.initiate("file:report", "bob", alice.params)
    with pytest.raises(ChannelError):
        hs.channel_seal(sess, b"early")

"""Subscriber/node authentication and session-key establishment.

    msg1  subscriber -> node : scope, IBE_scope(request_key),
                               AEAD_request_key(subscriber_nonce, mac_key, DH_sub, subscriber_id), mac
    msg2  node -> subscriber : IBE_subscriber(reply_key),
                               AEAD_reply_key(subscriber_nonce, node_nonce, DH_node), mac
    msg3  subscriber -> node : AEAD_session_key(node_nonce), mac

Only a node holding the scope's secret key recovers the request key (and so
the subscriber nonce and MAC key); only the holder of the subscriber's secret
key recovers the reply key (and so the node nonce).  Each mac is
HMAC-SHA256 under ``mac_key`` over the message type byte and every preceding
field of the same frame.  Afterwards both sides share ``session_key``
(AES-GCM) and ``mac_key`` for the request channel.
"""
from __future__ import annotations

import hmac
import hashlib
import os
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from . import ibpre
from .encoding import DecodeError, check_identity, decode_str, encode_str, pack_fields, unpack_fields
from .ibpre import DomainParams, GtPlaintext, LeveledCiphertext, UserSecretKey
from .wire import Frame, MsgType

NONCE_BITS = 128
HMAC_KEY_LEN = 32
TAG_LEN = 32
AEAD_NONCE_LEN = 12

CONTROL_SCOPE = "icnshare:control"

_CURVE = ec.SECP256R1()
_TO_NODE = 1
_TO_SUBSCRIBER = 2


class State(Enum):
    INIT = "init"
    SENT1 = "sent1"
    SENT2 = "sent2"
    SENT3 = "sent3"
    ESTABLISHED = "established"
    FAILED = "failed"


class HandshakeError(Exception):
    """Protocol abort; ``step`` is the protocol step that detected it."""

    def __init__(self, step: int, reason: str):
        super().__init__(f"handshake aborted at step {step}: {reason}")
        self.step = step
        self.reason = reason


class ChannelError(Exception):
    pass


@dataclass
class HandshakeSession:
    role: str
    scope: str
    peer_identity: Optional[str] = None
    local_identity: Optional[str] = None
    subscriber_nonce: bytes = b""
    node_nonce: bytes = b""
    mac_key: bytes = b""
    request_key: bytes = b""
    reply_key: bytes = b""
    dh_local: Optional[ec.EllipticCurvePrivateKey] = field(default=None, repr=False)
    dh_peer: bytes = b""
    session_key: Optional[bytes] = field(default=None, repr=False)
    state: State = State.INIT
    send_counter: int = 0
    recv_counter: int = 0
    # subscriber only: the owner parameters used for C_scope
    owner_params: Optional[DomainParams] = field(default=None, repr=False)
    pending_session_key: Optional[bytes] = field(default=None, repr=False)

    @property
    def established(self) -> bool:
        return self.state is State.ESTABLISHED


# -- primitives -------------------------------------------------------------

def _tag(h: bytes, msg_type: MsgType, fields) -> bytes:
    return hmac.new(h, Frame(msg_type, tuple(fields)).body(), hashlib.sha256).digest()


def _check_tag(h: bytes, frame: Frame) -> bool:
    expected = _tag(h, frame.msg_type, frame.fields[:-1])
    return hmac.compare_digest(expected, frame.fields[-1])


def _seal(key: bytes, plaintext: bytes, aad: bytes = b"") -> bytes:
    nonce = os.urandom(AEAD_NONCE_LEN)
    return nonce + AESGCM(key).encrypt(nonce, plaintext, aad)


def _open(key: bytes, blob: bytes, aad: bytes = b"") -> bytes:
    if len(blob) < AEAD_NONCE_LEN + 16:
        raise InvalidTag()
    return AESGCM(key).decrypt(blob[:AEAD_NONCE_LEN], blob[AEAD_NONCE_LEN:], aad)


def _wrap_key(params: DomainParams, identity: str, context: str) -> Tuple[bytes, LeveledCiphertext]:
    element = GtPlaintext.random()
    return ibpre.derive_sym_key(element, context), ibpre.encrypt(params, identity, element)


def _dh_public(key: ec.EllipticCurvePrivateKey) -> bytes:
    return key.public_key().public_bytes(serialization.Encoding.X962,
                                         serialization.PublicFormat.CompressedPoint)


def _dh_shared(key: ec.EllipticCurvePrivateKey, peer: bytes) -> bytes:
    peer_key = ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, peer)
    return key.exchange(ec.ECDH(), peer_key)


def _session_key(shared: bytes, subscriber_nonce: bytes, node_nonce: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=16, salt=None,
                info=b"icnshare:v1:session").derive(shared + subscriber_nonce + node_nonce)


def _fail(sess: HandshakeSession, step: int, reason: str) -> HandshakeError:
    sess.state = State.FAILED
    return HandshakeError(step, reason)


def _expect(sess: HandshakeSession, role: str, state: State, step: int):
    if sess.state is State.FAILED:
        raise HandshakeError(step, "session already failed")
    if sess.role != role or sess.state is not state:
        raise _fail(sess, step, f"unexpected call in state {sess.state.value}")


# -- protocol steps ---------------------------------------------------------

def initiate(scope: str, subscriber_id: str,
             owner_params: DomainParams) -> Tuple[HandshakeSession, Frame]:
    """Step 1 (subscriber)."""
    sess = HandshakeSession("subscriber", check_identity(scope),
                            local_identity=check_identity(subscriber_id),
                            owner_params=owner_params)
    sess.subscriber_nonce = os.urandom(NONCE_BITS // 8)
    sess.mac_key = os.urandom(HMAC_KEY_LEN)
    sess.dh_local = ec.generate_private_key(_CURVE)
    sess.request_key, c_scope = _wrap_key(owner_params, scope, "hs-request")
    inner = pack_fields([sess.subscriber_nonce, sess.mac_key, _dh_public(sess.dh_local),
                         encode_str(subscriber_id)])
    fields = [encode_str(scope), c_scope.to_bytes(), _seal(sess.request_key, inner)]
    fields.append(_tag(sess.mac_key, MsgType.MSG1, fields))
    sess.state = State.SENT1
    return sess, Frame(MsgType.MSG1, tuple(fields))


def respond(t, m1: Frame) -> Tuple[HandshakeSession, Frame]:
    """Step 2 (node).  ``t`` is the owner's NodeTables."""
    sess = HandshakeSession("node", "?")
    if m1.msg_type is not MsgType.MSG1:
        raise _fail(sess, 2, "expected msg1")
    raw_scope, raw_c, enc_inner, _ = m1.fields
    try:
        sess.scope = check_identity(decode_str(raw_scope))
        c_scope = LeveledCiphertext.from_bytes(raw_c)
    except (DecodeError, ValueError):
        raise _fail(sess, 2, "malformed msg1") from None
    row = t.scope_keys.get(sess.scope)
    if row is None:
        raise _fail(sess, 2, "no scope key installed")
    try:
        element = ibpre.decrypt(row.sk, c_scope, t.owner_params)
        sess.request_key = ibpre.derive_sym_key(element, "hs-request")
        nonce, mac_key, dh_sub, raw_sub = unpack_fields(_open(sess.request_key, enc_inner), 4)
        subscriber = check_identity(decode_str(raw_sub))
    except (ibpre.IBPREError, InvalidTag, DecodeError, ValueError):
        raise _fail(sess, 2, "cannot decrypt msg1") from None
    if len(nonce) != NONCE_BITS // 8 or len(mac_key) != HMAC_KEY_LEN:
        raise _fail(sess, 2, "malformed msg1 payload")
    sess.mac_key = mac_key
    if not _check_tag(mac_key, m1):
        raise _fail(sess, 2, "msg1 HMAC mismatch")
    user_params = t.subscriber_params(subscriber)
    if user_params is None:
        raise _fail(sess, 2, "unknown subscriber")
    sess.peer_identity = subscriber
    sess.subscriber_nonce = nonce
    sess.dh_peer = dh_sub
    sess.node_nonce = os.urandom(NONCE_BITS // 8)
    sess.dh_local = ec.generate_private_key(_CURVE)
    sess.reply_key, c_user = _wrap_key(user_params, subscriber, "hs-reply")
    inner = pack_fields([nonce, sess.node_nonce, _dh_public(sess.dh_local)])
    fields = [c_user.to_bytes(), _seal(sess.reply_key, inner)]
    fields.append(_tag(mac_key, MsgType.MSG2, fields))
    sess.state = State.SENT2
    return sess, Frame(MsgType.MSG2, tuple(fields))


def finalize(sess: HandshakeSession, m2: Frame, sk_user: UserSecretKey,
             user_params: DomainParams) -> Frame:
    """Step 3 (subscriber): check the node echoed our nonce, derive the session key."""
    _expect(sess, "subscriber", State.SENT1, 3)
    if m2.msg_type is not MsgType.MSG2:
        raise _fail(sess, 3, "expected msg2")
    if not _check_tag(sess.mac_key, m2):
        raise _fail(sess, 3, "msg2 HMAC mismatch")
    raw_c, enc_inner, _ = m2.fields
    try:
        c_user = LeveledCiphertext.from_bytes(raw_c)
        element = ibpre.decrypt(sk_user, c_user, user_params)
        sess.reply_key = ibpre.derive_sym_key(element, "hs-reply")
        echoed, node_nonce, dh_node = unpack_fields(_open(sess.reply_key, enc_inner), 3)
    except (ibpre.IBPREError, InvalidTag, DecodeError, ValueError):
        raise _fail(sess, 3, "cannot decrypt msg2") from None
    if not hmac.compare_digest(echoed, sess.subscriber_nonce):
        raise _fail(sess, 3, "echoed nonce mismatch: node did not prove scope authorization")
    try:
        shared = _dh_shared(sess.dh_local, dh_node)
    except ValueError:
        raise _fail(sess, 3, "invalid DH share") from None
    sess.node_nonce = node_nonce
    sess.dh_peer = dh_node
    sess.pending_session_key = _session_key(shared, sess.subscriber_nonce, node_nonce)
    fields = [_seal(sess.pending_session_key, node_nonce)]
    fields.append(_tag(sess.mac_key, MsgType.MSG3, fields))
    sess.state = State.SENT3
    return Frame(MsgType.MSG3, tuple(fields))


def confirm(sess: HandshakeSession, m3: Frame) -> HandshakeSession:
    """Step 4 (node): check the node nonce came back under the session key."""
    _expect(sess, "node", State.SENT2, 4)
    if m3.msg_type is not MsgType.MSG3:
        raise _fail(sess, 4, "expected msg3")
    if not _check_tag(sess.mac_key, m3):
        raise _fail(sess, 4, "msg3 HMAC mismatch")
    try:
        key = _session_key(_dh_shared(sess.dh_local, sess.dh_peer),
                           sess.subscriber_nonce, sess.node_nonce)
        echoed = _open(key, m3.fields[0])
    except (InvalidTag, ValueError):
        raise _fail(sess, 4, "cannot decrypt msg3: subscriber did not prove identity") from None
    if not hmac.compare_digest(echoed, sess.node_nonce):
        raise _fail(sess, 4, "echoed nonce mismatch: subscriber did not prove identity")
    sess.session_key = key
    sess.state = State.ESTABLISHED
    return sess


# -- channel ----------------------------------------------------------------

def _directions(sess: HandshakeSession) -> Tuple[int, int]:
    if sess.role == "subscriber":
        return _TO_NODE, _TO_SUBSCRIBER
    return _TO_SUBSCRIBER, _TO_NODE


def _channel_key(sess: HandshakeSession) -> bytes:
    if sess.state is State.ESTABLISHED:
        return sess.session_key
    # the subscriber may send its first request right behind msg3
    if sess.role == "subscriber" and sess.state is State.SENT3:
        return sess.pending_session_key
    raise ChannelError(f"session not established (state {sess.state.value})")


def channel_seal(sess: HandshakeSession, payload: bytes,
                 msg_type: MsgType = MsgType.CHANNEL) -> Frame:
    if msg_type not in (MsgType.CHANNEL, MsgType.CONTROL):
        raise ChannelError("channel frames are CHANNEL or CONTROL")
    key = _channel_key(sess)
    out_dir, _ = _directions(sess)
    sess.send_counter += 1
    counter = struct.pack(">Q", sess.send_counter)
    nonce = struct.pack(">I", out_dir) + counter
    ct = AESGCM(key).encrypt(nonce, bytes(payload), bytes([int(msg_type)]))
    fields = [counter, ct]
    fields.append(_tag(sess.mac_key, msg_type, fields))
    return Frame(msg_type, tuple(fields))


def channel_open(sess: HandshakeSession, frame: Frame) -> bytes:
    key = _channel_key(sess)
    if frame.msg_type not in (MsgType.CHANNEL, MsgType.CONTROL):
        raise ChannelError(f"unexpected {frame.msg_type.name} frame")
    if not _check_tag(sess.mac_key, frame):
        raise ChannelError("channel HMAC mismatch")
    raw_counter, ct, _ = frame.fields
    if len(raw_counter) != 8:
        raise ChannelError("bad counter")
    (counter,) = struct.unpack(">Q", raw_counter)
    if counter <= sess.recv_counter:
        raise ChannelError("replayed or out-of-order frame")
    _, in_dir = _directions(sess)
    nonce = struct.pack(">I", in_dir) + raw_counter
    try:
        payload = AESGCM(key).decrypt(nonce, ct, bytes([int(frame.msg_type)]))
    except InvalidTag:
        raise ChannelError("channel decryption failed") from None
    sess.recv_counter = counter
    if sess.state is State.SENT3:
        # a valid frame from the node implies it accepted msg3
        sess.session_key = sess.pending_session_key
        sess.state = State.ESTABLISHED
    return payload

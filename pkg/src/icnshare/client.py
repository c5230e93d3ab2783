"""Blocking client side of the node protocol: subscriber fetch and owner control."""
from __future__ import annotations

import socket
from collections import Counter
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from . import handshake as hs
from . import ibpre
from .content import SealedItem, open_item_as_delegatee
from .encoding import decode_str, encode_str, pack_fields, pack_list, unpack_fields, unpack_list
from .handshake import CONTROL_SCOPE, HandshakeSession
from .ibpre import DomainParams, LeveledCiphertext, ReencryptionKey, UserSecretKey
from .node import NodeTables
from .wire import Frame, MsgType, recv_frame, send_frame


class Denied(Exception):
    """The node answered with a DENY frame."""


class ProtocolError(Exception):
    pass


class ControlError(Exception):
    pass


class NodeConnection:
    """One stream to a node; counts frames in each direction by type."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sent: Counter = Counter()
        self.received: Counter = Counter()
        self.session: Optional[HandshakeSession] = None

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def send(self, frame: Frame) -> None:
        self.sent[frame.msg_type] += 1
        send_frame(self.sock, frame)

    def recv(self) -> Frame:
        frame = recv_frame(self.sock)
        self.received[frame.msg_type] += 1
        if frame.msg_type is MsgType.DENY:
            raise Denied(frame.fields[0].decode(errors="replace"))
        return frame

    def handshake(self, scope: str, identity: str, sk: UserSecretKey,
                  user_params: DomainParams, owner_params: DomainParams) -> HandshakeSession:
        sess, m1 = hs.initiate(scope, identity, owner_params)
        self.send(m1)
        m3 = hs.finalize(sess, self.recv(), sk, user_params)
        self.send(m3)
        self.session = sess
        return sess

    def request(self, payload: bytes, msg_type: MsgType = MsgType.CHANNEL) -> List[bytes]:
        if self.session is None:
            raise ProtocolError("handshake first")
        self.send(hs.channel_seal(self.session, payload, msg_type))
        reply = self.recv()
        if reply.msg_type is not MsgType.CHANNEL:
            raise ProtocolError(f"unexpected {reply.msg_type.name} reply")
        status, *fields = unpack_fields(hs.channel_open(self.session, reply))
        if status != b"ok":
            raise ControlError(decode_str(fields[0]) if fields else "request failed")
        return fields

    def get(self, item: str) -> Tuple[LeveledCiphertext, SealedItem]:
        if not item.startswith(self.session.scope):
            raise ProtocolError(f"item {item!r} lies outside the authenticated scope "
                                f"{self.session.scope!r}")
        key, body = self.request(pack_fields([b"GET", encode_str(item)]))
        return LeveledCiphertext.from_bytes(key), SealedItem.from_bytes(body)


def fetch_item(host: str, port: int, item: str, identity: str, sk: UserSecretKey,
               user_params: DomainParams, owner_params: DomainParams,
               scope: Optional[str] = None) -> bytes:
    """Handshake for ``scope`` (default: the item id), request, open."""
    with NodeConnection(host, port) as conn:
        conn.handshake(scope or item, identity, sk, user_params, owner_params)
        key, body = conn.get(item)
    return open_item_as_delegatee(body, key, sk, user_params)


def _rk_list(rks: Iterable[ReencryptionKey]) -> bytes:
    return pack_list(rk.to_bytes() for rk in rks)


def _names(names: Iterable[str]) -> bytes:
    return pack_list(encode_str(n) for n in names)


class OwnerControl:
    """Owner-authenticated control session over the reserved control scope.

    Every method sends exactly one CONTROL frame.
    """

    def __init__(self, host: str, port: int, owner_id: str, sk: UserSecretKey,
                 params: DomainParams):
        self.conn = NodeConnection(host, port)
        self.conn.handshake(CONTROL_SCOPE, owner_id, sk, params, params)

    def close(self):
        self.conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _control(self, verb: str, *fields: bytes) -> List[bytes]:
        return self.conn.request(pack_fields([encode_str(verb), *fields]), MsgType.CONTROL)

    def register_subscriber(self, identity: str, sp: DomainParams,
                            rk: Optional[ReencryptionKey] = None) -> None:
        self._control("register", encode_str(identity), sp.to_bytes(),
                      rk.to_bytes() if rk else b"")

    def define_policy(self, policy: str, members: Iterable[str],
                      rks: Iterable[ReencryptionKey] = ()) -> None:
        self._control("define-policy", encode_str(policy), _names(members), _rk_list(rks))

    def update_policy(self, policy: str, add: Iterable[str] = (), remove: Iterable[str] = (),
                      rks_for_added: Iterable[ReencryptionKey] = ()) -> None:
        self._control("policy-update", encode_str(policy), _names(add), _names(remove),
                      _rk_list(rks_for_added))

    def publish(self, item: SealedItem, policy: str) -> None:
        self._control("publish", item.to_bytes(), encode_str(policy))

    def publish_foreign(self, item: SealedItem, policy: str, from_owner: str) -> None:
        self._control("publish-foreign", item.to_bytes(), encode_str(policy),
                      encode_str(from_owner))

    def install_scope_key(self, scope: str, sk: UserSecretKey) -> None:
        self._control("install-scope-key", encode_str(scope), sk.to_bytes())

    def export(self) -> Tuple[NodeTables, List[str]]:
        """Public tables plus the names (never the keys) of installed scopes."""
        raw, scopes = self._control("export")
        return NodeTables.from_bytes(raw), [decode_str(s) for s in unpack_list(scopes)]

    def rotate(self, new_params: DomainParams, new_key_records: Mapping[str, LeveledCiphertext],
               new_rks: Iterable[ReencryptionKey], new_scope_keys: Iterable[UserSecretKey]) -> None:
        records = pack_list(pack_fields([encode_str(i), r.to_bytes()])
                            for i, r in new_key_records.items())
        self._control("rotate", new_params.to_bytes(), records, _rk_list(new_rks),
                      pack_list(sk.to_bytes() for sk in new_scope_keys))


def rotation_material(tables: NodeTables, old_params: DomainParams, old_msk: ibpre.MasterSecret,
                      new_params: DomainParams, new_msk: ibpre.MasterSecret):
    """Build every replacement the node needs after an owner key rotation.

    Recovers each item's K with the old keys and re-encrypts it under the new
    SP; bodies are not touched.  Returns ``(records, rks)``.
    """
    owner = tables.owner_id
    old_owner_sk = ibpre.extract(old_params, old_msk, owner)
    new_owner_sk = ibpre.extract(new_params, new_msk, owner)
    records: Dict[str, LeveledCiphertext] = {}
    for item, row in tables.shared.items():
        target = row.key_record.target_id
        old_sk = old_owner_sk if target == owner else ibpre.extract(old_params, old_msk, target)
        k = ibpre.decrypt(old_sk, row.key_record, old_params)
        records[item] = ibpre.encrypt(new_params, target, k)
    rks: List[ReencryptionKey] = []
    if tables.construction == 1:
        for ident, row in tables.subscribers.items():
            rks.append(ibpre.rkgen(new_params, new_owner_sk, ident, row.sp))
    else:
        for name, policy in tables.policies.items():
            sk_policy = ibpre.extract(new_params, new_msk, name)
            for member in policy.member_ids():
                rks.append(ibpre.rkgen(new_params, sk_policy, member,
                                       tables.subscribers[member].sp))
    return records, rks


def scope_keys_for(scopes: Iterable[str], params: DomainParams,
                   msk: ibpre.MasterSecret) -> List[UserSecretKey]:
    return [ibpre.extract(params, msk, s) for s in scopes]

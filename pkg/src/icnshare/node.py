"""Storage node tables and access-control enforcement.

The table functions are pure: each takes a :class:`NodeTables` and returns a
new one, leaving the input untouched.  :class:`StorageNode` wraps them with a
writer lock, a content-addressed body store, an audit log and atomic snapshot
persistence.

Construction 1 keeps ``RK owner->subscriber`` in Known Subscribers and seals
item keys to the owner identity.  Construction 2 keeps ``RK policy->member``
inside each policy row and seals item keys to the policy identifier, so a
key can only unlock items of its own policy.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from . import ibpre
from .content import SealedItem
from .encoding import (
    DecodeError,
    Tag,
    check_identity,
    decode_str,
    encode_str,
    pack,
    pack_list,
    unpack,
    unpack_list,
)
from .ibpre import DomainParams, LeveledCiphertext, ReencryptionKey, UserSecretKey

log = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


class NodeError(Exception):
    pass


class AccessDenied(NodeError):
    """Uniform external denial; ``code`` is for the internal audit log only."""

    def __init__(self, code: str):
        super().__init__("not found or not authorized")
        self.code = code


# -- rows -------------------------------------------------------------------

@dataclass(frozen=True)
class KnownSubscriberRow:
    identity: str
    sp: DomainParams
    rk: Optional[ReencryptionKey] = None


@dataclass(frozen=True)
class PolicyRow:
    policy: str
    members: Tuple[Tuple[str, Optional[ReencryptionKey]], ...]

    def member_ids(self) -> List[str]:
        return [m for m, _ in self.members]

    def rk_for(self, identity: str) -> Optional[ReencryptionKey]:
        for m, rk in self.members:
            if m == identity:
                return rk
        return None


@dataclass(frozen=True)
class SharedContentRow:
    item: str
    policy: str
    key_record: LeveledCiphertext
    body_ref: str
    origin: Optional[str] = None


@dataclass(frozen=True)
class ScopeKeyRow:
    scope: str
    sk: UserSecretKey


@dataclass(frozen=True)
class NodeTables:
    owner_id: str
    owner_params: DomainParams
    construction: int
    subscribers: Mapping[str, KnownSubscriberRow] = field(default_factory=dict)
    policies: Mapping[str, PolicyRow] = field(default_factory=dict)
    shared: Mapping[str, SharedContentRow] = field(default_factory=dict)
    scope_keys: Mapping[str, ScopeKeyRow] = field(default_factory=dict)

    def __post_init__(self):
        if self.construction not in (1, 2):
            raise ValueError("construction must be 1 or 2")
        check_identity(self.owner_id)

    def subscriber_params(self, identity: str) -> Optional[DomainParams]:
        """SP used to encrypt to ``identity`` during the handshake."""
        if identity == self.owner_id:
            return self.owner_params
        row = self.subscribers.get(identity)
        return row.sp if row else None

    # -- persistence --------------------------------------------------------

    def to_bytes(self) -> bytes:
        subs = pack_list(
            pack_list([encode_str(r.identity), r.sp.to_bytes(),
                       r.rk.to_bytes() if r.rk else b""])
            for r in self.subscribers.values())
        pols = pack_list(
            pack_list([encode_str(p.policy)] + [
                pack_list([encode_str(m), rk.to_bytes() if rk else b""])
                for m, rk in p.members])
            for p in self.policies.values())
        shared = pack_list(
            pack_list([encode_str(s.item), encode_str(s.policy), s.key_record.to_bytes(),
                       encode_str(s.body_ref), encode_str(s.origin or "")])
            for s in self.shared.values())
        scopes = pack_list(
            pack_list([encode_str(k.scope), k.sk.to_bytes()])
            for k in self.scope_keys.values())
        return pack(Tag.NODE_TABLES, [
            bytes([SNAPSHOT_VERSION]), encode_str(self.owner_id),
            self.owner_params.to_bytes(), bytes([self.construction]),
            subs, pols, shared, scopes,
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "NodeTables":
        ver, owner, params, cons, subs, pols, shared, scopes = unpack(data, Tag.NODE_TABLES, 8)
        if ver != bytes([SNAPSHOT_VERSION]):
            raise DecodeError("unsupported snapshot version")
        if len(cons) != 1 or cons[0] not in (1, 2):
            raise DecodeError("bad construction flag")

        def opt_rk(raw):
            return ReencryptionKey.from_bytes(raw) if raw else None

        subscribers = {}
        for raw in unpack_list(subs):
            ident, sp, rk = unpack(raw, Tag.LIST, 3)
            ident = decode_str(ident)
            subscribers[ident] = KnownSubscriberRow(ident, DomainParams.from_bytes(sp), opt_rk(rk))
        policies = {}
        for raw in unpack_list(pols):
            parts = unpack_list(raw)
            if not parts:
                raise DecodeError("empty policy row")
            name = decode_str(parts[0])
            members = []
            for m in parts[1:]:
                ident, rk = unpack(m, Tag.LIST, 2)
                members.append((decode_str(ident), opt_rk(rk)))
            policies[name] = PolicyRow(name, tuple(members))
        shared_rows = {}
        for raw in unpack_list(shared):
            item, policy, record, ref, origin = unpack(raw, Tag.LIST, 5)
            item = decode_str(item)
            shared_rows[item] = SharedContentRow(
                item, decode_str(policy), LeveledCiphertext.from_bytes(record),
                decode_str(ref), decode_str(origin) or None)
        scope_keys = {}
        for raw in unpack_list(scopes):
            scope, sk = unpack(raw, Tag.LIST, 2)
            scope = decode_str(scope)
            scope_keys[scope] = ScopeKeyRow(scope, UserSecretKey.from_bytes(sk))
        t = cls(decode_str(owner), DomainParams.from_bytes(params), cons[0],
                subscribers, policies, shared_rows, scope_keys)
        try:
            check_integrity(t)
        except NodeError as exc:
            raise DecodeError(f"snapshot violates table integrity: {exc}") from exc
        return t


def empty_tables(owner_id: str, owner_params: DomainParams, construction: int) -> NodeTables:
    return NodeTables(owner_id, owner_params, construction)


def check_integrity(t: NodeTables) -> None:
    """Referential integrity across the three tables plus scope keys."""
    for ident, row in t.subscribers.items():
        if t.construction == 1:
            if row.rk is None or row.rk.src_id != t.owner_id or row.rk.dst_id != ident:
                raise NodeError(f"subscriber {ident!r} lacks a valid owner re-encryption key")
        elif row.rk is not None:
            raise NodeError(f"construction 2 subscriber {ident!r} carries a key")
    for name, p in t.policies.items():
        ids = p.member_ids()
        if len(set(ids)) != len(ids):
            raise NodeError(f"policy {name!r} has duplicate members")
        for m, rk in p.members:
            if m not in t.subscribers:
                raise NodeError(f"policy {name!r} member {m!r} is not a known subscriber")
            if t.construction == 2:
                if rk is None or rk.src_id != name or rk.dst_id != m:
                    raise NodeError(f"policy {name!r} member {m!r} lacks a valid policy key")
            elif rk is not None:
                raise NodeError("construction 1 policies carry no keys")
    for item, s in t.shared.items():
        if s.policy not in t.policies:
            raise NodeError(f"item {item!r} references unknown policy {s.policy!r}")
        if s.key_record.level != 1:
            raise NodeError(f"item {item!r} key record is not level 1")


# -- table operations -------------------------------------------------------

def _with(t: NodeTables, **changes) -> NodeTables:
    new = replace(t, **changes)
    check_integrity(new)
    return new


def register_subscriber(t: NodeTables, identity: str, sp: DomainParams,
                        rk: Optional[ReencryptionKey] = None) -> NodeTables:
    check_identity(identity)
    if identity == t.owner_id:
        raise NodeError("the owner is not registered as a subscriber")
    if t.construction == 1:
        if rk is None:
            raise NodeError("construction 1 requires RK owner->subscriber")
        if rk.src_id != t.owner_id or rk.dst_id != identity:
            raise NodeError("re-encryption key must delegate owner -> subscriber")
        if rk.src_domain != t.owner_params.domain_id or rk.dst_domain != sp.domain_id:
            raise NodeError("re-encryption key domains do not match")
    elif rk is not None:
        raise NodeError("construction 2 subscribers carry no re-encryption key")
    subscribers = dict(t.subscribers)
    subscribers[identity] = KnownSubscriberRow(identity, sp, rk)
    return _with(t, subscribers=subscribers)


def _policy_members(t: NodeTables, policy: str, members: Sequence[str],
                    rks: Optional[Sequence[ReencryptionKey]]):
    if len(set(members)) != len(members):
        raise NodeError("duplicate policy members")
    for m in members:
        if m not in t.subscribers:
            raise NodeError(f"{m!r} is not a known subscriber")
    if t.construction == 1:
        if rks:
            raise NodeError("construction 1 policies carry no re-encryption keys")
        return [(m, None) for m in members]
    rks = list(rks or [])
    if len(rks) != len(members):
        raise NodeError("construction 2 needs one RK policy->member per member")
    by_dst = {rk.dst_id: rk for rk in rks}
    out = []
    for m in members:
        rk = by_dst.get(m)
        if rk is None or rk.src_id != policy:
            raise NodeError(f"missing RK {policy}->{m}")
        if rk.src_domain != t.owner_params.domain_id:
            raise NodeError("policy key issued under another domain")
        out.append((m, rk))
    return out


def define_policy(t: NodeTables, policy: str, members: Sequence[str],
                  rks: Optional[Sequence[ReencryptionKey]] = None) -> NodeTables:
    check_identity(policy)
    row = PolicyRow(policy, tuple(_policy_members(t, policy, list(members), rks)))
    policies = dict(t.policies)
    policies[policy] = row
    return _with(t, policies=policies)


def update_policy_members(t: NodeTables, policy: str, add: Sequence[str] = (),
                          remove: Sequence[str] = (),
                          rks_for_added: Optional[Sequence[ReencryptionKey]] = None) -> NodeTables:
    """Membership edit only: no key regeneration, no change to shared content."""
    row = t.policies.get(policy)
    if row is None:
        raise NodeError(f"unknown policy {policy!r}")
    remove = set(remove)
    kept = [(m, rk) for m, rk in row.members if m not in remove]
    present = {m for m, _ in kept}
    new_ids = [m for m in add if m not in present]
    added = _policy_members(t, policy, new_ids,
                            [rk for rk in (rks_for_added or []) if rk.dst_id in new_ids]
                            if t.construction == 2 else None)
    policies = dict(t.policies)
    policies[policy] = PolicyRow(policy, tuple(kept + added))
    return _with(t, policies=policies)


def _check_record(t: NodeTables, record: Optional[LeveledCiphertext], policy: str,
                  params: Optional[DomainParams] = None) -> None:
    params = params or t.owner_params
    if record is None or record.level != 1:
        raise NodeError("item needs a level-1 key record")
    expected = t.owner_id if t.construction == 1 else policy
    if record.target_id != expected:
        raise NodeError(f"construction {t.construction} key record must target {expected!r}, "
                        f"got {record.target_id!r}")
    if record.target_domain != params.domain_id:
        raise NodeError("key record was produced under another domain")


def publish_item(t: NodeTables, item: SealedItem, policy: str,
                 origin: Optional[str] = None) -> NodeTables:
    if policy not in t.policies:
        raise NodeError(f"unknown policy {policy!r}")
    _check_record(t, item.key_record, policy)
    shared = dict(t.shared)
    shared[item.item_id] = SharedContentRow(item.item_id, policy, item.key_record,
                                            item.body_ref(), origin)
    return _with(t, shared=shared)


def publish_foreign_item(t: NodeTables, item: SealedItem, well_known_policy: str,
                         from_owner: str) -> NodeTables:
    """Host another owner's item for this owner's ``well_known_policy`` group.

    The foreign owner seals with this node owner's public SP: to the owner
    identity under construction 1, to the policy identifier under
    construction 2.
    """
    check_identity(from_owner)
    return publish_item(t, item, well_known_policy, origin=from_owner)


def install_scope_key(t: NodeTables, scope: str, sk: UserSecretKey) -> NodeTables:
    check_identity(scope)
    if sk.id != scope:
        raise NodeError("scope key identity does not match the scope")
    if not sk.verify(t.owner_params):
        raise NodeError("scope key fails the pairing check under the owner's SP")
    keys = dict(t.scope_keys)
    keys[scope] = ScopeKeyRow(scope, sk)
    return _with(t, scope_keys=keys)


def serve_content_request(t: NodeTables, session, item: str) -> Tuple[LeveledCiphertext, str]:
    """Re-encrypt an item's key record for the session's subscriber.

    Returns ``(level-2 key ciphertext, body_ref)``.  All failures raise
    :class:`AccessDenied`.
    """
    if not getattr(session, "established", False) or session.role != "node":
        raise AccessDenied("session-not-established")
    subscriber = session.peer_identity
    row = t.shared.get(item)
    if row is None:
        raise AccessDenied("unknown-item")
    policy = t.policies.get(row.policy)
    if policy is None or subscriber not in policy.member_ids():
        raise AccessDenied("not-a-member")
    if t.construction == 1:
        known = t.subscribers.get(subscriber)
        rk = known.rk if known else None
    else:
        rk = policy.rk_for(subscriber)
    if rk is None:
        raise AccessDenied("no-reencryption-key")
    try:
        return ibpre.reencrypt(rk, row.key_record), row.body_ref
    except ibpre.IBPREError:
        raise AccessDenied("key-record-mismatch") from None


def rotate_owner_keys(t: NodeTables, new_params: DomainParams,
                      new_key_records: Mapping[str, LeveledCiphertext],
                      new_rks, new_scope_keys: Optional[Mapping[str, UserSecretKey]] = None
                      ) -> NodeTables:
    """Swap in a fresh SP with complete replacement key material.

    ``new_rks`` maps subscriber -> RK under construction 1 and
    policy -> {member -> RK} under construction 2.  Bodies are untouched.
    """
    if set(new_key_records) != set(t.shared):
        raise NodeError("replacement key records must cover exactly the shared items")
    new_scope_keys = dict(new_scope_keys or {})
    if set(new_scope_keys) != set(t.scope_keys):
        raise NodeError("replacement scope keys must cover exactly the installed scopes")
    staged = replace(t, owner_params=new_params, subscribers={}, policies={},
                     shared={}, scope_keys={})
    if t.construction == 1:
        if set(new_rks) != set(t.subscribers):
            raise NodeError("replacement RKs must cover exactly the known subscribers")
        for ident, row in t.subscribers.items():
            staged = register_subscriber(staged, ident, row.sp, new_rks[ident])
        for name, p in t.policies.items():
            staged = define_policy(staged, name, p.member_ids())
    else:
        for ident, row in t.subscribers.items():
            staged = register_subscriber(staged, ident, row.sp)
        if set(new_rks) != set(t.policies):
            raise NodeError("replacement RKs must cover exactly the policies")
        for name, p in t.policies.items():
            keys = new_rks[name]
            if set(keys) != set(p.member_ids()):
                raise NodeError(f"replacement RKs for {name!r} must cover its members")
            staged = define_policy(staged, name, p.member_ids(), [keys[m] for m in p.member_ids()])
    shared = {}
    for item, row in t.shared.items():
        record = new_key_records[item]
        _check_record(staged, record, row.policy, new_params)
        shared[item] = replace(row, key_record=record)
    staged = replace(staged, shared=shared)
    for scope, sk in new_scope_keys.items():
        staged = install_scope_key(staged, scope, sk)
    check_integrity(staged)
    return staged


# -- stateful node ----------------------------------------------------------

class BodyStore:
    """Content-addressed store for key-less sealed items."""

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root else None
        self._mem: Dict[str, bytes] = {}

    def put(self, item: SealedItem) -> str:
        body = item.without_key()
        ref = body.body_ref()
        data = body.to_bytes()
        if self.root is None:
            self._mem[ref] = data
        else:
            path = self.root / ref
            if not path.exists():
                _atomic_write(path, data)
        return ref

    def get(self, ref: str) -> SealedItem:
        if self.root is None:
            data = self._mem[ref]
        else:
            data = (self.root / ref).read_bytes()
        return SealedItem.from_bytes(data)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ContentResponse:
    key: LeveledCiphertext
    item: SealedItem


class StorageNode:
    """One owner's tables at a storage node.

    Writers are serialized; readers see whichever complete table version was
    current when they started.
    """

    def __init__(self, tables: NodeTables, snapshot_path: Optional[os.PathLike] = None,
                 audit_path: Optional[os.PathLike] = None, bodies: Optional[BodyStore] = None):
        self._tables = tables
        self._lock = threading.Lock()
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.audit_path = Path(audit_path) if audit_path else None
        if bodies is None:
            root = self.snapshot_path.parent / "bodies" if self.snapshot_path else None
            bodies = BodyStore(root)
        self.bodies = bodies
        self.audit: List[dict] = []

    @classmethod
    def create(cls, owner_id: str, owner_params: DomainParams, construction: int, **kw):
        return cls(empty_tables(owner_id, owner_params, construction), **kw)

    @classmethod
    def load(cls, snapshot_path: os.PathLike, **kw) -> "StorageNode":
        tables = NodeTables.from_bytes(Path(snapshot_path).read_bytes())
        return cls(tables, snapshot_path=snapshot_path, **kw)

    @property
    def tables(self) -> NodeTables:
        return self._tables

    def _record(self, event: str, **fields) -> None:
        entry = {"ts": round(time.time(), 3), "event": event, **fields}
        self.audit.append(entry)
        if self.audit_path:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def _mutate(self, event: str, fn, *args, **kwargs) -> NodeTables:
        with self._lock:
            new = fn(self._tables, *args, **kwargs)
            if self.snapshot_path:
                _atomic_write(self.snapshot_path, new.to_bytes())
            self._tables = new
        self._record(event)
        return new

    def save(self) -> None:
        with self._lock:
            if self.snapshot_path:
                _atomic_write(self.snapshot_path, self._tables.to_bytes())

    def register_subscriber(self, identity, sp, rk=None):
        return self._mutate("register-subscriber", register_subscriber, identity, sp, rk)

    def define_policy(self, policy, members, rks=None):
        return self._mutate("define-policy", define_policy, policy, members, rks)

    def update_policy_members(self, policy, add=(), remove=(), rks_for_added=None):
        return self._mutate("update-policy", update_policy_members, policy, add, remove,
                            rks_for_added)

    def publish_item(self, item: SealedItem, policy: str):
        publish_item(self._tables, item, policy)  # validate before storing the body
        self.bodies.put(item)
        return self._mutate("publish", publish_item, item, policy)

    def publish_foreign_item(self, item: SealedItem, well_known_policy: str, from_owner: str):
        publish_foreign_item(self._tables, item, well_known_policy, from_owner)
        self.bodies.put(item)
        return self._mutate("publish-foreign", publish_foreign_item, item,
                            well_known_policy, from_owner)

    def install_scope_key(self, scope, sk):
        return self._mutate("install-scope-key", install_scope_key, scope, sk)

    def rotate_owner_keys(self, new_params, new_key_records, new_rks, new_scope_keys=None):
        return self._mutate("rotate", rotate_owner_keys, new_params, new_key_records,
                            new_rks, new_scope_keys)

    def serve_content_request(self, session, item: str) -> ContentResponse:
        tables = self._tables
        subscriber = getattr(session, "peer_identity", None)
        try:
            key, ref = serve_content_request(tables, session, item)
        except AccessDenied as exc:
            self._record("serve", item=item, subscriber=subscriber, result="denied",
                         code=exc.code)
            raise
        self._record("serve", item=item, subscriber=subscriber, result="ok")
        return ContentResponse(key, self.bodies.get(ref))

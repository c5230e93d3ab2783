"""Storage-node daemon serving the handshake, content requests and control ops."""
from __future__ import annotations

import asyncio
import json
import logging
import os
import threading
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from . import handshake as hs
from .content import SealedItem
from .encoding import DecodeError, decode_str, encode_str, pack_fields, pack_list, unpack_fields, unpack_list
from .handshake import CONTROL_SCOPE, ChannelError, HandshakeError
from .ibpre import DomainParams, IBPREError, LeveledCiphertext, ReencryptionKey, UserSecretKey
from .node import AccessDenied, NodeError, NodeTables, StorageNode
from .wire import Frame, FrameError, MsgType, deny_frame, read_frame, write_frame

log = logging.getLogger(__name__)

CONFIG_ENV = "ICNSHARE_CONFIG"


@dataclass
class NodeConfig:
    owner_id: str
    construction: int
    listen: str = "127.0.0.1:7411"
    snapshot_path: str = "node/snapshot.bin"
    directory_path: str = "directory.bin"
    audit_path: Optional[str] = None

    def __post_init__(self):
        if self.construction not in (1, 2):
            raise ValueError("construction must be 1 or 2")

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])

    @classmethod
    def load(cls, path: Optional[os.PathLike] = None) -> "NodeConfig":
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            raise ValueError(f"no node config given (use --config or ${CONFIG_ENV})")
        data = json.loads(Path(path).read_text())
        base = Path(path).parent
        cfg = cls(**data)
        for attr in ("snapshot_path", "directory_path", "audit_path"):
            value = getattr(cfg, attr)
            if value and not os.path.isabs(value):
                setattr(cfg, attr, str(base / value))
        return cfg

    def save(self, path: os.PathLike) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


def load_node(config: NodeConfig) -> StorageNode:
    """Refuses to start on a snapshot for another owner or construction."""
    node = StorageNode.load(config.snapshot_path, audit_path=config.audit_path)
    t = node.tables
    if t.owner_id != config.owner_id or t.construction != config.construction:
        raise NodeError("snapshot does not match the node configuration")
    return node


# -- request handling -------------------------------------------------------

def _ok(*fields: bytes) -> bytes:
    return pack_fields([b"ok", *fields])


def _err(message: str) -> bytes:
    return pack_fields([b"err", encode_str(message)])


def public_view(t: NodeTables) -> NodeTables:
    """Tables without scope keys, for the owner's export."""
    return NodeTables(t.owner_id, t.owner_params, t.construction,
                      t.subscribers, t.policies, t.shared, {})


def handle_control(node: StorageNode, verb: str, args) -> bytes:
    rks = lambda raw: [ReencryptionKey.from_bytes(b) for b in unpack_list(raw)]  # noqa: E731
    names = lambda raw: [decode_str(b) for b in unpack_list(raw)]  # noqa: E731
    if verb == "register":
        ident, params, rk = args
        node.register_subscriber(decode_str(ident), DomainParams.from_bytes(params),
                                 ReencryptionKey.from_bytes(rk) if rk else None)
    elif verb == "define-policy":
        policy, members, keys = args
        node.define_policy(decode_str(policy), names(members), rks(keys) or None)
    elif verb == "policy-update":
        policy, add, remove, keys = args
        node.update_policy_members(decode_str(policy), names(add), names(remove),
                                   rks(keys) or None)
    elif verb == "publish":
        sealed, policy = args
        node.publish_item(SealedItem.from_bytes(sealed), decode_str(policy))
    elif verb == "publish-foreign":
        sealed, policy, origin = args
        node.publish_foreign_item(SealedItem.from_bytes(sealed), decode_str(policy),
                                  decode_str(origin))
    elif verb == "install-scope-key":
        scope, sk = args
        node.install_scope_key(decode_str(scope), UserSecretKey.from_bytes(sk))
    elif verb == "export":
        t = node.tables
        return _ok(public_view(t).to_bytes(), pack_list(encode_str(s) for s in t.scope_keys))
    elif verb == "rotate":
        params, records, keys, scopes = args
        new_records = {}
        for raw in unpack_list(records):
            item, rec = unpack_fields(raw, 2)
            new_records[decode_str(item)] = LeveledCiphertext.from_bytes(rec)
        new_rks = {}
        for rk in rks(keys):
            if node.tables.construction == 1:
                new_rks[rk.dst_id] = rk
            else:
                new_rks.setdefault(rk.src_id, {})[rk.dst_id] = rk
        new_scopes = {}
        for raw in unpack_list(scopes):
            sk = UserSecretKey.from_bytes(raw)
            new_scopes[sk.id] = sk
        node.rotate_owner_keys(DomainParams.from_bytes(params), new_records, new_rks, new_scopes)
    else:
        return _err(f"unknown control verb {verb!r}")
    return _ok()


class NodeServer:
    def __init__(self, node: StorageNode, host: str = "127.0.0.1", port: int = 0):
        self.node = node
        self.host = host
        self.port = port
        self.frames_in: Counter = Counter()
        self.frames_out: Counter = Counter()
        self._server: Optional[asyncio.AbstractServer] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._thread: Optional[threading.Thread] = None
        self._tasks: set = set()

    async def _send(self, writer, frame: Frame) -> None:
        self.frames_out[frame.msg_type] += 1
        await write_frame(writer, frame)

    async def _recv(self, reader) -> Frame:
        frame = await read_frame(reader)
        self.frames_in[frame.msg_type] += 1
        return frame

    async def _handle(self, reader, writer) -> None:
        task = asyncio.current_task()
        self._tasks.add(task)
        try:
            await self._session(reader, writer)
        except (asyncio.IncompleteReadError, ConnectionError, FrameError):
            pass
        except Exception:  # a bad peer must never take the daemon down
            log.exception("connection handler failed")
        finally:
            self._tasks.discard(task)
            writer.close()

    async def _session(self, reader, writer) -> None:
        m1 = await self._recv(reader)
        try:
            sess, m2 = hs.respond(self.node.tables, m1)
        except HandshakeError as exc:
            log.info("handshake rejected: %s", exc.reason)
            await self._send(writer, deny_frame())
            return
        await self._send(writer, m2)
        try:
            hs.confirm(sess, await self._recv(reader))
        except HandshakeError as exc:
            log.info("handshake rejected: %s", exc.reason)
            await self._send(writer, deny_frame())
            return
        owner = self.node.tables.owner_id
        while True:
            frame = await self._recv(reader)
            if frame.msg_type not in (MsgType.CHANNEL, MsgType.CONTROL):
                await self._send(writer, deny_frame())
                return
            try:
                payload = hs.channel_open(sess, frame)
                verb, *args = unpack_fields(payload)
                verb = decode_str(verb)
            except (ChannelError, DecodeError, ValueError):
                await self._send(writer, deny_frame())
                return
            if frame.msg_type is MsgType.CONTROL:
                if sess.peer_identity != owner or sess.scope != CONTROL_SCOPE:
                    await self._send(writer, deny_frame())
                    return
                try:
                    reply = handle_control(self.node, verb, args)
                except (NodeError, DecodeError, IBPREError, ValueError) as exc:
                    reply = _err(str(exc))
                await self._send(writer, hs.channel_seal(sess, reply))
                continue
            if verb != "GET" or len(args) != 1:
                await self._send(writer, hs.channel_seal(sess, _err("unsupported request")))
                continue
            try:
                resp = self.node.serve_content_request(sess, decode_str(args[0]))
            except AccessDenied:
                await self._send(writer, deny_frame())
                continue
            await self._send(writer, hs.channel_seal(
                sess, _ok(resp.key.to_bytes(), resp.item.to_bytes())))

    # -- lifecycle ----------------------------------------------------------

    async def start_async(self) -> None:
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]

    async def serve_forever(self) -> None:
        await self.start_async()
        async with self._server:
            await self._server.serve_forever()

    def start(self) -> "NodeServer":
        """Serve from a background thread; returns once the port is bound."""
        ready = threading.Event()
        failure = []

        def run():
            loop = self._loop = asyncio.new_event_loop()
            try:
                loop.run_until_complete(self.start_async())
            except OSError as exc:
                failure.append(exc)
                ready.set()
                return
            ready.set()
            loop.run_forever()
            loop.close()

        self._thread = threading.Thread(target=run, daemon=True)
        self._thread.start()
        ready.wait()
        if failure:
            raise failure[0]
        return self

    async def _shutdown(self, timeout: float) -> None:
        self._server.close()
        await self._server.wait_closed()
        if self._tasks:
            await asyncio.wait(list(self._tasks), timeout=timeout)

    def stop(self, timeout: float = 5.0) -> None:
        """Stop accepting, drain in-flight sessions, then stop the loop.  Idempotent."""
        loop, self._loop = self._loop, None
        if loop is None or loop.is_closed():
            return
        fut = asyncio.run_coroutine_threadsafe(self._shutdown(timeout), loop)
        try:
            fut.result(timeout + 1)
        finally:
            loop.call_soon_threadsafe(loop.stop)
            self._thread.join(timeout + 1)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def run_node(config: NodeConfig) -> None:
    """Blocking serve loop for ``config``."""
    node = load_node(config)
    server = NodeServer(node, config.host, config.port)
    log.info("serving %s (construction %d) on %s", config.owner_id, config.construction,
             config.listen)
    try:
        asyncio.run(server.serve_forever())
    except KeyboardInterrupt:
        pass

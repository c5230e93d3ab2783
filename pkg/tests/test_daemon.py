import logging
import os
import socket

import pytest

from conftest import Party
from icnshare import ibpre
from icnshare.client import (
    ControlError,
    Denied,
    NodeConnection,
    OwnerControl,
    ProtocolError,
    fetch_item,
    rotation_material,
    scope_keys_for,
)
from icnshare.content import seal_item
from icnshare.daemon import NodeConfig, NodeServer, load_node
from icnshare.handshake import CONTROL_SCOPE, HandshakeError
from icnshare.node import NodeError, StorageNode
from icnshare.wire import MsgType

SECRET = b"quarterly numbers"


class Owner(Party):
    def rks_for(self, policy, members):
        sk_p = self.key_for(policy)
        return [ibpre.rkgen(self.params, sk_p, m.id, m.params) for m in members]


def provision(ctl, owner, construction, members, items):
    for m in members:
        rk = ibpre.rkgen(owner.params, owner.sk, m.id, m.params) if construction == 1 else None
        ctl.register_subscriber(m.id, m.params, rk)
    rks = owner.rks_for("friends", members) if construction == 2 else []
    ctl.define_policy("friends", [m.id for m in members], rks)
    ctl.install_scope_key("file:", owner.key_for("file:"))
    for item_id, data in items:
        target = owner.id if construction == 1 else "friends"
        ctl.publish(seal_item(data, item_id, target, owner.params), "friends")


@pytest.fixture(params=[1, 2], ids=["c1", "c2"])
def deployment(request, tmp_path, bob, carol):
    construction = request.param
    owner = Owner("alice")
    config = NodeConfig("alice", construction, "127.0.0.1:0",
                        str(tmp_path / "node" / "snapshot.bin"), str(tmp_path / "dir.bin"),
                        str(tmp_path / "audit.log"))
    node = StorageNode.create("alice", owner.params, construction,
                              snapshot_path=config.snapshot_path, audit_path=config.audit_path)
    node.install_scope_key(CONTROL_SCOPE, owner.key_for(CONTROL_SCOPE))
    server = NodeServer(node, "127.0.0.1", 0).start()
    with OwnerControl("127.0.0.1", server.port, "alice", owner.sk, owner.params) as ctl:
        provision(ctl, owner, construction, [bob, carol], [("file:report.pdf", SECRET)])
    yield owner, server, config
    server.stop()


def fetch(server, user, owner_params, item="file:report.pdf"):
    return fetch_item("127.0.0.1", server.port, item, user.id, user.sk, user.params,
                      owner_params, scope="file:")


def test_end_to_end(deployment, bob, carol):
    owner, server, _ = deployment
    assert fetch(server, bob, owner.params) == SECRET
    assert fetch(server, carol, owner.params) == SECRET


def test_revocation_is_one_control_frame(deployment, bob, carol):
    owner, server, _ = deployment
    with OwnerControl("127.0.0.1", server.port, "alice", owner.sk, owner.params) as ctl:
        before_in = server.frames_in[MsgType.CONTROL]
        ctl.update_policy("friends", remove=["bob"])
        assert ctl.conn.sent[MsgType.CONTROL] == 1
        assert sum(ctl.conn.sent.values()) == 3  # msg1, msg3, the CONTROL frame
        assert server.frames_in[MsgType.CONTROL] - before_in == 1
    with pytest.raises(Denied):
        fetch(server, bob, owner.params)
    assert fetch(server, carol, owner.params) == SECRET


def test_unknown_item_and_outside_scope(deployment, bob):
    owner, server, _ = deployment
    with pytest.raises(Denied):
        fetch(server, bob, owner.params, item="file:missing")
    with pytest.raises(ProtocolError):
        fetch(server, bob, owner.params, item="mail:inbox")


def test_wrong_scope_denied_at_handshake(deployment, bob):
    owner, server, _ = deployment
    with pytest.raises(Denied):
        fetch_item("127.0.0.1", server.port, "file:report.pdf", bob.id, bob.sk, bob.params,
                   owner.params)  # no key installed for the exact item id


def test_impersonated_node_rejected(deployment, bob):
    _, server, _ = deployment
    wrong_owner = Party("alice")
    with pytest.raises((Denied, HandshakeError)):
        fetch(server, bob, wrong_owner.params)


def test_control_requires_owner(deployment, bob):
    owner, server, _ = deployment
    with NodeConnection("127.0.0.1", server.port) as conn:
        conn.handshake(CONTROL_SCOPE, bob.id, bob.sk, bob.params, owner.params)
        with pytest.raises(Denied):
            conn.request(b"\x00\x00\x00\x08register", MsgType.CONTROL)
    with pytest.raises(Denied):
        OwnerControl("127.0.0.1", server.port, "alice", bob.sk, bob.params)


def test_control_errors_are_reported(deployment):
    owner, server, _ = deployment
    with OwnerControl("127.0.0.1", server.port, "alice", owner.sk, owner.params) as ctl:
        with pytest.raises(ControlError):
            ctl.define_policy("enemies", ["ghost"])
        with pytest.raises(ControlError):
            ctl._control("self-destruct")
        ctl.export()  # session still usable after errors


def test_restart_from_snapshot(deployment, bob, carol):
    owner, server, config = deployment
    with OwnerControl("127.0.0.1", server.port, "alice", owner.sk, owner.params) as ctl:
        ctl.update_policy("friends", remove=["carol"])
    server.stop()
    node = load_node(config)
    with NodeServer(node, "127.0.0.1", 0) as restarted:
        assert fetch(restarted, bob, owner.params) == SECRET
        with pytest.raises(Denied):
            fetch(restarted, carol, owner.params)
    with pytest.raises(NodeError):
        load_node(NodeConfig("mallory", config.construction, config.listen,
                             config.snapshot_path, config.directory_path))


def test_rotation_over_control(deployment, bob):
    owner, server, _ = deployment
    body_before = fetch(server, bob, owner.params)
    new_params, new_msk = ibpre.setup(128, owner.params.domain_id)
    with OwnerControl("127.0.0.1", server.port, "alice", owner.sk, owner.params) as ctl:
        tables, scopes = ctl.export()
        assert tables.scope_keys == {}
        assert set(scopes) == {CONTROL_SCOPE, "file:"}
        records, rks = rotation_material(tables, owner.params, owner.msk, new_params, new_msk)
        ctl.rotate(new_params, records, rks, scope_keys_for(scopes, new_params, new_msk))
    assert fetch(server, bob, new_params) == body_before
    with pytest.raises(Denied):
        fetch(server, bob, owner.params)  # old SP: the node can no longer open the scope ciphertext


def test_fuzz_does_not_crash(deployment, bob):
    owner, server, _ = deployment
    rng = __import__("random").Random(1)
    payloads = [os.urandom(rng.randint(0, 200)) for _ in range(40)]
    payloads += [b"\x00\x00\x00\x05\x01abcd", b"\xff\xff\xff\xff", b"\x00\x00\x00\x01\x63"]
    for blob in payloads:
        with socket.create_connection(("127.0.0.1", server.port), timeout=5) as s:
            s.sendall(blob)
            s.shutdown(socket.SHUT_WR)
            try:
                while s.recv(4096):
                    pass
            except OSError:
                pass
    assert fetch(server, bob, owner.params) == SECRET


def test_no_secrets_on_disk_or_in_logs(deployment, bob, tmp_path, caplog):
    caplog.set_level(logging.DEBUG)
    owner, server, config = deployment
    fetch(server, bob, owner.params)
    with pytest.raises(Denied):
        fetch(server, Party("dave"), owner.params)
    node = server.node
    ks = []
    for row in node.tables.shared.values():
        target = row.key_record.target_id
        sk = owner.sk if target == owner.id else owner.key_for(target)
        k = ibpre.decrypt(sk, row.key_record, owner.params)
        ks += [k.value.to_binary(), ibpre.derive_sym_key(k, "content")]
    secrets = ks + [bob.sk.sk.to_binary(), owner.sk.sk.to_binary(), SECRET]
    blobs = [p.read_bytes() for p in tmp_path.rglob("*") if p.is_file()]
    blobs.append(caplog.text.encode())
    for blob in blobs:
        for secret in secrets:
            assert secret not in blob and secret.hex().encode() not in blob

"""Owner, storage node and two subscribers over local sockets.

Alice provisions her node through the owner control channel, Bob and Carol
fetch a report, Alice revokes Bob with a single control message, then
rotates her master secret without touching the stored bodies.
"""
from icnshare import ibpre
from icnshare.client import Denied, OwnerControl, fetch_item, rotation_material, scope_keys_for
from icnshare.content import seal_item
from icnshare.daemon import NodeServer
from icnshare.handshake import CONTROL_SCOPE
from icnshare.node import StorageNode
from icnshare.wire import MsgType


class User:
    def __init__(self, name):
        self.id = name
        self.params, self.msk = ibpre.setup(128, name)
        self.sk = ibpre.extract(self.params, self.msk, name)


alice, bob, carol = User("alice"), User("bob"), User("carol")

node = StorageNode.create("alice", alice.params, construction=2)
node.install_scope_key(CONTROL_SCOPE, ibpre.extract(alice.params, alice.msk, CONTROL_SCOPE))

with NodeServer(node) as server:
    port = server.port
    with OwnerControl("127.0.0.1", port, "alice", alice.sk, alice.params) as ctl:
        for u in (bob, carol):
            ctl.register_subscriber(u.id, u.params)
        sk_friends = ibpre.extract(alice.params, alice.msk, "friends")
        ctl.define_policy("friends", ["bob", "carol"],
                          [ibpre.rkgen(alice.params, sk_friends, u.id, u.params) for u in (bob, carol)])
        ctl.install_scope_key("file:", ibpre.extract(alice.params, alice.msk, "file:"))
        ctl.publish(seal_item(b"Q3 report", "file:report.pdf", "friends", alice.params), "friends")

    def fetch(user, owner_params):
        return fetch_item("127.0.0.1", port, "file:report.pdf", user.id, user.sk, user.params,
                          owner_params, scope="file:")

    print("bob   ->", fetch(bob, alice.params))
    print("carol ->", fetch(carol, alice.params))

    with OwnerControl("127.0.0.1", port, "alice", alice.sk, alice.params) as ctl:
        ctl.update_policy("friends", remove=["bob"])
        print("revocation sent", ctl.conn.sent[MsgType.CONTROL], "CONTROL frame")
    try:
        fetch(bob, alice.params)
    except Denied as exc:
        print("bob   -> denied:", exc)
    print("carol ->", fetch(carol, alice.params))

    body_before = node.bodies.get(node.tables.shared["file:report.pdf"].body_ref).to_bytes()
    new_params, new_msk = ibpre.setup(128, "alice")
    with OwnerControl("127.0.0.1", port, "alice", alice.sk, alice.params) as ctl:
        tables, scopes = ctl.export()
        records, rks = rotation_material(tables, alice.params, alice.msk, new_params, new_msk)
        ctl.rotate(new_params, records, rks, scope_keys_for(scopes, new_params, new_msk))
    body_after = node.bodies.get(node.tables.shared["file:report.pdf"].body_ref).to_bytes()
    print("after rotation carol ->", fetch(carol, new_params),
          "| body unchanged:", body_before == body_after)

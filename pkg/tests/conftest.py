import pytest

from icnshare import handshake as hs
from icnshare import ibpre
from icnshare.content import seal_item
from icnshare.node import StorageNode


class Party:
    """A user running their own PKG."""

    def __init__(self, identity, domain=None):
        self.id = identity
        self.params, self.msk = ibpre.setup(128, domain or identity)
        self.sk = ibpre.extract(self.params, self.msk, identity)

    def key_for(self, identity):
        return ibpre.extract(self.params, self.msk, identity)


@pytest.fixture(scope="session")
def alice():
    return Party("alice")


@pytest.fixture(scope="session")
def bob():
    return Party("bob")


@pytest.fixture(scope="session")
def carol():
    return Party("carol")


def build_node(owner, construction, subscribers, policies, items=(), scope="file:", **kw):
    """``policies`` maps name -> member ids; ``items`` is (item_id, policy, plaintext)."""
    node = StorageNode.create(owner.id, owner.params, construction, **kw)
    for sub in subscribers:
        rk = ibpre.rkgen(owner.params, owner.sk, sub.id, sub.params) if construction == 1 else None
        node.register_subscriber(sub.id, sub.params, rk)
    by_id = {s.id: s for s in subscribers}
    for name, members in policies.items():
        rks = None
        if construction == 2:
            sk_p = owner.key_for(name)
            rks = [ibpre.rkgen(owner.params, sk_p, m, by_id[m].params) for m in members]
        node.define_policy(name, list(members), rks)
    for item_id, policy, data in items:
        target = owner.id if construction == 1 else policy
        node.publish_item(seal_item(data, item_id, target, owner.params), policy)
    if scope:
        node.install_scope_key(scope, owner.key_for(scope))
    return node


def establish(tables, scope, user, owner_params):
    """Run an honest in-memory handshake; returns (subscriber, node) sessions."""
    sess, m1 = hs.initiate(scope, user.id, owner_params)
    node_sess, m2 = hs.respond(tables, m1)
    m3 = hs.finalize(sess, m2, user.sk, user.params)
    hs.confirm(node_sess, m3)
    return sess, node_sess


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

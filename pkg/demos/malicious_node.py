"""How far a misbehaving storage node can go under each construction.

The node holds Bob's re-encryption key and an item that belongs to the
"family" policy, which Bob is not part of.
"""
from icnshare import ibpre
from icnshare.content import AuthenticationError, open_item_as_delegatee, seal_item

alice_params, alice_msk = ibpre.setup(128, "alice")
bob_params, bob_msk = ibpre.setup(128, "bob")
sk_alice = ibpre.extract(alice_params, alice_msk, "alice")
sk_bob = ibpre.extract(bob_params, bob_msk, "bob")

# Construction 1: item keys are encrypted to the owner, RK is owner -> Bob
item = seal_item(b"family photos", "file:family/1", "alice", alice_params)
rk = ibpre.rkgen(alice_params, sk_alice, "bob", bob_params)
leaked = open_item_as_delegatee(item, ibpre.reencrypt(rk, item.key_record), sk_bob, bob_params)
print("construction 1, node ignores the policy table ->", leaked)

# Construction 2: item keys are encrypted to the policy, RK is friends -> Bob
sk_friends = ibpre.extract(alice_params, alice_msk, "friends")
rk = ibpre.rkgen(alice_params, sk_friends, "bob", bob_params)
item = seal_item(b"family photos", "file:family/1", "family", alice_params)
try:
    ibpre.reencrypt(rk, item.key_record)
except ibpre.IdentityMismatch as exc:
    print("construction 2, honest API:", exc)

record = item.key_record
relabelled = ibpre.LeveledCiphertext(1, "friends", record.target_domain, record.c1, record.c2)
try:
    open_item_as_delegatee(item, ibpre.reencrypt(rk, relabelled), sk_bob, bob_params)
except AuthenticationError:
    print("construction 2, relabelled record: content layer rejects the garbage key")

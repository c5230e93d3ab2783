"""Identity-based proxy re-encryption across two independent key generators.

Alice and Bob each run their own PKG.  Alice encrypts a random target-group
element to herself, delegates to Bob using only his public parameters, and
a proxy turns her ciphertext into one Bob can open.
"""
from icnshare import ibpre

alice_params, alice_msk = ibpre.setup(128, "alice.example")
bob_params, bob_msk = ibpre.setup(128, "bob.example")
sk_alice = ibpre.extract(alice_params, alice_msk, "alice")
sk_bob = ibpre.extract(bob_params, bob_msk, "bob")

m = ibpre.GtPlaintext.random()
c = ibpre.encrypt(alice_params, "alice", m)
print("level-1 ciphertext:", len(c.to_bytes()), "bytes")
assert ibpre.decrypt(sk_alice, c, alice_params) == m

rk = ibpre.rkgen(alice_params, sk_alice, "bob", bob_params)
c2 = ibpre.reencrypt(rk, c)
print("level-2 ciphertext:", len(c2.to_bytes()), "bytes, now for", c2.target_id,
      "in", c2.target_domain)
assert ibpre.decrypt(sk_bob, c2, bob_params) == m

try:
    ibpre.reencrypt(rk, c2)
except ibpre.LevelMismatch as exc:
    print("second hop refused:", exc)

print("symmetric key derived from m:", ibpre.derive_sym_key(m, "content").hex())

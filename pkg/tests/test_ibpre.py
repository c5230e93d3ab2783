import secrets

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icnshare import ibpre
from icnshare.encoding import DecodeError
from icnshare.ibpre import (
    DomainMismatch,
    DomainParams,
    GtPlaintext,
    IdentityMismatch,
    LevelMismatch,
    LeveledCiphertext,
    MasterSecret,
    ReencryptionKey,
    UserSecretKey,
)


def random_id(prefix):
    return f"{prefix}-{secrets.token_hex(4)}"


def test_pairing_check_oracle(alice):
    # independent route: e(g, sk) == e(g^s, H1(id)) computed directly
    sk = alice.key_for("some:item")
    lhs = alice.params.g.pair(sk.sk)
    rhs = alice.params.g_s.pair(ibpre.h1("some:item"))
    assert lhs == rhs
    assert sk.verify(alice.params)


def test_key_does_not_verify_elsewhere(alice, bob):
    sk = alice.key_for("x")
    assert not sk.verify(bob.params)
    foreign = UserSecretKey("x", sk.sk, bob.params.domain_id)
    assert not foreign.verify(bob.params)


def test_level1_matches_master_secret_route(alice):
    # c2 / m must equal e(c1, H1(id))^s, computed from the scalar instead of SK
    m = GtPlaintext.random()
    c = ibpre.encrypt(alice.params, "alice", m)
    assert c.c2 / m.value == c.c1.pair(ibpre.h1("alice")) ** alice.msk.scalar


def test_intra_domain_round_trips(alice):
    for _ in range(10):
        dst = random_id("u")
        sk_dst = alice.key_for(dst)
        m = GtPlaintext.random()
        c = ibpre.encrypt(alice.params, "alice", m)
        assert ibpre.decrypt(alice.sk, c, alice.params) == m
        rk = ibpre.rkgen(alice.params, alice.sk, dst, alice.params)
        c2 = ibpre.reencrypt(rk, c)
        assert c2.level == 2 and c2.target_id == dst
        assert ibpre.decrypt(sk_dst, c2, alice.params) == m


def test_inter_domain_round_trips(alice, bob):
    rk = ibpre.rkgen(alice.params, alice.sk, "bob", bob.params)
    for _ in range(10):
        m = GtPlaintext.random()
        c2 = ibpre.reencrypt(rk, ibpre.encrypt(alice.params, "alice", m))
        assert c2.target_domain == "bob"
        assert ibpre.decrypt(bob.sk, c2, bob.params) == m


def test_wrong_key_yields_other_plaintext(alice):
    m = GtPlaintext.random()
    c = ibpre.encrypt(alice.params, "alice", m)
    wrong = alice.key_for("mallory")
    assert ibpre.decrypt(wrong, c, alice.params) != m


def test_other_pkg_same_identity_cannot_decrypt(alice):
    twin_params, twin_msk = ibpre.setup(128, "alice")  # same labels, different secret
    twin_sk = ibpre.extract(twin_params, twin_msk, "alice")
    m = GtPlaintext.random()
    c = ibpre.encrypt(alice.params, "alice", m)
    assert ibpre.decrypt(twin_sk, c, twin_params) != m


def test_single_hop(alice, bob, carol):
    rk_ab = ibpre.rkgen(alice.params, alice.sk, "bob", bob.params)
    rk_bc = ibpre.rkgen(bob.params, bob.sk, "carol", carol.params)
    c2 = ibpre.reencrypt(rk_ab, ibpre.encrypt(alice.params, "alice", GtPlaintext.random()))
    with pytest.raises(LevelMismatch):
        ibpre.reencrypt(rk_bc, c2)


def test_reencrypt_checks_delegator(alice, bob):
    rk = ibpre.rkgen(alice.params, alice.key_for("policy-p"), "bob", bob.params)
    c = ibpre.encrypt(alice.params, "policy-q", GtPlaintext.random())
    with pytest.raises(IdentityMismatch):
        ibpre.reencrypt(rk, c)
    other = ibpre.encrypt(bob.params, "policy-p", GtPlaintext.random())
    with pytest.raises(DomainMismatch):
        ibpre.reencrypt(rk, other)


def test_decrypt_checks_domain(alice, bob):
    c = ibpre.encrypt(alice.params, "bob", GtPlaintext.random())
    with pytest.raises(DomainMismatch):
        ibpre.decrypt(bob.sk, c, bob.params)
    with pytest.raises(DomainMismatch):
        ibpre.decrypt(bob.sk, c, alice.params)


def test_extract_rejects_foreign_master(alice, bob):
    with pytest.raises(DomainMismatch):
        ibpre.extract(alice.params, bob.msk, "x")


def test_security_levels():
    for level in ibpre.SUPPORTED_SECURITY_LEVELS:
        params, _ = ibpre.setup(level, "d")
        assert params.hash_suite_id == ibpre.HASH_SUITE
    with pytest.raises(ibpre.UnsupportedSecurityLevel):
        ibpre.setup(256, "d")


def test_serialization_round_trips(alice, bob):
    m = GtPlaintext.random()
    c = ibpre.encrypt(alice.params, "alice", m)
    rk = ibpre.rkgen(alice.params, alice.sk, "bob", bob.params)
    c2 = ibpre.reencrypt(rk, c)
    for obj in (alice.params, alice.msk, alice.sk, m, c, c2, rk):
        blob = obj.to_bytes()
        again = type(obj).from_bytes(blob)
        assert again.to_bytes() == blob
    assert ibpre.decrypt(bob.sk, LeveledCiphertext.from_bytes(c2.to_bytes()), bob.params) == m
    rk2 = ReencryptionKey.from_bytes(rk.to_bytes())
    assert ibpre.decrypt(bob.sk, ibpre.reencrypt(rk2, c), bob.params) == m


def test_master_secret_repr_is_redacted(alice):
    assert str(alice.msk.scalar) not in repr(alice.msk)
    assert "redacted" in repr(alice.msk)


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=600))
def test_ciphertext_decode_is_total(blob):
    for cls in (LeveledCiphertext, DomainParams, ReencryptionKey, UserSecretKey, MasterSecret):
        try:
            cls.from_bytes(blob)
        except DecodeError:
            pass


def test_corrupted_points_rejected(alice):
    c = ibpre.encrypt(alice.params, "alice", GtPlaintext.random())
    blob = c.to_bytes()
    point = c.c1.to_binary()
    start = blob.index(point)
    for offset in (0, 1, 20, len(point) - 1):
        bad = bytearray(blob)
        bad[start + offset] ^= 0x55
        try:
            decoded = LeveledCiphertext.from_bytes(bytes(bad))
        except DecodeError:
            continue
        # a flip can land on another valid point; it must then differ
        assert decoded.c1.is_valid() and decoded.c1 != c.c1


def test_derive_sym_key():
    m = GtPlaintext.random()
    assert len(ibpre.derive_sym_key(m, "a")) == 16
    assert len(ibpre.derive_sym_key(m, "a", 256)) == 32
    assert ibpre.derive_sym_key(m, "a") != ibpre.derive_sym_key(m, "b")
    with pytest.raises(ValueError):
        ibpre.derive_sym_key(m, "a", 64)


def test_identity_validation(alice):
    with pytest.raises(ValueError):
        ibpre.encrypt(alice.params, "", GtPlaintext.random())
    with pytest.raises(ValueError):
        ibpre.setup(128, "")

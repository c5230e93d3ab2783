"""Identity-based encryption with single-hop, inter-domain proxy re-encryption.

The scheme runs over the BLS12-381 pairing ``e: G1 x G2 -> GT``.  Each domain
(one user's private key generator) publishes ``g`` and ``g^s``; identity keys
are ``H1(id)^s`` in G2.

    encrypt:    c1 = g^r,  c2 = m * e(g^s, H1(id))^r
    rkgen:      r1 = H3(X) * sk_src^-1,  wrapped_x = encrypt(dst, X)
    reencrypt:  c2' = c2 * e(c1, r1)
    decrypt-2:  X = decrypt(wrapped_x),  m = c2' / e(c1, H3(X))

Wrong-key decryption is not detectable at this layer; callers rely on the
authenticated symmetric layer built on top of it.
"""
from __future__ import annotations

import secrets
from dataclasses import dataclass
from typing import Optional

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from petrelic.multiplicative.pairing import (
    G1,
    G2,
    GT,
    G1Element,
    G2Element,
    GTElement,
)

from .encoding import (
    DecodeError,
    Tag,
    check_identity,
    decode_str,
    decode_uint,
    encode_str,
    encode_uint,
    pack,
    unpack,
)

HASH_SUITE = "BLS12381G2-RELIC-SHA256-HKDF:v1"
SUPPORTED_SECURITY_LEVELS = (80, 112, 128)

ORDER = int(G1.order())
_G1_LEN = 49
_G2_LEN = 97
_GT_LEN = 384
_SCALAR_LEN = 32

_H1_TAG = b"icnshare:v1:H1:"
_H3_TAG = b"icnshare:v1:H3:"
_KDF_SALT = b"icnshare:v1:KDF"


class IBPREError(Exception):
    pass


class UnsupportedSecurityLevel(IBPREError):
    pass


class LevelMismatch(IBPREError):
    """Ciphertext level is not valid for the requested operation."""


class IdentityMismatch(IBPREError):
    pass


class DomainMismatch(IBPREError):
    pass


# -- group helpers ----------------------------------------------------------

def random_scalar() -> int:
    return secrets.randbelow(ORDER - 1) + 1


def h1(identity: str) -> G2Element:
    return G2.hash_to_point(_H1_TAG + encode_str(check_identity(identity)))


def h3(x: GTElement) -> G2Element:
    return G2.hash_to_point(_H3_TAG + x.to_binary())


def _decode_point(raw: bytes, element_type, length: int, name: str):
    if len(raw) != length:
        raise DecodeError(f"{name} encoding must be {length} bytes")
    if element_type is not GTElement and raw[0] not in (2, 3):
        raise DecodeError(f"{name} must use compressed encoding")
    point = element_type.from_binary(raw)
    # RELIC decoders accept junk silently; demand canonical re-encoding.
    if point.to_binary() != raw:
        raise DecodeError(f"non-canonical {name} encoding")
    if element_type is not GTElement and not point.is_valid():
        raise DecodeError(f"{name} not on curve")
    return point


def _g1(raw: bytes) -> G1Element:
    return _decode_point(raw, G1Element, _G1_LEN, "G1 element")


def _g2(raw: bytes) -> G2Element:
    return _decode_point(raw, G2Element, _G2_LEN, "G2 element")


def _gt(raw: bytes) -> GTElement:
    return _decode_point(raw, GTElement, _GT_LEN, "GT element")


# -- types ------------------------------------------------------------------

@dataclass(frozen=True)
class DomainParams:
    domain_id: str
    g: G1Element
    g_s: G1Element
    hash_suite_id: str = HASH_SUITE

    def to_bytes(self) -> bytes:
        return pack(Tag.DOMAIN_PARAMS, [
            encode_str(self.domain_id), self.g.to_binary(),
            self.g_s.to_binary(), encode_str(self.hash_suite_id),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "DomainParams":
        dom, g, g_s, suite = unpack(data, Tag.DOMAIN_PARAMS, 4)
        suite = decode_str(suite)
        if suite != HASH_SUITE:
            raise DecodeError(f"unknown hash suite {suite!r}")
        g = _g1(g)
        if g != G1.generator():
            raise DecodeError("non-canonical generator")
        g_s = _g1(g_s)
        if g_s.is_neutral_element():
            raise DecodeError("g_s is the identity element")
        return cls(check_identity(decode_str(dom)), g, g_s, suite)


@dataclass(frozen=True, repr=False)
class MasterSecret:
    scalar: int

    def __post_init__(self):
        if not 1 <= self.scalar <= ORDER - 1:
            raise ValueError("master secret out of range")

    def __repr__(self):
        return "MasterSecret(<redacted>)"

    def to_bytes(self) -> bytes:
        return pack(Tag.MASTER_SECRET, [encode_uint(self.scalar, _SCALAR_LEN)])

    @classmethod
    def from_bytes(cls, data: bytes) -> "MasterSecret":
        (raw,) = unpack(data, Tag.MASTER_SECRET, 1)
        s = decode_uint(raw, _SCALAR_LEN)
        if not 1 <= s <= ORDER - 1:
            raise DecodeError("master secret out of range")
        return cls(s)


@dataclass(frozen=True, repr=False)
class UserSecretKey:
    id: str
    sk: G2Element
    domain_id: str

    def __repr__(self):
        return f"UserSecretKey(id={self.id!r}, domain_id={self.domain_id!r})"

    def verify(self, params: DomainParams) -> bool:
        """Pairing check e(g, sk) == e(g^s, H1(id))."""
        if params.domain_id != self.domain_id:
            return False
        return params.g.pair(self.sk) == params.g_s.pair(h1(self.id))

    def to_bytes(self) -> bytes:
        return pack(Tag.USER_SECRET_KEY, [
            encode_str(self.id), self.sk.to_binary(), encode_str(self.domain_id),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "UserSecretKey":
        ident, sk, dom = unpack(data, Tag.USER_SECRET_KEY, 3)
        return cls(check_identity(decode_str(ident)), _g2(sk),
                   check_identity(decode_str(dom)))


@dataclass(frozen=True)
class GtPlaintext:
    value: GTElement

    @classmethod
    def random(cls) -> "GtPlaintext":
        return cls(GT.generator() ** random_scalar())

    def to_bytes(self) -> bytes:
        return pack(Tag.GT_PLAINTEXT, [self.value.to_binary()])

    @classmethod
    def from_bytes(cls, data: bytes) -> "GtPlaintext":
        (raw,) = unpack(data, Tag.GT_PLAINTEXT, 1)
        return cls(_gt(raw))


@dataclass(frozen=True)
class LeveledCiphertext:
    level: int
    target_id: str
    target_domain: str
    c1: G1Element
    c2: GTElement
    wrap: Optional["LeveledCiphertext"] = None

    def __post_init__(self):
        if self.level == 1 and self.wrap is not None:
            raise ValueError("level-1 ciphertext cannot carry a wrap")
        if self.level == 2 and (self.wrap is None or self.wrap.level != 1):
            raise ValueError("level-2 ciphertext needs a level-1 wrap")
        if self.level not in (1, 2):
            raise ValueError(f"invalid level {self.level}")

    def to_bytes(self) -> bytes:
        return pack(Tag.CIPHERTEXT, [
            bytes([self.level]), encode_str(self.target_id),
            encode_str(self.target_domain), self.c1.to_binary(),
            self.c2.to_binary(), self.wrap.to_bytes() if self.wrap else b"",
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "LeveledCiphertext":
        level, tid, dom, c1, c2, wrap = unpack(data, Tag.CIPHERTEXT, 6)
        if len(level) != 1 or level[0] not in (1, 2):
            raise DecodeError("invalid ciphertext level")
        c1 = _g1(c1)
        if c1.is_neutral_element():
            raise DecodeError("c1 is the identity element")
        inner = cls.from_bytes(wrap) if wrap else None
        try:
            return cls(level[0], check_identity(decode_str(tid)),
                       check_identity(decode_str(dom)), c1, _gt(c2), inner)
        except ValueError as exc:
            raise DecodeError(str(exc)) from exc


@dataclass(frozen=True)
class ReencryptionKey:
    src_id: str
    src_domain: str
    dst_id: str
    dst_domain: str
    r1: G2Element
    wrapped_x: LeveledCiphertext

    def to_bytes(self) -> bytes:
        return pack(Tag.REENCRYPTION_KEY, [
            encode_str(self.src_id), encode_str(self.src_domain),
            encode_str(self.dst_id), encode_str(self.dst_domain),
            self.r1.to_binary(), self.wrapped_x.to_bytes(),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "ReencryptionKey":
        src, sdom, dst, ddom, r1, wrapped = unpack(data, Tag.REENCRYPTION_KEY, 6)
        wrapped_x = LeveledCiphertext.from_bytes(wrapped)
        if wrapped_x.level != 1:
            raise DecodeError("wrapped X must be level 1")
        return cls(check_identity(decode_str(src)), check_identity(decode_str(sdom)),
                   check_identity(decode_str(dst)), check_identity(decode_str(ddom)),
                   _g2(r1), wrapped_x)


# -- algorithms -------------------------------------------------------------

def setup(security_level: int = 128, domain_id: str = "default"):
    """Run a fresh private key generator; returns ``(params, msk)``."""
    if security_level not in SUPPORTED_SECURITY_LEVELS:
        raise UnsupportedSecurityLevel(
            f"security level {security_level} not supported "
            f"(choose from {SUPPORTED_SECURITY_LEVELS})")
    check_identity(domain_id)
    msk = MasterSecret(random_scalar())
    g = G1.generator()
    return DomainParams(domain_id, g, g ** msk.scalar), msk


def extract(params: DomainParams, msk: MasterSecret, identity: str) -> UserSecretKey:
    check_identity(identity)
    if params.g ** msk.scalar != params.g_s:
        raise DomainMismatch("master secret does not belong to these parameters")
    return UserSecretKey(identity, h1(identity) ** msk.scalar, params.domain_id)


def encrypt(params: DomainParams, identity: str, m: GtPlaintext) -> LeveledCiphertext:
    r = random_scalar()
    mask = params.g_s.pair(h1(identity)) ** r
    return LeveledCiphertext(1, check_identity(identity), params.domain_id,
                             params.g ** r, m.value * mask)


def decrypt(sk: UserSecretKey, c: LeveledCiphertext,
            own_params: DomainParams) -> GtPlaintext:
    if sk.domain_id != own_params.domain_id:
        raise DomainMismatch("secret key was not issued under own_params")
    if c.level == 1:
        if c.target_domain != own_params.domain_id:
            raise DomainMismatch(
                f"ciphertext is for domain {c.target_domain!r}, "
                f"key is for {own_params.domain_id!r}")
        return GtPlaintext(c.c2 / c.c1.pair(sk.sk))
    if c.level == 2:
        if c.wrap.target_domain != own_params.domain_id:
            raise DomainMismatch("re-encrypted ciphertext targets another domain")
        x = decrypt(sk, c.wrap, own_params)
        return GtPlaintext(c.c2 / c.c1.pair(h3(x.value)))
    raise LevelMismatch(f"invalid level {c.level}")


def rkgen(src_params: DomainParams, sk_src: UserSecretKey, dst_id: str,
          dst_params: DomainParams) -> ReencryptionKey:
    """Delegate ``sk_src.id -> dst_id`` using only public data of the delegatee."""
    if sk_src.domain_id != src_params.domain_id:
        raise DomainMismatch("source key was not issued under src_params")
    x = GtPlaintext.random()
    r1 = h3(x.value) * sk_src.sk.inverse()
    return ReencryptionKey(sk_src.id, src_params.domain_id, check_identity(dst_id),
                           dst_params.domain_id, r1, encrypt(dst_params, dst_id, x))


def reencrypt(rk: ReencryptionKey, c: LeveledCiphertext) -> LeveledCiphertext:
    if c.level != 1:
        raise LevelMismatch("only level-1 ciphertexts can be re-encrypted")
    if c.target_id != rk.src_id:
        raise IdentityMismatch(
            f"ciphertext targets {c.target_id!r}, key delegates {rk.src_id!r}")
    if c.target_domain != rk.src_domain:
        raise DomainMismatch("ciphertext and re-encryption key domains differ")
    return LeveledCiphertext(2, rk.dst_id, rk.dst_domain, c.c1,
                             c.c2 * c.c1.pair(rk.r1), rk.wrapped_x)


def derive_sym_key(m: GtPlaintext, context: str, bits: int = 128) -> bytes:
    """Hash a target-group element to an ``bits``-bit symmetric key."""
    if bits not in (128, 256):
        raise ValueError("symmetric key size must be 128 or 256 bits")
    return HKDF(algorithm=hashes.SHA256(), length=bits // 8, salt=_KDF_SALT,
                info=encode_str(context)).derive(m.value.to_binary())

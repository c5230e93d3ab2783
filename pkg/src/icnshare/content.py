"""Hybrid sealing of content items.

A fresh random GT element ``K`` is IBE-encrypted to the target identity and
hashed into an AES-GCM key that protects the payload.  The item identifier is
bound as associated data.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import ibpre
from .encoding import DecodeError, Tag, check_identity, decode_str, encode_str, pack, unpack
from .ibpre import DomainParams, GtPlaintext, LeveledCiphertext, UserSecretKey

CONTENT_CONTEXT = "content"
NONCE_LEN = 12


class ContentError(Exception):
    pass


class AuthenticationError(ContentError):
    """Wrong key or tampered item: the AEAD tag did not verify."""


class MalformedItem(ContentError):
    pass


@dataclass(frozen=True)
class SealedItem:
    item_id: str
    nonce: bytes
    body: bytes
    key_record: Optional[LeveledCiphertext] = None

    def without_key(self) -> "SealedItem":
        return replace(self, key_record=None)

    def body_ref(self) -> str:
        """Content address of the key-less item encoding."""
        return hashlib.sha256(self.without_key().to_bytes()).hexdigest()

    def to_bytes(self) -> bytes:
        key = self.key_record.to_bytes() if self.key_record is not None else b""
        return pack(Tag.SEALED_ITEM, [encode_str(self.item_id), self.nonce, key, self.body])

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedItem":
        item_id, nonce, key, body = unpack(data, Tag.SEALED_ITEM, 4)
        if len(nonce) != NONCE_LEN:
            raise DecodeError("bad nonce length")
        record = LeveledCiphertext.from_bytes(key) if key else None
        return cls(check_identity(decode_str(item_id)), nonce, body, record)


def _aad(item_id: str) -> bytes:
    return b"icnshare:item:" + encode_str(item_id)


def seal_item(plaintext: bytes, item_id: str, target_id: str,
              target_params: DomainParams) -> SealedItem:
    check_identity(item_id)
    k = GtPlaintext.random()
    key = ibpre.derive_sym_key(k, CONTENT_CONTEXT)
    nonce = os.urandom(NONCE_LEN)
    body = AESGCM(key).encrypt(nonce, bytes(plaintext), _aad(item_id))
    return SealedItem(item_id, nonce, body, ibpre.encrypt(target_params, target_id, k))


def open_with_key(item: SealedItem, k: GtPlaintext) -> bytes:
    if len(item.nonce) != NONCE_LEN or len(item.body) < 16:
        raise MalformedItem("sealed item is too short")
    key = ibpre.derive_sym_key(k, CONTENT_CONTEXT)
    try:
        return AESGCM(key).decrypt(item.nonce, item.body, _aad(item.item_id))
    except InvalidTag:
        raise AuthenticationError("item failed authentication") from None


def open_item_as_owner(item: SealedItem, sk: UserSecretKey,
                       params: DomainParams) -> bytes:
    record = item.key_record
    if record is None:
        raise MalformedItem("item has no key record")
    if record.level != 1:
        raise ibpre.LevelMismatch("owner-side opening needs a level-1 key record")
    return open_with_key(item, ibpre.decrypt(sk, record, params))


def open_item_as_delegatee(item: SealedItem, reencrypted_key: LeveledCiphertext,
                           sk: UserSecretKey, params: DomainParams) -> bytes:
    if reencrypted_key.level != 2:
        raise ibpre.LevelMismatch("delegatee opening needs a re-encrypted key")
    if reencrypted_key.target_id != sk.id:
        raise ibpre.IdentityMismatch("re-encrypted key targets another identity")
    return open_with_key(item, ibpre.decrypt(sk, reencrypted_key, params))

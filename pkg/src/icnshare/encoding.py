"""Canonical binary encoding.

Every serialized object is ``version || tag || field*`` where each field is a
4-byte big-endian length followed by the raw bytes.  Nested objects are
embedded as their own full canonical encoding.
"""
from __future__ import annotations

import struct
from enum import IntEnum
from typing import Iterable, List, Optional, Sequence

VERSION = 1
MAX_FIELD = 1 << 30


class DecodeError(ValueError):
    """Raised for any malformed canonical encoding."""


class Tag(IntEnum):
    DOMAIN_PARAMS = 1
    MASTER_SECRET = 2
    IDENTITY = 3
    USER_SECRET_KEY = 4
    GT_PLAINTEXT = 5
    CIPHERTEXT = 6
    REENCRYPTION_KEY = 7
    SEALED_ITEM = 8
    NODE_TABLES = 9
    DIRECTORY = 10
    LIST = 11


def pack_fields(fields: Iterable[bytes]) -> bytes:
    out = bytearray()
    for f in fields:
        f = bytes(f)
        out += struct.pack(">I", len(f))
        out += f
    return bytes(out)


def unpack_fields(data: bytes, count: Optional[int] = None) -> List[bytes]:
    """Split a length-prefixed field list; strict about trailing bytes."""
    fields = []
    pos = 0
    n = len(data)
    while pos < n:
        if n - pos < 4:
            raise DecodeError("truncated field length")
        (length,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if length > MAX_FIELD or length > n - pos:
            raise DecodeError("field length exceeds available bytes")
        fields.append(bytes(data[pos:pos + length]))
        pos += length
    if count is not None and len(fields) != count:
        raise DecodeError(f"expected {count} fields, got {len(fields)}")
    return fields


def pack(tag: Tag, fields: Sequence[bytes]) -> bytes:
    return bytes([VERSION, int(tag)]) + pack_fields(fields)


def unpack(data: bytes, tag: Tag, count: Optional[int] = None) -> List[bytes]:
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise DecodeError("expected bytes")
    data = bytes(data)
    if len(data) < 2:
        raise DecodeError("missing header")
    if data[0] != VERSION:
        raise DecodeError(f"unsupported encoding version {data[0]}")
    if data[1] != int(tag):
        raise DecodeError(f"expected tag {tag.name}, got {data[1]}")
    return unpack_fields(data[2:], count)


def pack_list(items: Iterable[bytes]) -> bytes:
    return pack(Tag.LIST, list(items))


def unpack_list(data: bytes) -> List[bytes]:
    return unpack(data, Tag.LIST)


def encode_str(value: str) -> bytes:
    return value.encode("utf-8")


def decode_str(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError("invalid UTF-8") from exc


def encode_uint(value: int, width: int) -> bytes:
    return value.to_bytes(width, "big")


def decode_uint(raw: bytes, width: int) -> int:
    if len(raw) != width:
        raise DecodeError(f"expected {width}-byte integer")
    return int.from_bytes(raw, "big")


def encode_identity(identity: str) -> bytes:
    return pack(Tag.IDENTITY, [encode_str(check_identity(identity))])


def decode_identity(data: bytes) -> str:
    (raw,) = unpack(data, Tag.IDENTITY, 1)
    return check_identity(decode_str(raw))


def check_identity(identity) -> str:
    """Identities are non-empty strings compared byte-exact."""
    if not isinstance(identity, str) or not identity:
        raise ValueError("identity must be a non-empty string")
    return identity

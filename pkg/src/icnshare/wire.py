"""Length-prefixed frames carried over a reliable byte stream.

    frame   = length:u32be || msg_type:u8 || field*
    field   = length:u32be || bytes

``length`` counts the type byte plus the field list.
"""
from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Tuple

from .encoding import DecodeError, pack_fields, unpack_fields

MAX_FRAME = 64 * 1024 * 1024


class MsgType(IntEnum):
    MSG1 = 1
    MSG2 = 2
    MSG3 = 3
    CHANNEL = 4
    CONTROL = 5
    DENY = 6


FIELD_COUNTS = {
    MsgType.MSG1: 4,     # scope, C_scope(k), Enc_k(r, h, DH_U, U), H_h
    MsgType.MSG2: 3,     # C_U(k'), Enc_k'(r, r', DH_Node), H_h
    MsgType.MSG3: 2,     # Enc_s(r'), H_h
    MsgType.CHANNEL: 3,  # counter, Enc_s(payload), H_h
    MsgType.CONTROL: 3,
    MsgType.DENY: 1,
}


class FrameError(DecodeError):
    pass


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    fields: Tuple[bytes, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(bytes(f) for f in self.fields))

    def body(self) -> bytes:
        """Type byte plus field list; the span a handshake MAC is computed over."""
        return bytes([int(self.msg_type)]) + pack_fields(self.fields)


def encode_frame(frame: Frame) -> bytes:
    expected = FIELD_COUNTS[frame.msg_type]
    if len(frame.fields) != expected:
        raise FrameError(f"{frame.msg_type.name} needs {expected} fields")
    body = frame.body()
    if len(body) > MAX_FRAME:
        raise FrameError("frame too large")
    return struct.pack(">I", len(body)) + body


def decode_body(body: bytes) -> Frame:
    if not body:
        raise FrameError("empty frame")
    try:
        msg_type = MsgType(body[0])
    except ValueError:
        raise FrameError(f"unknown message type {body[0]}") from None
    try:
        fields = unpack_fields(body[1:], FIELD_COUNTS[msg_type])
    except DecodeError as exc:
        raise FrameError(str(exc)) from None
    return Frame(msg_type, tuple(fields))


def decode_frame(data: bytes) -> Frame:
    """Decode exactly one frame; trailing or missing bytes are errors."""
    if len(data) < 4:
        raise FrameError("truncated frame header")
    (length,) = struct.unpack_from(">I", data, 0)
    if length > MAX_FRAME:
        raise FrameError("frame too large")
    if len(data) - 4 != length:
        raise FrameError(f"frame length {length} does not match {len(data) - 4} bytes")
    return decode_body(data[4:])


def deny_frame(reason: str = "not found or not authorized") -> Frame:
    return Frame(MsgType.DENY, (reason.encode(),))


def send_frame(sock: socket.socket, frame: Frame) -> None:
    sock.sendall(encode_frame(frame))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks: List[bytes] = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> Frame:
    (length,) = struct.unpack(">I", _recv_exact(sock, 4))
    if length > MAX_FRAME:
        raise FrameError("frame too large")
    return decode_body(_recv_exact(sock, length))


async def read_frame(reader) -> Frame:
    header = await reader.readexactly(4)
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise FrameError("frame too large")
    return decode_body(await reader.readexactly(length))


async def write_frame(writer, frame: Frame) -> None:
    writer.write(encode_frame(frame))
    await writer.drain()

"""Identity -> system-parameter resolution.

The directory is trusted; records carry a per-identity version that grows by
one on every publish.
"""
from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict

from filelock import FileLock

from .encoding import Tag, check_identity, decode_str, decode_uint, encode_str, encode_uint, pack, pack_list, unpack
from .ibpre import DomainParams


class UnknownIdentity(KeyError):
    pass


@dataclass(frozen=True)
class DirectoryRecord:
    identity: str
    params: DomainParams
    version: int

    def to_bytes(self) -> bytes:
        return pack_list([encode_str(self.identity), self.params.to_bytes(),
                          encode_uint(self.version, 8)])

    @classmethod
    def from_bytes(cls, data: bytes) -> "DirectoryRecord":
        ident, params, version = unpack(data, Tag.LIST, 3)
        return cls(check_identity(decode_str(ident)), DomainParams.from_bytes(params),
                   decode_uint(version, 8))


def _encode(records: Dict[str, DirectoryRecord]) -> bytes:
    return pack(Tag.DIRECTORY, [r.to_bytes() for r in records.values()])


def _decode(data: bytes) -> Dict[str, DirectoryRecord]:
    records = {}
    for raw in unpack(data, Tag.DIRECTORY):
        rec = DirectoryRecord.from_bytes(raw)
        records[rec.identity] = rec
    return records


class Directory:
    """In-memory directory."""

    def __init__(self):
        self._records: Dict[str, DirectoryRecord] = {}
        self._lock = threading.Lock()

    def publish_params(self, identity: str, params: DomainParams) -> int:
        check_identity(identity)
        with self._lock:
            prev = self._records.get(identity)
            version = prev.version + 1 if prev else 1
            self._records[identity] = DirectoryRecord(identity, params, version)
            return version

    def lookup_record(self, identity: str) -> DirectoryRecord:
        rec = self._records.get(identity)
        if rec is None:
            raise UnknownIdentity(identity)
        return rec

    def lookup_params(self, identity: str) -> DomainParams:
        return self.lookup_record(identity).params


class FileDirectory(Directory):
    """Directory persisted to one file; safe across processes via a lock file."""

    def __init__(self, path: os.PathLike):
        super().__init__()
        self.path = Path(path)
        self._flock = FileLock(str(self.path) + ".lock")

    def _load(self) -> Dict[str, DirectoryRecord]:
        if not self.path.exists():
            return {}
        return _decode(self.path.read_bytes())

    def publish_params(self, identity: str, params: DomainParams) -> int:
        check_identity(identity)
        with self._lock, self._flock:
            records = self._load()
            prev = records.get(identity)
            version = prev.version + 1 if prev else 1
            records[identity] = DirectoryRecord(identity, params, version)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self.path.with_name(self.path.name + ".tmp")
            tmp.write_bytes(_encode(records))
            os.replace(tmp, self.path)
            self._records = records
            return version

    def lookup_record(self, identity: str) -> DirectoryRecord:
        with self._flock:
            self._records = self._load()
        return super().lookup_record(identity)

"""
Write-ahead log for validator state.

The log is a flat sequence of frames:

    [u32 payload length][u32 crc32(payload)][payload]

and each payload starts with a record kind (u8) and a virtual time (u64),
little-endian like the block encoding. Writes only ever append; recovery
scans from the start.

A frame cut short at the end of the log (a crash mid-write) is dropped
with a warning. A frame that fails its checksum with more data behind it
means the log is damaged and recovery stops with WalCorruptionError.
"""
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import BinaryIO, Iterator, List, Optional
import io
import struct
import zlib

from dagbft.core.block import DIGEST_SIZE, Block, Transaction
from dagbft.core.encoding import (
    decode_signed_block,
    decode_transaction,
    encode_signed_block,
    encode_transaction,
)
from dagbft.errors import EncodingError, WalCorruptionError
from dagbft.logs import get_logger

logger = get_logger(__name__)

_FRAME = struct.Struct("<II")
_HEAD = struct.Struct("<BQ")
_ROUND = struct.Struct("<Q")


class RecordKind(IntEnum):
    BLOCK = 1  # accepted block (own proposals included)
    RECEIVED = 2  # block buffered for missing parents or a future timestamp
    SUBMIT = 3  # client transaction queued
    THRESHOLD = 4  # first time a round reached 2f+1 authors
    DROP = 5  # queued transaction discarded at proposal time
    COMMIT = 6  # a commit pass decided at least one slot


@dataclass(frozen=True)
class WalRecord:
    kind: RecordKind
    time: int
    block: Optional[Block] = None
    tx: Optional[Transaction] = None
    tx_id: Optional[bytes] = None
    round: Optional[int] = None

    def encode(self) -> bytes:
        head = _HEAD.pack(int(self.kind), self.time)
        if self.kind in (RecordKind.BLOCK, RecordKind.RECEIVED):
            assert self.block is not None
            return head + encode_signed_block(self.block)
        if self.kind == RecordKind.SUBMIT:
            assert self.tx is not None
            return head + encode_transaction(self.tx)
        if self.kind == RecordKind.THRESHOLD:
            assert self.round is not None
            return head + _ROUND.pack(self.round)
        if self.kind == RecordKind.DROP:
            assert self.tx_id is not None and len(self.tx_id) == DIGEST_SIZE
            return head + self.tx_id
        return head

    @classmethod
    def decode(cls, payload: bytes) -> "WalRecord":
        if len(payload) < _HEAD.size:
            raise EncodingError("record shorter than its header")
        raw_kind, time = _HEAD.unpack_from(payload)
        body = payload[_HEAD.size :]
        try:
            kind = RecordKind(raw_kind)
        except ValueError:
            raise EncodingError(f"unknown record kind {raw_kind}") from None
        if kind in (RecordKind.BLOCK, RecordKind.RECEIVED):
            return cls(kind, time, block=decode_signed_block(body))
        if kind == RecordKind.SUBMIT:
            return cls(kind, time, tx=decode_transaction(body))
        if kind == RecordKind.THRESHOLD:
            if len(body) != _ROUND.size:
                raise EncodingError("bad threshold record")
            return cls(kind, time, round=_ROUND.unpack(body)[0])
        if kind == RecordKind.DROP:
            if len(body) != DIGEST_SIZE:
                raise EncodingError("bad drop record")
            return cls(kind, time, tx_id=body)
        return cls(kind, time)


class WriteAheadLog:
    """
    Append-only record log over a binary stream.

    Use WriteAheadLog.in_memory() in simulations and WriteAheadLog.open(path)
    for a file on disk.
    """

    def __init__(self, stream: BinaryIO, name: str = "<memory>"):
        self._stream = stream
        self.name = name
        self.records_written = 0

    @classmethod
    def in_memory(cls, data: bytes = b"") -> "WriteAheadLog":
        stream = io.BytesIO()
        stream.write(data)
        return cls(stream)

    @classmethod
    def open(cls, path: Path) -> "WriteAheadLog":
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        stream = open(path, "a+b")
        logger.info("write-ahead log at %s", path)
        return cls(stream, name=str(path))

    def append(self, record: WalRecord) -> None:
        payload = record.encode()
        self._stream.seek(0, io.SEEK_END)
        self._stream.write(_FRAME.pack(len(payload), zlib.crc32(payload)) + payload)
        self.records_written += 1

    def flush(self) -> None:
        self._stream.flush()

    def close(self) -> None:
        self._stream.close()

    def getvalue(self) -> bytes:
        """Everything written so far."""
        self._stream.flush()
        self._stream.seek(0)
        data = self._stream.read()
        self._stream.seek(0, io.SEEK_END)
        return data

    def records(self) -> Iterator[WalRecord]:
        """Replay the log from the start."""
        yield from read_records(self.getvalue(), source=self.name)


def read_records(data: bytes, source: str = "<memory>") -> List[WalRecord]:
    """
    Decode every complete record in data.

    Raises:
        WalCorruptionError: a frame before the last one is damaged
    """
    records: List[WalRecord] = []
    offset = 0
    while offset < len(data):
        if offset + _FRAME.size > len(data):
            logger.warning("%s: dropping torn frame header at byte %d", source, offset)
            break
        length, checksum = _FRAME.unpack_from(data, offset)
        start = offset + _FRAME.size
        end = start + length
        if end > len(data):
            logger.warning("%s: dropping torn record at byte %d", source, offset)
            break
        payload = data[start:end]
        if zlib.crc32(payload) != checksum:
            if end == len(data):
                logger.warning("%s: dropping final record with bad checksum", source)
                break
            raise WalCorruptionError(f"{source}: checksum mismatch", offset)
        try:
            records.append(WalRecord.decode(payload))
        except EncodingError as exc:
            raise WalCorruptionError(f"{source}: undecodable record ({exc})", offset) from exc
        offset = end
    return records

"""
Canonical byte encoding of blocks and transactions.

Layout (all integers little-endian):

    version u8 (0x01) | epoch u64 | author u32 | round u64
    parent count u32, then per parent: author u32 | round u64 | digest 32B
    epoch_change_bit u8 | timestamp u64
    transaction count u32, then per tx: length u32 | tx bytes
    vote count u32, then per vote: author u32 | round u64 | digest 32B | index u32 | accept u8

Transaction bytes:

    owned input count u32, then per input: object u64 | version u64
    shared flag u8 | payload length u32 | payload

The digest of a block is BLAKE2b-256 over these bytes. The signature is
appended only in the signed form used by the write-ahead log.
"""
import struct
from typing import List, Tuple

from dagbft.core.block import DIGEST_SIZE, Block, BlockRef, Transaction, TxVote
from dagbft.errors import EncodingError

VERSION = 0x01

_HEADER = struct.Struct("<BQIQ")
_COUNT = struct.Struct("<I")
_REF = struct.Struct(f"<IQ{DIGEST_SIZE}s")
_BIT_TS = struct.Struct("<BQ")
_VOTE = struct.Struct(f"<IQ{DIGEST_SIZE}sIB")
_INPUT = struct.Struct("<QQ")
_FLAG = struct.Struct("<B")


def encode_transaction(tx: Transaction) -> bytes:
    parts = [_COUNT.pack(len(tx.owned_inputs))]
    for obj, version in tx.owned_inputs:
        parts.append(_INPUT.pack(obj, version))
    parts.append(_FLAG.pack(1 if tx.has_shared_inputs else 0))
    parts.append(_COUNT.pack(len(tx.payload)))
    parts.append(tx.payload)
    return b"".join(parts)


def encode_block(block: Block) -> bytes:
    """Canonical bytes of a block, excluding its signature."""
    parts = [
        _HEADER.pack(VERSION, block.epoch, block.author, block.round),
        _COUNT.pack(len(block.parents)),
    ]
    for parent in block.parents:
        parts.append(_REF.pack(parent.author, parent.round, parent.digest))
    parts.append(_BIT_TS.pack(1 if block.epoch_change_bit else 0, block.timestamp))
    parts.append(_COUNT.pack(len(block.transactions)))
    for tx in block.transactions:
        raw = encode_transaction(tx)
        parts.append(_COUNT.pack(len(raw)))
        parts.append(raw)
    parts.append(_COUNT.pack(len(block.votes)))
    for vote in block.votes:
        ref = vote.block
        parts.append(
            _VOTE.pack(ref.author, ref.round, ref.digest, vote.index, 1 if vote.accept else 0)
        )
    return b"".join(parts)


def encode_signed_block(block: Block) -> bytes:
    """Canonical bytes followed by a length-prefixed signature."""
    return block.encoded + _COUNT.pack(len(block.signature)) + block.signature


class _Reader:
    """Cursor over a bytes buffer that raises EncodingError on short reads."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, fmt: struct.Struct) -> Tuple:
        end = self.offset + fmt.size
        if end > len(self.data):
            raise EncodingError(f"truncated input at byte {self.offset}")
        values = fmt.unpack_from(self.data, self.offset)
        self.offset = end
        return values

    def take_bytes(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise EncodingError(f"truncated input at byte {self.offset}")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def count(self) -> int:
        return int(self.take(_COUNT)[0])

    def done(self) -> bool:
        return self.offset == len(self.data)


def _read_transaction(reader: _Reader) -> Transaction:
    inputs: List[Tuple[int, int]] = []
    for _ in range(reader.count()):
        obj, version = reader.take(_INPUT)
        inputs.append((obj, version))
    (flag,) = reader.take(_FLAG)
    if flag not in (0, 1):
        raise EncodingError(f"bad shared flag {flag}")
    payload = reader.take_bytes(reader.count())
    return Transaction(tuple(inputs), bool(flag), payload)


def decode_transaction(data: bytes) -> Transaction:
    reader = _Reader(data)
    tx = _read_transaction(reader)
    if not reader.done():
        raise EncodingError("trailing bytes after transaction")
    return tx


def _read_block(reader: _Reader) -> Block:
    version, epoch, author, round_ = reader.take(_HEADER)
    if version != VERSION:
        raise EncodingError(f"unsupported encoding version {version:#x}")
    parents = []
    for _ in range(reader.count()):
        a, r, d = reader.take(_REF)
        parents.append(BlockRef(a, r, d))
    bit, timestamp = reader.take(_BIT_TS)
    if bit not in (0, 1):
        raise EncodingError(f"bad epoch-change bit {bit}")
    transactions = []
    for _ in range(reader.count()):
        raw = reader.take_bytes(reader.count())
        transactions.append(decode_transaction(raw))
    votes = []
    for _ in range(reader.count()):
        a, r, d, index, accept = reader.take(_VOTE)
        if accept not in (0, 1):
            raise EncodingError(f"bad vote flag {accept}")
        votes.append(TxVote(BlockRef(a, r, d), index, bool(accept)))
    return Block(
        author=author,
        round=round_,
        epoch=epoch,
        parents=tuple(parents),
        transactions=tuple(transactions),
        votes=tuple(votes),
        epoch_change_bit=bool(bit),
        timestamp=timestamp,
    )


def decode_block(data: bytes) -> Block:
    """Inverse of encode_block (signature left empty)."""
    reader = _Reader(data)
    block = _read_block(reader)
    if not reader.done():
        raise EncodingError("trailing bytes after block")
    return block


def decode_signed_block(data: bytes) -> Block:
    """Inverse of encode_signed_block."""
    reader = _Reader(data)
    block = _read_block(reader)
    signature = reader.take_bytes(reader.count())
    if not reader.done():
        raise EncodingError("trailing bytes after signed block")
    return block.with_signature(signature)

"""
Blocks, block references and the transactions they carry.

A Block is the only protocol message. It is immutable: the digest is a hash
of its canonical encoding (see encoding.py) and everything else refers to a
block through its BlockRef.
"""
from dataclasses import dataclass, field, replace
from functools import cached_property
from hashlib import blake2b
from typing import Any, Dict, Optional, Tuple

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)

ObjectRef = Tuple[int, int]  # (object id, version)


def hash_bytes(data: bytes) -> bytes:
    """BLAKE2b-256 of data."""
    return blake2b(data, digest_size=DIGEST_SIZE).digest()


@dataclass(frozen=True)
class BlockRef:
    """
    (author, round, digest) triplet identifying a block.

    Equivocating blocks share author and round and differ in digest.
    """

    author: int
    round: int
    digest: bytes

    @property
    def slot(self) -> Tuple[int, int]:
        return (self.author, self.round)

    def sort_key(self) -> Tuple[int, int, bytes]:
        """Deterministic order: round, then author, then digest bytes."""
        return (self.round, self.author, self.digest)

    def short(self) -> str:
        return f"A{self.author}@{self.round}#{self.digest[:4].hex()}"

    def to_dict(self) -> Dict[str, Any]:
        return {"author": self.author, "round": self.round, "digest": self.digest.hex()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BlockRef":
        return cls(int(data["author"]), int(data["round"]), bytes.fromhex(data["digest"]))

    def __repr__(self) -> str:
        return f"BlockRef({self.short()})"


@dataclass(frozen=True)
class Transaction:
    """
    A client transaction.

    owned_inputs are (object id, version) pairs; two transactions conflict
    when they share one. has_shared_inputs means the transaction also
    touches consensus-ordered state and cannot finish on the fast path
    alone.
    """

    owned_inputs: Tuple[ObjectRef, ...] = ()
    has_shared_inputs: bool = False
    payload: bytes = b""

    @cached_property
    def id(self) -> bytes:
        from dagbft.core.encoding import encode_transaction

        return hash_bytes(encode_transaction(self))

    @property
    def is_owned_only(self) -> bool:
        return bool(self.owned_inputs) and not self.has_shared_inputs

    @property
    def is_mixed(self) -> bool:
        return bool(self.owned_inputs) and self.has_shared_inputs

    @property
    def is_shared_only(self) -> bool:
        return not self.owned_inputs

    def conflicts_with(self, other: "Transaction") -> bool:
        if self.id == other.id:
            return False
        return not set(self.owned_inputs).isdisjoint(other.owned_inputs)

    def short_id(self) -> str:
        return self.id[:4].hex()


@dataclass(frozen=True)
class TxVote:
    """An explicit fast-path vote for the transaction at (block, index)."""

    block: BlockRef
    index: int
    accept: bool = True


@dataclass(frozen=True, eq=False)
class Block:
    """
    A DAG vertex.

    Equality and hashing go through the reference, so two Block objects
    with identical contents compare equal. The signature is not part of the
    digest.
    """

    author: int
    round: int
    epoch: int = 0
    parents: Tuple[BlockRef, ...] = ()
    transactions: Tuple[Transaction, ...] = ()
    votes: Tuple[TxVote, ...] = ()
    epoch_change_bit: bool = False
    timestamp: int = 0
    signature: bytes = field(default=b"", repr=False)

    @cached_property
    def encoded(self) -> bytes:
        """Canonical bytes (everything but the signature)."""
        from dagbft.core.encoding import encode_block

        return encode_block(self)

    @cached_property
    def digest(self) -> bytes:
        return hash_bytes(self.encoded)

    @cached_property
    def reference(self) -> BlockRef:
        return BlockRef(self.author, self.round, self.digest)

    @property
    def is_genesis(self) -> bool:
        return self.round == 0

    def with_signature(self, signature: bytes) -> "Block":
        return replace(self, signature=signature)

    def with_timestamp(self, timestamp: int) -> "Block":
        """Same block contents at a different timestamp (used to forge equivocations)."""
        return replace(self, timestamp=timestamp, signature=b"")

    def transaction_at(self, index: int) -> Optional[Transaction]:
        if 0 <= index < len(self.transactions):
            return self.transactions[index]
        return None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Block):
            return NotImplemented
        return self.reference == other.reference

    def __hash__(self) -> int:
        return hash(self.reference)

    def __repr__(self) -> str:
        return f"Block({self.reference.short()}, parents={len(self.parents)}, ts={self.timestamp})"


def genesis_block(author: int, epoch: int = 0) -> Block:
    """Round-0 block of an authority: no parents, timestamp 0."""
    return Block(author=author, round=0, epoch=epoch)

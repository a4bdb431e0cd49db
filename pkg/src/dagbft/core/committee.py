"""
Committee

Who is running the protocol. Every authority has one vote, so all the
thresholds the rest of the package needs come straight from n:

    n = 3f + 1      committee size (4, 7, 10, ...)
    quorum = 2f+1   enough to certify, skip or finalize anything
    validity = f+1  enough to be sure one honest authority is in the set

Authorities are plain ints 0..n-1. Anything that talks about "authority 3"
means index 3 into this committee.
"""
from dataclasses import dataclass

from dagbft.errors import CommitteeError


@dataclass(frozen=True)
class Committee:
    """
    n = 3f + 1 authorities with equal voting power, indexed 0..n-1.

    Args:
        n: Committee size
        epoch: Epoch the genesis blocks belong to
    """

    n: int
    epoch: int = 0

    def __post_init__(self) -> None:
        if self.n < 1 or (self.n - 1) % 3 != 0:
            raise CommitteeError(f"committee size {self.n} is not of the form 3f+1")
        if self.epoch < 0:
            raise CommitteeError(f"negative epoch {self.epoch}")

    @property
    def f(self) -> int:
        return (self.n - 1) // 3

    @property
    def quorum(self) -> int:
        """2f + 1"""
        return 2 * self.f + 1

    @property
    def validity(self) -> int:
        """f + 1"""
        return self.f + 1

    @property
    def authorities(self) -> range:
        return range(self.n)

    def is_member(self, authority: int) -> bool:
        return 0 <= authority < self.n

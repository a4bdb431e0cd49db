"""
Base Signer Interface

Every signature scheme implements this. Validators only ever call
sign/verify through it, so swapping in real asymmetric crypto means
writing one subclass.
"""
from abc import ABC, abstractmethod


class BaseSigner(ABC):
    """
    Abstract base class for block signature schemes.

    One signer object serves the whole committee: it signs for an authority
    and verifies anyone's signature.
    """

    name: str = "base"

    @abstractmethod
    def sign(self, authority: int, message: bytes) -> bytes:
        """
        Sign a message on behalf of an authority.

        Args:
            authority: Index of the signing authority
            message: Canonical block bytes

        Returns:
            Signature bytes
        """

    @abstractmethod
    def verify(self, authority: int, message: bytes, signature: bytes) -> bool:
        """
        Check a signature.

        Returns:
            True if `signature` is authority's signature over message
        """

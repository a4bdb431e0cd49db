"""
Keyed-hash signatures.

Not real public-key crypto: every authority's key is derived from one
committee secret, so anyone holding the signer can forge. Good enough for a
simulator where the point is that a signature binds (author, bytes) and is
cheap to check.
"""
from hashlib import blake2b
import hmac

from dagbft.signers.base import BaseSigner

SIGNATURE_SIZE = 32


class KeyedHashSigner(BaseSigner):
    """BLAKE2b keyed with a per-authority key derived from a shared seed."""

    name = "keyed-hash"

    def __init__(self, committee_seed: bytes = b"dagbft"):
        self._seed = committee_seed
        self._keys: dict[int, bytes] = {}

    def _key(self, authority: int) -> bytes:
        key = self._keys.get(authority)
        if key is None:
            key = blake2b(
                authority.to_bytes(4, "little"), key=self._seed[:64], digest_size=32
            ).digest()
            self._keys[authority] = key
        return key

    def sign(self, authority: int, message: bytes) -> bytes:
        return blake2b(message, key=self._key(authority), digest_size=SIGNATURE_SIZE).digest()

    def verify(self, authority: int, message: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self.sign(authority, message), signature)


class NoopSigner(BaseSigner):
    """Accepts everything. For tests and hand-built scenarios."""

    name = "noop"

    def sign(self, authority: int, message: bytes) -> bytes:
        return b""

    def verify(self, authority: int, message: bytes, signature: bytes) -> bool:
        return True

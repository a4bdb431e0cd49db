"""
Signature schemes.

Blocks are signed over their canonical encoding. The scheme is pluggable:
everything talks to BaseSigner, and the simulator defaults to the fast
keyed-hash stand-in.
"""
from dagbft.signers.base import BaseSigner
from dagbft.signers.keyed_hash import KeyedHashSigner, NoopSigner

__all__ = ["BaseSigner", "KeyedHashSigner", "NoopSigner", "make_signer"]


def make_signer(name: str, committee_seed: bytes = b"dagbft") -> BaseSigner:
    """
    Build a signer by name.

    Args:
        name: "keyed-hash" or "noop"
        committee_seed: Secret the keyed-hash scheme derives per-authority keys from

    Returns:
        A signer instance
    """
    if name == "keyed-hash":
        return KeyedHashSigner(committee_seed)
    if name == "noop":
        return NoopSigner()
    raise ValueError(f"unknown signer: {name}")

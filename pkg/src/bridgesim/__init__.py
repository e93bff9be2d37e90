"""Deterministic notary-quorum cross-chain token bridge simulator."""

from .chain import Address, Chain, ChainKind
from .genesis import GenesisSpec, genesis_hash, parse_genesis

__all__ = ["Address", "Chain", "ChainKind", "GenesisSpec", "genesis_hash", "parse_genesis"]

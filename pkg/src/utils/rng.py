"""
Named random substreams derived from one root seed
"""
import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(root_seed: int, name: str, index: int = 0) -> np.random.SeedSequence:
    """SeedSequence for (root seed, stream name, index)"""
    return np.random.SeedSequence(int(root_seed), spawn_key=(_name_key(name), int(index)))


def derive_seed(root_seed: int, name: str, index: int = 0) -> int:
    """Integer seed for a named substream, e.g. derive_seed(7, "split", run)"""
    return int(substream(root_seed, name, index).generate_state(1, dtype=np.uint32)[0])


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    """Generator for one block of pulses; depends only on (seed, block index)"""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block_index),)))

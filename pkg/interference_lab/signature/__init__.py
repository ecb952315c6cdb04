import hashlib
import json
from typing import Any, Sequence, Tuple, Union

import numpy as np


class MD5Hasher:

    def hash(self, data: Union[str, bytes] = "") -> bytes:
        if isinstance(data, str):
            data = data.encode()
        return hashlib.md5(data).digest()

    def hex(self, data: Union[str, bytes] = "") -> str:
        if isinstance(data, str):
            data = data.encode()
        return hashlib.md5(data).hexdigest()

    def words(self, data: Union[str, bytes] = "") -> Tuple[int, ...]:
        """The digest as four unsigned 32-bit words, usable as a spawn key."""
        digest = self.hash(data)
        return tuple(int.from_bytes(digest[k:k + 4], "little") for k in range(0, 16, 4))


class ConfigFingerprint:
    """Stable fingerprint of a JSON-compatible configuration."""

    def __init__(self, hasher: MD5Hasher = MD5Hasher()):
        self.hasher = hasher

    def canonical(self, config: Any) -> str:
        return json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)

    def fingerprint(self, config: Any) -> str:
        return self.hasher.hex(self.canonical(config))


class SeedStreams:
    """Counter-based RNG streams derived from a master seed.

    A stream is addressed by a name (e.g. a strategy id) and an integer
    counter (e.g. a replicate index). The name is hashed, so streams do not
    depend on the order in which names are visited.

    >>> streams = SeedStreams(2024)
    >>> rng = streams.generator("crd|ht", 17)
    """

    def __init__(self, master_seed: int, hasher: MD5Hasher = MD5Hasher()):
        self.master_seed = int(master_seed)
        self.hasher = hasher

    def sequence(self, name: str, *counters: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=self.hasher.words(name) + tuple(int(c) for c in counters))

    def generator(self, name: str, *counters: int) -> np.random.Generator:
        return np.random.default_rng(self.sequence(name, *counters))

    def seeds(self, name: str, count: int) -> Sequence[np.random.SeedSequence]:
        return [self.sequence(name, k) for k in range(count)]

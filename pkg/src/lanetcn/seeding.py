"""Named random sub-streams derived from one root seed."""

import zlib

import numpy as np


def _key(part) -> int:
    return zlib.crc32(part.encode()) if isinstance(part, str) else int(part)


def _sequence(seed, name, extra) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), _key(name), *map(_key, extra)])


def stream(seed: int, name: str, *extra) -> np.random.Generator:
    """Independent generator for component ``name``; stable across runs and platforms.

    ``extra`` parts (ints or strings) further split the stream, e.g. per driver.
    """
    return np.random.default_rng(_sequence(seed, name, extra))


def derived_seed(seed: int, name: str, *extra) -> int:
    return int(_sequence(seed, name, extra).generate_state(1)[0])

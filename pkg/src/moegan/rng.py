"""Named random streams split from one master seed."""
from __future__ import annotations

import zlib

import numpy as np

STREAM_NAMES = ("init", "data", "gumbel", "oracle")
_MASK64 = (1 << 64) - 1


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def make_generator(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), _stream_key(name), *map(int, extra)])))


class CountingGenerator:
    """Wraps a numpy Generator and counts uniform draws made through ``random``."""

    def __init__(self, generator: np.random.Generator):
        self.generator = generator
        self.draws = 0

    def random(self, size=None, dtype=np.float64):
        out = self.generator.random(size, dtype=dtype)
        self.draws += int(np.prod(size)) if size is not None else 1
        return out

    def __getattr__(self, item):
        if item == "generator" or item.startswith("__"):  # keeps pickling on our own __dict__
            raise AttributeError(item)
        return getattr(self.generator, item)


class Streams:
    def __init__(self, seed: int, names=STREAM_NAMES):
        self.seed = int(seed)
        self._streams = {name: CountingGenerator(make_generator(seed, name)) for name in names}

    def __getitem__(self, name: str) -> CountingGenerator:
        return self._streams[name]

    def derive(self, name: str, *keys: int) -> np.random.Generator:
        """A fresh generator keyed by ``(seed, name, *keys)``; holds no shared state."""
        return make_generator(self.seed, name, *keys)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {f"rng.{name}": encode_state(s.generator) for name, s in self._streams.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, s in self._streams.items():
            key = f"rng.{name}"
            if key in arrays:
                decode_state(s.generator, arrays[key])


def encode_state(generator: np.random.Generator) -> np.ndarray:
    st = generator.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise ValueError(f"unsupported bit generator {st['bit_generator']}")
    s, inc = st["state"]["state"], st["state"]["inc"]
    return np.array([s >> 64, s & _MASK64, inc >> 64, inc & _MASK64, st["has_uint32"], st["uinteger"]],
                    dtype=np.uint64)


def decode_state(generator: np.random.Generator, words: np.ndarray) -> None:
    w = [int(v) for v in np.asarray(words, dtype=np.uint64)]
    generator.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": (w[0] << 64) | w[1], "inc": (w[2] << 64) | w[3]},
        "has_uint32": w[4],
        "uinteger": w[5],
    }

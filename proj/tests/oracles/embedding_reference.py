"""Independent reference for the hashed class embedding.

FNV-1a 64 of the UTF-8 name seeds a SplitMix64 generator; uniforms are
((x >> 11) + 0.5) / 2**53; Box-Muller turns pairs (u1, u2) into
r*cos(2 pi u2), r*sin(2 pi u2) with r = sqrt(-2 ln u1); the first d normals are
divided by their L2 norm.

Usage: python3 embedding_reference.py NAME D
"""

import math
import sys

MASK = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = 14695981039346656037
    for b in data:
        h ^= b
        h = (h * 1099511628211) & MASK
    return h


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return ((self.next() >> 11) + 0.5) / float(1 << 53)


def normals(gen: SplitMix64, count: int) -> list:
    out = []
    while len(out) < count:
        u1 = gen.uniform()
        u2 = gen.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        out.append(r * math.cos(2.0 * math.pi * u2))
        out.append(r * math.sin(2.0 * math.pi * u2))
    return out[:count]


def embedding(name: str, d: int) -> list:
    v = normals(SplitMix64(fnv1a64(name.encode("utf-8"))), d)
    norm = math.sqrt(sum(x * x for x in v))
    return [x / norm for x in v]


if __name__ == "__main__":
    for value in embedding(sys.argv[1], int(sys.argv[2])):
        print(repr(value))

"""Deterministic 64-bit random source.

``Rng`` is xorshift64* (shifts 12, 25, 27; multiplier 0x2545F4914F6CDD1D),
seeded through splitmix64 so that any 64-bit seed, including 0, gives a
non-zero state. The exact sequence is part of the trace/workload contract:

    state = splitmix64(seed ^ (stream * 0x9E3779B97F4A7C15))   (0 -> 1)
    next:  x ^= x >> 12; x ^= x << 25; x ^= x >> 27   (mod 2**64)
           return x * 0x2545F4914F6CDD1D mod 2**64
    below(n)  = (next() * n) >> 64
    random()  = (next() >> 11) / 2**53
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *parts) -> int:
    """Stable seed derivation from a base seed and ints/strings."""
    x = seed & MASK64
    for p in parts:
        if isinstance(p, str):
            for ch in p.encode():
                x = splitmix64(x ^ ch)
        else:
            x = splitmix64(x ^ (int(p) & MASK64))
    return x


class Rng:
    __slots__ = ("state",)

    def __init__(self, seed: int, stream: int = 0):
        s = splitmix64((seed ^ (stream * GOLDEN)) & MASK64)
        self.state = s or 1

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def below(self, n: int) -> int:
        return (self.next_u64() * n) >> 64

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

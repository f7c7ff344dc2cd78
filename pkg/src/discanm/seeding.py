"""64-bit seed derivation.

``split(seed, k)`` is SplitMix64 applied to ``seed + (k + 1) * GOLDEN``; it
gives well-spread, reproducible child seeds without shared state.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
# Backward fits use ``seed ^ BACKWARD_SEED_XOR``.
BACKWARD_SEED_XOR = 0xD1B54A32D192ED03


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def split(seed: int, k: int) -> int:
    return mix64((seed & MASK64) + (k + 1) * GOLDEN)

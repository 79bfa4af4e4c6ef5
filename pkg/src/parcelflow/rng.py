"""SplitMix64 generator and per-(parcel, station) stream derivation.

A stream seed is derived as::

    h = mix64(seed + GAMMA * (parcel_index + 1))
    stream_seed = mix64(h ^ (GAMMA * (station_ordinal + 1)))

so every station of every parcel draws from its own sequence and the order
in which stations are evaluated cannot change any outcome.
"""

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def mix64(z):
    """SplitMix64 output finalizer."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed):
        self.state = seed & MASK64

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def random(self):
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def prng_stream(seed, parcel_index, station):
    """Independent deterministic stream for one station of one parcel."""
    ordinal = getattr(station, "ordinal", station)
    h = mix64((seed + GAMMA * (parcel_index + 1)) & MASK64)
    return SplitMix64(mix64(h ^ ((GAMMA * (ordinal + 1)) & MASK64)))

"""Keyed 64-bit hashing shared by the coupling field and the walk streams.

Every random quantity in the package is a pure function of a 64-bit key:
an edge key for percolation, a ``(stream, step)`` counter for walks.  The
scalar functions here work on Python ints; ``subperc.kernels`` carries the
vectorised and jitted equivalents, which must agree bit for bit.
"""

import hashlib

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / (1 << 53)

# domain tags keep the field, walk and tie-break streams disjoint
TAG_FIELD = 0xD1B54A32D192ED03
TAG_WALK = 0x8CB92BA72F3D8DD7
TAG_TIE = 0xABC98388FB8FAC03
TAG_SOURCE = 0x5851F42D4C957F2D

# incremental fingerprints for words read letter by letter (trees)
WORD_ROOT = 0x243F6A8885A308D3
LEVEL_ROOT = 0x13198A2E03707344
LETTER_MULT = 0xA4093822299F31D1
LETTER_OFFSET = 1024


def mix64(x):
    """splitmix64 finaliser on a Python int."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream(seed, tag):
    return mix64((seed & MASK64) ^ tag)


def to_unit(h):
    """Top 53 bits of a 64-bit hash as a float in [0, 1)."""
    return (h >> 11) * INV_2_53


def counter_uniform(stream_state, counter):
    return to_unit(mix64(stream_state ^ mix64(counter & MASK64)))


def fingerprint(normal_form):
    """Stable 64-bit fingerprint of a normal form built from ints and tuples."""
    digest = hashlib.blake2b(repr(normal_form).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def edge_key(fp_a, fp_b):
    """Order-free key of the edge joining two fingerprinted vertices."""
    lo, hi = (fp_a, fp_b) if fp_a <= fp_b else (fp_b, fp_a)
    return mix64(lo ^ mix64(hi))


def edge_value(key, field_state):
    return to_unit(mix64(key ^ field_state))


def word_step(h, letter):
    """Fingerprint of a word extended by one letter."""
    return mix64(h ^ (((letter + LETTER_OFFSET) * LETTER_MULT) & MASK64))


def word_fingerprint(letters, root=WORD_ROOT):
    h = root
    for s in letters:
        h = word_step(h, s)
    return h


def level_anchor(k):
    """Fingerprint of the k-th ancestor of the origin on the oriented tree."""
    return mix64(LEVEL_ROOT ^ k)

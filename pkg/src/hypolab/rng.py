"""Counter-based random streams (Philox) for reproducible parallel Monte Carlo.

Every consumer derives its stream from (seed, stream label); path-level noise
additionally carries the path block index in the Philox counter, so the
normal increment for (seed, path_id, step, component) is a pure function of
that tuple, independent of worker count or scheduling.  Normals are produced
by mapping fixed-position uniforms through the inverse normal CDF, because
`Generator.random(dtype=float64)` consumes exactly one 64-bit Philox word per
value (pinned by a regression test), which makes `advance` slicing exact.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

BLOCK = 8192  # paths per noise block; fixed, never worker-dependent


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf8")).digest()
    return int.from_bytes(digest[:8], "little")


def philox(seed: int, label: str, counter_word: int = 0) -> np.random.Generator:
    """A Generator on the (seed, label) stream, counter offset by counter_word."""
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) ^ _label_key(label)
    bitgen = np.random.Philox(key=key, counter=[0, 0, int(counter_word), 0])
    return np.random.Generator(bitgen)


def substream(seed: int, label: str) -> np.random.Generator:
    """Convenience stream for seeding heuristics (restart seeds and the like)."""
    return philox(seed, label)


def _padded(cols: int) -> int:
    # Philox emits 4 uint64 words per counter value and advance() counts
    # counter values, so per-path rows are padded to a 4-word boundary
    return -(-cols // 4) * 4


def block_normals(seed: int, label: str, block_index: int, rows: int, cols: int):
    """Standard normals (BLOCK-row block), shape (rows, cols); rows <= BLOCK."""
    gen = philox(seed, label, counter_word=block_index)
    width = _padded(cols)
    u = gen.random((rows, width))[:, :cols]
    # clip away exact 0 (ndtri(0) = -inf); probability ~2^-53 per draw
    u = np.maximum(u, 1e-17)
    return ndtri(u)


def path_normals(seed: int, label: str, path_id: int, cols: int):
    """The noise row of a single path, identical to its slice of the block."""
    block_index, offset = divmod(int(path_id), BLOCK)
    gen = philox(seed, label, counter_word=block_index)
    width = _padded(cols)
    gen.bit_generator.advance(offset * width // 4)
    u = gen.random(width)[:cols]
    u = np.maximum(u, 1e-17)
    return ndtri(u)


def normals_for_paths(seed: int, label: str, path_ids, cols: int):
    """Noise rows for an id list (bit-identical to their block slices)."""
    path_ids = np.asarray(path_ids, dtype=np.int64)
    out = np.empty((path_ids.size, cols))
    for j, pid in enumerate(path_ids):
        out[j] = path_normals(seed, label, int(pid), cols)
    return out


def block_ranges(n_paths: int):
    """Fixed partition of path ids into (block_index, start, stop) triples."""
    out = []
    start = 0
    block = 0
    while start < n_paths:
        stop = min(start + BLOCK, n_paths)
        out.append((block, start, stop))
        start = stop
        block += 1
    return out

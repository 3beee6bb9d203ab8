"""Software reference results the engines are checked against.

These use Python integers (object arrays) so there is no silent overflow;
they share no code with the simulated datapaths.
"""

from __future__ import annotations

import numpy as np


def gemm(a, b) -> np.ndarray:
    """Exact integer matrix product."""
    a = np.asarray(a).astype(object)
    b = np.asarray(b).astype(object)
    return a.dot(b)


def wrap_array(x, bits: int) -> np.ndarray:
    half = 1 << (bits - 1)
    mod = 1 << bits
    x = np.asarray(x).astype(object)
    return ((x + half) % mod) - half


def gated_sum(spikes, w_ab, w_c, lane_bits: int = 12) -> np.ndarray:
    """Spike-gated weight sum for the crossbar.

    ``spikes`` is ``(ticks, chain_len, 2)`` of 0/1, ``w_ab``/``w_c`` are
    ``(chains, chain_len, 4)``. Result is ``(chains, 4)`` wrapped to
    ``lane_bits``.
    """
    s = np.asarray(spikes).astype(object)
    counts0 = s[:, :, 0].sum(axis=0)
    counts1 = s[:, :, 1].sum(axis=0)
    total = np.zeros((np.asarray(w_ab).shape[0], 4), dtype=object)
    for ch in range(total.shape[0]):
        for j in range(len(counts0)):
            for lane in range(4):
                total[ch, lane] += counts0[j] * int(w_ab[ch][j][lane])
                total[ch, lane] += counts1[j] * int(w_c[ch][j][lane])
    return wrap_array(total, lane_bits)

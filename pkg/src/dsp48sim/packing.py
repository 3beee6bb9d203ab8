"""Two signed INT8 multiplications sharing one operand in a single 27x18 multiply.

The packed operand is ``hi * 2**18 + lo`` (formed by the pre-adder from
``A = hi << 18`` and ``D = lo``); multiplying by a shared ``w`` yields
``hi*w * 2**18 + lo*w`` in one product. Because ``lo*w`` may be negative, the
upper field reads one too low whenever the lower field borrows; that is the
correction :func:`unpack_and_correct` applies.

For accumulation the correction is deferred instead: a constant added to the
low field of every product keeps the field non-negative, so the upper field
needs no fix-up at all, and the accumulated constant is removed once at
readout. :func:`deferred_correction_plan` returns that constant and the closing
adjustment.

All functions accept plain ints or integer numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import StimulusError

LANE_SHIFT = 18
LANE_MASK = (1 << LANE_SHIFT) - 1
LANE_HALF = 1 << (LANE_SHIFT - 1)

# Most negative INT8 x INT8 product is -128*127; adding this keeps each
# product's low field in [0, 32640].
LO_BIAS = 128 * 127
# 8 biased products still fit an 18-bit unsigned field (8 * 32640 < 2**18).
MAX_BIASED_TERMS = (1 << LANE_SHIFT) // (LO_BIAS + 128 * 128)


def _check_int8(*vals) -> None:
    for v in vals:
        arr = np.asarray(v)
        if arr.size and (arr.min() < -128 or arr.max() > 127):
            raise StimulusError(f"operand outside signed 8-bit range: {v}")


@dataclass(frozen=True)
class PackedPair:
    hi: int
    lo: int
    packed27: int


@dataclass(frozen=True)
class LaneProducts:
    p_hi: int
    p_lo: int


def pack_word(hi, lo):
    """``hi * 2**18 + lo`` without range checks (vectorizes over arrays)."""
    return hi * (1 << LANE_SHIFT) + lo


def pack(hi: int, lo: int) -> PackedPair:
    _check_int8(hi, lo)
    return PackedPair(hi, lo, pack_word(hi, lo))


def unpack_packed27(packed27):
    """Recover ``(hi, lo)`` from a packed operand; inverse of :func:`pack_word`."""
    lo = ((packed27 & LANE_MASK) ^ LANE_HALF) - LANE_HALF
    return (packed27 - lo) >> LANE_SHIFT, lo


def unpack_and_correct(p) -> LaneProducts:
    """Split a packed product into its two exact lane products."""
    p_lo = ((p & LANE_MASK) ^ LANE_HALF) - LANE_HALF
    p_hi = (p >> LANE_SHIFT) + (p_lo < 0)
    p_hi = ((p_hi + LANE_HALF) & LANE_MASK) - LANE_HALF
    return LaneProducts(p_hi, p_lo)


@dataclass(frozen=True)
class CorrectionPlan:
    """Per-tick additive word and the one-off readout adjustment.

    ``lane_bias`` is the 48-bit word routed through the W multiplexer (RND) for
    every accumulated product; ``final_adjustment`` is ``(hi, lo)`` to add to
    the accumulated lanes after the last product.
    """

    lane_bias: int
    final_adjustment: tuple[int, int]


def deferred_correction_plan(num_accumulated: int) -> CorrectionPlan:
    if num_accumulated < 0:
        raise StimulusError("num_accumulated must be >= 0")
    return CorrectionPlan(LO_BIAS, (0, -num_accumulated * LO_BIAS))


def biased_fields(p_biased):
    """Raw ``(hi, lo)`` fields of a packed sum that already carries its bias.

    ``lo`` is the unsigned low field; no carry correction is applied to ``hi``.
    Exact as long as the true low-field sum plus bias lies in ``[0, 2**18)``.
    """
    return p_biased >> LANE_SHIFT, p_biased & LANE_MASK


def accumulate_deferred(products: Iterable[int], lane_bits: int = 24) -> tuple[int, int]:
    """Accumulate raw packed products with the deferred scheme.

    Each product gets ``lane_bias`` added, its fields are summed in
    ``lane_bits``-wide wrapping lanes, and the closing adjustment is applied at
    the end. Returns ``(sum_hi, sum_lo)`` as signed ``lane_bits`` values.
    """
    mask = (1 << lane_bits) - 1
    half = 1 << (lane_bits - 1)
    acc_hi = acc_lo = 0
    n = 0
    for p in products:
        plan_bias = LO_BIAS
        hi, lo = biased_fields(p + plan_bias)
        acc_hi = (acc_hi + hi) & mask
        acc_lo = (acc_lo + lo) & mask
        n += 1
    adj_hi, adj_lo = deferred_correction_plan(n).final_adjustment
    acc_hi = (acc_hi + adj_hi) & mask
    acc_lo = (acc_lo + adj_lo) & mask
    return (acc_hi ^ half) - half, (acc_lo ^ half) - half


def exhaustive_check(chunk: int = 16) -> tuple[int, list[tuple[int, int, int]]]:
    """Run :func:`unpack_and_correct` over all 2**24 (hi, lo, w) triples.

    Returns ``(cases, failures)``; failures lists ``(hi, lo, w)`` triples,
    capped at 10. Processed ``chunk`` values of ``hi`` at a time.
    """
    vals = np.arange(-128, 128, dtype=np.int64)
    lo, w = np.meshgrid(vals, vals, indexing="ij")
    lo = lo.ravel()
    w = w.ravel()
    failures: list[tuple[int, int, int]] = []
    cases = 0
    for start in range(-128, 128, chunk):
        hi = np.arange(start, start + chunk, dtype=np.int64)[:, None]
        p = pack_word(hi, lo[None, :]) * w[None, :]
        got = unpack_and_correct(p)
        bad = (got.p_hi != hi * w[None, :]) | (got.p_lo != lo[None, :] * w[None, :])
        cases += bad.size
        if bad.any() and len(failures) < 10:
            for i, j in zip(*np.nonzero(bad)):
                failures.append((int(hi[i, 0]), int(lo[j]), int(w[j])))
                if len(failures) >= 10:
                    break
    return cases, failures

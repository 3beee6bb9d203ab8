import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsp48sim import packing
from dsp48sim.errors import StimulusError

int8 = st.integers(-128, 127)


def test_pack_examples():
    assert packing.pack(0, 0).packed27 == 0
    assert packing.pack(3, -2).packed27 == 3 * 262144 - 2 == 786430
    p = packing.pack(-128, -128).packed27
    assert p == -33554560
    assert -(1 << 26) <= p < (1 << 26)


def test_pack_rejects_out_of_range():
    with pytest.raises(StimulusError):
        packing.pack(128, 0)
    with pytest.raises(StimulusError):
        packing.pack(0, -129)


def test_unpack_examples():
    p = packing.pack(3, -2).packed27 * 5
    assert p == 3932150
    assert packing.unpack_and_correct(p) == packing.LaneProducts(15, -10)
    p = packing.pack(-1, 1).packed27 * 7
    assert p == -1835001
    assert packing.unpack_and_correct(p) == packing.LaneProducts(-7, 7)
    for w in (-128, 0, 99):
        assert packing.unpack_and_correct(0 * w) == packing.LaneProducts(0, 0)


@given(hi=int8, lo=int8, w=int8)
def test_unpack_matches_direct_products(hi, lo, w):
    got = packing.unpack_and_correct(packing.pack(hi, lo).packed27 * w)
    assert (got.p_hi, got.p_lo) == (hi * w, lo * w)


@given(hi=int8, lo=int8)
def test_unpack_packed27_roundtrip(hi, lo):
    assert packing.unpack_packed27(packing.pack_word(hi, lo)) == (hi, lo)


def test_vectorized_unpack():
    rng = np.random.default_rng(1)
    hi, lo, w = (rng.integers(-128, 128, 500) for _ in range(3))
    got = packing.unpack_and_correct(packing.pack_word(hi, lo) * w)
    np.testing.assert_array_equal(got.p_hi, hi * w)
    np.testing.assert_array_equal(got.p_lo, lo * w)


def test_bias_constants():
    # low field of every biased product stays non-negative and eight fit 18 bits
    assert -128 * 127 + packing.LO_BIAS == 0
    assert packing.MAX_BIASED_TERMS * (128 * 128 + packing.LO_BIAS) < 1 << 18
    assert (packing.MAX_BIASED_TERMS + 1) * (128 * 128 + packing.LO_BIAS) >= 1 << 18


def test_deferred_plan_zero_products():
    plan = packing.deferred_correction_plan(0)
    assert plan.final_adjustment == (0, 0)
    with pytest.raises(StimulusError):
        packing.deferred_correction_plan(-1)


def test_deferred_single_product():
    p = packing.pack(3, -2).packed27 * 5
    assert packing.accumulate_deferred([p]) == (15, -10)


def test_deferred_many_products_match_individual_corrections():
    rng = np.random.default_rng(7)
    hi, lo, w = (rng.integers(-128, 128, 1000) for _ in range(3))
    prods = [int(x) for x in packing.pack_word(hi, lo) * w]
    got = packing.accumulate_deferred(prods)
    lanes = [packing.unpack_and_correct(p) for p in prods]
    want_hi = sum(int(x.p_hi) for x in lanes)
    want_lo = sum(int(x.p_lo) for x in lanes)
    wrap24 = lambda v: ((v + (1 << 23)) % (1 << 24)) - (1 << 23)
    assert got == (wrap24(want_hi), wrap24(want_lo))


@settings(max_examples=100, deadline=None)
@given(terms=st.lists(st.tuples(int8, int8, int8), min_size=1, max_size=packing.MAX_BIASED_TERMS))
def test_biased_fields_of_short_sums_need_no_carry_fix(terms):
    # up to eight biased products can be summed in the packed domain directly
    total = sum(packing.pack_word(h, l) * w + packing.LO_BIAS for h, l, w in terms)
    hi, lo = packing.biased_fields(total)
    assert hi == sum(h * w for h, _, w in terms)
    assert lo - len(terms) * packing.LO_BIAS == sum(l * w for _, l, w in terms)


@pytest.mark.slow
def test_exhaustive_sweep():
    cases, failures = packing.exhaustive_check()
    assert cases == 1 << 24
    assert failures == []

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsp48sim import ws_engine as wse
from dsp48sim.errors import ConfigError, SchedulingError, StimulusError
from dsp48sim.oracles import gemm
from dsp48sim.trace import WaveformTrace

FETCH = list(wse.FetchVariant)


def rand8(rng, shape):
    return rng.integers(-128, 128, shape)


def loaded(cfg, tile, trace=None):
    eng = wse.build(cfg, trace)
    eng.preload_weights(tile)
    eng.swap_weights()
    return eng


@pytest.mark.parametrize("rows,cols,packing,slices,eff", [
    (14, 14, True, 210, 28),
    (1, 1, False, 2, 1),
    (4, 4, True, 20, 8),
])
def test_build_slice_counts(rows, cols, packing, slices, eff):
    eng = wse.build(wse.WsConfig(rows, cols, packing_enabled=packing))
    assert eng.num_slices == slices
    assert eng.config.effective_cols == eff


@pytest.mark.parametrize("kw", [
    dict(rows=0, cols=1), dict(rows=2, cols=2, rounds_per_weight_set=1),
    dict(rows=17, cols=1, packing_enabled=True), dict(rows=2, cols=2, act_stages=3),
])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        wse.WsConfig(**kw)


@pytest.mark.parametrize("fetch", FETCH)
@pytest.mark.parametrize("packing", [False, True])
def test_preload_shifts_tile_into_prefetch_registers(fetch, packing):
    cfg = wse.WsConfig(4, 3, packing_enabled=packing, fetch_variant=fetch)
    tile = rand8(np.random.default_rng(0), (4, cfg.effective_cols))
    eng = wse.build(cfg)
    assert eng.preload_weights(tile) == 4
    np.testing.assert_array_equal(eng.prefetched_weights(), tile)
    assert not eng.stationary_weights().any()
    eng.swap_weights()
    np.testing.assert_array_equal(eng.stationary_weights(), tile)


def test_single_row_preload_takes_one_tick():
    assert wse.build(wse.WsConfig(1, 1)).preload_weights(np.array([[5]])) == 1


def test_preload_and_swap_ordering_errors():
    eng = wse.build(wse.WsConfig(2, 2))
    tile = np.ones((2, 2), dtype=int)
    with pytest.raises(SchedulingError):
        eng.swap_weights()
    eng.preload_weights(tile)
    with pytest.raises(SchedulingError):
        eng.preload_weights(tile)
    with pytest.raises(SchedulingError):
        eng.run(np.ones((1, 2), dtype=int), prefetch=tile)


@pytest.mark.parametrize("fetch", FETCH)
@pytest.mark.parametrize("packing", [False, True])
def test_identity_reads_back_weights(fetch, packing):
    cfg = wse.WsConfig(5, 3, packing_enabled=packing, fetch_variant=fetch)
    tile = rand8(np.random.default_rng(1), (5, cfg.effective_cols))
    out = loaded(cfg, tile).run(np.eye(5, dtype=int)).output
    np.testing.assert_array_equal(out, tile)


def test_all_ones_gives_column_sums():
    cfg = wse.WsConfig(6, 2, packing_enabled=True)
    tile = rand8(np.random.default_rng(2), (6, 4))
    out = loaded(cfg, tile).run(np.ones((3, 6), dtype=int)).output
    np.testing.assert_array_equal(out, np.tile(tile.sum(axis=0), (3, 1)))


def test_random_8x8_packed_matches_gemm():
    rng = np.random.default_rng(3)
    cfg = wse.WsConfig(8, 4, packing_enabled=True)
    tile, acts = rand8(rng, (8, 8)), rand8(rng, (8, 8))
    np.testing.assert_array_equal(loaded(cfg, tile).run(acts).output, gemm(acts, tile))


def test_extreme_operands():
    for packing in (False, True):
        cfg = wse.WsConfig(16, 2, packing_enabled=packing)
        for a, w in ((-128, -128), (-128, 127), (127, 127)):
            tile = np.full((16, cfg.effective_cols), w)
            acts = np.full((2, 16), a)
            np.testing.assert_array_equal(loaded(cfg, tile).run(acts).output, gemm(acts, tile))


def test_empty_batch():
    eng = loaded(wse.WsConfig(3, 2), np.ones((3, 2), dtype=int))
    assert eng.run(np.zeros((0, 3), dtype=int)).output.shape == (0, 2)


def test_bad_stimulus():
    eng = wse.build(wse.WsConfig(3, 2))
    with pytest.raises(StimulusError):
        eng.preload_weights(np.ones((2, 2), dtype=int))
    with pytest.raises(StimulusError):
        eng.preload_weights(np.full((3, 2), 200))
    eng.preload_weights(np.ones((3, 2), dtype=int))
    eng.swap_weights()
    with pytest.raises(StimulusError):
        eng.run(np.ones((2, 4), dtype=int))


@pytest.mark.parametrize("fetch", FETCH)
def test_prefetch_during_compute_leaves_outputs_unchanged(fetch):
    rng = np.random.default_rng(4)
    cfg = wse.WsConfig(4, 2, packing_enabled=True, fetch_variant=fetch)
    t1, t2, acts = rand8(rng, (4, 4)), rand8(rng, (4, 4)), rand8(rng, (6, 4))
    plain = loaded(cfg, t1).run(acts).output
    eng = loaded(cfg, t1)
    busy = eng.run(acts, prefetch=t2).output
    np.testing.assert_array_equal(busy, plain)
    eng.swap_weights()
    np.testing.assert_array_equal(eng.run(acts).output, gemm(acts, t2))


def test_swap_with_identical_tile_is_idempotent():
    rng = np.random.default_rng(5)
    cfg = wse.WsConfig(3, 3)
    tile, acts = rand8(rng, (3, 3)), rand8(rng, (4, 3))
    eng = loaded(cfg, tile)
    first = eng.run(acts, prefetch=tile).output
    eng.swap_weights()
    np.testing.assert_array_equal(eng.run(acts).output, first)


@pytest.mark.parametrize("fetch", FETCH)
@pytest.mark.parametrize("packing", [False, True])
def test_back_to_back_sets_keep_full_utilization(fetch, packing):
    rng = np.random.default_rng(6)
    cfg = wse.WsConfig(6, 2, packing_enabled=packing, fetch_variant=fetch)
    tiles = [rand8(rng, (6, cfg.effective_cols)) for _ in range(4)]
    acts = [rand8(rng, (6, 6)) for _ in range(4)]
    res = wse.build(cfg).run_stream(tiles, acts)
    assert res.utilization == 1.0
    for out, t, a in zip(res.outputs_per_set, tiles, acts):
        np.testing.assert_array_equal(out, gemm(a, t))


def test_short_batches_leave_idle_rounds():
    rng = np.random.default_rng(7)
    cfg = wse.WsConfig(6, 2)
    tiles = [rand8(rng, (6, 2)) for _ in range(3)]
    acts = [rand8(rng, (2, 6)) for _ in range(3)]
    res = wse.build(cfg).run_stream(tiles, acts)
    assert res.utilization < 1.0
    np.testing.assert_array_equal(res.output, np.vstack([gemm(a, t) for a, t in zip(acts, tiles)]))


def test_stationary_registers_change_only_on_swap_ticks():
    rng = np.random.default_rng(8)
    tr = WaveformTrace()
    cfg = wse.WsConfig(3, 2)
    wse.build(cfg, tr).run_stream([rand8(rng, (3, 2)) for _ in range(3)],
                                  [rand8(rng, (3, 3)) for _ in range(3)])
    names = [n for n in tr.signals("ws/r") if n.endswith("/B2")]
    assert names
    for name in names:
        ce = name.replace("/B2", "/CE_B2")
        for t, _ in tr.history(name)[1:]:
            assert tr.series(ce, [t]) == [1]


@settings(max_examples=25, deadline=None)
@given(rows=st.integers(1, 10), cols=st.integers(1, 4), batch=st.integers(1, 12),
       packing=st.booleans(), fetch=st.sampled_from(FETCH), seed=st.integers(0, 2**32 - 1))
def test_random_geometries_match_gemm(rows, cols, batch, packing, fetch, seed):
    rng = np.random.default_rng(seed)
    cfg = wse.WsConfig(rows, cols, packing_enabled=packing, fetch_variant=fetch)
    tile, acts = rand8(rng, (rows, cfg.effective_cols)), rand8(rng, (batch, rows))
    np.testing.assert_array_equal(loaded(cfg, tile).run(acts).output, gemm(acts, tile))


def test_runs_are_deterministic():
    rng = np.random.default_rng(9)
    cfg = wse.WsConfig(5, 2, packing_enabled=True)
    tiles = [rand8(rng, (5, 4)) for _ in range(2)]
    acts = [rand8(rng, (5, 5)) for _ in range(2)]
    a = wse.build(cfg).run_stream(tiles, acts)
    b = wse.build(cfg).run_stream(tiles, acts)
    np.testing.assert_array_equal(a.output, b.output)
    assert (a.ticks, a.latency, a.utilization) == (b.ticks, b.latency, b.utilization)

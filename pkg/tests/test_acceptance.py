"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line; the lines are also collected
into the pytest summary. Expected values are either computed by an independent
oracle (exact object-dtype GEMM, gated sums) or are the published breakdown
cells for the B1024 engine and the 14x14 array.
"""

import time
from pathlib import Path

import numpy as np

from dsp48sim import os_engine as ose
from dsp48sim import packing
from dsp48sim import resource_model as rm
from dsp48sim import scenario as sc
from dsp48sim import snn_crossbar as snn
from dsp48sim import ws_engine as wse
from dsp48sim.oracles import gated_sum, gemm, wrap_array
from dsp48sim.trace import WaveformTrace

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
CASES = 100


def os_oracle(a, w, bias, bits):
    return wrap_array(np.stack([gemm(x, y) for x, y in zip(a, w)]) + np.asarray(bias, dtype=object),
                      bits)


def test_criterion_1_packing_exhaustive(verdict):
    t0 = time.perf_counter()
    cases, failures = packing.exhaustive_check()
    dt = time.perf_counter() - t0
    ok = cases == 1 << 24 and not failures and dt <= 120
    verdict(1, ok, f"{cases} triples, {len(failures)} failures, {dt:.1f} s")


def test_criterion_2_ws_gemm_exact(verdict):
    rng = np.random.default_rng(2024)
    bad = []
    combos = set()
    for i in range(CASES):
        fetch = list(wse.FetchVariant)[i % 2]
        pk = bool((i // 2) % 2)
        rows = int(rng.integers(1, 17))
        cols = int(rng.integers(1, 17))
        batch = int(rng.integers(1, 65))
        cfg = wse.WsConfig(rows, cols, packing_enabled=pk, fetch_variant=fetch)
        tile = rng.integers(-128, 128, (rows, cfg.effective_cols))
        acts = rng.integers(-128, 128, (batch, rows))
        eng = wse.build(cfg)
        eng.preload_weights(tile)
        eng.swap_weights()
        out = eng.run(acts).output
        if not np.array_equal(out, gemm(acts, tile)):
            bad.append((rows, cols, batch, pk, fetch.value))
        combos.add((pk, fetch))
    ok = not bad and len(combos) == 4
    verdict(2, ok, f"{CASES} random WS scenarios, {len(bad)} mismatches"
                   + (f", first {bad[0]}" if bad else ""))


def test_criterion_3_ws_prefetch_hiding(verdict):
    rng = np.random.default_rng(3)
    worst = 1.0
    exact = True
    for rows, cols, pk, fetch, extra in [
        (4, 4, False, wse.FetchVariant.DSP_FETCH, 0),
        (8, 3, True, wse.FetchVariant.DSP_FETCH, 0),
        (14, 14, True, wse.FetchVariant.DSP_FETCH, 0),
        (6, 5, False, wse.FetchVariant.CLB_FETCH, 0),
        (12, 2, True, wse.FetchVariant.CLB_FETCH, 3),
    ]:
        rounds = rows + extra
        cfg = wse.WsConfig(rows, cols, packing_enabled=pk, fetch_variant=fetch,
                           rounds_per_weight_set=rounds)
        tiles = [rng.integers(-128, 128, (rows, cfg.effective_cols)) for _ in range(4)]
        acts = [rng.integers(-128, 128, (rounds, rows)) for _ in range(4)]
        res = wse.build(cfg).run_stream(tiles, acts)
        worst = min(worst, res.utilization)
        exact &= all(np.array_equal(o, gemm(a, t))
                     for o, a, t in zip(res.outputs_per_set, acts, tiles))
    verdict(3, worst == 1.0 and exact,
            f"steady-state utilization {worst:.3f} over 4 back-to-back sets, outputs exact={exact}")


def test_criterion_4_os_cross_variant(verdict):
    rng = np.random.default_rng(4)
    mismatches = 0
    wrap_bad = 0
    wrapped_cases = 0
    for i in range(CASES):
        pk = bool(i % 2)
        limit = ose.OFFICIAL_MAX_PACKED_CHAIN if pk else 12
        N = int(rng.integers(1, limit + 1))
        G = int(rng.integers(1, 3))
        W = int(rng.integers(1, 5))
        K = int(rng.integers(1, W * 2 * N + 1))
        rows = 4 if pk else 2
        # operand range keeping every result inside signed 24 bits
        vr = int(min(128, np.sqrt((1 << 22) / K)))
        a = rng.integers(-vr, vr, (G, rows, K))
        w = rng.integers(-vr, vr, (G, K, 2))
        bias = rng.integers(-(1 << 21), 1 << 21, (G, rows, 2))
        want = os_oracle(a, w, bias, 64)
        assert np.all(np.abs(want.astype(np.int64)) < 1 << 23)
        outs = [ose.build(ose.OsConfig(chain_len=N, num_groups=G, variant=v, packing_enabled=pk))
                .run(a, w, bias).output for v in ose.Variant]
        if not (np.array_equal(outs[0], outs[1]) and np.array_equal(outs[0], want)):
            mismatches += 1
        # unconstrained: full-range operands and bias, long reductions
        N2 = int(rng.integers(1, 9)) if pk else N
        K2 = 16 * 2 * N2
        a2 = rng.choice([-128, 127], (1, rows, K2)) * (rng.random((1, rows, K2)) < 0.9)
        w2 = rng.choice([-128, 127], (1, K2, 2))
        b2 = rng.integers(-(1 << 23), 1 << 23, (1, rows, 2))
        got = ose.build(ose.OsConfig(chain_len=N2, packing_enabled=pk)).run(a2, w2, b2).output
        exact = os_oracle(a2, w2, b2, 64)
        wrapped_cases += bool(np.any(np.abs(exact.astype(np.int64)) >= 1 << 23))
        if not np.array_equal(got, wrap_array(exact, 24)):
            wrap_bad += 1
    ok = mismatches == 0 and wrap_bad == 0 and wrapped_cases > 0
    verdict(4, ok, f"{CASES} cross-variant scenarios, {mismatches} mismatches; "
                   f"mod 2^24 oracle {CASES - wrap_bad}/{CASES} ({wrapped_cases} overflowed)")


def _high_ticks(tr, name, span):
    return [t for t, v in zip(span, tr.series(name, span)) if v]


def test_criterion_5_os_waveforms(verdict):
    rng = np.random.default_rng(5)
    problems = []
    for N, G, W in [(1, 1, 3), (2, 2, 4), (4, 1, 5), (7, 2, 2), (8, 1, 3)]:
        tr = WaveformTrace()
        cfg = ose.OsConfig(chain_len=N, num_groups=G)
        eng = ose.build(cfg, tr)
        K = W * cfg.k_per_step
        eng.run(rng.integers(-128, 128, (G, 4, K)), rng.integers(-128, 128, (G, K, 2)))
        span = range(tr.changes[-1][0] + 1)
        # four partial-sum pairs every four fast ticks, back to back
        for g in range(G):
            for c in range(2):
                ticks = [o.tick for o in eng.last_chain_outputs[g][c]]
                if len(ticks) != 4 * W or ticks != list(range(ticks[0], ticks[0] + 4 * W)):
                    problems.append(f"N={N} chain {g}/{c} output ticks {ticks[:6]}")
                for j in range(N):
                    pre = f"os/g{g}/c{c}_s{j}"
                    ce1 = _high_ticks(tr, f"{pre}/CE_B1", span)
                    ce2 = _high_ticks(tr, f"{pre}/CE_B2", span)
                    if len(ce1) != W or any(b - a != 4 for a, b in zip(ce1, ce1[1:])) \
                            or [b - a for a, b in zip(ce1, ce2)] != [2] * W:
                        problems.append(f"N={N} {pre} CE {ce1} {ce2}")
                    sel = tr.series(f"{pre}/INMODE_B1", range(ce1[0], ce1[-1] + 4))
                    if any(x == y for x, y in zip(sel, sel[1:])):
                        problems.append(f"N={N} {pre} B select does not alternate")
            ring = f"os/g{g}/ring"
            for t in _high_ticks(tr, f"{ring}/wr_en", span):
                if tr.series(f"{ring}/wr_slot", [t])[0] != t % 4:
                    problems.append(f"N={N} {ring} slot written on tick {t}")
                    break
    verdict(5, not problems,
            "4 pairs per 4 fast ticks, CE_B1/CE_B2 period 4 offset 2, alternating B select, "
            "slot i written on ticks = i mod 4" if not problems else problems[0])


B1024 = {
    # wgt_width, img_width, psum_width, psum_ff, wgt_img_ff, mult_dsp, acc_dsp,
    # mux_lut, addtree_lut, addtree_ff, addtree_carry
    "OFFICIAL": (512, 512, 2304, 3456, 3072, 128, 64, 128, 1152, 1216, 192),
    "ENHANCED": (512, 256, 2304, 3456, 3072, 128, 32, 0, 0, 0, 0),
}
FIELDS = ("wgt_width", "img_width", "psum_width", "psum_ff_bits", "staging_ff_bits",
          "dsp_mult", "dsp_acc", "clb_mux_elems", "addtree_lut", "addtree_ff", "addtree_carry")


def test_criterion_6_b1024_breakdown(verdict):
    wrong = []
    for v in ose.Variant:
        flat = rm.report_os("B1024", v).flat()
        for key, want in zip(FIELDS, B1024[v.value]):
            if flat[key] != want:
                wrong.append(f"{v.value}.{key}={flat[key]} (want {want})")
    verdict(6, not wrong, f"{2 * len(FIELDS) - len(wrong)}/{2 * len(FIELDS)} cells exact"
                          + (f"; {wrong[0]}" if wrong else ""))


def test_criterion_7_ws_14x14_structure(verdict):
    dsp = rm.report_ws(wse.WsConfig(14, 14, packing_enabled=True,
                                    fetch_variant=wse.FetchVariant.DSP_FETCH))
    clb = rm.report_ws(wse.WsConfig(14, 14, packing_enabled=True,
                                    fetch_variant=wse.FetchVariant.CLB_FETCH))
    built = wse.build(wse.WsConfig(14, 14, packing_enabled=True)).num_slices
    ok = (dsp.dsp_total, dsp.weight_reg_bits_clb, clb.weight_reg_bits_clb, built) == (210, 0, 3136, 210)
    verdict(7, ok, f"DSP_FETCH {dsp.dsp_total} slices / {dsp.weight_reg_bits_clb} fabric weight bits, "
                   f"CLB_FETCH {clb.weight_reg_bits_clb} bits, built engine {built} slices")


def test_criterion_8_snn_gated_sum(verdict):
    rng = np.random.default_rng(8)
    bad = 0
    for i in range(CASES):
        fetch = list(snn.SnnFetch)[i % 2]
        cfg = snn.CrossbarConfig(4, 16, weight_bits=8, fetch_variant=fetch)
        shape = (4, 16, snn.LANES)
        w_ab = rng.integers(-128, 128, shape)
        w_c = rng.integers(-128, 128, shape)
        T = int(rng.integers(1, 33))
        spikes = (rng.random((T, 16, 2)) < rng.random()).astype(int)
        if not np.array_equal(snn.run_crossbar(cfg, spikes, w_ab, w_c).output,
                              gated_sum(spikes, w_ab, w_c)):
            bad += 1
    bits = {f: rm.report_snn(snn.CrossbarConfig(4, 16, 8, f)).weight_reg_bits_clb
            for f in snn.SnnFetch}
    ratio = bits[snn.SnnFetch.DSP_FETCH_AB] / bits[snn.SnnFetch.CLB_FETCH]
    verdict(8, bad == 0 and ratio == 0.5,
            f"{CASES} random 4x16 crossbars, {bad} mismatches; fabric weight bits "
            f"{bits[snn.SnnFetch.DSP_FETCH_AB]}/{bits[snn.SnnFetch.CLB_FETCH]} = {ratio}")


def test_criterion_9_determinism(verdict, tmp_path):
    differing = []
    count = 0
    for name in ("os_determinism", "ws_prefetch_swap", "snn_small", "os_b1024_breakdown"):
        dirs = []
        for rep in ("a", "b"):
            out = tmp_path / rep / name
            sc.execute(sc.load_scenario(SCENARIOS / f"{name}.ini"), out, force_vcd=True)
            dirs.append(out)
        files = sorted(p.name for p in dirs[0].iterdir())
        for f in files:
            count += 1
            if (dirs[0] / f).read_bytes() != (dirs[1] / f).read_bytes():
                differing.append(f)
    verdict(9, not differing and count > 0,
            f"{count} report/VCD/output files byte-identical across repeated runs"
            if not differing else f"differs: {differing}")


if __name__ == "__main__":
    import pytest
    raise SystemExit(pytest.main([__file__, "-q"]))

import csv
import json

import numpy as np
import pytest

from dsp48sim import resource_model as rm
from dsp48sim.errors import ConfigError
from dsp48sim.os_engine import OsConfig, Variant, build as build_os, preset
from dsp48sim.snn_crossbar import FIREFLY, CrossbarConfig, SnnFetch, build as build_snn
from dsp48sim.ws_engine import FetchVariant, WsConfig, build as build_ws

B1024 = {
    "OFFICIAL": dict(wgt_width=512, img_width=512, psum_width=2304, psum_ff_bits=3456,
                     staging_ff_bits=3072, dsp_mult=128, dsp_acc=64, clb_mux_elems=128,
                     addtree_lut=1152, addtree_ff=1216, addtree_carry=192),
    "ENHANCED": dict(wgt_width=512, img_width=256, psum_width=2304, psum_ff_bits=3456,
                     staging_ff_bits=3072, dsp_mult=128, dsp_acc=32, clb_mux_elems=0,
                     addtree_lut=0, addtree_ff=0, addtree_carry=0),
}


@pytest.mark.parametrize("variant", list(Variant))
def test_b1024_breakdown(variant):
    flat = rm.report_os("B1024", variant).flat()
    for key, want in B1024[variant.value].items():
        assert flat[key] == want, key


def test_b1024_geometry():
    assert rm.os_geometry(preset("B1024")) == {"oc_groups": 4, "pix_groups": 4,
                                               "ocp": 8, "pp": 8, "icp": 8}


def test_os_floor_case():
    # two chains per group, so one slice per chain still means two multipliers
    rep = rm.report_os(OsConfig(chain_len=1, num_groups=1))
    assert (rep.dsp_mult, rep.dsp_acc, rep.clb_mux_elems) == (2, 2, 0)


def test_os_unknown_preset():
    with pytest.raises(ConfigError):
        rm.report_os("B9")
    with pytest.raises(ConfigError):
        rm.report_os(42)


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("cfg", [dict(chain_len=3, num_groups=2), dict(chain_len=5, num_groups=3),
                                 dict(chain_len=6, packing_enabled=False)])
def test_os_counts_match_built_engine(variant, cfg):
    c = OsConfig(variant=variant, **cfg)
    eng = build_os(c)
    rows = c.tile_rows
    eng.run(np.ones((c.num_groups, rows, 2), dtype=int), np.ones((c.num_groups, 2, 2), dtype=int))
    rep = rm.report_os(c)
    assert (eng.inventory["mult"], eng.inventory["acc"]) == (rep.dsp_mult, rep.dsp_acc)


def test_ws_14x14():
    dsp = rm.report_ws(WsConfig(14, 14, packing_enabled=True, fetch_variant=FetchVariant.DSP_FETCH))
    clb = rm.report_ws(WsConfig(14, 14, packing_enabled=True, fetch_variant=FetchVariant.CLB_FETCH))
    assert dsp.dsp_total == 210 and dsp.weight_reg_bits_clb == 0
    assert clb.dsp_total == 210 and clb.weight_reg_bits_clb == 14 * 28 * 8 == 3136


def test_ws_trivial():
    assert rm.report_ws(WsConfig(1, 1)).dsp_total == 2


@pytest.mark.parametrize("rows,cols,packing", [(3, 5, False), (9, 2, True), (16, 16, True)])
def test_ws_counts_match_built_engine(rows, cols, packing):
    cfg = WsConfig(rows, cols, packing_enabled=packing)
    assert rm.report_ws(cfg).dsp_total == build_ws(cfg).num_slices


def test_snn_reports():
    rep = rm.report_snn(FIREFLY)
    assert rep.dsp_total == 64
    clb = rm.report_snn(CrossbarConfig(4, 16, 8, SnnFetch.CLB_FETCH))
    assert rep.weight_reg_bits_clb / clb.weight_reg_bits_clb == 0.5
    assert rm.report_snn(CrossbarConfig(1, 1)).dsp_total == 1


@pytest.mark.parametrize("fetch", list(SnnFetch))
def test_snn_bits_match_engine(fetch):
    cfg = CrossbarConfig(3, 5, 10, fetch)
    assert rm.report_snn(cfg).weight_reg_bits_clb == build_snn(cfg).clb_weight_register_bits


def test_report_dispatch():
    assert rm.report(WsConfig(2, 2)).engine == "ws"
    assert rm.report(OsConfig(chain_len=2)).engine == "os"
    assert rm.report(FIREFLY).engine == "snn"
    with pytest.raises(ConfigError):
        rm.report("x")


def test_csv_and_json_writers(tmp_path):
    reps = [rm.report_os("B1024", v) for v in Variant]
    p_csv = rm.write_csv(reps, tmp_path / "r.csv")
    p_json = rm.write_json(reps, tmp_path / "r.json")
    rows = list(csv.DictReader(p_csv.open()))
    assert [r["variant"] for r in rows] == ["OFFICIAL", "ENHANCED"]
    assert rows[0]["addtree_ff"] == "1216"
    data = json.loads(p_json.read_text())
    assert data[1]["img_width"] == 256 and data[1]["dsp_total"] == 160
    assert list(data[0]) == rm.FIELDS

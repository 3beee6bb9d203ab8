"""Closed-form structural counts for each engine configuration.

Counts are structural: DSP slices, register bits the simulator models in the
fabric, multiplexer and adder-tree elements, and streamed port widths per slow
tick. Vivado LUT/FF totals are out of scope.

Output-stationary geometry: a group tile is ``rows x 2`` with ``rows`` split
into activation pairs. Groups form a grid of ``pix_groups x oc_groups`` (the
most square factorisation of ``num_groups``), and ``icp`` is the reduction
depth a group consumes per slow tick (``chains_per_group * chain_len``).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Union

from .errors import ConfigError
from .os_engine import OsConfig, Variant, preset
from .snn_crossbar import LANES, CrossbarConfig, SnnFetch
from .ws_engine import FetchVariant, WsConfig, WsEngine

OPERAND_BITS = 8
PSUM_BITS = 18
# Registers per streamed partial-sum bit on the serial-to-parallel path.
# Fitted to the B1024 calibration point (3456 / 2304); not derived.
PSUM_FF_FACTOR = 1.5


@dataclass
class ResourceReport:
    engine: str
    variant: str
    dsp_mult: int = 0
    dsp_acc: int = 0
    clb_mux_elems: int = 0
    addtree_lut: int = 0
    addtree_ff: int = 0
    addtree_carry: int = 0
    weight_reg_bits_clb: int = 0
    staging_ff_bits: int = 0
    psum_ff_bits: int = 0
    port_widths: dict = field(default_factory=dict)

    @property
    def dsp_total(self) -> int:
        return self.dsp_mult + self.dsp_acc

    def flat(self) -> dict:
        d = asdict(self)
        widths = d.pop("port_widths")
        for key in ("wgt_width", "img_width", "psum_width"):
            d[key] = widths.get(key, 0)
        d["dsp_total"] = self.dsp_total
        return d


FIELDS = list(ResourceReport("", "").flat())


def report_ws(config: WsConfig) -> ResourceReport:
    """``dsp_mult = rows*cols``, one accumulator slice per column.

    ``weight_reg_bits_clb``: ``rows * effective_cols * 8`` for the fabric
    shadow chain of ``CLB_FETCH``, 0 when the chain lives in the slices.
    ``staging_ff_bits``: 8-bit activation staging, ``skew[r]`` row registers
    plus ``cols - 1`` column registers per row.
    """
    rows, cols = config.rows, config.cols
    eff = config.effective_cols
    clb = config.fetch_variant is FetchVariant.CLB_FETCH
    skew = WsEngine(config).skew
    staging = sum(s + cols - 1 for s in skew) * OPERAND_BITS
    return ResourceReport(
        engine="ws", variant=config.fetch_variant.value,
        dsp_mult=rows * cols, dsp_acc=cols,
        weight_reg_bits_clb=rows * eff * OPERAND_BITS if clb else 0,
        staging_ff_bits=staging,
        port_widths={"img_width": rows * OPERAND_BITS, "wgt_width": rows * eff * OPERAND_BITS,
                     "psum_width": eff * 24},
    )


def os_geometry(config: OsConfig) -> dict:
    g = config.num_groups
    oc_groups = max(d for d in range(1, math.isqrt(g) + 1) if g % d == 0)
    pix_groups = g // oc_groups
    return {
        "oc_groups": oc_groups,
        "pix_groups": pix_groups,
        "ocp": oc_groups * config.lanes,
        "pp": pix_groups * 2,
        "icp": config.k_per_step,
    }


def report_os(config: Union[OsConfig, str], variant=Variant.ENHANCED) -> ResourceReport:
    """Structural counts for the output-stationary engine.

    With ``L`` lanes (2 when packing), ``C`` chains and ``G`` groups:

    - ``dsp_mult = C * chain_len``
    - ``dsp_acc``: OFFICIAL ``2 * L * G`` (one ONE48 accumulator per lane and
      weight column); ENHANCED ``2 * G`` (one ring pair per group)
    - ``wgt_width = ocp * icp * 8`` (packed-pair stream)
    - ``img_width = pp * icp * 8``, halved for ENHANCED (multiplexed stream)
    - ``psum_width = C * 2 * L * 18``; ``psum_ff = 1.5 * psum_width``
    - ``staging_ff_bits = dsp_mult * 8 * (L + 1)``
    - OFFICIAL only: ``clb_mux = dsp_mult``; the adder tree has ``2L`` outputs
      of width ``w = 18 + ceil(log2 cpg)`` per group, with
      ``lut = G*(cpg-1)*2L*18``, ``ff = G*2L*w``, ``carry = G*(cpg-1)*2L*ceil(w/8)``

    ``config`` may be a preset name such as ``"B1024"``.
    """
    if isinstance(config, str):
        config = preset(config, variant)
    if not isinstance(config, OsConfig):
        raise ConfigError(f"not an OsConfig: {config!r}")
    L = config.lanes
    G = config.num_groups
    cpg = config.chains_per_group
    geo = os_geometry(config)
    mult = config.num_chains * config.chain_len
    official = config.variant is Variant.OFFICIAL
    img = geo["pp"] * geo["icp"] * OPERAND_BITS
    psum = config.num_chains * 2 * L * PSUM_BITS
    rep = ResourceReport(
        engine="os", variant=config.variant.value,
        dsp_mult=mult,
        dsp_acc=2 * L * G if official else 2 * G,
        staging_ff_bits=mult * OPERAND_BITS * (L + 1),
        psum_ff_bits=int(psum * PSUM_FF_FACTOR),
        port_widths={"wgt_width": geo["ocp"] * geo["icp"] * OPERAND_BITS,
                     "img_width": img if official else img // 2,
                     "psum_width": psum},
    )
    if official:
        width = PSUM_BITS + math.ceil(math.log2(cpg))
        outs = 2 * L
        rep.clb_mux_elems = mult
        rep.addtree_lut = G * (cpg - 1) * outs * PSUM_BITS
        rep.addtree_ff = G * outs * width
        rep.addtree_carry = G * (cpg - 1) * outs * math.ceil(width / 8)
    return rep


def report_snn(config: CrossbarConfig) -> ResourceReport:
    """One slice per crossbar cell; fabric loading-path bits per weight set
    are ``4 * weight_bits`` per slice (C set always, A:B set only for CLB_FETCH).
    Spike staging is 2 bits per tick of skew (``j + c`` for chain ``c``, slice ``j``).
    """
    clb = config.fetch_variant is SnnFetch.CLB_FETCH
    sets = 2 if clb else 1
    n = config.num_slices
    skew = sum(j + c for c in range(config.chains) for j in range(config.chain_len))
    return ResourceReport(
        engine="snn", variant=config.fetch_variant.value,
        dsp_mult=n, dsp_acc=0,
        weight_reg_bits_clb=n * sets * LANES * config.weight_bits,
        staging_ff_bits=2 * skew,
        port_widths={"img_width": 2 * config.chain_len,
                     "wgt_width": config.chains * LANES * config.weight_bits},
    )


def report(config) -> ResourceReport:
    if isinstance(config, WsConfig):
        return report_ws(config)
    if isinstance(config, OsConfig):
        return report_os(config)
    if isinstance(config, CrossbarConfig):
        return report_snn(config)
    raise ConfigError(f"no resource model for {type(config).__name__}")


def write_csv(reports: Iterable[ResourceReport], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=FIELDS)
        w.writeheader()
        for r in reports:
            w.writerow(r.flat())
    return path


def write_json(reports: Iterable[ResourceReport], path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([r.flat() for r in reports], indent=2) + "\n")
    return path

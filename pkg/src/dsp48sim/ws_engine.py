"""Weight-stationary systolic array built from DSP48E2 columns.

Each physical column is a cascade of ``rows`` MAC slices (index 0 at the
bottom) topped by one accumulator slice. Partial sums climb the column through
PCOUT/PCIN; activations enter row ``r`` skewed by one tick per row and are
staged one tick per column through fabric registers.

The weight path is double-buffered. The stationary copy sits in the second
input register of the weight pipeline; the next set is shifted in behind it.
With ``DSP_FETCH`` the shift chain is the first input register of every slice,
linked through the dedicated cascade; with ``CLB_FETCH`` it is a chain of
fabric registers driving the slice's direct input.

Without packing, weights use the B pipeline and activations the A pipeline.
With packing, two output columns share a physical column: the packed weight
``w[2c] * 2**18 + w[2c+1]`` is a 27-bit operand, so it rides the A pipeline and
the shared activation goes to B. An 18-bit low field only holds eight biased
INT8 products, so columns taller than eight rows are split into two cascade
segments whose sums are re-laid into 24-bit lanes by wiring and merged by the
accumulator slice in TWO24 mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import packing
from .dsp48e2 import (
    MASK18, Column, Dsp48e2Attrs, Dsp48e2Ports, MuxW, MuxX, MuxY, MuxZ, OpMode,
    SimdMode, Slice, Source, join_lanes, split_lanes, wrap,
)
from .errors import ConfigError, SchedulingError, StimulusError
from .trace import WaveformTrace

SEGMENT_ROWS = packing.MAX_BIASED_TERMS  # 8
MAX_PACKED_ROWS = 2 * SEGMENT_ROWS


class FetchVariant(Enum):
    CLB_FETCH = "CLB_FETCH"
    DSP_FETCH = "DSP_FETCH"


@dataclass(frozen=True)
class WsConfig:
    rows: int
    cols: int
    packing_enabled: bool = False
    fetch_variant: FetchVariant = FetchVariant.DSP_FETCH
    rounds_per_weight_set: Optional[int] = None
    act_stages: int = 2

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"invalid geometry {self.rows}x{self.cols}")
        if self.rounds_per_weight_set is None:
            object.__setattr__(self, "rounds_per_weight_set", self.rows)
        if self.rounds_per_weight_set < self.rows:
            raise ConfigError("rounds_per_weight_set must be >= rows to hide the reload")
        if self.act_stages not in (1, 2):
            raise ConfigError("act_stages must be 1 or 2")
        if self.packing_enabled and self.rows > MAX_PACKED_ROWS:
            raise ConfigError(f"packed columns support at most {MAX_PACKED_ROWS} rows")
        if isinstance(self.fetch_variant, str):
            object.__setattr__(self, "fetch_variant", FetchVariant(self.fetch_variant))

    @property
    def effective_cols(self) -> int:
        return 2 * self.cols if self.packing_enabled else self.cols

    @property
    def num_slices(self) -> int:
        return self.rows * self.cols + self.cols


@dataclass
class WsResult:
    output: np.ndarray
    latency: int
    ticks: int
    utilization: Optional[float] = None
    outputs_per_set: list = field(default_factory=list)


def _check_int8(name, m):
    m = np.asarray(m)
    if m.size and (m.min() < -128 or m.max() > 127):
        raise StimulusError(f"{name} outside signed 8-bit range")
    return m.astype(np.int64)


class WsEngine:
    def __init__(self, config: WsConfig, trace: Optional[WaveformTrace] = None):
        self.config = config
        self.trace = trace
        self.tick = 0
        self.pending = False
        cfg = config
        R = cfg.rows
        self.weight_port = "a" if cfg.packing_enabled else "b"
        dsp_fetch = cfg.fetch_variant is FetchVariant.DSP_FETCH
        w_stages = 2 if dsp_fetch else 1
        if cfg.packing_enabled:
            lower = min(R, SEGMENT_ROWS)
            self.segments = [(0, lower)] + ([(lower, R)] if R > lower else [])
            off = 2 * SEGMENT_ROWS + 1 - R
            self.skew = [r if r < SEGMENT_ROWS else off + r - SEGMENT_ROWS for r in range(R)]
        else:
            self.segments = [(0, R)]
            self.skew = list(range(R))
        seg_bottoms = {lo for lo, _ in self.segments}

        self.columns: list[Column] = []
        for c in range(cfg.cols):
            slices = []
            for r in range(R):
                src = Source.CASCADE if (dsp_fetch and r > 0) else Source.DIRECT
                z = MuxZ.ZERO if (r in seg_bottoms) else MuxZ.PCIN
                op = OpMode(MuxX.M, MuxY.M, z, MuxW.RND if cfg.packing_enabled else MuxW.ZERO)
                kw = dict(static_opmode=op, rnd_constant=packing.LO_BIAS if cfg.packing_enabled else 0)
                if self.weight_port == "b":
                    attrs = Dsp48e2Attrs(breg_stages=w_stages, b_input_source=src, bcascreg=1,
                                         areg_stages=cfg.act_stages, acascreg=1, **kw)
                else:
                    attrs = Dsp48e2Attrs(areg_stages=w_stages, a_input_source=src, acascreg=1,
                                         breg_stages=cfg.act_stages, bcascreg=1, **kw)
                slices.append(Slice(attrs, name=f"r{r}_c{c}"))
            if cfg.packing_enabled:
                rnd = join_lanes((-R * packing.LO_BIAS, 0), SimdMode.TWO24)
                acc = Dsp48e2Attrs(areg_stages=1, breg_stages=1, acascreg=1, bcascreg=1,
                                   simd_mode=SimdMode.TWO24, rnd_constant=rnd,
                                   static_opmode=OpMode(MuxX.AB, MuxY.C, MuxZ.ZERO, MuxW.RND))
            else:
                acc = Dsp48e2Attrs(static_opmode=OpMode(z=MuxZ.PCIN))
            slices.append(Slice(acc, name=f"acc_c{c}"))
            self.columns.append(Column(slices))
        # fabric shadow registers used by CLB_FETCH
        self.ext = [[0] * R for _ in range(cfg.cols)]
        if trace is not None:
            self._declare_trace()

    # -- introspection -------------------------------------------------------

    @property
    def num_slices(self) -> int:
        return sum(len(col) for col in self.columns)

    def stationary_weights(self) -> np.ndarray:
        """Weights currently in the stationary registers, shape rows x effective_cols."""
        return self._decode_grid(lambda s: s.state.a2 if self.weight_port == "a" else s.state.b2)

    def prefetched_weights(self) -> np.ndarray:
        if self.config.fetch_variant is FetchVariant.CLB_FETCH:
            grid = [[self.ext[c][r] for c in range(self.config.cols)] for r in range(self.config.rows)]
            return self._decode_values(grid)
        return self._decode_grid(lambda s: s.state.a1 if self.weight_port == "a" else s.state.b1)

    def _decode_grid(self, get):
        grid = [[get(self.columns[c][r]) for c in range(self.config.cols)]
                for r in range(self.config.rows)]
        return self._decode_values(grid)

    def _decode_values(self, grid):
        if not self.config.packing_enabled:
            return np.array(grid, dtype=np.int64)
        out = np.zeros((self.config.rows, self.config.effective_cols), dtype=np.int64)
        for r, row in enumerate(grid):
            for c, v in enumerate(row):
                out[r, 2 * c], out[r, 2 * c + 1] = packing.unpack_packed27(wrap(v, 27))
        return out

    # -- public operations ---------------------------------------------------

    def preload_weights(self, tile) -> int:
        """Shift ``tile`` into the prefetch registers; returns ticks consumed (rows)."""
        if self.pending:
            raise SchedulingError("previous preload has not been swapped in")
        grid = self._weight_grid(tile)
        n = self._execute(sets=[], trailing=grid)
        self.pending = True
        return n

    def swap_weights(self) -> None:
        """Move every prefetched weight into its stationary register on one tick."""
        if not self.pending:
            raise SchedulingError("swap requested with no pending preload")
        R, C = self.config.rows, self.config.cols
        plan = _Plan()
        plan.ce2 = {(0, r, c) for r in range(R) for c in range(C)}
        plan.n_ticks = 1
        self._run_plan(plan)
        self.pending = False

    def run(self, acts, prefetch=None) -> WsResult:
        """Stream ``acts`` (batch x rows) through the resident weights.

        ``prefetch`` optionally shifts the next tile in while computing; it is
        left pending for :meth:`swap_weights`.
        """
        acts = self._check_acts(acts)
        trailing = None
        if prefetch is not None:
            if self.pending:
                raise SchedulingError("previous preload has not been swapped in")
            trailing = self._weight_grid(prefetch)
        if acts.shape[0] == 0 and trailing is None:
            return WsResult(np.zeros((0, self.config.effective_cols), dtype=np.int64), 0, 0)
        res = self._execute(sets=[(None, acts)], trailing=trailing, collect=True)
        if trailing is not None:
            self.pending = True
        return res

    def run_stream(self, tiles: Sequence, acts_list: Sequence) -> WsResult:
        """Back-to-back weight sets with prefetch overlapping compute.

        Set ``k`` stays resident for ``max(len(acts_list[k]), rounds_per_weight_set)``
        rounds; shorter batches leave idle rounds.
        """
        if len(tiles) != len(acts_list) or not tiles:
            raise StimulusError("need one activation batch per weight tile")
        if self.pending:
            raise SchedulingError("previous preload has not been swapped in")
        sets = [(self._weight_grid(t), self._check_acts(a)) for t, a in zip(tiles, acts_list)]
        return self._execute(sets=sets, trailing=None, collect=True)

    # -- scheduling ----------------------------------------------------------

    def _check_acts(self, acts):
        acts = _check_int8("activations", acts)
        if acts.ndim != 2 or acts.shape[1] != self.config.rows:
            raise StimulusError(f"activations must be batch x {self.config.rows}")
        return acts

    def _weight_grid(self, tile):
        cfg = self.config
        tile = _check_int8("weights", tile)
        if tile.shape != (cfg.rows, cfg.effective_cols):
            raise StimulusError(f"weight tile must be {cfg.rows}x{cfg.effective_cols}, got {tile.shape}")
        if cfg.packing_enabled:
            return [[int(packing.pack_word(tile[r, 2 * c], tile[r, 2 * c + 1]))
                     for c in range(cfg.cols)] for r in range(cfg.rows)]
        return [[int(tile[r, c]) for c in range(cfg.cols)] for r in range(cfg.rows)]

    def _acc_offset(self) -> int:
        cfg = self.config
        L0 = cfg.act_stages + 1
        if cfg.packing_enabled:
            top = self.segments[0][1] - 1
            return self.skew[top] + L0 + 2
        return cfg.rows - 1 + L0 + 1

    def _execute(self, sets, trailing=None, collect=False):
        cfg = self.config
        R, C = cfg.rows, cfg.cols
        st = cfg.act_stages
        plan = _Plan()
        swapping = bool(sets) and sets[0][0] is not None
        base = max(0, R - st + 1) if swapping else 0
        start = 0
        prev_swap = None  # S_c^{k-1} with c = 0
        first_e = None
        for k, (grid, acts) in enumerate(sets):
            B = acts.shape[0]
            dur = max(B, cfg.rounds_per_weight_set) if swapping else B
            if grid is not None:
                s0 = base + start + st - 1
                f0 = prev_swap if prev_swap is not None else s0 - R
                self._plan_prefetch(plan, grid, f0)
                for c in range(C):
                    for r in range(R):
                        plan.ce2.add((s0 + self.skew[r] + c, r, c))
                prev_swap = s0
            for i in range(B):
                g = start + i
                for c in range(C):
                    for r in range(R):
                        e = base + g + self.skew[r] + c
                        plan.act[(e, r, c)] = int(acts[i, r])
                        plan.busy.setdefault((r, c), []).append(e + st)
                    plan.capture[(base + g + c + self._acc_offset(), c)] = (k, i)
                if first_e is None:
                    first_e = base + g
            start += dur
        if trailing is not None:
            if prev_swap is not None:
                self._plan_prefetch(plan, trailing, prev_swap)
            else:
                self._plan_prefetch(plan, trailing, base, stagger=False)
        ticks = [t for t, _, _ in plan.act] + [t for t, _, _ in plan.ce1] + \
                [t for t, _, _ in plan.ce2] + [t for t, _ in plan.capture]
        plan.n_ticks = max(ticks) + 1 if ticks else 0
        outs = self._run_plan(plan)
        if not collect:
            return plan.n_ticks

        E = cfg.effective_cols
        per_set = [np.zeros((acts.shape[0], E), dtype=np.int64) for _, acts in sets]
        for (t, c), (k, i) in plan.capture.items():
            val = outs[(t, c)]
            if cfg.packing_enabled:
                lo, hi = split_lanes(val, SimdMode.TWO24)
                per_set[k][i, 2 * c] = hi
                per_set[k][i, 2 * c + 1] = lo
            else:
                per_set[k][i, c] = wrap(val, 32)
        latency = (base + self._acc_offset() - (first_e or 0) + 1) if plan.capture else 0
        util = _utilization(plan.busy) if plan.busy else None
        output = np.concatenate(per_set, axis=0) if per_set else np.zeros((0, E), dtype=np.int64)
        return WsResult(output, latency, plan.n_ticks, util, per_set)

    def _plan_prefetch(self, plan, grid, f0, stagger=True):
        R = self.config.rows
        for c in range(self.config.cols):
            f = f0 + c if stagger else f0
            for j in range(R):
                plan.inject[(f + j, c)] = grid[R - 1 - j][c]
            for i in range(R):
                for t in range(f + i, f + R):
                    plan.ce1.add((t, i, c))

    def _run_plan(self, plan):
        cfg = self.config
        R = cfg.rows
        wp = self.weight_port
        clb = cfg.fetch_variant is FetchVariant.CLB_FETCH
        packed = cfg.packing_enabled
        outs = {}
        for t in range(plan.n_ticks):
            for c, col in enumerate(self.columns):
                ext = self.ext[c]
                ports = []
                for r in range(R):
                    ce1 = (t, r, c) in plan.ce1
                    ce2 = (t, r, c) in plan.ce2
                    act = plan.act.get((t, r, c), 0)
                    if clb:
                        wval = ext[r]
                    else:
                        wval = plan.inject.get((t, c), 0) if r == 0 else 0
                    if wp == "b":
                        p = Dsp48e2Ports(a=act, b=wval, ce_b1=ce1 and not clb, ce_b2=ce2)
                    else:
                        p = Dsp48e2Ports(b=act, a=wval, ce_a1=ce1 and not clb, ce_a2=ce2)
                    ports.append(p)
                if packed:
                    lower_top = col[self.segments[0][1] - 1].outputs.p
                    word = _biased_to_lanes(lower_top)
                    acc = Dsp48e2Ports(a=word >> 18, b=((word & MASK18) ^ 0x20000) - 0x20000)
                    if len(self.segments) > 1:
                        acc.c = _biased_to_lanes(col[R - 1].outputs.p)
                else:
                    acc = Dsp48e2Ports()
                ports.append(acc)
                if clb:
                    new_ext = list(ext)
                    for i in range(R):
                        if (t, i, c) in plan.ce1:
                            new_ext[i] = plan.inject.get((t, c), 0) if i == 0 else ext[i - 1]
                res = col.tick(ports, check=False)
                if clb:
                    self.ext[c] = new_ext
                if (t, c) in plan.capture:
                    outs[(t, c)] = res[-1].p
                if self.trace is not None:
                    self._sample(self.tick + t, c, plan, t)
        self.tick += plan.n_ticks
        return outs

    # -- tracing ---------------------------------------------------------------

    def _reg_names(self):
        u = self.weight_port.upper()
        return f"{u}1", f"{u}2", f"CE_{u}1", f"CE_{u}2"

    def _declare_trace(self):
        w1, w2, ce1, ce2 = self._reg_names()
        width = 30 if self.weight_port == "a" else 18
        for c in range(self.config.cols):
            for r in range(self.config.rows):
                pre = f"ws/r{r}_c{c}/"
                self.trace.declare(pre + w1, width)
                self.trace.declare(pre + w2, width)
                self.trace.declare(pre + ce1, 1)
                self.trace.declare(pre + ce2, 1)
                self.trace.declare(pre + "P", 48)
            self.trace.declare(f"ws/acc_c{c}/P", 48)

    def _sample(self, gt, c, plan, t):
        w1, w2, ce1, ce2 = self._reg_names()
        col = self.columns[c]
        clb = self.config.fetch_variant is FetchVariant.CLB_FETCH
        for r in range(self.config.rows):
            st = col[r].state
            pre = f"ws/r{r}_c{c}/"
            s1 = self.ext[c][r] if clb else (st.a1 if self.weight_port == "a" else st.b1)
            s2 = st.a2 if self.weight_port == "a" else st.b2
            self.trace.sample(gt, pre + w1, s1)
            self.trace.sample(gt, pre + w2, s2)
            self.trace.sample(gt, pre + ce1, int((t, r, c) in plan.ce1))
            self.trace.sample(gt, pre + ce2, int((t, r, c) in plan.ce2))
            self.trace.sample(gt, pre + "P", st.p)
        self.trace.sample(gt, f"ws/acc_c{c}/P", col[-1].state.p)


class _Plan:
    def __init__(self):
        self.act: dict = {}
        self.inject: dict = {}
        self.ce1: set = set()
        self.ce2: set = set()
        self.capture: dict = {}
        self.busy: dict = {}
        self.n_ticks = 0


def _biased_to_lanes(p: int) -> int:
    """Fabric re-wiring of a biased packed sum into TWO24 lanes (lane 0 = low field)."""
    hi, lo = packing.biased_fields(p)
    return join_lanes((lo, hi), SimdMode.TWO24)


def _utilization(busy: dict) -> float:
    """Fraction of steady-state ticks in which every MAC slice does useful work.

    The steady window runs from the tick the last slice starts to the tick the
    first slice finishes.
    """
    sets = {k: set(v) for k, v in busy.items()}
    lo = max(min(v) for v in sets.values())
    hi = min(max(v) for v in sets.values())
    if hi < lo:
        return 0.0
    full = sum(1 for t in range(lo, hi + 1) if all(t in v for v in sets.values()))
    return full / (hi - lo + 1)


def build(config: WsConfig, trace: Optional[WaveformTrace] = None) -> WsEngine:
    return WsEngine(config, trace)

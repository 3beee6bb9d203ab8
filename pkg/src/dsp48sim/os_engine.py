"""Output-stationary engine in the style of a DPU B1024 convolution core.

A group holds ``chains_per_group`` inner-product chains of ``chain_len``
slices. Chains run on the fast clock (two fast ticks per slow tick); every
other part of the design runs on the slow clock. Slice ``j`` of a chain works
one fast tick behind slice ``j-1`` so its product meets the partial sum coming
up PCIN.

Two variants are modelled:

``ENHANCED``
    The weight multiplexing happens inside the slice. B1 and B2 each load a
    weight straight from the B port (one weight per slow tick) and the INMODE
    B-select flips between them every fast tick. The A pipeline carries the
    packed activation pair. Each group finishes a 4x2 tile with a ring
    accumulator: two cascaded TWO24 slices plus two fabric delay registers
    that form a four-tick loop, so four slot pairs circulate.

``OFFICIAL``
    A fabric DDR multiplexer presents two weights per slow tick to a
    one-register B path. Chain sums cross back to the slow domain through
    flip-flops, get their lanes corrected in LUTs and combined by a LUT adder
    tree, then go to ONE48 accumulators that add an INT26 bias through the
    pre-adder and keep 29-bit results.

Slice parity: stream values change only on slow ticks, but a slice at an odd
fast offset needs them half a slow tick later. Those slices use a one-stage A
pipeline with the D register enabled. Even-offset slices use the two-stage A
pipeline and read D straight from a slow staging register.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import packing
from .dsp48e2 import (
    MASK18, Column, Dsp48e2Attrs, Dsp48e2Ports, MuxW, MuxX, MuxY, MuxZ, OpMode,
    SelB, SimdMode, Slice, Stage2Input, join_lanes, split_lanes, wrap,
)
from .errors import ConfigError, SchedulingError, StimulusError
from .trace import WaveformTrace

RING_LOOP = 4
ENHANCED_RESULT_BITS = 24
OFFICIAL_RESULT_BITS = 29
OFFICIAL_BIAS_BITS = 26
# A raw (unbiased) packed chain sum keeps its low field in signed 18 bits for
# at most 7 INT8 products; the enhanced chain adds a bias and gets 8.
OFFICIAL_MAX_PACKED_CHAIN = ((1 << (packing.LANE_SHIFT - 1)) - 1) // (128 * 128)


class Variant(Enum):
    OFFICIAL = "OFFICIAL"
    ENHANCED = "ENHANCED"


@dataclass(frozen=True)
class OsConfig:
    chain_len: int
    chains_per_group: int = 2
    num_groups: int = 1
    variant: Variant = Variant.ENHANCED
    packing_enabled: bool = True
    windows: int = 1

    def __post_init__(self):
        if isinstance(self.variant, str):
            object.__setattr__(self, "variant", Variant(self.variant.upper()))
        if self.chain_len < 1:
            raise ConfigError("chain_len must be >= 1")
        if self.chains_per_group < 1 or self.num_groups < 1:
            raise ConfigError("chains_per_group and num_groups must be >= 1")
        if self.windows < 1:
            raise ConfigError("windows must be >= 1")
        if self.variant is Variant.ENHANCED and self.chains_per_group != 2:
            raise ConfigError("the ring accumulator pairs exactly two chains per group")
        if self.packing_enabled:
            limit = (packing.MAX_BIASED_TERMS if self.variant is Variant.ENHANCED
                     else OFFICIAL_MAX_PACKED_CHAIN)
            if self.chain_len > limit:
                raise ConfigError(
                    f"packed {self.variant.value} chains hold at most {limit} slices")

    @property
    def acc_width(self) -> int:
        return 24 if self.variant is Variant.ENHANCED else 48

    @property
    def result_bits(self) -> int:
        return ENHANCED_RESULT_BITS if self.variant is Variant.ENHANCED else OFFICIAL_RESULT_BITS

    @property
    def lanes(self) -> int:
        return 2 if self.packing_enabled else 1

    @property
    def tile_rows(self) -> int:
        """Output rows of one group tile (two activation pairs, or two rows)."""
        return 2 * self.lanes

    @property
    def num_chains(self) -> int:
        return self.num_groups * self.chains_per_group

    @property
    def k_per_step(self) -> int:
        """Reduction depth consumed by one group per window (ENHANCED) or slow step (OFFICIAL)."""
        return self.chains_per_group * self.chain_len


PRESETS = {"B1024": dict(chain_len=4, chains_per_group=2, num_groups=16)}


def preset(name: str, variant=Variant.ENHANCED, **overrides) -> OsConfig:
    try:
        kw = dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}") from None
    kw.update(overrides)
    return OsConfig(variant=variant, **kw)


# -- streams -----------------------------------------------------------------


@dataclass
class InterleavedStreams:
    """Unskewed stimulus for one chain, as seen by its bottom slice.

    ``a_stream[m, j]`` holds the ``(A, D)`` port words of slice ``j`` in slow tick
    ``m`` and ``b_stream[m, j]`` its B port word. The control waveforms are per
    fast tick. Window ``n`` multiplies on fast ticks ``4n+2 .. 4n+5``.
    """

    a_stream: np.ndarray
    b_stream: np.ndarray
    inmode_waveform: list
    ce_b1: list
    ce_b2: list
    a_tags: list
    b_tags: list
    windows: int
    packing: bool

    @property
    def chain_len(self) -> int:
        return self.a_stream.shape[1]

    def product_schedule(self) -> list[tuple[int, int, int, int, int]]:
        """Replay the waveforms and list ``(window, phase, slice, row, col)`` per product.

        ``row`` is the activation row and ``col`` the weight column actually
        in the selected B register; ``slice`` doubles as the in-chain k index.
        """
        out = []
        b1 = b2 = -1
        lanes = 2 if self.packing else 1
        for u in range(len(self.ce_b1)):
            # products read the registers as they stand before this edge
            n, q = divmod(u - 2, RING_LOOP)
            if u >= 2 and n < self.windows:
                pair = self.a_tags[u // 2]
                col = b1 if self.inmode_waveform[u] is SelB.B1 else b2
                for j in range(self.chain_len):
                    for lane in range(lanes):
                        out.append((n, q, j, lanes * pair + lane, col))
            if self.ce_b1[u]:
                b1 = self.b_tags[u // 2]
            if self.ce_b2[u]:
                b2 = self.b_tags[u // 2]
        return out


def _as_int8(name, m, ndim):
    arr = np.asarray(m)
    if arr.ndim != ndim:
        raise StimulusError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if arr.size and (arr.min() < -128 or arr.max() > 127):
        raise StimulusError(f"{name} outside signed 8-bit range")
    return arr.astype(np.int64)


def _pair_words(acts, rows, k, packing_on):
    """(A, D) port words for the activation pair/row at reduction index ``k``."""
    if packing_on:
        lo, hi = int(acts[rows[0], k]), int(acts[rows[1], k])
        return hi << packing.LANE_SHIFT, lo
    return int(acts[rows[0], k]), 0


def interleave(acts, wts, packing_enabled: bool = True,
               chain_len: Optional[int] = None) -> InterleavedStreams:
    """Arrange a ``rows x K`` by ``K x 2`` tile into one chain's streams.

    ``rows`` is 4 with packing (two activation pairs) and 2 without. ``K`` is
    split into windows of ``chain_len`` (default: all of ``K`` in one window).
    """
    acts = _as_int8("acts", acts, 2)
    wts = _as_int8("wts", wts, 2)
    rows = 4 if packing_enabled else 2
    if acts.shape[0] != rows or wts.shape[1] != 2 or acts.shape[1] != wts.shape[0]:
        raise StimulusError(
            f"expected acts {rows}xK and wts Kx2, got {acts.shape} and {wts.shape}")
    K = acts.shape[1]
    N = chain_len or K
    if N < 1 or K < 1:
        raise StimulusError("empty reduction")
    W = -(-K // N)
    lanes = 2 if packing_enabled else 1
    slow = 2 * W + 1
    a_stream = np.zeros((slow, N, 2), dtype=np.int64)
    b_stream = np.zeros((slow, N), dtype=np.int64)
    a_tags = [-1] * slow
    b_tags = [-1] * slow
    for n in range(W):
        for p in range(2):
            a_tags[2 * n + 1 + p] = p
        b_tags[2 * n] = 0
        b_tags[2 * n + 1] = 1
        for j in range(N):
            k = n * N + j
            if k >= K:
                continue
            for p in range(2):
                prow = [lanes * p + i for i in range(lanes)]
                a_stream[2 * n + 1 + p, j] = _pair_words(acts, prow, k, packing_enabled)
            b_stream[2 * n, j] = wts[k, 0]
            b_stream[2 * n + 1, j] = wts[k, 1]
    fast = 4 * W + 2
    inmode = [SelB.B1 if u % 2 == 0 else SelB.B2 for u in range(fast)]
    ce_b1 = [u % 4 == 0 and u < 4 * W for u in range(fast)]
    ce_b2 = [u % 4 == 2 and u < 4 * W for u in range(fast)]
    return InterleavedStreams(a_stream, b_stream, inmode, ce_b1, ce_b2, a_tags, b_tags,
                              W, packing_enabled)


# -- ring accumulator --------------------------------------------------------


def _ab_ports(word: int) -> tuple[int, int]:
    """Split a 48-bit word across the A (upper 30) and B (lower 18) ports."""
    return wrap(word >> 18, 30), wrap(word & MASK18, 18)


@dataclass(frozen=True)
class SlowRecord:
    slow_tick: int
    slot: int
    lanes: tuple[int, int]


class RingAccumulator:
    """Combine stage and accumulate stage closing a four-tick loop.

    The combine stage adds the two chain words (A:B and C, both registered);
    its P cascades into the accumulate stage, which adds the slot's previous
    value coming back through two fabric delay registers into CREG, plus the
    packing compensation on W. During the first window the accumulate stage
    takes the slot's bias from its own A:B instead of the feedback.

    A word presented with :meth:`tick` at tick ``t`` lands in slot ``(t+2) % 4``.
    """

    def __init__(self, compensation: int = 0, trace: Optional[WaveformTrace] = None,
                 prefix: str = "ring"):
        combine = Slice(Dsp48e2Attrs(
            areg_stages=1, breg_stages=1, acascreg=1, bcascreg=1, creg_enabled=True,
            mreg_enabled=False,
            simd_mode=SimdMode.TWO24,
            static_opmode=OpMode(MuxX.AB, MuxY.C, MuxZ.ZERO, MuxW.ZERO)), name="combine")
        accumulate = Slice(Dsp48e2Attrs(
            areg_stages=1, breg_stages=1, acascreg=1, bcascreg=1, creg_enabled=True,
            mreg_enabled=False,
            simd_mode=SimdMode.TWO24, rnd_constant=compensation), name="accumulate")
        self.column = Column([combine, accumulate])
        self.d1 = 0
        self.d2 = 0
        self.tick_count = 0
        self.writes: list[tuple[int, int, int]] = []
        self._mode: dict[int, str] = {}
        self._bias: dict[int, int] = {}
        self._fed = 0
        self.trace = trace
        self.prefix = prefix
        if trace is not None:
            for name, width in (("P1", 48), ("P2", 48), ("D1", 48), ("D2", 48),
                                ("wr_en", 1), ("wr_slot", 2)):
                trace.declare(f"{prefix}/{name}", width)

    @property
    def slot_index(self) -> int:
        return self.tick_count % RING_LOOP

    def tick(self, word_a: int = 0, word_b: int = 0, mode: Optional[str] = None,
             bias_word: int = 0) -> None:
        """Advance one fast tick.

        ``mode`` tags the presented words: ``"init"`` (first window, slot
        starts from ``bias_word``), ``"acc"`` (later windows) or None (idle;
        the slots just circulate).
        """
        t = self.tick_count
        if mode is not None:
            self._mode[t + 2] = mode
            self._bias[t + 1] = bias_word
            self._fed += 1
        m2 = self._mode.pop(t, None)
        ab = self._bias.pop(t, 0)
        a0, b0 = _ab_ports(word_a)
        p_comb = Dsp48e2Ports(a=a0, b=b0, c=word_b)
        a1, b1 = _ab_ports(ab)
        if m2 == "init":
            op = (MuxX.AB, MuxY.ZERO, MuxZ.PCIN, MuxW.RND)
        elif m2 == "acc":
            op = (MuxX.ZERO, MuxY.C, MuxZ.PCIN, MuxW.RND)
        else:
            op = (MuxX.ZERO, MuxY.C, MuxZ.ZERO, MuxW.ZERO)
        p_acc = Dsp48e2Ports(a=a1, b=b1, c=self.d2, opmode_x=op[0], opmode_y=op[1],
                             opmode_z=op[2], opmode_w=op[3])
        p2_before = self.column[1].state.p
        self.column.tick([p_comb, p_acc], check=False)
        self.d2, self.d1 = self.d1, p2_before
        if m2 is not None:
            self.writes.append((t, t % RING_LOOP, self.column[1].state.p))
        if self.trace is not None:
            pre = self.prefix
            self.trace.record(t, {
                f"{pre}/P1": self.column[0].state.p, f"{pre}/P2": self.column[1].state.p,
                f"{pre}/D1": self.d1, f"{pre}/D2": self.d2,
                f"{pre}/wr_en": int(m2 is not None),
            })
            if m2 is not None:
                self.trace.sample(t, f"{pre}/wr_slot", t % RING_LOOP)
        self.tick_count += 1

    def window_open(self) -> bool:
        return self._fed % RING_LOOP != 0

    def drain(self) -> list[SlowRecord]:
        """Move the four slots to the slow domain through the delay registers.

        The loop keeps circulating; on two consecutive slow edges the pair
        ``(D2, D1)`` is sampled, which covers all four slots.
        """
        if self.window_open():
            raise SchedulingError("drain requested before the accumulation window completed")
        self.flush()
        records: list[SlowRecord] = []
        while len(records) < RING_LOOP:
            records += self.drain_step()
        return records

    def flush(self) -> None:
        """Idle until every presented word has been written to its slot."""
        while self._mode:
            self.tick()

    def drain_step(self) -> list[SlowRecord]:
        """One idle tick of the drain; returns the records sampled on it."""
        self.tick()
        t = self.tick_count - 1
        # sample after odd ticks so the next (even) tick is a slow edge
        if t % 2 == 0:
            return []
        records = []
        for reg, age in ((self.d2, 2), (self.d1, 1)):
            slot = (t - age) % RING_LOOP
            records.append(SlowRecord((t + 1) // 2, slot, split_lanes(reg, SimdMode.TWO24)))
        return records


def ring_accumulate(chain_pairs: Sequence, bias=(0, 0), windows: Optional[int] = None,
                    compensation=(0, 0), trace: Optional[WaveformTrace] = None
                    ) -> RingAccumulator:
    """Feed per-tick lane pairs of two chains into a fresh ring.

    ``chain_pairs`` holds one sequence of ``(lane0, lane1)`` per chain, four per
    window. Input ``i`` lands in slot ``i % 4``. ``bias`` is a lane pair for all
    slots or a list of four. Call :func:`serial_to_parallel` to read the slots.
    """
    if len(chain_pairs) != 2:
        raise ConfigError(f"the ring combines exactly two chains, got {len(chain_pairs)}")
    pa, pb = (list(c) for c in chain_pairs)
    if len(pa) != len(pb):
        raise StimulusError("chains supplied different numbers of pairs")
    if windows is None:
        windows = len(pa) // RING_LOOP
    if windows < 1 or len(pa) != RING_LOOP * windows:
        raise StimulusError(f"need {RING_LOOP} pairs per window")
    slot_bias = _slot_bias_words(bias)
    ring = RingAccumulator(join_lanes(tuple(compensation), SimdMode.TWO24), trace)
    ring.tick()
    ring.tick()
    for i in range(len(pa)):
        ring.tick(join_lanes(tuple(pa[i]), SimdMode.TWO24),
                  join_lanes(tuple(pb[i]), SimdMode.TWO24),
                  "init" if i < RING_LOOP else "acc", slot_bias[i % RING_LOOP])
    return ring


def _slot_bias_words(bias) -> list[int]:
    arr = np.asarray(bias, dtype=object)
    if arr.shape == (2,):
        words = [tuple(int(v) for v in arr)] * RING_LOOP
    elif arr.shape == (RING_LOOP, 2):
        words = [tuple(int(v) for v in row) for row in arr]
    else:
        raise StimulusError(f"bias must be a lane pair or 4 lane pairs, got shape {arr.shape}")
    for w in words:
        for v in w:
            if not -(1 << 23) <= v < (1 << 23):
                raise StimulusError(f"bias {v} outside signed 24-bit range")
    return [join_lanes(w, SimdMode.TWO24) for w in words]


def serial_to_parallel(ring: RingAccumulator) -> list[SlowRecord]:
    return ring.drain()


def slots_from_records(records: Sequence[SlowRecord]) -> np.ndarray:
    out = np.zeros((RING_LOOP, 2), dtype=np.int64)
    for r in records:
        out[r.slot] = r.lanes
    return out


# -- engine ------------------------------------------------------------------


@dataclass
class TileResult:
    """Outputs of one run: ``output[g]`` is group ``g``'s tile."""

    output: np.ndarray
    fast_ticks: int
    slow_ticks: int
    active_slow_ticks: int
    counters: dict = field(default_factory=dict)
    records: list = field(default_factory=list)


@dataclass
class ChainOutput:
    tick: int
    window: int
    phase: int
    pair: tuple[int, int]


def _slice_stage_cfg(shift: int, packing_on: bool) -> tuple[int, bool]:
    """A pipeline depth and D register use for a slice ``shift`` fast ticks late."""
    if shift % 2 == 0:
        return 2, False
    return 1, packing_on


def _expand_a(stream_a, shift, n_slow):
    """Map an unskewed (A, D) slow stream onto the port schedule of a shifted slice."""
    a_port = np.zeros(n_slow, dtype=np.int64)
    d_port = np.zeros(n_slow, dtype=np.int64)
    for m in range(len(stream_a)):
        a, d = int(stream_a[m][0]), int(stream_a[m][1])
        if shift % 2 == 0:
            ma = m + shift // 2 - 1
            md = ma + 1
        else:
            ma = md = m + (shift - 1) // 2
        if ma >= 0 and (a or d):
            a_port[ma] = a
            d_port[md] = d
    return a_port, d_port


class OsEngine:
    def __init__(self, config: OsConfig, trace: Optional[WaveformTrace] = None):
        self.config = config
        self.trace = trace
        # slices instantiated by the most recent run
        self.inventory = {"mult": 0, "acc": 0}

    # shared chain construction
    def _chain(self, shifts, packing_on, biased, official):
        N = self.config.chain_len
        slices = []
        for j in range(N):
            areg, dreg = _slice_stage_cfg(shifts[j], packing_on)
            if official:
                breg = 2 if shifts[j] % 2 == 0 else 1
                b2_input = Stage2Input.STAGE1
            else:
                breg, b2_input = 2, Stage2Input.DIRECT
            slices.append(Slice(Dsp48e2Attrs(
                areg_stages=areg, breg_stages=breg, use_preadder=packing_on,
                dreg_enabled=dreg, b2_input=b2_input,
                rnd_constant=packing.LO_BIAS if biased else 0,
                acascreg=1 if areg == 1 else 2, bcascreg=1 if breg == 1 else 2,
                static_opmode=OpMode(MuxX.M, MuxY.M, MuxZ.PCIN if j else MuxZ.ZERO,
                                     MuxW.RND if biased else MuxW.ZERO)), name=f"s{j}"))
        return Column(slices)

    def _split_inputs(self, acts, wts, bias):
        cfg = self.config
        G = cfg.num_groups
        acts = np.asarray(acts)
        wts = np.asarray(wts)
        if acts.ndim == 2:
            acts = acts[None]
        if wts.ndim == 2:
            wts = wts[None]
        acts = _as_int8("acts", acts, 3)
        wts = _as_int8("wts", wts, 3)
        if acts.shape[0] != G or wts.shape[0] != G:
            raise StimulusError(f"expected stimulus for {G} groups")
        if acts.shape[1] != cfg.tile_rows or wts.shape[2] != 2 or acts.shape[2] != wts.shape[1]:
            raise StimulusError(
                f"expected acts {cfg.tile_rows}xK and wts Kx2 per group, "
                f"got {acts.shape[1:]} and {wts.shape[1:]}")
        if acts.shape[2] < 1:
            raise StimulusError("empty reduction")
        if bias is None:
            bias = np.zeros((G, cfg.tile_rows, 2), dtype=np.int64)
        bias = np.asarray(bias, dtype=object)
        if bias.ndim == 2:
            bias = bias[None]
        if bias.shape != (G, cfg.tile_rows, 2):
            raise StimulusError(f"bias must be {cfg.tile_rows}x2 per group")
        return acts, wts, bias

    def run(self, acts, wts, bias=None) -> TileResult:
        """Compute ``acts @ wts + bias`` per group.

        ``acts`` is ``(groups, rows, K)`` (or ``(rows, K)`` with one group),
        ``wts`` is ``(groups, K, 2)``; ``rows`` is 4 with packing and 2 without.
        """
        acts, wts, bias = self._split_inputs(acts, wts, bias)
        if self.config.variant is Variant.ENHANCED:
            return self._run_enhanced(acts, wts, bias)
        return self._run_official(acts, wts, bias)

    # -- ENHANCED ------------------------------------------------------------

    def _offset(self) -> int:
        # aligns the ring write of phase q with slot q
        return (-self.config.chain_len - 5) % RING_LOOP

    def _run_enhanced(self, acts, wts, bias) -> TileResult:
        cfg = self.config
        N = cfg.chain_len
        K = acts.shape[2]
        b = bias.astype(np.int64)
        if np.any((b < -(1 << 23)) | (b >= 1 << 23)):
            raise StimulusError("ENHANCED bias must fit signed 24 bits")
        streams = []
        for g in range(cfg.num_groups):
            per_chain = []
            W = -(-K // cfg.k_per_step)
            for q in range(2):
                ks = [n * cfg.k_per_step + q * N + j for n in range(W) for j in range(N)]
                a = np.zeros((cfg.tile_rows, W * N), dtype=np.int64)
                w = np.zeros((W * N, 2), dtype=np.int64)
                for idx, k in enumerate(ks):
                    if k < K:
                        a[:, idx] = acts[g, :, k]
                        w[idx] = wts[g, k]
                per_chain.append(interleave(a, w, cfg.packing_enabled, N))
            streams.append(per_chain)
        bias_words = []
        for g in range(cfg.num_groups):
            words = []
            for q in range(RING_LOOP):
                p, j = divmod(q, 2)
                if cfg.packing_enabled:
                    words.append((int(bias[g, 2 * p, j]), int(bias[g, 2 * p + 1, j])))
                else:
                    words.append((int(bias[g, p, j]), 0))
            bias_words.append(words)
        res = self.simulate_enhanced(streams, bias_words)
        self.last_chain_outputs = res["chain_outputs"]
        out = np.zeros((cfg.num_groups, cfg.tile_rows, 2), dtype=np.int64)
        for g, slots in enumerate(res["slots"]):
            for q in range(RING_LOOP):
                p, j = divmod(q, 2)
                if cfg.packing_enabled:
                    out[g, 2 * p, j], out[g, 2 * p + 1, j] = slots[q]
                else:
                    out[g, p, j] = slots[q][0]
        W = streams[0][0].windows
        return TileResult(out, res["fast_ticks"], (res["fast_ticks"] + 1) // 2, 2 * W,
                          res["counters"], res["records"])

    def simulate_enhanced(self, streams, bias_words=None) -> dict:
        """Tick the chains and rings of every group.

        ``streams[g][c]`` is chain ``c`` of group ``g``. Returns slot values,
        slow-domain records, the per-chain output pairs and bandwidth counters.
        """
        cfg = self.config
        if cfg.variant is not Variant.ENHANCED:
            raise ConfigError("simulate_enhanced needs the ENHANCED variant")
        N = cfg.chain_len
        pk = cfg.packing_enabled
        off = self._offset()
        W = streams[0][0].windows
        if any(s.windows != W or s.chain_len != N for grp in streams for s in grp):
            raise StimulusError("all chains must carry the same number of windows and slices")
        comp = join_lanes((-2 * N * packing.LO_BIAS, 0), SimdMode.TWO24) if pk else 0
        last_write = off + 5 + N + 4 * (W - 1) + 3
        n_fast = last_write + 1
        n_slow = n_fast // 2 + N + 2
        tr = self.trace

        self.inventory = {"mult": 0, "acc": 0}
        groups = []
        for g, grp in enumerate(streams):
            chains = []
            for c, st in enumerate(grp):
                shifts = [off + j for j in range(N)]
                col = self._chain(shifts, pk, pk, official=False)
                ports = []
                for j in range(N):
                    s = shifts[j]
                    a_port, d_port = _expand_a(st.a_stream[:, j], s, n_slow)
                    b_port = np.zeros(n_slow, dtype=np.int64)
                    for m in range(len(st.b_stream)):
                        b_port[m + s // 2] = st.b_stream[m, j]
                    ports.append((s, a_port, d_port, b_port))
                chains.append((col, ports, st))
                self.inventory["mult"] += len(col)
                if tr is not None:
                    self._declare_chain(g, c)
            ring = RingAccumulator(comp, tr, f"os/g{g}/ring")
            self.inventory["acc"] += len(ring.column)
            groups.append((chains, ring))

        chain_out: list[list[list[ChainOutput]]] = [[[] for _ in grp[0]] for grp in groups]
        b_loads = 0
        first_in = off + 3 + N
        for t in range(n_fast):
            for g, (chains, ring) in enumerate(groups):
                tops = [col[-1].state.p for col, _, _ in chains]
                n, q = divmod(t - first_in, RING_LOOP)
                if t >= first_in and n < W:
                    mode = "init" if n == 0 else "acc"
                    bw = join_lanes(bias_words[g][q], SimdMode.TWO24) if bias_words else 0
                else:
                    mode, bw = None, 0
                words = [self._lanes_word(p) for p in tops]
                for c, (col, ports, st) in enumerate(chains):
                    pts = []
                    for j, (s, a_port, d_port, b_port) in enumerate(ports):
                        u = t - s
                        live = 0 <= u < len(st.ce_b1)
                        ce1 = live and st.ce_b1[u]
                        ce2 = live and st.ce_b2[u]
                        b_loads += ce1 + ce2
                        pts.append(Dsp48e2Ports(
                            a=int(a_port[t // 2]), d=int(d_port[t // 2]), b=int(b_port[t // 2]),
                            ce_b1=ce1, ce_b2=ce2,
                            inmode_sel_b=SelB.B1 if u % 2 == 0 else SelB.B2))
                    col.tick(pts, check=False)
                    if tr is not None:
                        self._sample_chain(t, g, c, col, pts)
                    tn, tq = divmod(t - (off + 2 + N), RING_LOOP)
                    if t >= off + 2 + N and tn < W:
                        chain_out[g][c].append(
                            ChainOutput(t, tn, tq, self._chain_pair(col[-1].state.p)))
                ring.tick(words[0], words[1], mode, bw)

        # drain all rings in lockstep so the shared trace stays monotonic
        rings = [ring for _, ring in groups]
        if any(r.window_open() for r in rings):
            raise SchedulingError("drain requested before the accumulation window completed")
        while any(r._mode for r in rings):
            for r in rings:
                r.tick()
        records = [[] for _ in rings]
        while len(records[0]) < RING_LOOP:
            for i, r in enumerate(rings):
                records[i] += r.drain_step()
        slots = [[tuple(v) for v in slots_from_records(rec)] for rec in records]
        fast_total = groups[0][1].tick_count
        slices = cfg.num_chains * N
        counters = {
            "weight_words_per_slow_tick": b_loads / (slices * 2 * W),
            "act_pairs_per_slow_tick": 1.0,
            "result_pairs_per_accumulation": RING_LOOP,
            "accumulator_slices": 2 * cfg.num_groups,
            "output_records": sum(len(r) for r in records),
        }
        return {"slots": slots, "records": records, "chain_outputs": chain_out,
                "fast_ticks": fast_total, "counters": counters}

    def _lanes_word(self, p: int) -> int:
        """Fabric re-wiring of a chain's P into TWO24 lanes (lane 0 = low field)."""
        if self.config.packing_enabled:
            hi, lo = packing.biased_fields(p)
            return join_lanes((lo, hi), SimdMode.TWO24)
        return join_lanes((p, 0), SimdMode.TWO24)

    def _chain_pair(self, p: int) -> tuple[int, int]:
        if self.config.packing_enabled:
            hi, lo = packing.biased_fields(p)
            return lo - self.config.chain_len * packing.LO_BIAS, hi
        return p, 0

    def _declare_chain(self, g, c):
        tr = self.trace
        for j in range(self.config.chain_len):
            pre = f"os/g{g}/c{c}_s{j}"
            tr.declare(f"{pre}/CE_B1", 1)
            tr.declare(f"{pre}/CE_B2", 1)
            tr.declare(f"{pre}/INMODE_B1", 1)
            tr.declare(f"{pre}/B1", 18)
            tr.declare(f"{pre}/B2", 18)
        tr.declare(f"os/g{g}/c{c}/PCOUT", 48)

    def _sample_chain(self, t, g, c, col, pts):
        tr = self.trace
        for j, pt in enumerate(pts):
            pre = f"os/g{g}/c{c}_s{j}"
            st = col[j].state
            tr.record(t, {f"{pre}/CE_B1": int(pt.ce_b1), f"{pre}/CE_B2": int(pt.ce_b2),
                          f"{pre}/INMODE_B1": int(pt.inmode_sel_b is SelB.B1),
                          f"{pre}/B1": st.b1, f"{pre}/B2": st.b2})
        tr.sample(t, f"os/g{g}/c{c}/PCOUT", col[-1].state.p)

    # -- OFFICIAL ------------------------------------------------------------

    def _run_official(self, acts, wts, bias) -> TileResult:
        cfg = self.config
        N = cfg.chain_len
        cpg = cfg.chains_per_group
        pk = cfg.packing_enabled
        L = cfg.lanes
        K = acts.shape[2]
        S = -(-K // cfg.k_per_step)
        passes = cfg.tile_rows // L
        GS = passes * S
        off = N % 2  # keeps the two chain sums of a step inside one slow tick
        if np.any(np.abs(bias.astype(np.int64)) >= (1 << (OFFICIAL_BIAS_BITS - 1))):
            raise StimulusError("OFFICIAL bias must fit signed 26 bits")
        t_first = off + 2 + N
        sigma0 = (off + N) // 2 + 2
        last_sigma = sigma0 + GS - 1 + 2
        n_fast = 2 * last_sigma + 2
        n_slow = n_fast // 2 + N + 2
        tr = self.trace
        out = np.zeros((cfg.num_groups, cfg.tile_rows, 2), dtype=np.int64)
        mux_words = 0
        # groups are simulated one after another; samples are replayed in tick order
        samples: list[tuple[int, str, int]] = []
        self.inventory = {"mult": 0, "acc": 0}

        for g in range(cfg.num_groups):
            chains = []
            for c in range(cpg):
                shifts = [off + j for j in range(N)]
                col = self._chain(shifts, pk, False, official=True)
                ports = []
                for j in range(N):
                    s = shifts[j]
                    a_stream = np.zeros((GS + 1, 2), dtype=np.int64)
                    bus = np.zeros((n_slow, 2), dtype=np.int64)
                    d_b = 2 if s % 2 == 0 else 1
                    for gs in range(GS):
                        p, step = divmod(gs, S)
                        k = step * cfg.k_per_step + c * N + j
                        if k >= K:
                            continue
                        rows = [L * p + i for i in range(L)]
                        a_stream[gs + 1] = _pair_words(acts[g], rows, k, pk)
                        bus[(2 + 2 * gs + s - d_b) // 2] = wts[g, k]
                    a_port, d_port = _expand_a(a_stream, s, n_slow)
                    ports.append((a_port, d_port, bus))
                chains.append((col, ports))
                self.inventory["mult"] += len(col)
                if tr is not None:
                    tr.declare(f"os/g{g}/c{c}/PCOUT", 48)
                    for j in range(N):
                        tr.declare(f"os/g{g}/c{c}_s{j}/MUX", 18)
            accs = {}
            for lane in range(L):
                for wj in range(2):
                    accs[lane, wj] = Slice(Dsp48e2Attrs(
                        areg_stages=1, breg_stages=1, acascreg=1, bcascreg=1, use_preadder=True,
                        dreg_enabled=True),
                        name=f"acc{lane}{wj}")
                    if tr is not None:
                        tr.declare(f"os/g{g}/acc_l{lane}_w{wj}/P", 48)
            self.inventory["acc"] += len(accs)
            s2p = [[0, 0] for _ in range(cpg)]
            z_sched: dict[int, MuxZ] = {}
            done: dict[int, int] = {}
            for t in range(n_fast):
                if t % 2 == 0:
                    sigma = t // 2
                    gs = sigma - sigma0
                    fields = {}
                    if 0 <= gs < GS:
                        p, step = divmod(gs, S)
                        for lane in range(L):
                            for wj in range(2):
                                fields[lane, wj] = 0
                        # LUT lane correction, then the adder tree across chains
                        for c in range(cpg):
                            for wj in range(2):
                                raw = s2p[c][wj]
                                if pk:
                                    lp = packing.unpack_and_correct(raw)
                                    fields[0, wj] += lp.p_lo
                                    fields[1, wj] += lp.p_hi
                                else:
                                    fields[0, wj] += raw
                        z_sched[sigma + 2] = MuxZ.ZERO if step == 0 else MuxZ.P
                        if step == S - 1:
                            done[sigma + 2] = p
                    zmode = z_sched.pop(sigma, MuxZ.P)
                    finished = done.pop(sigma, None)
                    for (lane, wj), acc in accs.items():
                        first = bool(fields) and divmod(gs, S)[1] == 0
                        if fields:
                            p = divmod(gs, S)[0]
                            b = int(bias[g, L * p + lane, wj]) if first else 0
                        else:
                            b = 0
                        acc.tick(Dsp48e2Ports(a=fields.get((lane, wj), 0), d=b, b=1,
                                              opmode_x=MuxX.M, opmode_y=MuxY.M,
                                              opmode_z=zmode), check=False)
                        if finished is not None:
                            out[g, L * finished + lane, wj] = wrap(acc.state.p,
                                                                   OFFICIAL_RESULT_BITS)
                        if tr is not None:
                            samples.append((t, f"os/g{g}/acc_l{lane}_w{wj}/P", acc.state.p))
                for c, (col, ports) in enumerate(chains):
                    pts = []
                    for j, (a_port, d_port, bus) in enumerate(ports):
                        # the DDR mux hands out w0 in the first and w1 in the second half
                        mux = int(bus[t // 2][t % 2])
                        mux_words += 1
                        pts.append(Dsp48e2Ports(a=int(a_port[t // 2]), d=int(d_port[t // 2]),
                                                b=mux))
                        if tr is not None:
                            samples.append((t, f"os/g{g}/c{c}_s{j}/MUX", mux))
                    col.tick(pts, check=False)
                    gs, qq = divmod(t - t_first, 2)
                    if t >= t_first and gs < GS:
                        s2p[c][qq] = col[-1].state.p
                    if tr is not None:
                        samples.append((t, f"os/g{g}/c{c}/PCOUT", col[-1].state.p))
        if tr is not None:
            for t, name, v in sorted(samples, key=lambda x: x[0]):
                tr.sample(t, name, v)
        slices = cfg.num_chains * N
        counters = {
            "weight_words_per_slow_tick": mux_words / (slices * (n_fast // 2)),
            "act_pairs_per_slow_tick": 1.0,
            "result_pairs_per_accumulation": L * 2 // 2,
            "accumulator_slices": 2 * L * cfg.num_groups,
            "output_records": out.size,
        }
        return TileResult(out, n_fast, n_fast // 2, GS, counters)


def run_chain(engine: OsEngine, streams: InterleavedStreams,
              windows: Optional[int] = None) -> list[ChainOutput]:
    """Drive chain 0 of group 0 with ``streams`` (other chains idle); return its pairs."""
    cfg = engine.config
    if cfg.variant is not Variant.ENHANCED:
        raise ConfigError("run_chain needs the ENHANCED variant")
    if streams.packing != cfg.packing_enabled:
        raise StimulusError("stream packing does not match the engine")
    if windows is not None and windows != streams.windows:
        raise StimulusError(f"streams carry {streams.windows} windows, not {windows}")
    idle = InterleavedStreams(np.zeros_like(streams.a_stream), np.zeros_like(streams.b_stream),
                              streams.inmode_waveform, streams.ce_b1, streams.ce_b2,
                              streams.a_tags, streams.b_tags, streams.windows, streams.packing)
    grp = [[streams, idle]] + [[idle, idle] for _ in range(cfg.num_groups - 1)]
    return engine.simulate_enhanced(grp)["chain_outputs"][0][0]


def run_official(engine: OsEngine, acts, wts, bias=None) -> TileResult:
    if engine.config.variant is not Variant.OFFICIAL:
        raise ConfigError("run_official needs the OFFICIAL variant")
    return engine.run(acts, wts, bias)


def build(config: OsConfig, trace: Optional[WaveformTrace] = None) -> OsEngine:
    return OsEngine(config, trace)

"""Spiking crossbar built from FOUR12 slices.

Each slice holds two four-lane weight sets: one across the concatenated A:B
registers and one in CREG. Two spike bits drive the wide-bus multiplexers: the
first selects X = A:B, the second Y = C, and Z = P keeps a running per-lane
sum. No multiplier is involved. A slice is therefore a 2-input, 4-output
synaptic crossbar, and a chain of them covers ``2 * chain_len`` inputs.

Spikes reach slice ``j`` of chain ``c`` ``j + c`` ticks late, through the same
kind of staging as the weight-stationary array. After the last tick the chain
drains bottom to top: slice ``j`` adds PCIN to its own P on the tick just
after it finishes, so the top slice ends up with the chain total.

Weight prefetch: with ``DSP_FETCH_AB`` the A:B set shifts in through the first
A/B input registers over the dedicated cascade and sits stationary in the
second ones. The C set always shifts through fabric registers and is held in
CREG. ``CLB_FETCH`` shifts both sets through fabric registers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .dsp48e2 import (
    MASK18, Column, Dsp48e2Attrs, Dsp48e2Ports, Dsp48e2State, MuxW, MuxX, MuxY, MuxZ,
    SimdMode, Slice, Source, join_lanes, split_lanes, step, wrap,
)
from .errors import ConfigError, SchedulingError, StimulusError
from .trace import WaveformTrace

LANES = 4
LANE_BITS = 12


class SnnFetch(Enum):
    CLB_FETCH = "CLB_FETCH"
    DSP_FETCH_AB = "DSP_FETCH_AB"


@dataclass(frozen=True)
class CrossbarConfig:
    chains: int
    chain_len: int
    weight_bits: int = LANE_BITS
    fetch_variant: SnnFetch = SnnFetch.DSP_FETCH_AB

    def __post_init__(self):
        if isinstance(self.fetch_variant, str):
            object.__setattr__(self, "fetch_variant", SnnFetch(self.fetch_variant.upper()))
        if self.chains < 1 or self.chain_len < 1:
            raise ConfigError(f"invalid geometry {self.chains}x{self.chain_len}")
        if not 1 <= self.weight_bits <= LANE_BITS:
            raise ConfigError(f"weight_bits must be in 1..{LANE_BITS}")

    @property
    def num_slices(self) -> int:
        return self.chains * self.chain_len


# Four chains of sixteen slices; 8-bit synaptic weights.
FIREFLY = CrossbarConfig(chains=4, chain_len=16, weight_bits=8)


def _ab_split(word: int) -> tuple[int, int]:
    return wrap(word >> 18, 30), wrap(word & MASK18, 18)


def _ab_word(a: int, b: int) -> int:
    return wrap(((a & ((1 << 30) - 1)) << 18) | (b & MASK18), 48)


def _gate_op(s0: int, s1: int, first: bool = False) -> tuple:
    return (MuxX.AB if s0 else MuxX.ZERO, MuxY.C if s1 else MuxY.ZERO,
            MuxZ.ZERO if first else MuxZ.P, MuxW.ZERO)


def step_crossbar(acc, spikes, weights_ab, weights_c) -> tuple[int, ...]:
    """One gated accumulate on a single FOUR12 slice.

    ``acc`` is the current 4-lane sum; the weights are assumed already resident
    in A:B and C. Returns the new lanes (12-bit wrap).
    """
    s0, s1 = (int(s) for s in spikes)
    if s0 not in (0, 1) or s1 not in (0, 1):
        raise StimulusError(f"spike bits must be 0/1, got {spikes}")
    _check_weights(np.asarray([weights_ab, weights_c]), LANE_BITS)
    a, b = _ab_split(join_lanes(tuple(int(v) for v in weights_ab), SimdMode.FOUR12))
    state = Dsp48e2State(a2=a, b2=b, p=join_lanes(tuple(int(v) for v in acc), SimdMode.FOUR12))
    attrs = Dsp48e2Attrs(mreg_enabled=False, simd_mode=SimdMode.FOUR12)
    x, y, z, w = _gate_op(s0, s1)
    c = join_lanes(tuple(int(v) for v in weights_c), SimdMode.FOUR12)
    # hold the input registers so the resident weights stay put
    ports = Dsp48e2Ports(c=c, ce_a1=False, ce_a2=False, ce_b1=False, ce_b2=False,
                         opmode_x=x, opmode_y=y, opmode_z=z, opmode_w=w)
    new, _ = step(state, attrs, ports)
    return split_lanes(new.p, SimdMode.FOUR12)


def _check_weights(w, bits):
    w = np.asarray(w)
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if w.size and (w.min() < lo or w.max() > hi):
        raise StimulusError(f"weights outside signed {bits}-bit range")
    return w.astype(np.int64)


@dataclass
class CrossbarResult:
    output: np.ndarray
    ticks: int


class CrossbarEngine:
    def __init__(self, config: CrossbarConfig, trace: Optional[WaveformTrace] = None):
        self.config = config
        self.trace = trace
        self.tick = 0
        self.pending = False
        dsp = config.fetch_variant is SnnFetch.DSP_FETCH_AB
        self.chains: list[Column] = []
        for c in range(config.chains):
            slices = []
            for j in range(config.chain_len):
                if dsp:
                    src = Source.CASCADE if j else Source.DIRECT
                    attrs = Dsp48e2Attrs(areg_stages=2, breg_stages=2, a_input_source=src,
                                         b_input_source=src, acascreg=1, bcascreg=1,
                                         creg_enabled=True, mreg_enabled=False,
                                         simd_mode=SimdMode.FOUR12)
                else:
                    attrs = Dsp48e2Attrs(areg_stages=1, breg_stages=1, acascreg=1, bcascreg=1,
                                         creg_enabled=True, mreg_enabled=False,
                                         simd_mode=SimdMode.FOUR12)
                slices.append(Slice(attrs, name=f"c{c}_s{j}"))
            self.chains.append(Column(slices))
        L = config.chain_len
        # fabric shift registers on the weight loading path
        self.c_shadow = [[0] * L for _ in range(config.chains)]
        self.ab_shadow = None if dsp else [[0] * L for _ in range(config.chains)]
        if trace is not None:
            for c in range(config.chains):
                for j in range(L):
                    pre = f"snn/c{c}_s{j}"
                    for name, width in (("S0", 1), ("S1", 1), ("OPMODE_X_AB", 1),
                                        ("OPMODE_Y_C", 1), ("P", 48)):
                        trace.declare(f"{pre}/{name}", width)

    @property
    def clb_weight_register_bits(self) -> int:
        """Bits of modeled fabric registers on the weight loading path."""
        per_set = LANES * self.config.weight_bits
        sets = 1 if self.ab_shadow is None else 2
        return self.config.num_slices * sets * per_set

    def stationary_weights(self) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        w_ab = np.zeros((cfg.chains, cfg.chain_len, LANES), dtype=np.int64)
        w_c = np.zeros_like(w_ab)
        for c, col in enumerate(self.chains):
            for j in range(cfg.chain_len):
                st = col[j].state
                w_ab[c, j] = split_lanes(_ab_word(st.a2, st.b2), SimdMode.FOUR12)
                w_c[c, j] = split_lanes(st.c, SimdMode.FOUR12)
        return w_ab, w_c

    def _weight_words(self, weights_ab, weights_c):
        cfg = self.config
        shape = (cfg.chains, cfg.chain_len, LANES)
        w_ab = _check_weights(weights_ab, cfg.weight_bits)
        w_c = _check_weights(weights_c, cfg.weight_bits)
        if w_ab.shape != shape or w_c.shape != shape:
            raise StimulusError(f"weights must have shape {shape}")
        ab = [[join_lanes(tuple(w_ab[c, j]), SimdMode.FOUR12) for j in range(cfg.chain_len)]
              for c in range(cfg.chains)]
        cw = [[join_lanes(tuple(w_c[c, j]), SimdMode.FOUR12) for j in range(cfg.chain_len)]
              for c in range(cfg.chains)]
        return ab, cw

    def prefetch_weights(self, weights_ab, weights_c) -> int:
        """Shift the next weight sets in behind the stationary ones; returns ticks used."""
        if self.pending:
            raise SchedulingError("a prefetched weight set is still waiting for its swap")
        words = self._weight_words(weights_ab, weights_c)
        L = self.config.chain_len
        hold = [[_gate_op(0, 0)] * L for _ in self.chains]
        for i in range(L):
            self._tick(hold, self._inject(words, i))
        self.pending = True
        return L

    def swap_weights(self) -> None:
        if not self.pending:
            raise SchedulingError("no prefetched weight set to swap in")
        hold = [[_gate_op(0, 0)] * self.config.chain_len for _ in self.chains]
        self._tick(hold, swap=True)
        self.pending = False

    def load_weights(self, weights_ab, weights_c) -> int:
        n = self.prefetch_weights(weights_ab, weights_c)
        self.swap_weights()
        return n + 1

    def _inject(self, words, i):
        L = self.config.chain_len
        ab, cw = words
        return [(ab[c][L - 1 - i], cw[c][L - 1 - i]) for c in range(len(self.chains))]

    def _tick(self, ops, inject=None, swap=False, spikes=None):
        dsp = self.ab_shadow is None
        for c, col in enumerate(self.chains):
            ports = []
            for j in range(len(col)):
                x, y, z, w = ops[c][j]
                pt = Dsp48e2Ports(c=self.c_shadow[c][j], ce_c=swap,
                                  opmode_x=x, opmode_y=y, opmode_z=z, opmode_w=w)
                if dsp:
                    pt.ce_a1 = pt.ce_b1 = inject is not None
                    pt.ce_a2 = pt.ce_b2 = swap
                    if j == 0 and inject is not None:
                        pt.a, pt.b = _ab_split(inject[c][0])
                else:
                    pt.a, pt.b = _ab_split(self.ab_shadow[c][j])
                    pt.ce_a2 = pt.ce_b2 = swap
                ports.append(pt)
            col.tick(ports, check=False)
            if inject is not None:
                self.c_shadow[c] = [inject[c][1]] + self.c_shadow[c][:-1]
                if not dsp:
                    self.ab_shadow[c] = [inject[c][0]] + self.ab_shadow[c][:-1]
            if self.trace is not None:
                for j, pt in enumerate(ports):
                    pre = f"snn/c{c}_s{j}"
                    s = spikes[c][j] if spikes is not None else (0, 0)
                    self.trace.record(self.tick, {
                        f"{pre}/S0": s[0], f"{pre}/S1": s[1],
                        f"{pre}/OPMODE_X_AB": int(pt.opmode_x is MuxX.AB),
                        f"{pre}/OPMODE_Y_C": int(pt.opmode_y is MuxY.C),
                        f"{pre}/P": col[j].state.p,
                    })
        self.tick += 1

    def run(self, spikes, prefetch=None) -> CrossbarResult:
        """Accumulate a ``(ticks, chain_len, 2)`` spike train against the resident weights.

        ``prefetch`` optionally carries ``(weights_ab, weights_c)`` to shift in
        during the first ``chain_len`` ticks; the swap is left to the caller.
        """
        cfg = self.config
        L = cfg.chain_len
        s = np.asarray(spikes)
        if s.ndim != 3 or s.shape[1:] != (L, 2):
            raise StimulusError(f"spikes must have shape (ticks, {L}, 2), got {s.shape}")
        if s.size and not np.isin(s, (0, 1)).all():
            raise StimulusError("spike values must be 0 or 1")
        T = s.shape[0]
        if T < 1:
            raise StimulusError("need at least one tick of spikes")
        words = None
        if prefetch is not None:
            if self.pending:
                raise SchedulingError("a prefetched weight set is still waiting for its swap")
            words = self._weight_words(*prefetch)
        start = self.tick
        total = T + L + cfg.chains - 1
        for g in range(total):
            ops = []
            bits = []
            for c in range(cfg.chains):
                row_ops = []
                row_bits = []
                for j in range(L):
                    t = g - j - c
                    if 0 <= t < T:
                        b = (int(s[t, j, 0]), int(s[t, j, 1]))
                        row_ops.append(_gate_op(*b, first=(t == 0)))
                    elif t == T and j > 0:
                        b = (0, 0)
                        row_ops.append((MuxX.ZERO, MuxY.ZERO, MuxZ.PCIN, MuxW.P))
                    else:
                        b = (0, 0)
                        row_ops.append(_gate_op(0, 0))
                    row_bits.append(b)
                ops.append(row_ops)
                bits.append(row_bits)
            inject = self._inject(words, g) if words is not None and g < L else None
            self._tick(ops, inject, spikes=bits)
        if words is not None:
            self.pending = True
        out = np.array([split_lanes(col[-1].state.p, SimdMode.FOUR12) for col in self.chains],
                       dtype=np.int64)
        return CrossbarResult(out, self.tick - start)


def prefetch_weights_snn(engine: CrossbarEngine, next_weights) -> int:
    """Shift ``(weights_ab, weights_c)`` into the loading path; returns ``chain_len``."""
    w_ab, w_c = next_weights
    return engine.prefetch_weights(w_ab, w_c)


def run_crossbar(config: CrossbarConfig, spikes, weights_ab, weights_c,
                 trace: Optional[WaveformTrace] = None) -> CrossbarResult:
    eng = CrossbarEngine(config, trace)
    eng.load_weights(weights_ab, weights_c)
    return eng.run(spikes)


def build(config: CrossbarConfig, trace: Optional[WaveformTrace] = None) -> CrossbarEngine:
    return CrossbarEngine(config, trace)

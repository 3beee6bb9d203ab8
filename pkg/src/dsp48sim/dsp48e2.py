"""Bit-exact behavioral model of the DSP48E2 datapath subset used by the engines.

One call to :func:`step` is one clock edge. Registers capture values derived
from the pre-edge register contents and the port values present during the
tick, so a column of slices can be evaluated in any order as long as the
cascade inputs are taken from the previous tick's outputs.

Modeled: dual A/B input pipelines with per-register clock enables and a dynamic
stage selector, the 27-bit pre-adder, the signed 27x18 multiplier, optional
M/P/C/D registers, the W/X/Y/Z wide-bus multiplexers feeding a four-input 48-bit
SIMD adder, and the ACIN/BCIN/PCIN cascade paths. Not modeled: pattern detect,
carry cascade, the 17-bit Z shift, ADREG.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .errors import ConfigError, StimulusError

A_WIDTH = 30  # A port and A1/A2 registers; pre-adder/multiplier use the low 27 bits
AD_WIDTH = 27
B_WIDTH = 18
C_WIDTH = 48
D_WIDTH = 27
M_WIDTH = 45
P_WIDTH = 48

MASK18 = (1 << 18) - 1
MASK30 = (1 << 30) - 1
MASK48 = (1 << 48) - 1


def wrap(value: int, bits: int) -> int:
    """Two's-complement wrap of ``value`` to a signed ``bits``-wide integer."""
    half = 1 << (bits - 1)
    return ((value + half) & ((1 << bits) - 1)) - half


def fits(value: int, bits: int) -> bool:
    half = 1 << (bits - 1)
    return -half <= value < half


class Source(Enum):
    DIRECT = "DIRECT"
    CASCADE = "CASCADE"


class Stage2Input(Enum):
    """Where the second input register loads from."""

    STAGE1 = "STAGE1"
    DIRECT = "DIRECT"


class SimdMode(Enum):
    ONE48 = 48
    TWO24 = 24
    FOUR12 = 12

    @property
    def lanes(self) -> int:
        return 48 // self.value


class SelA(Enum):
    A1 = "A1"
    A2 = "A2"


class SelB(Enum):
    B1 = "B1"
    B2 = "B2"


class MuxX(Enum):
    ZERO = "ZERO"
    M = "M"
    AB = "AB"


class MuxY(Enum):
    ZERO = "ZERO"
    M = "M"
    C = "C"


class MuxZ(Enum):
    ZERO = "ZERO"
    PCIN = "PCIN"
    C = "C"
    P = "P"


class MuxW(Enum):
    ZERO = "ZERO"
    RND = "RND"
    C = "C"
    P = "P"


# Reference only: the real OPMODE[8:0] field values each behavioral selection
# corresponds to (X = OPMODE[1:0], Y = [3:2], Z = [6:4], W = [8:7]).
OPMODE_ENCODING = {
    MuxX.ZERO: 0b00, MuxX.M: 0b01, MuxX.AB: 0b11,
    MuxY.ZERO: 0b00, MuxY.M: 0b01, MuxY.C: 0b11,
    MuxZ.ZERO: 0b000, MuxZ.PCIN: 0b001, MuxZ.P: 0b010, MuxZ.C: 0b011,
    MuxW.ZERO: 0b00, MuxW.P: 0b01, MuxW.RND: 0b10, MuxW.C: 0b11,
}


def opmode_bits(x: MuxX, y: MuxY, z: MuxZ, w: MuxW) -> int:
    """Pack behavioral selections into the 9-bit OPMODE value (reference data)."""
    e = OPMODE_ENCODING
    return e[x] | (e[y] << 2) | (e[z] << 4) | (e[w] << 7)


@dataclass(frozen=True)
class OpMode:
    x: MuxX = MuxX.ZERO
    y: MuxY = MuxY.ZERO
    z: MuxZ = MuxZ.ZERO
    w: MuxW = MuxW.ZERO


@dataclass(frozen=True)
class Dsp48e2Attrs:
    """Static configuration of one slice."""

    areg_stages: int = 2
    breg_stages: int = 2
    a_input_source: Source = Source.DIRECT
    b_input_source: Source = Source.DIRECT
    use_preadder: bool = False
    mreg_enabled: bool = True
    preg_enabled: bool = True
    creg_enabled: bool = False
    dreg_enabled: bool = False
    simd_mode: SimdMode = SimdMode.ONE48
    rnd_constant: int = 0
    # Set to pin the multiplexers (STATIC policy); None reads them from the ports.
    static_opmode: Optional[OpMode] = None
    # Which input register drives ACOUT/BCOUT.
    acascreg: int = 2
    bcascreg: int = 2
    a2_input: Stage2Input = Stage2Input.STAGE1
    b2_input: Stage2Input = Stage2Input.STAGE1

    def __post_init__(self):
        for name in ("areg_stages", "breg_stages", "acascreg", "bcascreg"):
            if getattr(self, name) not in (1, 2):
                raise ConfigError(f"{name} must be 1 or 2, got {getattr(self, name)}")
        if self.acascreg > self.areg_stages or self.bcascreg > self.breg_stages:
            raise ConfigError("cascade tap deeper than the configured pipeline")
        if not fits(self.rnd_constant, P_WIDTH):
            raise ConfigError("rnd_constant exceeds 48 bits")
        op = self.static_opmode
        if op is not None:
            _check_opmode(op.x, op.y, op.z, op.w, self.preg_enabled)


@dataclass(slots=True)
class Dsp48e2Ports:
    """Port values for a single tick."""

    a: int = 0
    b: int = 0
    c: int = 0
    d: int = 0
    acin: int = 0
    bcin: int = 0
    pcin: int = 0
    ce_a1: bool = True
    ce_a2: bool = True
    ce_b1: bool = True
    ce_b2: bool = True
    ce_c: bool = True
    inmode_sel_a: SelA = SelA.A2
    inmode_sel_b: SelB = SelB.B2
    opmode_x: MuxX = MuxX.ZERO
    opmode_y: MuxY = MuxY.ZERO
    opmode_z: MuxZ = MuxZ.ZERO
    opmode_w: MuxW = MuxW.ZERO


@dataclass(frozen=True, slots=True)
class Dsp48e2State:
    a1: int = 0
    a2: int = 0
    b1: int = 0
    b2: int = 0
    ad: int = 0
    m: int = 0
    c: int = 0
    d: int = 0
    p: int = 0


@dataclass(frozen=True, slots=True)
class Dsp48e2Outputs:
    p: int = 0
    pcout: int = 0
    acout: int = 0
    bcout: int = 0


_PORT_WIDTHS = (
    ("a", A_WIDTH), ("b", B_WIDTH), ("c", C_WIDTH), ("d", D_WIDTH),
    ("acin", A_WIDTH), ("bcin", B_WIDTH), ("pcin", P_WIDTH),
)


def _check_opmode(x, y, z, w, preg_enabled: bool) -> None:
    if (x is MuxX.M) != (y is MuxY.M):
        raise ConfigError(f"opmode X={x.name} Y={y.name}: X=M requires Y=M and vice versa")
    if not preg_enabled and (z is MuxZ.P or w is MuxW.P):
        raise ConfigError("P feedback selected with the P register disabled")


def check_ports(ports: Dsp48e2Ports) -> None:
    for name, width in _PORT_WIDTHS:
        v = getattr(ports, name)
        if not fits(v, width):
            raise StimulusError(f"port {name}={v} outside signed {width}-bit range")


def lane_width(mode: SimdMode) -> int:
    return mode.value


def split_lanes(word: int, mode: SimdMode) -> tuple[int, ...]:
    """Signed lane values of a 48-bit word, lane 0 = least significant."""
    width = mode.value
    mask = (1 << width) - 1
    half = 1 << (width - 1)
    word &= MASK48
    return tuple(
        (((word >> (i * width)) & mask) ^ half) - half for i in range(mode.lanes)
    )


def join_lanes(lanes: Sequence[int], mode: SimdMode) -> int:
    """Inverse of :func:`split_lanes`; each lane wraps at its width."""
    width = mode.value
    if len(lanes) != mode.lanes:
        raise StimulusError(f"{mode.name} takes {mode.lanes} lanes, got {len(lanes)}")
    mask = (1 << width) - 1
    word = 0
    for i, v in enumerate(lanes):
        word |= (v & mask) << (i * width)
    return wrap(word, P_WIDTH)


def simd_add(w: int, x: int, y: int, z: int, mode: SimdMode = SimdMode.ONE48) -> int:
    """Four-input add with carries cut at every lane boundary of ``mode``."""
    if mode is SimdMode.ONE48:
        return wrap(w + x + y + z, P_WIDTH)
    width = mode.value
    mask = (1 << width) - 1
    out = 0
    for i in range(0, 48, width):
        s = ((w >> i) & mask) + ((x >> i) & mask) + ((y >> i) & mask) + ((z >> i) & mask)
        out |= (s & mask) << i
    return wrap(out, P_WIDTH)


def _alu(attrs, op, sel_a, sel_b, mult_out, c_val, pcin, p_prev):
    x, y, z, w = op
    xv = mult_out if x is MuxX.M else (
        wrap(((sel_a & MASK30) << 18) | (sel_b & MASK18), P_WIDTH) if x is MuxX.AB else 0)
    yv = c_val if y is MuxY.C else 0  # Y=M carries the other half of the product
    if z is MuxZ.ZERO:
        zv = 0
    elif z is MuxZ.PCIN:
        zv = pcin
    elif z is MuxZ.C:
        zv = c_val
    else:
        zv = p_prev
    if w is MuxW.ZERO:
        wv = 0
    elif w is MuxW.RND:
        wv = attrs.rnd_constant
    elif w is MuxW.C:
        wv = c_val
    else:
        wv = p_prev
    return simd_add(wv, xv, yv, zv, attrs.simd_mode)


def _product(attrs, sel_a, sel_b, d):
    a27 = wrap(sel_a, AD_WIDTH)
    ad = wrap(a27 + d, AD_WIDTH) if attrs.use_preadder else a27
    return ad, ad * sel_b


def step(
    state: Dsp48e2State,
    attrs: Dsp48e2Attrs,
    ports: Dsp48e2Ports,
    check: bool = True,
) -> tuple[Dsp48e2State, Dsp48e2Outputs]:
    """Advance one slice by one tick.

    With ``check`` the port widths and the X/Y constraint are validated; the
    engines disable it on their inner loop once their stimulus is validated.
    """
    if attrs.static_opmode is not None:
        sop = attrs.static_opmode
        op = (sop.x, sop.y, sop.z, sop.w)
    else:
        op = (ports.opmode_x, ports.opmode_y, ports.opmode_z, ports.opmode_w)
    if check:
        check_ports(ports)
        _check_opmode(*op, attrs.preg_enabled)

    a_src = ports.acin if attrs.a_input_source is Source.CASCADE else ports.a
    b_src = ports.bcin if attrs.b_input_source is Source.CASCADE else ports.b

    a1 = a_src if ports.ce_a1 else state.a1
    if attrs.areg_stages == 2 and attrs.a2_input is Stage2Input.STAGE1:
        a2_in = state.a1
    else:
        a2_in = a_src
    a2 = a2_in if ports.ce_a2 else state.a2

    b1 = b_src if ports.ce_b1 else state.b1
    if attrs.breg_stages == 2 and attrs.b2_input is Stage2Input.STAGE1:
        b2_in = state.b1
    else:
        b2_in = b_src
    b2 = b2_in if ports.ce_b2 else state.b2

    def selected(a1_, a2_, b1_, b2_):
        sa = a1_ if (attrs.areg_stages == 2 and ports.inmode_sel_a is SelA.A1) else a2_
        sb = b1_ if (attrs.breg_stages == 2 and ports.inmode_sel_b is SelB.B1) else b2_
        return sa, sb

    sel_a, sel_b = selected(state.a1, state.a2, state.b1, state.b2)
    d_val = state.d if attrs.dreg_enabled else ports.d
    ad, prod = _product(attrs, sel_a, sel_b, d_val)
    m = prod if attrs.mreg_enabled else state.m
    c = ports.c if (attrs.creg_enabled and ports.ce_c) else state.c
    d = ports.d if attrs.dreg_enabled else state.d

    if attrs.preg_enabled:
        c_val = state.c if attrs.creg_enabled else ports.c
        mult_out = state.m if attrs.mreg_enabled else prod
        p = _alu(attrs, op, sel_a, sel_b, mult_out, c_val, ports.pcin, state.p)
    else:
        # Unregistered P: the visible output is combinational on the new registers.
        na, nb = selected(a1, a2, b1, b2)
        ad, nprod = _product(attrs, na, nb, d if attrs.dreg_enabled else ports.d)
        c_val = c if attrs.creg_enabled else ports.c
        mult_out = m if attrs.mreg_enabled else nprod
        p = _alu(attrs, op, na, nb, mult_out, c_val, ports.pcin, 0)

    new = Dsp48e2State(a1=a1, a2=a2, b1=b1, b2=b2, ad=ad, m=m, c=c, d=d, p=p)
    return new, outputs_of(new, attrs)


def outputs_of(state: Dsp48e2State, attrs: Dsp48e2Attrs) -> Dsp48e2Outputs:
    return Dsp48e2Outputs(
        p=state.p,
        pcout=state.p,
        acout=state.a1 if attrs.acascreg == 1 else state.a2,
        bcout=state.b1 if attrs.bcascreg == 1 else state.b2,
    )


@dataclass
class Slice:
    """A slice instance: static attributes plus its evolving register state."""

    attrs: Dsp48e2Attrs = field(default_factory=Dsp48e2Attrs)
    state: Dsp48e2State = field(default_factory=Dsp48e2State)
    name: str = ""

    @property
    def outputs(self) -> Dsp48e2Outputs:
        return outputs_of(self.state, self.attrs)

    def tick(self, ports: Dsp48e2Ports, check: bool = True) -> Dsp48e2Outputs:
        self.state, out = step(self.state, self.attrs, ports, check)
        return out

    def reset(self) -> None:
        self.state = Dsp48e2State()


class Column:
    """Slices chained through ACOUT/BCOUT/PCOUT; index 0 is the bottom slice.

    Every cascade hop is registered: slice ``i`` sees slice ``i-1``'s outputs
    as they stood before the current edge.
    """

    def __init__(self, slices: Sequence[Slice]):
        if not slices:
            raise ConfigError("a column needs at least one slice")
        first = slices[0].attrs
        if first.a_input_source is Source.CASCADE or first.b_input_source is Source.CASCADE:
            raise ConfigError("bottom slice of a column has no cascade source")
        self.slices = list(slices)

    def __len__(self) -> int:
        return len(self.slices)

    def __getitem__(self, i: int) -> Slice:
        return self.slices[i]

    def tick(self, ports: Sequence[Dsp48e2Ports], check: bool = True) -> list[Dsp48e2Outputs]:
        if len(ports) != len(self.slices):
            raise StimulusError(f"expected {len(self.slices)} port sets, got {len(ports)}")
        prev = [s.outputs for s in self.slices]
        for i in range(1, len(self.slices)):
            below = prev[i - 1]
            pt = ports[i]
            pt.acin = below.acout
            pt.bcin = below.bcout
            pt.pcin = below.pcout
        return [s.tick(pt, check) for s, pt in zip(self.slices, ports)]

    def reset(self) -> None:
        for s in self.slices:
            s.reset()


def cascade_connect(column: Sequence[Slice]) -> Column:
    return Column(column)


__all__ = [
    "A_WIDTH", "B_WIDTH", "C_WIDTH", "D_WIDTH", "P_WIDTH",
    "Column", "Dsp48e2Attrs", "Dsp48e2Outputs", "Dsp48e2Ports", "Dsp48e2State",
    "MuxW", "MuxX", "MuxY", "MuxZ", "OpMode", "SelA", "SelB", "SimdMode", "Slice",
    "Source", "Stage2Input", "cascade_connect", "check_ports", "fits", "join_lanes",
    "opmode_bits", "outputs_of", "simd_add", "split_lanes", "step", "wrap",
]

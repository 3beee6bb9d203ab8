"""Per-tick waveform capture and Value Change Dump export.

Signals are named ``<engine>/<row>_<col>/<reg>`` (for example
``ws/r3_c0/B2`` or ``os/g0/ring/slot``); the part before the last ``/`` becomes
the VCD scope. Only value changes are stored, in tick order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import vcd
from vcd.reader import TokenKind, tokenize

from .errors import SimError


@dataclass
class WaveformTrace:
    timescale: str = "1 ns"
    widths: dict[str, int] = field(default_factory=dict)
    changes: list[tuple[int, str, int]] = field(default_factory=list)
    _last: dict[str, int] = field(default_factory=dict, repr=False)
    _tick: int = field(default=-1, repr=False)

    def declare(self, name: str, width: int) -> None:
        if name in self.widths and self.widths[name] != width:
            raise SimError(f"signal {name} redeclared with width {width}")
        self.widths[name] = width

    def sample(self, tick: int, name: str, value: int) -> None:
        """Record ``value`` for ``name`` at ``tick`` if it differs from the last one."""
        if tick < self._tick:
            raise SimError(f"tick {tick} goes backwards (last {self._tick})")
        if name not in self.widths:
            raise SimError(f"undeclared signal {name}")
        self._tick = tick
        value = int(value)
        if self._last.get(name) != value:
            self._last[name] = value
            self.changes.append((tick, name, value))

    def record(self, tick: int, values: dict[str, int]) -> None:
        for name, v in values.items():
            self.sample(tick, name, v)

    def history(self, name: str) -> list[tuple[int, int]]:
        return [(t, v) for t, n, v in self.changes if n == name]

    def signals(self, prefix: str = "") -> list[str]:
        return [n for n in self.widths if n.startswith(prefix)]

    def series(self, name: str, ticks: Iterable[int]) -> list[int]:
        """Value of ``name`` at each requested tick (held between changes)."""
        hist = self.history(name)
        out = []
        i = -1
        for t in ticks:
            while i + 1 < len(hist) and hist[i + 1][0] <= t:
                i += 1
            out.append(hist[i][1] if i >= 0 else 0)
        return out


def render_vcd(trace: WaveformTrace) -> str:
    if not trace.widths:
        raise SimError("waveform trace has no signals")
    buf = io.StringIO()
    with vcd.VCDWriter(buf, timescale=trace.timescale, date="", version="dsp48sim",
                       scope_sep="/") as w:
        handles = {}
        for name in sorted(trace.widths):
            scope, _, leaf = name.rpartition("/")
            handles[name] = w.register_var(scope or "top", leaf, "wire",
                                           size=trace.widths[name], init=0)
        for tick, name, value in trace.changes:
            width = trace.widths[name]
            w.change(handles[name], tick, value & ((1 << width) - 1))
    return buf.getvalue()


def export_vcd(trace: WaveformTrace, path) -> Path:
    text = render_vcd(trace)
    path = Path(path)
    path.write_text(text)
    return path


def read_vcd(path) -> dict[str, list[tuple[int, int]]]:
    """Parse a VCD file into ``{name: [(tick, unsigned_value), ...]}``."""
    ids: dict[str, str] = {}
    scopes: list[str] = []
    out: dict[str, list[tuple[int, int]]] = {}
    tick = 0
    with open(path, "rb") as fh:
        for tok in tokenize(fh):
            if tok.kind is TokenKind.SCOPE:
                scopes.append(tok.scope.ident)
            elif tok.kind is TokenKind.UPSCOPE:
                scopes.pop()
            elif tok.kind is TokenKind.VAR:
                name = "/".join(scopes + [tok.var.reference])
                ids[tok.var.id_code] = name
                out[name] = []
            elif tok.kind is TokenKind.CHANGE_TIME:
                tick = tok.time_change
            elif tok.kind is TokenKind.CHANGE_SCALAR:
                sc = tok.scalar_change
                out[ids[sc.id_code]].append((tick, int(sc.value)))
            elif tok.kind is TokenKind.CHANGE_VECTOR:
                vc = tok.vector_change
                out[ids[vc.id_code]].append((tick, int(vc.value)))
    return out

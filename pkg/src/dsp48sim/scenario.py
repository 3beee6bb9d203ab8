"""Scenario files: build an engine, drive stimulus, check against oracles.

Scenarios are INI files (``configparser`` dialect). Schema:

``[scenario]``
    ``engine`` = ``ws`` | ``os`` | ``snn`` | ``selftest``; ``name`` (defaults to
    the file stem); ``seed`` (int, default 0); ``checks`` (comma list);
    ``report`` / ``vcd`` (bool, write those artifacts); ``suite`` (selftest only).
``[ws]``
    ``rows``, ``cols``, ``packing``, ``fetch`` (``DSP_FETCH`` | ``CLB_FETCH``),
    ``rounds``, ``act_stages``
``[os]``
    ``preset`` (``B1024``) or ``chain_len``/``chains_per_group``/``num_groups``;
    ``variant`` (``ENHANCED`` | ``OFFICIAL`` | ``both``), ``packing``, ``windows``
``[snn]``
    ``preset`` (``FIREFLY``) or ``chains``/``chain_len``/``weight_bits``; ``fetch``
``[stimulus]``
    ``kind`` = ``random`` | ``identity`` | ``explicit``; ``batch`` and ``sets`` (ws),
    ``k`` (os reduction depth, default ``windows * k_per_step``), ``ticks`` and
    ``density`` (snn), ``value_range`` (max magnitude of random operands),
    ``bias_range``; explicit matrices as ``acts``/``weights``/``bias``
    strings with rows separated by ``;``
``[sweep]``
    ``cases`` plus ``max_*`` bounds; each case draws its own geometry
``[expected]``
    ``output`` (matrix string) or ``file`` (whitespace matrix, path relative to
    the scenario); ``<VARIANT>.<field> = int`` lines check report cells

Checks: ``oracle``, ``utilization``, ``swap_waveform``, ``cross_variant``,
``wrap_oracle``, ``waveform``, ``fetch_equivalence``, ``clb_ratio``,
``inventory``, ``expected``, ``report_cells``, ``determinism``.
"""

from __future__ import annotations

import configparser
import filecmp
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import oracles, packing
from . import os_engine as ose
from . import resource_model as rm
from . import snn_crossbar as snn
from . import ws_engine as wse
from .dsp48e2 import SimdMode, join_lanes, simd_add, split_lanes
from .errors import ConfigError, SimError, StimulusError
from .trace import WaveformTrace, export_vcd

ENGINES = ("ws", "os", "snn", "selftest")
SELFTEST_SUITES = ("packing", "simd")
CHECKS = ("oracle", "utilization", "swap_waveform", "cross_variant", "wrap_oracle", "waveform",
          "fetch_equivalence", "clb_ratio", "inventory", "expected", "report_cells",
          "determinism")


class ScenarioError(ConfigError):
    pass


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Outcome:
    name: str
    checks: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass
class Scenario:
    name: str
    engine: str
    seed: int
    checks: list
    sections: dict
    base_dir: Path
    report: bool = False
    vcd: bool = False

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})


# -- parsing -----------------------------------------------------------------


def _bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ScenarioError(f"not a boolean: {v!r}")


def _int(sec: dict, key: str, default=None) -> Optional[int]:
    if key not in sec:
        if default is None:
            raise ScenarioError(f"missing key {key!r}")
        return default
    try:
        return int(sec[key])
    except ValueError:
        raise ScenarioError(f"{key} must be an integer, got {sec[key]!r}") from None


def parse_matrix(text: str) -> np.ndarray:
    rows = [r.split() for r in text.strip().split(";") if r.strip()]
    try:
        m = np.array([[int(x) for x in r] for r in rows], dtype=np.int64)
    except ValueError:
        raise ScenarioError(f"bad matrix literal {text!r}") from None
    if m.ndim != 2:
        raise ScenarioError(f"ragged matrix literal {text!r}")
    return m


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    with path.open() as fh:  # OSError propagates to the caller (I/O failure)
        try:
            cp.read_file(fh)
        except configparser.Error as e:
            raise ScenarioError(f"{path}: {e}") from None
    if "scenario" not in cp:
        raise ScenarioError(f"{path}: missing [scenario] section")
    sections = {s: dict(cp[s]) for s in cp.sections()}
    head = sections["scenario"]
    engine = head.get("engine", "").strip().lower()
    if engine not in ENGINES:
        raise ScenarioError(f"{path}: engine must be one of {ENGINES}, got {engine!r}")
    checks = [c.strip() for c in head.get("checks", "").split(",") if c.strip()]
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise ScenarioError(f"{path}: unknown check {unknown[0]!r}")
    return Scenario(
        name=head.get("name", path.stem),
        engine=engine,
        seed=seed if seed is not None else _int(head, "seed", 0),
        checks=checks,
        sections=sections,
        base_dir=path.parent,
        report=_bool(head.get("report", "false")),
        vcd=_bool(head.get("vcd", "false")),
    )


# -- configs -------------------------------------------------------------------


def ws_config(sec: dict) -> wse.WsConfig:
    rounds = sec.get("rounds")
    return wse.WsConfig(
        rows=_int(sec, "rows"), cols=_int(sec, "cols"),
        packing_enabled=_bool(sec.get("packing", "false")),
        fetch_variant=sec.get("fetch", "DSP_FETCH").strip().upper(),
        rounds_per_weight_set=int(rounds) if rounds else None,
        act_stages=_int(sec, "act_stages", 2),
    )


def os_configs(sec: dict) -> list[ose.OsConfig]:
    variant = sec.get("variant", "ENHANCED").strip().upper()
    variants = list(ose.Variant) if variant == "BOTH" else [variant]
    pk = _bool(sec.get("packing", "true"))
    windows = _int(sec, "windows", 1)
    out = []
    for v in variants:
        if "preset" in sec:
            out.append(ose.preset(sec["preset"].strip(), v, packing_enabled=pk, windows=windows))
        else:
            out.append(ose.OsConfig(
                chain_len=_int(sec, "chain_len"),
                chains_per_group=_int(sec, "chains_per_group", 2),
                num_groups=_int(sec, "num_groups", 1),
                variant=v, packing_enabled=pk, windows=windows))
    return out


def snn_config(sec: dict) -> snn.CrossbarConfig:
    fetch = sec.get("fetch", "DSP_FETCH_AB").strip().upper()
    if sec.get("preset", "").strip().upper() == "FIREFLY":
        base = snn.FIREFLY
        return snn.CrossbarConfig(base.chains, base.chain_len, base.weight_bits, fetch)
    if sec.get("preset"):
        raise ScenarioError(f"unknown snn preset {sec['preset']!r}")
    return snn.CrossbarConfig(_int(sec, "chains"), _int(sec, "chain_len"),
                              _int(sec, "weight_bits", snn.LANE_BITS), fetch)


def engine_reports(scn: Scenario) -> list[rm.ResourceReport]:
    try:
        if scn.engine == "ws":
            return [rm.report_ws(ws_config(scn.section("ws")))]
        if scn.engine == "os":
            return [rm.report_os(c) for c in os_configs(scn.section("os"))]
        if scn.engine == "snn":
            return [rm.report_snn(snn_config(scn.section("snn")))]
    except (KeyError, ValueError) as e:
        raise ScenarioError(f"bad engine config: {e}") from None
    raise ScenarioError(f"no resource report for engine {scn.engine!r}")


# -- helpers ---------------------------------------------------------------------


def _first_mismatch(got, want, tick: Optional[int] = None) -> str:
    got = np.asarray(got, dtype=object)
    want = np.asarray(want, dtype=object)
    if got.shape != want.shape:
        return f"shape {got.shape} != expected {want.shape}"
    bad = np.argwhere(got != want)
    if not len(bad):
        return ""
    idx = tuple(int(i) for i in bad[0])
    msg = f"first mismatch at {idx}: got {got[idx]} expected {want[idx]}"
    if tick is not None:
        msg += f" (result tick {tick})"
    return msg


def _compare(name, got, want, tick=None) -> CheckResult:
    msg = _first_mismatch(got, want, tick)
    return CheckResult(name, not msg, msg or "exact")


def _rand(rng, shape, value_range=128):
    return rng.integers(-value_range, min(value_range, 128), shape)


# -- ws ----------------------------------------------------------------------------


def _ws_stimulus(cfg, stim, rng):
    kind = stim.get("kind", "random")
    if kind == "explicit":
        tiles = [parse_matrix(t) for t in stim["weights"].split("|")]
        acts = [parse_matrix(a) for a in stim["acts"].split("|")]
        return tiles, acts
    if kind == "identity":
        eff = cfg.effective_cols
        tile = _rand(rng, (cfg.rows, eff))
        return [tile], [np.eye(cfg.rows, dtype=np.int64)]
    if kind != "random":
        raise ScenarioError(f"unknown stimulus kind {kind!r}")
    vr = _int(stim, "value_range", 128)
    sets = _int(stim, "sets", 1)
    batch = _int(stim, "batch", cfg.rows)
    tiles = [_rand(rng, (cfg.rows, cfg.effective_cols), vr) for _ in range(sets)]
    acts = [_rand(rng, (batch, cfg.rows), vr) for _ in range(sets)]
    return tiles, acts


def _ws_case(cfg, tiles, acts, checks, trace=None):
    res_checks = []
    eng = wse.build(cfg, trace)
    res = eng.run_stream(tiles, acts)
    outs = res.outputs_per_set
    if "oracle" in checks:
        want = [oracles.gemm(a, t) for a, t in zip(acts, tiles)]
        msgs = [_first_mismatch(o, w, res.latency) for o, w in zip(outs, want)]
        bad = [f"set {i}: {m}" for i, m in enumerate(msgs) if m]
        res_checks.append(CheckResult("oracle", not bad, bad[0] if bad else "exact"))
    if "utilization" in checks:
        ok = res.utilization == 1.0
        res_checks.append(CheckResult("utilization", ok, f"steady-state utilization {res.utilization}"))
    if "inventory" in checks:
        rep = rm.report_ws(cfg)
        ok = eng.num_slices == rep.dsp_total
        res_checks.append(CheckResult("inventory", ok, f"{eng.num_slices} slices vs report {rep.dsp_total}"))
    return res, res_checks


def _ws_swap_waveform(trace: WaveformTrace) -> CheckResult:
    """Stationary registers may only change on ticks where their CE2 is high."""
    bad = []
    for name in trace.signals("ws/r"):
        leaf = name.rsplit("/", 1)[1]
        if leaf not in ("A2", "B2"):
            continue
        ce = name.rsplit("/", 1)[0] + f"/CE_{leaf}"
        hist = trace.history(name)
        ticks = [t for t, _ in hist[1:]] + ([hist[0][0]] if hist and hist[0][1] else [])
        ce_vals = trace.series(ce, ticks)
        bad += [(name, t) for t, v in zip(ticks, ce_vals) if not v]
    detail = f"{name} changed at tick {bad[0][1]} without CE" if bad else "stationary registers change only on swap ticks"
    return CheckResult("swap_waveform", not bad, detail)


def run_ws(scn: Scenario, trace=None):
    sec = scn.section("ws")
    stim = scn.section("stimulus")
    sweep = scn.section("sweep")
    rng = np.random.default_rng(scn.seed)
    checks = []
    primary = None
    cases = _int(sweep, "cases", 1) if sweep else 1
    for case in range(cases):
        if sweep:
            crng = np.random.default_rng([scn.seed, case])
            cfg = wse.WsConfig(
                rows=int(crng.integers(1, _int(sweep, "max_rows", 16) + 1)),
                cols=int(crng.integers(1, _int(sweep, "max_cols", 16) + 1)),
                packing_enabled=bool(crng.integers(0, 2)),
                fetch_variant=list(wse.FetchVariant)[int(crng.integers(0, 2))])
            batch = int(crng.integers(1, _int(sweep, "max_batch", 64) + 1))
            tiles = [_rand(crng, (cfg.rows, cfg.effective_cols))]
            acts = [_rand(crng, (batch, cfg.rows))]
        else:
            cfg = ws_config(sec)
            crng = rng
            tiles, acts = _ws_stimulus(cfg, stim, crng)
        res, case_checks = _ws_case(cfg, tiles, acts, scn.checks, trace if not sweep else None)
        for c in case_checks:
            if not c.passed and sweep:
                c.detail = f"case {case} ({cfg.rows}x{cfg.cols}, packing={cfg.packing_enabled}, " \
                           f"{cfg.fetch_variant.value}): {c.detail}"
        checks = _merge(checks, case_checks, cases)
        if primary is None:
            primary = (np.vstack(res.outputs_per_set), res.latency)
    if "swap_waveform" in scn.checks and trace is not None:
        checks.append(_ws_swap_waveform(trace))
    return primary, checks


def _merge(acc: list, new: list, cases: int) -> list:
    """Fold per-case results into one result per check name (first failure wins)."""
    by = {c.name: c for c in acc}
    for c in new:
        old = by.get(c.name)
        if old is None:
            by[c.name] = CheckResult(c.name, c.passed,
                                     c.detail if cases == 1 or not c.passed else f"{cases} cases")
        elif old.passed and not c.passed:
            by[c.name] = c
    return list(by.values())


# -- os ----------------------------------------------------------------------------


def _os_stimulus(cfg, stim, rng, k=None):
    G, rows = cfg.num_groups, cfg.tile_rows
    kind = stim.get("kind", "random")
    if kind == "explicit":
        acts = parse_matrix(stim["acts"])[None]
        wts = parse_matrix(stim["weights"])[None]
        bias = parse_matrix(stim["bias"])[None] if "bias" in stim else None
        return acts, wts, bias
    if kind == "identity":
        wts = _rand(rng, (G, rows, 2))
        acts = np.broadcast_to(np.eye(rows, dtype=np.int64), (G, rows, rows)).copy()
        return acts, wts, None
    if kind != "random":
        raise ScenarioError(f"unknown stimulus kind {kind!r}")
    vr = _int(stim, "value_range", 128)
    br = _int(stim, "bias_range", 0)
    if k is None:
        k = _int(stim, "k", cfg.windows * cfg.k_per_step)
    acts = _rand(rng, (G, rows, k), vr)
    wts = _rand(rng, (G, k, 2), vr)
    bias = rng.integers(-br, br + 1, (G, rows, 2)) if br else None
    return acts, wts, bias


def _os_oracle(acts, wts, bias, bits):
    out = []
    for g in range(acts.shape[0]):
        ref = oracles.gemm(acts[g], wts[g])
        if bias is not None:
            ref = ref + np.asarray(bias[g], dtype=object)
        out.append(oracles.wrap_array(ref, bits))
    return np.array(out, dtype=object)


def os_waveform_checks(trace: WaveformTrace, cfg: ose.OsConfig, chain_outputs=None) -> list[CheckResult]:
    """Trace assertions for the in-slice multiplexing and the ring phases."""
    out = []
    period_bad = []
    alt_bad = []
    for name in trace.signals("os/"):
        if name.endswith("/CE_B1") or name.endswith("/CE_B2"):
            highs = [t for t, v in trace.history(name) if v]
            gaps = {b - a for a, b in zip(highs, highs[1:])}
            if len(highs) < 2 or gaps != {4}:
                period_bad.append(name)
        if name.endswith("/CE_B1"):
            other = name[:-1] + "2"
            h1 = [t for t, v in trace.history(name) if v]
            h2 = [t for t, v in trace.history(other) if v]
            if any((b - a) % 4 != 2 for a, b in zip(h1, h2)):
                period_bad.append(name + " offset")
        if name.endswith("/INMODE_B1"):
            hist = trace.history(name)
            ticks = [t for t, _ in hist]
            first, last = ticks[1] if len(ticks) > 1 else 0, ticks[-1]
            vals = trace.series(name, range(first, last + 1))
            if any(a == b for a, b in zip(vals, vals[1:])):
                alt_bad.append(name)
    out.append(CheckResult("ce_period", not period_bad,
                           f"{period_bad[0]} not period 4 / offset 2" if period_bad
                           else "CE_B1/CE_B2 period 4, offset 2"))
    out.append(CheckResult("inmode_alternation", not alt_bad,
                           f"{alt_bad[0]} does not alternate" if alt_bad
                           else "B select alternates every fast tick"))
    ring_bad = []
    for name in trace.signals("os/"):
        if name.endswith("/ring/wr_en"):
            slot = name[:-len("wr_en")] + "wr_slot"
            span = range(trace.changes[-1][0] + 1)
            en_ticks = [t for t, v in zip(span, trace.series(name, span)) if v]
            slots = trace.series(slot, en_ticks)
            ring_bad += [(name, t) for t, s in zip(en_ticks, slots) if s != t % 4]
    out.append(CheckResult("ring_phase", not ring_bad,
                           f"slot write off-phase at tick {ring_bad[0][1]}" if ring_bad
                           else "slot i written only on ticks = i mod 4"))
    if chain_outputs is not None:
        bad = []
        for grp in chain_outputs:
            for ch in grp:
                ticks = [o.tick for o in ch]
                for w in range(0, len(ticks), 4):
                    blk = ticks[w:w + 4]
                    if len(blk) != 4 or blk[-1] - blk[0] != 3:
                        bad.append(blk)
        out.append(CheckResult("chain_rate", not bad,
                               f"window ticks {bad[0]}" if bad else "4 pairs per 4 fast ticks per chain"))
    return out


def run_os(scn: Scenario, trace=None):
    sec = scn.section("os")
    stim = scn.section("stimulus")
    sweep = scn.section("sweep")
    checks = []
    primary = None
    cases = _int(sweep, "cases", 1) if sweep else 1
    for case in range(cases):
        case_checks = []
        if sweep:
            crng = np.random.default_rng([scn.seed, case])
            pk = bool(crng.integers(0, 2))
            cl_max = min(_int(sweep, "max_chain_len", 7), ose.OFFICIAL_MAX_PACKED_CHAIN if pk else 64)
            N = int(crng.integers(1, cl_max + 1))
            G = int(crng.integers(1, _int(sweep, "max_groups", 2) + 1))
            W = int(crng.integers(1, _int(sweep, "max_windows", 4) + 1))
            cfgs = [ose.OsConfig(chain_len=N, num_groups=G, variant=v, packing_enabled=pk, windows=W)
                    for v in ose.Variant]
            k = int(crng.integers(1, W * 2 * N + 1))
            # operand range keeping |result| < 2**23 (bias included)
            vr = int(min(128, np.sqrt((1 << 22) / k)))
            acts, wts, bias = _os_stimulus(cfgs[0], {"value_range": vr, "bias_range": 1 << 20},
                                           crng, k)
        else:
            cfgs = os_configs(sec)
            crng = np.random.default_rng(scn.seed)
            acts, wts, bias = _os_stimulus(cfgs[0], stim, crng)
        results = {}
        engines = {}
        for cfg in cfgs:
            tr = trace if (trace is not None and cfg.variant is ose.Variant.ENHANCED) else None
            eng = ose.build(cfg, tr)
            res = eng.run(acts, wts, bias)
            results[cfg.variant] = res
            engines[cfg.variant] = eng
            if "oracle" in scn.checks:
                want = _os_oracle(acts, wts, bias, cfg.result_bits)
                c = _compare("oracle", res.output, want, res.fast_ticks)
                c.detail = f"{cfg.variant.value}: {c.detail}"
                case_checks.append(c)
            if "inventory" in scn.checks:
                rep = rm.report_os(cfg)
                ok = (eng.inventory["mult"], eng.inventory["acc"]) == (rep.dsp_mult, rep.dsp_acc)
                case_checks.append(CheckResult("inventory", ok,
                                               f"{cfg.variant.value}: {eng.inventory} vs report "
                                               f"({rep.dsp_mult}, {rep.dsp_acc})"))
            if primary is None:
                primary = (res.output.reshape(-1, 2), res.fast_ticks)
        if "cross_variant" in scn.checks:
            if len(results) != 2:
                raise ScenarioError("cross_variant needs variant = both")
            a, b = results[ose.Variant.OFFICIAL], results[ose.Variant.ENHANCED]
            c = _compare("cross_variant", a.output, b.output)
            if c.passed and a.active_slow_ticks != b.active_slow_ticks:
                c = CheckResult("cross_variant", False,
                                f"slow ticks {a.active_slow_ticks} vs {b.active_slow_ticks}")
            case_checks.append(c)
        if "wrap_oracle" in scn.checks:
            # full-range bias forces 24-bit wrap in the ring
            cfg = next(c for c in cfgs if c.variant is ose.Variant.ENHANCED)
            a2, w2, _ = _os_stimulus(cfg, {}, crng, acts.shape[2])
            b2 = crng.integers(-(1 << 23), 1 << 23, (cfg.num_groups, cfg.tile_rows, 2))
            got = ose.build(cfg).run(a2, w2, b2).output
            case_checks.append(_compare("wrap_oracle", got, _os_oracle(a2, w2, b2, 24)))
        if sweep:
            for c in case_checks:
                if not c.passed:
                    c.detail = f"case {case} (N={cfgs[0].chain_len}, groups={cfgs[0].num_groups}, " \
                               f"packing={cfgs[0].packing_enabled}, K={acts.shape[2]}): {c.detail}"
        checks = _merge(checks, case_checks, cases)
    if "waveform" in scn.checks:
        eng = engines.get(ose.Variant.ENHANCED)
        if eng is None or trace is None or sweep:
            raise ScenarioError("waveform check needs a single ENHANCED run with tracing")
        checks += os_waveform_checks(trace, eng.config, eng.last_chain_outputs)
    return primary, checks


# -- snn ---------------------------------------------------------------------------


def _snn_stimulus(cfg, stim, rng, ticks=None):
    kind = stim.get("kind", "random")
    shape = (cfg.chains, cfg.chain_len, snn.LANES)
    h = 1 << (cfg.weight_bits - 1)
    if kind == "explicit":
        spikes = parse_matrix(stim["spikes"]).reshape(-1, cfg.chain_len, 2)
        w_ab = parse_matrix(stim["weights_ab"]).reshape(shape)
        w_c = parse_matrix(stim["weights_c"]).reshape(shape)
        return spikes, w_ab, w_c
    if kind != "random":
        raise ScenarioError(f"unknown stimulus kind {kind!r}")
    T = ticks if ticks is not None else _int(stim, "ticks", 16)
    density = float(stim.get("density", "0.5"))
    spikes = (rng.random((T, cfg.chain_len, 2)) < density).astype(np.int64)
    return spikes, rng.integers(-h, h, shape), rng.integers(-h, h, shape)


def run_snn(scn: Scenario, trace=None):
    sweep = scn.section("sweep")
    cfg = snn_config(scn.section("snn"))
    checks = []
    primary = None
    cases = _int(sweep, "cases", 1) if sweep else 1
    for case in range(cases):
        crng = np.random.default_rng([scn.seed, case]) if sweep else np.random.default_rng(scn.seed)
        stim = dict(scn.section("stimulus"))
        if sweep:
            stim["density"] = str(crng.random())
            T = int(crng.integers(1, _int(sweep, "max_ticks", 32) + 1))
        else:
            T = None
        spikes, w_ab, w_c = _snn_stimulus(cfg, stim, crng, T)
        res = snn.run_crossbar(cfg, spikes, w_ab, w_c, trace if not sweep else None)
        case_checks = []
        if "oracle" in scn.checks:
            case_checks.append(_compare("oracle", res.output, oracles.gated_sum(spikes, w_ab, w_c),
                                        res.ticks))
        if "fetch_equivalence" in scn.checks:
            outs = [snn.run_crossbar(snn.CrossbarConfig(cfg.chains, cfg.chain_len, cfg.weight_bits, f),
                                     spikes, w_ab, w_c).output for f in snn.SnnFetch]
            case_checks.append(_compare("fetch_equivalence", outs[0], outs[1]))
        if sweep:
            for c in case_checks:
                if not c.passed:
                    c.detail = f"case {case} (ticks={len(spikes)}): {c.detail}"
        checks = _merge(checks, case_checks, cases)
        if primary is None:
            primary = (res.output, res.ticks)
    if "clb_ratio" in scn.checks:
        bits = {}
        for f in snn.SnnFetch:
            c2 = snn.CrossbarConfig(cfg.chains, cfg.chain_len, cfg.weight_bits, f)
            sim_bits = snn.build(c2).clb_weight_register_bits
            rep_bits = rm.report_snn(c2).weight_reg_bits_clb
            if sim_bits != rep_bits:
                checks.append(CheckResult("clb_ratio", False,
                                          f"{f.value}: simulator {sim_bits} vs report {rep_bits}"))
            bits[f] = rep_bits
        dsp, clb = bits[snn.SnnFetch.DSP_FETCH_AB], bits[snn.SnnFetch.CLB_FETCH]
        checks.append(CheckResult("clb_ratio", 2 * dsp == clb,
                                  f"DSP_FETCH_AB {dsp} / CLB_FETCH {clb} bits"))
    return primary, checks


# -- selftests -----------------------------------------------------------------------


def selftest_packing() -> CheckResult:
    cases, failures = packing.exhaustive_check()
    if failures:
        hi, lo, w = failures[0]
        return CheckResult("packing", False, f"{cases} cases, first failing (hi, lo, w) = {failures[0]}")
    return CheckResult("packing", True, f"{cases} cases, 0 failures")


def selftest_simd(seed: int = 0, cases: int = 2000) -> CheckResult:
    """Random four-input lane adds against an independent per-lane sum."""
    rng = np.random.default_rng(seed)
    n = 0
    for mode in SimdMode:
        width = mode.value
        for _ in range(cases):
            lanes = rng.integers(-(1 << (width - 1)), 1 << (width - 1), (4, mode.lanes))
            words = [join_lanes(tuple(int(v) for v in row), mode) for row in lanes]
            got = split_lanes(simd_add(*words, mode), mode)
            want = tuple(int(v) for v in oracles.wrap_array(lanes.astype(object).sum(axis=0), width))
            n += 1
            if got != want:
                return CheckResult("simd", False,
                                   f"{mode.name} lanes {lanes.tolist()}: got {got} expected {want}")
    return CheckResult("simd", True, f"{n} cases, 0 failures")


def run_selftests(suites, seed: int = 0) -> list[CheckResult]:
    out = []
    for s in suites:
        if s == "packing":
            out.append(selftest_packing())
        elif s == "simd":
            out.append(selftest_simd(seed))
        else:
            raise ScenarioError(f"unknown selftest suite {s!r}")
    return out


# -- top level ---------------------------------------------------------------------


def _check_expected(scn: Scenario, primary) -> list[CheckResult]:
    exp = scn.section("expected")
    out = []
    if "output" in exp or "file" in exp:
        if "file" in exp:
            path = scn.base_dir / exp["file"]
            want = np.loadtxt(path, dtype=np.int64, ndmin=2)
        else:
            want = parse_matrix(exp["output"])
        got, tick = primary
        out.append(_compare("expected", np.asarray(got).reshape(want.shape)
                            if np.asarray(got).size == want.size else got, want, tick))
    return out


def _check_report_cells(scn: Scenario, reports) -> CheckResult:
    exp = {k: v for k, v in scn.section("expected").items() if "." in k}
    by_variant = {r.variant: r.flat() for r in reports}
    for key, val in exp.items():
        variant, fld = key.split(".", 1)
        row = by_variant.get(variant.upper())
        if row is None or fld not in row:
            raise ScenarioError(f"unknown report cell {key}")
        if row[fld] != int(val):
            return CheckResult("report_cells", False, f"{key}: got {row[fld]} expected {val}")
    return CheckResult("report_cells", True, f"{len(exp)} cells match")


def execute(scn: Scenario, out_dir, force_vcd: bool = False) -> Outcome:
    """Run a scenario, write its artifacts into ``out_dir`` and collect checks."""
    out_dir = Path(out_dir)
    outcome = Outcome(scn.name)
    if scn.engine == "selftest":
        suites = [s.strip() for s in scn.section("scenario").get("suite", "all").split(",")]
        if suites == ["all"]:
            suites = list(SELFTEST_SUITES)
        outcome.checks = run_selftests(suites, scn.seed)
        return outcome
    want_vcd = scn.vcd or force_vcd
    trace = WaveformTrace() if (want_vcd or "swap_waveform" in scn.checks
                                or "waveform" in scn.checks) else None
    runner = {"ws": run_ws, "os": run_os, "snn": run_snn}[scn.engine]
    try:
        primary, checks = runner(scn, trace)
    except SimError as e:
        if isinstance(e, (ConfigError, StimulusError)):
            raise
        checks, primary = [CheckResult("run", False, f"{type(e).__name__}: {e}")], None
    outcome.checks = checks
    if primary is not None:
        outcome.checks += _check_expected(scn, primary)
    reports = engine_reports(scn) if (scn.report or "report_cells" in scn.checks) else []
    if "report_cells" in scn.checks:
        outcome.checks.append(_check_report_cells(scn, reports))
    out_dir.mkdir(parents=True, exist_ok=True)
    if scn.report:
        outcome.artifacts.append(rm.write_csv(reports, out_dir / f"{scn.name}.report.csv"))
        outcome.artifacts.append(rm.write_json(reports, out_dir / f"{scn.name}.report.json"))
    if primary is not None:
        path = out_dir / f"{scn.name}.out.txt"
        np.savetxt(path, np.asarray(primary[0], dtype=np.int64).reshape(len(primary[0]), -1), fmt="%d")
        outcome.artifacts.append(path)
    if want_vcd and trace is not None and trace.widths:
        outcome.artifacts.append(export_vcd(trace, out_dir / f"{scn.name}.vcd"))
    if "determinism" in scn.checks:
        outcome.checks.append(_determinism(scn, outcome.artifacts, force_vcd))
    return outcome


def _determinism(scn: Scenario, artifacts, force_vcd) -> CheckResult:
    again = Scenario(**{**scn.__dict__, "checks": [c for c in scn.checks if c != "determinism"]})
    with tempfile.TemporaryDirectory() as tmp:
        second = execute(again, tmp, force_vcd)
        names = {p.name: p for p in second.artifacts}
        for p in artifacts:
            q = names.get(p.name)
            if q is None or not filecmp.cmp(p, q, shallow=False):
                return CheckResult("determinism", False, f"{p.name} differs between runs")
    return CheckResult("determinism", True, f"{len(artifacts)} artifacts byte-identical")

"""Weight-stationary array streaming four weight sets back to back.

Each next tile is shifted into the prefetch registers while the current one
computes, so the swap costs no idle rounds.
"""

import numpy as np

from dsp48sim import ws_engine as wse
from dsp48sim.oracles import gemm

rng = np.random.default_rng(1)
cfg = wse.WsConfig(8, 4, packing_enabled=True, fetch_variant=wse.FetchVariant.DSP_FETCH)
tiles = [rng.integers(-128, 128, (8, cfg.effective_cols)) for _ in range(4)]
acts = [rng.integers(-128, 128, (8, 8)) for _ in range(4)]

eng = wse.build(cfg)
res = eng.run_stream(tiles, acts)
print(f"{eng.num_slices} slices, {cfg.effective_cols} output columns")
print(f"{res.ticks} ticks, latency {res.latency}, utilization {res.utilization:.3f}")
print("exact:", all(np.array_equal(o, gemm(a, t))
                    for o, a, t in zip(res.outputs_per_set, acts, tiles)))

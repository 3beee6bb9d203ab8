"""Output-stationary engine: ring-accumulator design vs the reference layout.

Both variants compute the same tiles; the ring design needs half the
accumulator slices and no fabric multiplexers.
"""

import numpy as np

from dsp48sim import os_engine as ose
from dsp48sim import resource_model as rm
from dsp48sim.oracles import gemm

rng = np.random.default_rng(2)
N, G, windows = 4, 2, 3
K = windows * 2 * N
a = rng.integers(-128, 128, (G, 4, K))
w = rng.integers(-128, 128, (G, K, 2))
bias = rng.integers(-1000, 1000, (G, 4, 2))
want = np.stack([gemm(x, y) for x, y in zip(a, w)]) + bias

for v in ose.Variant:
    cfg = ose.OsConfig(chain_len=N, num_groups=G, variant=v)
    res = ose.build(cfg).run(a, w, bias)
    rep = rm.report_os(cfg, v)
    print(f"{v.value:9s} exact={np.array_equal(res.output, want)} "
          f"fast_ticks={res.fast_ticks} mult={rep.dsp_mult} acc={rep.dsp_acc} "
          f"mux={rep.clb_mux_elems}")

"""Spiking crossbar: binary spikes gate weight additions in 12-bit lanes."""

import numpy as np

from dsp48sim import resource_model as rm
from dsp48sim import snn_crossbar as snn
from dsp48sim.oracles import gated_sum

rng = np.random.default_rng(3)
cfg = snn.FIREFLY
shape = (cfg.chains, cfg.chain_len, snn.LANES)
w_ab, w_c = rng.integers(-128, 128, shape), rng.integers(-128, 128, shape)
spikes = (rng.random((16, cfg.chain_len, 2)) < 0.2).astype(int)

res = snn.run_crossbar(cfg, spikes, w_ab, w_c)
print(f"{cfg.chains}x{cfg.chain_len} crossbar, {res.ticks} ticks")
print("matches gated sum:", np.array_equal(res.output, gated_sum(spikes, w_ab, w_c)))
for f in snn.SnnFetch:
    bits = rm.report_snn(snn.CrossbarConfig(cfg.chains, cfg.chain_len, 8, f)).weight_reg_bits_clb
    print(f"{f.value}: {bits} fabric weight-register bits")

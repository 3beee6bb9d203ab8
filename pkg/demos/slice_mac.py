"""Drive a single DSP48E2 slice as a multiply-accumulate unit.

Feeds five (a, b) pairs through the default 2+1+1 register pipeline and
accumulates in P, then shows the same word split into four 12-bit SIMD lanes.
"""

from dsp48sim.dsp48e2 import (MuxW, MuxX, MuxY, MuxZ, SimdMode, Slice, Dsp48e2Ports,
                              join_lanes, simd_add, split_lanes)

pairs = [(3, 4), (-7, 5), (100, -2), (0, 9), (-128, -128)]
s = Slice()
latency = s.attrs.areg_stages + 2  # A1/A2, M, P
for t in range(len(pairs) + latency):
    a, b = pairs[t] if t < len(pairs) else (0, 0)
    s.tick(Dsp48e2Ports(a=a, b=b, opmode_x=MuxX.M, opmode_y=MuxY.M,
                        opmode_z=MuxZ.ZERO, opmode_w=MuxW.P))
    print(f"tick {t}: P = {s.outputs.p}")
print("expected sum of products:", sum(a * b for a, b in pairs))

# FOUR12: each 12-bit lane wraps on its own, no carry crosses lanes
x = join_lanes((2047, 1, -5, -2048), SimdMode.FOUR12)
z = join_lanes((1, 1, 5, -1), SimdMode.FOUR12)
print("FOUR12 lanes:", split_lanes(simd_add(0, x, 0, z, SimdMode.FOUR12), SimdMode.FOUR12))

"""Two INT8 products from one 27x18 multiply.

Two activations sharing a weight are packed as ``hi * 2**18 + lo``; a single
product then holds both lane results, recovered with a sign-borrow fix-up.
"""

import numpy as np

from dsp48sim import packing

hi, lo, w = -93, 117, -128
pair = packing.pack(hi, lo)
lanes = packing.unpack_and_correct(pair.packed27 * w)
print(f"packed operand {pair.packed27}, product {pair.packed27 * w}")
print(f"lanes: {lanes.p_hi} {lanes.p_lo}  direct: {hi * w} {lo * w}")

# deferred correction: accumulate raw products, fix the borrow once at the end
rng = np.random.default_rng(0)
his, los, ws = (rng.integers(-128, 128, 500) for _ in range(3))
prods = [int(packing.pack_word(h, l) * x) for h, l, x in zip(his, los, ws)]
print("deferred sums:", packing.accumulate_deferred(prods),
      " direct:", (int(his @ ws), int(los @ ws)))

"""Resource breakdowns for the built-in presets, printed and saved as CSV."""

import sys

from dsp48sim import os_engine as ose
from dsp48sim import resource_model as rm
from dsp48sim import ws_engine as wse

reports = [rm.report_os("B1024", v) for v in ose.Variant]
reports += [rm.report_ws(wse.WsConfig(14, 14, packing_enabled=True, fetch_variant=f))
            for f in wse.FetchVariant]
for r in reports:
    print(f"{r.engine}/{r.variant}: dsp={r.dsp_total} mux={r.clb_mux_elems} "
          f"addtree_ff={r.addtree_ff} weight_bits={r.weight_reg_bits_clb}")
if len(sys.argv) > 1:
    print("wrote", rm.write_csv(reports, sys.argv[1]))

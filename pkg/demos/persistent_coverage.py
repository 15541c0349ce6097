"""Coverage that trades task progress for survival.

Six robots cover the arena while batteries drain. When a robot's energy
barrier binds, it leaves its Voronoi cell, recharges at its own station and
returns, while two obstacles circle through the arena. The script prints
each robot's minimum energy with its charging-cycle count, then the
closest obstacle approach. An energy chart lands in
runs/demo-persistence/energy.svg.

    python3 demos/persistent_coverage.py          # 60 s, about a minute of wall time
    python3 demos/persistent_coverage.py 20       # shorter horizon
"""
import sys

import numpy as np

from swarmcbf import engine
from swarmcbf import scenario as scn
from swarmcbf.output import emit_outputs

doc = scn.preset("persistence-6x2").to_dict()
if len(sys.argv) > 1:
    doc["horizon"] = float(sys.argv[1])
sc = scn.parse_dict(doc)
world = scn.build_world(sc)
metrics = scn.run(sc)

b = sc.survivability["battery"]
print(f"E_min = {b['e_min']}, E_chg = {b['e_chg']}, horizon {sc.horizon:g} s")
for i in range(sc.n_robots):
    e = metrics.energies[:, i]
    cycles = engine.charging_cycles(e, b["e_min"], b["e_chg"])
    print(f"  robot {i}: min E = {np.nanmin(e):.4f}, charging cycles = {cycles}")
print(f"closest obstacle approach: {np.nanmin(metrics.obstacle_distance):.4f} m "
      f"(clearance radius {sc.survivability['obstacles'][0]['d_o']} m)")

written = emit_outputs("runs/demo-persistence", sc, world, metrics, svg=True, frames_stride=500)
print(f"wrote {len(written)} files under runs/demo-persistence")

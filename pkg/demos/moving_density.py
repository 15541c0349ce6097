"""Tracking a gaussian that orbits the arena.

Runs the exact decentralized QP and the truncated-series centralized law
from the same centroidal start and prints their mean distance to the
moving centroids every five seconds. Takes a couple of minutes.

    python3 demos/moving_density.py
"""
from swarmcbf import scenario as scn
from swarmcbf.compare import compare_tvd

sc = scn.preset("tvd-gaussian")
res = compare_tvd(sc)
qp = res.qp_error.mean(axis=1)
ns = res.neumann_error.mean(axis=1)
print("   t [s]   QP mean ||x-G||   series mean ||x-G||")
for k in range(0, len(res.t), int(5 / sc.dt)):
    print(f"  {res.t[k]:6.1f}   {qp[k]:.5f}           {ns[k]:.5f}")
print(f"steady state (last half): QP {res.qp_steady:.5f}, series {res.neumann_steady:.5f}")

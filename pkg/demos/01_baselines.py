"""Walk through a generated fog network and compare the fixed placement rules.

Run from the repository root:  python demos/01_baselines.py
"""

import numpy as np

from fogbalance.harness import evaluate
from fogbalance.metrics import distribution_matrix, mean_loop_delay, mean_waiting
from fogbalance.topology import generate_topology
from fogbalance.workload import default_apps

# A 20-node scale-free network. The most central node becomes the Cloud, the five
# least central ones are IoT source clusters, and everything else is a Fog node.
topo = generate_topology(20, 5, seed=0)
print("cloud:", topo.cloud_id)
print("iot clusters:", topo.cluster_ids)
print("fog nodes and speeds (instr/ms):")
for f in topo.fog_ids:
    print(f"  {f:3d}  ipt={topo.node(f).ipt:g}")

apps = default_apps()
for app in apps:
    print(f"app {app.id}: {app.category.name.lower():8s} {app.fog_instr:g} instructions")

# One 10-second episode per policy and arrival rate. Every policy sees the same
# arrival stream for a given seed, so the differences come from placement alone.
print()
print(f"{'policy':16s} {'beta':>5s} {'waiting ms':>11s} {'loop ms':>9s}")
for beta in (200.0, 100.0):
    for name in ("random", "rr", "nearest", "fastest", "fastest-backlog"):
        res = evaluate(name, topo, apps, beta, 10_000, seed=1)
        print(f"{name:16s} {beta:5g} {mean_waiting(res.records):11.1f} "
              f"{mean_loop_delay(res.records):9.1f}")

# Where did round-robin send the heavy work from the first cluster?
res = evaluate("rr", topo, apps, 100.0, 10_000, seed=1)
m = distribution_matrix(res.records, [a.id for a in apps], topo.cluster_ids, topo.fog_ids)
row = m.row(apps[-1].id, topo.cluster_ids[0])
print()
print("round-robin, heavy jobs from cluster", topo.cluster_ids[0])
print(dict(zip(topo.fog_ids, row.tolist())))
print("spread across nodes:", int(np.ptp(row)))

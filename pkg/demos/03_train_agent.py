"""Train a privacy-aware DDQL balancer and put it next to the baselines.

The desk schedule (15,000 training steps) takes about a minute on a laptop.
Pass a smaller step count for a quick look:  python demos/03_train_agent.py 3000
"""

import sys
import time

from fogbalance.ddql import TrainSchedule
from fogbalance.harness import evaluate, train_agent
from fogbalance.metrics import mean_loop_delay, mean_waiting
from fogbalance.topology import generate_topology
from fogbalance.workload import default_apps

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 15_000
topo = generate_topology(20, 5, seed=0)
apps = default_apps()
sched = TrainSchedule.desk(total_train_steps=steps)

# The agent only sees which cluster and category the job comes from, plus the
# fading record of its own earlier placements. Its reward is the drop in the
# number of waiting jobs between two consecutive decisions.
start = time.perf_counter()
agent, curve = train_agent("ddql", topo, apps, 100.0, sched, seed=0)
print(f"trained {agent.train_steps} steps over {len(curve.returns)} episodes "
      f"in {time.perf_counter() - start:.0f} s")
print("episode returns, smoothed:", [round(x, 1) for x in curve.moving_average[::5]])

# The same agent also checkpoints to a small text-header file.
agent.save("demo_agent.ckpt", policy="ddql")

print(f"{'policy':10s} {'waiting ms':>11s} {'loop ms':>9s}")
for name in ("ddql", "random", "rr", "nearest", "fastest"):
    res = evaluate(name, topo, apps, 100.0, 10_000, seed=101, agent=agent)
    print(f"{name:10s} {mean_waiting(res.records):11.1f} {mean_loop_delay(res.records):9.1f}")

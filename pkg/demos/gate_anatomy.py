"""What the gate looks like after each task boundary.

After every task the normalised Fisher of that task is merged into the
running importance; parameters at or above alpha become long-term memory
(gate 1) and move only as far as their remaining uncertainty P allows.
This prints, per boundary, how many parameters are long-term, how much
uncertainty they still carry, and how far the first task's weights drift
during the following task.

    python demos/gate_anatomy.py [alpha]
"""

import sys

import numpy as np

from kalman_cl import TrainConfig, run_sequence, split_tasks, synthetic_split

alpha = float(sys.argv[1]) if len(sys.argv) > 1 else TrainConfig().alpha
train, test = synthetic_split(seed=0)
tasks = split_tasks(train, 2, test)
snapshots = []
run_sequence(tasks, TrainConfig(alpha=alpha), [16, 64, 64, 10], on_task_end=lambda p: snapshots.append(p.state.copy()))

n = snapshots[0].theta.size
print(f"alpha={alpha}, {n} parameters")
print("task  long-term  mean P (long-term)  |theta drift| long-term / short-term (next task)")
for t, state in enumerate(snapshots, start=1):
    lt = state.f_star == 1.0
    line = f"{t:>4}  {lt.sum():>9}  {state.P[lt].mean():>18.2e}"
    if t < len(snapshots):
        drift = np.abs(snapshots[t].theta - state.theta)
        line += f"  {drift[lt].mean():.2e} / {drift[~lt].mean():.2e}"
    print(line)

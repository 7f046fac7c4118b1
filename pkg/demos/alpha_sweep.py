"""Final average accuracy as a function of the long-term threshold alpha.

Small alpha puts more parameters under the gate (more protection, less room
for new tasks); alpha near 1 leaves almost everything free and the run
behaves like SGD.

    python demos/alpha_sweep.py [seed]
"""

import sys

from kalman_cl import TrainConfig, run_sequence, split_tasks, synthetic_split

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
train, test = synthetic_split(seed=seed)
tasks = split_tasks(train, 2, test)

print("alpha    final avg  task-1 final  min current-task")
for alpha in (0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.2, 0.5, 1.0):
    r = run_sequence(tasks, TrainConfig(seed=seed, alpha=alpha), [16, 64, 64, 10])
    current = min(row[s] for s, row in enumerate(r.accuracy_matrix))
    print(f"{alpha:<8} {r.average_curve[-1]:9.3f}  {r.final_accuracies[0]:12.3f}  {current:16.3f}")

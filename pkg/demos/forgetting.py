"""SGD vs the Kalman optimiser on five disjoint two-class tasks.

Trains the same MLP twice on the synthetic digits, once with plain SGD and
once with the Fisher-gated Kalman update, and prints the accuracy matrix of
each run: row s holds the test accuracy on tasks 1..s after training task s.

    python demos/forgetting.py [seed]
"""

import sys

from kalman_cl import TrainConfig, run_sequence, split_tasks, synthetic_split

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
train, test = synthetic_split(seed=seed)
tasks = split_tasks(train, 2, test)

for optimizer in ("sgd", "kalman"):
    report = run_sequence(tasks, TrainConfig(seed=seed, optimizer=optimizer), [16, 64, 64, 10])
    print(f"\n{optimizer}  ({report.wall_clock_seconds:.1f}s)")
    for s, row in enumerate(report.accuracy_matrix, start=1):
        cells = " ".join(f"{a:5.2f}" for a in row)
        print(f"  after task {s}: {cells:<30} avg {report.average_curve[s - 1]:.3f}")

# Under SGD the first task typically falls to chance (0.5) while the newest
# task is always learned; the Kalman run keeps the old heads close to 1.0.

"""How often the forgetting benchmark separates SGD from the Kalman optimiser.

Runs both optimisers on seeds 0..N-1 with the default configuration and
checks, per seed, the three benchmark conditions used by the acceptance
suite:

    F  SGD task-1 final < 0.6 and Kalman tasks 1-2 final >= 0.9
    A  Kalman final average >= 0.85 and >= its stage-1 average - 0.05,
       SGD final average <= Kalman final average - 0.2
    C  Kalman accuracy on the task just trained >= 0.9 at every stage

    python demos/seed_robustness.py [num_seeds]
"""

import sys

from kalman_cl import TrainConfig, run_sequence, split_tasks, synthetic_split

num_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 10
print("seed  sgd T1  sgd avg  kal T1  kal T2  kal avg  min cur   F A C")
passed = 0
for seed in range(num_seeds):
    train, test = synthetic_split(seed=seed)
    tasks = split_tasks(train, 2, test)
    sgd, kal = (run_sequence(tasks, TrainConfig(seed=seed, optimizer=o), [16, 64, 64, 10]) for o in ("sgd", "kalman"))
    s_avg, k_avg = sgd.average_curve, kal.average_curve
    cur = min(row[s] for s, row in enumerate(kal.accuracy_matrix))
    f = sgd.final_accuracies[0] < 0.6 and min(kal.final_accuracies[:2]) >= 0.9
    a = k_avg[-1] >= 0.85 and k_avg[-1] >= k_avg[0] - 0.05 and s_avg[-1] <= k_avg[-1] - 0.2
    c = cur >= 0.9
    passed += f and a and c
    flags = " ".join("." if ok else "x" for ok in (f, a, c))
    print(f"{seed:>4}  {sgd.final_accuracies[0]:6.2f}  {s_avg[-1]:7.3f}  {kal.final_accuracies[0]:6.2f}  "
          f"{kal.final_accuracies[1]:6.2f}  {k_avg[-1]:7.3f}  {cur:7.2f}   {flags}")
print(f"{passed}/{num_seeds} seeds satisfy all three")

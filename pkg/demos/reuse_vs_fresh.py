"""Reusing one batch versus streaming fresh data, side by side.

Trains the same width-1 student on three single-index teachers and
prints the teacher-direction overlap after each step.  The odd tanh
teacher is learned either way; the pure degree-3 teacher moves only
when the batch is revisited; the pure degree-4 teacher stays below the
weak-recovery level for both schedules on this horizon.  Run counts
are shrunk from the shipped presets so the script finishes in under a
minute.
"""

import math

import numpy as np

from batchreuse.gdsim import BatchSchedule, TrainConfig, train
from batchreuse.hardness import Direction
from batchreuse.targets import make_teacher, named_target

D = 2000
RUNS = 8
STEPS = 6


def overlap_row(target_name: str, schedule: BatchSchedule) -> np.ndarray:
    target = named_target(target_name)
    cfg = TrainConfig(
        d=D, alpha=3.0, p=1, eta=0.1, lam=0.0, steps=STEPS,
        schedule=schedule, seed=0, runs=RUNS,
    )
    teacher = make_teacher(D, target.k, seed=0)
    trace = train(cfg, teacher, target, [Direction.axis(1, 1)])
    return trace.overlap("e1")[0]


def main() -> None:
    print(f"teacher-direction overlap, d={D}, n=3d, eta=0.1, {RUNS} runs")
    print(f"{'teacher':<8} {'schedule':<18} " + " ".join(f"t={t}" for t in range(STEPS + 1)))
    for name in ("tanh", "he3", "he4"):
        for schedule in (BatchSchedule.full_batch_reuse(), BatchSchedule.fresh_one_pass()):
            row = overlap_row(name, schedule)
            cells = " ".join(f"{v:.3f}" for v in row)
            print(f"{name:<8} {schedule.kind:<18} {cells}")
    print()
    print("reading guide: tanh rises immediately on both schedules; he3 rises")
    print("from the second step only when the batch is reused; he4 drifts but")
    print(f"stays below the weak-recovery level 15/sqrt(d) = {15 / math.sqrt(D):.3f}")
    print("for both schedules on this horizon.")


if __name__ == "__main__":
    main()

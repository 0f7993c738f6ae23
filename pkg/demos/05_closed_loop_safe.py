"""
Opening a safe in closed loop
=============================

Each loop renders the scene around the gripper, predicts flow for the nearby
points and turns it into a rigid command. The door is then moved kinematically.
"""

import numpy as np

from genflow import OracleFlowPredictor, run_episode
from genflow.scenes import standard_task

world, task = standard_task("open-safe")


def report(k, w, info):
    angle = np.degrees(w.obj("safe").joint("door").value)
    print(f"step {k}: {info.flow.n_queries} queries, door at {angle:5.1f} deg"
          + ("  (short flow rescaled)" if info.workaround else ""))


res = run_episode(world, task, OracleFlowPredictor(task), max_steps=50, seed=0, on_step=report)
print("success:", res.success, "after", res.steps, "steps")

# noisy predictions still get there, a few steps later at most
rates = [run_episode(world, task, OracleFlowPredictor(task, noise_sigma=0.01), seed=s).success for s in range(20)]
print("noisy success rate:", np.mean(rates))

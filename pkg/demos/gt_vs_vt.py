"""Train KG-A2C briefly in GT and VT mode on one task and print the final points of the reward curves.

Usage: python demos/gt_vs_vt.py [task] [steps]
"""
import sys
import tempfile

from kigames.harness import ExperimentConfig, evaluate, final_means, load_resources, reward_curves, train

task = sys.argv[1] if len(sys.argv) > 1 else "lifespan"
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
out = tempfile.mkdtemp()
trajectories = {}
res = None
for variant in ("baseline_GT", "baseline_VT"):
    cfg = ExperimentConfig(agent="kga2c", variant=variant, tasks=[task], steps=steps, out_dir=f"{out}/{variant}")
    res = res or load_resources(cfg)
    (run,) = train(cfg, res)
    trajectories[variant] = evaluate(run.checkpoint, cfg, res).trajectories
for mode, value in final_means(reward_curves(trajectories)).items():
    print(f"{mode}: final mean score {value:.2f}")

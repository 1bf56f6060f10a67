"""Drive the full experiment pipeline through its stage API.

Each stage writes artifacts plus a manifest keyed by the config hash into a run
directory; the same thing the `prefetchlab` command does one stage at a time.
Takes ~60 s.

Run:  python demos/08_pipeline_stages.py
"""

import json
import pathlib
import tempfile

from prefetchlab import pipeline

config = pipeline.ExperimentConfig.from_dict({
    "seed": 3,
    "trace": {"source": "generate",
              "pattern": {"name": "stride", "stride": 3, "cycle_step": 25},
              "length": 4000},
    "label": {"look_forward": 24, "delta_bound": 64},
    "model": {"hidden_dim": 16, "num_heads": 2, "num_layers": 1, "history_len": 4},
    "train": {"max_epochs": 4, "batch_size": 128},
    "cache": {"sets": 32, "ways": 8},
    "simulate": {"prefetchers": ["model", "stride", "best_offset"]},
    "sweep": {"latencies": [0, 100, 200], "throughputs": ["L", "H"],
              "distance": [True, False]},
    "eval_modes": [{"mode": "delta"}, {"mode": "page_offset"}],
})
print("config hash:", pipeline.config_hash(config)[:12])

run_dir = pathlib.Path(tempfile.mkdtemp(prefix="prefetchlab_run_"))
for stage in pipeline.STAGES:
    manifest = pipeline.run_stage(stage, config, run_dir)
    print(f"  {stage:10s} -> {len(manifest['outputs'])} artifact(s)")

summary = json.loads((run_dir / "summary.json").read_text())
print("\nthreshold:", summary["threshold"])
print("input ablation F1 by mode:",
      {row["mode"]: round(row["f1"], 3) for row in summary["input_ablation"]})
print("simulation coverage by prefetcher:",
      {k: round(v["coverage"], 3) for k, v in summary["simulation"].items()})
print("\nrun directory kept at:", run_dir)

"""Train a toy ADL-MVDR system next to a mask-based MVDR baseline.

Generates a small three-talker training set, trains both systems for a few
hundred steps on one core, then scores them on fresh scenes.  The numbers
are far below what a real corpus gives; the point is the full loop:
simulate, train, enhance, evaluate.

    python demos/03_train_toy_systems.py [steps]
"""
import sys
import tempfile
from pathlib import Path

from mvdrkit.metrics import evaluate_set, format_table
from mvdrkit.simulate import DatasetSpec, generate_dataset
from mvdrkit.system import SystemConfig
from mvdrkit.train import TrainConfig, enhance_manifest, load_model, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
work = Path(tempfile.mkdtemp(prefix="mvdrkit_demo_"))
scenes = dict(speaker_proportions={3: 1.0}, sir_range=(0.0, 10.0), decay_range=(0.02, 0.1))
train_set = generate_dataset(DatasetSpec(n_scenes=200, seed=1, **scenes), work / "train")
test_set = generate_dataset(DatasetSpec(n_scenes=20, seed=99, **scenes), work / "test")
print(f"data in {work}")

for variant in ("mvdr_crf", "adl_mvdr"):
    system = SystemConfig(variant=variant, dtype="float32", grunet_v_hidden=[64], grunet_nn_hidden=[64])
    cfg = TrainConfig(system=system, train_manifest=str(train_set), out_dir=str(work / variant),
                      max_steps=steps, batch_size=2, chunk_seconds=1.0, val_every=steps, val_limit=8)
    summary = train(cfg)
    print(f"{variant}: {steps} steps, instability counters {summary['instability']}")
    out = enhance_manifest(load_model(work / variant / "last.ckpt"), test_set, work / f"{variant}_out")
    print(format_table(evaluate_set(test_set, out, system=variant)))

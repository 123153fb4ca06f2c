"""Generate a small synthetic campaign and run every pipeline stage on it.

This mirrors `broomsat synth` followed by `broomsat pipeline`, at a size
that finishes in well under a minute. Outputs land in ./demo_run unless a
directory is given.

    python demos/03_synthetic_campaign.py [out_dir]
"""

import json
import sys
from pathlib import Path

from broomsat.pipeline import Pipeline, RunConfig, run_synth
from broomsat.synth import CampaignTruth, campaign_oracle

root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run").resolve()
root.mkdir(parents=True, exist_ok=True)
(root / "run.json").write_text(json.dumps({
    "paths.registry": "camp/fields.json",
    "paths.mlp_dir": "camp/mlp",
    "synth.n_pixels": 150,
    "synth.fields_per_class": 3,
    "lstm.lstm_units": [16, 8],
    "lstm.dense_units": 8,
    "train.epochs": 25,
    "importance.repeats": 3,
}, indent=1))
cfg = RunConfig.load(root / "run.json")

truth = run_synth(cfg, root / "camp")
for f in truth.fields:
    clear = sum(d["clear"] for d in f["design"])
    print(f"{f['field_id']}: {f['label']:8s} {f['planted_pixels']} crop pixels, "
          f"{clear}/{len(f['design'])} clear scenes")

for result in Pipeline(cfg, root / "out").run_all():
    print(f"{result.stage:10s} {'cached' if result.skipped else 'ran'}")

oracle = campaign_oracle(CampaignTruth.load(root / "camp" / "truth" / "truth.json"))
metrics = json.loads((root / "out" / "evaluate" / "metrics.json").read_text())
print(f"test accuracy {metrics['metrics']['accuracy']:.3f} vs oracle {oracle.accuracy:.3f}")
print("report files:", sorted(p.name for p in (root / "out" / "report").iterdir()))

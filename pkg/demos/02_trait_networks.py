"""Load trait networks from JSON and run them over a scene.

Uses the randomized specs shipped in demos/specs (format described in
docs/trait_spec_schema.md). Random weights give arbitrary but finite
values; out-of-range outputs stay unclipped and are flagged implausible.

    python demos/02_trait_networks.py
"""

import datetime as dt
from pathlib import Path

import numpy as np

from broomsat.scene_store import Scene, SceneMeta
from broomsat.traits import TraitKind, infer_trait, infer_traits_plane, load_mlp

here = Path(__file__).parent
specs = {t: load_mlp(here / "specs" / f"{t.name.lower()}.json") for t in TraitKind}
for t, s in specs.items():
    sizes = [w.shape[0] for w in s.hidden_weights]
    print(f"{t.name:7s} inputs={len(s.input_names)} hidden={sizes} range={s.valid_range}")

rng = np.random.default_rng(0)
meta = SceneMeta(acquisition_date=dt.date(2023, 6, 15), cloud_fraction=0.02, sun_zenith=28.0,
                 sun_azimuth=150.0, view_zenith=4.0, view_azimuth=102.0, width=6, height=4)
scene = Scene.from_reflectance(meta, rng.uniform(0.02, 0.5, size=(12, 4, 6)))

planes = infer_traits_plane(scene, specs)
for p in planes:
    print(f"{p.trait.name:7s} mean={np.nanmean(p.values):8.3f} "
          f"plausible={int(p.plausible.sum())}/{p.values.size}")

# single-pixel inference agrees with the plane
value, valid, plausible = infer_trait(specs[TraitKind.LAI], scene.planes[:, 1, 2], meta.geometry)
print("pixel (x=2, y=1) LAI", value, "matches plane:", np.isclose(value, planes[0].values[1, 2]))

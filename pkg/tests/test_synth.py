import datetime as dt

import numpy as np
import pytest
from scipy.stats import norm

from broomsat.errors import ConfigError
from broomsat.indices import IndexKind, index_values
from broomsat.masking import vegetation_mask
from broomsat.phenology import cumulative_gdd
from broomsat.scene_store import BAND_INDEX, load_fields, load_scene, load_scene_series
from broomsat.synth import (TARGETS, CampaignConfig, CampaignTruth, FieldSpec, SynthConfig,
                            _render_scene, bayes_oracle, campaign_oracle, gen_campaign, gen_dataset,
                            solve_b1, solve_b9, synthetic_trait_specs, trapezoid, wilson_interval)
from broomsat.traits import TraitKind, evaluate, infer_traits_plane
from broomsat.weather import read_weather_csv


def test_trapezoid_shape():
    u = np.array([0.0, 0.15, 0.3, 0.5, 0.7, 0.85, 1.0])
    assert np.allclose(trapezoid(u), [0, 0.5, 1, 1, 1, 0.5, 0])


def test_gen_dataset_structure_and_seed():
    cfg = SynthConfig(n_pixels=50, seed=4)
    a, truth = gen_dataset(cfg)
    b, _ = gen_dataset(cfg)
    assert a.inputs.shape == (100, 48, 37) and np.array_equal(a.inputs, b.inputs)
    assert truth.labels.sum() == 50 and truth.params["offsets"] == [1.0] * 4
    shift = cfg.mean_shift()
    cols = [cfg.feature_names.index(f) for f in cfg.informative]
    assert set(np.flatnonzero(shift.any(axis=0))) == set(cols)
    assert np.all(shift[~cfg.plateau_steps] == 0)


def test_gen_dataset_class_means():
    cfg = SynthConfig(n_pixels=4000, offset=1.0, seed=1)
    data, _ = gen_dataset(cfg)
    diff = data.inputs[data.labels == 0].mean(0) - data.inputs[data.labels == 1].mean(0)
    assert np.abs(diff - cfg.mean_shift()).max() < 0.12


def test_oracle_zero_offset_is_chance():
    est = bayes_oracle(SynthConfig(offset=0.0), n_samples=20000, seed=2)
    assert est.ci_low <= 0.5 <= est.ci_high
    assert est.closed_form == 0.5


def test_oracle_large_offset_single_feature():
    est = bayes_oracle(SynthConfig(informative=("CCC",), offset=5.0), n_samples=5000, seed=3)
    assert est.accuracy > 0.999


def test_oracle_closed_form_inside_ci():
    for off, feats in ((0.15, ("CCC",)), (0.3, ("NDMI", "CCC")), (0.1, ("FAPAR",))):
        cfg = SynthConfig(informative=feats, offset=off, noise_sd=2.0)
        est = bayes_oracle(cfg, n_samples=40000, seed=5)
        t = int(cfg.plateau_steps.sum())
        # single feature: Phi(delta * sqrt(T) / (2 sigma)) with delta = off * sigma
        want = norm.cdf(off * 2.0 * np.sqrt(t * len(feats)) / (2 * 2.0))
        assert est.closed_form == pytest.approx(want, rel=1e-12)
        assert est.ci_low <= want <= est.ci_high


def test_oracle_ci_scales_with_sqrt_n():
    cfg = SynthConfig(informative=("CCC",), offset=0.1)
    small = bayes_oracle(cfg, n_samples=2500, seed=1).ci_width
    large = bayes_oracle(cfg, n_samples=40000, seed=1).ci_width
    ratio = small / large
    assert 4 / 2 <= ratio <= 4 * 2


def test_wilson_interval_basics():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi and hi - 0.5 == pytest.approx(0.5 - lo)
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and 0 < hi < 0.5


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(noise_sd=0.0)
    with pytest.raises(ConfigError):
        SynthConfig(informative=("XYZ",))
    with pytest.raises(ConfigError):
        SynthConfig(offset=float("inf"))
    with pytest.raises(ConfigError):
        CampaignConfig(informative=("NDVI",))


def test_solvers_invert_trait_networks(rng):
    specs = synthetic_trait_specs()
    b8 = rng.uniform(0.25, 0.45, 200)
    ccc = rng.uniform(20, 560, 200)
    fapar = rng.uniform(0.05, 0.95, 200)
    b9 = solve_b9(b8, ccc)
    b1 = solve_b1(b8, fapar)
    ccc_spec, fapar_spec = specs[TraitKind.CCC], specs[TraitKind.FAPAR]
    cols = {"B8": b8, "B9": b9, "B1": b1}
    got_ccc = evaluate(ccc_spec, np.stack([cols[n] for n in ccc_spec.input_names], 1))
    got_fapar = evaluate(fapar_spec, np.stack([cols[n] for n in fapar_spec.input_names], 1))
    assert np.allclose(got_ccc, ccc, atol=1e-8) and np.allclose(got_fapar, fapar, atol=1e-10)


def test_rendered_targets_hit_exactly():
    """Replaying the generator's noise stream reproduces every informative index."""
    cfg = CampaignConfig(n_pixels=20, fields_per_class=1)
    planted = np.zeros((6, 7), bool)
    planted[1:5, 1:6] = True
    spec = FieldSpec("cle00", "clean", dt.date(2023, 5, 1), dt.date(2023, 8, 20), 37.0, -5.0, planted, 0, 0)
    level = np.where(planted, 0.9, 0.0)
    refl = _render_scene(spec, cfg, level, True, 0.02, np.random.default_rng(42))

    rng = np.random.default_rng(42)
    n = planted.size
    rng.normal(0.0, cfg.brightness_sd, n)
    rng.normal(size=(12, n))
    noise = {k: rng.normal(size=n) for k in TARGETS}
    veg = planted.ravel()
    lv = level.ravel()
    specs = synthetic_trait_specs()
    flat = refl.reshape(12, -1)
    got = {
        "NDMI": index_values(IndexKind.NDMI, flat)[0],
        "CHL_RED_EDGE": index_values(IndexKind.CHL_RED_EDGE, flat)[0],
        "CCC": evaluate(specs[TraitKind.CCC], np.stack(
            [flat[BAND_INDEX[b]] for b in specs[TraitKind.CCC].input_names], 1)),
        "FAPAR": evaluate(specs[TraitKind.FAPAR], np.stack(
            [flat[BAND_INDEX[b]] for b in specs[TraitKind.FAPAR].input_names], 1)),
    }
    for k, t in TARGETS.items():
        want = np.clip(t["base"] + t["slope"] * lv + np.where(veg, 1.0, 0.0) * t["sd"]
                       + noise[k] * t["sd"], t["lo"], t["hi"])
        assert np.allclose(got[k], want, rtol=0, atol=1e-7), k


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    out = tmp_path_factory.mktemp("camp")
    cfg = CampaignConfig(n_pixels=60, fields_per_class=2, seed=11)
    return out, gen_campaign(cfg, out)


def test_campaign_files_load(campaign):
    out, truth = campaign
    loaded = CampaignTruth.load(out / "truth" / "truth.json")
    assert loaded.registry == truth.registry
    fields = load_fields(out / "fields.json")
    assert [f.field_id for f in fields] == ["inf00", "inf01", "cle00", "cle01"]
    for f in fields:
        scenes = load_scene_series(f.scene_dir)
        assert len(scenes) >= 12
        assert sum(s.meta.cloud_fraction < 0.1 for s in scenes) >= 12
        w = read_weather_csv(f.weather_ref)
        g = cumulative_gdd(w, f.transplant_date, f.harvest_date)
        assert np.all(np.diff(g.cumulative) > 0)
    for trait in TraitKind:
        assert (out / "mlp" / f"{trait.name.lower()}.json").is_file()


def test_campaign_twins_share_design(campaign):
    """Paired fields differ only in pixel noise and the class offset."""
    out, truth = campaign
    by_id = {f["field_id"]: f for f in truth.fields}
    for i in range(2):
        a, b = by_id[f"inf{i:02d}"], by_id[f"cle{i:02d}"]
        assert a["design"] == b["design"]
        assert a["transplant_date"] == b["transplant_date"]
        wa = (out / "weather" / f"inf{i:02d}.csv").read_text()
        assert wa == (out / "weather" / f"cle{i:02d}.csv").read_text()
        sa = load_scene_series(out / "scenes" / f"inf{i:02d}")
        sb = load_scene_series(out / "scenes" / f"cle{i:02d}")
        assert [s.meta for s in sa] == [s.meta for s in sb]
        assert not np.array_equal(sa[-1].stored, sb[-1].stored)
    assert by_id["inf00"]["design"] != by_id["inf01"]["design"]


def test_campaign_masks_recover_planted_region(campaign):
    out, truth = campaign
    specs = synthetic_trait_specs()
    for f, info in zip(load_fields(out / "fields.json"), truth.fields):
        clear = [d for d in info["design"] if d["clear"]]
        peak = max(clear, key=lambda d: d["canopy_level"])
        scene = load_scene(f.scene_dir / peak["date"])
        m = vegetation_mask(infer_traits_plane(scene, specs))
        agree = np.mean(m.mask == truth.planted_mask(f.field_id))
        assert agree >= 0.99


def test_campaign_oracle(campaign):
    _, truth = campaign
    est = campaign_oracle(truth, n_samples=20000)
    assert 0.9 < est.accuracy <= 1.0
    assert abs(est.closed_form - est.accuracy) < 0.01
    again = campaign_oracle(truth, n_samples=20000)
    assert again == est


def test_campaign_zero_offset_oracle(tmp_path):
    truth = gen_campaign(CampaignConfig(n_pixels=10, fields_per_class=1, offset=0.0), tmp_path)
    est = campaign_oracle(truth, n_samples=20000)
    assert est.ci_low <= 0.5 <= est.ci_high

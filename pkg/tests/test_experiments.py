"""Tests for experiment configs, synthetic data, the preprocessing cache, runs and ablations."""

from __future__ import annotations

import json

import numpy as np
import pytest

from corads_grader.dataset.manifest import load_manifest
from corads_grader.errors import ConfigError, DataError
from corads_grader.experiments import (
    AblationAxis,
    AblationPoint,
    ExperimentConfig,
    PreprocessCache,
    ScanLoader,
    SyntheticSpec,
    ablation_grid,
    component_grid,
    config_diff,
    generate_dataset,
    load_ensemble,
    load_experiment,
    run_ablation,
    train_run,
)
from corads_grader.experiments.cache import preprocess_hash
from corads_grader.experiments.config import parse_override
from corads_grader.experiments.runs import (
    CHECKPOINT_FILE,
    CONFIG_FILE,
    HISTORY_FILE,
    load_split_records,
    mean_best_batch,
    member_dir,
    read_metadata,
    run_dir_for,
)
from corads_grader.experiments.synth import assign_grades, generate_phantom
from corads_grader.metrics import metrics
from corads_grader.models.config import Dimensionality, HeadType
from corads_grader.seeding import rng_for

EXPERIMENT_TOML = """
name = "desk"
ensemble_size = 3

[preprocess]
target_spacing_mm = 3.0
crop_hw = [32, 32]
n_slices = 16

[model]
width_scale = 0.125

[train]
learning_rate = 0.001

[paths]
manifest = "data/manifest.csv"
runs_dir = "out"
"""


class TestLoadExperiment:
    def test_reads_toml_and_resolves_paths(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(EXPERIMENT_TOML)
        config = load_experiment(path)
        assert config.name == "desk"
        assert config.ensemble_size == 3
        assert config.model.input_geometry == (16, 32, 32)
        assert config.train.learning_rate == 0.001
        assert config.paths.manifest == tmp_path / "data" / "manifest.csv"
        assert config.paths.runs_dir == tmp_path / "out"

    def test_overrides(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(EXPERIMENT_TOML)
        config = load_experiment(
            path, ["train.max_batches=7", "model.head=categorical", "model.dimensionality=2d"]
        )
        assert config.train.max_batches == 7
        assert config.model.head is HeadType.CATEGORICAL
        assert config.model.dimensionality is Dimensionality.D2

    def test_defaults_without_file(self):
        config = load_experiment(None, ["ensemble_size=2"])
        assert config.ensemble_size == 2
        assert config.model.input_geometry == (128, 240, 240)

    def test_parse_override(self):
        assert parse_override("a.b=3") == ("a.b", 3)
        assert parse_override("a = [1, 2]") == ("a", [1, 2])
        assert parse_override("x=true") == ("x", True)
        assert parse_override("name=full-3d") == ("name", "full-3d")
        with pytest.raises(ConfigError, match="key.path=value"):
            parse_override("novalue")

    def test_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_experiment(tmp_path / "missing.toml")
        broken = tmp_path / "broken.toml"
        broken.write_text("name = ")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_experiment(broken)
        with pytest.raises(ConfigError, match="invalid experiment config.*colour"):
            load_experiment(None, ["colour=blue"])
        with pytest.raises(ConfigError, match="input_geometry"):
            load_experiment(None, ["model.input_geometry=[16, 32, 32]"])
        with pytest.raises(ConfigError, match="not a table"):
            load_experiment(None, ["name=a", "name.first=x"])


class TestConfigHash:
    def test_ignores_name_and_runs_dir(self, experiment_config, tmp_path):
        renamed = experiment_config.with_updates({"name": "other", "paths.runs_dir": "/tmp/x"})
        assert renamed.config_hash() == experiment_config.config_hash()

    def test_changes_with_settings(self, experiment_config):
        changed = experiment_config.with_updates({"train.learning_rate": 0.01})
        assert changed.config_hash() != experiment_config.config_hash()

    def test_stable_across_round_trip(self, experiment_config):
        reparsed = ExperimentConfig.model_validate_json(experiment_config.model_dump_json())
        assert reparsed.config_hash() == experiment_config.config_hash()


class TestSynth:
    def test_reproducible(self, tmp_path, tiny_spec):
        spec = tiny_spec.model_copy(update={"n_scans": 3})
        a = generate_dataset(spec, tmp_path / "a")
        b = generate_dataset(spec, tmp_path / "b")
        for name in ("synth_0000.raw", "synth_0002.raw.lesion.raw"):
            assert (a.parent / "volumes" / name).read_bytes() == (
                b.parent / "volumes" / name
            ).read_bytes()
        records = load_manifest(a)
        assert [r.scan_id for r in records] == ["synth_0000", "synth_0001", "synth_0002"]

    def test_balanced_grades(self, tiny_spec):
        assert sorted(np.bincount(assign_grades(tiny_spec))[1:]) == [4] * 5

    def test_lesion_volume_grows_with_grade(self):
        spec = SyntheticSpec(n_scans=1, shape=(24, 48, 48), noise_hu=0.0)
        means = []
        for grade in range(1, 6):
            volumes = [
                generate_phantom(spec, grade, rng_for(0, "g", grade, i), "x")[2].voxels.sum()
                for i in range(8)
            ]
            means.append(np.mean(volumes))
        assert means[0] == 0
        assert all(b > a for a, b in zip(means, means[1:]))

    def test_rejects_non_increasing_lesion_counts(self):
        with pytest.raises(ValueError, match="increase strictly"):
            SyntheticSpec(lesions_per_grade=(0, 1, 1, 2, 3))


class TestCache:
    def test_miss_then_hit(self, synthetic_dataset, tiny_preprocess, tmp_path):
        records = load_manifest(synthetic_dataset[0])[:2]
        cache = PreprocessCache(tmp_path / "c", tiny_preprocess, mask_source="external_file")
        loader = ScanLoader(records, cache, with_lesion=True)

        first = [loader(r) for r in records]
        second = [loader(r) for r in records]
        assert metrics.count("cache_miss") == 2
        assert metrics.count("cache_hit") == 2
        assert metrics.hit_rate("cache") == 0.5
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.tensor, b.tensor)
            assert a.tensor.shape == (2, 16, 32, 32)
        expected = preprocess_hash(tiny_preprocess, "external_file")
        assert cache.path_for(records[0].scan_id).parent.name == expected

    def test_ct_only_entry_is_recomputed_for_lesion(self, synthetic_dataset, tiny_preprocess,
                                                     tmp_path):
        record = load_manifest(synthetic_dataset[0])[0]
        cache = PreprocessCache(tmp_path / "c", tiny_preprocess, mask_source="external_file")
        ScanLoader([record], cache, with_lesion=False)(record)
        item = ScanLoader([record], cache, with_lesion=True)(record)
        assert item.channels == 2
        assert metrics.count("cache_miss") == 2

    def test_disabled_cache_never_hits(self, synthetic_dataset, tiny_preprocess, tmp_path):
        record = load_manifest(synthetic_dataset[0])[0]
        cache = PreprocessCache(
            tmp_path / "c", tiny_preprocess, enabled=False, mask_source="external_file"
        )
        loader = ScanLoader([record], cache, with_lesion=True)
        loader(record)
        loader(record)
        assert metrics.count("cache_hit") == 0
        assert not cache.directory.exists()

    def test_mask_sources_do_not_share_entries(self, synthetic_dataset, tiny_preprocess,
                                               tmp_path):
        record = load_manifest(synthetic_dataset[0])[0]
        external = PreprocessCache(tmp_path / "c", tiny_preprocess, mask_source="external_file")
        auto = PreprocessCache(tmp_path / "c", tiny_preprocess, mask_source="auto")
        assert external.directory != auto.directory

        ScanLoader([record], external, with_lesion=True)(record)
        ScanLoader([record], auto, with_lesion=True)(record)
        assert metrics.count("cache_hit") == 0
        assert metrics.count("cache_miss") == 2
        assert external.path_for(record.scan_id).is_file()
        assert auto.path_for(record.scan_id).is_file()


class TestTrainRun:
    def test_writes_run_directory(self, experiment_config):
        run_dir = train_run(experiment_config, seed=5)
        assert run_dir == run_dir_for(experiment_config, 5)
        assert run_dir.name == f"{experiment_config.config_hash()[:12]}-s5"

        metadata = read_metadata(run_dir)
        assert metadata.config_hash == experiment_config.config_hash()
        assert metadata.member_seeds == [5, 6]
        assert [m.seed for m in metadata.members] == [5, 6]
        assert all(m.batches_run == 4 for m in metadata.members)
        assert "train_batch" in metadata.timings
        for index in range(2):
            directory = member_dir(run_dir, index)
            assert (directory / CHECKPOINT_FILE).is_file()
            assert (directory / HISTORY_FILE).is_file()
        stored = json.loads((run_dir / CONFIG_FILE).read_text())
        assert stored["name"] == "toy"
        assert mean_best_batch(run_dir) in (2.0, 3.0, 4.0)

    def test_resumes_unfinished_members(self, experiment_config):
        run_dir = train_run(experiment_config)
        (member_dir(run_dir, 1) / HISTORY_FILE).unlink()
        before = (member_dir(run_dir, 0) / CHECKPOINT_FILE).stat().st_mtime_ns

        metrics.reset()
        train_run(experiment_config)
        assert metrics.snapshot()["timers"]["train_batch"]["count"] == 4
        assert (member_dir(run_dir, 0) / CHECKPOINT_FILE).stat().st_mtime_ns == before
        assert (member_dir(run_dir, 1) / HISTORY_FILE).is_file()

    def test_rejects_directory_of_another_config(self, experiment_config):
        run_dir = train_run(experiment_config)
        stored = json.loads((run_dir / CONFIG_FILE).read_text())
        stored["train"]["learning_rate"] = 0.5
        (run_dir / CONFIG_FILE).write_text(json.dumps(stored))
        with pytest.raises(ConfigError, match="different config"):
            train_run(experiment_config)

    def test_load_ensemble_skips_missing_members(self, experiment_config):
        run_dir = train_run(experiment_config, seed=2)
        (member_dir(run_dir, 1) / CHECKPOINT_FILE).unlink()
        ensemble, config, missing = load_ensemble(run_dir)
        assert len(ensemble) == 1
        assert ensemble.seeds == [2]
        assert missing == [3]
        assert config.config_hash() == experiment_config.config_hash()

    def test_load_ensemble_without_members(self, experiment_config):
        run_dir = train_run(experiment_config)
        for index in range(2):
            (member_dir(run_dir, index) / CHECKPOINT_FILE).unlink()
        with pytest.raises(DataError, match="no trained members"):
            load_ensemble(run_dir)

    def test_rejects_negative_seed(self, experiment_config):
        with pytest.raises(ConfigError, match="seed must be >= 0"):
            train_run(experiment_config, seed=-1)
        with pytest.raises(ConfigError, match="split_seed"):
            experiment_config.with_updates({"split_seed": -1})

    def test_split_needs_manifest(self, experiment_config):
        config = experiment_config.with_updates({"paths.manifest": None})
        with pytest.raises(ConfigError, match="paths.manifest"):
            load_split_records(config)

    def test_fresh_split_without_split_file(self, experiment_config):
        config = experiment_config.with_updates({"paths.split_file": None})
        train_records, val_records = load_split_records(config)
        assert len(train_records) == 15
        assert len(val_records) == 5


class TestAblation:
    def test_grid_covers_all_combinations(self, experiment_config):
        points = ablation_grid(["lesion", "head"])
        assert [p.name(experiment_config) for p in points] == [
            "3d-no-pretrained",
            "3d-no-pretrained-categorical",
            "3d-no-pretrained-no-lesion",
            "3d-no-pretrained-no-lesion-categorical",
        ]
        with pytest.raises(ConfigError, match="repeat"):
            ablation_grid(["lesion", "lesion"])

    def test_named_grid(self, experiment_config):
        base = experiment_config.with_updates(
            {"pretrained_checkpoints": {"3d": "w3.safetensors", "2d": "w2.pth"}}
        )
        names = [p.name(base) for p in component_grid()]
        assert names == [
            "full-3d",
            "3d-no-pretrained",
            "3d-no-lesion",
            "3d-categorical",
            "full-2d",
        ]
        full_2d = component_grid()[-1].apply(base)
        assert full_2d.model.dimensionality is Dimensionality.D2
        assert full_2d.model.pretrained
        assert full_2d.model.checkpoint_path.name == "w2.pth"
        assert full_2d.name == "toy-full-2d"

    def test_point_changes_only_its_axes(self, experiment_config):
        point = AblationPoint({AblationAxis.LESION: False})
        config = point.apply(experiment_config)
        assert config_diff(experiment_config, config) == {"model.input_channels": [2, 1]}

    def test_pretrained_point_needs_checkpoint(self, experiment_config):
        with pytest.raises(ConfigError, match="no checkpoint"):
            AblationPoint({AblationAxis.PRETRAINED: True}).apply(experiment_config)

    def test_points_share_the_cache(self, experiment_config):
        base = experiment_config.with_updates({"ensemble_size": 1})
        result = run_ablation(base, ablation_grid(["lesion"]), seed=0)
        assert set(result.run_dirs) == {"3d-no-pretrained", "3d-no-pretrained-no-lesion"}
        assert result.cache_hit_rate is not None and result.cache_hit_rate > 0.4
        lesion_off = read_metadata(result.run_dirs["3d-no-pretrained-no-lesion"])
        assert lesion_off.ablation_diff == {"model.input_channels": [2, 1]}
        assert lesion_off.name == "toy-3d-no-pretrained-no-lesion"

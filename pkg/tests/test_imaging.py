"""Tests for volumes, readers and the preprocessing chain."""

from __future__ import annotations

import json

import numpy as np
import pytest

from corads_grader.errors import DataError, GeometryError, MaskError
from corads_grader.imaging.preprocess import (
    CropWindow,
    PreprocessConfig,
    apply_crop,
    clip_and_normalize,
    crop_to_lungs,
    lung_crop_window,
    preprocess_arrays,
    preprocess_scan,
    resample,
    resampled_shape,
    sample_indices,
    sample_slices,
    stack_channels,
)
from corads_grader.imaging.readers import (
    RawVolumeReader,
    ReaderRegistry,
    read_mask,
    read_volume,
    sidecar_mask_path,
    write_mask,
    write_volume,
)
from corads_grader.imaging.volume import BinaryMask, CtVolume, MaskKind, ModelInput
from tests.conftest import ellipsoid_phantom


def _single_lung(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Soft-tissue block with one ellipsoidal lung at a random in-plane position."""
    shape = (20, 80, 80)
    z, y, x = np.ogrid[: shape[0], : shape[1], : shape[2]]
    cy, cx = (int(c) for c in rng.integers(20, 60, size=2))
    ry, rx = (int(r) for r in rng.integers(6, 15, size=2))
    lung = ((z - 10) / 6) ** 2 + ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1
    hu = np.full(shape, 40.0, dtype=np.float32)
    hu[lung] = -850.0
    return hu, lung


class TestVolumeTypes:
    def test_rejects_2d_volume(self):
        with pytest.raises(GeometryError, match="non-empty 3D grid"):
            CtVolume(voxels=np.zeros((4, 4)), spacing_mm=(1, 1, 1), scan_id="a")

    @pytest.mark.parametrize("spacing", [(1, 1), (1, 0, 1), (1, -1, 1), (1, float("nan"), 1)])
    def test_rejects_bad_spacing(self, spacing):
        with pytest.raises(GeometryError, match="spacing"):
            CtVolume(voxels=np.zeros((2, 2, 2)), spacing_mm=spacing, scan_id="a")

    def test_extent(self):
        volume = CtVolume(voxels=np.zeros((10, 20, 30)), spacing_mm=(2.5, 1, 0.5), scan_id="a")
        assert volume.extent_mm == (25.0, 20.0, 15.0)

    def test_mask_is_binarized(self):
        mask = BinaryMask(voxels=np.array([[[0, 2], [5, 0]]]), spacing_mm=(1, 1, 1),
                          kind=MaskKind.LUNG)
        assert mask.voxels.dtype == np.uint8
        np.testing.assert_array_equal(mask.voxels, [[[0, 1], [1, 0]]])

    def test_misaligned_mask(self, phantom):
        volume, lung, _ = phantom
        shifted = BinaryMask(voxels=lung.voxels[1:], spacing_mm=lung.spacing_mm,
                             kind=MaskKind.LUNG)
        with pytest.raises(MaskError, match="does not match volume shape"):
            shifted.check_aligned(volume)
        respaced = BinaryMask(voxels=lung.voxels, spacing_mm=(1, 1, 1), kind=MaskKind.LUNG)
        with pytest.raises(MaskError, match="spacing"):
            respaced.check_aligned(volume)

    def test_model_input_shape(self):
        with pytest.raises(GeometryError, match="1 or 2"):
            ModelInput(tensor=np.zeros((3, 2, 2, 2), dtype=np.float32))
        assert ModelInput(tensor=np.zeros((2, 4, 5, 6), dtype=np.float32)).spatial_shape == (
            4, 5, 6,
        )


class TestReaders:
    def test_raw_volume_round_trip(self, tmp_path, phantom):
        volume, lung, _ = phantom
        path = tmp_path / "scan.raw"
        write_volume(volume, path)
        write_mask(lung, sidecar_mask_path(path, MaskKind.LUNG))

        loaded = read_volume(path, "scan")
        np.testing.assert_array_equal(loaded.voxels, volume.voxels)
        assert loaded.spacing_mm == volume.spacing_mm
        mask = read_mask(tmp_path / "scan.raw.lung.raw", MaskKind.LUNG)
        np.testing.assert_array_equal(mask.voxels, lung.voxels)

    def test_missing_header(self, tmp_path):
        (tmp_path / "a.raw").write_bytes(b"\x00" * 8)
        with pytest.raises(DataError, match="header missing"):
            read_volume(tmp_path / "a.raw")

    def test_size_mismatch(self, tmp_path):
        (tmp_path / "a.raw").write_bytes(np.zeros(7, dtype="<f4").tobytes())
        (tmp_path / "a.raw.json").write_text(
            json.dumps({"shape": [2, 2, 2], "spacing_mm": [1, 1, 1]})
        )
        with pytest.raises(DataError, match="7 values on disk"):
            read_volume(tmp_path / "a.raw")

    def test_unknown_suffix(self, tmp_path):
        with pytest.raises(DataError, match="no volume reader"):
            read_volume(tmp_path / "scan.dcm")

    def test_duplicate_suffix(self):
        registry = ReaderRegistry()
        registry.register(RawVolumeReader())
        with pytest.raises(ValueError, match="already has a reader"):
            registry.register(RawVolumeReader())

    def test_sidecar_naming_keeps_double_suffix(self, tmp_path):
        assert sidecar_mask_path(tmp_path / "a.nii.gz", MaskKind.LESION).name == (
            "a.nii.gz.lesion.nii.gz"
        )


class TestPreprocessSteps:
    def test_clip_and_normalize(self):
        config = PreprocessConfig()
        volume = CtVolume(
            voxels=np.array([[[-2000.0, -1100.0, -400.0, 300.0, 3000.0]]]),
            spacing_mm=(1, 1, 1),
            scan_id="a",
        )
        out = clip_and_normalize(volume, config).voxels.ravel()
        np.testing.assert_allclose(out, [0.0, 0.0, 0.5, 1.0, 1.0], atol=1e-6)

    def test_resampled_shape_rounds_half_up(self):
        assert resampled_shape((10, 10, 3), (2.5, 1.0, 1.0), (1.5, 1.5, 2.0)) == (17, 7, 2)
        assert resampled_shape((1, 1, 1), (0.1, 0.1, 0.1), (1.5, 1.5, 1.5)) == (1, 1, 1)

    def test_resampled_mask_stays_binary(self, phantom):
        _, lung, _ = phantom
        out = resample(lung, 1.0)
        assert set(np.unique(out.voxels)) <= {0, 1}
        assert out.spacing_mm == (1.0, 1.0, 1.0)

    def test_slice_discard_matches_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            depth = int(rng.integers(5, 40))
            spacing_z = float(rng.uniform(0.5, 6.0))
            voxels = np.zeros((depth, 8, 8), dtype=np.uint8)
            lung_slices = rng.choice(depth, size=int(rng.integers(1, 4)), replace=False)
            voxels[lung_slices, 3:5, 3:5] = 1
            mask = BinaryMask(voxels=voxels, spacing_mm=(spacing_z, 1, 1), kind=MaskKind.LUNG)
            config = PreprocessConfig(crop_hw=(8, 8))

            kept = lung_crop_window(mask, config).kept_slices
            expected = [
                z for z in range(depth)
                if any(abs(z - m) * spacing_z < config.margin_mm for m in lung_slices)
            ]
            assert kept.tolist() == expected

    def test_bbox_centre_rounds_half_up(self):
        voxels = np.zeros((3, 40, 40), dtype=np.uint8)
        voxels[1, 10:14, 20:25] = 1  # y centre 11.5, x centre 22
        mask = BinaryMask(voxels=voxels, spacing_mm=(1, 1, 1), kind=MaskKind.LUNG)
        window = lung_crop_window(mask, PreprocessConfig(crop_hw=(8, 10)))
        assert (window.y0, window.x0) == (12 - 4, 22 - 5)

    def test_empty_lung_mask(self):
        mask = BinaryMask(voxels=np.zeros((3, 4, 4)), spacing_mm=(1, 1, 1), kind=MaskKind.LUNG)
        with pytest.raises(MaskError, match="lung mask is empty"):
            lung_crop_window(mask, PreprocessConfig(), "scan7")

    def test_apply_crop_pads_outside(self):
        array = np.arange(2 * 4 * 4, dtype=np.float32).reshape(2, 4, 4) + 1
        window = CropWindow(kept_slices=np.array([1]), y0=-1, x0=2, crop_hw=(3, 3))
        out = apply_crop(array, window)
        assert out.shape == (1, 3, 3)
        np.testing.assert_array_equal(out[0, 0], [0, 0, 0])
        np.testing.assert_array_equal(out[0, 1:, :2], array[1, 0:2, 2:4])
        np.testing.assert_array_equal(out[0, :, 2], [0, 0, 0])

    @pytest.mark.parametrize(
        "available,n,expected",
        [(5, 3, [0, 2, 4]), (2, 4, [0, 0, 1, 1]), (1, 3, [0, 0, 0]), (4, 4, [0, 1, 2, 3])],
    )
    def test_sample_indices(self, available, n, expected):
        assert sample_indices(available, n).tolist() == expected

    def test_crop_to_lungs(self):
        rng = np.random.default_rng(12)
        voxels = rng.random((12, 40, 40)).astype(np.float32)
        lung = np.zeros((12, 40, 40), dtype=np.uint8)
        lung[4:7, 10:21, 0:11] = 1  # bbox centre (15, 5)
        volume = CtVolume(voxels=voxels, spacing_mm=(4.0, 1.0, 1.0), scan_id="c")
        mask = BinaryMask(voxels=lung, spacing_mm=(4.0, 1.0, 1.0), kind=MaskKind.LUNG)
        config = PreprocessConfig(crop_hw=(16, 20))

        out = crop_to_lungs(volume, mask, config)
        assert out.shape == (7, 16, 20)  # slices 2..8 lie within 10 mm of 4..6
        assert out.spacing_mm == volume.spacing_mm
        np.testing.assert_array_equal(out.voxels[:, :, :5], 0.0)  # x0 = -5 pads with air
        np.testing.assert_array_equal(out.voxels[:, :, 5:], voxels[2:9, 7:23, 0:15])
        short = BinaryMask(voxels=lung[:, :-1], spacing_mm=(4.0, 1.0, 1.0), kind=MaskKind.LUNG)
        with pytest.raises(MaskError):
            crop_to_lungs(volume, short, config)

    def test_sample_slices(self):
        voxels = np.arange(10, dtype=np.float32)[:, None, None] * np.ones((10, 3, 3))
        volume = CtVolume(voxels=voxels, spacing_mm=(2.0, 1.0, 1.0), scan_id="s")
        fewer = sample_slices(volume, 4)
        assert fewer.voxels[:, 0, 0].tolist() == [0, 3, 6, 9]
        assert fewer.spacing_mm == (5.0, 1.0, 1.0)
        more = sample_slices(volume, 13)
        assert more.shape == (13, 3, 3)
        assert np.all(np.diff(more.voxels[:, 0, 0]) >= 0)
        assert set(more.voxels[:, 0, 0].tolist()) == set(range(10))

    def test_stack_channels_rejects_non_binary_lesion(self):
        ct = np.zeros((2, 3, 3), dtype=np.float32)
        with pytest.raises(MaskError, match="binary"):
            stack_channels(ct, np.full((2, 3, 3), 0.5), "a")
        with pytest.raises(GeometryError, match="does not match"):
            stack_channels(ct, np.zeros((2, 3, 4)), "a")


class TestPreprocessScan:
    @pytest.mark.parametrize(
        "shape,spacing",
        [
            ((40, 64, 64), (2.5, 1.5, 1.5)),
            ((30, 50, 70), (5.0, 0.8, 0.8)),
            ((90, 48, 48), (1.0, 2.0, 2.0)),
            ((12, 100, 80), (8.0, 1.2, 1.0)),
            ((64, 40, 40), (0.7, 3.0, 3.0)),
        ],
    )
    def test_reference_output_contract(self, shape, spacing):
        volume, lung, lesion = ellipsoid_phantom(shape=shape, spacing=spacing)
        model_input = preprocess_scan(volume, lung, lesion)
        assert model_input.tensor.shape == (2, 128, 240, 240)
        assert model_input.tensor.min() >= 0.0
        assert model_input.tensor.max() <= 1.0
        assert set(np.unique(model_input.tensor[1])) <= {0.0, 1.0}

    def test_random_geometries_meet_output_contract(self, tiny_preprocess):
        rng = np.random.default_rng(13)
        for _ in range(50):
            in_plane = float(rng.uniform(1.0, 2.5))
            spacing = (float(rng.uniform(0.8, 6.0)), in_plane, in_plane)
            extent = (rng.uniform(50, 150), rng.uniform(70, 140), rng.uniform(70, 140))
            shape = tuple(max(8, int(e / s)) for e, s in zip(extent, spacing))
            volume, lung, lesion = ellipsoid_phantom(shape=shape, spacing=spacing)
            model_input = preprocess_scan(volume, lung, lesion, tiny_preprocess)
            assert model_input.tensor.shape == (2, *tiny_preprocess.output_shape)
            assert model_input.tensor.min() >= 0.0
            assert model_input.tensor.max() <= 1.0
            assert set(np.unique(model_input.tensor[1])) <= {0.0, 1.0}

    @pytest.mark.parametrize("center_mode", ["bbox", "centroid"])
    def test_lung_ends_up_centred(self, center_mode):
        rng = np.random.default_rng(14)
        for _ in range(10):
            spacing = float(rng.uniform(0.8, 2.0))
            hu, lung = _single_lung(rng)
            volume = CtVolume(voxels=hu, spacing_mm=(spacing,) * 3, scan_id="e")
            config = PreprocessConfig(target_spacing_mm=spacing, crop_hw=(32, 32), n_slices=16,
                                      center_mode=center_mode)
            # the lung doubles as the lesion map to see where it lands
            scan = preprocess_arrays(
                volume,
                BinaryMask(voxels=lung, spacing_mm=volume.spacing_mm, kind=MaskKind.LUNG),
                BinaryMask(voxels=lung, spacing_mm=volume.spacing_mm, kind=MaskKind.LESION),
                config,
            )
            _, ys, xs = np.nonzero(scan.lesion)
            assert abs(ys.mean() - 16) <= 1
            assert abs(xs.mean() - 16) <= 1

    def test_ct_and_mask_stay_aligned(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            spacing = float(rng.uniform(0.8, 2.0))
            hu, lung = _single_lung(rng)
            zs, ys, xs = np.nonzero(lung)
            pick = int(rng.integers(len(zs)))
            marker = np.zeros_like(lung)
            marker[zs[pick], ys[pick], xs[pick]] = True
            hu[marker] = 300.0  # normalizes to exactly 1.0
            volume = CtVolume(voxels=hu, spacing_mm=(spacing,) * 3, scan_id="m")
            config = PreprocessConfig(target_spacing_mm=spacing, crop_hw=(32, 32), n_slices=24)
            scan = preprocess_arrays(
                volume,
                BinaryMask(voxels=lung, spacing_mm=volume.spacing_mm, kind=MaskKind.LUNG),
                BinaryMask(voxels=marker, spacing_mm=volume.spacing_mm, kind=MaskKind.LESION),
                config,
            )
            assert scan.lesion.sum() >= 1
            np.testing.assert_array_equal(np.argwhere(scan.ct == 1.0), np.argwhere(scan.lesion))

    def test_single_channel_without_lesion(self, phantom, tiny_preprocess):
        volume, lung, _ = phantom
        model_input = preprocess_scan(volume, lung, None, tiny_preprocess)
        assert model_input.tensor.shape == (1, 16, 32, 32)
        assert model_input.geometry_hash == tiny_preprocess.config_hash()

    def test_lesion_survives_preprocessing(self, phantom, tiny_preprocess):
        volume, lung, lesion = phantom
        scan = preprocess_arrays(volume, lung, lesion, tiny_preprocess)
        assert scan.lesion is not None and scan.lesion.sum() > 0

    def test_deterministic(self, phantom, tiny_preprocess):
        a = preprocess_scan(*phantom, config=tiny_preprocess)
        b = preprocess_scan(*phantom, config=tiny_preprocess)
        np.testing.assert_array_equal(a.tensor, b.tensor)

    def test_misaligned_lesion(self, phantom, tiny_preprocess):
        volume, lung, lesion = phantom
        bad = BinaryMask(voxels=lesion.voxels[:, :-1], spacing_mm=lesion.spacing_mm,
                         kind=MaskKind.LESION)
        with pytest.raises(MaskError):
            preprocess_scan(volume, lung, bad, tiny_preprocess)

    def test_lesion_channel_requested_without_map(self, phantom, tiny_preprocess):
        volume, lung, _ = phantom
        scan = preprocess_arrays(volume, lung, None, tiny_preprocess)
        with pytest.raises(MaskError, match="no lesion map"):
            scan.to_model_input(with_lesion=True)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="clip_lo"):
            PreprocessConfig(clip_lo=300, clip_hi=-1100)

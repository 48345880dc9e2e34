import numpy as np
import pytest

from roweeder.config import PipelineConfig
from roweeder.dataset import SyntheticFieldSpec, Tile, generate_synthetic_field
from roweeder.errors import ConfigError, OutOfBounds
from roweeder.plants import InstanceSource, PlantInstance
from roweeder.pseudolabel import build_pseudo_gt, classify_instances, run_tile_pipeline
from roweeder.raster import CROP, WEED, BinaryMask, Raster


def make_instance(inst_id, coords):
    return PlantInstance(inst_id, np.array(coords), InstanceSource.CONNECTED_COMPONENT)


def tile_from_field(field_map, index=0):
    return Tile(
        map_id=field_map.map_id,
        index=index,
        channels=field_map.channels,
        gt=field_map.gt,
        alignment_angle=field_map.alignment_angle,
    )


class TestClassifyInstances:
    def test_single_pixel_overlap_makes_crop(self):
        rows = np.zeros((16, 16), dtype=bool)
        rows[8, :] = True
        inst = make_instance(1, [(5, 3), (6, 3), (7, 3), (8, 3)])  # touches row once
        result = classify_instances([inst], BinaryMask(rows))
        assert result.n_crop_instances == 1
        assert np.all(result.mask.labels[[5, 6, 7, 8], 3] == CROP)

    def test_zero_overlap_makes_weed(self):
        rows = np.zeros((16, 16), dtype=bool)
        rows[8, :] = True
        inst = make_instance(1, [(1, 1), (2, 1)])
        result = classify_instances([inst], BinaryMask(rows))
        assert result.n_weed_instances == 1
        assert np.all(result.mask.labels[[1, 2], 1] == WEED)

    def test_empty_row_mask_makes_everything_weed(self):
        rows = BinaryMask(np.zeros((16, 16), dtype=bool))
        instances = [make_instance(i + 1, [(i, j) for j in range(3)]) for i in range(5)]
        result = classify_instances(instances, rows, rows_retained=False)
        assert result.n_crop_instances == 0
        assert result.n_weed_instances == 5
        assert not result.rows_retained

    def test_label_homogeneity_and_coverage(self, rng):
        rows = BinaryMask(rng.random((32, 32)) < 0.1)
        veg = rng.random((32, 32)) < 0.2
        from roweeder.plants import connected_components

        instances = connected_components(BinaryMask(veg))
        result = classify_instances(instances, rows)
        labels = result.mask.labels
        for inst in instances:
            vals = labels[inst.pixels[:, 0], inst.pixels[:, 1]]
            assert len(np.unique(vals)) == 1  # homogeneity
            touches = rows.bits[inst.pixels[:, 0], inst.pixels[:, 1]].any()
            assert (vals[0] == CROP) == touches  # crop witness
        assert np.array_equal(labels > 0, veg)  # coverage

    def test_monotone_in_row_mask(self, rng):
        veg = rng.random((24, 24)) < 0.25
        from roweeder.plants import connected_components

        instances = connected_components(BinaryMask(veg))
        small = rng.random((24, 24)) < 0.05
        large = small | (rng.random((24, 24)) < 0.1)
        res_small = classify_instances(instances, BinaryMask(small))
        res_large = classify_instances(instances, BinaryMask(large))
        crops_small = res_small.mask.labels == CROP
        crops_large = res_large.mask.labels == CROP
        assert not np.any(crops_small & ~crops_large)

    def test_out_of_bounds(self):
        inst = make_instance(1, [(20, 20)])
        with pytest.raises(OutOfBounds):
            classify_instances([inst], BinaryMask(np.zeros((8, 8), dtype=bool)))

    def test_instance_counts_sum(self, rng):
        veg = rng.random((24, 24)) < 0.3
        from roweeder.plants import connected_components

        instances = connected_components(BinaryMask(veg))
        result = classify_instances(instances, BinaryMask(rng.random((24, 24)) < 0.1))
        assert result.n_crop_instances + result.n_weed_instances == len(instances)


class TestBuildPseudoGt:
    def test_all_soil_tile(self):
        spec = SyntheticFieldSpec(dims=(64, 64), n_rows=0, rng_seed=1)
        field = generate_synthetic_field(spec)
        cfg = PipelineConfig()
        result = build_pseudo_gt(tile_from_field(field.field_map), cfg)
        assert result.mask.labels.max() == 0
        assert result.n_crop_instances == 0 and result.n_weed_instances == 0
        assert not result.rows_retained

    def test_rows_without_weeds_all_crop(self):
        spec = SyntheticFieldSpec(dims=(256, 256), n_rows=6, row_angle=0.0,
                                  row_spacing=36.0, rng_seed=2)
        field = generate_synthetic_field(spec)
        cfg = PipelineConfig()
        cfg.hough.threshold = 60
        result = build_pseudo_gt(tile_from_field(field.field_map), cfg)
        veg = field.field_map.gt.labels > 0
        assert result.rows_retained
        assert np.all(result.mask.labels[veg] == CROP)
        assert result.n_weed_instances == 0

    def test_synthetic_field_agreement(self):
        spec = SyntheticFieldSpec(dims=(256, 256), n_rows=6, row_angle=20.0,
                                  row_spacing=36.0, n_inter_row_weeds=20, rng_seed=3)
        field = generate_synthetic_field(spec)
        cfg = PipelineConfig()
        cfg.hough.threshold = 60
        result = build_pseudo_gt(tile_from_field(field.field_map), cfg)
        agree = (result.mask.labels == field.field_map.gt.labels).mean()
        assert agree >= 0.99

    def test_all_weed_tile_discarded(self):
        spec = SyntheticFieldSpec(dims=(256, 256), n_rows=0, n_inter_row_weeds=15,
                                  rng_seed=0, weed_shape="streak",
                                  streak_length=60.0, streak_width=1.0)
        field = generate_synthetic_field(spec)
        cfg = PipelineConfig()
        cfg.hough.threshold = 50
        result = build_pseudo_gt(tile_from_field(field.field_map), cfg)
        assert not result.rows_retained
        assert result.n_crop_instances == 0
        assert result.n_weed_instances > 0

    def test_missing_nir_is_config_error(self):
        spec = SyntheticFieldSpec(dims=(64, 64), n_rows=2, row_spacing=16, rng_seed=4)
        field = generate_synthetic_field(spec)
        channels = {k: v for k, v in field.field_map.channels.items() if k != "nir"}
        tile = Tile("000", 0, channels, None, 0.0)
        with pytest.raises(ConfigError):
            build_pseudo_gt(tile, PipelineConfig())

    def test_exg_fallback_runs_without_nir(self):
        spec = SyntheticFieldSpec(dims=(128, 128), n_rows=3, row_spacing=30, rng_seed=5)
        field = generate_synthetic_field(spec)
        channels = {k: v for k, v in field.field_map.channels.items() if k != "nir"}
        tile = Tile("000", 0, channels, None, 0.0)
        cfg = PipelineConfig()
        cfg.vegetation.index = "exg"
        cfg.vegetation.threshold = 0.2
        cfg.hough.threshold = 40
        result = build_pseudo_gt(tile, cfg)
        assert result.n_crop_instances + result.n_weed_instances > 0

    def test_slic_instance_source(self):
        spec = SyntheticFieldSpec(dims=(128, 128), n_rows=3, row_spacing=30, rng_seed=6)
        field = generate_synthetic_field(spec)
        cfg = PipelineConfig()
        cfg.instances.source = "slic"
        cfg.hough.threshold = 40
        outcome = run_tile_pipeline(tile_from_field(field.field_map), cfg)
        veg = outcome.vegetation.bits
        assert np.array_equal(outcome.result.mask.labels > 0, veg)

    def test_crop_witness_on_pipeline_output(self):
        spec = SyntheticFieldSpec(dims=(256, 256), n_rows=6, row_angle=45.0,
                                  row_spacing=36.0, n_inter_row_weeds=25, rng_seed=7)
        field = generate_synthetic_field(spec)
        cfg = PipelineConfig()
        cfg.hough.threshold = 60
        outcome = run_tile_pipeline(tile_from_field(field.field_map), cfg)
        labels = outcome.result.mask.labels
        rows = outcome.row_mask.bits
        from roweeder.plants import connected_components

        for inst in connected_components(outcome.vegetation):
            vals = labels[inst.pixels[:, 0], inst.pixels[:, 1]]
            touches = rows[inst.pixels[:, 0], inst.pixels[:, 1]].any()
            assert (vals[0] == CROP) == touches

import numpy as np
import pytest
from scipy.stats import norm

from profweight.data import (Dataset, HardRegionGenerator, SplitPlan, load_csv, save_csv, split,
                             split_indices, split_sizes, synth_hard_regions)
from profweight.errors import DataError, InvalidArgumentError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestCsv:
    def test_well_formed(self, tmp_path):
        ds, rep = load_csv(write(tmp_path, "a,b,label\n1,2,0\n3,4,1\n5,6,0\n"))
        assert ds.m == 3 and ds.d == 2
        assert ds.feature_names == ("a", "b")
        assert rep.rows_read == 3 and rep.rejected_rows == ()
        np.testing.assert_array_equal(ds.labels, [0, 1, 0])

    def test_nan_row_rejected(self, tmp_path):
        ds, rep = load_csv(write(tmp_path, "a,b,label\n1,2,0\nnan,4,1\n5,,0\n7,8,1\n"))
        assert ds.m == 2
        assert rep.rejected_rows == (1, 2)

    def test_string_labels_name_first_bad_row(self, tmp_path):
        with pytest.raises(DataError, match="row 1"):
            load_csv(write(tmp_path, "a,label\n1,0\n2,cat\n3,dog\n"))

    def test_unparseable_feature(self, tmp_path):
        with pytest.raises(DataError, match="row 0, column 1"):
            load_csv(write(tmp_path, "a,b,label\n1,x,0\n"))

    def test_named_label_column_and_headerless(self, tmp_path):
        ds, _ = load_csv(write(tmp_path, "label,a\n1,0.5\n0,0.25\n"), label_column="label")
        np.testing.assert_array_equal(ds.labels, [1, 0])
        ds, _ = load_csv(write(tmp_path, "0.5,1\n0.25,0\n", "h.csv"), header=False)
        assert ds.feature_names is None and ds.m == 2

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write(tmp_path, ""))

    def test_round_trip_is_exact(self, tmp_path):
        data = synth_hard_regions(50, 0.2, seed=4)
        save_csv(data, tmp_path / "r.csv")
        back, _ = load_csv(tmp_path / "r.csv")
        assert back.features.tobytes() == data.features.tobytes()
        np.testing.assert_array_equal(back.labels, data.labels)


class TestDataset:
    def test_read_only(self):
        ds = Dataset([[1.0], [2.0]], [0, 1])
        with pytest.raises(ValueError):
            ds.features[0, 0] = 5.0

    def test_label_range(self):
        with pytest.raises(DataError):
            Dataset([[1.0], [2.0]], [0, 2], num_classes=2)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            Dataset([[1.0], [2.0]], [0])


class TestSplit:
    def test_sizes_example(self):
        assert split_sizes(100, (0.6, 0.2, 0.02, 0.18)) == [60, 20, 2, 18]

    def test_largest_remainder(self):
        sizes = split_sizes(7, (0.45, 0.30, 0.05, 0.20))
        assert sum(sizes) == 7

    def test_random_plan_partitions(self):
        parts = split_indices(100, SplitPlan((0.6, 0.2, 0.02, 0.18), "random", 1))
        assert [len(p) for p in parts] == [60, 20, 2, 18]
        assert sorted(np.concatenate(parts).tolist()) == list(range(100))

    def test_same_seed_same_partition(self):
        a = split_indices(100, SplitPlan(seed=1))
        b = split_indices(100, SplitPlan(seed=1))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_sequential_keeps_order(self):
        parts = split_indices(20, SplitPlan(mode="sequential"))
        np.testing.assert_array_equal(np.concatenate(parts), np.arange(20))

    @pytest.mark.parametrize("fr", [(0.5, 0.5, 0.0, 0.0), (0.5, 0.3, 0.1, 0.2), (0.5, 0.5)])
    def test_bad_fractions(self, fr):
        with pytest.raises(InvalidArgumentError):
            SplitPlan(fr)

    def test_empty_part_rejected(self):
        with pytest.raises(InvalidArgumentError):
            split_indices(5, SplitPlan())

    def test_split_tags(self):
        parts = split(synth_hard_regions(40, 0.0, seed=0), SplitPlan())
        assert [p.provenance.rsplit("/", 1)[1] for p in parts] == ["D_N", "D_S", "validation", "holdout"]


class TestGenerator:
    def test_bayes_error_matches_grid_integration(self):
        gen = HardRegionGenerator()
        # integrate min(f0, f1)/2 over a 400 x 400 grid covering +-8 sigma
        axis = np.linspace(-8, 8, 400)
        h = axis[1] - axis[0]
        xx, yy = np.meshgrid(axis, axis)
        dens = gen.class_densities(np.column_stack([xx.ravel(), yy.ravel()]))
        bayes = 0.5 * np.minimum(dens[:, 0], dens[:, 1]).sum() * h * h
        assert abs(bayes - gen.bayes_error_without_noise()) < 0.02
        assert gen.bayes_error_without_noise() == pytest.approx(norm.cdf(-1.8))

    def test_flip_rate_in_hard_region(self):
        clean = synth_hard_regions(20000, 0.0, seed=9)
        noisy = synth_hard_regions(20000, 0.4, seed=9)
        assert clean.features.tobytes() == noisy.features.tobytes()
        flipped = clean.labels != noisy.labels
        assert not flipped[~noisy.hard].any()
        assert abs(flipped[noisy.hard].mean() - 0.4) < 0.05

    def test_balanced_and_deterministic(self):
        a = synth_hard_regions(501, 0.0, seed=2)
        b = synth_hard_regions(501, 0.0, seed=2)
        assert a.features.tobytes() == b.features.tobytes()
        assert abs(int(a.labels.sum()) - 250) <= 1

    def test_hard_regions_are_populated(self):
        data = synth_hard_regions(4000, 0.35, seed=0)
        assert 0.05 < data.hard.mean() < 0.5

    def test_hard_regions_stay_off_the_bayes_boundary(self):
        gen = HardRegionGenerator()
        normal = (gen.means[1] - gen.means[0]) / np.linalg.norm(gen.means[1] - gen.means[0])
        for c, mu in zip(gen.region_centers, gen.means):
            assert np.linalg.norm(c - mu) == pytest.approx(gen.lift)
            assert abs(c @ normal) - gen.radius > 0

    @pytest.mark.parametrize("noise", [-0.1, 0.5])
    def test_noise_range(self, noise):
        with pytest.raises(InvalidArgumentError):
            synth_hard_regions(10, noise, seed=0)

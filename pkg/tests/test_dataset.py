"""Observation-set construction, I/O, windowing, masking, and splits."""

import numpy as np
import pytest

from flexpca import (
    ObservationSet,
    apply_missing_mechanism,
    compact,
    load_coordinate_csv,
    load_dense_csv,
    random_split,
    window_minus_window,
    write_coordinate_csv,
)
from flexpca.errors import CoverageError, DataError


def small_set():
    x = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    return ObservationSet.from_dense(x), x


class TestConstruction:
    def test_from_dense_roundtrip(self):
        s, x = small_set()
        assert s.n_obs == 6
        assert np.array_equal(s.to_dense(), x)

    def test_nan_cells_are_unobserved(self):
        x = np.array([[1.0, np.nan], [np.nan, 4.0]])
        s = ObservationSet.from_dense(x)
        assert s.n_obs == 2
        dense = s.to_dense()
        assert np.isnan(dense[0, 1]) and np.isnan(dense[1, 0])
        assert dense[0, 0] == 1.0 and dense[1, 1] == 4.0

    def test_duplicate_cell_rejected(self):
        with pytest.raises(DataError):
            ObservationSet(2, 2, [0, 0], [1, 1], [1.0, 2.0])

    def test_out_of_range_rejected(self):
        with pytest.raises(DataError):
            ObservationSet(2, 2, [0, 2], [0, 0], [1.0, 2.0])
        with pytest.raises(DataError):
            ObservationSet(2, 2, [0, -1], [0, 0], [1.0, 2.0])

    def test_empty_needs_opt_in(self):
        with pytest.raises(DataError):
            ObservationSet(2, 2, [], [], [])
        s = ObservationSet(2, 2, [], [], [], allow_empty=True)
        assert s.n_obs == 0

    def test_coverage_counts(self):
        s = ObservationSet(3, 2, [0, 0, 2], [0, 1, 1], [1.0, 2.0, 3.0])
        assert s.cover_rows().tolist() == [2, 0, 1]
        assert s.cover_cols().tolist() == [1, 2]

    def test_equality_ignores_cell_order(self):
        a = ObservationSet(2, 2, [0, 1], [0, 1], [1.0, 2.0])
        b = ObservationSet(2, 2, [1, 0], [1, 0], [2.0, 1.0])
        assert a == b


class TestCsvRoundtrips:
    def test_coordinate_roundtrip(self, tmp_path):
        s, _ = small_set()
        path = tmp_path / "cells.csv"
        write_coordinate_csv(s, path)
        back = load_coordinate_csv(path)
        assert back == s

    def test_coordinate_explicit_shape(self, tmp_path):
        s, _ = small_set()
        path = tmp_path / "cells.csv"
        write_coordinate_csv(s, path)
        back = load_coordinate_csv(path, n_rows=10, n_cols=7)
        assert (back.n_rows, back.n_cols) == (10, 7)
        assert np.array_equal(np.sort(back.values), np.arange(1.0, 7.0))

    def test_dense_with_na_tokens(self, tmp_path):
        path = tmp_path / "dense.csv"
        path.write_text("1.5,NA,3\nNA,2.5,NA\n")
        s = load_dense_csv(path)
        assert (s.n_rows, s.n_cols, s.n_obs) == (2, 3, 3)
        dense = s.to_dense()
        assert dense[0, 0] == 1.5 and dense[1, 1] == 2.5 and dense[0, 2] == 3.0

    def test_dense_custom_token(self, tmp_path):
        path = tmp_path / "dense.csv"
        path.write_text("1,.,2\n.,3,.\n")
        s = load_dense_csv(path, na_token=".")
        assert s.n_obs == 3

    def test_malformed_rows_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n4,5\n")
        with pytest.raises(DataError):
            load_dense_csv(path)


class TestWindowMinusWindow:
    def test_frame_membership(self):
        x = np.arange(20, dtype=float).reshape(4, 5)
        full = ObservationSet.from_dense(x)
        region = window_minus_window(full, (0, 0, 3, 4), (1, 1, 2, 2))
        # outer keeps rows 0..2, cols 0..3; inner removes only (1, 1)
        kept = set(zip(region.rows.tolist(), region.cols.tolist()))
        assert region.n_obs == 11
        assert (1, 1) not in kept
        assert (0, 0) in kept and (2, 3) in kept
        assert (3, 0) not in kept  # outside the outer window
        assert (region.n_rows, region.n_cols) == (4, 5)  # grid unchanged

    def test_no_inner_keeps_whole_window(self):
        x = np.ones((6, 6))
        full = ObservationSet.from_dense(x)
        region = window_minus_window(full, (2, 2, 5, 5))
        assert region.n_obs == 9

    def test_inner_outside_outer_rejected(self):
        full = ObservationSet.from_dense(np.ones((4, 4)))
        with pytest.raises(DataError):
            window_minus_window(full, (0, 0, 2, 2), (1, 1, 3, 3))

    def test_window_equal_to_hole_needs_opt_in(self):
        full = ObservationSet.from_dense(np.ones((4, 4)))
        with pytest.raises(DataError):
            window_minus_window(full, (0, 0, 2, 2), (0, 0, 2, 2))
        empty = window_minus_window(full, (0, 0, 2, 2), (0, 0, 2, 2), allow_empty=True)
        assert empty.n_obs == 0


class TestMissingMechanism:
    def test_deterministic(self):
        full = ObservationSet.from_dense(np.ones((30, 30)))
        a = apply_missing_mechanism(full, 0.3, seed=5)
        b = apply_missing_mechanism(full, 0.3, seed=5)
        assert a == b
        c = apply_missing_mechanism(full, 0.3, seed=6)
        assert a != c

    def test_tau_zero_keeps_everything(self):
        full = ObservationSet.from_dense(np.ones((10, 10)))
        assert apply_missing_mechanism(full, 0.0, seed=1) == full

    def test_masked_count_in_binomial_band(self):
        # 10000 cells at tau = 0.5: six sigma around 5000 is [4700, 5300]
        full = ObservationSet.from_dense(np.ones((100, 100)))
        masked = apply_missing_mechanism(full, 0.5, seed=3)
        hidden = full.n_obs - masked.n_obs
        assert 4700 <= hidden <= 5300

    def test_subset_of_original(self):
        rng = np.random.default_rng(0)
        full = ObservationSet.from_dense(rng.normal(size=(12, 8)))
        masked = apply_missing_mechanism(full, 0.25, seed=2)
        full_cells = set(zip(full.rows.tolist(), full.cols.tolist()))
        kept = set(zip(masked.rows.tolist(), masked.cols.tolist()))
        assert kept < full_cells
        dense = full.to_dense()
        assert all(dense[r, c] == v for r, c, v in zip(masked.rows, masked.cols, masked.values))


class TestRandomSplit:
    def test_partition(self, rng):
        full = ObservationSet.from_dense(rng.normal(size=(20, 15)))
        split = random_split(full, 0.2, seed=11)
        train_cells = set(zip(split.train.rows.tolist(), split.train.cols.tolist()))
        test_cells = set(zip(split.test.rows.tolist(), split.test.cols.tolist()))
        assert not train_cells & test_cells
        assert split.train.n_obs + split.test.n_obs == full.n_obs
        assert abs(split.test.n_obs / full.n_obs - 0.2) < 0.1

    def test_deterministic(self, rng):
        full = ObservationSet.from_dense(rng.normal(size=(20, 15)))
        a = random_split(full, 0.2, seed=4)
        b = random_split(full, 0.2, seed=4)
        assert a.train == b.train and a.test == b.test

    def test_train_coverage_floor(self, rng):
        full = ObservationSet.from_dense(rng.normal(size=(15, 15)))
        split = random_split(full, 0.3, seed=9, min_train_cover=2)
        assert split.train.cover_rows().min() >= 2
        assert split.train.cover_cols().min() >= 2

    def test_impossible_coverage_raises(self):
        full = ObservationSet.from_dense(np.ones((3, 3)))
        with pytest.raises(CoverageError):
            random_split(full, 0.9, seed=0, min_train_cover=3, max_tries=5)


class TestCompact:
    def test_drops_empty_lines(self):
        s = ObservationSet(5, 4, [0, 0, 4], [0, 3, 3], [1.0, 2.0, 3.0])
        small, kept_rows, kept_cols = compact(s)
        assert (small.n_rows, small.n_cols) == (2, 2)
        assert kept_rows.tolist() == [0, 4]
        assert kept_cols.tolist() == [0, 3]
        # cell (4, 3) -> (1, 1) after remapping, value preserved
        dense = small.to_dense()
        assert dense[1, 1] == 3.0 and dense[0, 0] == 1.0 and dense[0, 1] == 2.0

    def test_identity_when_full(self):
        s = ObservationSet.from_dense(np.ones((3, 3)))
        small, kept_rows, kept_cols = compact(s)
        assert small == s
        assert kept_rows.tolist() == [0, 1, 2]
        assert kept_cols.tolist() == [0, 1, 2]

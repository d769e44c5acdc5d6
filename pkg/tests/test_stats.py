import json

import numpy as np
import pandas as pd
import pytest
from scipy.stats import chi2_contingency

from core.errors import RejectedInputError
from core.geometry import PointCloud
from core.grid import CylGridConfig, build_bins
from core.sampling import PCB_RS, RS, pcb_random_sample
from core.stats import (
    TABLE_COLUMNS,
    band_consistency,
    bin_selection_counts,
    coefficient_of_variation,
    compare_methods,
    distance_histogram,
    frame_to_json,
    histogram_frame,
    histogram_from_counts,
    normalize_edges,
    parse_edges,
    rs_band_consistency,
    uniformity_frame,
    write_table,
)
from core.synth import SynthConfig, generate_long_tail

FAR_EDGES = (0.0, 30.0)
# coarse enough that an N/16 sample still covers every occupied bin
COARSE_GRID = CylGridConfig(32, 32, 4)


class TestDistanceHistogram:
    def test_single_point(self):
        hist = distance_histogram(PointCloud.from_xyz([3.0, 4.0, 0.0]))
        assert hist.counts.tolist() == [1, 0, 0, 0, 0, 0]
        assert hist.fractions.sum() == pytest.approx(1.0)

    def test_band_edges_are_left_closed(self):
        cloud = PointCloud.from_xyz([[10.0, 0, 0], [9.999, 0, 0], [0, 55.0, 0]])
        assert distance_histogram(cloud).counts.tolist() == [1, 1, 0, 0, 0, 1]

    def test_custom_edges_get_open_last_band(self):
        edges = parse_edges("0,5,10")
        assert edges.tolist() == [0.0, 5.0, 10.0, np.inf]
        hist = distance_histogram(PointCloud.from_xyz([[1, 0, 0], [6, 0, 0], [0, 60, 0]]), edges)
        assert hist.counts.tolist() == [1, 1, 1]

    def test_points_below_first_edge_land_in_first_band(self):
        hist = distance_histogram(PointCloud.from_xyz([[1, 0, 0], [7, 0, 0]]), [5.0, 10.0])
        assert hist.counts.tolist() == [2, 0]

    @pytest.mark.parametrize("edges", [[0, 10, 5], [0, 0, 10], [-1, 10], []])
    def test_bad_edges(self, edges):
        with pytest.raises(RejectedInputError):
            normalize_edges(edges)

    def test_unparsable_edges(self):
        with pytest.raises(RejectedInputError):
            parse_edges("0,ten,20")

    def test_long_tail_fractions_decrease(self, long_tail_cloud):
        hist = distance_histogram(long_tail_cloud, np.arange(0.0, 90.0, 10.0))
        assert (np.diff(hist.fractions) < 0).all()
        assert hist.fractions[0] == hist.fractions.max()

    def test_flat_density_follows_band_width(self):
        cloud = generate_long_tail(SynthConfig(density_exponent=1e-6, seed=4))
        hist = distance_histogram(cloud)
        widths = np.array([7.0, 10.0, 10.0, 10.0, 10.0, 30.0])
        np.testing.assert_allclose(hist.fractions, widths / widths.sum(), atol=0.01)


class TestUniformity:
    def test_cv(self):
        assert coefficient_of_variation([5, 5, 5]) == 0.0
        assert coefficient_of_variation([0, 0]) == 0.0
        assert coefficient_of_variation([1, 3]) == pytest.approx(0.5)

    def test_selection_counts_include_empty_bins(self):
        cloud = PointCloud.from_xyz([[4, 0, 0], [5, 0, 0], [0, 9, 0]])
        bins = build_bins(cloud, CylGridConfig(2, 1, 1))
        assert bin_selection_counts(bins, [0, 0, 1]).tolist() == [3, 0]

    def test_single_bin_reports_match(self, small_long_tail):
        n = len(small_long_tail)
        rs, pcb = compare_methods(small_long_tail, CylGridConfig(1, 1, 1), n // 4, range(20))
        assert rs.method == RS and pcb.method == PCB_RS
        table = np.vstack([rs.per_band_fraction.counts, pcb.per_band_fraction.counts])
        assert chi2_contingency(table).pvalue > 0.001
        assert rs.cv_bins == pcb.cv_bins == 0.0

    def test_pcb_balances_bins(self, long_tail_cloud):
        n = len(long_tail_cloud)
        rs, pcb = compare_methods(long_tail_cloud, CylGridConfig(), n // 4, range(3))
        assert pcb.cv_bins < rs.cv_bins

    @pytest.mark.slow
    def test_pcb_flattens_bands(self, long_tail_cloud):
        n = len(long_tail_cloud)
        rs, pcb = compare_methods(long_tail_cloud, COARSE_GRID, n // 16, range(20), threads=4)
        assert pcb.per_band_fraction.flatness() < rs.per_band_fraction.flatness()
        assert pcb.cv_bins < rs.cv_bins

    @pytest.mark.slow
    def test_pcb_keeps_far_points(self, long_tail_cloud):
        n = len(long_tail_cloud)
        rs, pcb = compare_methods(long_tail_cloud, COARSE_GRID, n // 16, range(20), FAR_EDGES)
        assert pcb.per_band_fraction.fractions[1] >= 2.0 * rs.per_band_fraction.fractions[1]

    def test_threads_do_not_change_results(self, small_long_tail):
        args = (small_long_tail, CylGridConfig(16, 16, 4), 2000, range(6))
        one = compare_methods(*args)
        many = compare_methods(*args, threads=3)
        for a, b in zip(one, many):
            assert a.cv_bins == b.cv_bins
            assert np.array_equal(a.per_band_fraction.counts, b.per_band_fraction.counts)

    def test_needs_seeds(self, small_long_tail):
        with pytest.raises(RejectedInputError):
            compare_methods(small_long_tail, CylGridConfig(), 100, [])


class TestBandConsistency:
    @pytest.mark.slow
    def test_random_sampling_keeps_distance_distribution(self, long_tail_cloud):
        n = len(long_tail_cloud)
        pooled, p = rs_band_consistency(long_tail_cloud, n // 16, range(1000))
        assert pooled.sum() == 1000 * (n // 16)
        assert p > 0.001

    def test_pcb_shifts_distribution(self, long_tail_cloud):
        source = distance_histogram(long_tail_cloud)
        idx = pcb_random_sample(long_tail_cloud, CylGridConfig(), len(long_tail_cloud) // 16, seed=0).indices
        sampled = distance_histogram(long_tail_cloud.take(idx), source.edges)
        assert band_consistency(source, sampled.counts) < 0.001

    def test_mass_in_empty_band(self):
        source = histogram_from_counts(normalize_edges([0, 10]), np.array([10, 0]))
        assert band_consistency(source, np.array([5, 1])) == 0.0


class TestTables:
    def test_histogram_frame(self):
        hist = distance_histogram(PointCloud.from_xyz([[1, 0, 0], [0, 70, 0]]))
        df = histogram_frame(hist)
        assert list(df.columns) == TABLE_COLUMNS
        assert len(df) == 6
        assert np.isinf(df["band_hi_m"].iloc[-1])

    def test_json_writes_null_for_open_band(self):
        hist = distance_histogram(PointCloud.from_xyz([[1, 0, 0]]), [0, 5])
        rows = json.loads(frame_to_json(histogram_frame(hist)))
        assert rows[-1]["band_hi_m"] is None
        assert rows[0] == {"band_lo_m": 0.0, "band_hi_m": 5.0, "count": 1, "fraction": 1.0}

    def test_csv_and_json_agree(self, tmp_path, small_long_tail):
        rs, pcb = compare_methods(small_long_tail, CylGridConfig(8, 8, 2), 1000, range(2))
        df = uniformity_frame([rs, pcb])
        write_table(df, tmp_path / "u.csv", "csv")
        write_table(df, tmp_path / "u.json", "json")
        from_csv = pd.read_csv(tmp_path / "u.csv")
        from_json = pd.DataFrame(json.loads((tmp_path / "u.json").read_text()))
        from_json["band_hi_m"] = from_json["band_hi_m"].astype(float).fillna(np.inf)
        pd.testing.assert_frame_equal(from_csv, from_json, check_dtype=False)
        assert set(from_csv["method"]) == {RS, PCB_RS}

    def test_unknown_format(self, tmp_path):
        with pytest.raises(RejectedInputError):
            write_table(pd.DataFrame({"a": [1]}), tmp_path / "x.txt", "xml")
        assert not (tmp_path / "x.txt").exists()

import numpy as np
import pytest

from confcal.calibration import (
    BinStats,
    ece,
    ece_from_bins,
    load_reliability,
    load_report,
    make_report,
    reliability_bins,
    reliability_export,
    save_report,
    top1_accuracy,
)
from confcal.dataset import DataFormatError


def _random_instance(rng, n=None, k=None):
    n = n or int(rng.integers(1, 51))
    k = k or int(rng.integers(2, 11))
    raw = rng.random((n, k)) + 1e-3
    probs = raw / raw.sum(axis=1, keepdims=True)
    labels = rng.integers(0, k, size=n)
    return probs, labels


def ece_bruteforce(probs, labels, num_bins):
    """Independent oracle: explicit per-bin membership loops."""
    n = len(labels)
    confs = [max(row) for row in probs.tolist()]
    preds = [row.index(max(row)) for row in probs.tolist()]
    total = 0.0
    for m in range(1, num_bins + 1):
        lo = (m - 1) / num_bins
        hi = m / num_bins
        members = [
            i
            for i in range(n)
            if (lo < confs[i] <= hi) or (m == 1 and confs[i] <= hi)
        ]
        if not members:
            continue
        acc = sum(1 for i in members if preds[i] == labels[i]) / len(members)
        conf = sum(confs[i] for i in members) / len(members)
        total += (len(members) / n) * abs(acc - conf)
    return total


class TestAccuracy:
    def test_hand_case(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
        assert top1_accuracy(probs, np.array([0, 1, 1, 0])) == 0.5
        assert top1_accuracy(probs, np.array([0, 1, 0, 1])) == 1.0

    def test_tie_goes_to_lowest_index(self):
        probs = np.array([[0.5, 0.5]])
        assert top1_accuracy(probs, np.array([0])) == 1.0
        assert top1_accuracy(probs, np.array([1])) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            top1_accuracy(np.zeros((0, 2)), np.array([], dtype=int))
        with pytest.raises(ValueError):
            top1_accuracy(np.array([[0.5, 0.5]]), np.array([2]))


class TestBins:
    def test_boundaries_and_counts(self):
        probs = np.array([[0.55, 0.45], [0.95, 0.05], [0.72, 0.28]])
        labels = np.array([0, 0, 1])
        bins = reliability_bins(probs, labels, 10)
        assert len(bins) == 10
        assert bins[0].lower == 0.0 and bins[-1].upper == 1.0
        assert [b.count for b in bins] == [0, 0, 0, 0, 0, 1, 0, 1, 0, 1]
        # bin 6 covers (0.5, 0.6]
        assert bins[5].avg_confidence == 0.55
        assert bins[5].avg_accuracy == 1.0
        assert bins[7].avg_accuracy == 0.0

    def test_counts_sum_to_n(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            probs, labels = _random_instance(rng)
            for m in (1, 5, 15):
                bins = reliability_bins(probs, labels, m)
                assert sum(b.count for b in bins) == len(labels)

    def test_single_bin_holds_everything(self):
        rng = np.random.default_rng(1)
        probs, labels = _random_instance(rng, n=20)
        bins = reliability_bins(probs, labels, 1)
        assert len(bins) == 1
        assert bins[0].count == 20
        assert bins[0].lower == 0.0 and bins[0].upper == 1.0

    def test_empty_bins_have_none_fields(self):
        probs = np.array([[1.0, 0.0]])
        bins = reliability_bins(probs, np.array([0]), 15)
        assert bins[-1].count == 1
        for b in bins[:-1]:
            assert b.count == 0
            assert b.avg_confidence is None
            assert b.avg_accuracy is None

    def test_full_confidence_lands_in_last_bin(self):
        probs = np.array([[1.0, 0.0], [0.5, 0.5]])
        bins = reliability_bins(probs, np.array([0, 0]), 15)
        assert bins[14].count == 1
        # 0.5 falls in (7/15, 8/15]
        assert bins[7].count == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            reliability_bins(np.array([[0.5, 0.5]]), np.array([0]), 0)


class TestEce:
    def test_hand_case_point_three(self):
        # two samples at confidence 0.8, one right and one wrong:
        # bin accuracy 0.5, |0.5 - 0.8| = 0.3 at full weight
        probs = np.array([[0.8, 0.2], [0.8, 0.2]])
        labels = np.array([0, 1])
        for m in (1, 5, 15):
            assert abs(ece(probs, labels, m) - 0.3) <= 1e-12

    def test_perfect_predictions_score_zero(self):
        probs = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        labels = np.array([0, 1, 0])
        assert ece(probs, labels, 15) == 0.0

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(60):
            probs, labels = _random_instance(rng)
            m = (1, 5, 15)[trial % 3]
            assert abs(ece(probs, labels, m) - ece_bruteforce(probs, labels, m)) <= 1e-12

    def test_recomputation_from_bins(self):
        rng = np.random.default_rng(3)
        probs, labels = _random_instance(rng, n=40)
        report = make_report(probs, labels, 15)
        assert abs(report.ece - ece_from_bins(report.bins, report.n)) <= 1e-12

    def test_bounded_by_unit_interval(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            probs, labels = _random_instance(rng)
            val = ece(probs, labels, 15)
            assert 0.0 <= val <= 1.0


class TestReport:
    def test_fields_consistent(self):
        rng = np.random.default_rng(5)
        probs, labels = _random_instance(rng, n=25)
        report = make_report(probs, labels, 15)
        assert report.n == 25
        assert report.num_bins == 15
        assert report.accuracy == top1_accuracy(probs, labels)
        assert sum(b.count for b in report.bins) == 25

    def test_report_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        probs, labels = _random_instance(rng, n=30)
        report = make_report(probs, labels, 15)
        path = tmp_path / "r.json"
        save_report(report, path)
        assert load_report(path) == report

    def test_report_load_errors(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(DataFormatError):
            load_report(path)
        path.write_text('{"accuracy": 0.5}')
        with pytest.raises(DataFormatError, match="payload"):
            load_report(path)


class TestReliabilityCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        probs, labels = _random_instance(rng, n=35)
        bins = reliability_bins(probs, labels, 15)
        path = tmp_path / "rel.csv"
        reliability_export(bins, path)
        back = load_reliability(path)
        assert back == bins

    def test_row_per_bin_and_empty_fields(self, tmp_path):
        probs = np.array([[1.0, 0.0]])
        bins = reliability_bins(probs, np.array([0]), 5)
        path = tmp_path / "rel.csv"
        reliability_export(bins, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "lower,upper,count,avg_confidence,avg_accuracy"
        assert len(lines) == 6
        # empty bins leave the trailing fields blank
        assert lines[1].endswith(",0,,")
        assert lines[5].split(",")[2] == "1"

    def test_header_checked_on_load(self, tmp_path):
        path = tmp_path / "rel.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(DataFormatError, match="header"):
            load_reliability(path)

    def test_field_count_checked(self, tmp_path):
        path = tmp_path / "rel.csv"
        path.write_text("lower,upper,count,avg_confidence,avg_accuracy\n0.0,0.2,1\n")
        with pytest.raises(DataFormatError, match="5 fields"):
            load_reliability(path)


class TestBinStatsShape:
    def test_bin_stats_is_frozen(self):
        b = BinStats(0.0, 0.5, 1, 0.4, 1.0)
        with pytest.raises(AttributeError):
            b.count = 2

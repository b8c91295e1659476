import gzip

import numpy as np
import pytest

from plpartition.data import (
    EmptyLabelSetError,
    FullLabelSetError,
    IndexOutOfRangeError,
    MalformedHeaderError,
    MalformedLineError,
    parse_xmlc,
    serialize_xmlc,
    split,
    to_partitioned_preference,
    to_train_examples,
)

BASIC = "2 3 2\n0 0:1.5 2:0.5\n1 1:2.0\n"


def write(tmp_path, text, name="data.txt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestParse:
    def test_basic_read_back(self, tmp_path):
        ds = parse_xmlc(write(tmp_path, BASIC))
        assert (len(ds), ds.n_features, ds.n_labels) == (2, 3, 2)
        assert ds.samples[0].labels.tolist() == [0]
        assert ds.samples[0].feat_idx.tolist() == [0, 2]
        assert ds.samples[0].feat_val.tolist() == [1.5, 0.5]
        assert ds.samples[1].feat_idx.tolist() == [1]

    def test_empty_label_field(self, tmp_path):
        ds = parse_xmlc(write(tmp_path, "1 2 2\n 0:1.0\n"))
        assert ds.samples[0].labels.size == 0
        assert ds.samples[0].feat_val.tolist() == [1.0]

    def test_crlf_tolerated(self, tmp_path):
        ds = parse_xmlc(write(tmp_path, "1 2 2\r\n0 1:3.0\r\n"))
        assert ds.samples[0].feat_val.tolist() == [3.0]

    def test_gzip_by_extension(self, tmp_path):
        path = tmp_path / "data.txt.gz"
        with gzip.open(path, "wt", encoding="utf-8") as handle:
            handle.write(BASIC)
        assert len(parse_xmlc(path)) == 2

    def test_label_counts_match_line_scan(self, tmp_path):
        text = "4 2 3\n0,2 0:1.0\n2 1:1.0\n 0:2.0\n0 1:0.5\n"
        ds = parse_xmlc(write(tmp_path, text))
        assert ds.label_counts.tolist() == [2, 0, 2]

    def test_malformed_header(self, tmp_path):
        with pytest.raises(MalformedHeaderError):
            parse_xmlc(write(tmp_path, "2 3\n0 0:1.0\n"))

    def test_sample_count_mismatch(self, tmp_path):
        with pytest.raises(MalformedHeaderError):
            parse_xmlc(write(tmp_path, "3 3 2\n0 0:1.0\n1 1:1.0\n"))

    def test_bad_feature_token_reports_line(self, tmp_path):
        with pytest.raises(MalformedLineError, match="line 3"):
            parse_xmlc(write(tmp_path, "2 3 2\n0 0:1.0\n1 1:x\n"))

    def test_duplicate_feature_index_rejected(self, tmp_path):
        with pytest.raises(MalformedLineError):
            parse_xmlc(write(tmp_path, "1 3 2\n0 1:1.0 1:2.0\n"))

    def test_decreasing_feature_index_rejected(self, tmp_path):
        with pytest.raises(MalformedLineError):
            parse_xmlc(write(tmp_path, "1 3 2\n0 2:1.0 1:2.0\n"))

    def test_feature_index_out_of_range(self, tmp_path):
        with pytest.raises(IndexOutOfRangeError, match="line 2"):
            parse_xmlc(write(tmp_path, "1 3 2\n0 7:1.0\n"))

    def test_label_out_of_range(self, tmp_path):
        with pytest.raises(IndexOutOfRangeError):
            parse_xmlc(write(tmp_path, "1 3 2\n5 0:1.0\n"))


class TestRoundTrip:
    def test_serialize_parse_is_fixed_point(self, tmp_path):
        ds = parse_xmlc(write(tmp_path, "3 4 3\n0,2 0:1.5 3:0.25\n 1:2.0\n1 2:0.125\n"))
        out1 = tmp_path / "round1.txt"
        serialize_xmlc(ds, out1)
        ds2 = parse_xmlc(out1)
        out2 = tmp_path / "round2.txt"
        serialize_xmlc(ds2, out2)
        assert out1.read_text() == out2.read_text()
        for a, b in zip(ds.samples, ds2.samples):
            assert np.array_equal(a.labels, b.labels)
            assert np.array_equal(a.feat_idx, b.feat_idx)
            assert np.array_equal(a.feat_val, b.feat_val)

    def test_values_round_trip_exactly(self, tmp_path):
        rng = np.random.default_rng(0)
        lines = ["5 10 4"]
        for _ in range(5):
            vals = rng.standard_normal(3)
            lines.append("0,3 " + " ".join(f"{i}:{v!r}" for i, v in zip((1, 4, 7), vals)))
        ds = parse_xmlc(write(tmp_path, "\n".join(lines) + "\n"))
        out = tmp_path / "out.txt"
        serialize_xmlc(ds, out)
        ds2 = parse_xmlc(out)
        for a, b in zip(ds.samples, ds2.samples):
            assert np.array_equal(a.feat_val, b.feat_val)


class TestSplit:
    def _dataset(self, tmp_path, n=8):
        lines = [f"{n} 2 4"] + [f"{i % 4} 0:1.0" for i in range(n)]
        return parse_xmlc(write(tmp_path, "\n".join(lines) + "\n"))

    def test_zero_fraction_gives_empty_valid(self, tmp_path):
        train, valid = split(self._dataset(tmp_path), 0.0, seed=1)
        assert (len(train), len(valid)) == (8, 0)

    def test_quarter_of_eight_is_two(self, tmp_path):
        train, valid = split(self._dataset(tmp_path), 0.25, seed=1)
        assert (len(train), len(valid)) == (6, 2)

    def test_same_seed_same_split(self, tmp_path):
        ds = self._dataset(tmp_path)
        t1, v1 = split(ds, 0.25, seed=9)
        t2, v2 = split(ds, 0.25, seed=9)
        assert [s.labels.tolist() for s in v1.samples] == [s.labels.tolist() for s in v2.samples]
        assert [s.labels.tolist() for s in t1.samples] == [s.labels.tolist() for s in t2.samples]

    def test_union_is_complete_and_disjoint(self, tmp_path):
        ds = self._dataset(tmp_path)
        train, valid = split(ds, 0.25, seed=3)
        assert len(train) + len(valid) == len(ds)
        assert np.array_equal(train.label_counts + valid.label_counts, ds.label_counts)


class TestPreferenceConversion:
    def test_two_block_layout(self, tmp_path):
        ds = parse_xmlc(write(tmp_path, "1 2 3\n0 0:1.0\n"))
        pref = to_partitioned_preference(ds.samples[0], 3)
        assert pref.blocks[0].tolist() == [0]
        assert pref.blocks[1].tolist() == [1, 2]

    def test_empty_labels_rejected(self, tmp_path):
        ds = parse_xmlc(write(tmp_path, "1 2 3\n 0:1.0\n"))
        with pytest.raises(EmptyLabelSetError):
            to_partitioned_preference(ds.samples[0], 3)

    def test_full_labels_rejected(self, tmp_path):
        ds = parse_xmlc(write(tmp_path, "1 2 3\n0,1,2 0:1.0\n"))
        with pytest.raises(FullLabelSetError):
            to_partitioned_preference(ds.samples[0], 3)

    def test_train_examples_drop_degenerate_rows(self, tmp_path):
        text = "3 2 3\n0 0:1.0\n 0:1.0\n0,1,2 1:1.0\n"
        ds = parse_xmlc(write(tmp_path, text))
        examples = to_train_examples(ds)
        assert len(examples) == 1
        assert examples[0].labels.tolist() == [0]

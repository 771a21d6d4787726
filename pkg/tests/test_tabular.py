import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neuralkdb.errors import DataError
from neuralkdb.tabular import (
    ColumnRule,
    Preprocessor,
    PreprocessSpec,
    RawTable,
    bin_edges,
    bin_label,
    column_mode,
    discretize,
    encode,
    impute_missing,
    load_csv,
    prepare,
)

from conftest import DATA_DIR


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_missing_cell_marked(self, tmp_path):
        t = load_csv(write(tmp_path, "a,b,cls\n1,x,p\n2,?,q\n"), "cls")
        assert t.num_rows == 2
        assert t.cells[1][1] is None
        assert t.cells[0] == ("1", "x", "p")

    def test_header_only(self, tmp_path):
        t = load_csv(write(tmp_path, "a,b,cls\n"), "cls")
        assert t.num_rows == 0
        assert t.column_names == ("a", "b", "cls")

    def test_ragged_rows(self, tmp_path):
        with pytest.raises(DataError, match="ragged|fields|cells"):
            load_csv(write(tmp_path, "a,b,cls\n1,2,p\n1,q\n"), "cls")

    def test_unknown_label_column(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv(write(tmp_path, "a,cls\n1,p\n"), "label")

    def test_missing_file(self, tmp_path):
        with pytest.raises((DataError, OSError)):
            load_csv(tmp_path / "nope.csv", "cls")

    def test_label_by_index(self, tmp_path):
        t = load_csv(write(tmp_path, "a,cls\n1,p\n"), 1)
        assert t.label_column == "cls"


class TestImpute:
    def table(self, col):
        return RawTable(("a", "cls"), [(v, "p") for v in col], "cls")

    def test_mode_fill(self):
        out = impute_missing(self.table(["x", "x", None, "y"]))
        assert out.column("a") == ["x", "x", "x", "y"]

    def test_tie_goes_to_smallest_token(self):
        assert impute_missing(self.table(["y", "x", None])).column("a")[2] == "x"

    def test_all_missing(self):
        assert impute_missing(self.table([None, None])).column("a") == ["NA", "NA"]

    @given(st.lists(st.one_of(st.none(), st.sampled_from("abc")), min_size=1, max_size=30))
    def test_idempotent(self, col):
        once = impute_missing(self.table(col))
        assert impute_missing(once) == once
        assert None not in once.column("a")


class TestBinning:
    def table(self, col):
        return RawTable(("a", "cls"), [(v, "p") for v in col], "cls")

    def test_exact_quantile_split(self):
        col = [str(v) for v in range(1, 11)]
        out = discretize(self.table(col), PreprocessSpec(num_bins=5)).column("a")
        assert out == [f"bin{j // 2}" for j in range(10)]

    def test_bins_capped_by_distinct_values(self):
        out = discretize(self.table(["1", "1", "2", "3"]), PreprocessSpec(num_bins=5)).column("a")
        assert sorted(set(out)) == ["bin0", "bin1", "bin2"]

    def test_text_column_unchanged(self):
        t = self.table(["red", "blue"])
        assert discretize(t, PreprocessSpec()).column("a") == ["red", "blue"]

    def test_label_column_never_binned(self):
        t = RawTable(("a", "cls"), [("1", "1"), ("2", "2"), ("3", "3")], "cls")
        assert discretize(t, PreprocessSpec(num_bins=2)).column("cls") == ["1", "2", "3"]

    def test_num_bins_at_least_two(self):
        with pytest.raises(ValueError):
            PreprocessSpec(num_bins=1)

    @settings(max_examples=200)
    @given(st.lists(st.integers(0, 12), min_size=1, max_size=80), st.integers(2, 8))
    def test_occupancy_bound(self, values, num_bins):
        # each bin holds n/B rows, give or take the multiplicity of its boundary value
        edges = bin_edges(values, num_bins)
        b = len(edges) + 1
        assert b == min(num_bins, len(set(values)))
        labels = [bin_label(v, edges) for v in values]
        n = len(values)
        mult = {v: values.count(v) for v in values}
        for j in range(b):
            occ = labels.count(f"bin{j}")
            slack = max([mult[e] for e in edges[max(j - 1, 0):j + 1]], default=n)
            assert abs(occ - n / b) <= slack

    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40), st.integers(2, 6))
    def test_bins_monotone(self, values, num_bins):
        edges = bin_edges(values, num_bins)
        idx = [int(bin_label(v, edges)[3:]) for v in sorted(values)]
        assert idx == sorted(idx)


class TestEncode:
    def test_two_rows(self):
        t = RawTable(("a", "cls"), [("x", "p"), ("y", "q")], "cls")
        ds = encode(t)
        assert ds.feature_alphabets == (("x", "y"),)
        assert ds.label_alphabet == ("p", "q")
        assert ds.rows == [((0,), 0), ((1,), 1)]

    def test_single_class_rejected(self):
        with pytest.raises(DataError, match="at least 2"):
            encode(RawTable(("a", "cls"), [("x", "p"), ("y", "p")], "cls"))

    def test_missing_cells_rejected(self):
        with pytest.raises(DataError, match="impute"):
            encode(RawTable(("a", "cls"), [(None, "p"), ("y", "q")], "cls"))

    def test_iris_shape(self, iris_dataset):
        ds = iris_dataset
        assert ds.m == 4
        assert ds.n == 150
        assert ds.num_labels == 3
        assert all(s <= 5 for s in ds.alphabet_sizes)

    def test_avg_alphabet_size_exact(self, iris_dataset):
        ds = iris_dataset
        assert ds.avg_alphabet_size * ds.m == sum(ds.alphabet_sizes)

    @given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("uvw"), st.sampled_from("pq")),
                    min_size=2, max_size=30))
    def test_decode_round_trip(self, rows):
        rows = rows + [("a", "u", "p"), ("b", "v", "q")]
        t = RawTable(("f", "g", "cls"), rows, "cls")
        ds = encode(t)
        assert ds.decode() == t
        for (x, c), row in zip(ds.rows, rows):
            assert tuple(ds.feature_alphabets[i][r] for i, r in enumerate(x)) == row[:2]
            assert ds.label_alphabet[c] == row[2]

    def test_dataset_rejects_out_of_range(self):
        from conftest import make_dataset
        with pytest.raises(DataError):
            make_dataset([[3]], [0], sizes=[2])


class TestPreprocessor:
    def test_fit_on_train_and_round_trip(self):
        rows = [(str(v), "x" if v % 2 else None, "p" if v < 5 else "q") for v in range(10)]
        t = RawTable(("num", "txt", "cls"), rows, "cls")
        pre = Preprocessor.fit(t, PreprocessSpec(num_bins=2))
        again = Preprocessor.from_dict(pre.to_dict())
        assert again.to_dict() == pre.to_dict()
        assert again.transform(t) == pre.transform(t)
        # missing cells at predict time get the training fill
        assert pre.feature_tokens(("cls", "txt", "num"), ("p", None, "100")) == ("bin1", "x")

    def test_dropped_columns(self):
        t = RawTable(("a", "b", "cls"), [("1", "x", "p"), ("2", "y", "q")], "cls")
        ds, _ = prepare(t, PreprocessSpec(dropped_columns=("a",)))
        assert ds.feature_names == ("b",)

    def test_column_rule_unbinned_value(self):
        rule = ColumnRule("a", "x", None)
        assert rule.apply(None) == "x"
        assert rule.apply("y") == "y"

    def test_mode_helper(self):
        assert column_mode(["b", "a", "b", None]) == "b"


def test_bundled_files_parse():
    for name, rows in [("car", 1728), ("breast-w", 683), ("iris", 150)]:
        with open(DATA_DIR / f"{name}.csv", newline="") as fh:
            body = list(csv.reader(fh))
        assert body[0][-1] == "class"
        assert len(body) - 1 == rows

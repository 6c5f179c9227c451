import math

import numpy as np
import pytest

from lls import DataError, Schema, enumerate_patterns, pattern_order
from lls.frequency import (
    Dataset,
    FrequencyTable,
    build_moment_matrix,
    counting_identity_gap,
    frequency,
    load_dataset,
    matrix_from_csv,
    matrix_to_csv,
    pattern_count,
    save_dataset,
)


@pytest.fixture
def tiny():
    schema = Schema((2, 2))
    rows = np.array([[1, 1], [1, 2], [2, 1], [1, 1]])
    return Dataset(schema, rows)


def test_frequency_known_values(tiny):
    assert frequency(tiny, (1, 0)) == 0.75
    assert frequency(tiny, (1, 1)) == 0.5
    assert frequency(tiny, (0, 0)) == 1.0


def test_dataset_validation():
    schema = Schema((2, 2))
    with pytest.raises(DataError):
        Dataset(schema, np.array([[1, 3]]))
    with pytest.raises(DataError):
        Dataset(schema, np.array([[0, 1]]))
    with pytest.raises(DataError):
        Dataset(schema, np.empty((0, 2), dtype=int))
    with pytest.raises(DataError):
        Dataset(schema, np.array([[1, 1, 1]]))


def test_load_dataset_roundtrip(tmp_path, tiny):
    path = tmp_path / "d.csv"
    save_dataset(tiny, path)
    back = load_dataset(path, tiny.schema)
    assert np.array_equal(back.rows, tiny.rows)


def test_load_dataset_errors_name_lines(tmp_path):
    schema = Schema((2, 2))
    path = tmp_path / "d.csv"

    path.write_text("")
    with pytest.raises(DataError, match="empty"):
        load_dataset(path, schema)

    path.write_text("x1,x2\n")
    with pytest.raises(DataError, match="no observations"):
        load_dataset(path, schema)

    path.write_text("x1,x2\n1,1\n1\n")
    with pytest.raises(DataError, match=r":3"):
        load_dataset(path, schema)

    path.write_text("x1,x2\n1,1\n1,x\n")
    with pytest.raises(DataError, match=r":3.*'x'"):
        load_dataset(path, schema)

    path.write_text("x1,x2\n1,1\n2,9\n")
    with pytest.raises(DataError, match=r":3.*variable 2"):
        load_dataset(path, schema)

    path.write_text("x1,x2\n1,1.5\n")
    with pytest.raises(DataError, match=r":2"):
        load_dataset(path, schema)


def test_counting_identity_exact():
    rng = np.random.default_rng(7)
    schema = Schema((3, 2, 4))
    data = Dataset(
        schema,
        np.column_stack([rng.integers(1, lv + 1, size=500) for lv in schema.levels]),
    )
    for pat in enumerate_patterns(schema, 2):
        for j in range(1, schema.n_variables + 1):
            if pat[j - 1] == 0:
                assert counting_identity_gap(data, pat, j) == 0


def test_pattern_count_matches_bitpack_counts():
    rng = np.random.default_rng(3)
    schema = Schema((2, 3, 2))
    data = Dataset(
        schema,
        np.column_stack([rng.integers(1, lv + 1, size=257) for lv in schema.levels]),
    )
    table = FrequencyTable.from_dataset(data, enumerate_patterns(schema, 3))
    for pat, val in table.entries.items():
        assert val == pattern_count(data, pat) / data.n


def test_frequency_table_all_free_must_be_one():
    schema = Schema((2, 2))
    with pytest.raises(DataError):
        FrequencyTable(schema, {(0, 0): 0.5})
    t = FrequencyTable(schema, {(0, 0): 1.0, (1, 0): 0.25}, sample_size=4)
    assert t.value((1, 0)) == 0.25
    assert (1, 0) in t
    with pytest.raises(KeyError):
        t.value((2, 0))


class TestMomentMatrix:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.schema = Schema((2, 2, 2))
        self.data = Dataset(
            self.schema,
            np.column_stack([rng.integers(1, 3, size=400) for _ in range(3)]),
        )
        self.matrix = build_moment_matrix(self.data, max_col_order=2)

    def test_shape_and_columns(self):
        assert self.matrix.shape == (6, 19)
        assert self.matrix.columns[0] == (0, 0, 0)
        orders = [pattern_order(p) for p in self.matrix.columns]
        assert orders == sorted(orders)

    def test_observability_rule(self):
        # a cell is observable iff the column leaves its variable free
        for c, pat in enumerate(self.matrix.columns):
            for r in range(self.schema.total_cells):
                j, _ = self.schema.unflatten(r)
                assert self.matrix.observed[r, c] == (pat[j - 1] == 0)
                assert self.matrix.observed[r, c] == np.isfinite(
                    self.matrix.values[r, c]
                )

    def test_values_are_refined_frequencies(self):
        c = self.matrix.column_index((1, 1, 0))
        assert self.matrix.values[
            self.schema.flatten(3, 1), c
        ] == pytest.approx(frequency(self.data, (1, 1, 1)), abs=0)
        assert self.matrix.column_mass[c] == pytest.approx(
            frequency(self.data, (1, 1, 0)), abs=0
        )

    def test_block_sums_equal_mass(self):
        for c in range(len(self.matrix.columns)):
            pat = self.matrix.columns[c]
            for j in range(1, 4):
                if pat[j - 1] == 0:
                    s = self.matrix.values[self.schema.block_slice(j), c].sum()
                    assert math.isclose(
                        s, self.matrix.column_mass[c], rel_tol=0, abs_tol=1e-12
                    )

    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "m.csv"
        matrix_to_csv(self.matrix, path)
        back = matrix_from_csv(path)
        assert back.schema == self.schema
        assert back.columns == self.matrix.columns
        assert np.array_equal(back.observed, self.matrix.observed)
        obs = self.matrix.observed
        assert np.array_equal(back.values[obs], self.matrix.values[obs])
        np.testing.assert_allclose(
            back.column_mass, self.matrix.column_mass, rtol=0, atol=1e-12
        )


def test_zero_frequency_columns_dropped(caplog):
    schema = Schema((2, 2))
    data = Dataset(schema, np.array([[1, 1], [1, 2], [1, 1]]))
    with caplog.at_level("WARNING", logger="lls.frequency"):
        m = build_moment_matrix(data, max_col_order=1)
    # level 2 of variable 1 never occurs
    assert (2, 0) not in m.columns
    assert (1, 0) in m.columns
    assert any("zero-frequency" in rec.message for rec in caplog.records)


def test_max_col_order_bounds(tiny):
    with pytest.raises(DataError):
        build_moment_matrix(tiny, max_col_order=2)  # J - 1 == 1
    with pytest.raises(DataError):
        build_moment_matrix(tiny, max_col_order=-1)
    m = build_moment_matrix(tiny, max_col_order=1)
    assert m.shape == (4, 5)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentkit import dataset as ds
from latentkit.errors import ConfigError, LatentKitError

from conftest import make_codebook, matrix


def rows_from(records):
    return [dict(r) for r in records]


def test_codebook_roundtrip_and_subscales():
    cb = make_codebook(4, reversed_ids={"i2"}, subscales=["a", "a", "b", "b"])
    again = ds.Codebook.from_dict(cb.to_dict())
    assert again == cb
    assert again.subscales() == {"a": ["i1", "i2"], "b": ["i3", "i4"]}
    assert again["i2"].reversed


def test_codebook_rejects_duplicates_and_orphan_subscales():
    with pytest.raises(ConfigError):
        ds.Codebook.from_dict({"items": [{"id": "x"}, {"id": "x"}]})
    with pytest.raises(ConfigError):
        ds.Codebook.from_dict({"items": [{"id": "x", "subscale": "a"}], "subscales": ["a", "b"]})
    with pytest.raises(ConfigError):
        ds.Codebook.from_dict({"items": [{"id": "x"}], "scale_min": 5, "scale_max": 1})


def test_ingest_dedup_keeps_first_and_reports_cells():
    cb = make_codebook(2)
    rows = rows_from(
        [
            {"email": "a", "i1": "1", "i2": "5"},
            {"email": "b", "i1": "x", "i2": "9"},
            {"email": "a", "i1": "3", "i2": "3"},
            {"email": "c", "i1": "", "i2": "2.5"},
        ]
    )
    m, rep = ds.ingest(rows, cb, "email")
    assert rep.received == 4 and rep.duplicates == 1 and rep.retained == 3
    assert m.respondent_ids == ["a", "b", "c"]
    np.testing.assert_array_equal(m.values[0], [1, 5])
    assert np.isnan(m.values[1]).all()
    assert [e["error"] for e in rep.cell_errors] == ["NOT_NUMERIC", "OUT_OF_RANGE", "OUT_OF_RANGE"]
    assert math.isnan(m.values[2, 0])


def test_ingest_malformed_rows_are_counted():
    cb = make_codebook(2)
    rows = [{"email": "a", "i1": "1", "i2": "2"}, {"email": "b", "i1": "1", "i2": None}, {"email": "c", "i1": "1", "i2": "2", None: ["extra"]}]
    m, rep = ds.ingest(rows, cb, "email")
    assert rep.malformed == 2 and m.n == 1
    assert all(e["error"] == "MALFORMED_ROW" for e in rep.row_errors)


def test_ingest_disqualification_rules():
    cb = make_codebook(2)
    rows = rows_from(
        [
            {"email": "a", "consent": "yes", "i1": "1", "i2": "2"},
            {"email": "b", "consent": "no", "i1": "1", "i2": "2"},
            {"email": "c", "consent": "yes", "i1": "", "i2": ""},
        ]
    )
    m, rep = ds.ingest(rows, cb, "email", [{"column": "consent", "allowed": ["yes"]}, {"max_missing": 1}])
    assert m.respondent_ids == ["a"]
    assert rep.disqualified_ids == ["b", "c"]
    assert m.metadata["consent"] == ["yes"]


def test_ingest_errors():
    cb = make_codebook(2)
    with pytest.raises(LatentKitError) as e:
        ds.ingest([], cb, "email")
    assert e.value.code == "EMPTY_SOURCE"
    with pytest.raises(ConfigError):
        ds.ingest([{"email": "a", "i1": "1"}], cb, "email")
    with pytest.raises(ConfigError):
        ds.ingest([{"id": "a", "i1": "1", "i2": "1"}], cb, "email")
    with pytest.raises(ConfigError):
        ds.Disqualifier.from_dict({"colum": "x"})


def test_intake_fixture_flow(data_dir):
    cb = ds.Codebook.load(data_dir / "intake_codebook.json")
    rules = json.loads((data_dir / "intake_rules.json").read_text())
    m, rep = ds.ingest(ds.read_rows(data_dir / "intake_258.csv"), cb, "email", rules)
    assert (rep.received, rep.duplicates, rep.unique, rep.disqualified, rep.retained) == (258, 4, 254, 27, 227)
    assert m.n == 227 and len(set(m.respondent_ids)) == 227


@given(st.lists(st.integers(1, 7), min_size=1, max_size=30))
def test_reverse_code_is_involution(vals):
    cb = ds.Codebook((ds.ItemSpec("i1", reversed=True),), 1, 7)
    m = matrix(np.array(vals, dtype=float)[:, None])
    once = ds.reverse_code(m, cb)
    np.testing.assert_array_equal(once.values[:, 0], 8 - np.array(vals))
    np.testing.assert_array_equal(ds.reverse_code(once, cb).values, m.values)


def test_listwise_and_scores():
    m = matrix([[1, 2, 3], [np.nan, 2, 2], [5, 5, 5]])
    clean, removed = ds.listwise(m)
    assert removed == 1 and clean.respondent_ids == ["r0", "r2"]
    clean2, removed2 = ds.listwise(m, ["i2", "i3"])
    assert removed2 == 0 and clean2.item_ids == ["i2", "i3"]
    with pytest.raises(LatentKitError) as e:
        ds.listwise(matrix([[np.nan, 1], [1, np.nan]]))
    assert e.value.code == "NO_COMPLETE_CASES"
    table = ds.score_groups(m, {"a": ["i1", "i2"], "b": ["i3"]}, "sum")
    np.testing.assert_array_equal(table["a"][[0, 2]], [3, 10])
    assert math.isnan(table["a"][1])
    with pytest.raises(ConfigError):
        ds.score_groups(m, {"a": ["i1"]}, "median")


def test_subscale_and_composite_scores():
    cb = make_codebook(4, subscales=["a", "a", "b", "b"])
    m = matrix([[1, 3, 2, 4], [5, 5, 1, 1]])
    t = ds.subscale_scores(m, cb)
    np.testing.assert_allclose(t["a"], [2, 5])
    np.testing.assert_allclose(t["b"], [3, 1])
    c = ds.composite_score(m, cb, ["i1", "i4"], "crit")
    np.testing.assert_allclose(c["crit"], [5, 6])
    with pytest.raises(ConfigError):
        ds.composite_score(m, cb, ["zz"])


def test_percentile_matches_numpy_linear():
    rng = np.random.default_rng(1)
    for n in range(1, 40):
        x = np.sort(rng.normal(size=n))
        for q in (0.25, 0.5, 0.75):
            assert ds.percentile(x, q) == pytest.approx(np.percentile(x, 100 * q), abs=1e-12)


def test_quartile_classify_boundaries():
    scores = [1, 2, 3, 4, 5, 6, 7, 8, np.nan]
    split = ds.quartile_classify(scores, [f"s{i}" for i in range(9)])
    assert split.q1 == 2.75 and split.q3 == 6.25
    groups = [lab.group.value for lab in split.labels]
    assert groups == ["LOW", "LOW", "MID", "MID", "MID", "MID", "HIGH", "HIGH"]
    assert split.low_ids == ["s0", "s1"] and split.high_ids == ["s6", "s7"]
    assert not split.flags


def test_quartile_degenerate_split():
    split = ds.quartile_classify([3, 3, 3, 3, 1, 5])
    assert split.q1 == split.q3 == 3
    assert "DEGENERATE_SPLIT" in split.flags
    assert set(split.low_ids) & set(split.high_ids)
    with pytest.raises(LatentKitError):
        ds.quartile_classify([1, 2, 3])


@settings(max_examples=50)
@given(st.lists(st.floats(-100, 100), min_size=4, max_size=60))
def test_quartile_groups_respect_cutoffs(xs):
    split = ds.quartile_classify(xs)
    for lab, x in zip(split.labels, xs):
        if lab.group is ds.Group.LOW:
            assert x <= split.q1
        elif lab.group is ds.Group.HIGH:
            assert x >= split.q3
        else:
            assert split.q1 < x < split.q3


def test_csv_roundtrip(tmp_path):
    cb = make_codebook(2)
    m = ds.ResponseMatrix(["a", "b"], ["i1", "i2"], np.array([[1.0, np.nan], [4.0, 5.0]]), {"grp": ["x", "y"]})
    path = tmp_path / "m.csv"
    m.to_csv(path)
    back, rep = ds.ingest(ds.read_rows(path), cb, "id")
    np.testing.assert_array_equal(np.nan_to_num(back.values), np.nan_to_num(m.values))
    assert back.metadata["grp"] == ["x", "y"] and rep.retained == 2

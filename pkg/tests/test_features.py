from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdt_lab.categorizer import CategoryDB
from cdt_lab.features import (SCALAR_FEATURES, IncompleteStage, LabeledDataset, SchemaMismatch, StageData,
                              assemble, build_sample, combine, run_samples, timeslot, to_dataset, weekday)

DB = CategoryDB({"a.example": ("Shopping",), "b.example": ("Shopping", "Fashion"),
                 "p.example": ("Jewelry",)})


def sample(mobile_domains, desktop_domains, stage="B", **kw):
    return build_sample(StageData(600, mobile_domains), StageData(8 * 3600, desktop_domains),
                        ["p.example"], DB, stage=stage, run_index=2, session_id=3, **kw)


def test_counts_example():
    fv = sample(["a.example", "a.example", "b.example"], [])
    s = fv.scalars
    assert (s["mobile_number_of_ads"], s["mobile_unique_number_of_ads"]) == (3, 2)
    assert (s["mobile_number_of_keywords"], s["mobile_unique_number_of_keywords"]) == (4, 2)
    assert fv.vectors["mobile_keywords"] == Counter({"Shopping": 3, "Fashion": 1})
    assert fv.vectors["mobile_landing_pages"] == Counter({"a.example": 2, "b.example": 1})
    assert s["desktop_number_of_ads"] == 0


def test_timeslot_and_weekday():
    assert timeslot(10 * 60) == 0
    assert timeslot(23 * 3600 + 50 * 60) == 47
    assert timeslot(86400 + 1800) == 1
    assert weekday(0) == 1 and weekday(6 * 86400) == 7 and weekday(7 * 86400) == 1


def test_crawl_type_and_provenance_scalars():
    assert sample([], [], stage="B").scalars["crawl_type"] == 0
    assert sample([], [], stage="A").scalars["crawl_type"] == 1
    s = sample([], []).scalars
    assert (s["run_id"], s["session_id"], s["desktop_day"]) == (2, 3, 1)


def test_persona_keyword_block_toggle():
    assert "persona_keywords" in sample([], []).vectors
    assert "persona_keywords" not in sample([], [], include_persona_keywords=False).vectors


def test_incomplete_stage():
    with pytest.raises(IncompleteStage):
        build_sample(StageData(0, [], complete=False), StageData(0, []), [], DB,
                     stage="B", run_index=1, session_id=1)
    with pytest.raises(IncompleteStage):
        sample([], [], stage="M")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["a.example", "b.example", "zz.example"]), max_size=12),
       st.lists(st.sampled_from(["a.example", "b.example", "p.example"]), max_size=12),
       st.integers(0, 10 * 86400), st.integers(0, 10 * 86400))
def test_feature_invariants(mobile, desktop, t_mobile, t_desktop):
    fv = build_sample(StageData(t_mobile, mobile), StageData(t_desktop, desktop), ["p.example"], DB,
                      stage="A", run_index=1, session_id=1)
    fv.check()
    assert sum(fv.vectors["desktop_landing_pages"].values()) == fv.scalars["desktop_number_of_ads"]
    assert sum(fv.vectors["mobile_keywords"].values()) == fv.scalars["mobile_number_of_keywords"]


def test_two_samples_per_stage_pair(small_run, personas, category_db):
    rec, _ = small_run
    samples = list(run_samples(rec, personas[1].persona_pages, category_db))
    assert len(samples) == 2 * 2 * len(rec.sessions)  # B and A, paired and baseline
    per_key = Counter((m["session_id"], m["stage"]) for _, _, m in samples)
    assert set(per_key.values()) == {2}
    for _, label, meta in samples:
        assert label == int(meta["shares_mobile_ip"])
        assert label == (meta["device_id"] == "pc-paired")


def test_assembled_dataset(small_run, personas, category_db):
    rec, _ = small_run
    ds = assemble([rec], "1a", personas, category_db)
    assert ds.n_samples == 12
    assert ds.feature_names[:len(SCALAR_FEATURES)] == list(SCALAR_FEATURES)
    assert sorted(np.bincount(ds.y)) == [6, 6]
    assert len(set(ds.groups())) == 6
    again = assemble([rec], "1a", personas, category_db)
    assert again.digest() == ds.digest()


def test_csv_round_trip(tmp_path, small_run, personas, category_db):
    rec, _ = small_run
    ds = assemble([rec], "1a", personas, category_db)
    loaded = LabeledDataset.load(ds.save(tmp_path / "d.csv"))
    assert loaded.digest() == ds.digest()
    assert loaded.meta == ds.meta and loaded.setup_code == "1a"
    np.testing.assert_array_equal(loaded.X, ds.X)


def toy(names, rows, labels):
    X = np.zeros((len(rows), len(SCALAR_FEATURES) + len(names)))
    X[:, len(SCALAR_FEATURES):] = rows
    return LabeledDataset(X, labels, list(SCALAR_FEATURES) + names, "t")


def test_combine_union_and_zero_fill():
    a = toy(["mobile_keywords=A", "mobile_keywords=B"], [[1, 2], [3, 4]], [0, 1])
    b = toy(["mobile_keywords=B", "mobile_keywords=C"], [[5, 6]], [1])
    c = combine([a, b])
    tail = c.feature_names[len(SCALAR_FEATURES):]
    assert tail == ["mobile_keywords=A", "mobile_keywords=B", "mobile_keywords=C"]
    np.testing.assert_array_equal(c.X[:, len(SCALAR_FEATURES):], [[1, 2, 0], [3, 4, 0], [0, 5, 6]])
    np.testing.assert_array_equal(c.y, [0, 1, 1])


def test_combine_identity():
    a = toy(["mobile_keywords=A"], [[1], [0]], [0, 1])
    c = combine([a])
    np.testing.assert_array_equal(c.X, a.X)
    assert c.feature_names == a.feature_names


def test_combine_drops_persona_block_when_excluded():
    a = toy(["persona_keywords=J", "mobile_keywords=A"], [[1, 1]], [1])
    assert not any(n.startswith("persona_keywords=") for n in combine([a], include_persona_keywords=False).feature_names)


def test_combine_schema_mismatch():
    bad = LabeledDataset(np.zeros((1, 1)), [0], ["other"], "x")
    with pytest.raises(SchemaMismatch):
        combine([bad])
    with pytest.raises(SchemaMismatch):
        combine([])


def test_array_shape_mismatch():
    with pytest.raises(SchemaMismatch):
        LabeledDataset(np.zeros((2, 3)), [0], ["a", "b", "c"], "x")


def test_fixed_vocabulary_drops_unknown_terms():
    fv = sample(["a.example"], [])
    ds = to_dataset([(fv, 1, {})], "t", vocab=["mobile_keywords=Shopping"])
    assert ds.feature_names[-1] == "mobile_keywords=Shopping" and ds.X[0, -1] == 1
    assert ds.n_features == len(SCALAR_FEATURES) + 1

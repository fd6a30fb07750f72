import numpy as np
import pytest

from envrank.data import (
    Dataset,
    SampleMeta,
    load_dataset,
    rebalance_classes,
    save_dataset,
    subset_features,
)

from conftest import build_dataset


def write_feature_file(path, rows, n_features=2, with_class=False):
    header = ["sample_id", "env", "split", "label"]
    if with_class:
        header.append("class")
    header += [f"f{j}" for j in range(n_features)]
    lines = [",".join(header)]
    lines += [",".join(str(tok) for tok in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_round_trip_identity(tmp_path, rng):
    values = rng.normal(size=(8, 3))
    envs = ["a", "a", "b", "b", "a", "b", "a", "b"]
    splits = ["train"] * 4 + ["val_id", "test_id", "test_ood", "test_ood"]
    labels = ["normal"] * 5 + ["novel", "normal", "unknown"]
    ds = build_dataset(values, envs, splits, labels)
    path = tmp_path / "data.csv"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert loaded.meta == ds.meta
    np.testing.assert_array_equal(loaded.values, ds.values)


def test_save_load_save_byte_identical(tmp_path, rng):
    values = rng.normal(size=(5, 4)) * 1e-7
    ds = build_dataset(values, ["a", "b", "a", "b", "a"])
    p1, p2 = tmp_path / "one.csv", tmp_path / "two.csv"
    save_dataset(ds, p1)
    save_dataset(load_dataset(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_row_with_wrong_column_count_names_row(tmp_path):
    rows = [[f"s{i}", "a" if i % 2 else "b", "train", "normal", 0.5, 1.5] for i in range(10)]
    rows[6] = rows[6][:-1]  # data row 7 loses one feature column
    path = tmp_path / "bad.csv"
    write_feature_file(path, rows)
    with pytest.raises(ValueError, match="row 7"):
        load_dataset(path)


def test_six_row_fixture_parses_metadata(tmp_path):
    rows = [
        ["s0", "a", "train", "normal", 0.0, 1.0],
        ["s1", "b", "train", "normal", 2.0, 3.0],
        ["s2", "c", "train", "normal", 4.0, 5.0],
        ["s3", "a", "val_id", "novel", 6.0, 7.0],
        ["s4", "b", "val_id", "normal", 8.0, 9.0],
        ["s5", "c", "test_ood", "novel", 10.0, 11.0],
    ]
    path = tmp_path / "six.csv"
    write_feature_file(path, rows)
    ds = load_dataset(path)
    assert ds.n_samples == 6
    assert ds.n_features == 2
    assert ds.train_envs == ("a", "b", "c")
    expected = tuple(
        SampleMeta(r[0], r[1], r[2], r[3]) for r in rows
    )
    assert ds.meta == expected
    np.testing.assert_array_equal(ds.values, np.array([r[4:] for r in rows], float))


def test_non_finite_value_rejected(tmp_path):
    rows = [
        ["s0", "a", "train", "normal", 0.0, 1.0],
        ["s1", "b", "train", "normal", "nan", 3.0],
    ]
    path = tmp_path / "nan.csv"
    write_feature_file(path, rows)
    with pytest.raises(ValueError, match="row 2.*f0"):
        load_dataset(path)


def test_unparseable_value_names_row_and_column(tmp_path):
    rows = [
        ["s0", "a", "train", "normal", 0.0, 1.0],
        ["s1", "b", "train", "normal", 2.0, "abc"],
    ]
    path = tmp_path / "junk.csv"
    write_feature_file(path, rows)
    with pytest.raises(ValueError, match="row 2.*f1"):
        load_dataset(path)


def test_duplicate_sample_id_rejected(tmp_path):
    rows = [
        ["s0", "a", "train", "normal", 0.0, 1.0],
        ["s0", "b", "train", "normal", 2.0, 3.0],
    ]
    path = tmp_path / "dup.csv"
    write_feature_file(path, rows)
    with pytest.raises(ValueError, match="duplicate sample_id"):
        load_dataset(path)


def test_train_row_labeled_novel_rejected():
    with pytest.raises(ValueError, match="train rows must be labeled normal"):
        build_dataset(np.zeros((2, 1)), ["a", "b"], ["train", "train"], ["normal", "novel"])


def test_unknown_label_outside_test_split_rejected():
    with pytest.raises(ValueError, match="label=unknown"):
        build_dataset(
            np.zeros((3, 1)),
            ["a", "b", "a"],
            ["train", "train", "val_id"],
            ["normal", "normal", "unknown"],
        )


def test_single_train_environment_rejected():
    with pytest.raises(ValueError, match="at least 2 environments"):
        build_dataset(np.zeros((3, 1)), ["a", "a", "a"])


def test_zero_feature_dataset_rejected():
    with pytest.raises(ValueError, match="at least one feature"):
        build_dataset(np.zeros((2, 0)), ["a", "b"])


def test_one_row_dataset_needs_two_train_envs_but_file_is_two_lines(tmp_path):
    # structural check on the writer: 1 sample -> header + 1 row
    ds = build_dataset(np.array([[1.0], [2.0]]), ["a", "b"])
    path = tmp_path / "two.csv"
    save_dataset(ds, path)
    assert len(path.read_text(encoding="utf-8").splitlines()) == 3  # header + 2 rows


def test_subset_features_identity_and_order():
    values = np.arange(12, dtype=float).reshape(3, 4)
    ds = build_dataset(values, ["a", "b", "a"])
    same = subset_features(ds, np.arange(4))
    np.testing.assert_array_equal(same.values, ds.values)
    assert same.meta == ds.meta

    picked = subset_features(ds, [2, 0])
    np.testing.assert_array_equal(picked.values, values[:, [2, 0]])
    assert picked.n_features == 2


def test_subset_features_rejects_empty_and_out_of_range():
    ds = build_dataset(np.zeros((2, 3)), ["a", "b"])
    with pytest.raises(ValueError, match="non-empty"):
        subset_features(ds, [])
    with pytest.raises(ValueError, match="out of range"):
        subset_features(ds, [0, 3])
    with pytest.raises(ValueError, match="unique"):
        subset_features(ds, [1, 1])


def test_subset_matches_matrix_indexing(rng):
    values = rng.normal(size=(6, 5))
    ds = build_dataset(values, ["a", "b"] * 3)
    kept = [4, 1, 3]
    sub = subset_features(ds, kept)
    for i in range(6):
        for j, col in enumerate(kept):
            assert sub.values[i, j] == ds.values[i, col]


def _class_dataset(counts: dict[tuple[str, str], int]):
    values, envs, splits, labels, classes = [], [], [], [], []
    for (env, cls), n in sorted(counts.items()):
        for _ in range(n):
            values.append([float(len(values))])
            envs.append(env)
            splits.append("train")
            labels.append("normal")
            classes.append(cls)
    # one evaluation row per env keeps the dataset shape realistic
    for env in sorted({e for e, _ in counts}):
        values.append([0.0])
        envs.append(env)
        splits.append("test_id")
        labels.append("novel")
        classes.append("na")
    return build_dataset(np.asarray(values), envs, splits, labels, classes)


def test_rebalance_already_balanced_unchanged():
    ds = _class_dataset({("a", "x"): 10, ("a", "y"): 10, ("b", "x"): 4, ("b", "y"): 4})
    out = rebalance_classes(ds, seed=0)
    assert out.meta == ds.meta
    np.testing.assert_array_equal(out.values, ds.values)


def test_rebalance_downsamples_to_min():
    ds = _class_dataset({("a", "x"): 100, ("a", "y"): 20, ("b", "x"): 5, ("b", "y"): 5})
    out = rebalance_classes(ds, seed=0)
    counts = {}
    for m in out.meta:
        if m.split == "train":
            counts[(m.env, m.cls)] = counts.get((m.env, m.cls), 0) + 1
    assert counts == {("a", "x"): 20, ("a", "y"): 20, ("b", "x"): 5, ("b", "y"): 5}


def test_rebalance_deterministic_and_never_grows():
    ds = _class_dataset({("a", "x"): 30, ("a", "y"): 7, ("b", "x"): 9, ("b", "y"): 12})
    out1 = rebalance_classes(ds, seed=42)
    out2 = rebalance_classes(ds, seed=42)
    assert [m.sample_id for m in out1.meta] == [m.sample_id for m in out2.meta]
    kept = {m.sample_id for m in out1.meta}
    assert kept <= {m.sample_id for m in ds.meta}
    # non-train rows untouched
    before = [m for m in ds.meta if m.split != "train"]
    after = [m for m in out1.meta if m.split != "train"]
    assert before == after


def test_rebalance_without_class_column_warns_noop():
    ds = build_dataset(np.zeros((2, 1)), ["a", "b"])
    with pytest.warns(UserWarning, match="no class column"):
        out = rebalance_classes(ds, seed=0)
    assert out is ds


def test_rebalance_empty_class_in_env_errors():
    ds = _class_dataset({("a", "x"): 5, ("a", "y"): 5, ("b", "x"): 5})
    with pytest.raises(ValueError, match="has no samples of class"):
        rebalance_classes(ds, seed=0)


def test_mixed_class_presence_rejected():
    meta = (
        SampleMeta("s0", "a", "train", "normal", "x"),
        SampleMeta("s1", "b", "train", "normal", None),
    )
    with pytest.raises(ValueError, match="all rows or none"):
        Dataset(np.zeros((2, 1)), meta)

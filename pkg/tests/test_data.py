import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kalman_cl.data import (
    LabeledDataset,
    load_idx,
    parse_idx_images,
    parse_idx_labels,
    split_tasks,
    synthetic_digits,
    synthetic_split,
)
from kalman_cl.errors import ConsistencyError, ContractError, FormatError, ShapeError
from kalman_cl.network import HeadMask, accuracy, init_params, loss_and_grad


def idx_images(pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, r, c = pixels.shape
    return struct.pack(">IIII", 0x803, n, r, c) + pixels.tobytes()


def idx_labels(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x801, len(labels)) + labels.tobytes()


TWO_IMAGES = [[[0, 51, 255], [102, 0, 0], [0, 0, 204]], [[255] * 3] * 3]


def test_parse_fixture_exactly():
    x = parse_idx_images(idx_images(TWO_IMAGES))
    assert x.shape == (2, 9)
    assert x[0].tolist() == [0.0, 0.2, 1.0, 0.4, 0.0, 0.0, 0.0, 0.0, 0.8]
    assert np.all(x[1] == 1.0)
    assert parse_idx_labels(idx_labels([3, 7])).tolist() == [3, 7]


def test_load_plain_and_gzip(tmp_path):
    (tmp_path / "img").write_bytes(idx_images(TWO_IMAGES))
    with gzip.open(tmp_path / "lab.gz", "wb") as fh:
        fh.write(idx_labels([1, 9]))
    ds = load_idx(tmp_path / "img", tmp_path / "lab.gz")
    assert len(ds) == 2 and ds.dim == 9 and ds.labels.tolist() == [1, 9]


def test_count_mismatch(tmp_path):
    (tmp_path / "img").write_bytes(idx_images(TWO_IMAGES))
    (tmp_path / "lab").write_bytes(idx_labels([1, 2, 3]))
    with pytest.raises(ConsistencyError):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_label_out_of_range(tmp_path):
    (tmp_path / "img").write_bytes(idx_images(TWO_IMAGES))
    (tmp_path / "lab").write_bytes(idx_labels([1, 12]))
    with pytest.raises(ConsistencyError):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_missing_file(tmp_path):
    with pytest.raises(FormatError):
        load_idx(tmp_path / "a", tmp_path / "b")


def test_bad_magic_and_truncation():
    blob = idx_images(TWO_IMAGES)
    with pytest.raises(FormatError):
        parse_idx_images(idx_labels([1, 2]))
    with pytest.raises(FormatError):
        parse_idx_images(blob[:-1])
    with pytest.raises(FormatError):
        parse_idx_images(blob + b"\0")
    with pytest.raises(FormatError):
        parse_idx_labels(b"\0\0")


@settings(max_examples=200)
@given(st.binary(max_size=64))
def test_fuzzed_bytes_never_crash(blob):
    for parse in (parse_idx_images, parse_idx_labels):
        try:
            parse(blob)
        except FormatError:
            pass


@settings(max_examples=100)
@given(st.binary(max_size=40))
def test_fuzzed_payload_behind_valid_header(payload):
    blob = struct.pack(">IIII", 0x803, 2, 2, 2) + payload
    try:
        x = parse_idx_images(blob)
    except FormatError:
        assert len(payload) != 8
    else:
        assert x.shape == (2, 4) and np.all((x >= 0) & (x <= 1))


def test_dataset_validation():
    with pytest.raises(ShapeError):
        LabeledDataset(np.zeros((3, 2)), np.zeros(2), 2)
    with pytest.raises(ContractError):
        LabeledDataset(np.zeros((2, 2)), np.array([0, 2]), 2)
    with pytest.raises(ContractError):
        LabeledDataset(np.array([[np.nan]]), np.array([0]), 1)


def test_split_tasks_blocks():
    ds = synthetic_digits(10, 50, 16, seed=0)
    assert len(ds) == 500
    tasks = split_tasks(ds, 2)
    assert [t.active_classes for t in tasks] == [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
    for t in tasks:
        assert set(t.train.labels.tolist()) == set(t.active_classes)
        assert len(t.train) == 100 and t.mask == HeadMask(t.active_classes)
    with pytest.raises(ContractError):
        split_tasks(ds, 3)
    with pytest.raises(ContractError):
        split_tasks(ds, 0)


def test_synthetic_is_deterministic():
    a = synthetic_digits(10, 20, 16, seed=4)
    b = synthetic_digits(10, 20, 16, seed=4)
    c = synthetic_digits(10, 20, 16, seed=5)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.inputs, c.inputs)
    assert np.all((a.inputs >= 0) & (a.inputs <= 1))


def test_synthetic_preconditions():
    for bad in [(0, 5, 16), (10, 0, 16), (10, 5, 0)]:
        with pytest.raises(ContractError):
            synthetic_digits(*bad, seed=0)


def test_synthetic_split_sizes():
    train, test = synthetic_split(seed=1)
    assert len(train) == 2000 and len(test) == 500
    assert np.bincount(train.labels).tolist() == [200] * 10
    assert np.bincount(test.labels).tolist() == [50] * 10


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_small_mlp_separates_synthetic_classes(seed):
    """200 full-batch gradient steps of a one-hidden-layer MLP fit all 10 classes."""
    ds = synthetic_digits(10, 50, 16, seed=seed)
    params = init_params([16, 128, 10], seed=0)
    mask = HeadMask.all(10)
    for _ in range(200):
        _, g = loss_and_grad(params, ds.inputs, ds.labels, mask)
        params.values -= 0.3 * g
    assert accuracy(params, ds.inputs, ds.labels, mask) >= 0.99


@pytest.mark.parametrize("seed", range(5))
def test_documented_linear_margin(seed):
    """The hand-built linear scorer from the data module comment separates every class."""
    from kalman_cl import data, rng

    ds = synthetic_digits(10, 250, 16, seed)
    perm = rng.stream(seed, rng.DATA).permutation(16)  # first draw of the generator
    axes, codes = perm[:5], perm[5:10]
    pair = np.arange(10) // 2
    sign = 1.0 - 2.0 * (np.arange(10) % 2)
    scores = ds.inputs[:, codes[pair]] + sign * (ds.inputs[:, axes[pair]] - 0.5)
    own = scores[np.arange(len(ds)), ds.labels]
    scores[np.arange(len(ds)), ds.labels] = -np.inf
    margin = 2 * (data.PAIR_GAP - data.NOISE_CLIP)
    assert np.all(own - scores.max(axis=1) >= margin - 1e-12)


@pytest.mark.parametrize("classes,dim", [(3, 2), (7, 3), (10, 4), (1, 1)])
def test_synthetic_low_dim_keeps_pair_split(classes, dim):
    ds = synthetic_digits(classes, 30, dim, seed=0)
    assert len(ds) == 30 * classes and np.all((ds.inputs >= 0) & (ds.inputs <= 1))

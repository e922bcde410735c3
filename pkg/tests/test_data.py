import numpy as np
import pytest
from hypothesis import given, strategies as st

from xsep import data as D
from xsep.errors import DataError, FormatError, ParameterError
from xsep.tensor import Rng, load_tensor


def test_xlbl_single_round_trip_and_header():
    labels = np.array([3, 0, 9, 9, 1])
    blob = D.encode_labels(labels, 10)
    assert blob[:4] == b"XLBL" and blob[4] == 1 and blob[5] == 0
    assert int.from_bytes(blob[6:10], "little") == 5
    assert int.from_bytes(blob[10:14], "little") == 10
    assert len(blob) == 14 + 4 * 5
    out, k = D.decode_labels(blob)
    assert k == 10 and np.array_equal(out, labels)


@given(st.integers(0, 10**6), st.integers(1, 20), st.integers(1, 12))
def test_xlbl_multi_round_trip(seed, n, k):
    m = (Rng(seed).random((n, k)) < 0.3).astype(np.uint8)
    out, kk = D.decode_labels(D.encode_labels(m, k))
    assert kk == k and np.array_equal(out, m)


@pytest.mark.parametrize("mutate", [
    lambda b: b[:10],
    lambda b: b"XLBX" + b[4:],
    lambda b: b[:4] + b"\x02" + b[5:],
    lambda b: b[:5] + b"\x07" + b[6:],
    lambda b: b[:-1],
    lambda b: b + b"\x00",
])
def test_xlbl_corruption(mutate):
    with pytest.raises(FormatError):
        D.decode_labels(mutate(D.encode_labels(np.array([1, 2, 3]), 4)))


def test_class_weights_file(tmp_path):
    p = tmp_path / "w.txt"
    p.write_text("# weights\n0 1.5\n\n3 2  # trailing comment\n")
    assert D.load_class_weights(p, 4).tolist() == [1.5, 0, 0, 2]
    D.save_class_weights(p, [0.25, 1, 3])
    assert D.load_class_weights(p, 3).tolist() == [0.25, 1, 3]
    p.write_text("5 1.0\n")
    with pytest.raises(DataError):
        D.load_class_weights(p, 4)
    p.write_text("1 2 3\n")
    with pytest.raises(FormatError):
        D.load_class_weights(p, 4)


def test_dataset_file_round_trip(tmp_path):
    ds = D.synth_dataset(4, 12, 8, 3)
    D.save_dataset(ds, tmp_path / "i.xtsr", tmp_path / "l.xlbl")
    again = D.load_dataset(tmp_path / "i.xtsr", tmp_path / "l.xlbl", "val")
    assert np.array_equal(again.images, ds.images) and np.array_equal(again.labels, ds.labels)
    assert again.split == "val" and again.task == D.SINGLE


def test_u8_images_are_scaled(tmp_path):
    from xsep.tensor import save_tensor
    save_tensor(tmp_path / "i.xtsr", np.full((2, 1, 2, 2), 255, np.uint8))
    D.save_labels(tmp_path / "l.xlbl", np.array([0, 1]), 2)
    ds = D.load_dataset(tmp_path / "i.xtsr", tmp_path / "l.xlbl")
    assert ds.images.dtype == np.float32 and np.all(ds.images == 1.0)
    assert load_tensor(tmp_path / "i.xtsr").dtype == np.uint8


def test_dataset_validation():
    img = np.zeros((3, 1, 2, 2), np.float32)
    with pytest.raises(DataError):
        D.Dataset(img, np.array([0, 1]), 2)
    with pytest.raises(DataError):
        D.Dataset(img, np.array([0, 1, 2]), 2)
    with pytest.raises(DataError):
        D.Dataset(img, np.zeros((3, 4)), 2)
    with pytest.raises(DataError):
        D.Dataset(img[0], np.array([0]), 2)
    with pytest.raises(DataError):
        D.Dataset(img, np.array([0, 1, 1]), 2, class_weights=np.ones(3))


def test_synth_deterministic_and_balanced():
    a = D.synth_dataset(10, 1000, 32, 7)
    b = D.synth_dataset(10, 1000, 32, 7)
    assert a.images.shape == (1000, 3, 32, 32) and a.images.dtype == np.float32
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert np.bincount(a.labels, minlength=10).tolist() == [100] * 10
    assert not np.array_equal(D.synth_dataset(10, 1000, 32, 8).images, a.images)


def test_synth_classes_are_separable_without_noise():
    ds = D.synth_dataset(6, 240, 16, 1, noise=0.0)
    means = np.stack([ds.images[ds.labels == c].mean(axis=0) for c in range(6)])
    # the per-pixel power spectrum of each class mean peaks at a distinct location
    spectra = np.abs(np.fft.fft2(ds.images)).mean(axis=1)
    peaks = {c: int(np.argmax(spectra[ds.labels == c].mean(axis=0)[:, 1:].ravel()))
             for c in range(6)}
    assert len(set(peaks.values())) == 6
    assert means.shape == (6, 3, 16, 16)


def test_synth_multi_label():
    ds = D.synth_dataset(5, 50, 8, 2, multi_label=True, max_labels=3)
    counts = ds.labels.sum(axis=1)
    assert ds.task == D.MULTI and counts.min() >= 1 and counts.max() <= 3
    with pytest.raises(ParameterError):
        D.synth_dataset(0, 5, 8, 0)


def test_batch_sizes_and_errors():
    ds = D.synth_dataset(2, 10, 4, 0)
    assert [len(x) for x, _ in D.batch_iter(ds, 4)] == [4, 4, 2]
    with pytest.raises(ParameterError):
        list(D.batch_indices(10, 0))


def test_epoch_permutations_differ_and_repeat():
    a0 = D.epoch_permutation(50, 7, 0)
    assert not np.array_equal(a0, D.epoch_permutation(50, 7, 1))
    assert np.array_equal(a0, D.epoch_permutation(50, 7, 0))
    assert np.array_equal(D.epoch_permutation(5, None, 3), np.arange(5))


@given(st.integers(1, 200), st.integers(1, 64), st.integers(0, 2**32), st.integers(0, 20))
def test_batches_partition_the_dataset(n, batch, seed, epoch):
    batches = list(D.batch_indices(n, batch, seed, epoch))
    assert all(1 <= len(b) <= batch for b in batches)
    assert sorted(np.concatenate(batches).tolist()) == list(range(n))

import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xsep import tensor as T
from xsep.errors import FormatError, ParameterError, ShapeError, SizeError

# First 16 outputs for seed 42, produced once by the scalar reference
# implementation and frozen here.
SEED42_GOLDEN = [
    0xBDD732262FEB6E95, 0x28EFE333B266F103, 0x47526757130F9F52, 0x581CE1FF0E4AE394,
    0x09BC585A244823F2, 0xDE4431FA3C80DB06, 0x37E9671C45376D5D, 0xCCF635EE9E9E2FA4,
    0x5705B8770B3D7DD5, 0x9E54D738297F77AE, 0x3474724A775B19BF, 0x7E348A0E451650BE,
    0x836DED897F3E46E6, 0x851F977347ED6DB7, 0xAA47E31C02E78EDC, 0x341452C54D7C33F2,
]


def test_rng_golden_seed42():
    assert [int(v) for v in T.Rng(42).next_u64(16)] == SEED42_GOLDEN


def test_rng_matches_published_reference_vector():
    # widely circulated splitmix64 outputs for seed 1234567
    expected = [6457827717110365317, 3203168211198807973, 9817491932198370423,
                4593380528125082431, 16408922859458223821]
    assert [int(v) for v in T.Rng(1234567).next_u64(5)] == expected


def test_vectorised_stream_equals_scalar_reference():
    state, ref = 987654321, []
    for _ in range(100):
        state, out = T.splitmix64_scalar(state)
        ref.append(out)
    assert [int(v) for v in T.Rng(987654321).next_u64(100)] == ref


def test_rng_chunking_does_not_change_stream():
    a = T.Rng(5)
    chunks = np.concatenate([a.next_u64(3), a.next_u64(10), a.next_u64(1)])
    assert np.array_equal(chunks, T.Rng(5).next_u64(14))


def test_rng_floats_and_permutation():
    r = T.Rng(3)
    u = r.random(10000)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    p = T.Rng(3).permutation(50)
    assert sorted(p.tolist()) == list(range(50))
    z = T.Rng(9).normal(20000)
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03


def test_constructors():
    assert np.array_equal(T.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 2)))
    assert np.all(T.fill((1, 2, 1, 1), 3.5) == 3.5)
    assert T.ones((2, 3, 4, 5)).sum() == 120
    with pytest.raises(ShapeError):
        T.zeros((1, 0, 2, 2))
    with pytest.raises(ShapeError):
        T.zeros((2, 2, 2))
    with pytest.raises(SizeError):
        T.zeros((2**20, 2**20, 2**20, 2**20))


@given(st.tuples(*[st.integers(1, 5)] * 4), st.data())
def test_offset_formula_round_trips(dims, data):
    x = np.zeros(dims)
    idx = tuple(data.draw(st.integers(0, d - 1)) for d in dims)
    x.reshape(-1)[T.offset(dims, idx)] = 7.0
    assert x[idx] == 7.0
    assert np.count_nonzero(x) == 1


def test_glorot_bounds_and_variance():
    w = T.glorot_uniform((4, 3, 1, 1), 3, 3, T.Rng(1))
    assert np.all(np.abs(w) <= 1.0)
    assert np.array_equal(w, T.glorot_uniform((4, 3, 1, 1), 3, 3, T.Rng(1)))
    big = T.glorot_uniform((100000, 1, 1, 1), 600, 600, T.Rng(2), np.float64)
    target = (6 / 1200) / 3
    assert abs(big.var() - target) < 0.1 * target


def test_elementwise_ops():
    assert T.elu(np.array([0.0]))[0] == 0.0
    assert abs(T.elu(np.array([-1.0]))[0] - (np.exp(-1) - 1)) < 1e-12
    assert T.elu(np.array([-50.0]))[0] == pytest.approx(-1.0)
    x = T.Rng(0).normal((2, 3, 4, 4))
    assert np.array_equal(T.add(x, -x), np.zeros_like(x))
    with pytest.raises(ShapeError):
        T.add(x, x[:, :2])
    assert np.array_equal(T.relu(np.array([-1.0, 2.0])), [0.0, 2.0])


@given(st.integers(0, 2**31))
def test_f32_and_f64_ops_agree(seed):
    x64 = T.Rng(seed).uniform(-10, 10, (2, 3, 4, 4))
    x32 = x64.astype(np.float32)
    for fn in (T.relu, T.elu):
        a, b = fn(x64), fn(x32).astype(np.float64)
        assert np.max(np.abs(a - b)) <= 1e-5 * max(np.max(np.abs(a)), 1.0)
    assert abs(T.tsum(x32) - T.tsum(x64)) <= 1e-5 * np.abs(x64).sum()


@pytest.mark.parametrize("dtype", [np.float32, np.float64, np.uint8])
def test_xtsr_round_trip_is_bit_exact(tmp_path, dtype):
    x = (T.Rng(4).uniform(0, 200, (2, 3, 4, 5))).astype(dtype)
    path = tmp_path / "x.xtsr"
    T.save_tensor(path, x)
    y = T.load_tensor(path)
    assert y.dtype == x.dtype and np.array_equal(x, y)
    T.save_tensor(tmp_path / "y.xtsr", y)
    assert path.read_bytes() == (tmp_path / "y.xtsr").read_bytes()


def test_xtsr_header_layout():
    blob = T.encode_tensor(np.ones((1, 2, 1, 1), np.float32))
    assert blob[:4] == b"XTSR"
    assert blob[4:8] == bytes([1, 0, 4, 0])
    assert np.frombuffer(blob[8:24], "<u4").tolist() == [1, 2, 1, 1]
    assert len(blob) == 24 + 8


def test_xtsr_rejects_corruption():
    blob = T.encode_tensor(np.ones((1, 1, 2, 2), np.float64))
    with pytest.raises(FormatError):
        T.decode_tensor(b"XTSQ" + blob[4:])
    with pytest.raises(FormatError):
        T.decode_tensor(blob[:4] + bytes([2]) + blob[5:])
    with pytest.raises(FormatError):
        T.decode_tensor(blob[:5] + bytes([9]) + blob[6:])
    with pytest.raises(FormatError):
        T.decode_tensor(blob[:-1])
    with pytest.raises(FormatError):
        T.read_tensor_from(io.BytesIO(b""))


def test_rng_integers_range():
    v = T.Rng(11).integers(7, 1000)
    assert v.min() == 0 and v.max() == 6
    with pytest.raises(ParameterError):
        T.glorot_uniform((1, 1, 1, 1), 0, 1, T.Rng(0))

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xsep import equiv as E
from xsep.tensor import Rng


@pytest.mark.parametrize("check", E.CHECKS)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_checks_pass_tightly(check, seed):
    report = E.run_equiv(check, seed, 20)
    assert len(report.instances) == 20
    assert report.max_deviation < 1e-5
    assert report.worst.deviation == report.max_deviation


def test_deterministic_per_seed():
    a = E.run_equiv("inception-reformulation", 5, 5)
    b = E.run_equiv("inception-reformulation", 5, 5)
    assert a == b


def test_relative_deviation():
    assert E.relative_deviation(np.zeros(3), np.zeros(3)) == 0.0
    assert E.relative_deviation(np.array([2.0, 0.0]), np.array([1.0, 0.0])) == 0.5


@given(st.integers(0, 2**40))
def test_spectrum_instance_property(seed):
    assert E.spectrum_instance(Rng(seed)).deviation < 1e-10


def test_unknown_check():
    with pytest.raises(ValueError):
        E.run_equiv("nope", 0)

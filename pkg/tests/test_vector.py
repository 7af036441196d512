import numpy as np
import pytest

from rosdhb.errors import DimensionMismatch, RosdhbError
from rosdhb.vector import RngStream, as_vector, axpy, derive_stream, squared_norm


def test_as_vector_checks():
    assert as_vector([1, 2, 3]).dtype == np.float64
    with pytest.raises(DimensionMismatch):
        as_vector([1.0, 2.0], dim=3)
    for bad in ([], [[1.0]], [np.nan], [np.inf]):
        with pytest.raises(RosdhbError):
            as_vector(bad)


def test_axpy_and_norm():
    x = np.array([1.0, -2.0])
    y = np.array([0.5, 0.5])
    np.testing.assert_array_equal(axpy(2.0, x, y), [2.5, -3.5])
    assert squared_norm(x) == 5.0
    with pytest.raises(RosdhbError):
        axpy(np.nan, x, y)
    with pytest.raises(DimensionMismatch):
        axpy(1.0, x, np.zeros(3))


def test_streams_reproducible_and_distinct():
    a = RngStream(7, 3).normal(5)
    b = RngStream(7, 3).normal(5)
    c = RngStream(7, 4).normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_derived_streams_depend_on_label_only():
    master = RngStream(11)
    master.normal(100)  # consuming the master must not shift children
    x = derive_stream(master, "mask/3").uniform(4)
    y = derive_stream(RngStream(11), "mask/3").uniform(4)
    z = derive_stream(RngStream(11), "mask/4").uniform(4)
    np.testing.assert_array_equal(x, y)
    assert not np.array_equal(x, z)

import numpy as np
import pytest

from gridcast.exception import ShapeMismatchException
from gridcast.numeric import (
    as_matrix,
    global_l2_norm,
    hadamard,
    map_sigmoid,
    map_tanh,
    matmul,
    seeded_rng,
    uniform_init,
    zeros,
)


def test_seeded_rng_is_reproducible() -> None:
    a = seeded_rng(42).uniform(size=8)
    b = seeded_rng(42).uniform(size=8)
    c = seeded_rng(43).uniform(size=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seeded_rng_rejects_out_of_range_seed(seed: int) -> None:
    with pytest.raises(ValueError):
        seeded_rng(seed)


def test_as_matrix_shapes() -> None:
    assert (1, 1) == as_matrix(3.0).shape
    assert (1, 3) == as_matrix([1, 2, 3]).shape
    assert (2, 2) == as_matrix([[1, 2], [3, 4]]).shape
    assert np.float64 == as_matrix([1, 2]).dtype


def test_as_matrix_rejects_empty() -> None:
    with pytest.raises(ShapeMismatchException):
        as_matrix([])


def test_zeros() -> None:
    m = zeros(2, 3)
    assert (2, 3) == m.shape
    assert not m.any()


def test_matmul() -> None:
    a = np.array([[1.0, 2.0]])
    b = np.array([[3.0], [4.0]])
    assert [[11.0]] == matmul(a, b).tolist()


def test_matmul_shape_mismatch_names_both_shapes() -> None:
    with pytest.raises(ShapeMismatchException, match=r"\(1, 2\).*\(3, 1\)"):
        matmul(np.zeros((1, 2)), np.zeros((3, 1)))


def test_shape_mismatch_is_a_value_error() -> None:
    with pytest.raises(ValueError):
        matmul(np.zeros((1, 2)), np.zeros((3, 1)))


def test_sigmoid_is_stable_at_extremes() -> None:
    out = map_sigmoid(np.array([[-1000.0, 0.0, 1000.0]]))
    assert np.isfinite(out).all()
    assert [0.0, 0.5, 1.0] == pytest.approx(out[0].tolist())


def test_sigmoid_symmetry() -> None:
    x = np.linspace(-8, 8, 17).reshape(1, -1)
    assert np.allclose(map_sigmoid(x) + map_sigmoid(-x), 1.0)


def test_tanh() -> None:
    x = np.array([[-2.0, 0.0, 0.5]])
    assert np.array_equal(np.tanh(x), map_tanh(x))


def test_hadamard() -> None:
    a = np.array([[1.0, 2.0]])
    b = np.array([[3.0, 4.0]])
    assert [[3.0, 8.0]] == hadamard(a, b).tolist()
    with pytest.raises(ShapeMismatchException):
        hadamard(a, np.zeros((2, 1)))


def test_global_l2_norm() -> None:
    assert 5.0 == global_l2_norm([np.array([[3.0, 4.0]])])
    assert 0.0 == global_l2_norm([])


def test_global_l2_norm_is_order_invariant() -> None:
    rng = seeded_rng(7)
    tensors = [rng.standard_normal((3, 4)) * 10.0**k for k in range(-5, 6)]
    assert global_l2_norm(tensors) == global_l2_norm(list(reversed(tensors)))


def test_uniform_init_range() -> None:
    m = uniform_init(20, 30, 0.08, seeded_rng(0))
    assert (20, 30) == m.shape
    assert (np.abs(m) <= 0.08).all()
    with pytest.raises(ValueError):
        uniform_init(2, 2, 0.0, seeded_rng(0))


def test_matmul_matches_triple_loop() -> None:
    rng = seeded_rng(11)
    a = rng.uniform(-1, 1, (5, 7))
    b = rng.uniform(-1, 1, (7, 3))
    expected = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                expected[i, j] += a[i, k] * b[k, j]
    assert np.allclose(expected, matmul(a, b), rtol=0.0, atol=1e-12)


def test_matmul_is_associative() -> None:
    rng = seeded_rng(12)
    a = rng.uniform(-1, 1, (4, 6))
    b = rng.uniform(-1, 1, (6, 5))
    c = rng.uniform(-1, 1, (5, 2))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.allclose(left, right, rtol=0.0, atol=1e-9)


def test_squashing_bounds_and_monotonicity() -> None:
    x = np.linspace(-10.0, 10.0, 201).reshape(1, -1)
    s = map_sigmoid(x)
    t = map_tanh(x)
    assert ((0.0 < s) & (s < 1.0)).all()
    assert ((-1.0 < t) & (t < 1.0)).all()
    assert (np.diff(s) > 0).all()
    assert (np.diff(t) > 0).all()


def test_uniform_init_is_centred() -> None:
    m = uniform_init(100, 100, 0.08, seeded_rng(5))
    assert abs(m.mean()) <= 0.01
    assert m.min() < -0.07
    assert m.max() > 0.07

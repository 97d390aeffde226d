"""Every tape operation against central finite differences."""

import numpy as np
import pytest

from sawreader import autodiff as ad
from sawreader.autodiff import Tensor


def _weighted_sum(t, weights):
    """Collapse any tensor to a scalar with fixed weights; keeps the output
    gradient non-uniform so transposed or misrouted gradients get caught."""
    flat = t if t.ndim == 1 else ad.reshape(t, (t.data.size,))
    w = Tensor(np.asarray(weights, dtype=np.float64).reshape(-1))
    return ad.sum_at(ad.mul(flat, w), np.arange(flat.data.size))


def _check_grads(objective, leaves, eps=1e-6, tol=1e-7):
    """Max relative error between backward() and central differences.

    The objective must be deterministic: it is re-evaluated many times.
    """
    for t in leaves:
        t.grad = None
    out = objective()
    out.backward()
    analytic = [
        np.array(t.grad) if t.grad is not None else np.zeros_like(t.data)
        for t in leaves
    ]
    worst = 0.0
    with ad.no_grad():
        for t, a in zip(leaves, analytic):
            flat = t.data.reshape(-1)
            a_flat = a.reshape(-1)
            for j in range(flat.size):
                saved = flat[j]
                flat[j] = saved + eps
                f_plus = float(objective().data)
                flat[j] = saved - eps
                f_minus = float(objective().data)
                flat[j] = saved
                numeric = (f_plus - f_minus) / (2.0 * eps)
                denom = max(abs(a_flat[j]), abs(numeric), 1e-8)
                worst = max(worst, abs(a_flat[j] - numeric) / denom)
    assert worst < tol, f"max relative error {worst}"


def _leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


RNG = np.random.default_rng(42)


def _fixed(n):
    return RNG.standard_normal(n)


def test_add_sub_mul_neg_scale_grads():
    a = _leaf(RNG, 3, 2)
    b = _leaf(RNG, 3, 2)
    w = _fixed(6)
    _check_grads(lambda: _weighted_sum(ad.add(a, b), w), [a, b])
    _check_grads(lambda: _weighted_sum(ad.sub(a, b), w), [a, b])
    _check_grads(lambda: _weighted_sum(ad.mul(a, b), w), [a, b])
    _check_grads(lambda: _weighted_sum(ad.neg(a), w), [a])
    _check_grads(lambda: _weighted_sum(ad.scale(a, -1.7), w), [a])


def test_elementwise_shape_mismatch():
    a = Tensor(np.zeros((2, 2)))
    b = Tensor(np.zeros((2, 3)))
    for op in (ad.add, ad.sub, ad.mul):
        with pytest.raises(ValueError, match="shape mismatch"):
            op(a, b)


def test_matmul_grads_and_errors():
    a = _leaf(RNG, 3, 4)
    b = _leaf(RNG, 4, 2)
    v = _leaf(RNG, 4)
    w6, w3 = _fixed(6), _fixed(3)
    _check_grads(lambda: _weighted_sum(ad.matmul(a, b), w6), [a, b])
    _check_grads(lambda: _weighted_sum(ad.matmul(a, v), w3), [a, v])
    with pytest.raises(ValueError, match="inner dim"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(ValueError, match="unsupported ranks"):
        ad.matmul(Tensor(np.zeros(3)), Tensor(np.zeros(3)))


def test_affine_matches_manual_and_grads():
    x = _leaf(RNG, 5, 3)
    w = _leaf(RNG, 2, 3)
    b = _leaf(RNG, 2)
    out = ad.affine(x, w, b)
    assert np.allclose(out.data, x.data @ w.data.T + b.data, atol=1e-15)
    w10 = _fixed(10)
    _check_grads(lambda: _weighted_sum(ad.affine(x, w, b), w10), [x, w, b])
    with pytest.raises(ValueError, match="shape mismatch"):
        ad.affine(x, w, Tensor(np.zeros(3)))


def test_transpose_grads():
    a = _leaf(RNG, 2, 5)
    w = _fixed(10)
    _check_grads(lambda: _weighted_sum(ad.transpose(a), w), [a])


def test_sigmoid_values_and_stability():
    x = Tensor(np.array([0.0, -1000.0, 1000.0]))
    y = ad.sigmoid(x)
    assert np.isfinite(y.data).all()
    assert y.data[0] == pytest.approx(0.5)
    assert y.data[1] == pytest.approx(0.0, abs=1e-12)
    assert y.data[2] == pytest.approx(1.0, abs=1e-12)


def test_sigmoid_tanh_grads():
    a = _leaf(RNG, 7)
    w = _fixed(7)
    _check_grads(lambda: _weighted_sum(ad.sigmoid(a), w), [a])
    _check_grads(lambda: _weighted_sum(ad.tanh(a), w), [a])


def test_softmax_known_values():
    # softmax([0, ln 2]) = [1/3, 2/3]
    y = ad.softmax(Tensor(np.array([0.0, np.log(2.0)])))
    assert np.allclose(y.data, [1 / 3, 2 / 3], atol=1e-12)
    # shift invariance keeps large inputs stable
    y = ad.softmax(Tensor(np.array([1000.0, 1000.0])))
    assert np.allclose(y.data, [0.5, 0.5], atol=1e-12)


def test_softmax_rows_and_grads():
    a = _leaf(RNG, 3, 4)
    y = ad.softmax(a)
    assert np.allclose(y.data.sum(axis=1), 1.0, atol=1e-12)
    w12 = _fixed(12)
    _check_grads(lambda: _weighted_sum(ad.softmax(a), w12), [a])
    v = _leaf(RNG, 5)
    w5 = _fixed(5)
    _check_grads(lambda: _weighted_sum(ad.softmax(v), w5), [v])


def test_softmax_rejects_nan_and_bad_rank():
    with pytest.raises(ValueError, match="NaN"):
        ad.softmax(Tensor(np.array([1.0, np.nan])))
    with pytest.raises(ValueError, match="1-D or 2-D"):
        ad.softmax(Tensor(np.zeros((2, 2, 2))))


def test_concat_grads_both_axes():
    a = _leaf(RNG, 2, 3)
    b = _leaf(RNG, 4, 3)
    c = _leaf(RNG, 2, 2)
    w18, w10 = _fixed(18), _fixed(10)
    _check_grads(lambda: _weighted_sum(ad.concat([a, b], axis=0), w18), [a, b])
    _check_grads(lambda: _weighted_sum(ad.concat([a, c], axis=1), w10), [a, c])
    with pytest.raises(ValueError, match="empty"):
        ad.concat([])


def test_stack_rows_grads():
    a = _leaf(RNG, 4)
    b = _leaf(RNG, 4)
    w = _fixed(8)
    _check_grads(lambda: _weighted_sum(ad.stack_rows([a, b]), w), [a, b])


def test_reshape_grads():
    a = _leaf(RNG, 2, 6)
    w = _fixed(12)
    _check_grads(lambda: _weighted_sum(ad.reshape(a, (3, 4)), w), [a])


def test_gather_rows_accumulates_duplicates():
    table = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    out = ad.sum_at(ad.reshape(ad.gather_rows(table, [0, 0, 2]), (6,)), range(6))
    out.backward()
    assert np.array_equal(table.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])


def test_gather_rows_grads():
    table = _leaf(RNG, 4, 3)
    w = _fixed(12)
    _check_grads(
        lambda: _weighted_sum(ad.gather_rows(table, [1, 1, 3, 0]), w), [table]
    )


def test_take_row_and_slices():
    a = _leaf(RNG, 4, 3)
    w3 = _fixed(3)
    _check_grads(lambda: _weighted_sum(ad.take_row(a, 2), w3), [a])
    with pytest.raises(ValueError, match="out of range"):
        ad.take_row(a, 4)
    v = _leaf(RNG, 6)
    w3b = _fixed(3)
    _check_grads(lambda: _weighted_sum(ad.slice1d(v, 1, 4), w3b), [v])


def test_pad_stack_values_and_grads():
    a = _leaf(RNG, 2, 3)
    b = _leaf(RNG, 4, 3)
    out, lengths = ad.pad_stack([a, b])
    assert out.shape == (2, 4, 3)
    assert lengths.tolist() == [2, 4]
    assert np.array_equal(out.data[0, 2:], np.zeros((2, 3)))

    w = _fixed(24)

    def objective():
        stacked, _ = ad.pad_stack([a, b])
        return _weighted_sum(stacked, w)

    _check_grads(objective, [a, b])
    with pytest.raises(ValueError, match="equal width"):
        ad.pad_stack([a, Tensor(np.zeros((2, 4)))])
    with pytest.raises(ValueError, match="at least one row"):
        ad.pad_stack([Tensor(np.zeros((0, 3)))])


def test_slice_rows_grads():
    a = _leaf(RNG, 2, 4, 3)
    w = _fixed(6)
    _check_grads(lambda: _weighted_sum(ad.slice_rows(a, 1, 2), w), [a])


def test_sum_at_duplicate_indices():
    p = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    out = ad.sum_at(p, [0, 0, 2])
    assert out.item() == pytest.approx(5.0)
    out.backward()
    assert np.array_equal(p.grad, [2.0, 0.0, 1.0])


def test_log_floored_gradient_and_floor():
    x = Tensor(np.array(0.25), requires_grad=True)
    out = ad.log_floored(x)
    out.backward()
    assert out.item() == pytest.approx(np.log(0.25))
    assert x.grad == pytest.approx(4.0)
    below = Tensor(np.array(1e-30), requires_grad=True)
    out = ad.log_floored(below)
    out.backward()
    assert out.item() == pytest.approx(np.log(1e-12))
    assert below.grad is None or below.grad == 0.0


def test_mean_of_grads():
    xs = [Tensor(np.array(float(i)), requires_grad=True) for i in range(4)]
    out = ad.mean_of(xs)
    assert out.item() == pytest.approx(1.5)
    out.backward()
    for x in xs:
        assert x.grad == pytest.approx(0.25)


def test_backward_requires_scalar():
    t = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        t.backward()


def test_no_grad_disables_recording():
    a = Tensor(np.ones(2), requires_grad=True)
    with ad.no_grad():
        assert not ad.grad_enabled()
        out = ad.mul(a, a)
        assert out._parents == ()
        assert not out.requires_grad
        with ad.no_grad():
            pass
        assert not ad.grad_enabled()  # nesting restores the inner save
    assert ad.grad_enabled()


def test_untracked_inputs_build_no_graph():
    a = Tensor(np.ones(2))
    out = ad.add(a, Tensor(np.ones(2)))
    assert out._parents == () and out._backward is None


def test_deep_chain_backward_is_iterative():
    # a recursive topological sort would blow the interpreter stack here
    x = Tensor(np.array(1.0), requires_grad=True)
    node = x
    for _ in range(5000):
        node = ad.scale(node, 1.0)
    node.backward()
    assert x.grad == pytest.approx(1.0)


def test_grad_accumulates_across_backward_calls():
    x = Tensor(np.array(2.0), requires_grad=True)
    ad.scale(x, 3.0).backward()
    ad.scale(x, 3.0).backward()
    assert x.grad == pytest.approx(6.0)
    x.zero_grad()
    assert x.grad is None

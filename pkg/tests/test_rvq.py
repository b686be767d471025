import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionlift import ndgrad as ng
from motionlift.rvq import (
    Codebook,
    CodebookStack,
    codebook_update,
    decode_tokens,
    quantize_rvq,
    rvq_apply,
    straight_through,
)


def stack_from(*levels):
    return CodebookStack([Codebook(np.asarray(e, dtype=float)) for e in levels])


def test_exact_hit_single_level():
    st1 = stack_from([[0.0, 0.0], [2.0, 2.0]])
    res = quantize_rvq(np.array([[2.0, 2.0]]), st1)
    np.testing.assert_array_equal(res.q_sum, [[2.0, 2.0]])
    np.testing.assert_array_equal(res.final_residual, [[0.0, 0.0]])


def test_nearest_and_residual():
    st1 = stack_from([[0.0, 0.0], [2.0, 2.0]])
    res = quantize_rvq(np.array([[1.9, 2.2]]), st1)
    assert res.tokens[0, 0] == 1
    np.testing.assert_allclose(res.final_residual, [[-0.1, 0.2]], atol=1e-12)


def test_two_level_telescoping_exact():
    st2 = stack_from([[0.0, 0.0], [2.0, 2.0]], [[-0.1, 0.2], [5.0, 5.0]])
    res = quantize_rvq(np.array([[1.9, 2.2]]), st2)
    np.testing.assert_allclose(res.q_sum, [[1.9, 2.2]], atol=1e-12)


def test_empty_codebook_rejected():
    with pytest.raises(ValueError):
        Codebook(np.zeros((0, 2)))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_telescoping_identity(seed):
    rng = np.random.default_rng(seed)
    levels = [Codebook(rng.normal(size=(8, 4))) for _ in range(3)]
    stack = CodebookStack(levels)
    z = rng.normal(size=(5, 4))
    res = quantize_rvq(z, stack)
    recon = sum(res.quantized) + res.final_residual
    np.testing.assert_allclose(recon, z, atol=1e-10)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_nearest_matches_exhaustive_scan(seed):
    rng = np.random.default_rng(seed)
    cb = Codebook(rng.normal(size=(16, 3)))
    x = rng.normal(size=(10, 3))
    idx = cb.nearest(x)
    for i in range(10):
        dists = ((x[i] - cb.entries) ** 2).sum(axis=1)
        assert idx[i] == int(dists.argmin())


def test_tie_breaks_to_lowest_index():
    cb = Codebook(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert cb.nearest(np.array([[0.0, 0.0]]))[0] == 0


def test_decode_inverts_quantize():
    rng = np.random.default_rng(9)
    stack = CodebookStack([Codebook(rng.normal(size=(8, 4))) for _ in range(4)])
    z = rng.normal(size=(6, 4))
    res = quantize_rvq(z, stack)
    np.testing.assert_array_equal(decode_tokens(res.tokens, stack), res.q_sum)


def test_decode_all_zero_tokens():
    rng = np.random.default_rng(10)
    stack = CodebookStack([Codebook(rng.normal(size=(4, 2))) for _ in range(3)])
    out = decode_tokens(np.zeros((2, 3), dtype=int), stack)
    expect = sum(cb.entries[0] for cb in stack.levels)
    np.testing.assert_allclose(out, np.tile(expect, (2, 1)))


def test_decode_rejects_bad_index():
    stack = stack_from([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(ValueError, match="out of range"):
        decode_tokens(np.array([[5]]), stack)


def test_quantize_idempotent_on_lattice():
    stack = stack_from([[0.0, 0.0], [2.0, 2.0]], [[0.0, 0.0], [0.5, -0.5]])
    z = np.array([[2.5, 1.5]])  # exactly entry(1)+entry(1)
    res = quantize_rvq(z, stack)
    res2 = quantize_rvq(res.q_sum, stack)
    np.testing.assert_array_equal(res2.q_sum, res.q_sum)


def test_straight_through_forward_and_grad():
    z = ng.param(np.array([[1.0, 2.0]]))
    q = np.array([[0.5, 2.5]])
    out = straight_through(z, q)
    np.testing.assert_array_equal(out.data, q)
    ng.sum_all(out).backward()
    np.testing.assert_array_equal(z.grad, np.ones((1, 2)))


def test_straight_through_gradcheck_surrogate():
    # the defined gradient of loss(st(z)) w.r.t. z equals dloss/dq at q fixed
    rng = np.random.default_rng(11)
    q = rng.normal(size=(3, 2))
    target = rng.normal(size=(3, 2))
    z = ng.param(rng.normal(size=(3, 2)))
    out = ng.mse(straight_through(z, q), ng.tensor(target))
    out.backward()
    np.testing.assert_allclose(z.grad, 2.0 * (q - target) / q.size, atol=1e-12)


def test_commitment_zero_when_exact():
    stack = stack_from([[1.0, 1.0], [2.0, 2.0]])
    z = ng.param(np.array([[1.0, 1.0], [2.0, 2.0]]))
    _, _, commit, _ = rvq_apply(z, stack)
    assert float(commit.data) == 0.0


def test_commitment_hand_value():
    # L=1, r=(1,0), q=(0,0): mean over 2 dims = 0.5
    stack = stack_from([[0.0, 0.0], [9.0, 9.0]])
    z = ng.param(np.array([[1.0, 0.0]]))
    _, _, commit, _ = rvq_apply(z, stack)
    assert float(commit.data) == pytest.approx(0.5)


def test_commitment_nonnegative():
    rng = np.random.default_rng(12)
    stack = CodebookStack([Codebook(rng.normal(size=(4, 3))) for _ in range(2)])
    z = ng.param(rng.normal(size=(5, 3)))
    _, _, commit, _ = rvq_apply(z, stack)
    assert float(commit.data) >= 0.0


def test_ema_no_assignment_keeps_entries():
    rng = np.random.default_rng(13)
    cb = Codebook(np.array([[0.0, 0.0], [10.0, 10.0]]))
    stack = CodebookStack([cb])
    before = cb.entries.copy()
    residuals = [np.array([[0.1, -0.1]])]
    tokens = np.array([[0]])
    codebook_update(stack, residuals, tokens, rng, decay=0.5, reset_threshold=0.0)
    # entry 1 got no assignment and no reset: must be unchanged
    np.testing.assert_array_equal(cb.entries[1], before[1])


def test_ema_converges_to_constant_target():
    rng = np.random.default_rng(14)
    cb = Codebook(np.array([[0.0, 0.0]]))
    stack = CodebookStack([cb])
    v = np.array([3.0, -1.0])
    for _ in range(400):
        codebook_update(stack, [np.tile(v, (8, 1))], np.zeros((8, 1), dtype=int),
                        rng, decay=0.9, reset_threshold=0.0)
    np.testing.assert_allclose(cb.entries[0], v, atol=1e-6)


def test_dead_entry_reset():
    rng = np.random.default_rng(15)
    cb = Codebook(np.array([[0.0, 0.0], [100.0, 100.0]]))
    cb.ema_counts = np.array([5.0, 0.01])
    stack = CodebookStack([cb])
    residuals = [np.array([[0.5, 0.5], [0.4, 0.6]])]
    tokens = np.zeros((2, 1), dtype=int)
    codebook_update(stack, residuals, tokens, rng, decay=0.99, reset_threshold=1.0)
    # dead entry 1 must now be one of the batch residuals
    assert any(np.allclose(cb.entries[1], r) for r in residuals[0])


def test_init_from_batch_uses_batch_points():
    rng = np.random.default_rng(16)
    latents = rng.normal(size=(32, 4))
    stack = CodebookStack.init_from_batch(latents, n_levels=2, size=8, rng=rng)
    assert stack.n_levels == 2
    assert stack.levels[0].size == 8
    for e in stack.levels[0].entries:
        assert any(np.allclose(e, x) for x in latents)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icsplit.losses import (IntraClassObjective, LossWeights, closeness_loss, closeness_loss_grad,
                            derangement, dispersion_loss, dispersion_loss_grad, rec_loss,
                            rec_loss_grad, total_loss)

from oracles import central_difference, closeness_loop, dispersion_loop, rec_loss_loop, rel_error


class TestRecLoss:
    def test_zero(self, rng):
        x = rng.random((3, 4, 4, 1))
        assert rec_loss(x, x) == 0.0

    def test_single_pixel(self):
        x = np.zeros((1, 2, 2, 1))
        xh = x.copy()
        xh[0, 1, 0, 0] = 0.5
        assert rec_loss(x, xh) == 0.25

    def test_oracle(self, rng):
        x, xh = rng.random((5, 3, 3, 2)), rng.random((5, 3, 3, 2))
        assert rec_loss(x, xh) == pytest.approx(rec_loss_loop(x, xh), abs=1e-9)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            rec_loss(rng.random((2, 3)), rng.random((2, 4)))

    def test_gradient(self, rng):
        x, xh = rng.random((3, 4)), rng.random((3, 4))
        _, num = central_difference(lambda: rec_loss(x, xh), xh)
        np.testing.assert_allclose(rec_loss_grad(x, xh).ravel(), num, rtol=1e-6)


class TestCloseness:
    def test_identical_rows(self):
        z = np.ones((5, 3))
        assert closeness_loss(z, derangement(5, np.random.default_rng(0))) == 0.0

    def test_two_points(self):
        assert closeness_loss(np.array([[0.0], [2.0]]), np.array([1, 0])) == 2.0

    def test_oracle_fixture(self, rng):
        z = rng.standard_normal((4, 3))
        perm = np.array([2, 3, 1, 0])
        assert closeness_loss(z, perm) == pytest.approx(closeness_loop(z, perm), abs=1e-9)

    def test_rejects_fixed_points_and_small_batches(self):
        with pytest.raises(ValueError):
            closeness_loss(np.zeros((3, 2)), np.array([0, 2, 1]))
        with pytest.raises(ValueError):
            closeness_loss(np.zeros((1, 2)), np.array([0]))

    @settings(max_examples=40, deadline=None)
    @given(b=st.integers(2, 8), L=st.integers(1, 6), seed=st.integers(0, 10 ** 6))
    def test_permutation_invariance_and_scaling(self, b, L, seed):
        r = np.random.default_rng(seed)
        z = r.standard_normal((b, L))
        partner = derangement(b, r)
        base = closeness_loss(z, partner)
        assert base >= 0
        sigma = r.permutation(b)
        inv = np.argsort(sigma)
        # row j of the permuted batch is old row sigma[j]; its partner moves with it
        assert closeness_loss(z[sigma], inv[partner[sigma]]) == pytest.approx(base, rel=1e-12)
        c = r.uniform(0.1, 10)
        assert closeness_loss(c * z, partner) == pytest.approx(c * base, rel=1e-12)

    def test_gradient_including_near_singularity(self, rng):
        z = rng.standard_normal((5, 3))
        z[1] = z[0] + 1e-2 * rng.standard_normal(3)
        partner = np.array([1, 0, 3, 4, 2])
        _, num = central_difference(lambda: closeness_loss(z, partner), z)
        err = rel_error(closeness_loss_grad(z, partner).ravel(), num)
        assert err.max() <= 1e-3

    def test_zero_distance_gradient_is_finite(self):
        z = np.ones((3, 2))
        g = closeness_loss_grad(z, np.array([1, 2, 0]))
        assert np.all(g == 0)


class TestDispersion:
    def test_identical_atypical(self, rng):
        za = np.tile(rng.standard_normal(4), (3, 1))
        d1, _ = dispersion_loss(za, np.array([1, 2, 0]), rng.standard_normal((3, 4)))
        assert d1 == 0.0

    def test_equal_partners(self, rng):
        za = rng.standard_normal((3, 4))
        _, d2 = dispersion_loss(za, np.array([2, 0, 1]), za.copy())
        assert d2 == 0.0

    def test_oracle_fixture(self, rng):
        za, zt = rng.standard_normal((2, 4)), rng.standard_normal((2, 4))
        got = dispersion_loss(za, np.array([1, 0]), zt)
        np.testing.assert_allclose(got, dispersion_loop(za, [1, 0], zt), atol=1e-9)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            dispersion_loss(rng.random((3, 2)), np.array([1, 2, 0]), rng.random((2, 2)))

    @settings(max_examples=40, deadline=None)
    @given(b=st.integers(2, 7), L=st.integers(1, 5), seed=st.integers(0, 10 ** 6))
    def test_signs_and_scaling(self, b, L, seed):
        r = np.random.default_rng(seed)
        za, zt = r.standard_normal((b, L)), r.standard_normal((b, L))
        p = derangement(b, r)
        d1, d2 = dispersion_loss(za, p, zt)
        assert d1 <= 0 and d2 <= 0
        c = r.uniform(0.1, 10)
        e1, e2 = dispersion_loss(c * za, p, c * zt)
        assert e1 == pytest.approx(c * d1, rel=1e-12)
        assert e2 == pytest.approx(c * d2, rel=1e-12)

    def test_gradients(self, rng):
        za, zt = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        p = np.array([3, 2, 0, 1])
        g1, g2a, g2t = dispersion_loss_grad(za, p, zt)
        _, n1 = central_difference(lambda: dispersion_loss(za, p, zt)[0], za)
        _, n2a = central_difference(lambda: dispersion_loss(za, p, zt)[1], za)
        _, n2t = central_difference(lambda: dispersion_loss(za, p, zt)[1], zt)
        for a, n in ((g1, n1), (g2a, n2a), (g2t, n2t)):
            assert rel_error(a.ravel(), n).max() <= 1e-3


def test_identical_batch_all_zero():
    z = np.full((4, 3), 0.7)
    p = np.array([1, 2, 3, 0])
    assert closeness_loss(z, p) == 0.0
    assert dispersion_loss(z, p, z) == (0.0, 0.0)


class TestTotal:
    def test_reduces_to_rec(self):
        assert total_loss(1.5, 2.0, -3.0, -4.0, LossWeights(0, 0, 0)) == 1.5

    def test_arithmetic(self):
        assert total_loss(1, 2, -3, -4, LossWeights(1, 1e-5, 1e-5)) == pytest.approx(3 - 7e-5, abs=1e-15)

    def test_defaults(self):
        w = LossWeights()
        assert (w.alpha, w.beta1, w.beta2) == (1.0, 1e-5, 1e-5)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            total_loss(float("nan"), 0, 0, 0)
        with pytest.raises(ValueError):
            LossWeights(alpha=-1)


def test_derangement(rng):
    for n in range(2, 10):
        p = derangement(n, rng)
        assert sorted(p) == list(range(n))
        assert not np.any(p == np.arange(n))


def test_objective_gradient_wrt_latents(rng):
    nt, na, L = 4, 3, 5
    x = rng.random((nt + na, 2, 2, 1))
    xh = rng.random((nt + na, 2, 2, 1))
    z = rng.standard_normal((nt + na, L))
    obj = IntraClassObjective(nt, LossWeights(1.0, 0.3, 0.6), np.array([1, 2, 3, 0]),
                              np.array([2, 0, 1]), np.array([0, 0, 3]))
    _, dz, dxh = obj(x, z, xh)
    _, num = central_difference(lambda: obj(x, z, xh)[0], z)
    assert rel_error(dz.ravel(), num).max() <= 1e-3
    obj(x, z, xh)
    rec, cls, d1, d2 = obj.last_terms
    zp = z[:nt][[0, 0, 3]]
    assert cls == pytest.approx(closeness_loop(z[:nt], [1, 2, 3, 0]), abs=1e-12)
    assert (d1, d2) == pytest.approx(dispersion_loop(z[nt:], [2, 0, 1], zp), abs=1e-12)

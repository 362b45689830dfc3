from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import tiny_params
from sdsa.errors import ConfigError, DomainError, ShapeError
from sdsa.kgloss import (Batch, LossBreakdown, LossWeights, l2_term, masked_mse, penalty_budget,
                         penalty_nonneg, penalty_response, response_gap, total_loss, warmed)
from sdsa.model import flatten_grads, is_bias
from sdsa.ndmath import RngStream, finite_diff_gradient

# magnitudes kept away from the squaring underflow range
vals = st.one_of(st.just(0.0), st.floats(1e-100, 1e3), st.floats(-1e3, -1e-100))


def test_masked_mse_hand_value():
    pred = np.array([1.0, 2.0, 4.0])
    tgt = np.array([0.0, 2.0, 1.0])
    v, g = masked_mse(pred, tgt, np.array([True, False, True]))
    assert v == (1.0 + 9.0) / 2
    np.testing.assert_array_equal(g, [1.0, 0.0, 3.0])


def test_masked_mse_nothing_observed():
    v, g = masked_mse(np.ones(4), np.zeros(4), np.zeros(4, dtype=bool))
    assert v == 0.0 and not g.any()
    with pytest.raises(ShapeError):
        masked_mse(np.ones(3), np.ones(4), True)


@given(arrays(np.float64, 6, elements=vals))
def test_nonneg_zero_iff_nonnegative(x):
    v, _ = penalty_nonneg(x)
    assert (v == 0.0) == bool(np.all(x >= 0))
    assert v == np.mean(np.minimum(x, 0.0) ** 2)


@given(arrays(np.float64, 5, elements=st.integers(-8, 8).map(lambda k: k / 4)),
       arrays(np.float64, 5, elements=st.integers(0, 8).map(lambda k: k / 4)))
def test_budget_zero_iff_within_gpp(ra, gpp):
    v, _ = penalty_budget(ra, gpp)
    assert (v == 0.0) == bool(np.all(ra <= gpp))


def test_budget_shape_check():
    with pytest.raises(ShapeError):
        penalty_budget(np.ones(3), np.ones(2))


def test_response_gap_hand_value_and_gradients():
    v, g, gp = response_gap(np.array([1.0, 2.0]), np.array([1.5, 1.0]))
    assert v == 0.5
    np.testing.assert_array_equal(g, [0.0, 1.0])
    np.testing.assert_array_equal(gp, [0.0, -1.0])


def test_warmed_shifts_one_column():
    X = np.zeros((2, 1, 3))
    Xp = warmed(X, 1, 2.0, 4.0)
    assert np.all(Xp[..., 1] == 0.5) and not Xp[..., [0, 2]].any() and not X.any()
    with pytest.raises(DomainError):
        warmed(X, 1, 0.0, 1.0)
    with pytest.raises(ConfigError):
        warmed(X, 3, 1.0, 1.0)


def test_penalty_response_with_pluggable_model():
    # rh = -theta * temperature: warming lowers rh by theta*delta on every day
    def fwd(params, X):
        flux = np.zeros(X.shape[:-1] + (2,))
        flux[..., 1] = -params["theta"] * X[..., 0]
        return SimpleNamespace(flux=flux), X

    def bwd(cache, params, d_flux, d_yield):
        return {"theta": np.array(-(d_flux[..., 1] * cache[..., 0]).sum())}

    X = RngStream(0).normal((4, 2, 1))
    theta = 0.7
    v, g = penalty_response({"theta": theta}, X, 0, 2.0, 1.0, (0.0, 1.0), fwd, bwd)
    assert abs(v - (theta * 2.0) ** 2) < 1e-14
    assert abs(float(g["theta"]) - 2 * theta * 4.0) < 1e-13


def test_l2_excludes_biases():
    p = tiny_params(0)
    reg, grads = l2_term(p)
    want = sum(float((a * a).sum()) for n, a in p.arrays.items() if not is_bias(n))
    assert abs(reg - want) < 1e-12
    assert all(not grads[n].any() for n in p.names if is_bias(n))


@pytest.mark.parametrize("kw", [dict(lambda_nonneg=-1.0), dict(lambda_l2=float("inf")),
                                dict(response_delta_t=0.0), dict(flux_weight=0.0, yield_weight=0.0)])
def test_weights_validation(kw):
    with pytest.raises(ConfigError):
        LossWeights(**kw)


def make_batch(seed, T=6, B=3, D=3, obs=0.6, ra_shift=0.3, rh_shift=-1.5):
    rng = RngStream(seed)
    mask = rng.uniform((T, B)) < obs
    ft = rng.normal((T, B, 2))
    ft[~mask] = 0.0
    return Batch(
        X=rng.normal((T, B, D)),
        flux_target=ft, flux_mask=mask,
        yield_target=rng.normal(B), yield_mask=np.array([True, False, True][:B]),
        gpp=rng.uniform((T, B), 0.0, 0.4),
        target_stats={"ra": (ra_shift, 0.8), "rh": (rh_shift, 1.2), "yield": (0.0, 1.0)},
        temp_index=0, temp_std=2.0,
    )


def test_total_loss_gradient_with_partial_masks():
    p = tiny_params(4)
    batch = make_batch(0)
    w = LossWeights(lambda_nonneg=0.7, lambda_budget=0.5, lambda_response=2.0, lambda_l2=1e-2)
    bd, grads = total_loss(p, batch, w)
    assert min(bd.pen_nonneg, bd.pen_budget, bd.pen_response) > 0

    def f(vec):
        return total_loss(p.with_flat(vec), batch, w)[0].total

    fd = finite_diff_gradient(f, p.flat())
    np.testing.assert_allclose(flatten_grads(p, grads), fd, rtol=1e-5, atol=1e-8)


def test_breakdown_recompose_and_backends():
    p = tiny_params(5)
    batch = make_batch(6)
    w = LossWeights()
    bd, g = total_loss(p, batch, w)
    assert abs(bd.recompose(w) - bd.total) < 1e-15
    assert bd.n_observed_flux_days == int(batch.flux_mask.sum())
    bd2, g2 = total_loss(p, batch, w, backend="python")
    assert abs(bd.total - bd2.total) < 1e-12
    for k in g:
        np.testing.assert_allclose(g[k], g2[k], atol=1e-12)


def test_response_probe_skipped_when_weight_zero():
    p = tiny_params(5)
    bd, _ = total_loss(p, make_batch(6), LossWeights(lambda_response=0.0))
    assert bd.pen_response == 0.0
    assert isinstance(LossBreakdown.compose(LossWeights(), 1, 1, 1, 1, 1, 1), float)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from ucpredict.svm import (
    DEFAULT_LAMBDAS,
    CvConfig,
    KernelModel,
    LabeledSet,
    LinearModel,
    check_guarantee,
    cross_validate,
    expected_hinge,
    fold_assignment,
    gaussian_kernel,
    hinge,
    kernel_matrix,
    predict,
    predict_labels,
    psd_sqrt,
    train_kernel,
    train_linear,
    wasserstein2,
)

TWO_POINT = LabeledSet([[0.0, 0.0], [2.0, 0.0]], [-1, 1])
XOR = LabeledSet([[0, 0], [1, 1], [0, 1], [1, 0]], [1, 1, -1, -1])


def grid_search_objective(data, lam, rounds=8):
    """Coarse-to-fine search over (w1, w2, b); independent of the conic solver."""
    center = np.zeros(3)
    width = 4.0
    best = None
    for _ in range(rounds):
        axes = [np.linspace(c - width, c + width, 41) for c in center]
        W1, W2, B = np.meshgrid(*axes, indexing="ij")
        scores = W1[..., None] * data.features[:, 0] + W2[..., None] * data.features[:, 1] + B[..., None]
        obj = np.maximum(0, 1 - data.labels * scores).mean(axis=-1) + lam * (W1**2 + W2**2)
        k = np.unravel_index(np.argmin(obj), obj.shape)
        center = np.array([W1[k], W2[k], B[k]])
        best = float(obj[k])
        width /= 8.0
    return best, center


def test_two_point_oracle_then_solver():
    oracle_obj, (w1, w2, b) = grid_search_objective(TWO_POINT, 0.1)
    assert oracle_obj == pytest.approx(0.1, abs=1e-5)
    assert (w1, w2, b) == pytest.approx((1.0, 0.0, -1.0), abs=1e-3)
    model = train_linear(TWO_POINT, 0.1)
    assert model.objective == pytest.approx(oracle_obj, abs=1e-5)
    assert model.w == pytest.approx([1.0, 0.0], abs=1e-4)
    assert model.b == pytest.approx(-1.0, abs=1e-4)
    assert model.duality_gap <= 1e-7


def test_unregularized_separable_reaches_zero():
    assert train_linear(TWO_POINT, 0.0).objective == pytest.approx(0.0, abs=1e-7)


def test_single_class_is_degenerate():
    model = train_linear(LabeledSet([[0.0], [1.0]], [1, 1]), 0.5)
    assert model.degenerate and model.objective == 0.0
    assert predict_labels(model, [[5.0], [-5.0]]).tolist() == [1, 1]
    kmodel = train_kernel(LabeledSet([[0.0], [1.0]], [-1, -1]), 0.5, 1.0)
    assert kmodel.degenerate and predict(kmodel, [3.0])[0] == -1


def test_single_sample_kernel():
    model = train_kernel(LabeledSet([[0.0]], [1]), 0.0, 1.0)
    assert model.objective == pytest.approx(0.0, abs=1e-7)


def test_predict_tie_rule():
    model = LinearModel(np.array([1.0, 0.0]), -1.0, 0.1, 0.1)
    assert predict(model, [2.0, 0.0]) == (1, 1.0)
    assert predict(model, [1.0, 0.0]) == (1, 0.0)
    with pytest.raises(ValueError):
        predict(model, [1.0, 0.0, 0.0])


def test_one_support_point_is_always_positive():
    model = KernelModel(np.array([[0.0, 0.0]]), np.array([1.0]), 1.0, 0.0, 0.0)
    X = np.random.default_rng(0).normal(size=(20, 2)) * 3
    assert np.all(predict_labels(model, X) == 1)


def test_hinge_and_kernel_values():
    assert hinge(1, 0.0) == 1.0 and hinge(-1, -2.0) == 0.0
    assert gaussian_kernel([0, 0], [1, 1], 0.5) == pytest.approx(np.exp(-1.0))
    with pytest.raises(ValueError):
        gaussian_kernel([0], [0], 0.0)
    zero = LinearModel(np.zeros(2), 0.0, 0.0, 0.0)
    assert expected_hinge(zero, XOR) == 1.0


def test_xor_kernel_separates_linear_does_not():
    kmodel = train_kernel(XOR, 1e-3, 2.0)
    lmodel = train_linear(XOR, 1e-3)
    assert np.all(predict_labels(kmodel, XOR.features) == XOR.labels)
    assert np.sum(predict_labels(lmodel, XOR.features) != XOR.labels) >= 1
    assert kmodel.duality_gap <= 1e-7 and lmodel.duality_gap <= 1e-7


def test_small_gamma_kernel_matches_linear_predictions():
    kmodel = train_kernel(TWO_POINT, 0.1, 1e-3)
    lmodel = train_linear(TWO_POINT, 0.1)
    assert predict_labels(kmodel, TWO_POINT.features).tolist() == predict_labels(lmodel, TWO_POINT.features).tolist()


@st.composite
def labeled_sets(draw, max_rows=10, dim=2):
    n = draw(st.integers(2, max_rows))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, dim))
    y = np.where(rng.uniform(size=n) < 0.5, -1, 1)
    y[0], y[1] = -1, 1
    return LabeledSet(X, y)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(0.01, 10.0))
def test_kernel_matrix_is_psd(values, gamma):
    X = np.array(values)[:, None]
    K = kernel_matrix(X, gamma)
    assert np.allclose(K, K.T) and np.allclose(np.diag(K), 1.0)
    assert np.linalg.eigvalsh(K).min() >= -1e-10
    R = psd_sqrt(K)
    assert np.allclose(R @ R, K, atol=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_objective_monotone_in_lambda(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 3))
    y = np.where(X[:, 0] + 0.5 * rng.normal(size=12) > 0, 1, -1)
    y[0], y[1] = -1, 1
    data = LabeledSet(X, y)
    objs = [train_linear(data, lam).objective for lam in DEFAULT_LAMBDAS]
    assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))


@given(labeled_sets(), st.floats(1e-3, 5.0))
def test_in_sample_guarantee_and_gap(data, lam):
    for model in (train_linear(data, lam), train_kernel(data, lam, 0.5)):
        check = check_guarantee(model, data)
        assert check.lhs <= check.bound + 1e-9
        assert model.duality_gap <= 1e-7


def test_cv_singleton_grid_and_determinism():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(16, 2))
    data = LabeledSet(X, np.where(X[:, 0] > 0, 1, -1))
    one = cross_validate(data, CvConfig(lambdas=(0.3,), gammas=(1.0,)), "linear")
    assert one.lam == 0.3 and one.gamma is None
    cfg = CvConfig(lambdas=(1e-3, 1e-1), gammas=(0.5, 2.0), seed=5)
    a, b = cross_validate(data, cfg, "kernel"), cross_validate(data, cfg, "kernel")
    assert (a.lam, a.gamma) == (b.lam, b.gamma) and a.losses == b.losses
    assert len(a.losses) == 4
    assert a.losses[(a.lam, a.gamma)] == min(a.losses.values())
    for x, y in zip(fold_assignment(16, 4, 5), fold_assignment(16, 4, 5)):
        assert np.array_equal(x, y)


def test_cv_ties_prefer_larger_lambda():
    # every fold is single-class, so each model is the constant classifier and all losses tie
    data = LabeledSet(np.arange(8.0)[:, None], [1] * 8)
    res = cross_validate(data, CvConfig(lambdas=(0.0, 1.0, 0.5), gammas=(3.0, 1.0)), "kernel")
    assert res.lam == 1.0 and res.gamma == 1.0


def test_cv_needs_enough_samples():
    with pytest.raises(ValueError):
        cross_validate(TWO_POINT, CvConfig(folds=4), "linear")
    with pytest.raises(ValueError):
        CvConfig(lambdas=())


def test_wasserstein_hand_values():
    assert wasserstein2([[0.0]], [[3.0]]) == pytest.approx(3.0, abs=1e-9)
    assert wasserstein2([[0.0], [1.0]], [[2.0], [3.0]]) == pytest.approx(2.0, abs=1e-9)
    A = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]
    assert wasserstein2(A, A) == pytest.approx(0.0, abs=1e-9)
    # unequal sizes: {0} vs {0, 2} moves half the mass by 2
    assert wasserstein2([[0.0]], [[0.0], [2.0]]) == pytest.approx(np.sqrt(2.0), abs=1e-9)
    with pytest.raises(ValueError):
        wasserstein2([], [[0.0]])


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_wasserstein_matches_assignment(n, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
    C = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    r, c = linear_sum_assignment(C)
    assert wasserstein2(A, B) == pytest.approx(np.sqrt(C[r, c].mean()), abs=1e-9)


def test_wasserstein_metric_axioms():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        A, B, C = (rng.normal(size=(int(rng.integers(1, 5)), 2)) for _ in range(3))
        ab, ba = wasserstein2(A, B), wasserstein2(B, A)
        assert abs(ab - ba) <= 1e-7
        assert ab <= wasserstein2(A, C) + wasserstein2(C, B) + 1e-7
        assert wasserstein2(A, A) <= 1e-7

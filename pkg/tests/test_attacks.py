import numpy as np
import pytest

from artifact.attacks import (
    AttackConfig,
    ScreenConfig,
    add_perturbation,
    fgsm,
    grid_count,
    grid_lines,
    random_perturb,
)
from artifact.nn import Affine, Network, backward
from artifact.seeding import lane_rng, make_rng

from helpers import random_mlp


def scalar_logit_net(w):
    # logits [w*x, 0]
    return Network([Affine([[w], [0.0]], [0.0, 0.0])], 2, (1,))


# -- FGSM ----------------------------------------------------------------------


def test_fgsm_linear_closed_form():
    w, eps = 1.5, 0.1
    net = scalar_logit_net(w)
    x = np.array([[0.05], [0.4], [0.97]])
    labels = np.array([0, 0, 0])
    # d/dx -log(sigmoid(w x)) = -w (1 - sigmoid(w x)) < 0
    sig = 1 / (1 + np.exp(-w * x[:, 0]))
    expected_grad = -w * (1 - sig) / 3
    _, g = backward(net, x, labels, param_grads=False)
    np.testing.assert_allclose(g.input_grad[:, 0], expected_grad, rtol=1e-14)
    adv = fgsm(net, x, labels, AttackConfig(eps))
    np.testing.assert_allclose(adv, np.clip(x - eps, 0, 1), atol=1e-16)
    assert adv[0, 0] == 0.0


def test_fgsm_zero_gradient_is_identity(rng):
    net = Network([Affine(np.zeros((3, 4)), np.zeros(3))], 3, (4,))
    x = rng.uniform(size=(5, 4))
    np.testing.assert_array_equal(fgsm(net, x, [0, 1, 2, 0, 1], AttackConfig(0.3)), x)


def test_fgsm_bound_and_sign(rng):
    net = random_mlp(rng, n_in=20, hidden=16, n_out=5)
    x = rng.uniform(size=(64, 20))
    y = rng.integers(0, 5, 64)
    eps = 0.3
    adv = fgsm(net, x, y, AttackConfig(eps))
    assert np.abs(adv - x).max() <= eps
    assert adv.min() >= 0 and adv.max() <= 1
    _, g = backward(net, x, y, param_grads=False)
    free = (g.input_grad != 0) & (x + eps < 1) & (x - eps > 0)
    assert np.all(np.sign(adv - x)[free] == np.sign(g.input_grad)[free])


@pytest.mark.parametrize("eps", [0.0, 1.5])
def test_attack_config_rejects_out_of_range(eps):
    with pytest.raises(ValueError):
        AttackConfig(eps)


def test_add_perturbation_never_overshoots(rng):
    x = rng.uniform(size=100_000)
    for eps in (0.3, 0.1, 1 / 255, 0.0157):
        d = eps * rng.choice([-1.0, 0.0, 1.0], size=x.shape)
        y = add_perturbation(x, d)
        assert np.all(np.abs(y - x) <= eps)
        inside = (x + d > 0) & (x + d < 1)
        # unclipped moves are the rounded step or its inward neighbour
        assert np.all(np.abs(np.abs(y - x) - np.abs(d))[inside] <= np.spacing(y[inside]))


# -- screening: uniform noise -------------------------------------------------------


def test_random_perturb_zero_amplitude_identity(rng):
    img = rng.uniform(size=(28, 28, 1))
    np.testing.assert_array_equal(random_perturb(img, ScreenConfig(amplitude=0.0), make_rng(0)), img)


def test_random_perturb_clips_at_one():
    class FixedDraw:
        def uniform(self, low, high, size):
            return np.full(size, 30 / 255)

    out = random_perturb(np.array([[250 / 255]]), ScreenConfig(), FixedDraw())
    assert out[0, 0] == 1.0


def test_random_perturb_statistics():
    amp = 60 / 255
    img = np.full((1000, 1000), 0.5)  # interior: 0.5 +- 0.235 never clips
    out = random_perturb(img, ScreenConfig(amplitude=amp), make_rng(7))
    u = out - img
    assert abs(u.mean()) < 1e-3
    assert np.abs(u).max() <= amp
    # variance of Uniform(-a, a) is a^2 / 3
    assert u.var() == pytest.approx(amp**2 / 3, rel=1e-2)
    hist, _ = np.histogram(u, bins=10, range=(-amp, amp))
    assert np.abs(hist / u.size - 0.1).max() < 0.005


def test_random_perturb_outputs_in_range(rng):
    img = rng.choice([0.0, 1.0, 0.5], size=(28, 28, 1))
    out = random_perturb(img, ScreenConfig(), make_rng(1))
    assert out.min() >= 0 and out.max() <= 1
    assert np.abs(out - img).max() <= 60 / 255


def test_screening_deterministic():
    img = np.random.default_rng(0).uniform(size=(28, 28, 1))
    cfg = ScreenConfig()
    assert random_perturb(img, cfg, lane_rng(5, 1, 9)).tobytes() == \
        random_perturb(img, cfg, lane_rng(5, 1, 9)).tobytes()
    assert grid_lines(img, cfg, lane_rng(5, 1, 9)).tobytes() == \
        grid_lines(img, cfg, lane_rng(5, 1, 9)).tobytes()


# -- screening: grid lines -------------------------------------------------------


@pytest.mark.parametrize("dim, expected", [(224, 5), (28, 1), (100, 5), (32, 1), (60, 3), (2, 1), (1, 0)])
def test_grid_count(dim, expected):
    assert grid_count(dim, ScreenConfig()) == expected


def test_grid_count_cap_zero_disables():
    assert grid_count(224, ScreenConfig(grid_line_cap=0)) == 0


def _changed(img, out):
    d = out != img
    return d.any(axis=-1) if d.ndim == 3 else d


@pytest.mark.parametrize("size, lines, changed", [(28, 1, 55), (224, 5, 2215)])
def test_grid_lines_changed_pixels(size, lines, changed):
    img = np.zeros((size, size, 1))
    out = grid_lines(img, ScreenConfig(), make_rng(3))
    mask = _changed(img, out)
    rows = np.flatnonzero(mask.all(axis=1))
    cols = np.flatnonzero(mask.all(axis=0))
    assert len(rows) == lines and len(cols) == lines
    # inclusion-exclusion over the selected index sets
    assert mask.sum() == lines * size + lines * size - lines * lines == changed
    union = np.zeros_like(mask)
    union[rows] = True
    union[:, cols] = True
    np.testing.assert_array_equal(mask, union)


def test_grid_lines_all_channels(rng):
    img = rng.uniform(0, 0.9, size=(32, 32, 3))
    out = grid_lines(img, ScreenConfig(), make_rng(4))
    mask = _changed(img, out)
    assert np.all(out[mask] == 1.0)
    np.testing.assert_array_equal(out[~mask], img[~mask])


def test_grid_lines_on_white_image_is_identity():
    img = np.ones((28, 28))
    np.testing.assert_array_equal(grid_lines(img, ScreenConfig(), make_rng(0)), img)


def test_grid_rows_uniform():
    counts = np.zeros(28)
    for seed in range(2800):
        out = grid_lines(np.zeros((28, 28)), ScreenConfig(), make_rng(seed))
        counts[np.flatnonzero(out.all(axis=1))] += 1
    # each row expected 100 times; 5 sigma is about 50
    assert np.abs(counts - 100).max() < 50

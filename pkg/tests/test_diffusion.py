import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from focuspolicy import numerics as nx
from focuspolicy.diffusion import (
    Denoiser,
    add_noise,
    denoise_step,
    draw_training_noise,
    make_schedule,
    sample_actions,
    timestep_embedding,
    training_loss,
)

SWEEP = [
    (K, b0, b1)
    for K in (1, 2, 5, 10, 50)
    for b0, b1 in ((1e-4, 0.02), (1e-3, 0.2), (0.01, 0.5), (0.05, 0.05))
]


@pytest.mark.parametrize("K, b0, b1", SWEEP)
def test_signal_and_noise_weights_on_unit_circle(K, b0, b1):
    s = make_schedule(K, b0, b1)
    np.testing.assert_allclose(s.signal**2 + s.noise**2, 1.0, atol=1e-12, rtol=0)
    assert np.all(np.diff(s.abar) < 0)
    assert s.sigma[0] == 0.0


def test_sweep_has_twenty_configurations():
    assert len(SWEEP) == 20


def test_default_schedule_ends_near_pure_noise():
    s = make_schedule(50)
    assert s.noise[-1] > 0.99
    assert s.betas[0] == pytest.approx(0.002) and s.betas[-1] == pytest.approx(0.4)


@pytest.mark.parametrize("K, b0, b1", [(0, 0.1, 0.2), (5, 0.0, 0.1), (5, 0.3, 0.2), (5, 0.1, 1.0)])
def test_bad_schedules_rejected(K, b0, b1):
    with pytest.raises(ValueError):
        make_schedule(K, b0, b1)


def test_perfect_denoiser_reconstructs_in_one_step():
    s = make_schedule(1, 0.3, 0.3)
    gen = nx.rng(0)
    a0 = gen.uniform(-1, 1, (4, 8, 3))
    eps = gen.standard_normal(a0.shape)
    a1 = add_noise(a0, 1, eps, s).data
    out = denoise_step(None, a1, 1, None, s, eps=eps)
    np.testing.assert_allclose(out, a0, atol=1e-9, rtol=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.floats(1e-4, 0.1), st.floats(0.0, 0.5), st.integers(0, 2**31))
def test_posterior_mean_recovers_clean_actions_with_true_noise(K, b0, span, seed):
    s = make_schedule(K, b0, min(b0 + span, 0.9))
    gen = nx.rng(seed)
    a0 = gen.uniform(-1, 1, (2, 3))
    k = int(gen.integers(1, K + 1))
    eps = gen.standard_normal(a0.shape)
    a_k = add_noise(a0, k, eps, s).data
    recovered = (a_k - s.noise[k - 1] * eps) / s.signal[k - 1]
    np.testing.assert_allclose(recovered, a0, atol=1e-9)


def test_zero_predictor_loss_is_one():
    s = make_schedule(50)
    gen = nx.rng(1, "mc")
    n = 10_000
    a0 = gen.uniform(-1, 1, (n, 1, 1))
    ks, eps = draw_training_noise(gen, s, (1, 1), n)

    class Zero:
        def __call__(self, a_k, k, ctx):
            return nx.Tensor(np.zeros(np.shape(a_k.data)))

    loss = training_loss(Zero(), None, a0, ks, eps, s).item()
    assert loss == pytest.approx(1.0, abs=0.05)


def test_training_noise_rows_and_range():
    s = make_schedule(10)
    ks, eps = draw_training_noise(nx.rng(2), s, (8, 3), 500)
    assert ks.min() >= 1 and ks.max() <= 10 and len(set(ks.tolist())) == 10
    assert eps.shape == (500, 8, 3)
    k, e = draw_training_noise(nx.rng(2), s, (8, 3))
    assert 1 <= k <= 10 and e.shape == (8, 3)


def test_timestep_embedding_distinct():
    emb = timestep_embedding(np.arange(1, 51))
    assert emb.shape == (50, 32)
    assert len({row.tobytes() for row in emb}) == 50


def test_sampling_clamped_and_reproducible():
    ps = nx.ParamStore()
    den = Denoiser(ps, nx.rng(3), 8, 3, 5)
    ps["denoiser.b2"].data[:] = 50.0  # pushes samples far outside the box
    ctx = np.zeros((2, 5))
    s = make_schedule(10)
    a = sample_actions(den, ctx, s, [nx.rng(i) for i in range(2)], (8, 3))
    b = sample_actions(den, ctx, s, [nx.rng(i) for i in range(2)], (8, 3))
    assert a.shape == (2, 8, 3)
    assert np.abs(a).max() <= 1.0
    assert np.array_equal(a, b)


def test_overfits_constant_action():
    ps = nx.ParamStore()
    den = Denoiser(ps, nx.rng(4), 2, 1, 1)
    s = make_schedule(10)
    target = np.full((64, 2, 1), 0.6)
    ctx = nx.Tensor(np.ones((64, 1)))
    state = nx.AdamState()
    for i in range(600):
        ks, eps = draw_training_noise(nx.rng(5, i), s, (2, 1), 64)
        training_loss(den, ctx, target, ks, eps, s).backward()
        nx.adam_step(ps, state, lr=2e-3)
    out = sample_actions(den, np.ones((16, 1)), s, [nx.rng(6, i) for i in range(16)], (2, 1))
    assert np.abs(out - 0.6).max() < 0.05


def test_loss_matches_manual_formula():
    ps = nx.ParamStore()
    den = Denoiser(ps, nx.rng(7), 8, 3, 4)
    s = make_schedule(20)
    gen = nx.rng(8)
    a0 = gen.uniform(-1, 1, (5, 8, 3))
    ctx = nx.Tensor(gen.standard_normal((5, 4)))
    ks, eps = draw_training_noise(gen, s, (8, 3), 5)
    noisy = s.signal[ks - 1][:, None, None] * a0 + s.noise[ks - 1][:, None, None] * eps
    manual = np.mean((den(noisy, ks, ctx).data - eps) ** 2)
    assert training_loss(den, ctx, a0, ks, eps, s).item() == pytest.approx(manual, rel=1e-12)

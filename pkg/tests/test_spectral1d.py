"""1D alignment analytics against numeric integration.

Every closed form (energy, alignment loss, its gradient, the joint optimum)
is checked against brute-force quadrature of the defining integral on a
dense grid, then the schedule-dependent claims (basin widening, filtered
convergence) are exercised on the pilot loop itself.
"""

import numpy as np
import pytest

from tensorpose.kernels import KernelSchedule
from tensorpose.seeding import substream
from tensorpose.spectral1d import (FourierSignal, PilotConfig, filter_signal,
                                   grad_alignment, joint_g_optimum,
                                   loss_alignment, loss_joint,
                                   random_noisy_signal, run_pilot, shift,
                                   transfer_H, transfer_H_tilde, transfer_grid)

GRID = 8192


def quad(f_vals: np.ndarray, period: float) -> float:
    """Left-endpoint Riemann sum; exact for trigonometric polynomials
    sampled well above the Nyquist rate."""
    return float(f_vals.sum() * period / len(f_vals))


def sample(sig: FourierSignal, n: int = GRID) -> np.ndarray:
    x = np.arange(n) * sig.period / n
    return sig.evaluate(x)


def make_signal(seed: int) -> FourierSignal:
    return random_noisy_signal(substream(seed, "noise"))


def test_evaluate_is_real_and_periodic():
    sig = make_signal(0)
    x = np.linspace(0, 3 * sig.period, 257)
    v = sig.evaluate(x)
    assert v.dtype == np.float64
    np.testing.assert_allclose(sig.evaluate(x + sig.period), v, atol=1e-9)


def test_parseval_energy():
    for seed in range(5):
        sig = make_signal(seed)
        numeric = quad(sample(sig) ** 2, sig.period)
        assert sig.energy() == pytest.approx(numeric, rel=1e-8, abs=1e-8)


def test_shift_moves_the_graph():
    sig = make_signal(1)
    s = 3.7
    x = np.linspace(0, sig.period, 401)
    np.testing.assert_allclose(shift(sig, s).evaluate(x),
                               sig.evaluate(x - s), atol=1e-9)
    # shifting by a full period is the identity
    np.testing.assert_allclose(shift(sig, sig.period).coeffs, sig.coeffs,
                               atol=1e-12)
    # shifts compose additively
    np.testing.assert_allclose(shift(shift(sig, 1.0), 2.0).coeffs,
                               shift(sig, 3.0).coeffs, atol=1e-12)


def test_loss_alignment_against_integral():
    for seed in (2, 3):
        sig = make_signal(seed)
        x = np.arange(GRID) * sig.period / GRID
        for u in (-5.0, -0.7, 0.0, 1.3, 6.0):
            numeric = quad((sig.evaluate(x - u) - sig.evaluate(x)) ** 2,
                           sig.period)
            assert loss_alignment(sig, u) == pytest.approx(numeric, rel=1e-8,
                                                           abs=1e-8)


def test_loss_alignment_zero_at_zero():
    sig = make_signal(4)
    assert loss_alignment(sig, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert loss_alignment(sig, sig.period) == pytest.approx(0.0, abs=1e-9)


def test_grad_alignment_finite_differences():
    # the backbone of the 1D gradient acceptance: 100 random cases
    rng = substream(99, "noise")
    cases = 0
    worst = 0.0
    while cases < 100:
        sig = random_noisy_signal(rng)
        u = float(rng.uniform(-8.0, 8.0))
        h = 1e-6
        numeric = (loss_alignment(sig, u + h)
                   - loss_alignment(sig, u - h)) / (2 * h)
        analytic = grad_alignment(sig, u)
        scale = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / scale)
        cases += 1
    assert worst <= 1e-4


def test_filter_signal_coefficients():
    sig = make_signal(5)
    sigma = 2.0
    out = filter_signal(sig, sigma)
    k = sig.wavenumbers
    expect = sig.coeffs * np.exp(-2.0 * np.pi ** 2 * sigma ** 2
                                 * (k / sig.period) ** 2)
    np.testing.assert_allclose(out.coeffs, expect, atol=1e-14)
    assert out.energy() < sig.energy()
    np.testing.assert_allclose(filter_signal(sig, 0.0).coeffs, sig.coeffs,
                               atol=1e-14)


def test_transfer_H_known_value():
    # H(u, kappa) = 4 pi kappa sin(2 pi kappa u); at kappa=1, u=1/4 -> 4 pi
    assert transfer_H(0.25, 1.0) == pytest.approx(4.0 * np.pi, rel=1e-12)
    assert transfer_H(0.0, 3.0) == 0.0
    # odd in u
    assert transfer_H(-0.1, 2.0) == pytest.approx(-transfer_H(0.1, 2.0),
                                                  rel=1e-12)


def test_transfer_H_is_single_mode_loss_gradient():
    # for a one-harmonic signal, d/du loss = |c|^2 T H(u, k/T)
    period = 32.0
    c = 0.6 - 0.2j
    coeffs = np.zeros(5, dtype=complex)
    coeffs[3] = c          # k = +1
    coeffs[1] = np.conj(c)  # k = -1 (real signal)
    sig = FourierSignal(period, coeffs)
    for u in (0.3, 2.0, -4.4):
        expect = (abs(c) ** 2 + abs(c) ** 2) * period * transfer_H(u, 1 / period)
        assert grad_alignment(sig, u) == pytest.approx(expect, rel=1e-10)


def test_transfer_H_tilde_identity():
    # gradient of the filtered loss == H-tilde response, to 1e-10
    period = 48.0
    coeffs = np.zeros(7, dtype=complex)
    coeffs[5] = 0.8 + 0.1j   # k = +2
    coeffs[1] = np.conj(coeffs[5])
    sig = FourierSignal(period, coeffs)
    sigma = 3.0
    kappa = 2.0 / period
    amp2 = 2 * abs(coeffs[5]) ** 2
    for u in np.linspace(-6, 6, 25):
        lhs = grad_alignment(filter_signal(sig, sigma), u)
        rhs = amp2 * period * transfer_H_tilde(u, kappa, sigma)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_transfer_grid_rows():
    rows = transfer_grid([0.0, 1.0], [0.1, 0.2], sigma=1.0)
    assert len(rows) == 4
    u, kp, h, ht = rows[3]
    assert (u, kp) == (1.0, 0.2)
    assert h == pytest.approx(transfer_H(1.0, 0.2))
    assert ht == pytest.approx(transfer_H_tilde(1.0, 0.2, 1.0))
    assert abs(ht) <= abs(h)


class TestJointOptimum:
    def test_half_alignment_loss(self):
        sig = make_signal(6)
        p = (0.0, -1.5)
        q = (2.0, 1.2)
        g = joint_g_optimum(sig, p[0], p[1], q[0], q[1])
        u = (p[0] - q[0]) - (p[1] - q[1])
        assert loss_joint(g, sig, p, q) == pytest.approx(
            0.5 * loss_alignment(sig, u), rel=1e-10)

    def test_perturbing_g_increases_loss(self):
        sig = make_signal(7)
        p = (0.5, -2.0)
        q = (0.0, 0.0)
        g = joint_g_optimum(sig, p[0], p[1], q[0], q[1])
        base = loss_joint(g, sig, p, q)
        rng = np.random.default_rng(3)
        for _ in range(5):
            delta = rng.normal(0, 0.05, g.coeffs.shape) \
                + 1j * rng.normal(0, 0.05, g.coeffs.shape)
            delta = 0.5 * (delta + np.conj(delta[::-1]))
            bumped = FourierSignal(g.period, g.coeffs + delta)
            assert loss_joint(bumped, sig, p, q) > base

    def test_aligned_pair_zero_loss(self):
        sig = make_signal(8)
        g = joint_g_optimum(sig, 2.0, -1.0, 2.0, -1.0)
        assert loss_joint(g, sig, (2.0, -1.0), (2.0, -1.0)) == pytest.approx(
            0.0, abs=1e-10)


def test_random_noisy_signal_spectrum():
    rng = substream(11, "noise")
    sig = random_noisy_signal(rng)
    k = sig.wavenumbers
    mags = np.abs(sig.coeffs)
    assert k.max() >= 40
    base = mags[(np.abs(k) >= 1) & (np.abs(k) <= 3)]
    assert np.all(base >= 0.5 - 1e-12) and np.all(base <= 1.0 + 1e-12)
    noise = mags[np.abs(k) > 3]
    assert np.all(noise <= 0.35 + 1e-12)
    assert mags[k == 0] == 0.0
    # deterministic per stream
    sig2 = random_noisy_signal(substream(11, "noise"))
    np.testing.assert_array_equal(sig.coeffs, sig2.coeffs)


def basin_halfwidth(sig: FourierSignal, sigma: float, span=8.0, n=321) -> float:
    """Largest w such that sign(grad) == sign(u) on (0, w] and [-w, 0)."""
    f = filter_signal(sig, sigma) if sigma > 0 else sig
    us = np.linspace(-span, span, n)
    ok = np.ones(n, bool)
    for i, u in enumerate(us):
        if u == 0:
            continue
        ok[i] = np.sign(grad_alignment(f, u)) == np.sign(u)
    center = n // 2
    w = 0
    while (center + w + 1 < n and ok[center + w + 1]
           and center - w - 1 >= 0 and ok[center - w - 1]):
        w += 1
    return abs(us[center + w])


def test_basin_widens_with_sigma():
    rng = substream(21, "noise")
    shrunk = 0
    for _ in range(6):
        sig = random_noisy_signal(rng)
        widths = [basin_halfwidth(sig, s) for s in (0.0, 1.0, 2.0, 4.0)]
        for a, b in zip(widths, widths[1:]):
            if b < a - 1e-9:
                shrunk += 1
    assert shrunk == 0, "filtering must never shrink the attraction basin"


def test_run_pilot_filtered_converges_single_harmonic():
    coeffs = np.zeros(3, dtype=complex)
    coeffs[2] = 0.5
    coeffs[0] = 0.5
    cfg = PilotConfig(mode="filtered", u0=4.0, trials=1, steps=400, lr=0.05,
                      schedule=KernelSchedule(4.0, 200, 40.0), period=64.0)
    out = run_pilot(cfg, seed=0, signal=FourierSignal(64.0, coeffs))
    assert abs(out["final_u"][0]) < 0.01


def test_run_pilot_rows_shape():
    cfg = PilotConfig(trials=2, steps=40, log_every=20)
    out = run_pilot(cfg, seed=1)
    trials = {r[0] for r in out["rows"]}
    assert trials == {0, 1}
    steps = [r[1] for r in out["rows"] if r[0] == 0]
    assert steps == [0, 20, 40]
    assert len(out["final_u"]) == 2


def test_run_pilot_modes_differ():
    cfg_f = PilotConfig(mode="filtered", trials=4, steps=300)
    cfg_n = PilotConfig(mode="unfiltered", trials=4, steps=300)
    out_f = run_pilot(cfg_f, seed=5)
    out_n = run_pilot(cfg_n, seed=5)
    reached_f = sum(abs(u) < 0.1 for u in out_f["final_u"])
    reached_n = sum(abs(u) < 0.1 for u in out_n["final_u"])
    assert reached_f >= reached_n


def test_run_pilot_full_joint_matches_reduced():
    # the two-signal joint problem with g re-solved per step is the same
    # descent as the reduced filtered mode, up to the 1/2 loss scale
    cfg_r = PilotConfig(mode="filtered", trials=2, steps=150,
                        schedule=KernelSchedule(3.0, 100, 30.0))
    cfg_j = PilotConfig(mode="full-joint", trials=2, steps=150,
                        schedule=KernelSchedule(3.0, 100, 30.0))
    out_r = run_pilot(cfg_r, seed=9)
    out_j = run_pilot(cfg_j, seed=9)
    for ur, uj in zip(out_r["final_u"], out_j["final_u"]):
        assert abs(abs(ur) - abs(uj)) < 0.5


def test_sampled_loss_mode_runs():
    cfg = PilotConfig(trials=1, steps=30, sampled_loss=True, grid_n=256)
    out = run_pilot(cfg, seed=2)
    assert np.isfinite(out["final_u"][0])

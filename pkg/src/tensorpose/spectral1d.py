"""The 1D pilot study: exact alignment losses, spectral transfer functions,
and filtered-vs-unfiltered descent experiments on band-limited signals.

Signals are finite Fourier series on a period T, so every integral, shift,
and Gaussian filtering step is exact in the coefficient domain — descent
behavior can be separated from discretization artifacts.  A sampled-signal
mode (cubic interpolation on a dense grid) exists only for qualitative
comparison.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import autodiff as ad
from .kernels import KernelSchedule, schedule_sigma
from .seeding import substream

TWO_PI = 2.0 * math.pi


class FourierSignal:
    """Real periodic signal stored as two-sided complex coefficients.

    coeffs[k_max + k] is c_k for k in [-k_max, k_max]; conjugate symmetry
    c_{-k} = conj(c_k) is enforced at construction so evaluation is real.
    """

    def __init__(self, period: float, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.size % 2 == 0:
            raise ValueError("two-sided coefficient array must have odd size")
        if period <= 0:
            raise ValueError("period must be positive")
        self.period = float(period)
        self.coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1]))
        self.k_max = coeffs.size // 2

    @classmethod
    def from_onesided(cls, period: float, c_pos: np.ndarray, c0: complex = 0.0):
        """Build from c_k for k >= 1 (c_{-k} implied by symmetry)."""
        c_pos = np.asarray(c_pos, dtype=complex)
        full = np.concatenate([np.conj(c_pos[::-1]), [complex(c0)], c_pos])
        return cls(period, full)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        phase = np.exp(1j * TWO_PI * np.outer(x, self.wavenumbers) / self.period)
        return (phase @ self.coeffs).real.reshape(x.shape)

    def evaluate_complex(self, x) -> np.ndarray:
        """Unprojected sum; its imaginary part is a symmetry check."""
        x = np.asarray(x, dtype=float)
        phase = np.exp(1j * TWO_PI * np.outer(x, self.wavenumbers) / self.period)
        return (phase @ self.coeffs).reshape(x.shape)

    def energy(self) -> float:
        """Integral of f^2 over one period (Parseval)."""
        return self.period * float(np.sum(np.abs(self.coeffs) ** 2))


def shift(f: FourierSignal, p: float) -> FourierSignal:
    """W(f, p)(x) = f(x - p): c_k <- c_k e^{-i 2 pi k p / T}."""
    factor = np.exp(-1j * TWO_PI * f.wavenumbers * p / f.period)
    return FourierSignal(f.period, f.coeffs * factor)


def filter_signal(f: FourierSignal, sigma: float) -> FourierSignal:
    """Convolve with a unit-mass continuous Gaussian of width sigma."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    kappa = f.wavenumbers / f.period
    return FourierSignal(f.period, f.coeffs * np.exp(-2.0 * math.pi ** 2 * sigma ** 2 * kappa ** 2))


def loss_alignment(f: FourierSignal, u: float) -> float:
    """Integral of (f(x) - f(x+u))^2 over one period, in closed form."""
    k = f.wavenumbers
    terms = np.abs(f.coeffs) ** 2 * (2.0 - 2.0 * np.cos(TWO_PI * k * u / f.period))
    return f.period * float(np.sum(terms))


def transfer_H(u: float, kappa) -> np.ndarray:
    """Spectral gradient weight H(u, kappa) = 4 pi kappa sin(2 pi kappa u)."""
    kappa = np.asarray(kappa, dtype=float)
    return 4.0 * math.pi * kappa * np.sin(TWO_PI * kappa * u)


def transfer_H_tilde(u: float, kappa, sigma: float) -> np.ndarray:
    """H modulated by the squared Gaussian spectrum e^{-4 pi^2 sigma^2 k^2}."""
    kappa = np.asarray(kappa, dtype=float)
    return np.exp(-4.0 * math.pi ** 2 * sigma ** 2 * kappa ** 2) * transfer_H(u, kappa)


def grad_alignment(f: FourierSignal, u: float) -> float:
    """d/du of loss_alignment, via the H transfer function."""
    kappa = f.wavenumbers / f.period
    terms = np.abs(f.coeffs) ** 2 * transfer_H(u, kappa)
    return f.period * float(np.sum(terms))


def loss_pair(a: FourierSignal, b: FourierSignal) -> float:
    """Integral of (a - b)^2 over one period (common period required)."""
    if a.period != b.period:
        raise ValueError("signals must share a period")
    ka, kb = a.k_max, b.k_max
    k = max(ka, kb)
    ca = np.pad(a.coeffs, k - ka)
    cb = np.pad(b.coeffs, k - kb)
    return a.period * float(np.sum(np.abs(ca - cb) ** 2))


def loss_joint(g: FourierSignal, f: FourierSignal, p, q) -> float:
    """sum_i integral (g(x - q_i) - f(x - p_i))^2: the two-signal joint loss."""
    return sum(loss_pair(shift(g, qi), shift(f, pi)) for qi, pi in zip(q, p))


def grad_joint_q(g: FourierSignal, f: FourierSignal, p_i: float, q_i: float) -> float:
    """d/dq_i of one term of loss_joint, in closed form."""
    k = np.arange(-max(g.k_max, f.k_max), max(g.k_max, f.k_max) + 1)
    cg = np.pad(g.coeffs, k.size // 2 - g.k_max)
    cf = np.pad(f.coeffs, k.size // 2 - f.k_max)
    omega = TWO_PI * k / g.period
    cross = cg * np.conj(cf) * np.exp(-1j * omega * (q_i - p_i))
    return g.period * float(np.sum(2.0 * (1j * omega * cross).real))


def joint_g_optimum(f: FourierSignal, p1, p2, q1, q2) -> FourierSignal:
    """The g minimizing loss_joint at fixed shifts: the average of the two
    ground-truth observations pulled back through the current estimates."""
    a = shift(f, p1 - q1)
    b = shift(f, p2 - q2)
    return FourierSignal(f.period, 0.5 * (a.coeffs + b.coeffs))


def random_noisy_signal(rng, period=64.0, base_k=3, noise_k=40,
                        base_amp=(0.5, 1.0), noise_amp=(0.0, 0.35)) -> FourierSignal:
    """Low-frequency base (k <= base_k) plus uniform-random wide-band noise."""
    mags = np.where(np.arange(1, noise_k + 1) <= base_k,
                    rng.uniform(*base_amp, noise_k),
                    rng.uniform(*noise_amp, noise_k))
    phases = rng.uniform(0.0, TWO_PI, noise_k)
    c = mags * np.exp(1j * phases)
    return FourierSignal.from_onesided(period, c)


@dataclass
class PilotConfig:
    mode: str = "filtered"  # filtered | unfiltered | full-joint
    u0: float = 4.0
    trials: int = 20
    lr: float = 0.05
    steps: int = 600
    schedule: KernelSchedule = field(
        default_factory=lambda: KernelSchedule(sigma0=4.0, cutoff_step=300,
                                               half_life=60.0))
    period: float = 64.0
    base_k: int = 3
    noise_k: int = 40
    base_amp: tuple = (0.5, 1.0)
    noise_amp: tuple = (0.0, 0.35)
    log_every: int = 10
    sampled_loss: bool = False
    grid_n: int = 1024


def _signal_for_trial(cfg: PilotConfig, seed: int, trial: int) -> FourierSignal:
    rng = substream(seed, f"pilot-trial-{trial}")
    return random_noisy_signal(rng, cfg.period, cfg.base_k, cfg.noise_k,
                               cfg.base_amp, cfg.noise_amp)


def _sampled_loss_grad(f: FourierSignal, u: float, n: int):
    """Qualitative sampled-signal route: periodic cubic spline on n samples."""
    from scipy.interpolate import CubicSpline

    xs = np.linspace(0.0, f.period, n + 1)
    spl = CubicSpline(xs, f.evaluate(xs % f.period), bc_type="periodic")
    x = xs[:-1]
    a = spl(x)
    b = spl((x + u) % f.period)
    db = spl((x + u) % f.period, 1)
    h = f.period / n
    loss = float(np.sum((a - b) ** 2) * h)
    grad = float(np.sum(-2.0 * (a - b) * db) * h)
    return loss, grad


def run_pilot(cfg: PilotConfig, seed: int, signal: FourierSignal = None) -> dict:
    """Gradient descent on the misalignment u, per trial.

    Reduced modes descend u directly on the (filtered) alignment loss;
    full-joint mode descends (q1, q2) with g re-solved to its optimum every
    step, which reduces to half the alignment loss in u = -(q1 - q2) + (p1 - p2).
    `signal` overrides the per-trial random signal (single-signal studies).
    Returns {"rows": [(trial, step, u, loss)...], "final_u": [...]}.
    """
    from .optim import Adam

    rows = []
    final_u = []
    for trial in range(cfg.trials):
        f = signal if signal is not None else _signal_for_trial(cfg, seed, trial)
        sched = cfg.schedule

        if cfg.mode == "full-joint":
            p = (0.0, -cfg.u0)  # so u = (p1-p2) - (q1-q2) starts at u0
            q = [ad.leaf(0.0), ad.leaf(0.0)]
            opt = Adam([{"params": q, "lr": cfg.lr}])
        else:
            u_leaf = ad.leaf(float(cfg.u0))
            opt = Adam([{"params": [u_leaf], "lr": cfg.lr}])

        ok = True
        for step in range(cfg.steps + 1):
            sigma = 0.0 if cfg.mode == "unfiltered" else schedule_sigma(sched, step)
            f_t = filter_signal(f, sigma) if sigma > 0 else f

            if cfg.mode == "full-joint":
                q1, q2 = q[0].item(), q[1].item()
                u = (p[0] - p[1]) - (q1 - q2)
                g_star = joint_g_optimum(f_t, p[0], p[1], q1, q2)
                loss = loss_joint(g_star, f_t, p, (q1, q2))
                grads = [grad_joint_q(g_star, f_t, p[i], (q1, q2)[i])
                         for i in range(2)]
            else:
                u = u_leaf.item()
                if cfg.sampled_loss:
                    loss, grad = _sampled_loss_grad(f_t, u, cfg.grid_n)
                else:
                    loss = loss_alignment(f_t, u)
                    grad = grad_alignment(f_t, u)
                grads = [grad]

            if not all(map(math.isfinite, [u, loss] + grads)):
                ok = False
                break
            if step % cfg.log_every == 0 or step == cfg.steps:
                rows.append((trial, step, u, loss))
            if step == cfg.steps:
                break
            if cfg.mode == "full-joint":
                for leaf_, g_ in zip(q, grads):
                    leaf_.grad = np.asarray(g_)
            else:
                u_leaf.grad = np.asarray(grads[0])
            opt.step()
            opt.zero_grad()

        final_u.append(u if ok else float("nan"))
    return {"rows": rows, "final_u": final_u}


def transfer_grid(us, kappas, sigma: float):
    """Rows (u, kappa, H, H_tilde) for heatmap plotting."""
    rows = []
    for u in us:
        for kp in kappas:
            rows.append((float(u), float(kp), float(transfer_H(u, kp)),
                         float(transfer_H_tilde(u, kp, sigma))))
    return rows

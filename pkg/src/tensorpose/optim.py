"""Adam, learning-rate schedules, and the finite-difference gradient checker.

The gradient engine itself lives in autodiff.py; this module owns the
contract that makes it trustworthy: `grad_check` compares every requested
coordinate against central finite differences and reports the worst
relative error.
"""

import logging

import numpy as np

logger = logging.getLogger(__name__)


def lr_at(group: dict, step: int) -> float:
    """Exponential decay with an optional linear warm-up ramp.

    lr0 * min(1, step/warmup) * gamma^(step/decay_steps); warmup=0 disables
    the ramp, gamma=1 disables decay.
    """
    lr = group["lr"]
    warmup = group.get("warmup", 0)
    if warmup:
        lr *= min(1.0, step / warmup)
    gamma = group.get("gamma", 1.0)
    if gamma != 1.0:
        lr *= gamma ** (step / group["decay_steps"])
    return lr


class Adam:
    """Standard bias-corrected Adam over named parameter groups.

    groups: [{"params": [leaf, ...], "lr": float, optional "name",
    "warmup", "gamma", "decay_steps", "grad_scale", "coord_scale"}].  A
    non-finite gradient skips that group's update for the step (logged)
    rather than poisoning the moments.

    "coord_scale" multiplies the *update* elementwise (broadcast against the
    parameter).  Adam's normalization makes per-coordinate gradient scaling
    a no-op, so this is the only way to give coordinates with different
    natural scales proportionate step sizes within one group.
    """

    def __init__(self, groups, betas=(0.9, 0.999), eps=1e-8):
        self.groups = [dict(g) for g in groups]
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m = [[np.zeros_like(p.value) for p in g["params"]]
                   for g in self.groups]
        self._v = [[np.zeros_like(p.value) for p in g["params"]]
                   for g in self.groups]

    def zero_grad(self) -> None:
        for g in self.groups:
            for p in g["params"]:
                p.grad = None

    def step(self) -> None:
        t = self.step_count + 1
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for gi, group in enumerate(self.groups):
            grads = [p.grad for p in group["params"]]
            finite = all(g is not None and np.isfinite(g).all() for g in grads)
            if not finite:
                logger.warning("skipping non-finite gradient for group %s at step %d",
                               group.get("name", gi), self.step_count)
                continue
            lr = lr_at(group, self.step_count)
            scale = group.get("grad_scale")
            coord_scale = group.get("coord_scale")
            for p, g, m, v in zip(group["params"], grads,
                                  self._m[gi], self._v[gi]):
                if scale is not None:
                    g = g * scale
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
                if coord_scale is not None:
                    update = update * coord_scale
                p.value = p.value - lr * update
        self.step_count += 1


def grad_check(loss_fn, params, h: float = 1e-6, rng=None,
               max_coords: int = None) -> dict:
    """Central-difference check of d(loss)/d(param) for every leaf in params.

    loss_fn() must rebuild the computation graph and return a scalar Tensor.
    Checks all coordinates, or a seeded random subset of max_coords per
    parameter.  Relative error uses max(|analytic|, |numeric|) as the scale,
    falling back to absolute difference when both are below 1e-8.

    Returns {"max_rel_error", "worst": (param_index, coordinate),
    "n_checked", "per_param": [...]}.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.array(p.grad if p.grad is not None else np.zeros_like(p.value))
                for p in params]

    rng = rng or np.random.default_rng(0)
    worst = (0.0, (0, ()))
    per_param = []
    n_checked = 0
    for pi, p in enumerate(params):
        flat = p.value.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        param_worst = 0.0
        for ci in coords:
            ci = int(ci)
            x0 = flat[ci]
            step = h * (1.0 + abs(x0))
            flat[ci] = x0 + step
            f_plus = loss_fn().item()
            flat[ci] = x0 - step
            f_minus = loss_fn().item()
            flat[ci] = x0
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = analytic[pi].reshape(-1)[ci]
            scale = max(abs(a), abs(numeric))
            err = abs(a - numeric) / scale if scale > 1e-8 else abs(a - numeric)
            n_checked += 1
            param_worst = max(param_worst, err)
            if err > worst[0]:
                worst = (err, (pi, np.unravel_index(ci, p.value.shape)))
        per_param.append(param_worst)
    return {"max_rel_error": worst[0], "worst": worst[1],
            "n_checked": n_checked, "per_param": per_param}

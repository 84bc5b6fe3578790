"""Central finite-difference check shared by the unit and acceptance suites."""

import numpy as np

from prefall.net import NetConfig, init_params, loss_and_grad, mean_loss

STEP = 1e-5
# denominators below this are treated as this, so coordinates that are
# zero up to rounding compare on absolute error instead
FLOOR = 1e-6


def random_instance(seed: int, H: int, K: int, B: int = 3):
    rng = np.random.default_rng(seed)
    p = init_params(NetConfig(hidden_units=H, K=K), seed)
    # perturb biases and the head too, so no coordinate is trivially zero
    p = p.with_flat(p.flat() + rng.normal(0, 0.3, p.flat().size))
    X = rng.normal(0, 1, (B, K, 6))
    y = np.arange(B) % 2
    return p, X, y


def max_rel_error(p, X, y, step: float = STEP) -> float:
    _, g = loss_and_grad(p, X, y)
    analytic = g.flat()
    flat = p.flat()
    worst = 0.0
    for i in range(flat.size):
        hi, lo = flat.copy(), flat.copy()
        hi[i] += step
        lo[i] -= step
        num = (mean_loss(p.with_flat(hi), X, y) - mean_loss(p.with_flat(lo), X, y)) / (2 * step)
        den = max(abs(num), abs(analytic[i]), FLOOR)
        worst = max(worst, abs(num - analytic[i]) / den)
    return worst

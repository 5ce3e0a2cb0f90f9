"""Minibatch gradient-noise lab: verifies the quadratic covariance model on a
1-d least-squares problem.

The model is y = w*x + noise with squared loss l_j(w) = (w x_j - y_j)^2; the
per-sample gradient is 2 x_j (w x_j - y_j). For each probe w the variance of
the size-b minibatch gradient (sampled without replacement) is estimated over
n_draws draws and fitted against a + b_coef*(w - w*)^2: the quadratic
state-dependence of the noise covariance, with `a` estimating the
Sigma_g-level noise floor at the minimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .rng import stream_generator


@dataclass(frozen=True)
class SgdLabConfig:
    n_samples: int
    batch: int
    noise_std: float
    w_grid: tuple
    n_draws: int
    seed: int
    w_star: float = 1.0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ParameterError("n_samples must be >= 1")
        if not 1 <= self.batch <= self.n_samples:
            raise ParameterError("batch must satisfy 1 <= b <= n")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be >= 0")
        if self.n_draws < 100:
            raise ParameterError("n_draws must be >= 100")
        if len(self.w_grid) < 1:
            raise ParameterError("w_grid must be non-empty")
        object.__setattr__(self, "w_grid", tuple(float(w) for w in self.w_grid))


@dataclass(frozen=True)
class SgdNoiseReport:
    """Per-probe variance table plus the quadratic fit var = a + b (w-w*)^2."""

    w_grid: np.ndarray
    variances: np.ndarray
    variance_se: np.ndarray
    a: float | None
    b: float | None
    r_squared: float | None
    status: str
    config: SgdLabConfig = field(repr=False, default=None)


def sgd_noise_experiment(cfg: SgdLabConfig) -> SgdNoiseReport:
    data_gen = stream_generator(cfg.seed, 0)
    x = data_gen.standard_normal(cfg.n_samples)
    y = cfg.w_star * x + cfg.noise_std * data_gen.standard_normal(cfg.n_samples)

    n, b = cfg.n_samples, cfg.batch
    ws = np.asarray(cfg.w_grid, dtype=float)
    variances = np.empty(ws.size)
    se = np.empty(ws.size)
    draw_gen = stream_generator(cfg.seed, 1)
    for k, w in enumerate(ws):
        grads = 2.0 * x * (w * x - y)  # per-sample gradients at this probe
        if b == n:
            variances[k] = 0.0  # full batch: the draw is the whole set, no sampling noise
            se[k] = 0.0
            continue
        g_tilde = np.empty(cfg.n_draws)
        for t in range(cfg.n_draws):
            idx = draw_gen.choice(n, size=b, replace=False)
            g_tilde[t] = grads[idx].mean()
        v = float(np.var(g_tilde, ddof=1))
        variances[k] = v
        se[k] = v * np.sqrt(2.0 / (cfg.n_draws - 1))  # Gaussian-approx SE of s^2

    if b == n:
        return SgdNoiseReport(
            w_grid=ws, variances=variances, variance_se=se,
            a=None, b=None, r_squared=None,
            status="full batch (b = n): gradient is deterministic, variance exactly 0; fit skipped",
            config=cfg,
        )
    design = np.column_stack([np.ones(ws.size), (ws - cfg.w_star) ** 2])
    # variance estimates are heteroscedastic (SE proportional to the variance
    # itself), so weight by 1/SE^2; R^2 is reported on the raw residuals
    weights = 1.0 / np.maximum(se, 1e-300) ** 2
    wsq = np.sqrt(weights)
    coef, *_ = np.linalg.lstsq(design * wsq[:, None], variances * wsq, rcond=None)
    fitted = design @ coef
    ss_res = float(np.sum((variances - fitted) ** 2))
    ss_tot = float(np.sum((variances - variances.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return SgdNoiseReport(
        w_grid=ws, variances=variances, variance_se=se,
        a=float(coef[0]), b=float(coef[1]), r_squared=r2,
        status="ok", config=cfg,
    )

"""Path generation for the power-law dynamic.

Schemes
-------
continuous-EM        Euler-Maruyama for the continuous dynamic:
                     v_{k+1} = v_k + eps*mu(v_k) + sqrt(eps)*sigma(v_k)*xi_k.
discrete-chain       The discretized dynamic. Its update is the same formula
                     with coefficients frozen over each step, so at grid times
                     it coincides with the EM chain; the sqrt(eps) noise
                     scaling keeps the chain equal to the frozen-coefficient
                     interpolation sampled at grid times. The literal
                     eps-scaled noise reading is available via
                     literal_eps_noise=True for comparison.
frozen-interpolation The piecewise-frozen continuous process recorded inside
                     intervals. Interior Brownian values are filled by a
                     Brownian bridge conditioned on the interval increment, so
                     grid-time values are bitwise identical to discrete-chain
                     under the same seed.

Randomness contract (bit-exact)
-------------------------------
Path p of a run with base seed s consumes, in order, the standard normal
stream of Generator(Philox(key=[s, p])) (see rng module): one normal per
coordinate per step, coordinate-major within a step. Frozen-interpolation
interior points draw their Brownian-bridge normals from the disjoint stream
(s, 2^32 + p), so the interval increments consume stream (s, p) exactly as
the plain chain does. Outputs are therefore a pure function of (params,
config): independent of chunk sizes, thread count, and of how many other
paths run in the same batch.

States are validated against an overflow guard |v| > 1e12: far above any
physical scale of the dynamic, tripping it signals a step size too large for
the drift stiffness rather than true blow-up (the dynamic does not explode in
finite time).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .errors import ParameterError, SimulationError
from .params import DecoupledParams, FullParams, Params
from .rng import stream_generator

OVERFLOW_GUARD = 1e12
_CHUNK = 1 << 16  # noise-block length (steps) used when chunking long runs


@dataclass(frozen=True)
class SimConfig:
    """Batch configuration: step eps, horizon T, path count, base seed,
    initial state, and the recording stride (record every k-th step)."""

    step: float
    horizon: float
    n_paths: int
    base_seed: int
    x0: np.ndarray
    record_stride: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.step) and self.step > 0):
            raise ParameterError("step must be > 0")
        if not (np.isfinite(self.horizon) and self.horizon >= self.step):
            raise ParameterError("step must not exceed horizon")
        if self.n_paths < 1:
            raise ParameterError("n_paths must be >= 1")
        if self.record_stride < 1:
            raise ParameterError("record_stride must be >= 1")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "base_seed", int(self.base_seed))
        object.__setattr__(self, "record_stride", int(self.record_stride))
        x = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise ParameterError("x0 must be a finite 1-d array")
        x.setflags(write=False)
        object.__setattr__(self, "x0", x)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "horizon": self.horizon,
            "n_paths": self.n_paths,
            "base_seed": self.base_seed,
            "x0": [float(v) for v in self.x0],
            "record_stride": self.record_stride,
        }


@dataclass(frozen=True)
class TrajectoryBatch:
    """Recorded paths: times (m,), paths (n_paths, m, d), scheme tag, config
    echo, per-path stream ids, and run metadata (assumption checks etc.)."""

    times: np.ndarray
    paths: np.ndarray
    scheme: str
    config: SimConfig
    path_streams: np.ndarray
    metadata: dict = field(default_factory=dict)
    record_steps: Optional[np.ndarray] = None

    def _steps(self) -> np.ndarray:
        if self.record_steps is not None:
            return self.record_steps
        return np.arange(self.times.size) * self.config.record_stride

    def to_csv(self, path) -> None:
        """CSV with header path,step,time,coord0,...,coordD-1 (one row per
        recorded step per path); floats use shortest round-trip repr."""
        steps = self._steps()
        d = self.paths.shape[2]
        header = "path,step,time," + ",".join(f"coord{c}" for c in range(d))
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for p in range(self.paths.shape[0]):
                for r in range(self.times.size):
                    coords = ",".join(repr(float(x)) for x in self.paths[p, r])
                    fh.write(f"{p},{int(steps[r])},{float(self.times[r])!r},{coords}\n")

    def metadata_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "config": self.config.to_dict(),
            "base_seed": self.config.base_seed,
            "path_streams": [int(s) for s in self.path_streams],
            **self.metadata,
        }

    def metadata_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class CoupledBatch:
    """Synchronously coupled pair of batches plus r_k = ||X_k - Y_k||^2 at each
    recorded step."""

    times: np.ndarray
    x_paths: np.ndarray
    y_paths: np.ndarray
    r_sq: np.ndarray
    config: SimConfig
    metadata: dict = field(default_factory=dict)


def em_step(params: Params, v: np.ndarray, xi: np.ndarray, eps: float,
            noise_scale: Optional[float] = None) -> np.ndarray:
    """One Euler-Maruyama update v + eps*mu(v) + sqrt(eps)*sigma(v)*xi.

    Reference implementation of the kernel arithmetic (used directly for the
    full dynamic and by tests); noise_scale overrides the sqrt(eps) factor for
    the literal eps-scaled chain variant.
    """
    scale = math.sqrt(eps) if noise_scale is None else noise_scale
    v = np.asarray(v, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if isinstance(params, DecoupledParams):
        diff = np.sqrt(params.eta * (params.sigma + params.rho * v * v))
        return v * (1.0 - eps * params.h) + scale * diff * xi
    quad = np.einsum("...i,ij,...j->...", v, params.sigma_h, v)
    amp = np.sqrt(params.eta * (1.0 + quad))
    root = _spectral_sqrt(params.sigma_g)
    return v - eps * (v @ params.H.T) + scale * amp[..., None] * (xi @ root.T)


def _spectral_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition; eigenvalues are clamped at
    zero below a 1e-10 tolerance. The full diffusion matrix is Sigma_g scaled
    by the state scalar eta*(1 + v^T Sigma_h v), so its per-step square root is
    this fixed root times sqrt of the scalar."""
    w, vecs = np.linalg.eigh(m)
    if np.any(w < -1e-10 * max(1.0, float(w[-1]))):
        raise ParameterError("diffusion matrix not positive semidefinite")
    return (vecs * np.sqrt(np.clip(w, 0.0, None))) @ vecs.T


@numba.njit(cache=True)
def _em_record_chunk(v, noise, eps, noise_scale, h, es, er, k0, stride, rec, overflow):
    """Advance every path through one noise chunk, recording stride-multiple
    steps into rec; overflow[p] records the first offending step."""
    n, m, d = noise.shape
    for p in range(n):
        if overflow[p] >= 0:
            continue
        for j in range(m):
            bad = False
            for c in range(d):
                x = v[p, c]
                x = x * (1.0 - eps * h[c]) + noise_scale * math.sqrt(es[c] + er[c] * x * x) * noise[p, j, c]
                v[p, c] = x
                if not math.isfinite(x) or abs(x) > OVERFLOW_GUARD:
                    bad = True
            k = k0 + j + 1
            if bad:
                overflow[p] = k
                break
            if k % stride == 0:
                r = k // stride
                for c in range(d):
                    rec[p, r, c] = v[p, c]


@numba.njit(cache=True, parallel=True)
def _exit_chunk(v, noise, eps, noise_scale, h, es, er, lo, hi, k0, done):
    """Advance interval-exit paths (d=1) through one noise chunk. done[i] takes
    the exit step (positive), or the negated overflow step - 1 on overflow."""
    n, m = noise.shape
    for i in numba.prange(n):
        if done[i] != 0:
            continue
        x = v[i]
        for j in range(m):
            x = x * (1.0 - eps * h) + noise_scale * math.sqrt(es + er * x * x) * noise[i, j]
            if not math.isfinite(x) or abs(x) > OVERFLOW_GUARD:
                done[i] = -(k0 + j + 1) - 1
                break
            if x <= lo or x >= hi:
                done[i] = k0 + j + 1
                break
        v[i] = x


_NOISE_BUDGET = 1 << 24  # max doubles held in one noise buffer (~128 MB)


def _time_chunk(n_paths: int, d: int) -> int:
    return max(1, min(_CHUNK, _NOISE_BUDGET // max(n_paths * d, 1)))


def _path_block(k_total: int, d: int, n_paths: int) -> int:
    return max(1, min(n_paths, _NOISE_BUDGET // max(k_total * d, 1)))


def _record_times(cfg: SimConfig) -> np.ndarray:
    n_rec = cfg.n_steps // cfg.record_stride
    return cfg.step * cfg.record_stride * np.arange(n_rec + 1)


def _decoupled_record_run(params: DecoupledParams, cfg: SimConfig, noise_scale: float,
                          scheme: str, metadata: dict) -> TrajectoryBatch:
    d = params.dim
    x0 = np.broadcast_to(cfg.x0, (d,)) if cfg.x0.size == 1 else cfg.x0
    if x0.size != d:
        raise ParameterError("x0 length does not match parameter dimension")
    n, k_total, stride = cfg.n_paths, cfg.n_steps, cfg.record_stride
    rec = np.full((n, k_total // stride + 1, d), np.nan)
    rec[:, 0, :] = x0
    es = params.eta * params.sigma
    er = params.eta * params.rho
    # two-level chunking (path blocks x time chunks) keeps the noise buffer
    # bounded while drawing each path's stream in as few calls as possible
    block = _path_block(k_total, d, n)
    for p0 in range(0, n, block):
        p1 = min(p0 + block, n)
        nb = p1 - p0
        v = np.tile(np.asarray(x0, dtype=float), (nb, 1))
        overflow = np.full(nb, -1, dtype=np.int64)
        gens = [stream_generator(cfg.base_seed, p) for p in range(p0, p1)]
        chunk = _time_chunk(nb, d)
        k0 = 0
        rec_block = rec[p0:p1]
        while k0 < k_total:
            m = min(chunk, k_total - k0)
            noise = np.empty((nb, m, d))
            for i, gen in enumerate(gens):
                noise[i] = gen.standard_normal((m, d))
            _em_record_chunk(v, noise, cfg.step, noise_scale, params.h, es, er,
                             k0, stride, rec_block, overflow)
            if np.any(overflow >= 0):
                i = int(np.argmax(overflow >= 0))
                raise SimulationError(
                    f"overflow on path {p0 + i} at step {int(overflow[i])} "
                    f"(|v| > {OVERFLOW_GUARD:g}): step size too large for these parameters"
                )
            k0 += m
    return TrajectoryBatch(
        times=_record_times(cfg), paths=rec, scheme=scheme, config=cfg,
        path_streams=np.arange(n), metadata=metadata,
    )


def _full_record_run(params: FullParams, cfg: SimConfig, noise_scale: float,
                     scheme: str, metadata: dict) -> TrajectoryBatch:
    d = params.dim
    x0 = np.broadcast_to(cfg.x0, (d,)) if cfg.x0.size == 1 else cfg.x0
    if x0.size != d:
        raise ParameterError("x0 length does not match parameter dimension")
    n, k_total, stride = cfg.n_paths, cfg.n_steps, cfg.record_stride
    rec = np.full((n, k_total // stride + 1, d), np.nan)
    rec[:, 0, :] = x0
    v = np.tile(np.asarray(x0, dtype=float), (n, 1))
    gens = [stream_generator(cfg.base_seed, p) for p in range(n)]
    root = _spectral_sqrt(params.sigma_g)
    chunk = _time_chunk(n, d)
    k0 = 0
    while k0 < k_total:
        m = min(chunk, k_total - k0)
        noise = np.empty((n, m, d))
        for p in range(n):
            noise[p] = gens[p].standard_normal((m, d))
        for j in range(m):
            quad = np.einsum("pi,ij,pj->p", v, params.sigma_h, v)
            amp = np.sqrt(params.eta * (1.0 + quad))
            v = v - cfg.step * (v @ params.H.T) + noise_scale * amp[:, None] * (noise[:, j] @ root.T)
            k = k0 + j + 1
            bad = ~np.all(np.isfinite(v) & (np.abs(v) <= OVERFLOW_GUARD), axis=1)
            if np.any(bad):
                p = int(np.argmax(bad))
                raise SimulationError(
                    f"overflow on path {p} at step {k} (|v| > {OVERFLOW_GUARD:g}): "
                    "step size too large for these parameters"
                )
            if k % stride == 0:
                rec[:, k // stride, :] = v
        k0 += m
    return TrajectoryBatch(
        times=_record_times(cfg), paths=rec, scheme=scheme, config=cfg,
        path_streams=np.arange(n), metadata=metadata,
    )


def simulate_batch(params: Params, cfg: SimConfig) -> TrajectoryBatch:
    """Euler-Maruyama batch of the continuous dynamic (scheme continuous-EM)."""
    scale = math.sqrt(cfg.step)
    if isinstance(params, DecoupledParams):
        return _decoupled_record_run(params, cfg, scale, "continuous-EM", {})
    return _full_record_run(params, cfg, scale, "continuous-EM", {})


def step_size_assumption(params: DecoupledParams, eps: float) -> dict:
    """Advisory check of {eta*rho_i, rho_i} <= h_i <= 1/eps, the large-batch /
    small-learning-rate regime where the discretization error bounds hold
    (reported, never fatal: violating it voids the bounds, not the simulation)."""
    upper = np.maximum(params.eta * params.rho, params.rho)
    holds = bool(np.all(upper <= params.h) and np.all(params.h <= 1.0 / eps))
    detail = "max(eta*rho, rho) <= h <= 1/eps"
    return {"holds": holds, "detail": detail}


def simulate_discrete_chain(params: DecoupledParams, cfg: SimConfig,
                            substeps: int = 1,
                            literal_eps_noise: bool = False) -> TrajectoryBatch:
    """Discrete chain z_{k+1} = z_k + eps*mu(z_k) + sqrt(eps)*sigma(z_k)*xi_k,
    equal in law (and bitwise, per seed) to the frozen-coefficient
    interpolation sampled at grid times.

    substeps > 1 records the interpolation inside each interval (scheme tag
    frozen-interpolation): coefficients stay frozen at the interval start and
    interior Brownian values come from a bridge conditioned on the interval
    increment, so grid-time values are unchanged bitwise.
    literal_eps_noise=True switches to the literal eps-scaled noise reading
    (z + eps*mu + eps*xi, xi ~ N(0, sigma^2(z_k))) for comparison only.
    """
    if substeps < 1:
        raise ParameterError("substeps must be >= 1")
    meta = {"assumption_check": step_size_assumption(params, cfg.step),
            "noise_scaling": "eps" if literal_eps_noise else "sqrt(eps)"}
    scale = cfg.step if literal_eps_noise else math.sqrt(cfg.step)
    if substeps == 1:
        return _decoupled_record_run(params, cfg, scale, "discrete-chain", meta)
    return _frozen_interpolation_run(params, cfg, substeps, scale, meta)


def _frozen_interpolation_run(params: DecoupledParams, cfg: SimConfig, substeps: int,
                              scale: float, meta: dict) -> TrajectoryBatch:
    d = params.dim
    x0 = np.broadcast_to(cfg.x0, (d,)) if cfg.x0.size == 1 else np.asarray(cfg.x0, float)
    n, k_total, eps = cfg.n_paths, cfg.n_steps, cfg.step
    dt = eps / substeps
    times = np.arange(k_total * substeps + 1) * dt
    rec = np.empty((n, times.size, d))
    rec[:, 0, :] = x0
    z = np.tile(x0, (n, 1))
    gens = [stream_generator(cfg.base_seed, p) for p in range(n)]
    # bridge noise lives on disjoint streams so the interval increments consume
    # the path stream exactly as the plain chain does (bitwise grid equality)
    bridge_gens = [stream_generator(cfg.base_seed, (1 << 32) + p) for p in range(n)]
    es = params.eta * params.sigma
    er = params.eta * params.rho
    for k in range(k_total):
        xi = np.empty((n, d))
        bridge = np.empty((n, substeps - 1, d))
        for p in range(n):
            xi[p] = gens[p].standard_normal(d)
            bridge[p] = bridge_gens[p].standard_normal((substeps - 1, d))
        drift = -params.h * z
        diff = np.sqrt(es + er * z * z)
        inc_total = scale * xi  # interval noise increment
        w = np.zeros((n, d))
        for j in range(1, substeps):
            # Brownian bridge from w at t_{j-1} to inc_total at eps
            remain = eps - (j - 1) * dt
            mean = w + (inc_total - w) * (dt / remain)
            sd = math.sqrt(dt * (remain - dt) / remain)
            w = mean + sd * bridge[:, j - 1]
            rec[:, k * substeps + j, :] = z + drift * (j * dt) + diff * w
        # grid update spelled exactly like the chain kernel so grid-time
        # values are bitwise identical under the same seed
        z = z * (1.0 - eps * params.h) + scale * np.sqrt(es + er * z * z) * xi
        if not np.all(np.isfinite(z)) or np.any(np.abs(z) > OVERFLOW_GUARD):
            bad = ~np.all(np.isfinite(z) & (np.abs(z) <= OVERFLOW_GUARD), axis=1)
            p = int(np.argmax(bad))
            raise SimulationError(
                f"overflow on path {p} at step {k + 1} (|v| > {OVERFLOW_GUARD:g}): "
                "step size too large for these parameters"
            )
        rec[:, (k + 1) * substeps, :] = z
    return TrajectoryBatch(times=times, paths=rec, scheme="frozen-interpolation",
                           config=cfg, path_streams=np.arange(n), metadata=meta,
                           record_steps=np.arange(times.size))


def couple_paths(params: Params, cfg: SimConfig, x0, y0) -> CoupledBatch:
    """Two copies driven by the same normal increments (synchronous coupling).

    Paths X from x0 and Y from y0 share every xi_k, realizing the
    sigma(x)sigma(y)^T cross block of the coupling generator; r_k =
    ||X_k - Y_k||^2 is recorded at every recorded step.
    """
    d = params.dim
    x0 = np.broadcast_to(np.atleast_1d(np.asarray(x0, float)), (d,))
    y0 = np.broadcast_to(np.atleast_1d(np.asarray(y0, float)), (d,))
    n, k_total, stride = cfg.n_paths, cfg.n_steps, cfg.record_stride
    n_rec = k_total // stride
    xs = np.empty((n, n_rec + 1, d))
    ys = np.empty((n, n_rec + 1, d))
    xs[:, 0, :] = x0
    ys[:, 0, :] = y0
    x = np.tile(x0, (n, 1))
    y = np.tile(y0, (n, 1))
    gens = [stream_generator(cfg.base_seed, p) for p in range(n)]
    scale = math.sqrt(cfg.step)
    chunk = _time_chunk(n, d)
    k0 = 0
    if isinstance(params, FullParams):
        root = _spectral_sqrt(params.sigma_g)
    while k0 < k_total:
        m = min(chunk, k_total - k0)
        noise = np.empty((n, m, d))
        for p in range(n):
            noise[p] = gens[p].standard_normal((m, d))
        for j in range(m):
            xi = noise[:, j]
            if isinstance(params, DecoupledParams):
                dx = np.sqrt(params.eta * (params.sigma + params.rho * x * x))
                dy = np.sqrt(params.eta * (params.sigma + params.rho * y * y))
                x = x * (1.0 - cfg.step * params.h) + scale * dx * xi
                y = y * (1.0 - cfg.step * params.h) + scale * dy * xi
            else:
                qx = np.einsum("pi,ij,pj->p", x, params.sigma_h, x)
                qy = np.einsum("pi,ij,pj->p", y, params.sigma_h, y)
                gx = np.sqrt(params.eta * (1.0 + qx))[:, None]
                gy = np.sqrt(params.eta * (1.0 + qy))[:, None]
                common = xi @ root.T
                x = x - cfg.step * (x @ params.H.T) + scale * gx * common
                y = y - cfg.step * (y @ params.H.T) + scale * gy * common
            k = k0 + j + 1
            for arr, name in ((x, "X"), (y, "Y")):
                bad = ~np.all(np.isfinite(arr) & (np.abs(arr) <= OVERFLOW_GUARD), axis=1)
                if np.any(bad):
                    p = int(np.argmax(bad))
                    raise SimulationError(
                        f"overflow on coupled path {name}{p} at step {k}: "
                        "step size too large for these parameters"
                    )
            if k % stride == 0:
                xs[:, k // stride, :] = x
                ys[:, k // stride, :] = y
        k0 += m
    r_sq = np.sum((xs - ys) ** 2, axis=2)
    return CoupledBatch(times=_record_times(cfg), x_paths=xs, y_paths=ys,
                        r_sq=r_sq, config=cfg, metadata={})


def exit_steps_decoupled_1d(params: DecoupledParams, x0: float, lo: float, hi: float,
                            eps: float, max_steps: int, n_paths: int, base_seed: int,
                            noise_scale: Optional[float] = None) -> np.ndarray:
    """First grid step at which each path leaves (lo, hi); -1 marks paths still
    inside at max_steps (censored). Crossing is detected at grid times only."""
    if params.dim != 1:
        raise ParameterError("interval exit requires d=1 parameters")
    if not (lo < hi):
        raise ParameterError("domain must satisfy lo < hi")
    if x0 <= lo or x0 >= hi:
        return np.zeros(n_paths, dtype=np.int64)
    scale = math.sqrt(eps) if noise_scale is None else noise_scale
    gens = [stream_generator(base_seed, p) for p in range(n_paths)]
    done = np.zeros(n_paths, dtype=np.int64)
    v = np.full(n_paths, float(x0))
    active = np.arange(n_paths)
    es = float(params.eta * params.sigma[0])
    er = float(params.eta * params.rho[0])
    h = float(params.h[0])
    k0 = 0
    while active.size and k0 < max_steps:
        m = min(_time_chunk(active.size, 1), max_steps - k0)
        noise = np.empty((active.size, m))
        for i, p in enumerate(active):
            noise[i] = gens[p].standard_normal(m)
        sub = np.zeros(active.size, dtype=np.int64)
        _exit_chunk(v, noise, eps, scale, h, es, er, lo, hi, k0, sub)
        finished = sub != 0
        if np.any(finished):
            over = sub < 0
            if np.any(over):
                i = int(np.argmax(over))
                raise SimulationError(
                    f"overflow on path {int(active[i])} at step {int(-sub[i] - 1)} "
                    f"(|v| > {OVERFLOW_GUARD:g}): step size too large for these parameters"
                )
            done[active[finished]] = sub[finished]
            keep = ~finished
            v = v[keep]
            active = active[keep]
        k0 += m
    done[done == 0] = -1
    return done


def exit_steps_ball(params: Params, x0: np.ndarray, radius: float, eps: float,
                    max_steps: int, n_paths: int, base_seed: int) -> np.ndarray:
    """Ball-exit analogue of exit_steps_decoupled_1d for any dimension (numpy
    step loop; first grid step with ||v|| >= radius)."""
    d = params.dim
    x0 = np.broadcast_to(np.atleast_1d(np.asarray(x0, float)), (d,))
    if float(np.linalg.norm(x0)) >= radius:
        return np.zeros(n_paths, dtype=np.int64)
    gens = [stream_generator(base_seed, p) for p in range(n_paths)]
    done = np.full(n_paths, -1, dtype=np.int64)
    v = np.tile(x0, (n_paths, 1))
    active = np.arange(n_paths)
    scale = math.sqrt(eps)
    if isinstance(params, FullParams):
        root = _spectral_sqrt(params.sigma_g)
    k0 = 0
    while active.size and k0 < max_steps:
        m = min(_time_chunk(active.size, d), max_steps - k0)
        noise = np.empty((active.size, m, d))
        for i, p in enumerate(active):
            noise[i] = gens[p].standard_normal((m, d))
        for j in range(m):
            xi = noise[:, j]
            if isinstance(params, DecoupledParams):
                diff = np.sqrt(params.eta * (params.sigma + params.rho * v * v))
                v = v * (1.0 - eps * params.h) + scale * diff * xi
            else:
                quad = np.einsum("pi,ij,pj->p", v, params.sigma_h, v)
                amp = np.sqrt(params.eta * (1.0 + quad))[:, None]
                v = v - eps * (v @ params.H.T) + scale * amp * (xi @ root.T)
            if not np.all(np.isfinite(v)) or np.any(np.abs(v) > OVERFLOW_GUARD):
                bad = ~np.all(np.isfinite(v) & (np.abs(v) <= OVERFLOW_GUARD), axis=1)
                i = int(np.argmax(bad))
                raise SimulationError(
                    f"overflow on path {int(active[i])} at step {k0 + j + 1} "
                    f"(|v| > {OVERFLOW_GUARD:g}): step size too large for these parameters"
                )
            out = np.linalg.norm(v, axis=1) >= radius
            if np.any(out):
                done[active[out]] = k0 + j + 1
                keep = ~out
                v = v[keep]
                active = active[keep]
                noise = noise[keep]
                if not active.size:
                    break
        k0 += m
    return done


def discretization_gap(params: DecoupledParams, eps: float, horizon: float,
                       n_paths: int, seed: int, refine: int = 64,
                       x0: float = 0.0) -> dict:
    """Synchronous-coupling measurement of the chain-vs-continuous gap.

    Runs the discrete chain at step eps and a fine EM reference at eps/refine
    driven by the same Brownian path (coarse increments are the summed fine
    increments) to the common horizon, and returns the coupled mean-square
    terminal gap together with the order-statistics W2^2 of the terminal
    sample sets. Empirical W2 between *independently* simulated sets is
    floored by O(1/n) sampling noise and cannot exhibit the O(eps) law; the
    shared-noise coupling is the measurement the discretization bound is
    about. Uses a single vectorized stream (seed, 0): deterministic for a
    fixed config.
    """
    if params.dim != 1:
        raise ParameterError("discretization_gap requires d=1 parameters")
    gen = stream_generator(seed, 0)
    k_total = int(round(horizon / eps))
    dt = eps / refine
    sq = math.sqrt(dt)
    h = float(params.h[0])
    es = float(params.eta * params.sigma[0])
    er = float(params.eta * params.rho[0])
    v = np.full(n_paths, float(x0))
    z = np.full(n_paths, float(x0))
    for _ in range(k_total):
        inc = np.zeros(n_paths)
        for _ in range(refine):
            xi = gen.standard_normal(n_paths)
            v = v * (1.0 - dt * h) + sq * np.sqrt(es + er * v * v) * xi
            inc += sq * xi
        z = z * (1.0 - eps * h) + np.sqrt(es + er * z * z) * inc
    gap = float(np.mean((v - z) ** 2))
    w2_sq = float(np.mean((np.sort(v) - np.sort(z)) ** 2))
    return {
        "eps": eps, "horizon": horizon, "n_paths": n_paths, "refine": refine,
        "coupled_mean_sq": gap, "w2_sq_sorted": w2_sq,
        "v_terminal": v, "z_terminal": z,
    }

"""Parameter containers and analytic constants of the power-law dynamic.

The coupled dynamic is

    dv = -H v dt + sqrt(eta * Sigma_g * (1 + v^T Sigma_h v)) dB,   v = w - w*,

and, when H, Sigma_g, Sigma_h commute, an orthogonal change of coordinates
decouples it into scalar SDEs

    dv_i = -h_i v_i dt + sqrt(eta * sigma_i + eta * rho_i * v_i^2) dB_i.

This module holds the two parameter containers, drift/diffusion evaluation,
the stationary tail index kappa_i = -(eta*rho_i + h_i)/(eta*rho_i), moment
finiteness, the Wasserstein contraction constants, the ergodicity threshold
eta < h_min / (d^2 g_max^2 H_sum), and the decoupling transform.

Everything here is a pure function of immutable inputs; arrays stored on the
containers are set read-only so values can be shared across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ParameterError

# Relative tolerances fixed by the container contracts.
SYMMETRY_RTOL = 1e-12      # asymmetry beyond this is an error, below it is repaired
COMMUTATOR_RTOL = 1e-8     # Frobenius norm of commutators, relative
DIAG_RTOL = 1e-8           # off-diagonal mass allowed after decoupling
ORTHO_TOL = 1e-10          # ||QQ^T - I|| allowed for the returned basis


def _as_matrix(a, name: str, d: int) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.shape != (d, d):
        raise ParameterError(f"{name} must be a {d}x{d} matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ParameterError(f"{name} has non-finite entries")
    return m


def _symmetrize(m: np.ndarray, name: str) -> np.ndarray:
    scale = np.linalg.norm(m)
    asym = np.linalg.norm(m - m.T)
    if scale > 0 and asym > SYMMETRY_RTOL * scale:
        raise ParameterError(
            f"{name} is not symmetric (relative asymmetry {asym / scale:.3e} > {SYMMETRY_RTOL})"
        )
    return 0.5 * (m + m.T)


def _check_positive_definite(m: np.ndarray, name: str) -> None:
    w = np.linalg.eigvalsh(m)
    if w[0] <= 0.0:
        raise ParameterError(f"{name} must be positive definite (min eigenvalue {w[0]:.3e})")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FullParams:
    """Coupled d-dimensional dynamic: Hessian H, noise factors Sigma_g, Sigma_h,
    minimizer w*, learning rate eta.

    H, Sigma_g, Sigma_h must be symmetric positive definite; inputs are
    symmetrized when the asymmetry is below 1e-12 relative and rejected above.
    """

    H: np.ndarray
    sigma_g: np.ndarray
    sigma_h: np.ndarray
    w_star: np.ndarray
    eta: float

    def __post_init__(self):
        w = np.asarray(self.w_star, dtype=float).reshape(-1)
        d = w.size
        if d < 1:
            raise ParameterError("w_star must have at least one entry")
        if not np.all(np.isfinite(w)):
            raise ParameterError("w_star has non-finite entries")
        H = _symmetrize(_as_matrix(self.H, "H", d), "H")
        sg = _symmetrize(_as_matrix(self.sigma_g, "sigma_g", d), "sigma_g")
        sh = _symmetrize(_as_matrix(self.sigma_h, "sigma_h", d), "sigma_h")
        for m, name in ((H, "H"), (sg, "sigma_g"), (sh, "sigma_h")):
            _check_positive_definite(m, name)
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ParameterError("eta must be > 0")
        object.__setattr__(self, "H", _freeze(H))
        object.__setattr__(self, "sigma_g", _freeze(sg))
        object.__setattr__(self, "sigma_h", _freeze(sh))
        object.__setattr__(self, "w_star", _freeze(w))
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def dim(self) -> int:
        return self.w_star.size


@dataclass(frozen=True)
class DecoupledParams:
    """Coordinatewise dynamic dv_i = -h_i v_i dt + sqrt(eta(sigma_i + rho_i v_i^2)) dB_i.

    rho_i = 0 is the permitted Ornstein-Uhlenbeck degenerate case; it is
    rejected only by operations that divide by rho (tail index, power-law
    closed forms).
    """

    h: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    eta: float

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        s = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        r = np.atleast_1d(np.asarray(self.rho, dtype=float))
        if not (h.shape == s.shape == r.shape) or h.ndim != 1 or h.size < 1:
            raise ParameterError("h, sigma, rho must be 1-d arrays of equal length")
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise ParameterError("h_i must be > 0")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ParameterError("sigma_i must be > 0")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ParameterError("rho_i must be >= 0")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ParameterError("eta must be > 0")
        object.__setattr__(self, "h", _freeze(h))
        object.__setattr__(self, "sigma", _freeze(s))
        object.__setattr__(self, "rho", _freeze(r))
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def dim(self) -> int:
        return self.h.size


Params = Union[FullParams, DecoupledParams]


@dataclass(frozen=True)
class ContractionConstants:
    """Constants of the synchronous-coupling contraction bound.

    theta_lb lower-bounds the drift dissipation theta, lambda_ub upper-bounds
    the diffusion mismatch lambda, c_full = 2 d lambda_ub - 2 theta_lb is the
    certified exponent for the coupled dynamic, and eta_threshold is the
    ergodicity threshold h_min / (d^2 g_max^2 H_sum). For decoupled parameters
    c_s = max_i (eta rho_i - h_i) is the dimension-free exponent.
    """

    theta_lb: float
    lambda_ub: float
    c_full: float
    eta_threshold: float
    c_s: float | None = None
    h_min: float = field(default=float("nan"), repr=False)
    g_max: float = field(default=float("nan"), repr=False)
    h_sum: float = field(default=float("nan"), repr=False)


def _validate_state(params: Params, v) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape[-1] != params.dim or not np.all(np.isfinite(arr)):
        raise ParameterError("invalid state")
    return arr


def drift_diffusion(params: Params, v):
    """Evaluate drift mu(v) and squared diffusion sigma^2(v) at a centered state.

    Returns (drift, diffusion_sq): for DecoupledParams both are length-d arrays
    (diffusion_sq holds the diagonal eta*sigma_i + eta*rho_i v_i^2); for
    FullParams drift is length-d and diffusion_sq is the d x d matrix
    eta * Sigma_g * (1 + v^T Sigma_h v).
    """
    x = _validate_state(params, v)
    if isinstance(params, DecoupledParams):
        drift = -params.h * x
        diff_sq = params.eta * (params.sigma + params.rho * x * x)
        return drift, diff_sq
    drift = -params.H @ x
    quad = float(x @ params.sigma_h @ x)
    diff_sq = params.eta * params.sigma_g * (1.0 + quad)
    return drift, diff_sq


def tail_index(params: DecoupledParams) -> np.ndarray:
    """Stationary tail indices kappa_i = -(eta*rho_i + h_i)/(eta*rho_i).

    Always < -1 for valid parameters. Raises for any rho_i = 0, where the
    stationary law is Gaussian and the index degenerates.
    """
    if np.any(params.rho == 0.0):
        raise ParameterError("tail index undefined (OU limit)")
    return -(params.eta * params.rho + params.h) / (params.eta * params.rho)


def moment_finite(kappa: float, order: int) -> bool:
    """Whether the stationary moment of even `order` is finite for tail index kappa.

    The moment integral int x^order (1 + c x^2)^kappa dx converges iff
    order + 2*kappa < -1.
    """
    if order < 0 or order % 2 != 0:
        raise ParameterError("order must be a non-negative even integer")
    return order + 2.0 * kappa < -1.0


def _constants_parts(params: Params) -> tuple[int, float, float, float]:
    if isinstance(params, DecoupledParams):
        # The decoupled form folds the Sigma_g diagonal into rho, so the
        # Sigma_h eigenvalues in this frame are rho_i / sigma_i.
        h_min = float(np.min(params.h))
        g_max = float(np.sqrt(np.max(params.sigma)))
        h_sum = float(np.sum(params.rho / params.sigma))
        return params.dim, h_min, g_max, h_sum
    h_min = float(np.linalg.eigvalsh(params.H)[0])
    g_max = float(np.sqrt(np.linalg.eigvalsh(params.sigma_g)[-1]))
    h_sum = float(np.trace(params.sigma_h))
    return params.dim, h_min, g_max, h_sum


def contraction_constants(params: Params) -> ContractionConstants:
    """Contraction/ergodicity constants: theta >= h_min, lambda <= d eta g_max^2 H_sum,
    c = 2 d lambda - 2 theta, threshold eta < h_min/(d^2 g_max^2 H_sum), and for
    decoupled input the dimension-free c_s = max_i (eta rho_i - h_i)."""
    d, h_min, g_max, h_sum = _constants_parts(params)
    theta_lb = h_min
    lambda_ub = d * params.eta * g_max**2 * h_sum
    c_full = 2.0 * d * lambda_ub - 2.0 * theta_lb
    if h_sum > 0:
        eta_threshold = h_min / (d**2 * g_max**2 * h_sum)
    else:
        eta_threshold = float("inf")  # rho = 0 everywhere: OU contracts for any eta
    c_s = None
    if isinstance(params, DecoupledParams):
        c_s = float(np.max(params.eta * params.rho - params.h))
    return ContractionConstants(
        theta_lb=theta_lb,
        lambda_ub=lambda_ub,
        c_full=c_full,
        eta_threshold=eta_threshold,
        c_s=c_s,
        h_min=h_min,
        g_max=g_max,
        h_sum=h_sum,
    )


def ergodicity_check(params: Params) -> tuple[bool, float]:
    """Check the small-learning-rate ergodicity condition.

    Returns (passes, threshold) with passes = (eta < threshold). Passing
    certifies a unique stationary distribution; failing does not certify the
    converse.
    """
    threshold = contraction_constants(params).eta_threshold
    return bool(params.eta < threshold), threshold


def _simultaneous_eigenbasis(mats: list[np.ndarray]) -> np.ndarray:
    """Columns of the returned matrix form a common eigenbasis of the
    (commuting, symmetric) input matrices: refine an eigenbasis of the first
    matrix within each repeated-eigenvalue cluster using the next matrix."""
    d = mats[0].shape[0]
    basis = np.eye(d)
    blocks: list[np.ndarray] = [np.arange(d)]
    for m in mats:
        next_blocks: list[np.ndarray] = []
        for idx in blocks:
            if idx.size == 1:
                next_blocks.append(idx)
                continue
            sub = basis[:, idx].T @ m @ basis[:, idx]
            w, vecs = np.linalg.eigh(0.5 * (sub + sub.T))
            basis[:, idx] = basis[:, idx] @ vecs
            # split the block where eigenvalue gaps are resolvable
            gap_tol = 1e-7 * max(1.0, float(np.max(np.abs(w))))
            start = 0
            for j in range(1, idx.size + 1):
                if j == idx.size or w[j] - w[j - 1] > gap_tol:
                    next_blocks.append(idx[start:j])
                    start = j
        blocks = next_blocks
    return basis


def decouple(params: FullParams) -> tuple[DecoupledParams, np.ndarray]:
    """Diagonalize the coupled dynamic into DecoupledParams.

    Requires H, Sigma_g, Sigma_h to pairwise commute (relative Frobenius
    commutator <= 1e-8). Returns (decoupled, Q) with Q orthogonal, rows the
    shared eigenvectors, so Q A Q^T is diagonal for all three inputs and
    Q^T diag(h) Q reproduces H. The diffusion folding is
    sigma_i = (Q Sigma_g Q^T)_ii and rho_i = sigma_i * (Q Sigma_h Q^T)_ii,
    which makes the decoupled diffusion match the transformed full diffusion
    coordinatewise.
    """
    mats = [params.H, params.sigma_g, params.sigma_h]
    names = ["H", "sigma_g", "sigma_h"]
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = mats[i], mats[j]
            comm = a @ b - b @ a
            scale = np.linalg.norm(a) * np.linalg.norm(b)
            if scale > 0 and np.linalg.norm(comm) > COMMUTATOR_RTOL * scale:
                raise ParameterError(
                    "not codiagonalizable: "
                    f"[{names[i]}, {names[j]}] relative norm "
                    f"{np.linalg.norm(comm) / scale:.3e} > {COMMUTATOR_RTOL}"
                )
    basis = _simultaneous_eigenbasis(mats)
    q = basis.T
    if np.max(np.abs(q @ q.T - np.eye(params.dim))) > ORTHO_TOL:
        raise ParameterError("decoupling basis failed orthogonality check")
    diags = []
    for m, name in zip(mats, names):
        t = q @ m @ q.T
        off = t - np.diag(np.diag(t))
        if np.linalg.norm(off) > DIAG_RTOL * max(np.linalg.norm(m), 1e-300):
            raise ParameterError(f"not codiagonalizable: {name} not diagonal in the common basis")
        diags.append(np.diag(t).copy())
    h_diag, g_diag, sh_diag = diags
    dec = DecoupledParams(h=h_diag, sigma=g_diag, rho=g_diag * sh_diag, eta=params.eta)
    return dec, q

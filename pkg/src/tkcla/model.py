"""Coefficients, operators and Lyapunov quantities of the TK network and its CLA.

Concentrations are indexed cyclically: species ``k - 1`` and ``k + 1`` wrap
around modulo ``d``. All functions are pure and operate on 1-D float arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class InvalidModelError(ValueError):
    pass


class DegenerateDriftError(ArithmeticError):
    """Raised when the reflection direction is requested where b(x) = 0."""


@dataclass(frozen=True)
class ModelParams:
    """Primed (concentration-scale) rates plus the raw CTMC rates they imply.

    ``kappa = kappa_p / V``, ``lambda_ = lambda_p * V`` and ``delta = delta_p``.
    """

    d: int
    V: float
    kappa_p: float
    lambda_p: float
    delta_p: float
    kappa: float = field(init=False)
    lambda_: float = field(init=False)
    delta: float = field(init=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise InvalidModelError(f"d must be an integer >= 2, got {self.d}")
        for name in ("V", "kappa_p", "lambda_p", "delta_p"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidModelError(f"{name} must be a finite positive real, got {value}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "kappa", self.kappa_p / self.V)
        object.__setattr__(self, "lambda_", self.lambda_p * self.V)
        object.__setattr__(self, "delta", self.delta_p)

    @property
    def mass_fixed_point(self) -> float:
        """Stationary mean of the total concentration, d * lambda' / delta'."""
        return self.d * self.lambda_p / self.delta_p

    @property
    def n_noise(self) -> int:
        return 3 if self.d == 2 else 2 * self.d

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "V": self.V,
            "kappa_p": self.kappa_p,
            "lambda_p": self.lambda_p,
            "delta_p": self.delta_p,
            "kappa": self.kappa,
            "lambda": self.lambda_,
            "delta": self.delta,
        }


def derive_params(d, V, kappa_p, lambda_p, delta_p) -> ModelParams:
    return ModelParams(d=d, V=V, kappa_p=kappa_p, lambda_p=lambda_p, delta_p=delta_p)


def _state(params: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d,):
        raise ValueError(f"state must have shape ({params.d},), got {x.shape}")
    return x


def prev_idx(d: int) -> np.ndarray:
    """Index of species k - 1 for every k (cyclic)."""
    return np.roll(np.arange(d), 1)


def next_idx(d: int) -> np.ndarray:
    """Index of species k + 1 for every k (cyclic)."""
    return np.roll(np.arange(d), -1)


def drift(params: ModelParams, x) -> np.ndarray:
    x = _state(params, x)
    xm, xp = np.roll(x, 1), np.roll(x, -1)
    return params.kappa_p * (xm - xp) * x + params.lambda_p - params.delta_p * x


def covariance(params: ModelParams, x) -> np.ndarray:
    x = _state(params, x)
    d, k = params.d, params.kappa_p
    xm, xp = np.roll(x, 1), np.roll(x, -1)
    gamma = np.diag(k * (xm + xp) * x + params.lambda_p + params.delta_p * x)
    nxt = next_idx(d)
    for i in range(d):
        # For d = 2 both cyclic neighbours coincide, so the terms stack.
        j = nxt[i]
        c = k * x[i] * x[j]
        gamma[i, j] -= c
        gamma[j, i] -= c
    return gamma


def reflection(params: ModelParams, x) -> np.ndarray:
    b = drift(params, x)
    norm = np.linalg.norm(b)
    if norm == 0.0:
        raise DegenerateDriftError(f"drift vanishes at x={np.asarray(x).tolist()}")
    return b / norm


def noise_matrix(params: ModelParams, x) -> np.ndarray:
    """Rectangular dispersion with one column per reaction channel.

    For d >= 3 the columns are ``(e_{k+1} - e_k) sqrt(kappa' x_k x_{k+1})``
    followed by ``e_k sqrt(lambda' + delta' x_k)``. For d = 2 the two
    autocatalytic channels collapse into ``(e_1 - e_2) sqrt(2 kappa' x_1 x_2)``.
    The product with its transpose equals :func:`covariance` exactly.
    """
    x = _state(params, x)
    d = params.d
    species = np.diag(np.sqrt(params.lambda_p + params.delta_p * x))
    if d == 2:
        a = np.sqrt(2.0 * params.kappa_p * x[0] * x[1])
        return np.hstack([np.array([[a], [-a]]), species])
    auto = np.zeros((d, d))
    nxt = next_idx(d)
    for k in range(d):
        a = np.sqrt(params.kappa_p * x[k] * x[nxt[k]])
        auto[nxt[k], k] += a
        auto[k, k] -= a
    return np.hstack([auto, species])


def lyapunov(params: ModelParams, x, p: int = 1) -> float:
    x = _state(params, x)
    return float((np.sum(np.abs(x)) - params.mass_fixed_point) ** (2 * p))


def lyapunov_drift_identities(params: ModelParams, x, p: int = 1) -> tuple[float, float]:
    """Closed forms of grad(U^p) . b and of the generator applied to U^p.

    ``grad(U^p) . b = -2 p delta' m^(2p)``, which for p = 1 is also
    ``-(2 / delta') (delta' |x|_1 - d lambda')^2``. The generator form carries
    the chain-rule factor 2p on the drift term:
    ``p(2p-1)/V * m^(2p-2) * (d lambda' + delta' |x|_1) - 2 p delta' m^(2p)``
    with ``m = |x|_1 - d lambda'/delta'``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    x = _state(params, x)
    s = float(np.sum(x))
    lam, dlt, d = params.lambda_p, params.delta_p, params.d
    m = s - params.mass_fixed_point
    dot_b = -2.0 * p * dlt * m ** (2 * p)
    gen = (p * (2 * p - 1) / params.V) * m ** (2 * p - 2) * (d * lam + dlt * s) - 2.0 * p * dlt * m ** (2 * p)
    return dot_b, gen


@dataclass(frozen=True)
class TestFunction:
    """A C^2 function with analytic first and second derivatives."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    support_radius: Optional[float] = None
    center: Optional[np.ndarray] = None
    # optional vectorized (gradients, hessians) over rows of an (n, d) array
    batch: Optional[Callable[[np.ndarray], tuple]] = None
    constant: bool = False

    __test__ = False  # keep pytest from collecting this class


def constant_function(c: float, d: int) -> TestFunction:
    return TestFunction(
        value=lambda x: float(c),
        gradient=lambda x: np.zeros(d),
        hessian=lambda x: np.zeros((d, d)),
        batch=lambda X: (np.zeros((len(X), d)), np.zeros((len(X), d, d))),
        constant=True,
    )


def coordinate_function(i: int, d: int) -> TestFunction:
    e = np.zeros(d)
    e[i] = 1.0
    return TestFunction(value=lambda x: float(x[i]), gradient=lambda x: e.copy(), hessian=lambda x: np.zeros((d, d)))


def lyapunov_function(params: ModelParams, p: int = 1) -> TestFunction:
    """U^p as a TestFunction, valid on the closed orthant (|x|_1 = sum x)."""
    d, c = params.d, params.mass_fixed_point

    def grad(x):
        m = np.sum(x) - c
        return np.full(d, 2 * p * m ** (2 * p - 1))

    def hess(x):
        m = np.sum(x) - c
        return np.full((d, d), 2 * p * (2 * p - 1) * m ** (2 * p - 2))

    return TestFunction(value=lambda x: float((np.sum(x) - c) ** (2 * p)), gradient=grad, hessian=hess)


def gaussian_function(center, width: float, amplitude: float = 1.0) -> TestFunction:
    """``amplitude * exp(-|x - center|^2 / (2 width^2))`` (not compactly supported)."""
    c = np.asarray(center, dtype=float)
    w2 = width * width

    def val(x):
        r = x - c
        return float(amplitude * np.exp(-(r @ r) / (2 * w2)))

    def grad(x):
        r = x - c
        return -val(x) * r / w2

    def hess(x):
        r = x - c
        return val(x) * (np.outer(r, r) / (w2 * w2) - np.eye(len(c)) / w2)

    def batch(X):
        r = np.asarray(X, dtype=float) - c
        v = amplitude * np.exp(-np.einsum("ij,ij->i", r, r) / (2 * w2))
        g = -v[:, None] * r / w2
        h = v[:, None, None] * (r[:, :, None] * r[:, None, :] / (w2 * w2) - np.eye(len(c)) / w2)
        return g, h

    return TestFunction(value=val, gradient=grad, hessian=hess, center=c, batch=batch)


def bump_function(center, radius: float) -> TestFunction:
    """Smooth polynomial bump ``(1 - |x - c|^2 / r^2)^4`` on the ball of radius r.

    C^3 across the edge of the ball, which is enough for the generator.
    """
    c = np.asarray(center, dtype=float)
    r2 = radius * radius
    d = len(c)

    def val(x):
        y = x - c
        q = 1.0 - (y @ y) / r2
        return float(q ** 4) if q > 0 else 0.0

    def grad(x):
        y = x - c
        q = 1.0 - (y @ y) / r2
        if q <= 0:
            return np.zeros(d)
        return -8.0 * q ** 3 * y / r2

    def hess(x):
        y = x - c
        q = 1.0 - (y @ y) / r2
        if q <= 0:
            return np.zeros((d, d))
        return 48.0 * q ** 2 * np.outer(y, y) / (r2 * r2) - 8.0 * q ** 3 * np.eye(d) / r2

    def batch(X):
        y = np.asarray(X, dtype=float) - c
        q = np.maximum(1.0 - np.einsum("ij,ij->i", y, y) / r2, 0.0)
        g = -8.0 * (q ** 3)[:, None] * y / r2
        h = 48.0 * (q ** 2)[:, None, None] * y[:, :, None] * y[:, None, :] / (r2 * r2)
        h -= 8.0 * (q ** 3)[:, None, None] * np.eye(d) / r2
        return g, h

    return TestFunction(value=val, gradient=grad, hessian=hess, support_radius=float(radius), center=c, batch=batch)


def generator_apply(params: ModelParams, f: TestFunction, x) -> float:
    x = _state(params, x)
    gamma = covariance(params, x)
    return float(np.sum(gamma * f.hessian(x)) / (2.0 * params.V) + drift(params, x) @ f.gradient(x))


def drift_batch(params: ModelParams, X) -> np.ndarray:
    """Drift at every row of an (n, d) array."""
    X = np.asarray(X, dtype=float)
    xm, xp = np.roll(X, 1, axis=1), np.roll(X, -1, axis=1)
    return params.kappa_p * (xm - xp) * X + params.lambda_p - params.delta_p * X


def covariance_batch(params: ModelParams, X) -> np.ndarray:
    """Covariance matrices at every row of an (n, d) array, shape (n, d, d)."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    k = params.kappa_p
    xm, xp = np.roll(X, 1, axis=1), np.roll(X, -1, axis=1)
    G = np.zeros((n, d, d))
    idx = np.arange(d)
    G[:, idx, idx] = k * (xm + xp) * X + params.lambda_p + params.delta_p * X
    nxt = next_idx(d)
    for i in range(d):
        c = k * X[:, i] * X[:, nxt[i]]
        G[:, i, nxt[i]] -= c
        G[:, nxt[i], i] -= c
    return G


def generator_values(params: ModelParams, f: TestFunction, X, drift_sign: float = 1.0) -> np.ndarray:
    """Generator applied to ``f`` at every row of X.

    ``drift_sign=-1`` evaluates the operator with a reversed drift, which is
    only useful as a deliberately wrong reference in falsification runs.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if f.batch is None:
        out = np.empty(len(X))
        for i, x in enumerate(X):
            g = covariance(params, x)
            out[i] = np.sum(g * f.hessian(x)) / (2.0 * params.V) + drift_sign * drift(params, x) @ f.gradient(x)
        return out
    grad, hess = f.batch(X)
    G = covariance_batch(params, X)
    second = np.einsum("nij,nij->n", G, hess) / (2.0 * params.V)
    return second + drift_sign * np.einsum("ni,ni->n", drift_batch(params, X), grad)


def _drift_jacobian(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """J[i, j] = d b_i / d x_j."""
    d, k = params.d, params.kappa_p
    xm, xp = np.roll(x, 1), np.roll(x, -1)
    jac = np.diag(k * (xm - xp) - params.delta_p)
    prv, nxt = prev_idx(d), next_idx(d)
    for i in range(d):
        jac[i, prv[i]] += k * x[i]
        jac[i, nxt[i]] -= k * x[i]
    return jac


def _covariance_derivatives(params: ModelParams, x: np.ndarray):
    """First derivatives dG[i, j, m] = dGamma_ij/dx_m and constant second ones."""
    d, k = params.d, params.kappa_p
    prv, nxt = prev_idx(d), next_idx(d)
    dG = np.zeros((d, d, d))
    ddG = np.zeros((d, d, d, d))
    for i in range(d):
        a, c = prv[i], nxt[i]
        # diagonal: k (x_a + x_c) x_i + lambda' + delta' x_i
        dG[i, i, i] += k * (x[a] + x[c]) + params.delta_p
        dG[i, i, a] += k * x[i]
        dG[i, i, c] += k * x[i]
        ddG[i, i, i, a] += k
        ddG[i, i, a, i] += k
        ddG[i, i, i, c] += k
        ddG[i, i, c, i] += k
    for i in range(d):
        j = nxt[i]
        # off-diagonal: -k x_i x_j on (i, j) and (j, i)
        for (r, s) in ((i, j), (j, i)):
            dG[r, s, i] -= k * x[j]
            dG[r, s, j] -= k * x[i]
            ddG[r, s, i, j] -= k
            ddG[r, s, j, i] -= k
    return dG, ddG


def adjoint_generator_apply(params: ModelParams, p: TestFunction, x) -> float:
    """Formal adjoint of the generator applied to a density p at x."""
    x = _state(params, x)
    pv = p.value(x)
    pg = p.gradient(x)
    ph = p.hessian(x)
    gamma = covariance(params, x)
    dG, ddG = _covariance_derivatives(params, x)
    # d_i d_j (G_ij p) = ddG_ij,ij p + dG_ij,i p_j + dG_ij,j p_i + G_ij p_ij
    second = 0.0
    d = params.d
    for i in range(d):
        for j in range(d):
            second += ddG[i, j, i, j] * pv + dG[i, j, i] * pg[j] + dG[i, j, j] * pg[i] + gamma[i, j] * ph[i, j]
    b = drift(params, x)
    div_b = np.trace(_drift_jacobian(params, x))
    first = div_b * pv + b @ pg
    return float(second / (2.0 * params.V) - first)

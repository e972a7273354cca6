"""Exact conjugate Bayesian linear regression and its sequential diagonal-VI form.

These closed-form updates are the ground truth against which the
gradient-based continual trainer is checked: projecting a Gaussian onto a
diagonal Gaussian by KL minimization keeps the exact mean and the diagonal
of the exact precision, so the one-datum-at-a-time recursion below is the
exact fixed point of the mean-field objective at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GaussianPosterior:
    """Mean vector plus full covariance (or a diagonal for the mean-field case)."""

    mean: np.ndarray
    covariance: np.ndarray  # (d, d) full, or (d,) diagonal variances

    @property
    def is_diagonal(self) -> bool:
        return self.covariance.ndim == 1


def exact_batch_posterior(X: np.ndarray, y: np.ndarray,
                          prior: GaussianPosterior, sigma_y: float) -> GaussianPosterior:
    """Conjugate update for y = Xw + noise with fixed noise scale sigma_y."""
    if sigma_y <= 0:
        raise ValueError("sigma_y must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    d = prior.mean.shape[0]
    prior_cov = np.diag(prior.covariance) if prior.is_diagonal else prior.covariance
    prior_prec = np.linalg.inv(prior_cov)
    if X.size == 0:
        return GaussianPosterior(prior.mean.copy(), prior_cov.copy())
    prec = prior_prec + X.T @ X / sigma_y ** 2
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (prior_prec @ prior.mean + X.T @ y / sigma_y ** 2)
    if mean.shape != (d,):
        raise ValueError("dimension mismatch between prior and design matrix")
    return GaussianPosterior(mean, cov)


def sequential_vi_update(m_prev: np.ndarray, v_prev: np.ndarray,
                         x_t: np.ndarray, y_t: float,
                         sigma_y: float) -> tuple[np.ndarray, np.ndarray]:
    """One-datum mean-field update: exact posterior mean, diagonal of exact precision.

    m_t = [I + V x x^T / s^2]^{-1} [V x y / s^2 + m],  V = diag(v_prev)
    1/v_t = 1/v_prev + x^2 / s^2
    """
    if sigma_y <= 0:
        raise ValueError("sigma_y must be positive")
    m_prev = np.asarray(m_prev, dtype=np.float64)
    v_prev = np.asarray(v_prev, dtype=np.float64)
    x = np.asarray(x_t, dtype=np.float64).ravel()
    s2 = sigma_y ** 2
    # rank-one solve via Sherman-Morrison: (I + Vxx^T/s2)^{-1} = I - Vxx^T/(s2 + x^T V x)
    vx = v_prev * x
    denom = s2 + x @ vx
    rhs = vx * (float(y_t) / s2) + m_prev
    m_t = rhs - vx * (x @ rhs) / denom
    v_t = 1.0 / (1.0 / v_prev + x * x / s2)
    return m_t, v_t


def sequential_vi_update_solve(m_prev: np.ndarray, v_prev: np.ndarray,
                               x_t: np.ndarray, y_t: float,
                               sigma_y: float) -> tuple[np.ndarray, np.ndarray]:
    """Same update through an explicit pivoted solve; cross-check path."""
    m_prev = np.asarray(m_prev, dtype=np.float64)
    v_prev = np.asarray(v_prev, dtype=np.float64)
    x = np.asarray(x_t, dtype=np.float64).ravel()
    s2 = sigma_y ** 2
    d = x.shape[0]
    A = np.eye(d) + np.outer(v_prev * x, x) / s2
    rhs = v_prev * x * (float(y_t) / s2) + m_prev
    m_t = np.linalg.solve(A, rhs)
    v_t = 1.0 / (1.0 / v_prev + x * x / s2)
    return m_t, v_t


def simplified_memory_recursion(m_prev: np.ndarray, t: int, D: int,
                                x_bar: np.ndarray, v0_inv: float) -> np.ndarray:
    """Mean recursion specialized to unit-norm +/-1 patterns with sigma_y = 1.

    m_t = [I - x_bar x_bar^T / (1 + v0_inv + t/D)] m_prev + x_bar / (1 + v0_inv + t/D)

    Here x_bar = y * x and `t` indexes the recursion so that the incoming
    per-dimension precision equals v0_inv + t/D; with that identification the
    update coincides with `sequential_vi_update` exactly. With v0_inv = 0 the
    prior is ignored and this is the classic online-Laplace memory update.
    """
    m_prev = np.asarray(m_prev, dtype=np.float64)
    x_bar = np.asarray(x_bar, dtype=np.float64).ravel()
    denom = 1.0 + v0_inv + t / D
    return m_prev - x_bar * (x_bar @ m_prev) / denom + x_bar / denom


def batch_diagonal_vi(X: np.ndarray, y: np.ndarray, v0: np.ndarray,
                      sigma_y: float, m0: np.ndarray | None = None,
                      tol: float = 1e-12,
                      max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Mean-field VI on the full batch by coordinate fixed-point iteration.

    For a Gaussian target with precision Lambda and mean mu, the stationary
    point has v_d = 1/Lambda_dd and m solving the coordinate equations
    Lambda_dd m_d = (Lambda mu)_d - sum_{e != d} Lambda_de m_e. Iterated to a
    residual below `tol`. The batch solution generally differs from running
    the sequential recursion datum by datum.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    v0 = np.asarray(v0, dtype=np.float64)
    s2 = sigma_y ** 2
    lam = np.diag(1.0 / v0) + X.T @ X / s2
    b = X.T @ y / s2
    if m0 is not None:
        b = b + np.asarray(m0, dtype=np.float64) / v0
    d = lam.shape[0]
    m = np.zeros(d)
    diag = np.diag(lam)
    for _ in range(max_iter):
        m_new = m.copy()
        for i in range(d):
            m_new[i] = (b[i] - lam[i] @ m_new + diag[i] * m_new[i]) / diag[i]
        if np.max(np.abs(m_new - m)) < tol:
            m = m_new
            break
        m = m_new
    v = 1.0 / diag
    return m, v

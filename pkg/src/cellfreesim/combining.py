"""Receive combining: maximum-ratio and (centralized) MMSE weight vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure

COMBINER_KINDS = ("mr", "mmse")

_SOLVE_RESIDUAL_TOL = 1e-8


@dataclass
class CombinerBank:
    """Receive weights for all UEs; column k of W is the weight vector of UE k."""

    kind: str
    W: np.ndarray  # (M, K) complex


def mr_weights(H_hat: np.ndarray) -> CombinerBank:
    """Maximum-ratio combining: the weights are the channel estimates."""
    return CombinerBank(kind="mr", W=H_hat.copy())


def mmse_weights(
    H_hat: np.ndarray,
    err_var: np.ndarray,
    q: np.ndarray,
    rho: float,
) -> CombinerBank:
    """MMSE combining at transmit powers q.

    Each column solves (sum_i rho q_i (hhat_i hhat_i^H + C_i) + I) w = rho q_k hhat_k
    with diagonal error correlations C_i. The system matrix is Hermitian
    positive definite by construction; it is solved, never inverted.
    """
    M, K = H_hat.shape
    q = np.asarray(q, dtype=float)
    if q.shape != (K,):
        raise ValueError("q must have one entry per UE")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("power coefficients must lie in [0, 1]")
    if rho <= 0:
        raise ValueError("rho must be positive")

    scaled = H_hat * (rho * q)  # columns rho*q_i*hhat_i
    A = scaled @ H_hat.conj().T
    diag = A.diagonal().real + err_var @ (rho * q) + 1.0
    A[np.diag_indices(M)] = diag
    W = np.linalg.solve(A, scaled)

    rhs_norm = np.linalg.norm(scaled, axis=0)
    resid = np.linalg.norm(A @ W - scaled, axis=0)
    active = rhs_norm > 0
    if np.any(resid[active] > _SOLVE_RESIDUAL_TOL * rhs_norm[active]):
        worst = float(np.max(resid[active] / rhs_norm[active]))
        raise NumericalFailure(f"combiner solve residual {worst:.3e} exceeds 1e-8")
    return CombinerBank(kind="mmse", W=W)


def build_weights(
    kind: str,
    H_hat: np.ndarray,
    err_var: np.ndarray,
    q: np.ndarray,
    rho: float,
) -> CombinerBank:
    """Dispatch on combiner kind; MR ignores q and the error statistics."""
    if kind == "mr":
        return mr_weights(H_hat)
    if kind == "mmse":
        return mmse_weights(H_hat, err_var, q, rho)
    raise ValueError(f"unknown combiner kind: {kind!r}")

"""Pilot-phase simulation and MMSE channel estimation.

UEs transmit orthogonal unit-norm pilot sequences; each antenna observes the
superposition in unit-variance complex noise and forms the per-UE MMSE
estimate from the pilot projection, assuming the large-scale gains are known.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TauTooSmall


@dataclass
class PilotBook:
    """K unit-norm pilot sequences of length tau_p (rows of `sequences`)."""

    tau_p: int
    sequences: np.ndarray  # (K, tau_p) complex

    @property
    def K(self) -> int:
        return self.sequences.shape[0]


def make_pilots(K: int, tau_p: int) -> PilotBook:
    """Build K mutually orthogonal unit-norm sequences (DFT family)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if tau_p < K:
        raise TauTooSmall(f"tau_p={tau_p} cannot carry {K} orthogonal pilots")
    t = np.arange(tau_p)
    k = np.arange(K)
    seq = np.exp(-2j * np.pi * np.outer(k, t) / tau_p) / np.sqrt(tau_p)
    return PilotBook(tau_p=tau_p, sequences=seq)


def simulate_pilot_rx(
    H: np.ndarray,
    pilots: PilotBook,
    rho_p: float,
    rng: np.random.Generator | None = None,
    add_noise: bool = True,
) -> np.ndarray:
    """Received pilot block, one length-tau_p row per antenna.

    y_m = sqrt(rho_p * tau_p) * sum_k h_{m,k} phi_k + z_m with unit-variance
    circularly-symmetric noise entries. `add_noise=False` is a test hook.
    """
    M, K = H.shape
    if pilots.K != K:
        raise ValueError("pilot book does not match the number of UEs")
    Y = np.sqrt(rho_p * pilots.tau_p) * (H @ pilots.sequences)
    if add_noise:
        if rng is None:
            raise ValueError("rng is required when noise is enabled")
        Z = (rng.standard_normal((M, pilots.tau_p)) + 1j * rng.standard_normal((M, pilots.tau_p))) / np.sqrt(2.0)
        Y = Y + Z
    return Y


def error_variances(beta: np.ndarray, rho_p: float, tau_p: int) -> np.ndarray:
    """Estimation-error variances beta - gamma under orthogonal pilots,
    with gamma = rho_p*tau_p*beta^2 / (rho_p*tau_p*beta + 1)."""
    rt = rho_p * tau_p
    gamma = rt * beta**2 / (rt * beta + 1.0)
    return beta - gamma


def mmse_estimate(
    pilot_rx: np.ndarray,
    beta: np.ndarray,
    pilots: PilotBook,
    rho_p: float,
    tau_p: int,
) -> tuple[np.ndarray, np.ndarray]:
    """MMSE channel estimate and per-antenna error variances.

    hhat_{m,k} = sqrt(rho_p*tau_p)*beta_{m,k}
                 / (rho_p*tau_p * sum_k' beta_{m,k'} |phi_k^H phi_k'|^2 + 1)
                 * phi_k^H y_m
    """
    phi = pilots.sequences
    rt = rho_p * tau_p
    proj = pilot_rx @ phi.conj().T  # (M, K): phi_k^H y_m
    gram2 = np.abs(phi @ phi.conj().T) ** 2  # (K, K)
    denom = rt * (beta @ gram2.T) + 1.0
    H_hat = (np.sqrt(rt) * beta / denom) * proj
    return H_hat, error_variances(beta, rho_p, tau_p)


def perfect_csi(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Genie estimate: the true channel with zero error variance."""
    return H.copy(), np.zeros(H.shape, dtype=float)


def pilot_mmse_csi(
    H: np.ndarray,
    beta: np.ndarray,
    rho_p: float,
    tau_p: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Full pilot round trip: build pilots, receive in noise, estimate."""
    pilots = make_pilots(H.shape[1], tau_p)
    Y = simulate_pilot_rx(H, pilots, rho_p, rng)
    return mmse_estimate(Y, beta, pilots, rho_p, tau_p)

"""Per-UE link metrics: SINR, spectral efficiency, power draw, energy efficiency.

The SINR is the closed form for a linear combiner w_k applied to estimated
channels with diagonal error correlations:

    sinr_k = rho q_k |w_k^H hhat_k|^2 /
             (rho sum_{k'!=k} q_k' |w_k^H hhat_k'|^2 + w_k^H Z_k w_k + ||w_k||^2)

with Z_k = rho sum_i q_i C_i. UE power is affine in the power coefficient and
energy efficiency is delivered rate per watt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOLTZMANN = 1.380649e-23  # J/K


@dataclass
class SystemConfig:
    """Radio constants; the transmit SNR is derived from them unless given."""

    bandwidth: float = 20e6  # Hz
    noise_temperature: float = 290.0  # K
    noise_figure_db: float = 7.0
    p_max: float = 0.2  # W, maximum UE transmit power
    p_circuit: float = 0.1  # W, UE circuit power
    rho: float | None = None  # transmit SNR; auto-derived when None
    rho_p: float | None = None  # pilot SNR; defaults to rho
    tau_p: int | None = None  # pilot length; defaults to K at the use site

    def __post_init__(self) -> None:
        for name in ("bandwidth", "noise_temperature", "p_max", "p_circuit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.rho is None:
            self.rho = transmit_snr(self)
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.rho_p is None:
            self.rho_p = self.rho
        if self.rho_p <= 0:
            raise ValueError("rho_p must be positive")
        if self.tau_p is not None and self.tau_p < 1:
            raise ValueError("tau_p must be >= 1")


def noise_power(config: SystemConfig) -> float:
    """Thermal noise power k_B * T * B raised by the receiver noise figure."""
    return (
        BOLTZMANN
        * config.noise_temperature
        * config.bandwidth
        * 10.0 ** (config.noise_figure_db / 10.0)
    )


def transmit_snr(config: SystemConfig) -> float:
    """Ratio of the maximum transmit power to the noise power."""
    return config.p_max / noise_power(config)


@dataclass
class LinkMetrics:
    """Per-UE results of one allocation on one channel realization."""

    sinr: np.ndarray  # (K,)
    se: np.ndarray  # (K,) bits/s/Hz
    power: np.ndarray  # (K,) W
    ee: np.ndarray  # (K,) bits/J


def sinr_and_se(
    W: np.ndarray,
    H_hat: np.ndarray,
    err_var: np.ndarray,
    q: np.ndarray,
    rho: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the closed-form SINR and SE = log2(1 + SINR) for every UE.

    A UE whose weight vector is identically zero is undetectable and gets
    SINR 0 rather than an error.
    """
    q = np.asarray(q, dtype=float)
    G = W.conj().T @ H_hat  # (K, K), G[k, i] = w_k^H hhat_i
    A2 = np.abs(G) ** 2
    own = A2.diagonal()
    wsq = np.abs(W) ** 2  # (M, K)
    wnorm2 = wsq.sum(axis=0)
    signal = rho * q * own
    interference = rho * (A2 @ q - own * q)
    z_term = rho * (wsq.T @ (err_var @ q))
    denom = interference + z_term + wnorm2
    sinr = np.divide(signal, denom, out=np.zeros_like(signal), where=denom > 0)
    return sinr, np.log2(1.0 + sinr)


def ue_power(q: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Consumed power per UE: p_max * q + p_circuit."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("power coefficients must lie in [0, 1]")
    return config.p_max * q + config.p_circuit


def energy_efficiency(se: np.ndarray, q: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Delivered bits per joule: bandwidth * se / (p_max * q + p_circuit)."""
    return config.bandwidth * np.asarray(se, dtype=float) / ue_power(q, config)


def link_metrics(
    W: np.ndarray,
    H_hat: np.ndarray,
    err_var: np.ndarray,
    q: np.ndarray,
    rho: float,
    config: SystemConfig,
) -> LinkMetrics:
    """Bundle SINR, SE, power, and EE for one allocation."""
    sinr, se = sinr_and_se(W, H_hat, err_var, q, rho)
    power = ue_power(q, config)
    ee = config.bandwidth * se / power
    return LinkMetrics(sinr=sinr, se=se, power=power, ee=ee)

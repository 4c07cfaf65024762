"""Probing round: precoder/phase designs, pilots, and the two observations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .errors import ConfigError

__all__ = [
    "ProbeDesign",
    "ProbeObservation",
    "dft_pilot",
    "combined_channel",
    "uplink_probe",
    "downlink_probe",
    "probe_pair",
    "validate_design",
]


@dataclass(frozen=True)
class ProbeDesign:
    """A probing design: BS precoder and surface reflection phases.

    ``precoder`` is M x M complex; ``phases`` holds L unit-modulus complex
    reflection coefficients.
    """

    precoder: np.ndarray
    phases: np.ndarray

    @property
    def M(self) -> int:
        return self.precoder.shape[0]

    @property
    def L(self) -> int:
        return self.phases.shape[0]

    @property
    def phases_ext(self) -> np.ndarray:
        """Reflection vector extended with a leading 1 for the direct path."""
        return np.concatenate([[1.0 + 0.0j], self.phases])


def validate_design(design: ProbeDesign, power_a: float, mod_tol: float = 1e-9, power_rtol: float = 1e-6) -> None:
    """Check unit modulus of every phase and the precoder power budget.

    The precoder must satisfy trace(P P^H) = M * power_a within ``power_rtol``
    relative tolerance.
    """
    P, theta = design.precoder, design.phases
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ConfigError(f"precoder must be square, got shape {P.shape}")
    mod_err = np.abs(np.abs(theta) - 1.0).max(initial=0.0)
    if mod_err > mod_tol:
        raise ConfigError(f"reflection coefficients deviate from unit modulus by {mod_err:.3e}")
    budget = design.M * power_a
    actual = float(np.sum(np.abs(P) ** 2))
    if abs(actual - budget) > power_rtol * budget:
        raise ConfigError(f"precoder power {actual:.6e} misses budget {budget:.6e}")


def dft_pilot(M: int) -> np.ndarray:
    """Unitary DFT matrix used as the default downlink pilot."""
    k = np.arange(M)
    return np.exp(-2j * np.pi * np.outer(k, k) / M) / np.sqrt(M)


def combined_channel(realization: ChannelRealization, design: ProbeDesign) -> np.ndarray:
    """Effective BS-UE channel h + G dg(phases) f for one realization."""
    return realization.h + realization.G @ (design.phases * realization.f)


def uplink_probe(
    realization: ChannelRealization,
    design: ProbeDesign,
    noise_a: np.ndarray,
    power_b: float,
    pilot_u: complex = 1.0 + 0.0j,
) -> np.ndarray:
    """BS-side observation: sqrt(power_b) P^T c + P^T n_a conj(pilot_u).

    ``pilot_u`` is the UE pilot symbol and must have unit modulus, so the
    least-squares step only rotates the noise.
    """
    if abs(abs(pilot_u) - 1.0) > 1e-9:
        raise ConfigError("uplink pilot symbol must have unit modulus")
    c = combined_channel(realization, design)
    Pt = design.precoder.T
    return np.sqrt(power_b) * (Pt @ c) + (Pt @ noise_a) * np.conj(pilot_u)


def downlink_probe(
    realization: ChannelRealization,
    design: ProbeDesign,
    noise_b: np.ndarray,
    pilot_d: np.ndarray | None = None,
) -> np.ndarray:
    """UE-side observation after pilot removal: P^T c + pilot_d^T n_b.

    ``pilot_d`` defaults to the unitary DFT matrix; any unitary pilot leaves
    the noise white.
    """
    M = design.M
    Sd = dft_pilot(M) if pilot_d is None else np.asarray(pilot_d)
    if Sd.shape != (M, M):
        raise ConfigError(f"downlink pilot must be {M}x{M}, got {Sd.shape}")
    gap = np.abs(Sd.conj().T @ Sd - np.eye(M)).max()
    if gap > 1e-9:
        raise ConfigError(f"downlink pilot matrix is not unitary (deviation {gap:.3e})")
    c = combined_channel(realization, design)
    return design.precoder.T @ c + Sd.T @ noise_b


@dataclass(frozen=True)
class ProbeObservation:
    """The matched observation pair of one probing round."""

    y_a: np.ndarray  # (M,) BS side
    y_b: np.ndarray  # (M,) UE side


def probe_pair(
    realization: ChannelRealization,
    design: ProbeDesign,
    noise_a: np.ndarray,
    noise_b: np.ndarray,
    power_b: float,
    pilot_u: complex = 1.0 + 0.0j,
    pilot_d: np.ndarray | None = None,
) -> ProbeObservation:
    """Run both probing directions on the same realization.

    With zero noise the two sides observe the same P^T c up to the
    sqrt(power_b) uplink scaling.
    """
    return ProbeObservation(
        y_a=uplink_probe(realization, design, noise_a, power_b, pilot_u),
        y_b=downlink_probe(realization, design, noise_b, pilot_d),
    )

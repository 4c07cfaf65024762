"""Secret key rate evaluators: exact closed form, eigenmode approximation, Monte Carlo.

The SKR of one probing round is the Gaussian mutual information between the
two observations. It is computed from the joint observation covariance as
logdet(R_a) + logdet(R_b) - logdet(R_joint), in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelStatistics, _complex_normal, sample_batch
from .errors import ConfigError, NumericalError
from .probing import ProbeDesign, dft_pilot

__all__ = [
    "SkrReport",
    "combined_covariance",
    "effective_variance",
    "skr_closed_form",
    "skr_approximate",
    "skr_monte_carlo",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class SkrReport:
    """A single SKR figure in bits per probing round."""

    bits: float
    method: str
    std_error: float | None = None


def _hermitian_part(mat: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Symmetrize, rejecting asymmetry beyond ``tol`` relative to the scale."""
    adj = np.swapaxes(mat, -1, -2).conj()
    scale = max(1.0, float(np.abs(mat).max(initial=0.0)))
    gap = float(np.abs(mat - adj).max(initial=0.0))
    if gap > tol * scale:
        raise NumericalError(f"matrix deviates from Hermitian by {gap:.3e}")
    return 0.5 * (mat + adj)


def _logdet_psd(mat: np.ndarray) -> np.ndarray:
    """log det of Hermitian positive definite matrices, stacked over leading axes."""
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance is not positive definite: {exc}") from exc
    diag = np.diagonal(chol, axis1=-2, axis2=-1).real
    return 2.0 * np.log(diag).sum(axis=-1)


def _mi_bits_from_joint(joint: np.ndarray) -> np.ndarray:
    """Gaussian mutual information (bits) from a 2M x 2M joint covariance."""
    two_m = joint.shape[-1]
    m = two_m // 2
    ld_a = _logdet_psd(_hermitian_part(joint[..., :m, :m]))
    ld_b = _logdet_psd(_hermitian_part(joint[..., m:, m:]))
    ld_j = _logdet_psd(_hermitian_part(joint))
    return (ld_a + ld_b - ld_j) / _LN2


def _assemble_joint(r_z: np.ndarray, gram: np.ndarray, power_b: float, noise: float) -> np.ndarray:
    """Joint covariance of (y_a, y_b) from the signal covariance and noise Gram."""
    m = r_z.shape[-1]
    eye = np.eye(m)
    cross = np.sqrt(power_b) * r_z
    joint = np.empty(r_z.shape[:-2] + (2 * m, 2 * m), dtype=complex)
    joint[..., :m, :m] = power_b * r_z + noise * gram
    joint[..., :m, m:] = cross
    joint[..., m:, :m] = np.swapaxes(cross, -1, -2).conj()
    joint[..., m:, m:] = r_z + noise * eye
    return joint


def combined_covariance(design: ProbeDesign, stats: ChannelStatistics) -> np.ndarray:
    """Covariance of the noiseless combined observation P^T (h + G dg(phases) f).

    Computed as the sandwich of the cascade covariance with kron(phases_ext, P).
    """
    sel = np.kron(design.phases_ext[:, None], design.precoder)
    return sel.T @ stats.cascade_cov @ sel.conj()


def effective_variance(phases: np.ndarray, stats: ChannelStatistics) -> float:
    """Per-antenna variance of the combined channel for given reflection phases.

    Equals beta_direct plus the surface contribution through the quadratic form
    of the squared surface correlation. Real and positive for unit-modulus
    phases.
    """
    theta = np.asarray(phases)
    mod_err = np.abs(np.abs(theta) - 1.0).max(initial=0.0)
    if mod_err > 1e-6:
        raise ConfigError(f"reflection coefficients deviate from unit modulus by {mod_err:.3e}")
    squared_corr = stats.R_irs * stats.R_irs
    quad = float(np.real(theta.conj() @ squared_corr @ theta))
    return stats.beta_direct + stats.beta_bs_irs * stats.beta_irs_ue * quad


_RANK_RTOL = 1e-12  # Gram eigenmodes below this fraction of the largest carry no signal


def skr_closed_form(design: ProbeDesign, stats: ChannelStatistics, power_b: float, noise: float) -> SkrReport:
    """Exact SKR of the probing round for an arbitrary design.

    Evaluates logdet(R_b) - logdet(R_b|a) in the eigenbasis of the precoder
    Gram matrix. The conditional covariance is assembled through the
    push-through identity, so every block is a sum of positive semidefinite
    pieces; the naive three-logdet combination cancels catastrophically once
    the two observations are nearly deterministic functions of each other.
    Uplink observation components outside the precoder row space have zero
    variance and carry no information, so the evaluation restricts to that
    subspace; power-starved designs (e.g. water-filling at low SNR) stay
    evaluable, and the retained Gram eigenmodes have dynamic range below
    1/_RANK_RTOL by construction.
    """
    gram = _hermitian_part(design.precoder.T @ design.precoder.conj())
    if not np.isfinite(gram).all():
        raise NumericalError("precoder Gram matrix has non-finite entries")
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    lam = evals[order]
    top = float(lam[0])
    if top <= 0.0:
        return SkrReport(bits=0.0, method="closed_form")
    r_z = _hermitian_part(combined_covariance(design, stats))
    eigs = np.linalg.eigvalsh(r_z)
    scale = max(1.0, float(np.abs(r_z).max(initial=0.0)))
    if eigs.min() < -1e-10 * scale:
        raise NumericalError(f"signal covariance indefinite (min eigenvalue {eigs.min():.3e})")
    m = gram.shape[0]
    rank = int(np.sum(lam > _RANK_RTOL * top))
    basis = evecs[:, order]
    z_rot = basis.conj().T @ r_z @ basis
    z_rot = 0.5 * (z_rot + z_rot.conj().T)
    lam_k = lam[:rank]
    r_a = power_b * z_rot[:rank, :rank] + noise * np.diag(lam_k)
    try:
        x = np.linalg.solve(r_a, z_rot[:rank, :])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"restricted uplink covariance is singular: {exc}") from exc
    # conditional covariance of y_b given y_a, in units of the noise power:
    # kept block I + Lambda_k X, coupling Lambda_k X, dropped block carries
    # only the (unobserved) residual signal
    cond = np.empty((m, m), dtype=complex)
    scaled = lam_k[:, None] * x
    cond[:rank, :rank] = np.eye(rank) + scaled[:, :rank]
    cond[:rank, rank:] = scaled[:, rank:]
    cond[rank:, :rank] = scaled[:, rank:].conj().T
    cond[rank:, rank:] = np.eye(m - rank) + (
        z_rot[rank:, rank:] - power_b * z_rot[:rank, rank:].conj().T @ x[:, rank:]
    ) / noise
    cond = 0.5 * (cond + cond.conj().T)  # solver roundoff only; Hermitian by construction
    ld_b = _logdet_psd(z_rot + noise * np.eye(m))
    ld_cond = _logdet_psd(cond) + m * math.log(noise)
    bits = float((ld_b - ld_cond) / _LN2)
    return SkrReport(bits=max(bits, 0.0), method="closed_form")


def skr_approximate(
    precoder_norm: np.ndarray,
    phases: np.ndarray,
    stats: ChannelStatistics,
    power_a: float,
    power_b: float,
    noise: float,
) -> SkrReport:
    """SKR with the noise Gram matrix replaced by its power-budget average.

    ``precoder_norm`` is the unit-budget precoder (trace of its Gram equal to
    M); the actual precoder is sqrt(power_a) times it. The result decomposes
    over the eigenvalues of precoder_norm^T R_bs precoder_norm^*, which is how
    it is evaluated.
    """
    p_e = np.asarray(precoder_norm)
    m = p_e.shape[0]
    budget = float(np.sum(np.abs(p_e) ** 2))
    if abs(budget - m) > 1e-6 * m:
        raise ConfigError(f"normalized precoder power {budget:.6e} misses budget {m}")
    var = effective_variance(phases, stats)
    sandwich = _hermitian_part(p_e.T @ stats.R_bs @ p_e.conj())
    q = np.linalg.eigvalsh(sandwich)
    if q.min() < -1e-10:
        raise NumericalError("precoder sandwich matrix indefinite")
    q = np.clip(q, 0.0, None)
    sig = power_a * var * q
    num = np.log2(power_b * sig + noise * power_a) + np.log2(sig + noise)
    den = np.log2(noise * power_b * sig + noise * power_a * sig + power_a * noise**2)
    bits = float(np.sum(num - den))
    return SkrReport(bits=max(bits, 0.0), method="approximate")


def skr_monte_carlo(
    design: ProbeDesign,
    stats: ChannelStatistics,
    power_b: float,
    noise: float,
    n_samples: int,
    rng: np.random.Generator,
    n_batches: int = 10,
) -> SkrReport:
    """Estimate the SKR by simulating probing rounds and plugging in sample covariances.

    ``n_samples`` is split evenly over ``n_batches`` independent child streams
    (remainder dropped); within each batch the draw order is channels, then
    BS noise, then UE noise. The point estimate uses the pooled sample
    covariance; the standard error is the batch-means estimate, so it shrinks
    like 1/sqrt(n_samples).
    """
    if n_samples < 10_000:
        raise ConfigError(f"Monte Carlo needs at least 10000 samples, got {n_samples}")
    if n_batches < 2:
        raise ConfigError("Monte Carlo needs at least 2 batches")
    per_batch = n_samples // n_batches
    m = design.M
    pilot_d = dft_pilot(m)
    streams = rng.spawn(n_batches)
    pooled = np.zeros((2 * m, 2 * m), dtype=complex)
    batch_bits = np.empty(n_batches)
    for b, stream in enumerate(streams):
        h, big_g, f = sample_batch(stats, per_batch, stream)
        noise_a = _complex_normal(stream, per_batch * m, noise).reshape(per_batch, m)
        noise_b = _complex_normal(stream, per_batch * m, noise).reshape(per_batch, m)
        combined = h + np.einsum("nml,nl->nm", big_g, design.phases * f)
        y_a = np.sqrt(power_b) * (combined @ design.precoder) + noise_a @ design.precoder
        y_b = combined @ design.precoder + noise_b @ pilot_d
        z = np.concatenate([y_a, y_b], axis=1)
        second_moment = z.T @ z.conj()
        pooled += second_moment
        try:
            batch_bits[b] = _mi_bits_from_joint(second_moment / per_batch)
        except NumericalError as exc:
            raise NumericalError(
                f"singular sample covariance in batch {b}; increase n_samples"
            ) from exc
    bits = float(_mi_bits_from_joint(pooled / (per_batch * n_batches)))
    std_error = float(np.std(batch_bits, ddof=1) / np.sqrt(n_batches))
    return SkrReport(bits=bits, method="monte_carlo", std_error=std_error)

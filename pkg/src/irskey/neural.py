"""Unsupervised neural designer: UE location in, feasible (precoder, phases) out.

A two-hidden-layer ReLU MLP maps the UE coordinates to two real head vectors
that are reshaped into a complex precoder and reflection phases. Normalization
layers enforce the power budget and unit modulus structurally, so every
forward output is feasible for arbitrary parameter values. Training minimizes
the negative batch-mean SKR with Adam; gradients are propagated analytically
through the log-determinants, the covariance assembly, and both
normalizations (no autodiff framework involved).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelStatistics, SystemConfig, bs_correlation, irs_correlation, path_gain
from .errors import ConfigError, NumericalError
from .probing import ProbeDesign

__all__ = [
    "NetParams",
    "TrainConfig",
    "PARAM_FIELDS",
    "init_params",
    "make_stats_provider",
    "forward",
    "infer",
    "normalize_precoder",
    "normalize_phases",
    "loss",
    "gradient",
    "loss_and_gradient",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "params_to_vector",
    "vector_to_params",
]

HIDDEN = 200
_LN2 = math.log(2.0)
_EPS_GUARD = 1e-12
_CHECKPOINT_FORMAT = "irskey-net-1"
_PACKING = "real-imag-colmajor"

PARAM_FIELDS = ("W1", "b1", "W2", "b2", "Wp", "bp", "Wt", "bt")


@dataclass
class NetParams:
    """Weights and biases; heads sized by (M, L) at construction."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wp: np.ndarray
    bp: np.ndarray
    Wt: np.ndarray
    bt: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def M(self) -> int:
        return math.isqrt(self.Wp.shape[0] // 2)

    @property
    def L(self) -> int:
        return self.Wt.shape[0] // 2


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    samples_per_epoch: int = 1000
    batch_size: int = 100
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    ue_region: tuple[tuple[float, float], tuple[float, float]] = ((5.0, 15.0), (5.0, 15.0))
    seed: int = 0
    fresh_samples: bool = True  # fresh UE draws each epoch; else fixed set reshuffled

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.samples_per_epoch < 1 or self.batch_size < 1:
            raise ConfigError("epochs, samples_per_epoch, batch_size must be >= 1")
        if self.samples_per_epoch % self.batch_size != 0:
            raise ConfigError(
                f"batch_size {self.batch_size} must divide samples_per_epoch {self.samples_per_epoch}"
            )
        if self.learning_rate <= 0.0:
            raise ConfigError("learning rate must be positive")
        (x_lo, x_hi), (y_lo, y_hi) = self.ue_region
        if not (x_lo < x_hi and y_lo < y_hi):
            raise ConfigError("ue_region must span a nonempty rectangle")


def init_params(M: int, L: int, rng: np.random.Generator, hidden: int = HIDDEN) -> NetParams:
    """Glorot-uniform weights drawn in order W1, W2, Wp, Wt; zero biases."""

    def glorot(out_dim: int, in_dim: int) -> np.ndarray:
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        return rng.uniform(-limit, limit, (out_dim, in_dim))

    return NetParams(
        W1=glorot(hidden, 3),
        b1=np.zeros(hidden),
        W2=glorot(hidden, hidden),
        b2=np.zeros(hidden),
        Wp=glorot(2 * M * M, hidden),
        bp=np.zeros(2 * M * M),
        Wt=glorot(2 * L, hidden),
        bt=np.zeros(2 * L),
    )


def make_stats_provider(system: SystemConfig):
    """Location -> ChannelStatistics closure sharing the geometry-fixed parts.

    Correlation matrices and the BS-surface gain do not depend on the UE
    position, so they are computed once and shared; the two UE-side link
    gains are recomputed per location.
    """
    r_bs = bs_correlation(system.eta, system.M)
    r_irs = irs_correlation(system.L_h, system.L_v, system.spacing_wl)
    pos_bs = np.asarray(system.pos_bs, dtype=float)
    pos_irs = np.asarray(system.pos_irs, dtype=float)
    beta_bs_irs = path_gain(
        float(np.linalg.norm(pos_bs - pos_irs)),
        system.alpha_bs_irs,
        system.ref_loss_db,
        system.ref_dist,
    )

    def provider(location) -> ChannelStatistics:
        ue = np.asarray(location, dtype=float)
        return ChannelStatistics(
            R_bs=r_bs,
            R_irs=r_irs,
            beta_direct=path_gain(
                float(np.linalg.norm(pos_bs - ue)),
                system.alpha_direct,
                system.ref_loss_db,
                system.ref_dist,
            ),
            beta_bs_irs=beta_bs_irs,
            beta_irs_ue=path_gain(
                float(np.linalg.norm(pos_irs - ue)),
                system.alpha_irs_ue,
                system.ref_loss_db,
                system.ref_dist,
            ),
        )

    return provider


# ---------------------------------------------------------------------------
# normalization layers


def _normalize_precoder_batch(p_prime: np.ndarray, power_a: float):
    n_batch, width = p_prime.shape
    m_sq = width // 2
    m = math.isqrt(m_sq)
    # column-major packing: entry (i, j) of the raw matrix is p'[i + j*M]
    raw = (p_prime[:, :m_sq] + 1j * p_prime[:, m_sq:]).reshape(n_batch, m, m).swapaxes(1, 2)
    norm = np.sqrt(np.sum(p_prime**2, axis=1))
    if np.any(norm < _EPS_GUARD):
        raise NumericalError("degenerate precoder head activation: zero output norm")
    target = math.sqrt(m * power_a)
    precoder = (target / norm)[:, None, None] * raw
    return precoder, (raw, norm, target)


def _normalize_phases_batch(theta_prime: np.ndarray):
    n_batch, width = theta_prime.shape
    L = width // 2
    u = theta_prime[:, :L]
    v = theta_prime[:, L:]
    radius = np.hypot(u, v)
    live = radius > _EPS_GUARD
    safe_r = np.where(live, radius, 1.0)
    phases = np.where(live, (u + 1j * v) / safe_r, 1.0 + 0.0j)
    return phases, (u, v, safe_r, live)


def normalize_precoder(p_prime: np.ndarray, power_a: float) -> np.ndarray:
    """Pack a 2M^2 real vector into an M x M complex precoder on the power budget.

    First M^2 entries are real parts, last M^2 imaginary parts, both in
    column-major matrix order; the matrix is rescaled so its squared
    Frobenius norm equals M * power_a. Near-zero inputs (norm below 1e-12)
    are rejected as degenerate.
    """
    vec = np.asarray(p_prime, dtype=float).reshape(1, -1)
    precoder, _ = _normalize_precoder_batch(vec, power_a)
    return precoder[0]


def normalize_phases(theta_prime: np.ndarray) -> np.ndarray:
    """Map a 2L real vector to L unit-modulus coefficients (u + jv)/|u + jv|.

    Pairs with magnitude below the 1e-12 guard fall back to phase 0 (the
    coefficient 1), and their gradient is treated as zero.
    """
    vec = np.asarray(theta_prime, dtype=float).reshape(1, -1)
    phases, _ = _normalize_phases_batch(vec)
    return phases[0]


# ---------------------------------------------------------------------------
# forward / loss / gradient


def _forward_core(params: NetParams, locations: np.ndarray, power_a: float):
    a1 = locations @ params.W1.T + params.b1
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ params.W2.T + params.b2
    h2 = np.maximum(a2, 0.0)
    p_prime = h2 @ params.Wp.T + params.bp
    t_prime = h2 @ params.Wt.T + params.bt
    precoder, p_cache = _normalize_precoder_batch(p_prime, power_a)
    phases, t_cache = _normalize_phases_batch(t_prime)
    cache = (locations, a1, h1, a2, h2, p_cache, t_cache)
    return precoder, phases, cache


def forward(params: NetParams, ue_location, config: SystemConfig) -> ProbeDesign:
    """Evaluate the network at one location; output is feasible by construction."""
    loc = np.asarray(ue_location, dtype=float).reshape(1, 3)
    precoder, phases, _ = _forward_core(params, loc, config.power_a)
    return ProbeDesign(precoder=precoder[0], phases=phases[0])


def infer(params: NetParams, ue_location, config: SystemConfig) -> ProbeDesign:
    """Deployment-time alias of forward (no gradient bookkeeping exists anyway)."""
    return forward(params, ue_location, config)


def _collect_statistics(provider, locations: np.ndarray):
    stats = [provider(loc) for loc in locations]
    first = stats[0]
    k = len(stats)
    if all(s.R_bs is first.R_bs for s in stats):
        r_bs = np.broadcast_to(first.R_bs, (k,) + first.R_bs.shape)
    else:
        r_bs = np.stack([s.R_bs for s in stats])
    if all(s.R_irs is first.R_irs for s in stats):
        r_sq = np.broadcast_to(first.R_irs * first.R_irs, (k,) + first.R_irs.shape)
    else:
        r_sq = np.stack([s.R_irs * s.R_irs for s in stats])
    beta_direct = np.array([s.beta_direct for s in stats])
    gamma = np.array([s.beta_bs_irs * s.beta_irs_ue for s in stats])
    return r_bs, r_sq, beta_direct, gamma


def _hermitize(mats: np.ndarray) -> np.ndarray:
    return 0.5 * (mats + np.swapaxes(mats, -1, -2).conj())


def _zero_grads(params: NetParams) -> NetParams:
    return NetParams(**{name: np.zeros_like(getattr(params, name)) for name in PARAM_FIELDS})


def _loss_and_grad(params: NetParams, locations: np.ndarray, system: SystemConfig, provider, want_grad: bool):
    k = locations.shape[0]
    m = system.M
    precoder, phases, cache = _forward_core(params, locations, system.power_a)
    r_bs, r_sq, beta_direct, gamma = _collect_statistics(provider, locations)

    quad = np.einsum("kl,klm,km->k", phases.conj(), r_sq, phases).real
    var = beta_direct + gamma * quad  # per-sample effective variance
    sandwich = np.einsum("kij,kil,klm->kjm", precoder, r_bs, precoder.conj())
    gram = np.einsum("kij,kim->kjm", precoder, precoder.conj())
    r_z = var[:, None, None] * sandwich

    noise = system.noise
    power_b = system.power_b
    sqrt_pb = math.sqrt(power_b)
    r_a = _hermitize(power_b * r_z + noise * gram)
    r_b = _hermitize(r_z + noise * np.eye(m))
    joint = np.empty((k, 2 * m, 2 * m), dtype=complex)
    joint[:, :m, :m] = r_a
    joint[:, :m, m:] = sqrt_pb * _hermitize(r_z)
    joint[:, m:, :m] = sqrt_pb * _hermitize(r_z)
    joint[:, m:, m:] = r_b

    def logdet(mats: np.ndarray) -> np.ndarray:
        chol = np.linalg.cholesky(mats)
        return 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1).real).sum(axis=-1)

    try:
        mi_nats = logdet(r_a) + logdet(r_b) - logdet(joint)
    except np.linalg.LinAlgError:
        # singular determinant argument: surface as an infinite loss signal
        return math.inf, (_zero_grads(params) if want_grad else None)

    loss_bits = float(-np.mean(mi_nats) / _LN2)
    if not want_grad:
        return loss_bits, None

    inv_a = np.linalg.inv(r_a)
    inv_b = np.linalg.inv(r_b)
    inv_j = np.linalg.inv(joint)
    j11 = inv_j[:, :m, :m]
    j12 = inv_j[:, :m, m:]
    j22 = inv_j[:, m:, m:]
    k_z = power_b * (inv_a - j11) + (inv_b - j22) - sqrt_pb * (j12 + np.swapaxes(j12, -1, -2).conj())
    k_n = noise * (inv_a - j11)

    scale = -1.0 / (k * _LN2)  # d(loss)/d(sum of per-sample MI in nats)
    # cogradients wrt conj(precoder) and conj(phases) of the scaled objective
    d_p = var[:, None, None] * (r_bs @ precoder.conj() @ k_z) + precoder.conj() @ k_n
    g_p = scale * d_p.conj()
    trace_kz_w = np.einsum("kij,kji->k", k_z, sandwich).real
    g_theta = (scale * gamma * trace_kz_w)[:, None] * np.einsum("klm,km->kl", r_sq, phases)

    # back through the phase normalization (radial components drop out)
    u, v, radius, live = cache[6]
    g_re = 2.0 * g_theta.real
    g_im = 2.0 * g_theta.imag
    r3 = radius**3
    grad_u = np.where(live, (v / r3) * (g_re * v - g_im * u), 0.0)
    grad_v = np.where(live, (u / r3) * (g_im * u - g_re * v), 0.0)
    g_tprime = np.concatenate([grad_u, grad_v], axis=1)

    # back through the precoder normalization (projection removes the radial part)
    raw, norm, target = cache[5]
    inner = np.einsum("kij,kij->k", g_p.conj(), raw).real
    g_raw = (target / norm)[:, None, None] * (g_p - (inner / norm**2)[:, None, None] * raw)
    g_raw_cm = g_raw.swapaxes(1, 2).reshape(k, m * m)  # column-major flatten per sample
    g_pprime = np.concatenate([2.0 * g_raw_cm.real, 2.0 * g_raw_cm.imag], axis=1)

    # back through the MLP
    locations_arr, a1, h1, a2, h2, _, _ = cache
    d_wp = g_pprime.T @ h2
    d_bp = g_pprime.sum(axis=0)
    d_wt = g_tprime.T @ h2
    d_bt = g_tprime.sum(axis=0)
    d_h2 = g_pprime @ params.Wp + g_tprime @ params.Wt
    d_a2 = d_h2 * (a2 > 0.0)
    d_w2 = d_a2.T @ h1
    d_b2 = d_a2.sum(axis=0)
    d_h1 = d_a2 @ params.W2
    d_a1 = d_h1 * (a1 > 0.0)
    d_w1 = d_a1.T @ locations_arr
    d_b1 = d_a1.sum(axis=0)

    grads = NetParams(W1=d_w1, b1=d_b1, W2=d_w2, b2=d_b2, Wp=d_wp, bp=d_bp, Wt=d_wt, bt=d_bt)
    return loss_bits, grads


def _as_location_array(batch_locations) -> np.ndarray:
    locs = np.asarray(batch_locations, dtype=float)
    if locs.ndim == 1:
        locs = locs.reshape(1, -1)
    if locs.ndim != 2 or locs.shape[1] != 3:
        raise ConfigError(f"locations must be (K, 3), got shape {locs.shape}")
    return locs


def loss(params: NetParams, batch_locations, config: SystemConfig, stats_provider=None) -> float:
    """Negative batch-mean SKR in bits (exact closed form, per-sample statistics)."""
    locs = _as_location_array(batch_locations)
    provider = make_stats_provider(config) if stats_provider is None else stats_provider
    value, _ = _loss_and_grad(params, locs, config, provider, want_grad=False)
    return value


def gradient(params: NetParams, batch_locations, config: SystemConfig, stats_provider=None) -> NetParams:
    """Exact reverse-mode gradient of ``loss`` with respect to every parameter."""
    locs = _as_location_array(batch_locations)
    provider = make_stats_provider(config) if stats_provider is None else stats_provider
    _, grads = _loss_and_grad(params, locs, config, provider, want_grad=True)
    return grads


def loss_and_gradient(params: NetParams, batch_locations, config: SystemConfig, stats_provider=None):
    locs = _as_location_array(batch_locations)
    provider = make_stats_provider(config) if stats_provider is None else stats_provider
    return _loss_and_grad(params, locs, config, provider, want_grad=True)


# ---------------------------------------------------------------------------
# training


@dataclass
class _AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def _adam_step(params: NetParams, grads: NetParams, state: _AdamState, cfg: TrainConfig) -> None:
    state.t += 1
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for name in PARAM_FIELDS:
        g = getattr(grads, name)
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g**2
        step = cfg.learning_rate * (state.m[name] / corr1) / (np.sqrt(state.v[name] / corr2) + eps)
        getattr(params, name)[...] -= step


def _draw_locations(rng: np.random.Generator, n: int, region) -> np.ndarray:
    (x_lo, x_hi), (y_lo, y_hi) = region
    x = rng.uniform(x_lo, x_hi, n)
    y = rng.uniform(y_lo, y_hi, n)
    return np.column_stack([x, y, np.zeros(n)])


def train(train_config: TrainConfig, system: SystemConfig, progress=None):
    """Run the full Adam loop; returns (params, per-epoch mean loss history).

    Deterministic given the seed. UE locations are drawn fresh each epoch
    (x block then y block) unless ``fresh_samples`` is off, in which case one
    fixed set is reshuffled. ``progress(epoch, mean_loss_bits, wall_seconds)``
    is invoked after each epoch when given. Aborts with an error after 5
    consecutive non-finite batch losses.
    """
    rng = np.random.default_rng(train_config.seed)
    params = init_params(system.M, system.L, rng)
    provider = make_stats_provider(system)
    state = _AdamState()
    fixed_set = None
    if not train_config.fresh_samples:
        fixed_set = _draw_locations(rng, train_config.samples_per_epoch, train_config.ue_region)
    history: list[float] = []
    bad_streak = 0
    for epoch in range(train_config.epochs):
        tick = time.perf_counter()
        if fixed_set is None:
            locations = _draw_locations(rng, train_config.samples_per_epoch, train_config.ue_region)
        else:
            locations = fixed_set[rng.permutation(len(fixed_set))]
        batch_losses = []
        for start in range(0, len(locations), train_config.batch_size):
            batch = locations[start : start + train_config.batch_size]
            value, grads = _loss_and_grad(params, batch, system, provider, want_grad=True)
            if math.isfinite(value):
                bad_streak = 0
            else:
                bad_streak += 1
                if bad_streak >= 5:
                    raise NumericalError(
                        "training diverged: loss non-finite for 5 consecutive steps"
                    )
            _adam_step(params, grads, state, train_config)
            batch_losses.append(value)
        mean_loss = float(np.mean(batch_losses))
        history.append(mean_loss)
        if progress is not None:
            progress(epoch, mean_loss, time.perf_counter() - tick)
    return params, history


# ---------------------------------------------------------------------------
# serialization and flattening helpers


def save_checkpoint(path: str, params: NetParams, seed: int | None = None) -> None:
    """Write a one-line JSON header plus little-endian float64 parameter blocks."""
    meta = {
        "format": _CHECKPOINT_FORMAT,
        "M": params.M,
        "L": params.L,
        "hidden": params.hidden,
        "packing": _PACKING,
        "seed": seed,
        "fields": list(PARAM_FIELDS),
        "shapes": {name: list(getattr(params, name).shape) for name in PARAM_FIELDS},
    }
    header = json.dumps(meta, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        for name in PARAM_FIELDS:
            fh.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def load_checkpoint(path: str):
    """Inverse of save_checkpoint; returns (params, metadata dict)."""
    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    try:
        meta = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"not a checkpoint file: {path}") from exc
    if meta.get("format") != _CHECKPOINT_FORMAT:
        raise ConfigError(f"unsupported checkpoint format in {path}: {meta.get('format')!r}")
    arrays = {}
    offset = 0
    for name in meta["fields"]:
        shape = tuple(meta["shapes"][name])
        count = int(np.prod(shape)) if shape else 1
        chunk = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        arrays[name] = chunk.reshape(shape).astype(float)
        offset += count * 8
    return NetParams(**arrays), meta


def params_to_vector(params: NetParams) -> np.ndarray:
    return np.concatenate([getattr(params, name).ravel() for name in PARAM_FIELDS])


def vector_to_params(vec: np.ndarray, template: NetParams) -> NetParams:
    arrays = {}
    offset = 0
    for name in PARAM_FIELDS:
        ref = getattr(template, name)
        arrays[name] = vec[offset : offset + ref.size].reshape(ref.shape).copy()
        offset += ref.size
    return NetParams(**arrays)

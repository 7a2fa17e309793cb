"""Confounded-data generator with factor structure.

Draws from the model

    X = H Psi + E,    Y = X beta + H phi + xi,

with H (n x q) and xi standard Gaussian, Psi uniform on (-2, 2),
phi ~ N(mu, 1), and E rows Gaussian with covariance Sigma_E given by one
of three precision-matrix structures (identity, Erdos-Renyi graph, banded
graph). Signals are planted at s0 random coordinates with magnitude
1.2^(-nu) * sqrt(8 * omega_jj * log(p) / n) and a random sign.

All randomness flows from a counter-based Philox generator keyed by the
config seed; each model component draws from its own jumped stream so,
for example, regenerating with different signal placement leaves X
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import ConstructionError, ParameterError

#: Minimum eigenvalue certified for every generated precision matrix.
PD_FLOOR = 0.05

#: Stream indices for the named Philox substreams.
STREAMS = {"H": 0, "Psi": 1, "phi": 2, "E": 3, "xi": 4, "signals": 5, "graph": 6}


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for one named substream of the given seed.

    Streams are Philox counter blocks 2^128 apart, so they never overlap.
    """
    if name not in STREAMS:
        raise ParameterError(f"unknown stream {name!r}")
    return np.random.Generator(np.random.Philox(key=seed).jumped(STREAMS[name]))


@dataclass(frozen=True)
class GraphSpec:
    """Structure of the idiosyncratic precision matrix.

    kind "identity" needs no parameters. "erdos-renyi" places
    ``edge_weight`` on each off-diagonal pair independently with
    probability ``edge_prob`` (default 4/p) and then repairs positive
    definiteness. "banded" puts ``band_weights`` on the first and second
    off-diagonals.
    """

    kind: str = "identity"
    edge_prob: float | None = None
    edge_weight: float = 0.3
    band_weights: tuple[float, float] = (0.4, 0.2)

    def __post_init__(self):
        if self.kind not in ("identity", "erdos-renyi", "banded"):
            raise ParameterError(
                f"unknown graph kind {self.kind!r}; "
                "expected identity, erdos-renyi, or banded"
            )
        if self.edge_prob is not None and not 0.0 < self.edge_prob < 1.0:
            raise ParameterError(f"edge_prob={self.edge_prob} must lie in (0, 1)")
        if len(self.band_weights) != 2:
            raise ParameterError("band_weights must hold exactly two values")


@dataclass(frozen=True)
class SimConfig:
    """Sizes and distribution parameters of one simulated dataset."""

    n: int
    p: int
    q: int
    s0: int
    mu: float = 3.0
    nu: float = 3.0
    graph: GraphSpec = GraphSpec()
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 2:
            raise ParameterError(f"need n >= 1 and p >= 2, got n={self.n}, p={self.p}")
        if not 0 <= self.q < min(self.n, self.p):
            raise ParameterError(
                f"q={self.q} must satisfy 0 <= q < min(n, p) = {min(self.n, self.p)}"
            )
        if not 0 <= self.s0 <= self.p:
            raise ParameterError(f"s0={self.s0} must lie in [0, p={self.p}]")
        if self.nu < 0:
            raise ParameterError(f"nu={self.nu} must be >= 0")
        if self.seed < 0:
            raise ParameterError(f"seed={self.seed} must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """Everything the generator knows that an analyst would not."""

    beta: np.ndarray
    confounders: np.ndarray
    loadings: np.ndarray
    confounder_coef: np.ndarray
    omega: np.ndarray
    sigma: np.ndarray

    @property
    def omega_diag(self) -> np.ndarray:
        return np.diag(self.omega)

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.beta != 0.0)[0]


def _certify_and_factor(omega):
    """Eigendecompose a symmetric precision matrix; return its inverse and
    symmetric square root of the inverse, or None when below the PD floor."""
    vals, vecs = np.linalg.eigh(omega)
    if vals[0] < PD_FLOOR:
        return None
    inv_vals = 1.0 / vals
    sigma = (vecs * inv_vals) @ vecs.T
    sigma_sqrt = (vecs * np.sqrt(inv_vals)) @ vecs.T
    return sigma, sigma_sqrt


def _build_precision_factors(spec: GraphSpec, p: int, rng: np.random.Generator):
    """Build (omega, sigma, sigma_sqrt) for the requested structure.

    Erdos-Renyi matrices are repaired toward the PD floor by repeatedly
    adding (|lambda_min| + PD_FLOOR) I and rescaling to unit diagonal
    until the floor certificate holds.
    """
    if p < 2:
        raise ParameterError(f"need p >= 2, got p={p}")
    if spec.kind == "identity":
        eye = np.eye(p)
        return eye, eye.copy(), eye.copy()

    if spec.kind == "banded":
        w1, w2 = spec.band_weights
        omega = np.eye(p)
        idx = np.arange(p - 1)
        omega[idx, idx + 1] = omega[idx + 1, idx] = w1
        if p > 2:
            idx = np.arange(p - 2)
            omega[idx, idx + 2] = omega[idx + 2, idx] = w2
        factors = _certify_and_factor(omega)
        if factors is None:
            raise ConstructionError(
                f"banded precision with weights {spec.band_weights} is not "
                f"positive definite above the floor {PD_FLOOR}"
            )
        return omega, *factors

    # Erdos-Renyi
    prob = spec.edge_prob if spec.edge_prob is not None else 4.0 / p
    omega = np.eye(p)
    draws = rng.random(size=(p, p))
    mask = np.triu(draws < prob, k=1)
    omega[mask] = spec.edge_weight
    omega[mask.T] = spec.edge_weight

    for _ in range(50):
        vals = np.linalg.eigvalsh(omega)
        lam_min = vals[0]
        if lam_min > PD_FLOOR:
            break
        shift = abs(lam_min) + PD_FLOOR
        omega = omega + shift * np.eye(p)
        d = np.sqrt(np.diag(omega))
        omega = omega / np.outer(d, d)
    factors = _certify_and_factor(omega)
    if factors is None:
        raise ConstructionError(
            "positive-definiteness repair failed for the Erdos-Renyi precision"
        )
    return omega, *factors


def build_precision(spec: GraphSpec, p: int, rng: np.random.Generator):
    """Precision matrix and its inverse for the requested graph structure.

    Returns
    -------
    (omega, sigma) : pair of (p, p) ndarrays
        ``sigma`` is the symmetric positive-definite inverse of ``omega``.

    Raises
    ------
    ConstructionError
        If the matrix cannot be brought above the eigenvalue floor.
    """
    omega, sigma, _ = _build_precision_factors(spec, p, rng)
    return omega, sigma


def place_signals(
    p: int,
    s0: int,
    nu: float,
    omega_diag: np.ndarray,
    log_p_over_n: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sparse coefficient vector with s0 randomly placed signed signals.

    Each planted coordinate j gets magnitude
    1.2^(-nu) * sqrt(8 * omega_jj * log(p) / n) and an independent
    uniform random sign.
    """
    if not 0 <= s0 <= p:
        raise ParameterError(f"s0={s0} must lie in [0, p={p}]")
    beta = np.zeros(p)
    if s0 == 0:
        return beta
    coords = rng.choice(p, size=s0, replace=False)
    signs = rng.integers(0, 2, size=s0) * 2 - 1
    mags = 1.2 ** (-nu) * np.sqrt(8.0 * np.asarray(omega_diag)[coords] * log_p_over_n)
    beta[coords] = signs * mags
    return beta


def generate_dataset(config: SimConfig) -> tuple[Dataset, GroundTruth]:
    """Draw one dataset and its ground truth from the confounded model.

    Deterministic given the config: every component uses its own named
    Philox stream keyed by ``config.seed``.
    """
    n, p, q = config.n, config.p, config.q

    omega, sigma, sigma_sqrt = _build_precision_factors(
        config.graph, p, stream_rng(config.seed, "graph")
    )

    h = stream_rng(config.seed, "H").standard_normal((n, q))
    psi = stream_rng(config.seed, "Psi").uniform(-2.0, 2.0, size=(q, p))
    phi = stream_rng(config.seed, "phi").normal(config.mu, 1.0, size=q)
    z = stream_rng(config.seed, "E").standard_normal((n, p))
    noise = stream_rng(config.seed, "xi").standard_normal(n)

    errors = z @ sigma_sqrt
    beta = place_signals(
        p,
        config.s0,
        config.nu,
        np.diag(omega),
        np.log(p) / n,
        stream_rng(config.seed, "signals"),
    )

    design = h @ psi + errors if q > 0 else errors
    response = design @ beta + (h @ phi if q > 0 else 0.0) + noise

    dataset = Dataset(design=design, response=response)
    truth = GroundTruth(
        beta=beta,
        confounders=h,
        loadings=psi,
        confounder_coef=phi,
        omega=omega,
        sigma=sigma,
    )
    return dataset, truth

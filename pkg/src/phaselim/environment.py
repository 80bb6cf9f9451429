"""Population sampling, reward generation, switch threshold, and hard instances.

Agents draw their parameter vectors i.i.d. from a population distribution
with mean ``mu`` and covariance ``C``; rewards are linear with additive
Gaussian noise.  The stage-switch threshold and the rotated-hypercube hard
instance implement the closed forms used by the simulation experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .design import ActionSet
from .errors import ResourceError, SamplingError, ValidationError

__all__ = [
    "PopulationModel",
    "Instance",
    "HardInstance",
    "sample_instance",
    "reward",
    "h_threshold",
    "hard_instance_hypercube",
]

_FAMILIES = ("gaussian", "subgaussian_uniform")


@dataclass(frozen=True)
class PopulationModel:
    """Hierarchical population: theta_i ~ family(mu, C), rewards ~ N(<x, theta>, sigma0^2)."""

    mu: np.ndarray
    C: np.ndarray
    sigma0: float = 1.0
    family: str = "gaussian"

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if mu.ndim != 1 or C.shape != (mu.size, mu.size):
            raise ValidationError("mu must be a d-vector and C a matching (d, d) matrix")
        if not np.allclose(C, C.T, atol=1e-10):
            raise ValidationError("C must be symmetric within 1e-10")
        lam = np.linalg.eigvalsh(0.5 * (C + C.T))
        if lam.min(initial=0.0) < -1e-10:
            raise ValidationError("C must be positive semidefinite within 1e-10")
        if not self.sigma0 > 0:
            raise ValidationError("sigma0 must be > 0")
        if self.family not in _FAMILIES:
            raise ValidationError(f"family must be one of {_FAMILIES}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "C", C)

    @property
    def d(self) -> int:
        return self.mu.size

    @classmethod
    def isotropic(cls, mu, sigma: float, sigma0: float = 1.0, family: str = "gaussian"):
        """Population with C = sigma^2 * I; sigma = 0 is the homogeneous case."""
        mu = np.asarray(mu, dtype=float)
        if sigma < 0:
            raise ValidationError("sigma must be >= 0")
        return cls(mu=mu, C=sigma**2 * np.eye(mu.size), sigma0=sigma0, family=family)

    def factor(self) -> np.ndarray:
        """Symmetric PSD square root of C (eigenvalue clipping at 0)."""
        lam, U = np.linalg.eigh(0.5 * (self.C + self.C.T))
        return (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.T


@dataclass(frozen=True)
class Instance:
    """Realized population draw: per-agent parameters plus their best actions."""

    thetas: np.ndarray
    optimal_values: np.ndarray
    optimal_ids: np.ndarray

    @property
    def m(self) -> int:
        return self.thetas.shape[0]

    @classmethod
    def from_thetas(cls, thetas: np.ndarray, action_set: ActionSet) -> "Instance":
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        values = thetas @ action_set.matrix.T
        best = values.max(axis=1)
        # Exact ties break toward the lowest action id.
        ids = np.where(values == best[:, None], action_set.ids[None, :], np.iinfo(np.int64).max)
        return cls(thetas=thetas, optimal_values=best, optimal_ids=ids.min(axis=1))


def sample_instance(
    model: PopulationModel, m: int, action_set: ActionSet, rng: np.random.Generator
) -> Instance:
    """Draw m agent parameters from the population and enumerate their optima."""
    if m < 1:
        raise ValidationError("m must be >= 1")
    if action_set.d != model.d:
        raise ValidationError("action set dimension must match the population model")
    if model.family == "gaussian":
        z = rng.standard_normal((m, model.d))
    else:
        root3 = np.sqrt(3.0)  # uniform on [-sqrt(3), sqrt(3)] has unit variance
        z = rng.uniform(-root3, root3, size=(m, model.d))
    thetas = model.mu[None, :] + z @ model.factor().T
    return Instance.from_thetas(thetas, action_set)


def reward(theta: np.ndarray, action: np.ndarray, sigma0: float, rng: np.random.Generator) -> float:
    """One noisy observation <action, theta> + N(0, sigma0^2)."""
    theta = np.asarray(theta, dtype=float)
    action = np.asarray(action, dtype=float)
    if theta.shape != action.shape:
        raise ValidationError("theta and action dimensions must match")
    return float(action @ theta + sigma0 * rng.standard_normal())


def h_threshold(action_set: ActionSet, C: np.ndarray, m: int, delta: float, k: int | None = None) -> float:
    """Stage-switch threshold: sqrt(2 M log(4k/delta)) + sqrt((2/m) M log(4k/delta)).

    M = max over the action set of x^T C x.  The run stays collaborative
    while this value is at most eps_ell / 2.
    """
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    if m < 1:
        raise ValidationError("m must be >= 1")
    C = np.asarray(C, dtype=float)
    X = action_set.matrix
    M = float(np.max(np.einsum("ij,jk,ik->i", X, C, X)))
    M = max(M, 0.0)
    if k is None:
        k = action_set.k
    log_term = np.log(4.0 * k / delta)
    return float(np.sqrt(2.0 * M * log_term) + np.sqrt(2.0 * M * log_term / m))


@dataclass(frozen=True)
class HardInstance:
    """Rotated-hypercube family: 2^{d-1} equal-norm parameter vectors on a cone.

    Every vertex has first coordinate ``norm * cos(eta)`` and remaining
    coordinates ``z_l * half_edge`` for a sign pattern z; neighbors differ in
    one sign and sit exactly ``2 * half_edge`` apart.
    """

    theta0: np.ndarray
    eta: float
    vertices: np.ndarray
    z_index: dict = field(repr=False)
    c1: float
    c3: float
    c4: float
    alpha_or_gamma: float

    @property
    def d(self) -> int:
        return self.theta0.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.theta0))

    @property
    def half_edge(self) -> float:
        return float(abs(self.vertices[0, -1])) if self.d > 1 else 0.0

    def vertex(self, z) -> np.ndarray:
        return self.vertices[self.z_index[tuple(int(s) for s in z)]]


def hard_instance_hypercube(
    d: int,
    n: int,
    alpha: float | None = None,
    c1: float = 1.0,
    rng: np.random.Generator | None = None,
    *,
    gamma: float | None = None,
    m: int | None = None,
    max_tries: int = 10_000,
) -> HardInstance:
    """Sample the lower-bound hard instance for dimension d and budget n.

    Exactly one of ``alpha`` (budget-exponent variant, scale n^{-1/2+alpha})
    or ``gamma`` (population-exponent variant, scale m^{-gamma} n^{-1/2},
    requires ``m``) must be given.  theta0 is drawn from N(0, sigma^2 I)
    with sigma = c1 sqrt(d) * scale, rejected until its norm falls in
    [c1 sqrt(2)/2 * d * scale, c1 sqrt(6)/2 * d * scale].
    """
    if d < 2:
        raise ValidationError("d must be >= 2")
    if d > 24:
        raise ResourceError("d > 24 would allocate more than 2^23 vertices; reduce d")
    if n < 1:
        raise ValidationError("n must be >= 1")
    if c1 <= 0:
        raise ValidationError("c1 must be > 0")
    if (alpha is None) == (gamma is None):
        raise ValidationError("provide exactly one of alpha or gamma")
    if rng is None:
        raise ValidationError("a seeded numpy Generator is required")

    if alpha is not None:
        if not 0.0 <= alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")
        norm_scale = float(n) ** (-0.5 + alpha)
        edge_scale = float(n) ** (-0.5 + alpha / 2.0)
        exponent = float(alpha)
        # Guard for the cone angle below, stated in terms of the raw exponent.
        angle_guard = lambda c3: (c4_of() / c3) * np.sqrt((d - 1) / (d * float(n) ** alpha))
    else:
        if gamma < 0:
            raise ValidationError("gamma must be >= 0")
        if m is None or m < 1:
            raise ValidationError("the gamma variant requires m >= 1")
        norm_scale = float(m) ** (-gamma) / np.sqrt(float(n))
        edge_scale = norm_scale
        exponent = float(gamma)
        angle_guard = lambda c3: (c4_of() / c3) * np.sqrt((d - 1) / d)

    def c4_of() -> float:
        return min(c1 * np.sqrt(2.0) / 2.0, np.sqrt(c1 / (6.0 * np.sqrt(2.0))))

    sigma = c1 * np.sqrt(d) * norm_scale
    lo = c1 * np.sqrt(2.0) / 2.0 * d * norm_scale
    hi = c1 * np.sqrt(6.0) / 2.0 * d * norm_scale
    theta0 = None
    for _ in range(max_tries):
        cand = sigma * rng.standard_normal(d)
        if lo <= np.linalg.norm(cand) <= hi:
            theta0 = cand
            break
    if theta0 is None:
        raise SamplingError(
            f"norm event not hit in {max_tries} tries; the acceptance band should have "
            "probability well above 0.2, so check the inputs"
        )

    norm0 = float(np.linalg.norm(theta0))
    c3 = norm0 / (d * norm_scale)
    c4 = c4_of()
    guard = float(angle_guard(c3))
    if not 0.0 < guard < 1.0:
        raise ValidationError(
            f"cone-angle argument {guard:.6g} outside (0, 1); increase n or reduce c1"
        )

    half_edge = c4 * edge_scale
    sin_eta = half_edge * np.sqrt(d - 1.0) / norm0
    if not 0.0 < sin_eta < 1.0:
        raise ValidationError(f"cone-angle sine {sin_eta:.6g} outside (0, 1)")
    eta = float(np.arcsin(sin_eta))

    signs = np.array(list(product((-1.0, 1.0), repeat=d - 1)))
    vertices = np.empty((signs.shape[0], d))
    vertices[:, 0] = norm0 * np.cos(eta)
    vertices[:, 1:] = signs * half_edge
    z_index = {tuple(int(s) for s in row): i for i, row in enumerate(signs)}
    return HardInstance(
        theta0=theta0,
        eta=eta,
        vertices=vertices,
        z_index=z_index,
        c1=float(c1),
        c3=float(c3),
        c4=float(c4),
        alpha_or_gamma=exponent,
    )

"""Synthetic bi-directional data with known valid and invalid instruments.

A scenario ``S(a, b, g)`` has ``a`` variants that are valid instruments for
X -> Y, ``b`` valid for Y -> X and ``g - a - b`` invalid ones. Invalid
variants either affect both phenotypes directly, act through the confounder
U, or both.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .model import Dataset, ModelParams, PrebimError, ValidityLabels, population_moments

MAX_ATTEMPTS = 10_000
# smallest admissible |Gx_i Gy_j - Gy_i Gx_j| for variants not sharing a direction
IDENTIFIABILITY_GAP = 0.01

VALID_XY = "valid_xy"
VALID_YX = "valid_yx"
INVALID_PLEIOTROPIC = "invalid_pleiotropic"
INVALID_CONFOUNDED = "invalid_confounded"
INVALID_BOTH = "invalid_both"


class RejectionBudgetError(PrebimError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    n_valid_xy: int
    n_valid_yx: int
    n_total: int
    sample_size: int
    bidirectional: bool = True
    correlated_valid: bool = False
    seed: int = 0

    def __post_init__(self):
        a, b, g = self.n_valid_xy, self.n_valid_yx, self.n_total
        if a < 0 or b < 0 or a + b > g:
            raise PrebimError(f"need 0 <= a, b and a + b <= g, got S({a},{b},{g})")
        if g < 2:
            raise PrebimError("need at least two variants")
        if self.sample_size < 4:
            raise PrebimError(f"sample size must be >= 4, got {self.sample_size}")
        if not self.bidirectional and b > 0:
            raise PrebimError("a one-directional scenario cannot have Y -> X instruments")
        if self.correlated_valid and a < 2 and b < 2:
            raise PrebimError("the correlated mode needs two valid instruments in one direction")

    @property
    def label(self) -> str:
        return f"S({self.n_valid_xy},{self.n_valid_yx},{self.n_total})"

    def with_sample_size(self, n: int) -> "ScenarioSpec":
        return ScenarioSpec(self.n_valid_xy, self.n_valid_yx, self.n_total, n,
                            self.bidirectional, self.correlated_valid, self.seed)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_valid_xy": self.n_valid_xy,
            "n_valid_yx": self.n_valid_yx,
            "n_total": self.n_total,
            "sample_size": self.sample_size,
            "bidirectional": self.bidirectional,
            "correlated_valid": self.correlated_valid,
            "seed": self.seed,
        }


def draw_effect(rng, size=None):
    """Uniform draws from [-1, -0.5] U [0.5, 1]."""
    magnitude = rng.uniform(0.5, 1.0, size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return magnitude * sign


def _total_loadings(params: ModelParams):
    # variant effects on X and Y with the confounder path folded in, before feedback
    gx = params.gamma_x + params.gamma_xu * params.gamma_u
    gy = params.gamma_y + params.gamma_yu * params.gamma_u
    return gx, gy


def identifiability_gap(params: ModelParams, labels: ValidityLabels) -> float:
    """Smallest cross-determinant over variant pairs that do not share a valid direction.

    A zero gap means two such variants give identical single-instrument
    TSLS limits, so the pair would look like a valid set.
    """
    gx, gy = _total_loadings(params)
    group = np.full(params.g, -1)
    group[list(labels.valid_for_xy)] = 0
    group[list(labels.valid_for_yx)] = 1
    gap = np.inf
    for i in range(params.g):
        for j in range(i + 1, params.g):
            if group[i] >= 0 and group[i] == group[j]:
                continue
            gap = min(gap, abs(gx[i] * gy[j] - gy[i] * gx[j]))
    return float(gap)


def _draw_once(spec: ScenarioSpec, rng):
    a, b, g = spec.n_valid_xy, spec.n_valid_yx, spec.n_total
    beta_xy = float(draw_effect(rng))
    beta_yx = float(draw_effect(rng)) if spec.bidirectional else 0.0
    order = rng.permutation(g)
    valid_xy, valid_yx, invalid = order[:a], order[a:a + b], order[a + b:]

    gamma_x = np.zeros(g)
    gamma_y = np.zeros(g)
    gamma_u = np.zeros(g)
    roles = [""] * g
    for j in valid_xy:
        gamma_x[j] = draw_effect(rng)
        roles[j] = VALID_XY
    for j in valid_yx:
        gamma_y[j] = draw_effect(rng)
        roles[j] = VALID_YX
    for j in invalid:
        kind = rng.integers(3)
        if kind == 0:
            gamma_x[j], gamma_y[j] = draw_effect(rng, 2)
            roles[j] = INVALID_PLEIOTROPIC
        elif kind == 1:
            # confounder path plus one phenotype so the variant stays relevant
            target = gamma_x if rng.random() < 0.5 else gamma_y
            target[j], gamma_u[j] = draw_effect(rng, 2)
            roles[j] = INVALID_CONFOUNDED
        else:
            gamma_x[j], gamma_y[j], gamma_u[j] = draw_effect(rng, 3)
            roles[j] = INVALID_BOTH
    gamma_xu, gamma_yu = draw_effect(rng, 2)
    maf = rng.uniform(0.1, 0.5, g)

    dependence = None
    if spec.correlated_valid:
        pair = np.sort(valid_xy[:2]) if a >= 2 else np.sort(valid_yx[:2])
        dependence = (int(pair[0]), int(pair[1]), float(draw_effect(rng)))

    params = ModelParams(
        beta_xy=beta_xy,
        beta_yx=beta_yx,
        gamma_x=gamma_x,
        gamma_y=gamma_y,
        gamma_u=gamma_u,
        gamma_xu=float(gamma_xu),
        gamma_yu=float(gamma_yu),
        variant_variances=2.0 * maf * (1.0 - maf),
        maf=maf,
        dependence=dependence,
    )
    labels = ValidityLabels(
        valid_for_xy=tuple(int(j) for j in valid_xy),
        valid_for_yx=tuple(int(j) for j in valid_yx),
        roles=tuple(roles),
        dependent_pair=None if dependence is None else dependence[:2],
    )
    return params, labels


def draw_scenario_params(spec: ScenarioSpec, rng, max_attempts: int = MAX_ATTEMPTS):
    """Draw ground-truth parameters and labels for ``spec``.

    Draws are rejected until the direction variance ordering holds and
    :func:`identifiability_gap` is at least ``IDENTIFIABILITY_GAP``.
    """
    for _ in range(max_attempts):
        params, labels = _draw_once(spec, rng)
        if abs(params.beta_xy * params.beta_yx - 1.0) <= 1e-6:
            continue
        if not params.satisfies_direction_assumption():
            continue
        if identifiability_gap(params, labels) < IDENTIFIABILITY_GAP:
            continue
        return params, labels
    raise RejectionBudgetError(f"no admissible parameters for {spec.label} after {max_attempts} draws")


class SimulatedSample(NamedTuple):
    genotypes: np.ndarray  # raw, uncentered
    u: np.ndarray
    x: np.ndarray
    y: np.ndarray
    noise: np.ndarray  # columns e1, e2, e3


def _draw_genotypes(params: ModelParams, n: int, rng) -> np.ndarray:
    if params.maf is not None:
        geno = rng.binomial(2, params.maf, size=(n, params.g)).astype(np.float64)
    else:
        geno = rng.standard_normal((n, params.g)) * np.sqrt(params.variant_variances)
    if params.dependence is not None:
        j, k, c = params.dependence
        geno[:, k] += c * geno[:, j]
    return geno


def simulate_raw(params: ModelParams, n: int, rng) -> SimulatedSample:
    """Draw n observations, solving the X/Y feedback pair in closed form."""
    geno = _draw_genotypes(params, n, rng)
    noise = rng.standard_normal((n, 3)) * np.sqrt(params.noise_variances)
    e1, e2, e3 = noise.T
    bxy, byx = params.beta_xy, params.beta_yx
    delta = params.delta
    u = geno @ params.gamma_u + e1
    # structural X and Y right-hand sides without the feedback term
    sx = geno @ params.gamma_x + params.gamma_xu * u + e2
    sy = geno @ params.gamma_y + params.gamma_yu * u + e3
    x = delta * (sx + byx * sy)
    y = delta * (sy + bxy * sx)
    return SimulatedSample(geno, u, x, y, noise)


def generate_dataset(params: ModelParams, spec, rng) -> Dataset:
    """Simulate a centered :class:`Dataset`; ``spec`` is a ScenarioSpec or a sample size."""
    n = spec.sample_size if isinstance(spec, ScenarioSpec) else int(spec)
    sample = simulate_raw(params, n, rng)
    return Dataset(sample.x, sample.y, sample.genotypes)


def simulate_scenario(spec: ScenarioSpec, rng: Optional[np.random.Generator] = None):
    """Draw parameters then data for ``spec``; seeded from ``spec.seed`` by default."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    params, labels = draw_scenario_params(spec, rng)
    sample = simulate_raw(params, spec.sample_size, rng)
    return params, labels, sample


def population_moments_of(params: ModelParams) -> np.ndarray:
    """Observed-variable block (G, X, Y) of the population covariance, dataset layout."""
    cov = population_moments(params)
    g = params.g
    keep = list(range(g)) + [g + 1, g + 2]
    return cov[np.ix_(keep, keep)]

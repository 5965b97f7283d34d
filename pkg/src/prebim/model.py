"""Domain types and the exact population-moment oracle.

The structural model is the linear simultaneous system

    U = G'gamma_u + e1
    X = beta_yx * Y + G'gamma_x + gamma_xu * U + e2
    Y = beta_xy * X + G'gamma_y + gamma_yu * U + e3

with variants ``G`` independent of the noise terms. Solving the X/Y pair
through the reduction factor ``delta = 1 / (1 - beta_xy * beta_yx)`` gives a
non-recursive reduced form, which both the oracle below and the simulator use.
"""
from __future__ import annotations

from dataclasses import dataclass, field, InitVar
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import kernels


class PrebimError(ValueError):
    """Base class for all errors raised by this package."""


class InvalidDatasetError(PrebimError):
    pass


class InvalidParamsError(PrebimError):
    pass


class SingularInstrumentsError(PrebimError):
    """Selected instrument columns are not of full column rank."""


class WeakInstrumentError(PrebimError):
    """First-stage signal of the instruments on the exposure is numerically zero."""


class ZeroVarianceError(PrebimError):
    pass


class SaturatedCorrelationError(PrebimError):
    """|r| = 1, so the Fisher z statistic is infinite."""


class IrrelevantInstrumentError(PrebimError):
    """Variant is uncorrelated with the exposure, so the direction ratio is undefined."""


def _frozen_array(values, ndim, name, dtype=np.float64):
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != ndim:
        raise InvalidDatasetError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """n observations of two phenotypes and a genotype matrix.

    Columns are centered at construction unless ``center=False`` is passed
    for data that is already centered.
    """

    x: np.ndarray
    y: np.ndarray
    genotypes: np.ndarray
    variant_names: tuple = ()
    center: InitVar[bool] = True

    def __post_init__(self, center):
        x = _frozen_array(self.x, 1, "x")
        y = _frozen_array(self.y, 1, "y")
        genotypes = _frozen_array(self.genotypes, 2, "genotypes")
        n = x.shape[0]
        if y.shape[0] != n or genotypes.shape[0] != n:
            raise InvalidDatasetError(
                f"x, y and genotypes must share n; got {n}, {y.shape[0]}, {genotypes.shape[0]}"
            )
        if n < 4:
            raise InvalidDatasetError(f"need n >= 4 observations for the Fisher z test, got {n}")
        g = genotypes.shape[1]
        if g < 2:
            raise InvalidDatasetError(
                f"need at least two candidate variants (at least two valid IVs are required), got {g}"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(genotypes))):
            raise InvalidDatasetError("data contains non-finite values")
        names = tuple(str(v) for v in self.variant_names) or tuple(f"G_{i + 1}" for i in range(g))
        if len(names) != g:
            raise InvalidDatasetError(f"{len(names)} variant names for {g} variants")
        if center:
            x = _frozen_array(x - x.mean(), 1, "x")
            y = _frozen_array(y - y.mean(), 1, "y")
            genotypes = _frozen_array(genotypes - genotypes.mean(axis=0), 2, "genotypes")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "genotypes", genotypes)
        object.__setattr__(self, "variant_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def g(self) -> int:
        return self.genotypes.shape[1]

    @property
    def ix(self) -> int:
        """Column of X in :attr:`moments`."""
        return self.g

    @property
    def iy(self) -> int:
        """Column of Y in :attr:`moments`."""
        return self.g + 1

    @cached_property
    def moments(self) -> np.ndarray:
        """Sample covariance of (G_1..G_g, X, Y), divisor n."""
        z = np.column_stack([self.genotypes, self.x, self.y])
        out = kernels.moment_matrix(np.ascontiguousarray(z))
        out.setflags(write=False)
        return out

    def swapped(self) -> "Dataset":
        """Same data with the roles of X and Y exchanged."""
        return Dataset(self.y, self.x, self.genotypes, self.variant_names, center=False)

    def select(self, columns: Sequence[int]) -> "Dataset":
        cols = list(columns)
        return Dataset(
            self.x, self.y, self.genotypes[:, cols],
            tuple(self.variant_names[c] for c in cols), center=False,
        )


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Ground-truth structural coefficients.

    ``variant_variances`` are the variances of the independent genotype
    components. With ``dependence=(j, k, c)`` variant k is generated as
    ``c * G_j + (independent part)``, so Var(G_k) = c^2 Var_j + Var_k.
    ``maf`` is only used by the simulator (Binomial(2, maf) genotypes);
    without it genotypes are Gaussian with the given variances.
    """

    beta_xy: float
    beta_yx: float
    gamma_x: np.ndarray
    gamma_y: np.ndarray
    gamma_u: np.ndarray
    gamma_xu: float
    gamma_yu: float
    variant_variances: np.ndarray
    noise_variances: tuple = (1.0, 1.0, 1.0)
    maf: Optional[np.ndarray] = None
    dependence: Optional[tuple] = None

    def __post_init__(self):
        for name in ("gamma_x", "gamma_y", "gamma_u", "variant_variances"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        g = self.gamma_x.shape[0]
        for name in ("gamma_y", "gamma_u", "variant_variances"):
            if getattr(self, name).shape != (g,):
                raise InvalidParamsError(f"{name} must have length {g}")
        if np.any(self.variant_variances <= 0):
            raise InvalidParamsError("variant variances must be positive")
        noise = tuple(float(v) for v in self.noise_variances)
        if len(noise) != 3 or min(noise) <= 0:
            raise InvalidParamsError("need three positive noise variances")
        object.__setattr__(self, "noise_variances", noise)
        if abs(self.beta_xy * self.beta_yx - 1.0) <= 1e-6:
            raise InvalidParamsError("beta_xy * beta_yx must differ from 1 (feedback gain)")
        if self.maf is not None:
            maf = np.array(self.maf, dtype=np.float64)
            if maf.shape != (g,) or np.any((maf <= 0) | (maf >= 1)):
                raise InvalidParamsError("maf must lie in (0, 1) for every variant")
            maf.setflags(write=False)
            object.__setattr__(self, "maf", maf)
        if self.dependence is not None:
            j, k, c = self.dependence
            if not (0 <= j < g and 0 <= k < g and j != k):
                raise InvalidParamsError(f"bad dependence pair {self.dependence}")
            object.__setattr__(self, "dependence", (int(j), int(k), float(c)))

    @property
    def g(self) -> int:
        return self.gamma_x.shape[0]

    @property
    def delta(self) -> float:
        return 1.0 / (1.0 - self.beta_xy * self.beta_yx)

    def variant_covariance(self) -> np.ndarray:
        cov = np.diag(self.variant_variances).astype(float)
        if self.dependence is not None:
            j, k, c = self.dependence
            vj = self.variant_variances[j]
            cov[j, k] = cov[k, j] = c * vj
            cov[k, k] += c * c * vj
        return cov

    def genotype_mixing(self) -> np.ndarray:
        """Matrix M with G = independent_components @ M."""
        mix = np.eye(self.g)
        if self.dependence is not None:
            j, k, c = self.dependence
            mix[j, k] = c
        return mix

    def satisfies_direction_assumption(self) -> bool:
        """Check beta_xy^2 Var(X) < Var(Y) and beta_yx^2 Var(Y) <= Var(X)."""
        cov = population_moments(self)
        vx, vy = cov[-2, -2], cov[-1, -1]
        return self.beta_xy ** 2 * vx < vy and self.beta_yx ** 2 * vy <= vx


@dataclass(frozen=True)
class ValidityLabels:
    """True valid-IV index sets, plus optional simulator bookkeeping."""

    valid_for_xy: tuple
    valid_for_yx: tuple
    roles: tuple = ()
    dependent_pair: Optional[tuple] = None

    def __post_init__(self):
        xy = tuple(sorted(int(i) for i in self.valid_for_xy))
        yx = tuple(sorted(int(i) for i in self.valid_for_yx))
        if set(xy) & set(yx):
            raise PrebimError("valid index sets for the two directions must be disjoint")
        object.__setattr__(self, "valid_for_xy", xy)
        object.__setattr__(self, "valid_for_yx", yx)
        object.__setattr__(self, "roles", tuple(self.roles))


@dataclass(frozen=True)
class IVSetCollection:
    """Discovered valid IV sets; each has at least two members and they are disjoint."""

    sets: tuple = ()

    def __post_init__(self):
        sets = tuple(tuple(sorted(int(i) for i in s)) for s in self.sets)
        seen = set()
        for s in sets:
            if len(s) < 2:
                raise PrebimError(f"IV set {s} has fewer than two members")
            if seen & set(s):
                raise PrebimError("IV sets must be pairwise disjoint")
            seen |= set(s)
        object.__setattr__(self, "sets", sets)

    def __len__(self):
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    @property
    def variants(self) -> tuple:
        return tuple(sorted(i for s in self.sets for i in s))


@dataclass(frozen=True)
class EffectEstimates:
    beta_hat_xy: Optional[float]
    beta_hat_yx: Optional[float]
    assigned_xy: tuple
    assigned_yx: tuple
    # variants dropped as irrelevant, and discovered sets whose members split across directions
    dropped: tuple = ()
    split_sets: tuple = ()

    def __post_init__(self):
        if set(self.assigned_xy) & set(self.assigned_yx):
            raise PrebimError("a variant cannot be assigned to both directions")
        if (self.beta_hat_xy is None) != (len(self.assigned_xy) == 0):
            raise PrebimError("beta_hat_xy must be present iff assigned_xy is nonempty")
        if (self.beta_hat_yx is None) != (len(self.assigned_yx) == 0):
            raise PrebimError("beta_hat_yx must be present iff assigned_yx is nonempty")


@dataclass(frozen=True)
class DiscoveryConfig:
    alpha: float = 0.05
    max_set_size: Optional[int] = None
    merge_same_direction: bool = True
    tolerance: float = 1e-10
    # test the instrument's X-orthogonal component (nominal size) instead of G_j itself
    adjusted_test: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise PrebimError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.max_set_size is not None and self.max_set_size < 2:
            raise PrebimError(f"max_set_size must be >= 2, got {self.max_set_size}")

    def resolve_max_set_size(self, g: int) -> int:
        if self.max_set_size is None:
            return max(2, min(g, 10))
        return self.max_set_size


def reduced_form_loadings(params: ModelParams) -> np.ndarray:
    """Loadings of (G_1..G_g, U, X, Y) on the exogenous inputs.

    Rows are the observed/latent variables, columns the exogenous sources
    ``(G_1..G_g, e1, e2, e3)``, so that ``v = L @ s``.
    """
    g = params.g
    bxy, byx = params.beta_xy, params.beta_yx
    delta = params.delta
    # total G -> X and G -> Y coefficients once the feedback loop is solved
    a_x = params.gamma_x + params.gamma_y * byx
    a_y = params.gamma_y + params.gamma_x * bxy
    a_xu = params.gamma_xu + params.gamma_yu * byx
    a_yu = params.gamma_yu + params.gamma_xu * bxy

    load = np.zeros((g + 3, g + 3))
    load[:g, :g] = np.eye(g)
    load[g, :g] = params.gamma_u
    load[g, g] = 1.0
    load[g + 1, :g] = delta * (a_x + a_xu * params.gamma_u)
    load[g + 1, g] = delta * a_xu
    load[g + 1, g + 1] = delta
    load[g + 1, g + 2] = delta * byx
    load[g + 2, :g] = delta * (a_y + a_yu * params.gamma_u)
    load[g + 2, g] = delta * a_yu
    load[g + 2, g + 1] = delta * bxy
    load[g + 2, g + 2] = delta
    return load


def population_moments(params: ModelParams) -> np.ndarray:
    """Exact covariance of (G_1..G_g, U, X, Y) implied by the reduced form."""
    g = params.g
    source = np.zeros((g + 3, g + 3))
    source[:g, :g] = params.variant_covariance()
    source[g:, g:] = np.diag(params.noise_variances)
    load = reduced_form_loadings(params)
    cov = load @ source @ load.T
    return (cov + cov.T) / 2.0


def five_variant_params(gamma_xu: float = 0.5, gamma_yu: float = 0.5) -> ModelParams:
    """Five-variant motivating configuration: G1, G3 valid for X -> Y; G2, G4, G5 pleiotropic.

    Unit variant and noise variances; the confounder loads on X and Y but
    not on any variant. Confounder loadings are free in the original
    example and default to 0.5 here.
    """
    return ModelParams(
        beta_xy=0.6,
        beta_yx=0.6,
        gamma_x=[1.0, 1.0, 1.0, 1.8, 1.2],
        gamma_y=[0.0, 0.5, 0.0, 0.6, 0.3],
        gamma_u=[0.0] * 5,
        gamma_xu=gamma_xu,
        gamma_yu=gamma_yu,
        variant_variances=[1.0] * 5,
    )

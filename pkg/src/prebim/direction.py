"""Assign discovered instruments to a causal direction and estimate both effects."""
from __future__ import annotations

import math
import warnings

import numpy as np

from .estimators import DEFAULT_TOLERANCE, tsls_dataset
from .model import Dataset, EffectEstimates, IVSetCollection, IrrelevantInstrumentError


def direction_ratio_from_moments(moments, j: int, ix: int = -2, iy: int = -1,
                                 tolerance: float = DEFAULT_TOLERANCE) -> float:
    """|corr(G_j, Y)| / |corr(G_j, X)| from a covariance matrix.

    Below 1 the variant instruments X -> Y; at or above 1 it instruments Y -> X.
    """
    cov = np.asarray(moments, dtype=np.float64)
    m = cov.shape[0]
    ix, iy = ix % m, iy % m
    cjj = cov[j, j]
    if cjj <= 0.0 or cov[ix, ix] <= 0.0 or cov[iy, iy] <= 0.0:
        raise IrrelevantInstrumentError(f"variant {j} or a phenotype has zero variance")
    rx = cov[j, ix] / math.sqrt(cjj * cov[ix, ix])
    ry = cov[j, iy] / math.sqrt(cjj * cov[iy, iy])
    if abs(rx) <= tolerance:
        raise IrrelevantInstrumentError(f"variant {j} is uncorrelated with X (|r| = {abs(rx):.3g})")
    return abs(ry) / abs(rx)


def direction_ratio(dataset: Dataset, j: int, tolerance: float = DEFAULT_TOLERANCE) -> float:
    return direction_ratio_from_moments(dataset.moments, j, dataset.ix, dataset.iy, tolerance)


def infer_direction_effects(dataset: Dataset, collection: IVSetCollection,
                            tolerance: float = DEFAULT_TOLERANCE,
                            per_set_majority: bool = False) -> EffectEstimates:
    """Split the discovered instruments by direction and run TSLS for each side.

    Every variant is classified on its own ratio unless ``per_set_majority``
    is set, in which case a whole set follows the majority of its members
    (ties go to Y -> X). Sets whose members disagree are listed in
    ``split_sets`` either way.
    """
    xy, yx, dropped, split = [], [], [], []
    for members in collection:
        votes = {}
        for j in members:
            try:
                votes[j] = direction_ratio(dataset, j, tolerance) < 1.0
            except IrrelevantInstrumentError as err:
                warnings.warn(f"dropping variant {j}: {err}", RuntimeWarning, stacklevel=2)
                dropped.append(j)
        if len(set(votes.values())) > 1:
            split.append(tuple(members))
        if per_set_majority and votes:
            forward = sum(votes.values()) > len(votes) / 2
            votes = dict.fromkeys(votes, forward)
        for j, forward in votes.items():
            (xy if forward else yx).append(j)

    xy, yx = tuple(sorted(xy)), tuple(sorted(yx))
    beta_xy = tsls_dataset(dataset, xy, tolerance=tolerance) if xy else None
    beta_yx = tsls_dataset(dataset, yx, reverse=True, tolerance=tolerance) if yx else None
    return EffectEstimates(
        beta_hat_xy=beta_xy,
        beta_hat_yx=beta_yx,
        assigned_xy=xy,
        assigned_yx=yx,
        dropped=tuple(sorted(dropped)),
        split_sets=tuple(split),
    )

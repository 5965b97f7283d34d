"""Search for valid instrument sets by seeding, growing and fusing clusters of variants.

The search works on the dataset's moment matrix only. A pair of variants is
scored by how close its two leave-one-out pseudo-residual correlations are
to zero; the best pair that passes the correlation test seeds a set, which
then grows one variant at a time while the leave-one-out battery keeps
passing. A second grown set is either fused into the first (same causal
direction) or kept as the other direction's set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .estimators import accepts_zero, valid_set_test
from .model import Dataset, DiscoveryConfig, IVSetCollection, PrebimError


@dataclass
class DiscoveryTrace:
    """Record of every decision the search made, for debugging and ``--trace``."""

    seed_pairs_considered: list = field(default_factory=list)
    growth_steps: list = field(default_factory=list)
    fusion_decisions: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed_pairs_considered": [
                {"pair": list(p), "score": s, "passes": ok} for p, s, ok in self.seed_pairs_considered
            ],
            "growth_steps": [
                {"set": list(s), "added": k, "correlation": r} for s, k, r in self.growth_steps
            ],
            "fusion_decisions": [
                {"set_a": list(a), "set_b": list(b), "merged": m} for a, b, m in self.fusion_decisions
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _pair_table(dataset: Dataset, candidates, alpha, tolerance, adjust):
    # scores always use the plain correlation; ``adjust`` only changes the test statistic
    cand = np.array(sorted(candidates), dtype=np.int64)
    r, _ = kernels.pair_scores(dataset.moments, cand, dataset.ix, dataset.iy, tolerance, False)
    r = np.asarray(r)
    if adjust:
        stat, _ = kernels.pair_scores(dataset.moments, cand, dataset.ix, dataset.iy, tolerance, True)
        ok = accepts_zero(np.asarray(stat), dataset.n, alpha)
    else:
        ok = accepts_zero(r, dataset.n, alpha)
    return cand, r, ok


def seed_pair(dataset: Dataset, candidates, alpha: float = 0.05, tolerance: float = 1e-10,
              trace: Optional[DiscoveryTrace] = None, adjust: bool = True):
    """Best-scoring pair of candidates that passes the valid-set test, or None.

    The score of ``{i, j}`` is ``|corr(PR_j, G_i)| + |corr(PR_i, G_j)|`` where
    ``PR_k`` is the pseudo-residual built from the single instrument ``k``.
    Only pairs that pass the test compete; ties go to the lexicographically
    smallest pair. ``adjust`` selects the test statistic (see
    :func:`prebim.estimators.valid_set_test`); scores are plain correlations.
    """
    candidates = sorted(int(c) for c in candidates)
    if len(candidates) < 2:
        raise PrebimError("seed search needs at least two candidates")
    cand, r, ok = _pair_table(dataset, candidates, alpha, tolerance, adjust)
    best, best_score = None, np.inf
    k = cand.size
    for a in range(k):
        for b in range(a + 1, k):
            score = abs(r[a, b]) + abs(r[b, a])
            if not np.isfinite(score):
                continue
            passes = bool(ok[a, b] and ok[b, a])
            pair = (int(cand[a]), int(cand[b]))
            if trace is not None:
                trace.seed_pairs_considered.append((pair, float(score), passes))
            if passes and score < best_score:
                best, best_score = pair, score
    return best


def grow_valid_set(dataset: Dataset, seed, candidates, alpha: float = 0.05, max_size: int = 10,
                   tolerance: float = 1e-10, trace: Optional[DiscoveryTrace] = None,
                   adjust: bool = True) -> tuple:
    """Grow ``seed`` greedily while the enlarged set keeps passing the test.

    Each round drops every candidate whose addition fails the leave-one-out
    battery, then adds the survivor least correlated with the current
    pseudo-residual. Stops when nothing survives or the set reaches
    ``max_size``.
    """
    current = sorted(int(s) for s in seed)
    pool = sorted(int(c) for c in candidates if int(c) not in current)
    cov = dataset.moments
    while len(current) < max_size and pool:
        idx = np.array(current, dtype=np.int64)
        cand = np.array(pool, dtype=np.int64)
        r, status = kernels.extension_correlations(cov, idx, cand, dataset.ix, dataset.iy,
                                                   tolerance, adjust)
        passing = np.all(np.asarray(status) == kernels.OK, axis=1) & np.all(
            accepts_zero(r, dataset.n, alpha), axis=1
        )
        pool = cand[passing].tolist()
        if not pool:
            break
        rk, st = kernels.pr_correlations(cov, idx, cand[passing], dataset.ix, dataset.iy,
                                         tolerance, False)
        if st != kernels.OK:
            break
        pick = int(np.argmin(np.abs(rk)))
        added = pool.pop(pick)
        if trace is not None:
            trace.growth_steps.append((tuple(current), added, float(rk[pick])))
        current = sorted(current + [added])
    return tuple(current)


def _passes(dataset, subset, alpha, tolerance, adjust):
    try:
        return valid_set_test(dataset, subset, alpha, tolerance, adjust)
    except PrebimError:
        return False


def find_valid_iv_sets(dataset: Dataset, config: DiscoveryConfig = DiscoveryConfig(),
                       trace: Optional[DiscoveryTrace] = None) -> IVSetCollection:
    """Return up to two disjoint valid instrument sets.

    Pass a :class:`DiscoveryTrace` to have every scoring, growth and fusion
    decision appended to it.
    """
    alpha, tol, adjust = config.alpha, config.tolerance, config.adjusted_test
    width = config.resolve_max_set_size(dataset.g)
    pool = set(range(dataset.g))
    kept = []
    while len(kept) < 2 and len(pool) >= 2:
        seed = seed_pair(dataset, pool, alpha, tol, trace, adjust)
        if seed is None:
            break
        grown = grow_valid_set(dataset, seed, pool - set(seed), alpha, width, tol, trace, adjust)
        pool -= set(grown)
        if not kept:
            kept.append(grown)
            continue
        fused = tuple(sorted(kept[0] + grown))
        same_direction = _passes(dataset, fused, alpha, tol, adjust)
        merged = same_direction and config.merge_same_direction and len(fused) <= width
        if trace is not None:
            trace.fusion_decisions.append((kept[0], grown, merged))
        if merged:
            kept[0] = fused
        elif not same_direction:
            kept.append(grown)
    return IVSetCollection(tuple(kept))

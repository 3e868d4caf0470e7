"""Pure-python scorer for permutation-to-DAG projection.

Same interface as the compiled extension `_grasp_core`; this one is the
fallback selected at import when the extension is unavailable.  Parent sets
are bitmasks, which keeps the per-(variable, prefix) grow-shrink results and
the per-(variable, parents) local scores memoizable in plain dicts.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


class ProjectionScorer:
    """Gaussian-BIC scorer over a fixed covariance matrix.

    local score of v given parents P:
        -(n/2) * ln(sigma^2_{v|P}) - (c/2) * |P| * ln(n)
    with sigma^2 the least-squares residual variance computed from the
    covariance (ridge-regularized), to be maximized.
    """

    def __init__(self, cov: np.ndarray, n: int, penalty_c: float = 2.0, ridge: float = 1e-8):
        cov = np.ascontiguousarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("cov must be square")
        if cov.shape[0] > 63:
            raise ValueError("at most 63 variables supported (bitmask parent sets)")
        self.cov = cov
        self.p = cov.shape[0]
        self.n = int(n)
        self.penalty_c = float(penalty_c)
        self.ridge = float(ridge)
        self._score_cache: dict[tuple[int, int], float] = {}
        self._gs_cache: dict[tuple[int, int], tuple[int, float]] = {}

    def _residual_var(self, v: int, parents: list[int]) -> float:
        if not parents:
            return max(float(self.cov[v, v]), 1e-12)
        sub = self.cov[np.ix_(parents, parents)] + self.ridge * np.eye(len(parents))
        cvp = self.cov[parents, v]
        try:
            sol = np.linalg.solve(sub, cvp)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(sub, cvp, rcond=None)[0]
        var = float(self.cov[v, v] - cvp @ sol)
        return max(var, 1e-12)

    def local_score(self, v: int, parents_mask: int) -> float:
        key = (v, parents_mask)
        hit = self._score_cache.get(key)
        if hit is not None:
            return hit
        parents = _mask_to_list(parents_mask)
        var = self._residual_var(v, parents)
        score = -0.5 * self.n * math.log(var) - 0.5 * self.penalty_c * len(parents) * math.log(
            self.n
        )
        self._score_cache[key] = score
        return score

    def grow_shrink(self, v: int, prefix_mask: int) -> tuple[int, float]:
        """Parents of v within the prefix set: grow to a fixed point, then shrink.

        Grow adds the single candidate with the largest strictly positive
        gain each round; shrink removes likewise.  Ties break toward the
        lowest variable index (first seen wins).
        """
        key = (v, prefix_mask)
        hit = self._gs_cache.get(key)
        if hit is not None:
            return hit
        tol = 1e-10
        mask = 0
        score = self.local_score(v, 0)
        while True:
            best_gain, best_u = tol, -1
            rem = prefix_mask & ~mask
            while rem:
                u = (rem & -rem).bit_length() - 1
                rem &= rem - 1
                gain = self.local_score(v, mask | (1 << u)) - score
                if gain > best_gain:
                    best_gain, best_u = gain, u
            if best_u < 0:
                break
            mask |= 1 << best_u
            score += best_gain
        while True:
            best_gain, best_u = tol, -1
            rem = mask
            while rem:
                u = (rem & -rem).bit_length() - 1
                rem &= rem - 1
                gain = self.local_score(v, mask & ~(1 << u)) - score
                if gain > best_gain:
                    best_gain, best_u = gain, u
            if best_u < 0:
                break
            mask &= ~(1 << best_u)
            score += best_gain
        out = (mask, score)
        self._gs_cache[key] = out
        return out

    def project(self, perm) -> tuple[list[int], float]:
        """Project a permutation to a DAG: returns per-variable parent masks
        (indexed by variable, not position) and the total score."""
        parents = [0] * self.p
        total = 0.0
        prefix = 0
        for v in perm:
            mask, score = self.grow_shrink(int(v), prefix)
            parents[int(v)] = mask
            total += score
            prefix |= 1 << int(v)
        return parents, total


def _mask_to_list(mask: int) -> list[int]:
    out = []
    while mask:
        out.append((mask & -mask).bit_length() - 1)
        mask &= mask - 1
    return out

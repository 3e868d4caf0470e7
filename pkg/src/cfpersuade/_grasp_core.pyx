# cython: language_level=3
"""Compiled scorer for permutation-to-DAG projection.

Mirrors `_grasp_fallback.ProjectionScorer`; the residual-variance solve runs
as a C-level Cholesky on covariance submatrices instead of per-call numpy,
which is where a permutation search spends nearly all its time.
"""

from libc.math cimport log, sqrt
from libc.stdlib cimport free, malloc

import numpy as np

BACKEND = "compiled"


cdef class ProjectionScorer:
    cdef double[:, ::1] cov
    cdef int p
    cdef int n
    cdef double penalty_c
    cdef double ridge
    cdef double log_n
    cdef double* chol
    cdef double* rhs
    cdef int* idx
    cdef list _score_cache   # per-variable dict: parents mask -> score
    cdef list _gs_cache      # per-variable dict: prefix mask -> (parents, score)

    def __cinit__(self, cov, n, penalty_c=2.0, ridge=1e-8):
        arr = np.ascontiguousarray(cov, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("cov must be square")
        if arr.shape[0] > 63:
            raise ValueError("at most 63 variables supported (bitmask parent sets)")
        self.cov = arr
        self.p = arr.shape[0]
        self.n = int(n)
        self.penalty_c = float(penalty_c)
        self.ridge = float(ridge)
        self.log_n = log(float(self.n))
        self.chol = <double*> malloc(self.p * self.p * sizeof(double))
        self.rhs = <double*> malloc(self.p * sizeof(double))
        self.idx = <int*> malloc(self.p * sizeof(int))
        if self.chol == NULL or self.rhs == NULL or self.idx == NULL:
            raise MemoryError()
        self._score_cache = [dict() for _ in range(self.p)]
        self._gs_cache = [dict() for _ in range(self.p)]

    def __dealloc__(self):
        if self.chol != NULL:
            free(self.chol)
        if self.rhs != NULL:
            free(self.rhs)
        if self.idx != NULL:
            free(self.idx)

    cdef double _residual_var(self, int v, unsigned long long mask):
        cdef int k = 0
        cdef int i, j, r
        cdef double acc, pivot, var
        cdef unsigned long long rem = mask
        while rem:
            i = _ctz(rem)
            self.idx[k] = i
            k += 1
            rem &= rem - 1
        if k == 0:
            var = self.cov[v, v]
            return var if var > 1e-12 else 1e-12
        # lower-triangular Cholesky of cov[idx, idx] + ridge*I, in place
        for i in range(k):
            for j in range(i + 1):
                acc = self.cov[self.idx[i], self.idx[j]]
                if i == j:
                    acc += self.ridge
                for r in range(j):
                    acc -= self.chol[i * k + r] * self.chol[j * k + r]
                if i == j:
                    if acc < 1e-300:
                        acc = 1e-300
                    self.chol[i * k + i] = sqrt(acc)
                else:
                    self.chol[i * k + j] = acc / self.chol[j * k + j]
        # solve L y = cov[idx, v]; residual var = cov[v,v] - ||y||^2
        var = self.cov[v, v]
        for i in range(k):
            acc = self.cov[self.idx[i], v]
            for r in range(i):
                acc -= self.chol[i * k + r] * self.rhs[r]
            acc /= self.chol[i * k + i]
            self.rhs[i] = acc
            var -= acc * acc
        return var if var > 1e-12 else 1e-12

    cdef double _score(self, int v, unsigned long long mask):
        cdef dict cache = <dict> self._score_cache[v]
        val = cache.get(mask)
        if val is not None:
            return <double> val
        cdef double var = self._residual_var(v, mask)
        cdef double score = -0.5 * self.n * log(var) \
            - 0.5 * self.penalty_c * _popcount(mask) * self.log_n
        cache[mask] = score
        return score

    def local_score(self, int v, parents_mask) -> float:
        return self._score(v, <unsigned long long> parents_mask)

    def grow_shrink(self, int v, prefix_mask):
        """Parents of v within the prefix set: grow to a fixed point, then
        shrink.  Ties break toward the lowest variable index."""
        cdef unsigned long long prefix = <unsigned long long> prefix_mask
        cdef dict cache = <dict> self._gs_cache[v]
        hit = cache.get(prefix)
        if hit is not None:
            return hit
        cdef double tol = 1e-10
        cdef unsigned long long mask = 0, rem, bit
        cdef double score = self._score(v, 0)
        cdef double best_gain, gain
        cdef unsigned long long best_bit
        while True:
            best_gain = tol
            best_bit = 0
            rem = prefix & ~mask
            while rem:
                bit = rem & (~rem + 1)
                rem &= rem - 1
                gain = self._score(v, mask | bit) - score
                if gain > best_gain:
                    best_gain = gain
                    best_bit = bit
            if best_bit == 0:
                break
            mask |= best_bit
            score += best_gain
        while True:
            best_gain = tol
            best_bit = 0
            rem = mask
            while rem:
                bit = rem & (~rem + 1)
                rem &= rem - 1
                gain = self._score(v, mask & ~bit) - score
                if gain > best_gain:
                    best_gain = gain
                    best_bit = bit
            if best_bit == 0:
                break
            mask &= ~best_bit
            score += best_gain
        out = (int(mask), float(score))
        cache[prefix] = out
        return out

    def project(self, perm):
        """Project a permutation to a DAG: per-variable parent masks (indexed
        by variable) plus the total score."""
        cdef list parents = [0] * self.p
        cdef double total = 0.0
        cdef unsigned long long prefix = 0
        cdef int v
        for v_obj in perm:
            v = <int> v_obj
            mask, score = self.grow_shrink(v, prefix)
            parents[v] = mask
            total += <double> score
            prefix |= (<unsigned long long> 1) << v
        return parents, float(total)


cdef inline int _ctz(unsigned long long x):
    cdef int c = 0
    while not (x & 1):
        x >>= 1
        c += 1
    return c


cdef inline int _popcount(unsigned long long x):
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c

"""Approximation by conditional expectations.

* :func:`refine_scheme` -- nested partitions ``pi_n`` (truncate, then slice the range)
  with ``E[X | pi_n] -> X``;
* :func:`equidistributed_average` -- rearrangements of ``X`` whose average is exactly
  ``E[X | pi]``;
* :func:`localization_limit` -- ``rho(E[X | pi_n])`` along a scheme;
* :func:`cesaro_means` -- running arithmetic means of a sequence.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from .errors import InvalidArgument, NonConvergence, PreconditionError
from .norms import LpNorm, RiNorm
from .probspace import Partition, RandomVariable, cond_expect, quantile_partition

DEFAULT_CAP = 10**6


# -- partition schemes ---------------------------------------------------------------

@dataclass
class SchemeStep:
    n: int
    m_n: float
    partition: Partition
    error: float          # ||E[X|pi_n] - X||
    tail_norm: float      # ||X 1{|X| > m_n}||
    exact: bool = False   # pi_n is the level-set partition of X, so E[X|pi_n] = X

    @property
    def blocks(self) -> int:
        return len(self.partition)


@dataclass
class PartitionScheme:
    X: RandomVariable
    norm: RiNorm
    steps: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.steps)

    def __len__(self):
        return len(self.steps)

    def __getitem__(self, i) -> SchemeStep:
        return self.steps[i]

    @property
    def errors(self) -> list:
        return [s.error for s in self.steps]

    @property
    def exhausted(self) -> bool:
        """True once the partition separates every value of X (exact recovery)."""
        return bool(self.steps) and self.steps[-1].exact

    def approximations(self):
        for s in self.steps:
            yield s, cond_expect(self.X, s.partition)


def truncation_level(X: RandomVariable, N: RiNorm, n: int):
    """Smallest ``m`` in ``{0} U {|x|}`` with ``||X 1{|X| > m}|| <= 1/n``."""
    absx = np.abs(X.values)
    target = Fraction(1, n) if X.exact else 1.0 / n
    cands = [0] + sorted(set(absx.tolist()))

    def tail_norm(m):
        return N.norm(X.where(absx > m))

    # the tail norm is nonincreasing in m and vanishes at the last candidate
    lo, hi = 0, len(cands) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if tail_norm(cands[mid]) <= target:
            hi = mid
        else:
            lo = mid + 1
    return cands[lo], tail_norm(cands[lo])


def refine_scheme(X: RandomVariable, N: RiNorm = None, steps: int = 32) -> PartitionScheme:
    """Nested partitions built from a truncation level and equal-width range cells.

    Step ``n`` picks the minimal truncation level ``m_n`` with tail norm ``<= 1/n``,
    slices both the truncated part ``X 1{|X| <= m_n}`` and the tail ``X 1{|X| > m_n}``
    into ``2^n`` cells, and intersects with the previous partition.  Blocks are unions
    of level sets of ``X``; generation stops early once ``E[X|pi_n] = X``.
    """
    if steps < 1:
        raise InvalidArgument("refine_scheme needs steps >= 1")
    N = N if N is not None else LpNorm(1)
    scheme = PartitionScheme(X, N)
    absx = np.abs(X.values)
    prev = Partition.trivial(X.space.n)
    levels = len(set(X.values.tolist()))
    for n in range(1, int(steps) + 1):
        m, tail = truncation_level(X, N, n)
        body = X.where(absx <= m)
        high = X.where(absx > m)
        k = 2**n
        pi = quantile_partition(body, k).refine(quantile_partition(high, k)).refine(prev)
        err = N.norm(cond_expect(X, pi) - X)
        exact = len(pi) == levels
        scheme.steps.append(SchemeStep(n, m, pi, err, tail, exact))
        prev = pi
        if exact:
            break
    return scheme


# -- localization ----------------------------------------------------------------------

@dataclass
class LocalizationResult:
    value: float
    trace: list
    converged: bool
    target: float = None

    def to_dict(self):
        return {"value": self.value, "converged": self.converged, "trace": self.trace}


def localization_limit(rho, X: RandomVariable, scheme: PartitionScheme = None,
                       tol: float = 1e-9, steps: int = 64) -> LocalizationResult:
    """Evaluate ``rho(E[X|pi_n])`` along a refinement scheme.

    Convergence is declared at the first step where consecutive values differ by less
    than ``tol`` *and* the scheme's approximation error is at most ``tol`` -- the second
    condition prevents stopping on a plateau of a coarse scheme.  Raises
    :class:`NonConvergence` (carrying the trace) when the scheme runs out first.
    """
    if "law_invariant" not in rho.flags:
        raise PreconditionError(f"{rho.name} is not flagged law_invariant")
    if scheme is None:
        scheme = refine_scheme(X, steps=steps)
    trace = []
    prev = None
    for step, approx_X in scheme.approximations():
        v = rho(approx_X)
        trace.append({"n": step.n, "m_n": step.m_n, "blocks": step.blocks,
                      "value": v, "norm_error": step.error})
        close = step.exact or (prev is not None and abs(float(v) - float(prev)) < tol)
        if close and step.error <= tol:
            return LocalizationResult(v, trace, True)
        prev = v
    raise NonConvergence(f"{rho.name}: localization did not converge in {len(trace)} steps",
                         trace)


# -- equidistributed rearrangements ----------------------------------------------------

class EquidistributedFamily(Sequence):
    """``X_1 .. X_N``: within-block cyclic shifts of ``X`` (or random shuffles past the cap).

    Members are produced lazily.  With cyclic shifts ``N`` is the lcm of the block sizes
    and the average is exactly ``E[X|pi]``; past the cap ``N = cap`` random within-block
    shuffles are used and ``epsilon`` reports the achieved sup-distance.
    """

    def __init__(self, X: RandomVariable, pi: Partition, cap: int = DEFAULT_CAP, seed: int = 0):
        if not X.space.is_uniform:
            raise PreconditionError("equidistributed_average needs a uniform space")
        if pi.n != X.space.n:
            raise InvalidArgument("partition does not match the space")
        self.X, self.pi = X, pi
        self._blocks = [np.asarray(b, dtype=np.intp) for b in pi.blocks]
        lcm = reduce(math.lcm, (len(b) for b in self._blocks), 1)
        self.lcm = lcm
        self.cyclic = lcm <= cap
        self.N = lcm if self.cyclic else int(cap)
        self.seed = seed
        self._epsilon = 0 if self.cyclic else None

    def __len__(self):
        return self.N

    def index_rows(self, start: int, stop: int) -> np.ndarray:
        """Atom-index permutations for members ``start..stop-1`` (shape ``[rows, n]``)."""
        J = np.arange(start, stop)[:, None]
        idx = np.empty((stop - start, self.X.space.n), dtype=np.intp)
        if self.cyclic:
            for b in self._blocks:
                idx[:, b] = b[(np.arange(b.size)[None, :] + J) % b.size]
        else:
            for j in range(start, stop):
                rng = np.random.default_rng([self.seed, j])
                for b in self._blocks:
                    idx[j - start, b] = rng.permutation(b)
        return idx

    def __getitem__(self, j):
        if isinstance(j, slice):
            return [self[i] for i in range(*j.indices(self.N))]
        if j < 0:
            j += self.N
        if not 0 <= j < self.N:
            raise IndexError(j)
        return self.X.permuted(self.index_rows(j, j + 1)[0])

    def mean(self, chunk: int = 4096) -> RandomVariable:
        """Average of all members, summed member by member (exact in rational mode)."""
        n = self.X.space.n
        if self.X.exact:
            vals = self.X.values.tolist()
            den = reduce(math.lcm, (v.denominator for v in vals), 1)
            ints = [int(v * den) for v in vals]
            big = max(abs(i) for i in ints) * self.N >= 2**62
            arr = np.array(ints, dtype=object if big else np.int64)
            total = np.zeros(n, dtype=arr.dtype)
            for s in range(0, self.N, chunk):
                total = total + arr[self.index_rows(s, min(s + chunk, self.N))].sum(axis=0)
            scale = den * self.N
            return RandomVariable(self.X.space, [Fraction(int(t), scale) for t in total])
        total = np.zeros(n)
        vals = np.asarray(self.X.values, dtype=float)
        for s in range(0, self.N, chunk):
            total += vals[self.index_rows(s, min(s + chunk, self.N))].sum(axis=0)
        return RandomVariable(self.X.space, total / self.N)

    @property
    def epsilon(self):
        """``||mean - E[X|pi]||_inf`` (0 for cyclic families)."""
        if self._epsilon is None:
            diff = self.mean() - cond_expect(self.X, self.pi)
            self._epsilon = float(diff.sup_norm())
        return self._epsilon

    def report(self) -> dict:
        return {"N": self.N, "lcm": self.lcm, "cyclic": self.cyclic, "epsilon": self.epsilon}


def equidistributed_average(X: RandomVariable, pi: Partition, cap: int = DEFAULT_CAP,
                            seed: int = 0) -> EquidistributedFamily:
    return EquidistributedFamily(X, pi, cap=cap, seed=seed)


# -- Cesaro means ----------------------------------------------------------------------

def cesaro_means(seq) -> list:
    """``k``-th output is ``(1/k) * (X_1 + ... + X_k)``."""
    seq = list(seq)
    if not seq:
        return []
    space = seq[0].space
    out = []
    total = None
    for k, Xk in enumerate(seq, start=1):
        if Xk.space != space:
            raise InvalidArgument("cesaro_means: sequence mixes probability spaces")
        total = Xk if total is None else total + Xk
        out.append(total / (Fraction(k) if total.exact else float(k)))
    return out

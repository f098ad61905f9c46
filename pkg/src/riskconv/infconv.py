"""Inf-convolution (optimal risk sharing) on finite spaces.

``(rho_1 [] ... [] rho_d)(X) = inf{sum_i rho_i(X_i) : sum_i X_i = X}``.

For convex, cash-additive, law-invariant measures the infimum is attained by a
comonotone split ``X_i = f_i(X)`` with nondecreasing 1-Lipschitz ``f_i`` summing to the
identity.  :func:`infconv_law_invariant` optimises over such allocations;
:func:`infconv_bruteforce` is a grid oracle; :func:`infconv_surplus` handles measures
induced by surplus-monotone budget acceptance sets.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    InstanceTooLarge,
    InvalidArgument,
    PreconditionError,
    UnboundedBelow,
    UnsupportedOperation,
)
from .measures import (
    AcceptanceSet,
    Budget,
    RiskMeasure,
    _as_numeraire,
    _budget_threshold,
    _weights_on,
)
from .probspace import FiniteSpace, RandomVariable, neg_part, pos_part, to_exact

REQUIRED = ("convex", "cash_additive", "law_invariant")


# -- allocations -------------------------------------------------------------------------

@dataclass(frozen=True)
class Allocation:
    """Piecewise-linear ``f_1..f_d`` given by their values at increasing knots.

    Knots are exact rationals covering the support of ``X`` and 0; ``values[i][j]`` is
    ``f_i(knots[j])``.  Between knots the functions are linear and beyond the extreme
    knots they continue with the end slopes.
    """

    knots: tuple
    values: tuple

    @property
    def d(self) -> int:
        return len(self.values)

    @property
    def zero_index(self) -> int:
        return self.knots.index(0)

    @classmethod
    def from_increments(cls, support, delta) -> Allocation:
        """Build from per-gap increments over the sorted support of ``X``.

        ``delta[k][i] >= 0`` is agent ``i``'s share of the gap between support points
        ``k`` and ``k+1``.  Rows are snapped to rationals and rescaled to sum to the gap
        exactly.  With ``r`` the point 0 clipped to the support range, ``f_i(r)`` is ``r``
        times agent ``i``'s slope on the nearest gap, so ``f_i(0) = 0``: a gap containing 0
        keeps one slope on both sides of it, and between 0 and the support the functions
        continue linearly.  (Cash additivity makes the objective blind to that segment.)
        """
        xs = sorted(to_exact(t) for t in support)
        K = len(xs) - 1
        delta = np.asarray(delta, dtype=object).reshape(K, -1) if K else np.asarray(delta)
        d = int(delta.shape[1]) if K else int(np.size(delta)) or 1
        rows = []
        for k in range(K):
            gap = xs[k + 1] - xs[k]
            raw = []
            for v in delta[k].tolist():
                fv = v if isinstance(v, Fraction) else Fraction(float(v)).limit_denominator(10**12)
                if fv < gap * Fraction(1, 10**13):
                    fv = Fraction(0)
                raw.append(fv)
            total = sum(raw)
            rows.append([gap / d] * d if total == 0 else [r * gap / total for r in raw])
        r = min(max(Fraction(0), xs[0]), xs[-1])
        # beyond the support the functions continue with the slopes of the nearest gap
        near = 0 if r == xs[0] else K - 1
        anchor = ([rows[near][i] / (xs[near + 1] - xs[near]) for i in range(d)] if K
                  else [Fraction(1, d)] * d)

        def clip(x, k):
            return min(max(x, xs[k]), xs[k + 1])

        vals = []
        for i in range(d):
            f = []
            for x in xs:
                acc = r * anchor[i]
                for k in range(K):
                    acc += rows[k][i] * (clip(x, k) - clip(r, k)) / (xs[k + 1] - xs[k])
                f.append(acc)
            vals.append(f)
        knots = list(xs)
        if 0 not in knots:
            j = sum(1 for x in xs if x < 0)
            knots.insert(j, Fraction(0))
            for f in vals:
                f.insert(j, Fraction(0))
        return cls(tuple(knots), tuple(tuple(f) for f in vals))

    @classmethod
    def proportional(cls, knots, weights) -> Allocation:
        knots = sorted(to_exact(t) for t in knots)
        w = [to_exact(x) for x in weights]
        tot = sum(w)
        return cls(tuple(knots), tuple(tuple(wi / tot * t for t in knots) for wi in w))

    def evaluate(self, i: int, x):
        """``f_i(x)`` with linear interpolation/extension."""
        ks, vs = self.knots, self.values[i]
        x = to_exact(x)
        if len(ks) == 1:
            return vs[0]
        j = 0
        while j < len(ks) - 2 and x > ks[j + 1]:
            j += 1
        slope = (vs[j + 1] - vs[j]) / (ks[j + 1] - ks[j])
        return vs[j] + slope * (x - ks[j])

    def pieces(self, X: RandomVariable) -> list:
        """``f_i(X)`` for every agent, in the arithmetic mode of ``X``."""
        index = {k: j for j, k in enumerate(self.knots)}
        out = []
        for i in range(self.d):
            vals = []
            for x in X.values.tolist():
                xe = to_exact(x)
                vals.append(self.values[i][index[xe]] if xe in index else self.evaluate(i, xe))
            out.append(RandomVariable(X.space, vals if X.exact else [float(v) for v in vals]))
        return out

    def slopes(self) -> list:
        ks = self.knots
        return [[(v[j + 1] - v[j]) / (ks[j + 1] - ks[j]) for j in range(len(ks) - 1)]
                for v in self.values]

    def check(self) -> list:
        """Names of violated invariants (empty when the allocation is valid)."""
        bad = []
        ks = self.knots
        if any(b <= a for a, b in zip(ks, ks[1:])):
            bad.append("knots")
        if 0 not in ks:
            bad.append("zero_normalization")
            return bad
        sl = self.slopes()
        if any(s < 0 for row in sl for s in row):
            bad.append("monotone")
        if any(s > 1 for row in sl for s in row):
            bad.append("lipschitz")
        if any(sum(v[j] for v in self.values) != ks[j] for j in range(len(ks))):
            bad.append("sum_identity")
        z = self.zero_index
        if any(v[z] != 0 for v in self.values):
            bad.append("zero_normalization")
        return bad

    def to_dict(self) -> dict:
        return {"knots": [float(k) for k in self.knots],
                "values": [[float(v) for v in row] for row in self.values],
                "slopes": [[float(s) for s in row] for row in self.slopes()]}


@dataclass
class InfConvResult:
    value: float
    allocation: Optional[Allocation]
    gap: float
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)
    pieces: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"value": float(self.value), "gap": float(self.gap), "iterations": self.iterations,
               "converged": self.converged, "diagnostics": self.diagnostics}
        if self.allocation is not None:
            out["allocation"] = self.allocation.to_dict()
        return out


@dataclass
class SolverOptions:
    iterations: int = 2000
    step: float = 0.5
    polish_sweeps: int = 200
    polish_tol: float = 1e-13
    fd_step: float = 1e-7


# -- law-invariant solver ----------------------------------------------------------------

def _project_rows(V: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Euclidean projection of every row of ``V`` onto ``{x >= 0, sum x = g_row}``."""
    K, d = V.shape
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - g[:, None]
    ind = np.arange(1, d + 1)
    cond = U - css / ind > 0
    r = d - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(K), r] / (r + 1)
    return np.maximum(V - theta[:, None], 0.0)


class _Problem:
    """Objective ``sum_i rho_i(A delta_i)`` over slope increments ``delta`` (K x d)."""

    def __init__(self, measures, X: RandomVariable, opts: SolverOptions):
        self.measures = measures
        self.opts = opts
        self.space = X.space if not X.exact else X.space.to_float()
        xs = np.asarray(X.values, dtype=float)
        exact_vals = [to_exact(v) for v in X.values.tolist()]
        support = sorted(set(exact_vals))
        self.support = support
        sf = np.array([float(v) for v in support])
        self.gaps = np.diff(sf)
        K = len(support) - 1
        r = min(max(0.0, sf[0]), sf[-1])
        # piece_i(x) = r/d + sum_k delta[k, i] * (clip(x, gap k) - clip(r, gap k)) / gap_k
        lo, hi = sf[:-1], sf[1:]
        phi = (np.clip(xs[:, None], lo, hi) - np.clip(r, lo, hi)) / self.gaps
        self.A = phi.reshape(len(xs), K)
        self.base = r / len(measures)
        self.xs = xs
        self.evals = 0

    def pieces(self, delta):
        return self.base + self.A @ delta  # n x d

    def value(self, delta) -> float:
        Y = self.pieces(delta)
        self.evals += 1
        return float(sum(float(r.evaluate_batch(Y[:, i], self.space))
                         for i, r in enumerate(self.measures)))

    def _grad_one(self, r: RiskMeasure, y: np.ndarray) -> np.ndarray:
        if r.subgradient is not None:
            return np.asarray(r.subgradient(RandomVariable(self.space, y)), dtype=float)
        h = self.opts.fd_step * max(1.0, float(np.abs(y).max()))
        n = y.size
        E = np.eye(n) * h
        up = r.evaluate_batch(y[None, :] + E, self.space)
        dn = r.evaluate_batch(y[None, :] - E, self.space)
        return (up - dn) / (2 * h)

    def grad(self, delta) -> np.ndarray:
        Y = self.pieces(delta)
        G = np.empty_like(delta)
        for i, r in enumerate(self.measures):
            G[:, i] = self.A.T @ self._grad_one(r, Y[:, i])
        return G


def _check_measures(measures):
    for r in measures:
        missing = [f for f in REQUIRED if f not in r.flags]
        if missing:
            raise PreconditionError(f"{r.name} is not flagged {', '.join(missing)}")


def infconv_law_invariant(measures, X: RandomVariable, opts: SolverOptions = None) -> InfConvResult:
    """Minimise ``sum_i rho_i(f_i(X))`` over comonotone allocations.

    Projected subgradient descent (step ``c/sqrt(t)`` on normalised subgradients) over
    per-gap increments on a product of scaled simplices, warm-started at the
    proportional split, followed by a coordinate-wise exact line search along pairwise
    transfers within each gap.
    """
    measures = list(measures)
    if not measures:
        raise InvalidArgument("need at least one measure")
    _check_measures(measures)
    opts = opts or SolverOptions()
    d = len(measures)
    support = sorted(set(X.values.tolist()))

    if len(support) == 1:
        c = support[0]
        zero = RandomVariable.constant(X.space, 0)
        value = -c + sum(r(zero) for r in measures)
        alloc = Allocation.proportional([0, c] if c != 0 else [0], [1] * d)
        res = InfConvResult(float(value), alloc, 0.0, 0, True,
                            {"method": "constant", "exact_value": str(value)})
        res.pieces = alloc.pieces(X)
        res.gap = abs(float(value) - float(sum(r(P) for r, P in zip(measures, res.pieces))))
        return res

    prob = _Problem(measures, X, opts)
    K = len(prob.gaps)
    delta = np.tile(prob.gaps[:, None] / d, (1, d))
    best, best_val = delta.copy(), prob.value(delta)
    trace = [best_val]
    scale = float(prob.gaps.max())
    if d > 1:
        for t in range(1, opts.iterations + 1):
            G = prob.grad(delta)
            # only the component inside the simplices matters
            G = G - G.mean(axis=1, keepdims=True)
            gn = float(np.abs(G).max())
            if gn < 1e-15:
                break
            delta = _project_rows(delta - (opts.step * scale / math.sqrt(t) / gn) * G, prob.gaps)
            v = prob.value(delta)
            if v < best_val:
                best, best_val = delta.copy(), v
            if t % 100 == 0:
                trace.append(best_val)
    sub_val = best_val
    delta, val, sweeps, converged = _polish(prob, best, best_val, opts)
    alloc = Allocation.from_increments(prob.support, delta)
    pieces = alloc.pieces(X)
    recomputed = sum(r(P) for r, P in zip(measures, pieces))
    res = InfConvResult(
        value=float(val), allocation=alloc, gap=abs(float(val) - float(recomputed)),
        iterations=opts.iterations, converged=converged,
        diagnostics={"method": "projected_subgradient+polish", "subgradient_value": sub_val,
                     "polish_sweeps": sweeps, "evaluations": prob.evals,
                     "recomputed": float(recomputed), "support": K + 1, "trace": trace},
        pieces=pieces)
    return res


def _polish(prob: _Problem, delta, val, opts: SolverOptions):
    """Coordinate-wise exact line search: move mass between two agents within one gap."""
    delta = delta.copy()
    K, d = delta.shape
    if d == 1:
        return delta, val, 0, True
    pairs = list(itertools.combinations(range(d), 2))
    for sweep in range(1, opts.polish_sweeps + 1):
        start = val
        for k in range(K):
            for i, j in pairs:
                lo, hi = -delta[k, j], delta[k, i]   # s moves from agent i to agent j
                if hi - lo <= 0:
                    continue

                def f(s, k=k, i=i, j=j):
                    trial = delta.copy()
                    trial[k, i] -= s
                    trial[k, j] += s
                    return prob.value(trial)

                cands = [(f(lo), lo), (f(hi), hi)]
                res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                      options={"xatol": 1e-12 * max(1.0, prob.gaps[k])})
                cands.append((float(res.fun), float(res.x)))
                fv, s = min(cands)
                if fv < val:
                    delta[k, i] -= s
                    delta[k, j] += s
                    # keep the row exactly on its simplex
                    delta[k] = np.maximum(delta[k], 0.0)
                    delta[k] *= prob.gaps[k] / delta[k].sum()
                    val = prob.value(delta)
        if start - val <= opts.polish_tol * max(1.0, abs(val)):
            return delta, val, sweep, True
    return delta, val, opts.polish_sweeps, False


# -- brute-force oracle ---------------------------------------------------------------------

MAX_ATOMS = 6
MAX_GRID = 41
MAX_CELLS = 25_000_000


@dataclass
class OracleResult:
    value: float
    Y: np.ndarray
    resolution: float
    cells: int


def grid_resolution(X: RandomVariable, grid: int = MAX_GRID) -> float:
    xs = np.asarray(X.values, dtype=float)
    rng = max(float(xs.max() - xs.min()), 1.0)
    return 3.0 * rng / (grid - 1)


def infconv_bruteforce(rho1: RiskMeasure, rho2: RiskMeasure, X: RandomVariable,
                       grid: int = MAX_GRID, chunk: int = 200_000) -> OracleResult:
    """Minimise ``rho1(Y) + rho2(X - Y)`` over a per-atom grid.

    The grid spans ``[min X - r, max X + r]`` with ``r = max(range X, 1)``.  Refused
    (``InstanceTooLarge``) beyond 6 atoms, 41 points per atom or 2.5e7 grid cells.
    """
    n = X.space.n
    if n > MAX_ATOMS or grid > MAX_GRID or grid < 2 or grid**n > MAX_CELLS:
        raise InstanceTooLarge(f"brute force refused: {n} atoms x {grid} points")
    space = X.space.to_float()
    xs = np.asarray(X.values, dtype=float)
    r = max(float(xs.max() - xs.min()), 1.0)
    pts = np.linspace(xs.min() - r, xs.max() + r, grid)
    total = grid**n
    best_val, best_idx = math.inf, 0
    radix = grid ** np.arange(n - 1, -1, -1)
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total))
        digits = (ids[:, None] // radix[None, :]) % grid
        Y = pts[digits]
        v = rho1.evaluate_batch(Y, space) + rho2.evaluate_batch(xs[None, :] - Y, space)
        j = int(np.argmin(v))
        if v[j] < best_val:
            best_val, best_idx = float(v[j]), int(ids[j])
    digits = (best_idx // radix) % grid
    return OracleResult(best_val, pts[digits], 3.0 * r / (grid - 1), total)


# -- certificates ------------------------------------------------------------------------------

@dataclass
class Certificate:
    passed: bool
    violations: list
    recomputed: float
    value: float

    def to_dict(self):
        return {"passed": self.passed, "violations": self.violations,
                "recomputed": float(self.recomputed), "value": float(self.value)}


def certify_exactness(result: InfConvResult, measures, X: RandomVariable,
                      tol: float = 1e-8) -> Certificate:
    """Recompute ``sum_i rho_i(f_i(X))`` from the witness and validate the allocation.

    Structural checks (monotone, 1-Lipschitz, sum-to-identity, ``f_i(0) = 0``) are exact
    rational comparisons; the value check uses ``tol``.
    """
    if result.allocation is None:
        raise InvalidArgument("result carries no allocation")
    alloc = result.allocation
    measures = list(measures)
    bad = alloc.check()
    if alloc.d != len(measures):
        bad.append("agent_count")
        return Certificate(False, bad, math.nan, result.value)
    missing = [x for x in set(to_exact(v) for v in X.values.tolist()) if x not in alloc.knots]
    if missing:
        bad.append("support_coverage")
    recomputed = sum(r(P) for r, P in zip(measures, alloc.pieces(X)))
    if abs(float(recomputed) - float(result.value)) > tol:
        bad.append("value")
    return Certificate(not bad, bad, float(recomputed), float(result.value))


# -- surplus-invariant case ---------------------------------------------------------------------

def _single_budget(A: AcceptanceSet) -> Budget:
    if A.tag != "surplus_monotone":
        raise UnsupportedOperation(f"{A.name} is not surplus-monotone")
    if not isinstance(A.D, Budget):
        raise UnsupportedOperation(f"{A.name}: only single-budget sets are supported")
    return A.D


@dataclass(frozen=True)
class BudgetSum:
    """``D1 + D2`` for two budgets.

    Membership uses the greedy split; :meth:`budgets_on` gives the same set as an
    intersection of budgets ``E[min(w2, lam w1) Z] <= c2 + lam c1`` over the
    breakpoints ``lam in {0} U {w2/w1}`` (linear-programming duality).
    """

    D1: Budget
    D2: Budget

    def split(self, Z: RandomVariable):
        return greedy_split(Z, self.D1, self.D2)

    def contains(self, Z: RandomVariable, tol=0.0) -> bool:
        if Z.min() < 0:
            return False
        return self.split(Z)[0]

    __contains__ = contains

    def budgets_on(self, space: FiniteSpace) -> list:
        w1 = _weights_on(self.D1.w, space)
        w2 = _weights_on(self.D2.w, space)
        conv = to_exact if space.exact else float
        c1, c2 = conv(self.D1.c), conv(self.D2.c)
        lams = {conv(0)} | {b / a for a, b in zip(w1, w2) if a > 0}
        return [Budget([min(b, lam * a) for a, b in zip(w1, w2)], c2 + lam * c1)
                for lam in sorted(lams)]


def greedy_split(Z: RandomVariable, D1: Budget, D2: Budget):
    """Decide ``Z in D1 + D2`` and return ``(feasible, Y, W)`` with ``Z = Y + W``.

    ``Y`` takes as much of the ``D2``-load as ``D1``'s capacity allows: atoms are filled in
    decreasing order of ``w2/w1`` (atoms with ``w1 = 0`` first, free of charge), equal
    ratios being filled proportionally.  This maximises ``E[w2 Y]`` subject to
    ``E[w1 Y] <= c1, 0 <= Y <= Z`` (fractional knapsack), so ``Z`` is feasible iff the
    remainder ``W = Z - Y`` fits into ``D2``.
    """
    space = Z.space
    exact = space.exact
    conv = to_exact if exact else float
    w1 = _weights_on(D1.w, space)
    w2 = _weights_on(D2.w, space)
    z = [conv(v) for v in Z.values.tolist()]
    p = space.probs.tolist()
    cap = conv(D1.c)
    zero = conv(0)
    y = [zero] * len(z)
    free = [j for j in range(len(z)) if w1[j] == 0]
    for j in free:
        y[j] = z[j]
    rest = [j for j in range(len(z)) if w1[j] > 0 and z[j] > 0]
    groups: dict = {}
    for j in rest:
        groups.setdefault(w2[j] / w1[j], []).append(j)
    for ratio in sorted(groups, reverse=True):
        if ratio == 0:
            break  # moving zero-ratio mass gains nothing
        idx = groups[ratio]
        need = sum(p[j] * w1[j] * z[j] for j in idx)
        if need <= cap:
            for j in idx:
                y[j] = z[j]
            cap -= need
        else:
            frac = cap / need
            for j in idx:
                y[j] = z[j] * frac
            cap = zero
            break
    Y = RandomVariable(space, y)
    W = RandomVariable(space, [a - b for a, b in zip(z, y)])
    load2 = sum(pi * wi * v for pi, wi, v in zip(p, w2, W.values.tolist()))
    slack = 0 if exact else 1e-12 * (1 + abs(conv(D2.c)))
    return load2 <= conv(D2.c) + slack, Y, W


def sum_acceptance(A1: AcceptanceSet, A2: AcceptanceSet) -> AcceptanceSet:
    """``A1 + A2`` for surplus-monotone budget sets: the set with ``D = D1 + D2``."""
    D = BudgetSum(_single_budget(A1), _single_budget(A2))
    return AcceptanceSet(lambda X: D.contains(neg_part(X)), "surplus_monotone", D,
                         f"({A1.name})+({A2.name})")


def infconv_surplus(A1: AcceptanceSet, A2: AcceptanceSet, X: RandomVariable, S=None,
                    tol: float = 1e-12) -> InfConvResult:
    """``inf{m : (X + mS)^- in D1 + D2}`` with the splitting witness.

    The threshold is solved exactly as the largest of the budget thresholds of the dual
    description of ``D1 + D2``; a bisection on the greedy membership test confirms the
    bracket.  The witness decomposes ``X = X1 + X2`` with
    ``X1 = (X + mS)^+ - Y - mS`` (``X1 + mS`` has loss ``Y in D1``) and ``X2 = -W``
    (loss ``W in D2``).
    """
    D = BudgetSum(_single_budget(A1), _single_budget(A2))
    S = _as_numeraire(S, X.space)
    value = max(_budget_threshold(X, S, b) for b in D.budgets_on(X.space))
    if value == -math.inf:
        raise UnboundedBelow("summed acceptance set admits every cash shift")
    # confirm with the primal (greedy) membership test on both sides of the threshold
    Z = neg_part(X + S * value)
    ok, Y, W = D.split(Z)
    eps = Fraction(1, 10**9) if X.exact else 1e-9 * max(1.0, abs(float(value)))
    below = D.contains(neg_part(X + S * (value - eps)))
    m_bisect = _bisect_threshold(lambda m: D.contains(neg_part(X.to_float() + S.to_float() * m)),
                                 float(value), tol)
    X1 = pos_part(X + S * value) - Y - S * value
    X2 = -W
    return InfConvResult(
        value=value, allocation=None, gap=abs(float(value) - m_bisect), iterations=0,
        converged=bool(ok and not below),
        diagnostics={"method": "dual-budget threshold", "member_at_value": bool(ok),
                     "member_below_value": bool(below), "bisection_value": m_bisect,
                     "split_Y": [float(v) for v in Y.values.tolist()],
                     "split_W": [float(v) for v in W.values.tolist()]},
        pieces=[X1, X2])


def _bisect_threshold(member, guess: float, tol: float) -> float:
    width = max(1.0, abs(guess))
    lo, hi = guess - width, guess + width
    for _ in range(60):
        if member(hi):
            break
        hi += 2 * (hi - lo)
    for _ in range(60):
        if not member(lo):
            break
        lo -= 2 * (hi - lo)
    else:
        raise UnboundedBelow("summed acceptance set accepts every cash shift")
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if member(mid):
            hi = mid
        else:
            lo = mid
    return hi

"""Risk functionals with declared structural flags, and acceptance-set induced measures.

Sign convention: ``rho(X + m) = rho(X) - m`` throughout, so the negative expectation
``E[-X]`` is the cash-additive linear measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ContractViolation, InvalidArgument, UnboundedBelow
from .probspace import (
    FiniteSpace,
    RandomVariable,
    _check_level,
    distribution,
    neg_part,
    quantile,
    to_exact,
    uniform_space,
)

FLAGS = frozenset({
    "convex", "monotone", "cash_additive", "law_invariant",
    "surplus_invariant", "surplus_invariant_positive", "s_additive",
})
STANDARD = frozenset({"convex", "monotone", "cash_additive", "law_invariant"})


# -- concrete functionals ------------------------------------------------------------

def var_alpha(X: RandomVariable, alpha):
    """``inf{m : P(X + m < 0) <= alpha}`` = ``-q_X(alpha)`` (left quantile)."""
    return -quantile(X, alpha)


def _es_weights_sorted(F_prev, F, alpha):
    hi = np.minimum(F, alpha)
    return np.clip(hi - F_prev, 0.0, None)


def es_alpha(X: RandomVariable, alpha):
    """``(1/alpha) * integral_0^alpha VaR_b(X) db``, integrated exactly over the quantile steps."""
    a = _check_level(alpha, X.exact, upper_closed=True)
    if X.exact:
        dist = distribution(X)
        total = Fraction(0)
        cum = Fraction(0)
        for v, p in zip(dist.values.tolist(), dist.probs.tolist()):
            lo, cum = cum, cum + p
            if lo >= a:
                break
            total += v * (min(cum, a) - lo)
        return -total / a
    return float(es_batch(X.values, X.space.probs, a))


def es_batch(values, probs, alpha) -> np.ndarray:
    """ES for every row of ``values`` (shape ``[..., n]``) on one space."""
    vals = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    order = np.argsort(vals, axis=-1, kind="stable")
    xs = np.take_along_axis(vals, order, axis=-1)
    ps = p[order]
    F = np.cumsum(ps, axis=-1)
    w = _es_weights_sorted(F - ps, F, alpha)
    return -(xs * w).sum(axis=-1) / alpha


def es_subgradient(X: RandomVariable, alpha) -> np.ndarray:
    """A subgradient of ``ES_alpha`` at ``X`` w.r.t. the atom values."""
    vals = np.asarray(X.values, dtype=float)
    p = np.asarray(X.space.probs, dtype=float)
    order = np.argsort(vals, kind="stable")
    ps = p[order]
    F = np.cumsum(ps)
    w = _es_weights_sorted(F - ps, F, float(alpha))
    g = np.empty_like(vals)
    g[order] = -w / float(alpha)
    return g


def neg_expectation(X: RandomVariable):
    """``E[-X]``."""
    return -X.mean()


def entropic(X: RandomVariable, gamma) -> float:
    """``gamma * log E[exp(-X / gamma)]``, evaluated with log-sum-exp."""
    g = float(gamma)
    if not g > 0:
        raise InvalidArgument(f"entropic needs gamma > 0, got {gamma!r}")
    return float(entropic_batch(X.values, X.space.probs, g))


def entropic_batch(values, probs, gamma) -> np.ndarray:
    vals = np.asarray(values, dtype=float)
    return gamma * logsumexp(-vals / gamma, axis=-1, b=np.asarray(probs, dtype=float))


def _entropic_subgradient(X: RandomVariable, gamma) -> np.ndarray:
    vals = np.asarray(X.values, dtype=float)
    p = np.asarray(X.space.probs, dtype=float)
    return -softmax(-vals / float(gamma) + np.log(p))


# -- the RiskMeasure container -------------------------------------------------------

@dataclass(frozen=True)
class RiskMeasure:
    """An evaluable functional together with the structural properties it claims."""

    func: Callable
    name: str
    flags: frozenset = frozenset()
    numeraire: Optional[RandomVariable] = None
    params: dict = field(default_factory=dict)
    batch: Optional[Callable] = None
    subgradient: Optional[Callable] = None

    def __post_init__(self):
        flags = frozenset(self.flags)
        unknown = flags - FLAGS
        if unknown:
            raise InvalidArgument(f"unknown flags {sorted(unknown)}")
        object.__setattr__(self, "flags", flags)

    def __call__(self, X: RandomVariable):
        v = self.func(X)
        if v == -math.inf:
            raise UnboundedBelow(f"{self.name} evaluated to -inf")
        return v

    def evaluate_batch(self, values, space: FiniteSpace) -> np.ndarray:
        """Values of rho on every row of ``values`` (float)."""
        values = np.asarray(values, dtype=float)
        if self.batch is not None:
            return np.asarray(self.batch(values, space.probs), dtype=float)
        flat = values.reshape(-1, values.shape[-1])
        out = np.array([float(self(RandomVariable(space, row))) for row in flat])
        return out.reshape(values.shape[:-1])

    def has(self, *flags) -> bool:
        return all(f in self.flags for f in flags)

    def __repr__(self):
        return f"RiskMeasure({self.name})"

    # convenient constructors
    @classmethod
    def es(cls, alpha) -> RiskMeasure:
        a = _check_level(alpha, False, upper_closed=True)
        return cls(lambda X: es_alpha(X, alpha), f"ES[{alpha}]", STANDARD,
                   params={"kind": "es", "alpha": alpha},
                   batch=lambda v, p: es_batch(v, p, a),
                   subgradient=lambda X: es_subgradient(X, a))

    @classmethod
    def var(cls, alpha) -> RiskMeasure:
        _check_level(alpha, False)
        return cls(lambda X: var_alpha(X, alpha), f"VaR[{alpha}]",
                   {"monotone", "cash_additive", "law_invariant"},
                   params={"kind": "var", "alpha": alpha})

    @classmethod
    def entropic(cls, gamma) -> RiskMeasure:
        g = float(gamma)
        if not g > 0:
            raise InvalidArgument(f"entropic needs gamma > 0, got {gamma!r}")
        return cls(lambda X: entropic(X, g), f"entropic[{gamma}]", STANDARD,
                   params={"kind": "entropic", "gamma": g},
                   batch=lambda v, p: entropic_batch(v, p, g),
                   subgradient=lambda X: _entropic_subgradient(X, g))

    @classmethod
    def neg_expectation(cls) -> RiskMeasure:
        return cls(neg_expectation, "neg_expectation", STANDARD,
                   params={"kind": "neg_expectation"},
                   batch=lambda v, p: -(np.asarray(v, dtype=float) @ np.asarray(p, dtype=float)),
                   subgradient=lambda X: -np.asarray(X.space.probs, dtype=float))


def parse_measure(text: str, alpha=None, gamma=None) -> RiskMeasure:
    """``es:0.5``, ``var:0.2``, ``entropic:1``, ``neg_expectation``.

    A bare ``es``/``var``/``entropic`` takes its parameter from ``alpha``/``gamma``.
    """
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    try:
        if name in {"es", "cvar", "es_alpha"}:
            a = arg or alpha
            if a is None:
                raise InvalidArgument("es needs a level, e.g. es:0.5 or --alpha 0.5")
            return RiskMeasure.es(_level_value(a))
        if name in {"var", "var_alpha"}:
            a = arg or alpha
            if a is None:
                raise InvalidArgument("var needs a level, e.g. var:0.2 or --alpha 0.2")
            return RiskMeasure.var(_level_value(a))
        if name in {"entropic", "ent"}:
            g = arg or gamma
            if g is None:
                raise InvalidArgument("entropic needs gamma, e.g. entropic:1 or --gamma 1")
            return RiskMeasure.entropic(float(g))
    except ValueError as exc:
        if isinstance(exc, InvalidArgument):
            raise
        raise InvalidArgument(f"bad measure parameter in {text!r}") from None
    if name in {"neg_expectation", "negexp", "mean", "expectation"}:
        return RiskMeasure.neg_expectation()
    raise InvalidArgument(f"unknown measure {text!r}")


def _level_value(a):
    if isinstance(a, str):
        a = a.strip()
        return Fraction(a) if "/" in a else float(a)
    return a


# -- acceptance sets -----------------------------------------------------------------

def _weights_on(w, space: FiniteSpace):
    """Budget weight vector on ``space`` in the space's arithmetic mode."""
    if isinstance(w, RandomVariable):
        vals = w.values.tolist()
    elif np.ndim(w) == 0:
        vals = [w] * space.n
    else:
        vals = list(np.asarray(w, dtype=object).tolist())
    if len(vals) != space.n:
        raise InvalidArgument(f"budget weights have {len(vals)} entries, space has {space.n}")
    if space.exact:
        return [to_exact(v) for v in vals]
    return [float(v) for v in vals]


@dataclass(frozen=True)
class Budget:
    """``{Y >= 0 : E[w Y] <= c}`` with ``w >= 0`` and ``c >= 0`` -- a solid convex set."""

    w: object
    c: object

    def __post_init__(self):
        if isinstance(self.w, RandomVariable):
            ws = self.w.values.tolist()
        else:
            ws = np.atleast_1d(np.asarray(self.w, dtype=object)).tolist()
        if any(v < 0 for v in ws):
            raise InvalidArgument("budget weights must be nonnegative")
        if self.c < 0:
            raise InvalidArgument("budget capacity must be nonnegative")

    def load(self, Y: RandomVariable):
        w = _weights_on(self.w, Y.space)
        return sum(p * wi * y for p, wi, y in zip(Y.space.probs.tolist(), w, Y.values.tolist()))

    def contains(self, Y: RandomVariable, tol=0.0) -> bool:
        if Y.min() < 0:
            return False
        c = to_exact(self.c) if Y.exact else float(self.c)
        if tol:
            c = c + (to_exact(tol) if Y.exact else float(tol))
        return self.load(Y) <= c

    __contains__ = contains

    def budgets_on(self, space: FiniteSpace):
        return (self,)


@dataclass(frozen=True)
class BudgetIntersection:
    """Finite intersection of budgets."""

    parts: tuple

    def contains(self, Y: RandomVariable, tol=0.0) -> bool:
        return all(b.contains(Y, tol) for b in self.parts)

    __contains__ = contains

    def budgets_on(self, space: FiniteSpace):
        return tuple(b for part in self.parts for b in part.budgets_on(space))


@dataclass(frozen=True)
class AcceptanceSet:
    """Membership oracle for acceptable positions.

    ``tag == "surplus_monotone"`` means ``X`` is accepted iff ``neg_part(X) in D`` for a
    solid set ``D`` of nonnegative positions (a budget or an intersection of budgets, or
    a summed set produced by :func:`riskconv.infconv.sum_acceptance`).
    """

    contains_fn: Callable
    tag: str = "generic"
    D: object = None
    name: str = "A"

    def contains(self, X: RandomVariable) -> bool:
        return bool(self.contains_fn(X))

    __contains__ = contains

    @classmethod
    def surplus(cls, D, name: str = "A_D") -> AcceptanceSet:
        return cls(lambda X: D.contains(neg_part(X)), "surplus_monotone", D, name)

    @classmethod
    def budget(cls, w, c) -> AcceptanceSet:
        return cls.surplus(Budget(w, c), name=f"budget({w},{c})")

    @classmethod
    def of_measure(cls, rho: RiskMeasure) -> AcceptanceSet:
        return cls(lambda X: rho(X) <= 0, "generic", None, f"{{{rho.name}<=0}}")

    @classmethod
    def everything(cls) -> AcceptanceSet:
        return cls(lambda X: True, "generic", None, "everything")


def _budget_threshold(X: RandomVariable, S: RandomVariable, b: Budget):
    """Smallest ``m`` with ``E[w (X + mS)^-] <= c``; exact piecewise-linear solve."""
    exact = X.exact
    w = _weights_on(b.w, X.space)
    c = to_exact(b.c) if exact else float(b.c)
    xs, ss, ps = X.values.tolist(), S.values.tolist(), X.space.probs.tolist()
    # (x + m s)^- > 0 iff m < -x/s; walk the breakpoints downward from the top
    atoms = sorted(((-x / s, p * wi, x, s) for x, s, p, wi in zip(xs, ss, ps, w)),
                   key=lambda t: t[0], reverse=True)
    A = 0  # g(m) = A - m B on the current interval
    B = 0
    k = 0
    while k < len(atoms):
        bp = atoms[k][0]
        # g at this breakpoint (atoms above it already active)
        if B > 0 and A - bp * B > c:
            return (A - c) / B
        while k < len(atoms) and atoms[k][0] == bp:
            _, pw, x, s = atoms[k]
            A += pw * (-x)
            B += pw * s
            k += 1
    if B > 0:
        return (A - c) / B
    return -math.inf  # zero weights: every cash shift is acceptable


def _as_numeraire(S, space: FiniteSpace) -> RandomVariable:
    if S is None:
        return RandomVariable.constant(space, 1)
    if isinstance(S, RandomVariable):
        if S.space != space:
            raise InvalidArgument("numeraire lives on a different space")
        S = RandomVariable(space, S.values)
    elif np.ndim(S) == 0:
        S = RandomVariable.constant(space, S)
    else:
        S = RandomVariable(space, S)
    if S.min() <= 0:
        raise InvalidArgument("numeraire must be strictly positive")
    return S


def _is_budget_like(D) -> bool:
    return hasattr(D, "budgets_on")


def acceptance_value(A: AcceptanceSet, X: RandomVariable, S=None, tol: float = 1e-12,
                     max_doublings: int = 60):
    """``inf{m : X + mS in A}``."""
    S = _as_numeraire(S, X.space)
    if A.tag == "surplus_monotone" and _is_budget_like(A.D):
        v = max(_budget_threshold(X, S, b) for b in A.D.budgets_on(X.space))
        if v == -math.inf:
            raise UnboundedBelow("acceptance set admits every cash shift: risk measure is -inf")
        return v
    return _bisect_acceptance(A.contains, X, S, tol, max_doublings)


def _bisect_acceptance(contains, X, S, tol, max_doublings):
    Xf, Sf = X.to_float(), S.to_float()
    M = float(Xf.sup_norm()) / float(Sf.min()) + 1.0
    hi, lo = M, -M
    seen = []

    def test(m):
        ok = bool(contains(Xf + Sf * m))
        seen.append((m, ok))
        return ok

    for _ in range(max_doublings):
        if test(hi):
            break
        hi *= 2.0
    else:
        return math.inf
    for _ in range(max_doublings):
        if not test(lo):
            break
        lo *= 2.0
    else:
        raise UnboundedBelow("acceptance set accepts every cash shift: risk measure is -inf")
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if test(mid):
            hi = mid
        else:
            lo = mid
        if mid in (lo, hi) and hi - lo <= 4 * np.spacing(max(abs(lo), abs(hi))):
            break
    acc = [m for m, ok in seen if ok]
    rej = [m for m, ok in seen if not ok]
    if acc and rej and min(acc) < max(rej):
        raise ContractViolation(
            f"acceptance not upward-closed in m: accepted {min(acc)!r} but rejected {max(rej)!r}")
    return hi


def from_acceptance(A: AcceptanceSet, S=None, tol: float = 1e-12) -> RiskMeasure:
    """The S-additive measure ``X -> inf{m : X + mS in A}``."""
    flags = {"monotone", "s_additive"}
    if A.tag == "surplus_monotone":
        flags |= {"convex", "surplus_invariant_positive"}
    if S is None:
        flags.add("cash_additive")
    fixed_S = S if isinstance(S, RandomVariable) else None
    return RiskMeasure(lambda X: acceptance_value(A, X, S, tol), f"rho[{A.name}]",
                       frozenset(flags), numeraire=fixed_S,
                       params={"kind": "acceptance", "acceptance": A})


def surplus_transform(rho: RiskMeasure) -> RiskMeasure:
    """``X -> rho(-X^-)``: depends on the loss part only."""
    flags = (rho.flags & {"convex", "monotone", "law_invariant"}) | {"surplus_invariant"}
    if "monotone" not in rho.flags:
        flags.discard("convex")
    return RiskMeasure(lambda X: rho(-neg_part(X)), f"surplus[{rho.name}]", frozenset(flags),
                       params={"kind": "surplus", "base": rho})


# -- randomized flag checks ----------------------------------------------------------

@dataclass
class FlagCheck:
    tested: int = 0
    violations: int = 0
    max_violation: float = 0.0

    def record(self, excess: float, tol: float):
        self.tested += 1
        if excess > tol:
            self.violations += 1
        if excess > self.max_violation:
            self.max_violation = float(excess)


def _gap(a, b) -> float:
    """``a - b`` with ``inf - inf`` read as 0."""
    a, b = float(a), float(b)
    if math.isinf(a) and math.isinf(b) and a == b:
        return 0.0
    return a - b


def check_flags(rho: RiskMeasure, trials: int = 1000, seed: int = 0, n_atoms: int = 8,
                tol: float = 1e-9) -> dict:
    """Randomized falsification of every flag ``rho`` declares.

    Returns ``{flag: {"tested", "violations", "max_violation"}, ..., "passed": bool}``.
    Tolerances are relative to the magnitude of the values compared.
    """
    rng = np.random.default_rng(seed)
    space = rho.numeraire.space if rho.numeraire is not None else uniform_space(n_atoms)
    n = space.n
    checks = {f: FlagCheck() for f in sorted(rho.flags)}

    def draw():
        scale = rng.choice([0.5, 1.0, 3.0, 10.0])
        v = rng.standard_normal(n) * scale
        if rng.random() < 0.3:
            v = np.round(v)
        return RandomVariable(space, v)

    for _ in range(int(trials)):
        X, Y = draw(), draw()
        rx = rho(X)
        mag = 1.0 + abs(float(rx)) if not math.isinf(float(rx)) else 1.0
        t = tol * mag * 10
        if "law_invariant" in checks and space.is_uniform:
            checks["law_invariant"].record(abs(_gap(rho(X.permuted(rng.permutation(n))), rx)), t)
        if "cash_additive" in checks:
            m = float(rng.normal() * 3)
            checks["cash_additive"].record(abs(_gap(rho(X + m), float(rx) - m)), t + tol * abs(m))
        if "s_additive" in checks:
            S = rho.numeraire if rho.numeraire is not None else RandomVariable.constant(space, 1.0)
            m = float(rng.normal() * 3)
            checks["s_additive"].record(abs(_gap(rho(X + S * m), float(rx) - m)), t + tol * abs(m))
        if "convex" in checks:
            lam = float(rng.random())
            ry = rho(Y)
            mix = rho(X * lam + Y * (1 - lam))
            rhs = lam * float(rx) + (1 - lam) * float(ry)
            checks["convex"].record(_gap(mix, rhs), t + tol * abs(float(ry)) * 10)
        if "monotone" in checks:
            Z = X + np.abs(rng.standard_normal(n)) * rng.choice([0.1, 1.0, 5.0])
            checks["monotone"].record(_gap(rho(Z), rx), t)
        if "surplus_invariant" in checks:
            checks["surplus_invariant"].record(abs(_gap(rho(-neg_part(X)), rx)), t)
        if "surplus_invariant_positive" in checks and float(rx) > 0:
            checks["surplus_invariant_positive"].record(abs(_gap(rho(-neg_part(X)), rx)), t)
    report = {f: {"tested": c.tested, "violations": c.violations,
                  "max_violation": c.max_violation} for f, c in checks.items()}
    report["passed"] = all(c.violations == 0 for c in checks.values())
    return report

"""Rearrangement-invariant norms on finite spaces: L^p and Orlicz (Luxemburg) norms.

Besides evaluation every norm answers three queries used elsewhere:

* ``associate(Y)`` -- the dual norm ``sup{E[XY] : ||X|| <= 1}``;
* ``fundamental(t)`` -- the norm of an indicator of a set of probability ``t``;
* ``associate_fundamental(t)`` -- the same for the associate norm.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import EvaluationError, InvalidArgument, UnsupportedOperation
from .probspace import FiniteSpace, Partition, RandomVariable, cond_expect

CONTRACTION_TOL = 1e-9


class RepresentabilityWarning(UserWarning):
    """A requested probability is not available on the working space."""


def _abs_float(X: RandomVariable) -> tuple[np.ndarray, np.ndarray]:
    return np.abs(np.asarray(X.values, dtype=float)), np.asarray(X.space.probs, dtype=float)


class RiNorm:
    """Base class.  Subclasses implement ``_eval`` and ``_assoc`` on float arrays."""

    name = "norm"
    rtol = 1e-12

    def __call__(self, X: RandomVariable):
        return self.norm(X)

    def norm(self, X: RandomVariable):
        a, p = _abs_float(X)
        if not np.any(a > 0):
            return 0.0
        return self._eval(a, p)

    def associate(self, Y: RandomVariable) -> float:
        a, p = _abs_float(Y)
        if not np.any(a > 0):
            return 0.0
        return self._assoc(a, p)

    def associate_verify(self, Y: RandomVariable) -> float:
        """Independent dual-norm computation through an explicit maximiser.

        Solves ``sup E[XY]`` over the unit ball by walking the one-parameter family of
        candidates similarly ordered with ``|Y|`` and returns ``E[X|Y|]`` at the
        member lying on the unit sphere.
        """
        a, p = _abs_float(Y)
        if not np.any(a > 0):
            return 0.0
        x = self._extremal(a, p)
        return float(np.dot(p, x * a))

    def fundamental(self, t, space: Optional[FiniteSpace] = None) -> float:
        return fundamental_function(self, t, space)

    def associate_fundamental(self, t) -> float:
        return self.associate(_two_atom_indicator(t))

    def _eval(self, a, p):  # pragma: no cover - abstract
        raise NotImplementedError

    def _assoc(self, a, p):  # pragma: no cover - abstract
        raise NotImplementedError

    def _extremal(self, a, p):  # pragma: no cover - abstract
        raise NotImplementedError

    def __repr__(self):
        return self.name


class LpNorm(RiNorm):
    """``(E|X|^p)^(1/p)`` for ``1 <= p < inf`` and ``max|X|`` for ``p = inf``."""

    def __init__(self, p: float):
        p = float(p)
        if not (p >= 1.0):
            raise InvalidArgument(f"L^p needs p >= 1, got {p}")
        self.p = p
        self.name = "Linf" if math.isinf(p) else f"L{p:g}"

    @property
    def q(self) -> float:
        if self.p == 1.0:
            return math.inf
        if math.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1.0)

    def norm(self, X: RandomVariable):
        if X.exact and self.p == 1.0:
            return (np.abs(X.values) * X.space.probs).sum()
        if X.exact and math.isinf(self.p):
            return X.sup_norm()
        return super().norm(X)

    def _eval(self, a, p):
        return _lp(a, p, self.p)

    def _assoc(self, a, p):
        return _lp(a, p, self.q)

    def _extremal(self, a, p):
        if self.p == 1.0:
            # all mass on one atom where |Y| is largest: ||1_{j}/p_j||_1 = 1
            j = int(np.argmax(a))
            x = np.zeros_like(a)
            x[j] = 1.0 / p[j]
            return x
        if math.isinf(self.p):
            return np.ones_like(a)
        x = a ** (self.q - 1.0)
        return x / _lp(x, p, self.p)

    def __eq__(self, other):
        return isinstance(other, LpNorm) and other.p == self.p

    def __hash__(self):
        return hash(("Lp", self.p))


def _lp(a, p, r):
    if math.isinf(r):
        return float(a.max())
    if r == 1.0:
        return float(np.dot(p, a))
    m = a.max()
    if m == 0:
        return 0.0
    # scale first to keep a**r in range
    return float(m * np.dot(p, (a / m) ** r) ** (1.0 / r))


@dataclass
class OrliczFunction:
    """Young function ``phi`` with optional conjugate ``psi`` and its derivative ``dpsi``.

    ``dpsi`` is the inverse of ``phi'`` and parameterises the extremal elements of the
    dual pairing.  All callbacks must accept numpy arrays.
    """

    phi: Callable
    psi: Optional[Callable] = None
    dpsi: Optional[Callable] = None
    name: str = "orlicz"
    check_grid: tuple = (0.0, 8.0, 65)

    def __post_init__(self):
        lo, hi, k = self.check_grid
        t = np.linspace(lo, hi, int(k))
        with np.errstate(over="ignore", invalid="ignore"):
            v = self._safe(self.phi, t)
        if abs(v[0]) > 1e-15:
            raise InvalidArgument(f"{self.name}: phi(0) must be 0, got {v[0]!r}")
        fin = np.isfinite(v)
        vv = v[fin]
        if np.any(np.diff(vv) < -1e-12 * (1 + np.abs(vv[1:]))):
            raise InvalidArgument(f"{self.name}: phi is not nondecreasing on the check grid")
        if vv.size >= 3:
            second = vv[2:] - 2 * vv[1:-1] + vv[:-2]
            if np.any(second < -1e-9 * (1 + np.abs(vv[1:-1]))):
                raise InvalidArgument(f"{self.name}: phi is not convex on the check grid")

    @staticmethod
    def _safe(fn, t):
        try:
            out = np.asarray(fn(t), dtype=float)
        except Exception as exc:  # user callback
            raise EvaluationError(f"Orlicz callback failed: {exc}") from exc
        if out.shape != np.shape(t):
            out = np.broadcast_to(out, np.shape(t)).astype(float)
        if np.any(np.isnan(out)):
            raise EvaluationError("Orlicz callback returned NaN")
        return out

    def mean_phi(self, a, p) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            v = self._safe(self.phi, a)
        s = float(np.dot(p, v)) if np.all(np.isfinite(v)) else math.inf
        return s

    def mean_psi(self, a, p) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            v = self._safe(self.psi, a)
        return float(np.dot(p, v)) if np.all(np.isfinite(v)) else math.inf


def exp_young() -> OrliczFunction:
    """``phi(t) = e^t - 1`` with conjugate ``psi(s) = s log s - s + 1`` for ``s >= 1``."""

    def psi(s):
        s = np.maximum(np.asarray(s, dtype=float), 1.0)
        return s * np.log(s) - s + 1.0

    def dpsi(s):
        return np.log(np.maximum(np.asarray(s, dtype=float), 1.0))

    return OrliczFunction(np.expm1, psi, dpsi, name="exp")


def power_young(r: float) -> OrliczFunction:
    """``phi(t) = t^r`` (Luxemburg norm = L^r norm), conjugate for ``r > 1``."""
    if r <= 1:
        return OrliczFunction(lambda t: np.asarray(t, dtype=float) ** r, name=f"pow{r:g}")
    q = r / (r - 1)
    # psi(s) = sup_t (st - t^r) = (r-1) (s/r)^q ; (phi')^{-1}(s) = (s/r)^{1/(r-1)}
    return OrliczFunction(
        lambda t: np.asarray(t, dtype=float) ** r,
        lambda s: (r - 1.0) * (np.asarray(s, dtype=float) / r) ** q,
        lambda s: (np.asarray(s, dtype=float) / r) ** (1.0 / (r - 1.0)),
        name=f"pow{r:g}",
    )


class OrliczNorm(RiNorm):
    """Luxemburg norm ``inf{lam > 0 : E[phi(|X|/lam)] <= 1}``.

    The associate norm is the Orlicz norm of the conjugate, evaluated through the
    Amemiya formula ``inf_k (1 + E[psi(k|Y|)]) / k``; it is refused when ``psi`` is
    not supplied.
    """

    def __init__(self, young: OrliczFunction, rtol: float = 1e-12):
        self.young = young
        self.rtol = rtol
        self.name = f"Orlicz[{young.name}]"

    def _level(self, a, p, lam):
        return self.young.mean_phi(a / lam, p)

    def _eval(self, a, p):
        lam = float(a.max())
        g = self._level(a, p, lam)
        if g == 1.0:
            return lam
        # find lo with g(lo) >= 1 and hi with g(hi) <= 1, keeping g finite at lo
        if g > 1.0:
            lo, hi = lam, lam * 2.0
            for _ in range(2000):
                if self._level(a, p, hi) <= 1.0:
                    break
                lo, hi = hi, hi * 2.0
            else:
                raise EvaluationError(f"{self.name}: could not bracket the Luxemburg norm")
        else:
            lo, hi = lam / 2.0, lam
            for _ in range(2000):
                if self._level(a, p, lo) >= 1.0:
                    break
                lo, hi = lo / 2.0, lo
            else:
                raise EvaluationError(f"{self.name}: phi never reaches 1 (not a Young function?)")

        def f(s):
            v = self._level(a, p, math.exp(s))
            return min(v, 1e300) - 1.0

        s = brentq(f, math.log(lo), math.log(hi), xtol=1e-15, rtol=max(self.rtol, 1e-15))
        return math.exp(s)

    def _need_psi(self):
        if self.young.psi is None:
            raise UnsupportedOperation(
                f"{self.name}: associate norm needs the conjugate function psi")

    def _amemiya(self, a, p, k):
        return (1.0 + self.young.mean_psi(k * a, p)) / k

    def _assoc(self, a, p):
        self._need_psi()
        y = self.young
        if y.dpsi is not None:
            # d/dk of the Amemiya objective has the sign of E[k|Y| psi'(k|Y|) - psi(k|Y|)] - 1,
            # which is nondecreasing in k; locate its root on a log scale.
            def h(s):
                k = math.exp(s)
                with np.errstate(over="ignore", invalid="ignore"):
                    u = k * a
                    v = u * y._safe(y.dpsi, u) - y._safe(y.psi, u)
                val = float(np.dot(p, v)) if np.all(np.isfinite(v)) else math.inf
                return min(val, 1e300) - 1.0

            s0 = -math.log(float(a.max()))
            lo, hi = s0, s0
            while h(lo) > 0:
                lo -= 1.0
            for _ in range(200):
                if h(hi) >= 0:
                    break
                hi += 1.0
            else:
                raise EvaluationError(f"{self.name}: Amemiya objective has no minimiser")
            if lo == hi:
                return self._amemiya(a, p, math.exp(lo))
            s = brentq(h, lo, hi, xtol=1e-14, rtol=1e-15)
            return self._amemiya(a, p, math.exp(s))
        # no derivative: golden-section search on log k around the scale 1/max|Y|
        s0 = -math.log(float(a.max()))
        res = minimize_scalar(lambda s: self._amemiya(a, p, math.exp(s)),
                              bracket=(s0 - 3.0, s0 + 3.0), tol=1e-12)
        return float(res.fun)

    def _extremal(self, a, p):
        self._need_psi()
        y = self.young
        if y.dpsi is None:
            raise UnsupportedOperation(f"{self.name}: verifier needs dpsi = (phi')^-1")

        def x_of(s):
            return y._safe(y.dpsi, a * math.exp(-s))

        def g(s):
            return min(y.mean_phi(x_of(s), p), 1e300) - 1.0

        # larger s (= log mu) shrinks x; find a bracket around E[phi(x)] = 1
        lo = hi = math.log(float(a.max()))
        while g(hi) > 0:
            hi += 1.0
        for _ in range(400):
            if g(lo) >= 0:
                break
            lo -= 1.0
        else:
            raise EvaluationError(f"{self.name}: extremal family never reaches the unit sphere")
        s = brentq(g, lo, hi, xtol=1e-15, rtol=1e-15) if lo != hi else lo
        return x_of(s)


def exp_orlicz() -> OrliczNorm:
    return OrliczNorm(exp_young())


def parse_norm(text: str) -> RiNorm:
    """``L1``, ``L2``, ``L1.5``, ``Linf``, ``exp`` (Orlicz ``e^t - 1``)."""
    t = text.strip()
    low = t.lower()
    if low in {"exp", "orlicz", "orlicz-exp", "orlicz:exp"}:
        return exp_orlicz()
    if low.startswith("l"):
        body = low[1:]
        if body in {"inf", "infty", "oo"}:
            return LpNorm(math.inf)
        try:
            return LpNorm(float(body))
        except ValueError:
            pass
    raise InvalidArgument(f"unknown norm {text!r}")


def standard_norms() -> list:
    return [LpNorm(1), LpNorm(1.5), LpNorm(2), LpNorm(4), LpNorm(math.inf), exp_orlicz()]


# -- fundamental functions and Property (*) ------------------------------------------

def _check_t(t) -> float:
    tf = float(t)
    if not (0.0 < tf <= 1.0):
        raise InvalidArgument(f"probability {t!r} outside (0,1]")
    return tf


def _two_atom_indicator(t) -> RandomVariable:
    tf = _check_t(t)
    if tf == 1.0:
        return RandomVariable(FiniteSpace(np.array([1.0])), [1.0])
    return RandomVariable(FiniteSpace(np.array([tf, 1.0 - tf]), exact=False), [1.0, 0.0])


def fundamental_function(N: RiNorm, t, space: Optional[FiniteSpace] = None) -> float:
    """``||1_E||`` for ``P(E) = t``.

    Without ``space`` a two-atom space ``{t, 1-t}`` is used, so every ``t`` is
    representable.  On a given (uniform) space the nearest representable probability is
    used, a ``RepresentabilityWarning`` reports it, and two different choices of ``E``
    are evaluated to confirm the value does not depend on the set.
    """
    tf = _check_t(t)
    if space is None:
        return float(N.norm(_two_atom_indicator(tf)))
    if not space.is_uniform:
        raise InvalidArgument("fundamental_function on a given space needs a uniform space")
    n = space.n
    k = min(max(int(round(tf * n)), 1), n)
    if abs(k - tf * n) > 1e-9 * n:
        warnings.warn(f"t={tf:g} not representable on {n} atoms; using t={k / n:g}",
                      RepresentabilityWarning, stacklevel=2)
    head = N.norm(RandomVariable.indicator(space, range(k)))
    tail = N.norm(RandomVariable.indicator(space, range(n - k, n)))
    if abs(float(head) - float(tail)) > 1e-9 * max(1.0, float(head)):
        raise EvaluationError(f"{N.name}: indicator norm depends on the set ({head} vs {tail})")
    return float(head)


@dataclass
class StarProbe:
    norm: str
    points: list
    verdict: str
    decay_exponent: float
    primal_limit: float
    primal_behaviour: str = field(default="")

    def values(self):
        return [v for _, v in self.points]


def property_star_probe(N: RiNorm, t_grid, tol: float = 1e-6) -> StarProbe:
    """Associate fundamental values ``||1_{A_t}||_*`` along a decreasing grid.

    Verdict ``holds`` when the values are nonincreasing and either fall below ``tol`` or
    decay at a positive polynomial rate (fitted log-log slope >= 0.05 on the tail of
    the grid); otherwise ``fails``.  The primal fundamental function at the smallest
    ``t`` is reported as an informational small-set diagnostic.
    """
    ts = [_check_t(t) for t in t_grid]
    if len(ts) < 2 or any(b >= a for a, b in zip(ts, ts[1:])):
        raise InvalidArgument("t_grid must be strictly decreasing with at least two points")
    vals = [float(N.associate_fundamental(t)) for t in ts]
    lt = np.log(ts)
    lv = np.log(np.maximum(vals, 1e-300))
    tail = slice(len(ts) // 2, None) if len(ts) >= 4 else slice(None)
    slope = float(np.polyfit(lt[tail], lv[tail], 1)[0]) if len(ts[tail]) >= 2 else 0.0
    monotone = all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(vals, vals[1:]))
    holds = monotone and (vals[-1] <= tol or slope >= 0.05)
    primal = float(N.fundamental(ts[-1]))
    behaviour = ("fundamental function bounded away from 0 at small t (L^inf-like)"
                 if primal > 0.5 * float(N.fundamental(1.0)) else
                 "fundamental function vanishes at small t")
    return StarProbe(N.name, list(zip(ts, vals)), "holds" if holds else "fails",
                     slope, primal, behaviour)


def verify_contraction(N: RiNorm, X: RandomVariable, pi: Partition,
                       tol: float = CONTRACTION_TOL) -> tuple[bool, dict]:
    """Check ``||E[X|pi]|| <= ||X|| + tol``."""
    ce = cond_expect(X, pi)
    lhs = float(N.norm(ce))
    rhs = float(N.norm(X))
    ok = lhs <= rhs + tol
    return ok, {"norm": N.name, "lhs": lhs, "rhs": rhs, "excess": lhs - rhs, "ok": ok,
                "blocks": len(pi)}


def embedding_constants(N: RiNorm, samples, seed: int = 0, n_atoms: int = 16) -> dict:
    """Empirical ``C1 = max ||X|| / ||X||_inf`` and ``C2 = max ||X||_1 / ||X||``."""
    rng = np.random.default_rng(seed)
    c1 = c2 = 0.0
    for _ in range(int(samples)):
        w = rng.random(n_atoms) + 0.05
        X = RandomVariable(FiniteSpace(w / w.sum()), rng.standard_normal(n_atoms) * rng.exponential(2.0))
        nx = float(N.norm(X))
        if nx == 0:
            continue
        c1 = max(c1, nx / float(X.sup_norm()))
        c2 = max(c2, float(LpNorm(1).norm(X)) / nx)
    return {"norm": N.name, "C1": c1, "C2": c2, "samples": int(samples)}

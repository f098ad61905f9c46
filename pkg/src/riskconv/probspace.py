"""Finite probability spaces, random variables, partitions and conditional expectations.

Everything here works in one of two arithmetic modes.  A space whose weights are
``Fraction`` objects is *exact*: random variables on it carry ``Fraction`` values in
numpy object arrays and every operation in this module is exact.  Otherwise values
are ``float64`` and probabilities are compared to ``PROB_TOL``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import InvalidArgument, ScenarioError

PROB_TOL = 1e-12
VALUE_TOL = 1e-12


def to_exact(x) -> Fraction:
    """Exact rational for ``x``.

    Floats are read through their shortest repr, so ``0.3`` becomes ``3/10`` rather
    than the nearest binary fraction.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        return Fraction(int(x))
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError as exc:
            raise InvalidArgument(f"not a number: {x!r}") from exc
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise InvalidArgument(f"non-finite value {x!r} in exact mode")
        return Fraction(repr(float(x)))
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    raise InvalidArgument(f"cannot convert {x!r} to a rational")


def _is_exact_scalar(x) -> bool:
    return isinstance(x, (Fraction, int, np.integer)) and not isinstance(x, bool)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def as_values(values, exact: bool) -> np.ndarray:
    """Fresh, read-only 1-d array in the requested mode."""
    if exact:
        flat = values.ravel().tolist() if isinstance(values, np.ndarray) else list(values)
        return _frozen(np.array([to_exact(v) for v in flat], dtype=object))
    arr = np.array(values, dtype=float).ravel()
    return _frozen(arr)


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """Atoms ``0..n-1`` with strictly positive weights summing to one."""

    probs: np.ndarray
    exact: bool = None

    def __post_init__(self):
        raw = self.probs
        if not isinstance(raw, np.ndarray):
            raw = list(raw)
        exact = self.exact
        if exact is None:
            seq = raw.tolist() if isinstance(raw, np.ndarray) and raw.dtype == object else raw
            exact = isinstance(raw, list) and len(raw) > 0 and all(_is_exact_scalar(p) for p in seq) \
                or (isinstance(raw, np.ndarray) and raw.dtype == object)
        probs = as_values(raw, exact)
        if probs.size == 0:
            raise InvalidArgument("a finite space needs at least one atom")
        if any(p <= 0 for p in probs.tolist()):
            raise InvalidArgument("atom weights must be strictly positive")
        total = probs.sum()
        if exact:
            if total != 1:
                raise InvalidArgument(f"weights sum to {total}, not 1")
        elif abs(total - 1.0) > PROB_TOL:
            raise InvalidArgument(f"weights sum to {total!r}, not 1 within {PROB_TOL}")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "exact", bool(exact))

    @property
    def n(self) -> int:
        return int(self.probs.size)

    def __len__(self):
        return self.n

    @property
    def is_uniform(self) -> bool:
        p0 = self.probs[0]
        if self.exact:
            return all(p == p0 for p in self.probs.tolist())
        return bool(np.all(np.abs(self.probs - p0) <= PROB_TOL))

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, FiniteSpace) or other.n != self.n:
            return False
        if self.exact and other.exact:
            return self.probs.tolist() == other.probs.tolist()
        a = self.probs.astype(float)
        b = other.probs.astype(float)
        return bool(np.all(np.abs(a - b) <= PROB_TOL))

    def __hash__(self):
        return hash((self.n, round(float(self.probs[0]), 12)))

    def to_float(self) -> FiniteSpace:
        return self if not self.exact else FiniteSpace(self.probs.astype(float), exact=False)

    def to_exact(self) -> FiniteSpace:
        return self if self.exact else FiniteSpace(self.probs, exact=True)

    def prob(self, atoms) -> Fraction | float:
        idx = list(atoms)
        return self.probs[idx].sum() if idx else (Fraction(0) if self.exact else 0.0)


def uniform_space(n: int, exact: bool = False) -> FiniteSpace:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgument(f"uniform_space needs a positive integer, got {n!r}")
    if exact:
        return FiniteSpace([Fraction(1, int(n))] * int(n), exact=True)
    return FiniteSpace(np.full(int(n), 1.0 / n), exact=False)


@dataclass(frozen=True, eq=False)
class RandomVariable:
    space: FiniteSpace
    values: np.ndarray

    def __post_init__(self):
        vals = self.values
        if not (isinstance(vals, np.ndarray) and not vals.flags.writeable
                and (vals.dtype == object) == self.space.exact):
            vals = as_values(vals, self.space.exact)
        if vals.shape != (self.space.n,):
            raise InvalidArgument(
                f"{vals.size} values for a space with {self.space.n} atoms")
        object.__setattr__(self, "values", vals)

    # -- construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, space: FiniteSpace, c) -> RandomVariable:
        return cls(space, [c] * space.n)

    @classmethod
    def indicator(cls, space: FiniteSpace, atoms) -> RandomVariable:
        vals = [0] * space.n
        for a in atoms:
            vals[a] = 1
        return cls(space, vals)

    @property
    def exact(self) -> bool:
        return self.space.exact

    def __len__(self):
        return self.space.n

    def _operand(self, other):
        if isinstance(other, RandomVariable):
            if other.space is not self.space and other.space != self.space:
                raise InvalidArgument("random variables live on different spaces")
            if self.exact and not other.exact:
                return as_values(other.values, True)
            if other.exact and not self.exact:
                return other.values.astype(float)
            return other.values
        if isinstance(other, (np.ndarray, list, tuple)):
            return as_values(other, self.exact) if np.ndim(other) else self._operand(
                np.asarray(other).item())
        if self.exact:
            return to_exact(other)
        return float(other)

    def _wrap(self, vals) -> RandomVariable:
        vals = np.asarray(vals, dtype=object if self.exact else float)
        return RandomVariable(self.space, _frozen(vals))

    def __add__(self, other):
        return self._wrap(self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - self._operand(other))

    def __rsub__(self, other):
        return self._wrap(self._operand(other) - self.values)

    def __mul__(self, other):
        return self._wrap(self.values * self._operand(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._wrap(self.values / self._operand(other))

    def __neg__(self):
        return self._wrap(-self.values)

    def __abs__(self):
        return self._wrap(np.abs(self.values))

    def __eq__(self, other):
        if not isinstance(other, RandomVariable) or other.space != self.space:
            return False
        return self.values.tolist() == other.values.tolist()

    __hash__ = None

    def __repr__(self):
        vals = [str(v) if self.exact else f"{v:g}" for v in self.values.tolist()]
        return f"RandomVariable([{', '.join(vals)}])"

    def mean(self):
        return (self.values * self.space.probs).sum()

    def min(self):
        return min(self.values.tolist())

    def max(self):
        return max(self.values.tolist())

    def sup_norm(self):
        return max(abs(v) for v in self.values.tolist())

    def permuted(self, perm) -> RandomVariable:
        return self._wrap(self.values[np.asarray(perm, dtype=int)])

    def where(self, mask, other=0) -> RandomVariable:
        mask = np.asarray(mask, dtype=bool)
        fill = self._operand(other)
        out = self.values.copy() if not isinstance(fill, np.ndarray) else fill.copy()
        if isinstance(fill, np.ndarray):
            out[mask] = self.values[mask]
        else:
            out[~mask] = fill
        return self._wrap(out)

    def to_float(self) -> RandomVariable:
        if not self.exact:
            return self
        return RandomVariable(self.space.to_float(), self.values.astype(float))

    def to_exact(self) -> RandomVariable:
        if self.exact:
            return self
        return RandomVariable(self.space.to_exact(), self.values)


def rv(values, probs=None, exact: bool = False) -> RandomVariable:
    """Random variable on a fresh space (uniform unless ``probs`` is given)."""
    values = list(values)
    space = uniform_space(len(values), exact=exact) if probs is None else FiniteSpace(probs, exact=exact)
    return RandomVariable(space, values)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Law of a random variable: strictly increasing values with their probabilities."""

    values: np.ndarray
    probs: np.ndarray
    exact: bool

    def __len__(self):
        return int(self.values.size)

    def pairs(self):
        return list(zip(self.values.tolist(), self.probs.tolist()))

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def __eq__(self, other):
        if not isinstance(other, Distribution) or len(other) != len(self):
            return False
        if self.exact and other.exact:
            return self.pairs() == other.pairs()
        dv = np.abs(self.values.astype(float) - other.values.astype(float))
        dp = np.abs(self.probs.astype(float) - other.probs.astype(float))
        return bool(np.all(dv <= VALUE_TOL) and np.all(dp <= PROB_TOL))

    __hash__ = None


def distribution(X: RandomVariable) -> Distribution:
    if X.exact:
        acc: dict = {}
        for v, p in zip(X.values.tolist(), X.space.probs.tolist()):
            acc[v] = acc.get(v, 0) + p
        keys = sorted(acc)
        return Distribution(_frozen(np.array(keys, dtype=object)),
                            _frozen(np.array([acc[k] for k in keys], dtype=object)), True)
    uniq, inverse = np.unique(X.values, return_inverse=True)
    probs = np.bincount(inverse.ravel(), weights=X.space.probs, minlength=uniq.size)
    return Distribution(_frozen(uniq), _frozen(probs), False)


def same_distribution(X: RandomVariable, Y: RandomVariable) -> bool:
    return distribution(X) == distribution(Y)


def _check_level(u, exact: bool, upper_closed: bool = False):
    uu = to_exact(u) if exact else float(u)
    ok = 0 < uu <= 1 if upper_closed else 0 < uu < 1
    if not ok:
        bound = "(0,1]" if upper_closed else "(0,1)"
        raise InvalidArgument(f"level {u!r} outside {bound}")
    return uu


def quantile(X: RandomVariable, u) -> Fraction | float:
    """Left-continuous inverse of the CDF: ``sup{t : P(X < t) <= u}``.

    On a discrete law this is the smallest support point ``x`` with ``F(x) > u``.
    """
    u = _check_level(u, X.exact)
    dist = distribution(X)
    slack = 0 if X.exact else PROB_TOL
    cum = 0
    for v, p in zip(dist.values.tolist(), dist.probs.tolist()):
        cum += p
        if cum > u + slack:
            return v
    return dist.values[-1]


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint nonempty blocks of atom indices covering ``0..n-1``."""

    blocks: tuple
    n: int = None

    def __post_init__(self):
        blocks = tuple(tuple(int(a) for a in b) for b in self.blocks)
        if any(len(b) == 0 for b in blocks):
            raise InvalidArgument("partition has an empty block")
        n = sum(len(b) for b in blocks) if self.n is None else int(self.n)
        seen = sorted(a for b in blocks for a in b)
        if seen != list(range(n)):
            raise InvalidArgument("blocks must be disjoint and cover every atom exactly once")
        labels = np.empty(n, dtype=np.intp)
        for i, b in enumerate(blocks):
            labels[list(b)] = i
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "_labels", _frozen(labels))

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @classmethod
    def from_labels(cls, labels) -> Partition:
        labels = np.asarray(labels)
        order: dict = {}
        for atom, lab in enumerate(labels.tolist()):
            order.setdefault(lab, []).append(atom)
        return cls(tuple(tuple(v) for v in order.values()), n=len(labels))

    @classmethod
    def trivial(cls, n: int) -> Partition:
        return cls((tuple(range(n)),), n=n)

    @classmethod
    def singletons(cls, n: int) -> Partition:
        return cls(tuple((i,) for i in range(n)), n=n)

    def __len__(self):
        return len(self.blocks)

    def _canonical(self):
        return sorted(tuple(sorted(b)) for b in self.blocks)

    def __eq__(self, other):
        return isinstance(other, Partition) and self.n == other.n and \
            self._canonical() == other._canonical()

    __hash__ = None

    def refine(self, other: Partition) -> Partition:
        """Common refinement (coarsest partition finer than both)."""
        if other.n != self.n:
            raise InvalidArgument("partitions of different spaces")
        pairs = list(zip(self.labels.tolist(), other.labels.tolist()))
        return Partition.from_labels(pairs_to_labels(pairs))

    def is_refinement_of(self, coarser: Partition) -> bool:
        return all(len({int(coarser.labels[a]) for a in b}) == 1 for b in self.blocks)

    def block_probs(self, space: FiniteSpace):
        return [space.prob(b) for b in self.blocks]


def pairs_to_labels(keys) -> list:
    mapping: dict = {}
    return [mapping.setdefault(k, len(mapping)) for k in keys]


def cond_expect(X: RandomVariable, pi: Partition) -> RandomVariable:
    """E[X | sigma(pi)]: the probability-weighted block mean on each block."""
    if pi.n != X.space.n:
        raise InvalidArgument(f"partition covers {pi.n} atoms, space has {X.space.n}")
    if X.exact:
        out = np.empty(X.space.n, dtype=object)
        vals, probs = X.values, X.space.probs
        for b in pi.blocks:
            idx = list(b)
            mass = probs[idx].sum()
            out[idx] = (vals[idx] * probs[idx]).sum() / mass
        return RandomVariable(X.space, _frozen(out))
    k = len(pi)
    p = X.space.probs
    sums = np.bincount(pi.labels, weights=p * X.values, minlength=k)
    mass = np.bincount(pi.labels, weights=p, minlength=k)
    return RandomVariable(X.space, _frozen((sums / mass)[pi.labels]))


def pos_part(X: RandomVariable) -> RandomVariable:
    zero = Fraction(0) if X.exact else 0.0
    return X._wrap(np.where(X.values > 0, X.values, zero))


def neg_part(X: RandomVariable) -> RandomVariable:
    zero = Fraction(0) if X.exact else 0.0
    return X._wrap(np.where(X.values < 0, -X.values, zero))


def quantile_partition(X: RandomVariable, k: int) -> Partition:
    """At most ``k`` blocks, each a union of level sets of ``X``.

    If ``X`` takes at most ``k`` distinct values the blocks are its level sets, so
    ``cond_expect(X, pi) == X``.  Otherwise the range ``[min X, max X]`` is cut into
    ``k`` equal cells and atoms are grouped by cell, which bounds the oscillation of
    ``X`` on every block by ``(max X - min X) / k``.  Cells are computed from the
    normalised position ``(x - min) / range`` so dyadic ``k`` give nested partitions.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidArgument(f"quantile_partition needs k >= 1, got {k!r}")
    vals = X.values.tolist()
    levels = sorted(set(vals))
    if len(levels) <= k:
        rank = {v: i for i, v in enumerate(levels)}
        return _ordered_partition([rank[v] for v in vals])
    lo, hi = levels[0], levels[-1]
    span = hi - lo
    cells = []
    for v in vals:
        pos = (v - lo) / span
        cells.append(min(int(math.floor(pos * k)), k - 1))
    return _ordered_partition(cells)


def _ordered_partition(cells) -> Partition:
    groups: dict = {}
    for atom, c in enumerate(cells):
        groups.setdefault(c, []).append(atom)
    return Partition(tuple(tuple(groups[c]) for c in sorted(groups)), n=len(cells))


# -- scenario CSV ---------------------------------------------------------------

PROB_HEADERS = {"p", "prob", "probs", "probability", "probabilities", "weight", "weights"}


@dataclass(frozen=True)
class Scenarios:
    space: FiniteSpace
    columns: dict

    def __getitem__(self, name) -> RandomVariable:
        try:
            return self.columns[name]
        except KeyError:
            raise ScenarioError(f"no column {name!r}; available: {sorted(self.columns)}") from None

    def first(self) -> RandomVariable:
        return next(iter(self.columns.values()))


def parse_scenarios(lines, exact: bool = False, source: str = "<csv>") -> Scenarios:
    """Parse scenario CSV text.

    Header row required.  A first column named ``prob`` (or ``p``, ``weight``, ...)
    holds atom weights; without it the space is uniform.  One column per random
    variable, one row per atom.
    """
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ScenarioError(f"{source}: empty file") from None
    header = [h.strip() for h in header]
    if not header or any(h == "" for h in header):
        raise ScenarioError(f"{source}: row 1: empty column name in header")
    has_probs = header[0].lower() in PROB_HEADERS
    names = header[1:] if has_probs else header
    if not names:
        raise ScenarioError(f"{source}: no random-variable columns")
    if len(set(names)) != len(names):
        raise ScenarioError(f"{source}: duplicate column names")
    rows = []
    for rownum, row in enumerate(reader, start=2):
        if not row or all(c.strip() == "" for c in row):
            continue
        if len(row) != len(header):
            raise ScenarioError(
                f"{source}: row {rownum}: expected {len(header)} fields, got {len(row)}")
        parsed = []
        for col, cell in zip(header, row):
            text = cell.strip()
            try:
                val = Fraction(text) if exact else float(text)
            except (ValueError, ZeroDivisionError):
                raise ScenarioError(
                    f"{source}: row {rownum}, column {col!r}: not a number: {cell!r}") from None
            if not exact and not math.isfinite(val):
                raise ScenarioError(f"{source}: row {rownum}, column {col!r}: non-finite value")
            parsed.append(val)
        rows.append(parsed)
    if not rows:
        raise ScenarioError(f"{source}: no data rows")
    if has_probs:
        try:
            space = FiniteSpace([r[0] for r in rows], exact=exact)
        except InvalidArgument as exc:
            raise ScenarioError(f"{source}: column {header[0]!r}: {exc}") from None
        data = [r[1:] for r in rows]
    else:
        space = uniform_space(len(rows), exact=exact)
        data = rows
    columns = {name: RandomVariable(space, [r[j] for r in data]) for j, name in enumerate(names)}
    return Scenarios(space, columns)


def read_scenarios(path, exact: bool = False) -> Scenarios:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_scenarios(fh, exact=exact, source=str(path))

"""Lower-semicontinuity probes along almost surely convergent sequences.

A probe draws sequences ``X_n -> X`` of a given kind and looks for
``rho(X) > liminf_n rho(X_n)``.  The liminf is replaced by the minimum over the second
half of a finite horizon.

Sequences live on a "ladder" space: base atoms of equal weight, one of which is split
into cells ``c_1, c_2, ...`` with ``P(c_n) = (3/4) p 4^(1-n)`` plus a residual cell.  The
``n``-th term perturbs ``X`` on ``c_n`` only (and by a vanishing ``4^-n`` noise
everywhere), so ``X_n(w) -> X(w)`` at every atom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from .errors import InvalidArgument
from .measures import RiskMeasure
from .norms import LpNorm, RiNorm, property_star_probe
from .probspace import FiniteSpace, RandomVariable, uniform_space

KINDS = ("order_dominated", "norm_bounded_as", "as_only")


def ladder_space(horizon: int, base_atoms: int = 8) -> FiniteSpace:
    """Base atoms ``1..base_atoms-1`` plus atom 0 split into ``horizon`` cells and a residual."""
    p = 1.0 / base_atoms
    cells = [0.75 * p * 4.0 ** (1 - n) for n in range(1, horizon + 1)]
    residual = p * 4.0 ** (-horizon)
    probs = np.array(cells + [residual] + [p] * (base_atoms - 1))
    return FiniteSpace(probs / probs.sum(), exact=False)


@dataclass
class Sample:
    X: RandomVariable
    terms: np.ndarray          # horizon x n values of X_1 .. X_H
    checks: dict


@dataclass
class SequenceFamily:
    """Seeded generator of sequences of one kind.

    * ``order_dominated``: spikes of size at most 1, so ``|X_n| <= |X| + 2``;
    * ``norm_bounded_as``: spikes ``+-1_{c_n} / ||1_{c_n}||`` in the family's norm;
    * ``as_only``: spikes ``+-8^n`` whose norms explode.

    ``sign`` is ``"random"``, ``"+"`` or ``"-"`` (direction of the spikes).
    """

    kind: str
    norm: RiNorm = field(default_factory=lambda: LpNorm(1))
    base_atoms: int = 8
    seed: int = 0
    sign: str = "random"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        if self.sign not in ("random", "+", "-"):
            raise InvalidArgument(f"sign must be 'random', '+' or '-', got {self.sign!r}")
        self._spaces = {}

    def space(self, horizon: int) -> FiniteSpace:
        if horizon not in self._spaces:
            self._spaces[horizon] = ladder_space(horizon, self.base_atoms)
        return self._spaces[horizon]

    def sample(self, trial: int, horizon: int = 64) -> Sample:
        rng = np.random.default_rng([self.seed, trial])
        space = self.space(horizon)
        n_atoms = space.n
        H = horizon
        base = rng.standard_normal(self.base_atoms) * rng.choice([0.5, 1.0, 4.0])
        x = np.concatenate([np.full(H + 1, base[0]), base[1:]])
        X = RandomVariable(space, x)
        Z = rng.uniform(-1.0, 1.0, n_atoms)
        idx = np.arange(1, H + 1)
        eps = 4.0 ** (-idx)
        if self.sign == "random":
            signs = rng.choice([-1.0, 1.0], H)
        else:
            signs = np.full(H, 1.0 if self.sign == "+" else -1.0)
        if self.kind == "order_dominated":
            heights = signs * rng.uniform(0.0, 1.0, H)
        elif self.kind == "norm_bounded_as":
            heights = np.array([s / float(self.norm.norm(RandomVariable.indicator(space, [n - 1])))
                                for s, n in zip(signs, idx)])
        else:
            heights = signs * 8.0 ** idx
        terms = np.tile(x, (H, 1)) + eps[:, None] * Z[None, :]
        terms[idx - 1, idx - 1] += heights
        return Sample(X, terms, self._checks(X, terms, space, eps))

    def _checks(self, X, terms, space, eps) -> dict:
        H = terms.shape[0]
        x = np.asarray(X.values, dtype=float)
        err = np.abs(terms - x[None, :])
        # pointwise convergence: off the cell being perturbed, the error is the noise only
        off = err.copy()
        off[np.arange(H), np.arange(H)] = 0.0
        out = {"pointwise_error_at_horizon": float(off[-1].max()),
               "unconverged_mass": float(space.probs[H - 1]),
               "pointwise_ok": bool(off[-1].max() <= 1e-9 and np.all(off.max(axis=1) <= eps + 1e-15))}
        if self.kind == "order_dominated":
            dom = np.abs(x) + 2.0
            out["dominated"] = bool(np.all(np.abs(terms) <= dom[None, :] + 1e-12))
        if self.kind == "norm_bounded_as":
            norms = [float(self.norm.norm(RandomVariable(space, row))) for row in terms[:: max(1, H // 8)]]
            bound = float(self.norm.norm(X)) + 1.0 + float(eps[0])
            out["norm_sup_sampled"] = max(norms)
            out["norm_bounded"] = bool(max(norms) <= bound + 1e-9)
        return out


@dataclass
class ProbeReport:
    measure: str
    kind: str
    trials: int
    horizon: int
    violations: int
    max_violation: float
    constraint_failures: int
    worst_trial: int = -1
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"measure": self.measure, "kind": self.kind, "trials": self.trials,
                "horizon": self.horizon, "violations": self.violations,
                "max_violation": self.max_violation,
                "constraint_failures": self.constraint_failures,
                "worst_trial": self.worst_trial, "details": self.details}


def liminf_surrogate(values) -> float:
    """Minimum over the second half of a finite sequence."""
    values = np.asarray(values, dtype=float)
    return float(values[len(values) // 2:].min())


def probe(rho: RiskMeasure, fam: SequenceFamily, trials: int = 100, horizon: int = 64,
          tol: float = 1e-9) -> ProbeReport:
    """Count trials with ``rho(X) > liminf rho(X_n) + tol``."""
    if horizon < 2:
        raise InvalidArgument("horizon must be at least 2")
    viol, worst, worst_trial, bad = 0, 0.0, -1, 0
    space = fam.space(horizon)
    for t in range(int(trials)):
        s = fam.sample(t, horizon)
        ok = all(v for k, v in s.checks.items() if k.endswith("_ok") or k in ("dominated", "norm_bounded"))
        bad += not ok
        vals = rho.evaluate_batch(s.terms, space)
        excess = float(rho(s.X)) - liminf_surrogate(vals)
        if excess > tol:
            viol += 1
        if excess > worst:
            worst, worst_trial = excess, t
    return ProbeReport(rho.name, fam.kind, int(trials), int(horizon), viol, worst, bad,
                       worst_trial)


# -- gallery ------------------------------------------------------------------------------

def gallery_bigexamp2(n_max: int, cap: int = 100_000) -> dict:
    """``X_n = -n 1_{A_n}`` with nested ``P(A_n) = 1/n``.

    On a uniform space of ``lcm(1..n_max)`` atoms (when at most ``cap``) every
    ``P(A_n) = 1/n`` is exact: ``||X_n||_1 = 1`` and ``E[X_n] = -1`` for every ``n``, while
    ``X_n -> 0`` outside the shrinking sets.  Otherwise a 1024-atom dyadic space is used
    with ``P(A_n) = floor(1024/n)/1024`` (so ``||X_n||_1 <= 1``) and the achieved values are
    reported.  Values are given for ``rho = E[.]`` (a measure with the opposite cash sign)
    and, equivalently, for ``neg_expectation`` applied to ``-X_n``.
    """
    if not isinstance(n_max, int) or n_max < 1:
        raise InvalidArgument("n_max must be a positive integer")
    size = reduce(math.lcm, range(1, n_max + 1), 1)
    representable = size <= cap
    if not representable:
        size = 1024
        if n_max > size:
            raise InvalidArgument(f"n_max={n_max} exceeds the dyadic fallback resolution")
    space = uniform_space(size, exact=True)
    means, norms, probs = [], [], []
    for n in range(1, n_max + 1):
        k = size // n
        X = RandomVariable(space, [-n] * k + [0] * (size - k))
        means.append(X.mean())
        norms.append(LpNorm(1).norm(X))
        probs.append(Fraction(k, size))
    liminf = min(means[(len(means)) // 2:])
    limit_value = Fraction(0)
    gap = limit_value - liminf
    return {
        "n_max": n_max, "atoms": size, "representable": representable,
        "expectations": [str(m) for m in means],
        "l1_norms": [str(v) for v in norms],
        "set_probabilities": [str(p) for p in probs],
        "norms_equal_one": all(v == 1 for v in norms),
        "liminf_expectation": liminf, "limit_expectation": limit_value,
        "gap": gap,
        "residual_mass": probs[-1],
        "neg_expectation_view": {"rho_limit": Fraction(0), "liminf_rho": liminf,
                                 "violation": gap},
    }


def gallery_bigexamp1(ladder=(4, 6, 8, 10, 12), thresholds=(0.5, 0.25, 0.1)) -> dict:
    """``rho(X) = E[XZ]`` with an L^2 but unbounded density profile, on a ladder of spaces.

    ``Z_k`` discretises ``u^(-1/4)`` on ``2^k`` atoms and is normalised to ``||Z_k||_2 = 1``;
    its sup norm grows without bound along the ladder.  ``X_n = 1_{A_n}/sqrt(P(A_n))`` with
    ``A_n = [0, 2^-n)`` has ``||X_n||_2 = 1`` and tends to 0 off a null set; ``E[X_n Z_k]``
    is compared with the truncation bound ``eta ||Z||_2 + M ||Z 1{|X_n| >= eta}||_2``.
    """
    rows = []
    bound_ok = True
    for k in ladder:
        size = 2**k
        u = (np.arange(size) + 1.0) / size
        raw = u ** -0.25
        space = uniform_space(size)
        Zr = RandomVariable(space, raw)
        z2 = float(LpNorm(2).norm(Zr))
        Z = raw / z2
        pairings = []
        for n in range(1, k + 1):
            m = size >> n
            x = np.zeros(size)
            x[:m] = 1.0 / math.sqrt(m / size)
            M = float(LpNorm(2).norm(RandomVariable(space, x)))
            pairing = float(np.mean(x * Z))
            for eta in thresholds:
                big = np.abs(x) >= eta
                bound = eta * 1.0 + M * math.sqrt(float(np.mean((Z * big) ** 2)))
                bound_ok &= pairing <= bound + 1e-12
            pairings.append(pairing)
        dominated = [float(np.mean(2.0 ** -n * Z)) for n in range(1, k + 1)]
        rows.append({"k": k, "atoms": size, "raw_sup": float(raw.max()),
                     "z_sup": float(Z.max()), "z_l2": 1.0, "pairings": pairings,
                     "pairings_decrease": all(b <= a + 1e-15 for a, b in zip(pairings, pairings[1:])),
                     "dominated_pairings": dominated})
    sups = [r["z_sup"] for r in rows]
    return {"ladder": list(ladder), "rows": rows, "bound_holds": bool(bound_ok),
            "z_sup_growth": [b / a for a, b in zip(sups, sups[1:])]}


def pstar_consequence_probe(N: RiNorm, trials: int = 500, horizon: int = 200,
                            seed: int = 0, base_atoms: int = 8) -> dict:
    """Norm-bounded, a.s.-null sequences: does ``E[X_n] -> 0``?

    When the small-set condition on the associate norm holds, every such sequence has
    vanishing expectations; the probe reports the largest ``|E[X_n]|`` over the second
    half of the horizon.  When it fails (``L^1``) the indicator spikes of the
    ``-n 1_{A_n}`` example are reported instead.
    """
    star = property_star_probe(N, [2.0**-j for j in range(1, 15)])
    space = ladder_space(horizon, base_atoms)
    cells = np.arange(horizon)
    ind_norm = np.array([float(N.norm(RandomVariable.indicator(space, [c]))) for c in cells])
    cell_p = np.asarray(space.probs[:horizon], dtype=float)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(int(trials)):
        heights = rng.choice([-1.0, 1.0], horizon) * rng.uniform(0.0, 1.0, horizon) / ind_norm
        means = heights * cell_p  # E[X_n]: X_n is supported on the single cell c_n
        worst = max(worst, float(np.abs(means[horizon // 2:]).max()))
    out = {"norm": N.name, "verdict": star.verdict, "trials": int(trials), "horizon": horizon,
           "max_tail_abs_mean": worst}
    if star.verdict == "fails":
        ex = gallery_bigexamp2(8)
        out["counterexample"] = {"family": "-n 1_{A_n}", "gap": float(ex["gap"]),
                                 "expectations": ex["expectations"]}
        # the same spikes normalised in this norm keep E[X_n] of order one
        out["spike_means"] = [float(v) for v in (cell_p / ind_norm)[horizon // 2:][:5]]
    return out

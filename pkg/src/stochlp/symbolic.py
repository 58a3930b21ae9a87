"""Exact calculus over sums of guarded terms.

A SymbolicSum is a finite sum of region buckets.  Each bucket pairs a guard
chain (a strict total order over its support of variables and rational
constants, denoting the product of Heaviside factors of consecutive
differences) with polynomial-exponential terms c * e^q * prod v^a * prod
e^(b*v), coefficients kept as exact rationals.  Operations that would create
incomparable atoms split into all linear extensions, so chains stay total.

Equality is almost-everywhere equality: boundaries between regions carry no
mass.  Substituting a value that lands exactly on a boundary resolves ties as
if the substituted atom were infinitesimally above its value, i.e. a
limit-from-inside convention; this is exact whenever the represented function
is continuous across that boundary, which holds at every substitution the
solvers perform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Union

import mpmath

from .errors import Budget, DivergentIntegral, InputError, InvariantViolation

# atoms: ("c", Fraction) constants, ("v", int) variables
Atom = tuple[str, object]
Chain = tuple[Atom, ...]
# term key: (powers, exps, e_const) with powers/exps sorted tuples of (var, n)
TermKey = tuple[tuple[tuple[int, int], ...], tuple[tuple[int, int], ...], Fraction]

ZERO_ATOM: Atom = ("c", Fraction(0))

_EVAL_DPS = 40


def const_atom(value) -> Atom:
    return ("c", Fraction(value))


def var_atom(v: int) -> Atom:
    return ("v", v)


def _chain_consistent(chain: Chain) -> bool:
    """Distinct atoms, constants strictly increasing along the chain."""
    if len(set(chain)) != len(chain):
        return False
    last: Fraction | None = None
    for kind, val in chain:
        if kind == "c":
            if last is not None and val <= last:
                return False
            last = val
    return True


def _key_pow(powers: Mapping[int, int]) -> tuple[tuple[int, int], ...]:
    return tuple(sorted((v, n) for v, n in powers.items() if n))


class SymbolicSum:
    """Immutable canonical sum of guarded polynomial-exponential terms."""

    __slots__ = ("regions",)

    def __init__(self, regions: Mapping[Chain, Mapping[TermKey, Fraction]] | None = None,
                 budget: Budget | None = None):
        canon: dict[Chain, dict[TermKey, Fraction]] = {}
        for chain, terms in (regions or {}).items():
            if not _chain_consistent(chain):
                continue
            bucket = canon.setdefault(chain, {})
            for key, coeff in terms.items():
                if coeff == 0:
                    continue
                new = bucket.get(key, Fraction(0)) + coeff
                if new == 0:
                    bucket.pop(key, None)
                else:
                    bucket[key] = new
        self.regions: dict[Chain, dict[TermKey, Fraction]] = {
            ch: terms for ch, terms in canon.items() if terms
        }
        if budget is not None:
            budget.note_regions(len(self.regions))
            budget.note_terms(self.term_count())

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls) -> "SymbolicSum":
        return cls()

    @classmethod
    def const(cls, value) -> "SymbolicSum":
        q = Fraction(value)
        if q == 0:
            return cls.zero()
        return cls({(): {((), (), Fraction(0)): q}})

    @classmethod
    def one(cls) -> "SymbolicSum":
        return cls.const(1)

    @classmethod
    def guard(cls, low: Atom, high: Atom) -> "SymbolicSum":
        """Indicator H(high - low) as a single chain low < high."""
        if low == high:
            return cls.one()
        return cls({(low, high): {((), (), Fraction(0)): Fraction(1)}})

    @classmethod
    def term(cls, coeff, powers: Mapping[int, int] | None = None,
             exps: Mapping[int, int] | None = None, e_const=0,
             chain: Chain = ()) -> "SymbolicSum":
        key = (_key_pow(powers or {}), _key_pow(exps or {}), Fraction(e_const))
        return cls({chain: {key: Fraction(coeff)}})

    # -- inspection --------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.regions

    def term_count(self) -> int:
        return sum(len(t) for t in self.regions.values())

    def free_vars(self) -> frozenset[int]:
        out: set[int] = set()
        for chain, terms in self.regions.items():
            out.update(v for kind, v in chain if kind == "v")
            for powers, exps, _ in terms:
                out.update(v for v, _ in powers)
                out.update(v for v, _ in exps)
        return frozenset(out)

    def max_total_degree(self) -> int:
        best = 0
        for terms in self.regions.values():
            for powers, _, _ in terms:
                best = max(best, sum(n for _, n in powers))
        return best

    def canonical_text(self) -> str:
        """Deterministic text form (sorted regions and terms) for golden tests."""
        def atom_s(a: Atom) -> str:
            return str(a[1]) if a[0] == "c" else f"z{a[1]}"

        lines = []
        for chain in sorted(self.regions, key=lambda ch: (len(ch), [str(a) for a in ch])):
            guard = " < ".join(atom_s(a) for a in chain) if chain else "true"
            parts = []
            for key in sorted(self.regions[chain], key=str):
                powers, exps, e_const = key
                coeff = self.regions[chain][key]
                factors = [str(coeff)]
                if e_const:
                    factors.append(f"e^({e_const})")
                factors += [f"z{v}^{n}" for v, n in powers]
                factors += [f"e^({n}*z{v})" for v, n in exps]
                parts.append("*".join(factors))
            lines.append(f"[{guard}] " + " + ".join(parts))
        return "\n".join(lines)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"SymbolicSum({len(self.regions)} regions, {self.term_count()} terms)"

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: "SymbolicSum") -> "SymbolicSum":
        merged: dict[Chain, dict[TermKey, Fraction]] = {}
        for src in (self.regions, other.regions):
            for chain, terms in src.items():
                bucket = merged.setdefault(chain, {})
                for key, coeff in terms.items():
                    bucket[key] = bucket.get(key, Fraction(0)) + coeff
        return SymbolicSum(merged)

    def scale(self, c) -> "SymbolicSum":
        q = Fraction(c)
        if q == 0:
            return SymbolicSum.zero()
        return SymbolicSum({
            chain: {key: coeff * q for key, coeff in terms.items()}
            for chain, terms in self.regions.items()
        })

    def __sub__(self, other: "SymbolicSum") -> "SymbolicSum":
        return self + other.scale(-1)


def _interleavings(c1: Chain, c2: Chain) -> Iterator[Chain]:
    """All linear extensions of the union of two total orders; shared atoms
    are merged, constants must come out strictly increasing."""
    pos1 = {a: i for i, a in enumerate(c1)}
    pos2 = {a: i for i, a in enumerate(c2)}

    def rec(i: int, j: int) -> Iterator[tuple[Atom, ...]]:
        if i == len(c1) and j == len(c2):
            yield ()
            return
        if i < len(c1) and j < len(c2) and c1[i] == c2[j]:
            for rest in rec(i + 1, j + 1):
                yield (c1[i],) + rest
            return
        if i < len(c1):
            a = c1[i]
            if pos2.get(a, -1) < j:  # not pending in c2
                for rest in rec(i + 1, j):
                    yield (a,) + rest
        if j < len(c2):
            b = c2[j]
            if pos1.get(b, -1) < i:
                for rest in rec(i, j + 1):
                    yield (b,) + rest

    for chain in rec(0, 0):
        if _chain_consistent(chain):
            yield chain


def _term_mul(k1: TermKey, c1: Fraction, k2: TermKey, c2: Fraction) -> tuple[TermKey, Fraction]:
    p1, e1, q1 = k1
    p2, e2, q2 = k2
    powers = dict(p1)
    for v, n in p2:
        powers[v] = powers.get(v, 0) + n
    exps = dict(e1)
    for v, n in e2:
        exps[v] = exps.get(v, 0) + n
    return (_key_pow(powers), _key_pow(exps), q1 + q2), c1 * c2


def multiply(a: SymbolicSum, b: SymbolicSum, budget: Budget | None = None) -> SymbolicSum:
    """Product of two sums; overlapping guard chains split into all linear
    extensions of their union."""
    out: dict[Chain, dict[TermKey, Fraction]] = {}
    pending_terms = 0
    for ch1, terms1 in a.regions.items():
        for ch2, terms2 in b.regions.items():
            if budget is not None:
                budget.charge_work(len(terms1) * len(terms2))
            prods: list[tuple[TermKey, Fraction]] = []
            for k1, c1 in terms1.items():
                for k2, c2 in terms2.items():
                    prods.append(_term_mul(k1, c1, k2, c2))
            for chain in _interleavings(ch1, ch2):
                bucket = out.setdefault(chain, {})
                for key, coeff in prods:
                    bucket[key] = bucket.get(key, Fraction(0)) + coeff
                pending_terms += len(prods)
            if budget is not None:
                budget.note_regions(len(out))
                if pending_terms > 3 * budget.max_terms:
                    # bound transient memory before canonicalization prunes
                    budget.note_terms(pending_terms)
    return SymbolicSum(out, budget=budget)


def differentiate(s: SymbolicSum, v: int) -> SymbolicSum:
    """Classical derivative within each region (guards unchanged, a.e.)."""
    out: dict[Chain, dict[TermKey, Fraction]] = {}
    for chain, terms in s.regions.items():
        bucket = out.setdefault(chain, {})
        for (powers, exps, e_const), coeff in terms.items():
            pd = dict(powers)
            ed = dict(exps)
            alpha = pd.get(v, 0)
            beta = ed.get(v, 0)
            if alpha:
                p2 = dict(pd)
                p2[v] = alpha - 1
                key = (_key_pow(p2), exps, e_const)
                bucket[key] = bucket.get(key, Fraction(0)) + coeff * alpha
            if beta:
                key = (powers, exps, e_const)
                bucket[key] = bucket.get(key, Fraction(0)) + coeff * beta
    return SymbolicSum(out)


def substitute(s: SymbolicSum, v: int, value: Union[Fraction, int, Atom],
               budget: Budget | None = None) -> SymbolicSum:
    """Replace variable v by a rational value or another atom.

    Chains touched by a tie resolve as if v sat infinitesimally above the
    substituted atom: regions squeezed empty are dropped, the rest keep their
    order with the duplicate removed.
    """
    target: Atom = value if isinstance(value, tuple) else const_atom(value)
    va = var_atom(v)
    out: dict[Chain, dict[TermKey, Fraction]] = {}
    for chain, terms in s.regions.items():
        new_chain = chain
        if va in chain:
            idx = chain.index(va)
            if target in chain:
                tpos = chain.index(target)
                if tpos > idx:
                    continue  # v < ... < target contradicts v = target+eps
                if tpos < idx - 1:
                    continue  # atoms squeezed between target and v
                new_chain = chain[:idx] + chain[idx + 1:]
            else:
                new_chain = chain[:idx] + (target,) + chain[idx + 1:]
            if not _chain_consistent(new_chain):
                continue
        bucket = out.setdefault(new_chain, {})
        for (powers, exps, e_const), coeff in terms.items():
            pd = dict(powers)
            ed = dict(exps)
            alpha = pd.pop(v, 0)
            beta = ed.pop(v, 0)
            q = e_const
            c = coeff
            if target[0] == "c":
                c = c * (Fraction(target[1]) ** alpha)
                q = q + beta * Fraction(target[1])
            else:
                w = target[1]
                if alpha:
                    pd[w] = pd.get(w, 0) + alpha
                if beta:
                    ed[w] = ed.get(w, 0) + beta
            key = (_key_pow(pd), _key_pow(ed), q)
            bucket[key] = bucket.get(key, Fraction(0)) + c
    return SymbolicSum(out, budget=budget)


def _antiderivative(alpha: int, beta: int) -> list[tuple[Fraction, int, int]]:
    """Terms (coeff, alpha', beta') of the antiderivative of z^alpha e^(beta z)."""
    if beta == 0:
        return [(Fraction(1, alpha + 1), alpha + 1, 0)]
    out = [(Fraction(1, beta), alpha, beta)]
    fall = 1
    for i in range(1, alpha + 1):
        fall *= alpha - i + 1
        out.append((Fraction((-1) ** i * fall, beta ** (i + 1)), alpha - i, beta))
    return out


def integrate_out(s: SymbolicSum, v: int, upper: Atom | None = None,
                  budget: Budget | None = None) -> SymbolicSum:
    """Integrate variable v over the full line within each region.

    The bounds of v are its neighbors in the guard chain (infinite when
    absent); a non-vanishing tail at an infinite bound raises
    DivergentIntegral.  Pass ``upper`` to integrate cumulatively up to an
    atom instead: the sum is first multiplied by the guard v < upper.
    """
    if upper is not None:
        s = multiply(s, SymbolicSum.guard(var_atom(v), upper), budget=budget)
    va = var_atom(v)
    out: dict[Chain, dict[TermKey, Fraction]] = {}
    for chain, terms in s.regions.items():
        if va not in chain:
            # an unguarded variable integrated over the whole line diverges
            raise DivergentIntegral(f"variable z{v} is unbounded in a region")
        idx = chain.index(va)
        lo: Atom | None = chain[idx - 1] if idx > 0 else None
        hi: Atom | None = chain[idx + 1] if idx + 1 < len(chain) else None
        rest = chain[:idx] + chain[idx + 1:]
        bucket = out.setdefault(rest, {})

        def emit(key: TermKey, coeff: Fraction) -> None:
            bucket[key] = bucket.get(key, Fraction(0)) + coeff

        for (powers, exps, e_const), coeff in terms.items():
            pd = dict(powers)
            ed = dict(exps)
            alpha = pd.pop(v, 0)
            beta = ed.pop(v, 0)
            base_key = (_key_pow(pd), _key_pow(ed), e_const)
            anti = _antiderivative(alpha, beta)
            for bound, sign in ((hi, 1), (lo, -1)):
                if bound is None:
                    # value at an infinite end must vanish
                    if beta == 0 or (sign > 0 and beta > 0) or (sign < 0 and beta < 0):
                        raise DivergentIntegral(
                            f"non-vanishing tail integrating z{v} (alpha={alpha}, beta={beta})"
                        )
                    continue  # vanishing exponential tail contributes 0
                for c_a, a_pow, b_exp in anti:
                    pd2 = dict(pd)
                    ed2 = dict(ed)
                    q2 = e_const
                    c2 = coeff * c_a * sign
                    if bound[0] == "c":
                        c2 *= Fraction(bound[1]) ** a_pow
                        q2 = q2 + b_exp * Fraction(bound[1])
                    else:
                        w = bound[1]
                        if a_pow:
                            pd2[w] = pd2.get(w, 0) + a_pow
                        if b_exp:
                            ed2[w] = ed2.get(w, 0) + b_exp
                    emit((_key_pow(pd2), _key_pow(ed2), q2), c2)
    return SymbolicSum(out, budget=budget)


def cumulate(s: SymbolicSum, v: int, fresh: int, lower: Atom | None = None,
             budget: Budget | None = None) -> SymbolicSum:
    """Cumulative integral: result(v) = integral of s over the dummy up to v.

    The integration variable is renamed to ``fresh``; ``lower`` optionally
    clamps the integral to start at an atom (used for nonnegative-support
    polynomial distributions).
    """
    renamed = substitute(s, v, var_atom(fresh), budget=budget)
    guard = SymbolicSum.guard(var_atom(fresh), var_atom(v))
    if lower is not None:
        guard = multiply(guard, SymbolicSum.guard(lower, var_atom(fresh)))
    renamed = multiply(renamed, guard, budget=budget)
    return integrate_out(renamed, fresh, budget=budget)


def truncate_total_degree(s: SymbolicSum, tau: int) -> SymbolicSum:
    """Drop monomials of total degree above tau; polynomial payloads only."""
    out: dict[Chain, dict[TermKey, Fraction]] = {}
    for chain, terms in s.regions.items():
        bucket: dict[TermKey, Fraction] = {}
        for key, coeff in terms.items():
            powers, exps, e_const = key
            if exps or e_const:
                raise InputError("truncation needs a polynomial payload (no exponentials)")
            if sum(n for _, n in powers) <= tau:
                bucket[key] = coeff
        if bucket:
            out[chain] = bucket
    return SymbolicSum(out)


def evaluate(s: SymbolicSum, assignment: Mapping[int, Fraction] | None = None
             ) -> tuple[float, float]:
    """Exact-rational accumulation grouped by total e-exponent, then one
    extended-precision pass over the exponentials.

    Returns (value, error_radius).  Guard chains are evaluated strictly, so a
    query on a region boundary reports the open-region limit.
    """
    assignment = {v: Fraction(q) for v, q in (assignment or {}).items()}
    missing = s.free_vars() - set(assignment)
    if missing:
        raise InputError(f"assignment missing variables {sorted(missing)}")

    groups: dict[Fraction, Fraction] = {}
    for chain, terms in s.regions.items():
        vals = [Fraction(a[1]) if a[0] == "c" else assignment[a[1]] for a in chain]
        if any(not (vals[i] < vals[i + 1]) for i in range(len(vals) - 1)):
            continue
        for (powers, exps, e_const), coeff in terms.items():
            q = Fraction(e_const)
            c = coeff
            for v, n in powers:
                c *= assignment[v] ** n
            for v, n in exps:
                q += n * assignment[v]
            if c:
                groups[q] = groups.get(q, Fraction(0)) + c

    with mpmath.workdps(_EVAL_DPS):
        total = mpmath.mpf(0)
        magnitude = mpmath.mpf(0)
        for q in sorted(groups):
            term = mpmath.mpf(groups[q].numerator) / groups[q].denominator * mpmath.e ** (
                mpmath.mpf(q.numerator) / q.denominator)
            total += term
            magnitude += abs(term)
        value = float(total)
        radius = float(magnitude * mpmath.mpf(10) ** (8 - _EVAL_DPS) + mpmath.mpf(2) ** -52 * abs(total))
    return value, radius

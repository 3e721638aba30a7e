"""Proactive substation security algorithm.

Binary decision model choosing which protection IEDs to disable, whether the
concurrent IED is brought online, and which flows to redirect to it.  The
cost being minimised is::

    sum(weight_i * disable_i) + gamma * cied_enabled + sum(attacked_i * redirect_i)

subject to

* ``disable_i == attacked_i`` for IEDs that can be disabled, ``disable_i == 0``
  for IEDs held in service by operational constraints;
* ``cied_enabled == min(1, sum(attacked))``;
* ``redirect_i == attacked_i``.

Under these constraints the feasible set holds exactly one point, so
:func:`solve` is constraint propagation plus evaluation.
:func:`enumerate_oracle` checks every binary assignment and exists to certify
that claim.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PssaInstance:
    weights: tuple
    gamma: float
    attacks: tuple
    disableable: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "attacks", tuple(int(a) for a in self.attacks))
        if self.disableable is None:
            object.__setattr__(self, "disableable", (1,) * len(self.weights))
        else:
            object.__setattr__(self, "disableable", tuple(int(d) for d in self.disableable))
        self.validate()

    @property
    def n(self):
        return len(self.weights)

    def validate(self):
        n = len(self.weights)
        if n == 0:
            raise ValueError("at least one protection IED is required")
        if len(self.attacks) != n or len(self.disableable) != n:
            raise ValueError(
                f"length mismatch: {n} weights, {len(self.attacks)} attack bits, "
                f"{len(self.disableable)} disableable flags")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if any(a not in (0, 1) for a in self.attacks) or any(d not in (0, 1) for d in self.disableable):
            raise ValueError("attack and disableable flags must be 0 or 1")


@dataclass(frozen=True)
class PssaSolution:
    disable: tuple
    cied: int
    redirect: tuple
    objective: float = field(compare=True)

    def as_dict(self):
        return {"D": list(self.disable), "E": self.cied, "F": list(self.redirect),
                "objective": self.objective}


def cied_enable(attacks):
    """1 when at least one IED is under attack."""
    return min(1, sum(attacks))


def objective(instance, disable, cied, redirect):
    return (sum(w * d for w, d in zip(instance.weights, disable))
            + instance.gamma * cied
            + sum(a * f for a, f in zip(instance.attacks, redirect)))


def feasible(instance, disable, cied, redirect):
    for a, ok, d, f in zip(instance.attacks, instance.disableable, disable, redirect):
        if d != (a if ok else 0) or f != a:
            return False
    return cied == cied_enable(instance.attacks)


def solve(instance):
    a = instance.attacks
    disable = tuple(ai if ok else 0 for ai, ok in zip(a, instance.disableable))
    redirect = tuple(a)
    e = cied_enable(a)
    return PssaSolution(disable, e, redirect, objective(instance, disable, e, redirect))


def enumerate_oracle(instance):
    """Minimum-cost feasible point found by checking all 2**(2n+1) assignments.

    Assignment ``k`` encodes disable bits in bits ``0..n-1``, redirect bits in
    ``n..2n-1`` and the CIED bit at ``2n``.  Ties (none occur under the current
    constraints) go to the lowest ``k``.
    """
    n = instance.n
    if n <= 4:
        return _enumerate_python(instance)
    # filter one bit position at a time; survivors keep their original order
    candidates = np.arange(1 << (2 * n + 1), dtype=np.int32)
    wanted = [(i, a if dis else 0) for i, (a, dis) in enumerate(zip(instance.attacks, instance.disableable))]
    wanted += [(n + i, a) for i, a in enumerate(instance.attacks)]
    wanted.append((2 * n, cied_enable(instance.attacks)))
    for bit, value in wanted:
        candidates = candidates[((candidates >> bit) & 1) == value]
    if candidates.size == 0:
        raise ValueError("no feasible assignment")
    cost = np.zeros(candidates.shape, dtype=float)
    for i in range(n):
        cost += instance.weights[i] * ((candidates >> i) & 1)
        cost += instance.attacks[i] * ((candidates >> (n + i)) & 1)
    cost += instance.gamma * ((candidates >> (2 * n)) & 1)
    best = int(candidates[int(np.argmin(cost))])
    disable = tuple((best >> i) & 1 for i in range(n))
    redirect = tuple((best >> (n + i)) & 1 for i in range(n))
    e = (best >> (2 * n)) & 1
    return PssaSolution(disable, e, redirect, objective(instance, disable, e, redirect))


def _enumerate_python(instance):
    n = instance.n
    best = None
    for bits in itertools.product((0, 1), repeat=2 * n + 1):
        disable, redirect, e = bits[:n], bits[n:2 * n], bits[2 * n]
        if not feasible(instance, disable, e, redirect):
            continue
        cost = objective(instance, disable, e, redirect)
        if best is None or cost < best.objective:
            best = PssaSolution(tuple(disable), e, tuple(redirect), cost)
    if best is None:
        raise ValueError("no feasible assignment")
    return best


def format_table(instance, solution):
    """Human-readable table of one solution."""
    rows = [f"{'IED':>4} {'weight':>8} {'A':>2} {'D':>2} {'F':>2} {'fixed':>6}"]
    for i in range(instance.n):
        rows.append(f"{i + 1:>4} {instance.weights[i]:>8g} {instance.attacks[i]:>2} "
                    f"{solution.disable[i]:>2} {solution.redirect[i]:>2} "
                    f"{'yes' if not instance.disableable[i] else 'no':>6}")
    rows.append(f"gamma={instance.gamma:g}  E={solution.cied}  objective={solution.objective:g}")
    return "\n".join(rows)

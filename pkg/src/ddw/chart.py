"""Jet-bundle coordinate charts.

A Chart is an ordered roster of concrete coordinates with roles: base x^mu,
fields y^A (multi-index fields are flattened to scalar coordinates labeled by
their index tuples), multivelocities y^A_mu and multimomenta p^mu_A.  The
same class describes J1E (velocities, no momenta), J1E* (momenta, no
velocities) and the restricted momentum space P0 (a subset of momenta).
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .expr import BASE, FIELD, MOMENTUM, VELOCITY, Expr, ExprError, Sym

__all__ = ["FieldDecl", "Chart", "build_jet_chart", "holonomy_rules"]


class FieldDecl:
    """A field family ``name`` with concrete index ranges.

    ``ranges`` is a tuple of ``range`` objects; a scalar field has none.
    """

    def __init__(self, name: str, ranges: Sequence[range] = ()):
        self.name = name
        self.ranges = tuple(ranges)

    def index_tuples(self):
        if not self.ranges:
            return [()]
        return [tuple(t) for t in itertools.product(*self.ranges)]

    def __repr__(self):
        if not self.ranges:
            return self.name
        spans = ",".join(f"{r.start}..{r.stop - 1}" for r in self.ranges)
        return f"{self.name}[{spans}]"


class Chart:
    """Immutable coordinate roster with roles and an open-region certificate."""

    def __init__(self, m: int, base_name: str, field_decls: Sequence[FieldDecl],
                 velocities: bool, momenta: Sequence[Sym] | bool,
                 region: Mapping[Sym, Fraction] | None = None):
        if m < 1:
            raise ExprError("base dimension must be >= 1")
        self.m = m
        self.base_name = base_name
        self.field_decls = tuple(field_decls)
        self.base = tuple(Sym(BASE, base_name, (mu,)) for mu in range(m))
        fields = []
        seen = set()
        for decl in field_decls:
            for idx in decl.index_tuples():
                s = Sym(FIELD, decl.name, idx)
                if s in seen:
                    raise ExprError(f"duplicate coordinate {s.display()}")
                seen.add(s)
                fields.append(s)
        self.fields = tuple(fields)
        if velocities:
            self.velocities = tuple(
                Sym(VELOCITY, f.name, f.indices + (mu,))
                for f in self.fields for mu in range(m))
        else:
            self.velocities = ()
        if momenta is True:
            self.momenta = tuple(
                Sym(MOMENTUM, f.name, f.indices + (mu,))
                for f in self.fields for mu in range(m))
        elif momenta:
            self.momenta = tuple(momenta)
        else:
            self.momenta = ()
        self.coords = self.base + self.fields + self.velocities + self.momenta
        self.index = {c: i for i, c in enumerate(self.coords)}
        if len(self.index) != len(self.coords):
            raise ExprError("duplicate coordinate names in roster")
        self.region = dict(region or {})

    # -- structure -----------------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def fiber(self):
        return self.coords[self.m:]

    def velocity(self, field: Sym, mu: int) -> Sym:
        s = Sym(VELOCITY, field.name, field.indices + (mu,))
        if s not in self.index:
            raise ExprError(f"no velocity {s.display()} in chart")
        return s

    def momentum(self, field: Sym, mu: int) -> Sym:
        s = Sym(MOMENTUM, field.name, field.indices + (mu,))
        if s not in self.index:
            raise ExprError(f"no momentum {s.display()} in chart")
        return s

    def field_of(self, coord: Sym) -> Sym:
        if coord.rank not in (VELOCITY, MOMENTUM):
            raise ExprError(f"{coord.display()} has no underlying field")
        return Sym(FIELD, coord.name, coord.indices[:-1])

    def direction_of(self, coord: Sym) -> int:
        if coord.rank not in (VELOCITY, MOMENTUM):
            raise ExprError(f"{coord.display()} has no direction")
        return coord.indices[-1]

    def vel_pairs(self):
        """Velocity roster as (field, mu) pairs in roster order."""
        return [(self.field_of(v), self.direction_of(v))
                for v in self.velocities]

    def e(self, coord_or_index) -> Expr:
        c = coord_or_index if isinstance(coord_or_index, Sym) \
            else self.coords[coord_or_index]
        return Expr.from_sym(c)

    def dual(self, p0_momenta: Sequence[Sym] | None = None,
             region: Mapping | None = None) -> "Chart":
        """The multimomentum chart J1E* (or P0 for a momentum subset)."""
        return Chart(self.m, self.base_name, self.field_decls,
                     velocities=False,
                     momenta=True if p0_momenta is None else tuple(p0_momenta),
                     region=region if region is not None else self.region)

    def region_point(self, rng=None, jitter: float = 0.0) -> dict:
        """Region certificate as a float point over all chart coordinates.

        Unlisted coordinates default to 0; optional jitter perturbs every
        coordinate.  Region entries keyed by non-coordinate symbols
        (parameters such as a tension) pass through unjittered.
        """
        pt = {}
        for c in self.coords:
            v = float(self.region.get(c, 0.0))
            if jitter and rng is not None:
                v += rng.uniform(-jitter, jitter)
            pt[c] = v
        for k, v in self.region.items():
            if k not in self.index:
                pt[k] = float(v)
        return pt

    def __repr__(self):
        return (f"Chart(m={self.m}, fields={len(self.fields)}, "
                f"vel={len(self.velocities)}, mom={len(self.momenta)})")


def build_jet_chart(m: int, field_decls: Sequence[FieldDecl],
                    base_name: str = "x",
                    region: Mapping | None = None) -> Chart:
    """First-order jet chart J1E: dim = m + n + n*m."""
    return Chart(m, base_name, field_decls, velocities=True, momenta=(),
                 region=region)


def holonomy_rules(chart: Chart, ansatz) -> dict:
    """Map each first-order unknown coefficient to its velocity coordinate.

    ``ansatz`` is a MultiVectorAnsatz built over ``chart``; only unknowns
    attached to field directions are holonomic targets.
    """
    if ansatz.chart is not chart:
        raise ExprError("ansatz was built over a different chart")
    rules = {}
    for (mu, coord), u in ansatz.unknowns.items():
        if coord.rank == FIELD:
            rules[u] = Expr.from_sym(chart.velocity(coord, mu))
    return rules

"""Legendre map, primary constraints, restricted momentum space and the
De Donder-Weyl Hamiltonian.

Base and field coordinates are shared symbols between a jet chart and its
dual, so expressions in (x, y) move between the two sides freely; only
velocities and momenta are translated explicitly.

The momentum-relation splitting uses the affine-unit-coefficient rule: a
velocity counts as solved when its defining relation is affine in it with a
rational coefficient of magnitude one.  Relations that still contain
velocities but cannot be solved this way raise MixedMomentumRelation.
Regular systems bypass the splitting through a theory-supplied closed-form
inverse map.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Sequence

from .chart import Chart
from .exterior import DiffForm, d_coord, exterior_derivative, volume_basis, wedge
from .expr import (Expr, ExprError, MOMENTUM, Sym, VELOCITY,
                   is_zero as expr_is_zero)
from .lagrangian import LagrangianSystem, hessian
from . import linalg

__all__ = ["MixedMomentumRelation", "LegendreData", "HamiltonianSystem",
           "legendre_expressions", "build_legendre", "ddw_hamiltonian",
           "hamilton_cartan_forms", "verify_prop1", "Prop1Report"]


class MixedMomentumRelation(ExprError):
    """Momentum relation neither velocity-free nor affine-unit solvable."""


def legendre_expressions(system: LagrangianSystem) -> dict:
    """FL* p^mu_A = dL/dv^A_mu, keyed by the dual-chart momentum symbol."""
    chart = system.chart
    table = {}
    for f in chart.fields:
        for mu in range(chart.m):
            p = Sym(MOMENTUM, f.name, f.indices + (mu,))
            table[p] = system.L.derivative(chart.velocity(f, mu))
    return table


class LegendreData:
    """Momentum table split into a solved block and primary constraints."""

    def __init__(self, system: LagrangianSystem,
                 inverse_map: Mapping[Sym, Expr] | None = None):
        self.system = system
        chart = system.chart
        self.table = legendre_expressions(system)
        # pullback rules FL*: momentum symbol -> expression on J1E
        self.pullback = dict(self.table)
        self.primaries: list[Expr] = []
        self.primary_rules: dict[Sym, Expr] = {}
        self.solved: dict[Sym, Expr] = {}
        self.kept_momenta: list[Sym] = []
        self.eliminated_velocities: list[Sym] = []
        if inverse_map is not None:
            # regular route: all velocities solved by the closed-form inverse
            self.solved = dict(inverse_map)
            self.kept_momenta = list(self.table)
            self._verify_inverse_consistency()
        else:
            self._split_relations()
        self.p0_chart = chart.dual(self.kept_momenta,
                                   region=self._dual_region())
        self._verify_primaries_pull_back_to_zero()

    # -- construction parts --------------------------------------------------

    def _split_relations(self):
        chart = self.system.chart
        pending = []
        for p, F in self.table.items():
            vel_deps = [v for v in chart.velocities if F.depends_on(v)]
            if not vel_deps:
                self.primaries.append(Expr.from_sym(p) - F)
                self.primary_rules[p] = F
                continue
            cand = None
            for v in vel_deps:
                c = F.derivative(v)
                if c.is_rational() and abs(c.rational_value()) == 1 \
                        and not c.is_zero():
                    cand = (v, c.rational_value())
                    break
            if cand is None:
                raise MixedMomentumRelation(
                    f"relation for {p.display()} = {F.display()} is outside "
                    "the affine-unit-coefficient class")
            v, c = cand
            rest = F - Expr.from_sym(v) * Expr.from_rational(c)
            if rest.depends_on(v):
                raise MixedMomentumRelation(
                    f"relation for {p.display()} is not affine in "
                    f"{v.display()}")
            # v = (p - rest)/c
            pending.append((v, (Expr.from_sym(p) - rest)
                            * Expr.from_rational(Fraction(1, 1) / c)))
            self.kept_momenta.append(p)
        solved = dict(pending)
        # triangularize: solved velocities may reference other solved ones
        for _ in range(len(solved) + 1):
            changed = False
            for v, e in list(solved.items()):
                ne = e.substitute({w: solved[w] for w in solved if w != v
                                   and e.depends_on(w)})
                if not (ne - e).is_zero():
                    solved[v] = ne
                    changed = True
            if not changed:
                break
        else:
            raise MixedMomentumRelation("cyclic solved-velocity relations")
        for v, e in solved.items():
            for w in solved:
                if e.depends_on(w):
                    raise MixedMomentumRelation(
                        "solved block failed to triangularize")
        self.solved = solved
        self.eliminated_velocities = [
            v for v in self.system.chart.velocities if v not in solved]
        # back-substitution check: FL*(solved expression) equals the velocity
        for v, e in solved.items():
            if not expr_is_zero(e.substitute(self.pullback)
                                - Expr.from_sym(v)):
                raise MixedMomentumRelation(
                    f"solved velocity {v.display()} fails back-substitution")

    def _verify_inverse_consistency(self):
        # spot check left to numeric tests; symbolic identity FL* inverse = v
        for v, e in self.solved.items():
            pulled = e.substitute(self.pullback)
            if not expr_is_zero(pulled - Expr.from_sym(v)):
                raise MixedMomentumRelation(
                    f"closed-form inverse for {v.display()} is not a left "
                    "inverse of the Legendre map")

    def _verify_primaries_pull_back_to_zero(self):
        for z in self.primaries:
            if not expr_is_zero(z.substitute(self.pullback)):
                raise ExprError("primary constraint fails FL* zeta = 0")

    def _dual_region(self):
        """Region certificate transported through the Legendre map."""
        src = self.system.chart.region_point()
        out = {}
        for c in self.system.chart.base + self.system.chart.fields:
            out[c] = src[c]
        for p in self.kept_momenta:
            out[p] = self.table[p].eval_numeric(src)
        return out

    # -- convenience ----------------------------------------------------------

    def momentum_substitution(self) -> dict:
        """Rules rewriting solved velocities as momentum expressions."""
        return dict(self.solved)

    def pullback_expr(self, e: Expr) -> Expr:
        """FL* of an expression on the dual side."""
        return e.substitute(self.pullback)

    def constraint_rules(self) -> dict:
        """Primary constraints as substitution rules p -> f(x, y)."""
        return dict(self.primary_rules)


def build_legendre(system: LagrangianSystem,
                   inverse_map: Mapping[Sym, Expr] | None = None
                   ) -> LegendreData:
    return LegendreData(system, inverse_map)


def ddw_hamiltonian(legendre: LegendreData) -> Expr:
    """H0 on P0 with E_L = FL0* H0; certifies velocity independence."""
    system = legendre.system
    h = system.energy.substitute(legendre.momentum_substitution())
    for v in system.chart.velocities:
        if h.depends_on(v):
            raise ExprError(
                f"Hamiltonian retains velocity {v.display()}: the system is "
                "not almost-regular under the solved block")
    return h


class HamiltonianSystem:
    """H and the Hamilton-Cartan forms on P0 (or full J1E* when regular)."""

    def __init__(self, legendre: LegendreData, h: Expr | None = None):
        self.legendre = legendre
        self.chart = legendre.p0_chart
        self.h = ddw_hamiltonian(legendre) if h is None else h
        self.theta, self.omega, self.omega_tilde, self.alpha_part = \
            hamilton_cartan_forms(self.h, self.chart, legendre)

    def check_splitting(self) -> bool:
        direct = -exterior_derivative(self.theta)
        return direct.equals(self.omega) and \
            self.omega.equals(self.omega_tilde + self.alpha_part)


def hamilton_cartan_forms(h: Expr, p0: Chart, legendre: LegendreData | None):
    """Theta_H = P^nu_A dy^A ^ d^{m-1}x_nu - H d^m x on the given chart.

    P^nu_A is the momentum coordinate when kept, otherwise the solved
    expression from the primary constraints.
    """
    vb = volume_basis(p0)
    rules = legendre.constraint_rules() if legendre is not None else {}
    theta_tilde = DiffForm.zero(p0, p0.m)
    for f in p0.fields:
        for nu in range(p0.m):
            p = Sym(MOMENTUM, f.name, f.indices + (nu,))
            if p in p0.index:
                coeff = Expr.from_sym(p)
            else:
                coeff = rules.get(p, Expr.zero())
            if coeff.is_zero():
                continue
            theta_tilde = theta_tilde + wedge(d_coord(p0, f),
                                              vb.dm1(nu)) * coeff
    theta = theta_tilde + vb.top * (-h)
    omega_tilde = -exterior_derivative(theta_tilde)
    alpha_part = wedge(exterior_derivative(DiffForm.function(p0, h)), vb.top)
    omega = omega_tilde + alpha_part
    return theta, omega, omega_tilde, alpha_part


class Prop1Report:
    """Per-primary-constraint kernel vectors and their checks."""

    def __init__(self):
        self.rows = []  # (constraint Expr, gamma vector, annihilates, in_kernel)
        self.spans_nullspace = None

    def all_pass(self) -> bool:
        return all(r[2] for r in self.rows)


def verify_prop1(legendre: LegendreData, nullspace_basis) -> Prop1Report:
    """gamma_i = FL*(d zeta_i/dp) annihilates the Hessian and (together)
    spans the Hessian nullspace."""
    system = legendre.system
    chart = system.chart
    H = hessian(chart, system.L)
    vels = chart.velocities
    report = Prop1Report()
    gammas = []
    for zeta in legendre.primaries:
        gamma = []
        for v in vels:
            f = chart.field_of(v)
            mu = chart.direction_of(v)
            p = Sym(MOMENTUM, f.name, f.indices + (mu,))
            gamma.append(legendre.pullback_expr(zeta.derivative(p)))
        annihilates = all(
            expr_is_zero(sum((H[i][j] * gamma[j] for j in range(len(vels))),
                             Expr.zero()))
            for i in range(len(vels)))
        in_kernel = linalg.in_span(gamma, nullspace_basis) \
            if nullspace_basis else all(g.is_zero() for g in gamma)
        report.rows.append((zeta, gamma, annihilates, in_kernel))
        gammas.append(gamma)
    if nullspace_basis:
        report.spans_nullspace = all(
            linalg.in_span(b, gammas) for b in nullspace_basis)
    return report

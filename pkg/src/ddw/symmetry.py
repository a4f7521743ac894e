"""Symmetry generators: canonical lifts, Noether classification, covariant
momentum maps, Legendre pushforward and the Killing gate for isometries.

Generators may be given on the configuration level (base + field components,
lifted here by jet prolongation) or directly on the jet chart when they are
not projectable onto E (the paper's scalar-theory boosts).  Momentum maps
are J = -i(X) Theta with the exact-form ambiguities fixed to zero.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .chart import Chart
from .constraints import ConstraintChain
from .exterior import (DiffForm, VectorField, contract, d_coord,
                       exterior_derivative, lie_derivative, volume_basis,
                       wedge)
from .expr import BASE, FIELD, Expr, ExprError, Sym, is_zero as expr_is_zero
from .legendre import LegendreData

__all__ = ["SymmetryGenerator", "NotProjectable", "canonical_lift",
           "symmetry_check", "SymmetryReport", "momentum_map",
           "momentum_map_check", "legendre_pushforward", "killing_check",
           "restrict_to_chain", "pullback_to_chain"]


class NotProjectable(ExprError):
    def __init__(self, message, offenders):
        super().__init__(message)
        self.offenders = offenders


class SymmetryGenerator:
    """A named generator: either configuration-level components or a direct
    jet-chart vector field."""

    def __init__(self, name: str, chart: Chart,
                 on_e: Mapping[Sym, Expr] | None = None,
                 direct: VectorField | None = None):
        self.name = name
        self.chart = chart
        self.on_e = dict(on_e or {})
        self.direct = direct
        if on_e is not None and direct is not None:
            raise ExprError("give configuration components or a direct "
                            "vector field, not both")

    def vector_field(self) -> VectorField:
        if self.direct is not None:
            return self.direct
        return canonical_lift(self.chart, self.on_e)


def _total_derivative(chart: Chart, f: Expr, mu: int) -> Expr:
    """D_mu f = d_mu f + y^B_mu dB f for f = f(x, y)."""
    out = f.derivative(chart.base[mu])
    for b in chart.fields:
        df = f.derivative(b)
        if not df.is_zero():
            out = out + Expr.from_sym(chart.velocity(b, mu)) * df
    return out


def canonical_lift(chart: Chart, on_e: Mapping[Sym, Expr]) -> VectorField:
    """Jet prolongation of Z = Z^mu d_mu + Z^A d_A to J1E.

    Velocity components are D_mu(Z^A) - y^A_nu D_mu(Z^nu); the input must
    only carry base/field components whose coefficients live on E.
    """
    comp: dict[int, Expr] = {}
    for c, e in on_e.items():
        if c.rank not in (BASE, FIELD):
            raise ExprError(
                f"canonical lift needs an E-level generator; got a component "
                f"along {c.display()}")
        for g in e.generators():
            if g.rank in (2, 3):
                raise ExprError(
                    f"component along {c.display()} depends on "
                    f"{g.display()}, so the generator does not project to E")
        if not e.is_zero():
            comp[chart.index[c]] = e
    for f in chart.fields:
        zf = on_e.get(f, Expr.zero())
        for mu in range(chart.m):
            lifted = _total_derivative(chart, zf, mu)
            for nu in range(chart.m):
                znu = on_e.get(chart.base[nu], Expr.zero())
                if znu.is_zero():
                    continue
                lifted = lifted - Expr.from_sym(chart.velocity(f, nu)) * \
                    _total_derivative(chart, znu, mu)
            if not lifted.is_zero():
                comp[chart.index[chart.velocity(f, mu)]] = lifted
    return VectorField(chart, comp)


def restrict_to_chain(X: VectorField, chain: ConstraintChain) -> VectorField:
    """Local extension of X|_S: components reduced modulo the chain rules."""
    return X.substitute(chain.rules)


def pullback_to_chain(form: DiffForm, chain: ConstraintChain) -> DiffForm:
    """Pullback along the inclusion of the constraint submanifold.

    Coefficients are reduced by the chain rules and each pivoted coordinate
    differential is replaced by d(rhs).
    """
    if not chain.rules:
        return form
    chart = form.chart
    out = DiffForm.zero(chart, form.degree)
    for idx, coeff in form.table.items():
        term = DiffForm.function(chart, coeff.substitute(chain.rules))
        for j in idx:
            coord = chart.coords[j]
            if coord in chain.rules:
                rhs = chain.rules[coord]
                dz = DiffForm.zero(chart, 1)
                for i2, c2 in enumerate(chart.coords):
                    d = rhs.derivative(c2)
                    if not d.is_zero():
                        dz = dz + DiffForm(chart, 1, {(i2,): d})
            else:
                dz = d_coord(chart, coord)
            term = wedge(term, dz)
        out = out + term
    return out


class SymmetryReport:
    def __init__(self, name, lie_density, lie_theta, lie_omega,
                 lie_theta_reduced, tangent, classification):
        self.name = name
        self.lie_density = lie_density
        self.lie_theta = lie_theta
        self.lie_omega = lie_omega
        self.lie_theta_reduced = lie_theta_reduced
        self.tangent = tangent
        self.classification = classification


def symmetry_check(X: VectorField, theta: DiffForm, omega: DiffForm,
                   density: DiffForm | None = None,
                   chain: ConstraintChain | None = None,
                   name: str = "") -> SymmetryReport:
    """Classify the generator: exact / exact-on-submanifold / omega-only /
    none; also reports tangency to the supplied constraint submanifold."""
    lie_density = lie_derivative(X, density) if density is not None else None
    lie_theta = lie_derivative(X, theta)
    lie_omega = lie_derivative(X, omega)
    reduced = pullback_to_chain(lie_theta, chain) if chain is not None \
        else lie_theta
    tangent = None
    if chain is not None:
        tangent = all(expr_is_zero(chain.reduce(X.apply(c.expr)))
                      for c in chain.all())
    if lie_theta.is_zero():
        classification = "exact"
    elif chain is not None and reduced.is_zero():
        classification = "exact-on-submanifold"
    elif lie_omega.is_zero():
        classification = "multisymplectic-only"
    else:
        classification = "none"
    return SymmetryReport(name, lie_density, lie_theta, lie_omega, reduced,
                          tangent, classification)


def momentum_map(X: VectorField, theta: DiffForm,
                 chain: ConstraintChain | None = None) -> DiffForm:
    """J = -i(X) Theta, reduced modulo the chain when a domain is given."""
    j = -contract(X, theta)
    if chain is not None:
        j = j.substitute(chain.rules)
    return j


def momentum_map_check(X: VectorField, j: DiffForm, omega: DiffForm,
                       chain: ConstraintChain | None = None) -> bool:
    """dJ + i(X) Omega = 0 (pulled back to the submanifold when given)."""
    resid = exterior_derivative(j) + contract(X, omega)
    if chain is not None:
        resid = pullback_to_chain(resid, chain)
    return resid.is_zero()


def legendre_pushforward(X: VectorField, legendre: LegendreData,
                         chain: ConstraintChain | None = None
                         ) -> VectorField:
    """Y = FL_* X on P0 (or J1E* in the regular case).

    Components are X applied to the pulled-back coordinates, restricted to
    the chain when given, then rewritten through the solved velocity block;
    any residual dependence on an eliminated velocity is a projectability
    failure and is reported with the offenders.
    """
    p0 = legendre.p0_chart
    jet = legendre.system.chart
    solved = legendre.momentum_substitution()
    comp: dict[int, Expr] = {}
    offenders: list[tuple[Sym, Sym]] = []
    for c in p0.coords:
        if c.rank == 3:  # momentum: pull back through the Legendre map
            target = legendre.pullback[c]
        else:
            target = Expr.from_sym(c)
        e = X.apply(target)
        if chain is not None:
            e = chain.reduce(e)
        e = e.substitute(solved)
        for v in legendre.eliminated_velocities:
            if e.depends_on(v):
                offenders.append((c, v))
        if not e.is_zero():
            comp[p0.index[c]] = e
    if offenders:
        msg = "; ".join(f"component along {c.display()} retains "
                        f"{v.display()}" for c, v in offenders)
        raise NotProjectable(f"not FL-projectable: {msg}", offenders)
    return VectorField(p0, comp)


def killing_check(zeta: Mapping[Sym, Expr], metric: Mapping[tuple, Expr],
                  target_coords: Sequence[Sym]) -> bool:
    """L_zeta G = 0: zeta^rho d_rho G_{mu nu} + G_{rho nu} d_mu zeta^rho
    + G_{mu rho} d_nu zeta^rho, tested symbolically for every mu <= nu."""
    n = len(target_coords)

    def G(a, b):
        return metric.get((a, b), metric.get((b, a), Expr.zero()))

    for mu in range(n):
        for nu in range(mu, n):
            acc = Expr.zero()
            for rho in range(n):
                zr = zeta.get(target_coords[rho], Expr.zero())
                acc = acc + zr * G(mu, nu).derivative(target_coords[rho])
                acc = acc + G(rho, nu) * zr.derivative(target_coords[mu])
                acc = acc + G(mu, rho) * zr.derivative(target_coords[nu])
            if not expr_is_zero(acc):
                return False
    return True

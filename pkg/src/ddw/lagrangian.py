"""Poincare-Cartan data of a first-order Lagrangian on a jet chart.

Builds the energy, the m- and (m+1)-forms, the splitting into the
d-coefficient part and the dE ^ volume part, the multi-Hessian over
(field, direction) pairs, its nullspace and the regularity verdict.
"""

from __future__ import annotations

import random
from typing import Sequence

from .chart import Chart
from .exterior import (DiffForm, VectorField, contract, d_coord,
                       exterior_derivative, volume_basis, wedge)
from .expr import Expr, ExprError, is_zero as expr_is_zero
from . import linalg

__all__ = ["LagrangianSystem", "lagrangian_energy", "poincare_cartan_forms",
           "hessian", "hessian_nullspace", "classify_regularity",
           "Regularity"]


def lagrangian_energy(chart: Chart, L: Expr) -> Expr:
    """E_L = dL/dv^A_mu * v^A_mu - L."""
    for g in L.generators():
        if g.rank <= 3 and g not in chart.index:  # coordinate-ranked symbols
            raise ExprError(f"{g.display()} is not a coordinate of this chart")
    out = -L
    for v in chart.velocities:
        out = out + L.derivative(v) * Expr.from_sym(v)
    return out


def poincare_cartan_forms(chart: Chart, L: Expr):
    """(Theta_L, Omega_L, Omega_tilde_L, dE^d^mx); Omega = -d Theta."""
    vb = volume_basis(chart)
    energy = lagrangian_energy(chart, L)
    theta_tilde = DiffForm.zero(chart, chart.m)
    for f in chart.fields:
        for mu in range(chart.m):
            p = L.derivative(chart.velocity(f, mu))
            if p.is_zero():
                continue
            theta_tilde = theta_tilde + wedge(d_coord(chart, f),
                                              vb.dm1(mu)) * p
    theta = theta_tilde + vb.top * (-energy)
    omega_tilde = -exterior_derivative(theta_tilde)
    alpha_part = wedge(exterior_derivative(DiffForm.function(chart, energy)),
                       vb.top)
    omega = omega_tilde + alpha_part
    return theta, omega, omega_tilde, alpha_part, energy


class LagrangianSystem:
    """A Lagrangian with its chart and all derived Poincare-Cartan objects."""

    def __init__(self, chart: Chart, L: Expr):
        self.chart = chart
        self.L = L
        (self.theta, self.omega, self.omega_tilde, self.alpha_part,
         self.energy) = poincare_cartan_forms(chart, L)

    def density(self) -> DiffForm:
        """The Lagrangian density L d^m x."""
        return volume_basis(self.chart).top * self.L

    def check_splitting(self) -> bool:
        """Omega == Omega_tilde + dE ^ d^m x and Omega == -d Theta, slotwise."""
        direct = -exterior_derivative(self.theta)
        return direct.equals(self.omega) and \
            self.omega.equals(self.omega_tilde + self.alpha_part)

    def hessian(self):
        return hessian(self.chart, self.L)

    def __repr__(self):
        return f"LagrangianSystem(m={self.chart.m})"


def hessian(chart: Chart, L: Expr):
    """d^2 L / dv^A_mu dv^B_nu over the velocity roster (field-major)."""
    vels = chart.velocities
    firsts = [L.derivative(v) for v in vels]
    return [[firsts[i].derivative(v2) for v2 in vels]
            for i in range(len(vels))]


def hessian_nullspace(H: Sequence[Sequence[Expr]]):
    """Basis vectors annihilating H, first nonzero entry scaled to 1."""
    n = len(H)
    if n == 0:
        return []
    return linalg.nullspace(H, n)


class Regularity:
    def __init__(self, regular: bool, evidence: str, nullspace_basis):
        self.regular = regular
        self.evidence = evidence
        self.nullspace_basis = nullspace_basis

    def __repr__(self):
        return f"{'regular' if self.regular else 'singular'} ({self.evidence})"


def _fd_hessian_rank(system: LagrangianSystem) -> int:
    """Numeric rank at the region certificate via central differences of the
    symbolic first derivatives (avoids building n^2 symbolic entries)."""
    import numpy as np
    chart = system.chart
    vels = chart.velocities
    firsts = [system.L.derivative(v) for v in vels]
    point = chart.region_point()
    h = 1e-5
    rows = []
    for f in firsts:
        row = []
        for v in vels:
            up = dict(point)
            dn = dict(point)
            up[v] += h
            dn[v] -= h
            row.append((f.eval_numeric(up) - f.eval_numeric(dn)) / (2 * h))
        rows.append(row)
    m = np.array(rows)
    return int(np.linalg.matrix_rank(m, tol=1e-6))


def classify_regularity(system: LagrangianSystem,
                        rng: random.Random | None = None) -> Regularity:
    """Regular iff the multi-Hessian has trivial kernel on the region.

    A full-rank numeric sample at the region certificate decides the regular
    case (finite differences of the symbolic momenta); otherwise the
    symbolic nullspace provides the evidence.
    """
    n = len(system.chart.velocities)
    if n == 0:
        return Regularity(True, "no velocities", [])
    rank = _fd_hessian_rank(system)
    if rank == n:
        return Regularity(
            True, f"numeric rank {rank}/{n} at region certificate", [])
    H = system.hessian()
    basis = hessian_nullspace(H)
    if basis:
        return Regularity(False, f"nullspace dimension {len(basis)}", basis)
    return Regularity(True, "symbolically trivial nullspace", [])

"""Premultisymplectic constraint algorithm over multivector-field ansatzes.

The pipeline per side:

1. build the normalized transverse ansatz X_mu = d_mu + (unknown) d_fiber;
2. expand i(X)Omega = 0 into one equation per surviving 1-form slot; fiber
   slots are linear in the unknowns, base (dx^lambda) slots are quadratic
   but are identically the combination -sum_c X_lambda^c (fiber slot c), a
   fact this module verifies rather than assumes;
3. eliminate unknowns deterministically (constant pivots first; rows whose
   candidate pivots are all non-constant are deferred and certified
   constraint-free by a numeric full-row-rank check at the region point,
   falling back to certified symbolic pivots otherwise);
4. Lagrangian side: impose the holonomy condition and re-eliminate; residual
   unknown-free nonzero rows are the second-order-equation constraints;
5. iterate tangency of the solution components to the accumulated chain.

Constraints are turned into substitution rules by solving for the latest
roster coordinate carrying a unit rational coefficient; non-solvable
constraints are kept as side relations and flagged.
"""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .chart import Chart, holonomy_rules
from .exterior import (DiffForm, MultiVector, VectorField, contract,
                       volume_basis)
from .expr import (BASE, Expr, ExprError, PARAM, ParamFn, Sym, UNKNOWN,
                   is_zero as expr_is_zero, unknown)
from . import linalg

__all__ = [
    "COMPATIBILITY", "SOPDE", "TANGENCY",
    "MultiVectorAnsatz", "CoefficientSystem", "Constraint", "ConstraintChain",
    "build_ansatz", "field_equation_system", "kernel_compatibility_check",
    "KernelCheck", "run_constraint_algorithm", "AlgorithmResult",
    "extract_field_equations", "GenerationLimit", "impose_sopde",
    "lemma_semibasic_residual",
]

COMPATIBILITY, SOPDE, TANGENCY = "compatibility", "sopde", "tangency"


class GenerationLimit(ExprError):
    """The chain kept producing generations past the configured limit."""


class MultiVectorAnsatz:
    """X_mu = d/dx^mu + sum_c u_{mu,c} d/dc with i(X) d^m x = 1."""

    def __init__(self, chart: Chart, side: str):
        if side not in ("lagrangian", "hamiltonian"):
            raise ExprError(f"unknown side {side!r}")
        if side == "lagrangian" and not chart.velocities:
            raise ExprError("lagrangian ansatz needs a jet chart")
        if side == "hamiltonian" and chart.velocities:
            raise ExprError("hamiltonian ansatz runs on a momentum chart")
        self.chart = chart
        self.side = side
        self.unknowns: dict[tuple[int, Sym], Sym] = {}
        self.label: dict[Sym, tuple[int, Sym]] = {}
        for mu in range(chart.m):
            for c in chart.fiber:
                u = unknown(mu, chart.index[c])
                self.unknowns[(mu, c)] = u
                self.label[u] = (mu, c)

    def factor(self, mu: int, values: Mapping[Sym, Expr] | None = None
               ) -> VectorField:
        comp = {mu: Expr.one()}
        for c in self.chart.fiber:
            u = self.unknowns[(mu, c)]
            e = values.get(u, Expr.from_sym(u)) if values else Expr.from_sym(u)
            if not e.is_zero():
                comp[self.chart.index[c]] = e
        return VectorField(self.chart, comp)

    def multivector(self, values=None) -> MultiVector:
        return MultiVector([self.factor(mu, values)
                            for mu in range(self.chart.m)])

    def transverse_normalized(self) -> bool:
        vb = volume_basis(self.chart)
        f = contract(self.multivector(), vb.top)
        return (f - DiffForm.function(self.chart, Expr.one())).is_zero()

    def pretty(self, u: Sym) -> str:
        mu, c = self.label[u]
        return f"X{mu}[{c.display()}]"


def build_ansatz(chart: Chart, side: str) -> MultiVectorAnsatz:
    return MultiVectorAnsatz(chart, side)


class Equation:
    __slots__ = ("slot", "kind", "expr")

    def __init__(self, slot: Sym, kind: str, expr: Expr):
        self.slot = slot          # the 1-form basis coordinate dz_slot
        self.kind = kind          # "fiber" | "base"
        self.expr = expr


def ansatz_contraction(omega: DiffForm, ansatz: MultiVectorAnsatz) -> dict:
    """i(X_0 ^ .. ^ X_{m-1}) omega for the transverse-normalized ansatz.

    Equivalent to the generic iterated contraction (asserted in the test
    suite) but assembled slotwise: the m x m component minors collapse over
    the delta base rows, so each omega slot contributes a handful of
    unknown-coefficient products instead of an intermediate form tower.
    """
    from .expr import ExprAccumulator
    from itertools import permutations
    chart = ansatz.chart
    m = chart.m
    out: dict[int, ExprAccumulator] = {}
    for J, coeff in omega.table.items():
        for k, jk in enumerate(J):
            rest = J[:k] + J[k + 1:]
            base_rows = [z for z in rest if z < m]
            fiber_rows = [z for z in rest if z >= m]
            if len(set(base_rows)) != len(base_rows):
                continue
            free_cols = [a for a in range(m) if a not in base_rows]
            if len(free_cols) != len(fiber_rows):
                continue
            acc = out.setdefault(jk, ExprAccumulator())
            outer_sign = (-1) ** (m + k)
            for perm in permutations(free_cols):
                cols = {z: z for z in base_rows}
                cols.update({f: c for f, c in zip(fiber_rows, perm)})
                order = [cols[z] for z in rest]
                sign = _perm_parity(order) * outer_sign
                term = coeff * Expr.from_rational(sign)
                for f, c in zip(fiber_rows, perm):
                    u = ansatz.unknowns[(c, chart.coords[f])]
                    term = term * Expr.from_sym(u)
                acc.add(term)
    return {j: a.total() for j, a in out.items()}


def _perm_parity(order) -> int:
    seen = [False] * len(order)
    pos = {c: i for i, c in enumerate(sorted(order))}
    perm = [pos[c] for c in order]
    sign = 1
    for s in range(len(perm)):
        if seen[s]:
            continue
        j, length = s, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


class CoefficientSystem:
    """Slotwise equations of i(X)Omega = 0 with provenance."""

    def __init__(self, ansatz: MultiVectorAnsatz, omega: DiffForm):
        if omega.degree != ansatz.chart.m + 1:
            raise ExprError("field-equation form must have degree m+1")
        self.ansatz = ansatz
        self.omega = omega
        table = ansatz_contraction(omega, ansatz)
        chart = ansatz.chart
        self.equations: list[Equation] = []
        for j in sorted(table):
            expr = table[j]
            if expr.is_zero():
                continue
            coord = chart.coords[j]
            kind = "base" if coord.rank == BASE else "fiber"
            eq = Equation(coord, kind, expr)
            if kind == "fiber" and _unknown_degree(eq.expr) > 1:
                raise ExprError(
                    "internal fault: fiber slot equation nonlinear in the "
                    "ansatz unknowns")
            self.equations.append(eq)

    def fiber(self):
        return [e for e in self.equations if e.kind == "fiber"]

    def base(self):
        return [e for e in self.equations if e.kind == "base"]


def _unknown_degree(e: Expr) -> int:
    deg = 0
    for mono in e.num:
        d = sum(exp for g, exp in mono if g.rank == UNKNOWN)
        deg = max(deg, d)
    return deg


def _unknowns_in(e: Expr):
    return sorted((g for g in e.generators() if g.rank == UNKNOWN),
                  key=lambda g: g.indices)


def field_equation_system(omega: DiffForm,
                          ansatz: MultiVectorAnsatz) -> CoefficientSystem:
    return CoefficientSystem(ansatz, omega)


class Constraint:
    def __init__(self, expr: Expr, klass: str, generation: int):
        self.expr = expr
        self.klass = klass
        self.generation = generation
        self.pivot: Sym | None = None
        self.rhs: Expr | None = None

    def display(self) -> str:
        return self.expr.display()


class ConstraintChain:
    """Generations of constraints with a composed triangular rule map."""

    def __init__(self, chart: Chart):
        self.chart = chart
        self.generations: list[list[Constraint]] = []
        self.rules: dict[Sym, Expr] = {}
        self.unsolved: list[Constraint] = []

    def all(self):
        return [c for gen in self.generations for c in gen]

    def reduce(self, e: Expr) -> Expr:
        return e.substitute(self.rules) if self.rules else e

    def add_generation(self, klass: str, candidates: Iterable[Expr]):
        """Reduce candidates modulo the chain, drop the implied, add the rest."""
        added: list[Constraint] = []
        gen_no = len(self.generations) + 1
        for raw in candidates:
            e = self.reduce(raw)
            if e.is_zero():
                continue
            if any(_proportional(e, c.expr) for c in added):
                continue
            con = Constraint(e, klass, gen_no)
            self._solve(con)
            added.append(con)
        if added:
            self.generations.append(added)
        return added

    def _solve(self, con: Constraint):
        """Solve for the latest roster coordinate with a unit coefficient."""
        for c in reversed(self.chart.coords):
            coeff = con.expr.derivative(c)
            if not coeff.is_rational():
                continue
            cv = coeff.rational_value()
            if abs(cv) != 1:
                continue
            rest = con.expr - Expr.from_sym(c) * coeff
            if rest.depends_on(c):
                continue
            rhs = rest * Expr.from_rational(-Fraction(1, 1) / cv)
            con.pivot, con.rhs = c, rhs
            # compose into the rule map
            for k in list(self.rules):
                if self.rules[k].depends_on(c):
                    self.rules[k] = self.rules[k].substitute({c: rhs})
            if rhs.depends_on(c):
                raise ExprError("cyclic constraint rule")
            self.rules[c] = rhs
            return
        self.unsolved.append(con)

    def summary(self):
        return [(c.klass, c.expr.display()) for c in self.all()]


def _proportional(a: Expr, b: Expr) -> bool:
    """a == q*b for a nonzero rational q (compares equations up to scale)."""
    if a.is_zero() or b.is_zero():
        return a.is_zero() and b.is_zero()
    ka = sorted(a.num, key=lambda m: str(m))
    kb = sorted(b.num, key=lambda m: str(m))
    if a.den != b.den:
        return False
    if [m for m in ka] != [m for m in kb]:
        return False
    q = None
    for m in ka:
        r = a.num[m] / b.num[m]
        if q is None:
            q = r
        elif q != r:
            return False
    return True


class Solver:
    """Deterministic elimination of ansatz unknowns from equation rows."""

    def __init__(self, ansatz: MultiVectorAnsatz, rows: Sequence[Equation],
                 chain: ConstraintChain, holonomy: Mapping[Sym, Expr] | None,
                 region_point):
        self.ansatz = ansatz
        self.chain = chain
        self.holonomy = dict(holonomy or {})
        self.region_point = region_point
        self.rows = [(eq, eq.expr) for eq in rows]
        self.pivots: dict[Sym, Expr] = {}
        self.pivot_source: dict[Sym, str] = {}
        self.identities: list[Equation] = []
        self.constraint_rows: list[Equation] = []
        self.unresolved: list[tuple[Equation, Expr]] = []
        self.pending: list[tuple[Equation, Expr]] = list(self.rows)
        self.scale = Expr.one()  # nonzero factor cleared from the equations

    def unscale(self, e: Expr) -> Expr:
        if self.scale == Expr.one():
            return e
        return e * self.scale.inverse("cleared denominator factor")

    # -- reduction ----------------------------------------------------------

    def reduce(self, e: Expr) -> Expr:
        sub = dict(self.holonomy)
        sub.update(self.pivots)
        out = e
        # substitution cascades: a pivot RHS may hold holonomy-covered
        # unknowns installed before the holonomy was imposed
        for _ in range(6):
            if not sub or not any(g in sub for g in out.generators()):
                break
            out = out.substitute(sub)
        return self.chain.reduce(out)

    def value(self, u: Sym) -> Expr:
        return self.reduce(Expr.from_sym(u))

    # -- elimination --------------------------------------------------------

    def _install(self, u: Sym, rhs: Expr, source: str):
        for k in list(self.pivots):
            if self.pivots[k].depends_on(u):
                self.pivots[k] = self.pivots[k].substitute({u: rhs})
        self.pivots[u] = rhs
        self.pivot_source[u] = source

    def _try_pivot(self, eq: Equation, e: Expr) -> bool:
        us = _unknowns_in(e)
        pivot = coeff = None
        for u in us:
            c = e.derivative(u)
            if c.is_rational() and not c.is_zero():
                pivot, coeff = u, c
                break
        if pivot is None:
            return False
        rest = e - Expr.from_sym(pivot) * coeff
        rhs = -rest * coeff.inverse("rational pivot coefficient")
        self._install(pivot, rhs, eq.slot.display())
        return True

    def _try_generic_pivot(self, eq: Equation, e: Expr) -> bool:
        for u in _unknowns_in(e):
            c = e.derivative(u)
            if expr_is_zero(c):
                continue
            rest = e - Expr.from_sym(u) * c
            if rest.depends_on(u):
                continue
            rhs = -rest * c.inverse("is_zero-certified pivot coefficient")
            self._install(u, rhs, eq.slot.display())
            return True
        return False

    def run(self, klass: str, allow_generic: bool = True) -> list[Expr]:
        """Eliminate until fixpoint; returns constraints found (already
        reduced modulo the chain, NOT yet added to it)."""
        found: list[Expr] = []
        progress = True
        while progress:
            progress = False
            nxt: list[tuple[Equation, Expr]] = []
            for eq, raw in self.pending:
                e = self.reduce(raw)
                if e.is_zero():
                    self.identities.append(eq)
                    progress = True
                    continue
                if not _unknowns_in(e):
                    found.append(self.unscale(e))
                    self.constraint_rows.append(eq)
                    progress = True
                    continue
                if _unknown_degree(e) == 1 and self._try_pivot(eq, e):
                    progress = True
                    continue
                nxt.append((eq, e))
            self.pending = nxt
            if found:
                # a fresh constraint invalidates reductions: the caller must
                # add it to the chain before calling run again
                break
        if not found:
            self._finish_deferred(allow_generic)
        return found

    def _finish_deferred(self, allow_generic: bool):
        """Rows with only non-constant pivot candidates: certify that no
        constraint hides in them (numeric full row rank), else pivot with
        certified coefficients."""
        linear = [(eq, e) for eq, e in self.pending
                  if _unknown_degree(e) == 1]
        if not linear:
            return
        cols = sorted({u for _, e in linear for u in _unknowns_in(e)},
                      key=lambda g: g.indices)
        rows = [[e.derivative(u) for u in cols] for _, e in linear]
        try:
            rank = linalg.numeric_rank(rows, self.region_point)
        except Exception:
            rank = -1
        if rank == len(linear):
            taken = {id(eq) for eq, _ in linear}
            self.unresolved.extend(linear)
            self.pending = [(eq, e) for eq, e in self.pending
                            if id(eq) not in taken]
            return
        if not allow_generic:
            self.unresolved.extend(linear)
            self.pending = []
            return
        progress = True
        while progress:
            progress = False
            nxt = []
            for eq, raw in self.pending:
                e = self.reduce(raw)
                if e.is_zero():
                    self.identities.append(eq)
                    continue
                if _unknown_degree(e) == 1 and self._try_generic_pivot(eq, e):
                    progress = True
                    continue
                nxt.append((eq, e))
            self.pending = nxt
        self.unresolved.extend(self.pending)
        self.pending = []

    def holonomy_shortcut(self) -> bool:
        """Lagrangian pre-step: when every row whose unknowns are all
        first-order vanishes under the holonomy substitution and the
        corresponding Jacobian has full column rank at the region point, the
        holonomy values are the unique solution of that subsystem."""
        holo = holonomy_rules(self.ansatz.chart, self.ansatz)
        first_rows = []
        for eq, e in self.pending:
            us = _unknowns_in(e)
            if us and all(u in holo for u in us):
                first_rows.append((eq, e, us))
        if not first_rows:
            return False
        for _, e, _ in first_rows:
            if not expr_is_zero(self.chain.reduce(e.substitute(holo))):
                return False
        cols = sorted({u for _, _, us in first_rows for u in us},
                      key=lambda g: g.indices)
        rows = [[e.derivative(u) for u in cols] for _, e, _ in first_rows]
        try:
            rank = linalg.numeric_rank(rows, self.region_point)
        except Exception:
            return False
        if rank != len(cols):
            return False
        for u in cols:
            self._install(u, holo[u], "holonomy-unique solution")
        taken = {id(eq) for eq, _, _ in first_rows}
        for eq, _, _ in first_rows:
            self.identities.append(eq)
        self.pending = [(eq, e) for eq, e in self.pending
                        if id(eq) not in taken]
        return True

    # -- reporting ----------------------------------------------------------

    def determinations(self):
        out = {}
        for u, rhs in self.pivots.items():
            r = self.chain.reduce(rhs)
            if not _unknowns_in(r):
                out[u] = r
        return out

    def relations(self):
        out = {}
        for u, rhs in self.pivots.items():
            r = self.chain.reduce(rhs)
            if _unknowns_in(r):
                out[u] = r
        return out


def impose_sopde(solver: Solver, chain: ConstraintChain) -> list[Expr]:
    """Substitute the holonomy rules into the solved rows; unknown-free
    nonzero residues are second-order-equation constraints.

    Lagrangian side only; the Hamiltonian algorithm never calls this.
    """
    if solver.ansatz.side != "lagrangian":
        raise ExprError("the holonomy condition does not apply on the "
                        "Hamiltonian side")
    holo = holonomy_rules(solver.ansatz.chart, solver.ansatz)
    residues = []
    for u, rhs in sorted(solver.pivots.items(), key=lambda t: t[0].indices):
        lhs = holo.get(u, Expr.from_sym(u))
        res = chain.reduce((lhs - rhs).substitute(holo))
        if not res.is_zero() and not _unknowns_in(res):
            residues.append(res)
    for _, e in solver.unresolved + solver.pending:
        res = chain.reduce(e.substitute(holo))
        if not res.is_zero() and not _unknowns_in(res):
            residues.append(solver.unscale(res))
    return residues


def _tangency_rows(solver: Solver, chain: ConstraintChain):
    """Lie derivatives L_{X_mu} zeta for every chain constraint, reduced."""
    chart = solver.ansatz.chart
    rows = []
    for con in chain.all():
        zeta = con.expr
        for mu in range(chart.m):
            e = zeta.derivative(chart.base[mu])
            for c in chart.fiber:
                dz = zeta.derivative(c)
                if dz.is_zero():
                    continue
                e = e + solver.value(solver.ansatz.unknowns[(mu, c)]) * dz
            rows.append(Equation(chart.base[mu],
                                 f"tangency[{con.generation}]", e))
    return rows


def _dx_family_identities(system: CoefficientSystem, solver: Solver,
                          chain: ConstraintChain) -> list[bool]:
    """Verify each dx^lambda equation is -sum_c X_lambda^c (fiber eq of c).

    This is the alternating-form identity Omega(X_0..X_{m-1}, X_lambda) = 0.
    Since substitution is a ring homomorphism, the identity carries over to
    the solved system: the base rows reduce to zero modulo the fiber rows'
    solutions (outright when everything pivoted, else modulo the unresolved
    relation rows), which is exactly the combination the worked analyses
    exhibit by inspection.
    """
    chart = system.ansatz.chart
    verdicts = []
    for eq in system.base():
        lam = chart.index[eq.slot]
        combo = eq.expr
        for feq in system.fiber():
            u = system.ansatz.unknowns[(lam, feq.slot)]
            combo = combo + Expr.from_sym(u) * feq.expr
        structural = expr_is_zero(combo)
        if structural and not solver.unresolved:
            # no free relation rows: the reduction must vanish outright
            structural = expr_is_zero(solver.reduce(eq.expr))
        verdicts.append(structural)
    return verdicts


class KernelCheck:
    """ker(Omega_tilde)  cap  ker(d^m x) and the i(Z) d(energy) candidates."""

    def __init__(self, basis, candidates, evidence):
        self.basis = basis            # list of vectors over the fiber roster
        self.candidates = candidates  # list of (Expr, is_zero verdict)
        self.evidence = evidence

    @property
    def dimension(self):
        return len(self.basis)

    def candidate_constraints(self):
        return [e for e, z in self.candidates if not z]


def kernel_compatibility_check(omega_tilde: DiffForm, energy: Expr,
                               chart: Chart) -> KernelCheck:
    """Proposition-2 necessary condition: candidates i(Z) alpha for Z in the
    vertical kernel of the tilde part.

    The tilde form is rescaled polynomial first; the kernel is unchanged on
    the declared region."""
    from .exterior import clear_denominators
    omega_tilde, _ = clear_denominators(omega_tilde)
    fiber = list(chart.fiber)
    contractions = [contract(VectorField.coordinate(chart, c), omega_tilde)
                    for c in fiber]
    slots = sorted({s for f in contractions for s in f.slots()})
    rows = [[f.table.get(s, Expr.zero()) for f in contractions]
            for s in slots]
    constant = all(e.is_rational() for row in rows for e in row)
    if constant:
        basis = linalg.nullspace(rows, len(fiber))
        evidence = "symbolic elimination (constant slot matrix)"
    else:
        point = chart.region_point()
        rank = linalg.numeric_rank(rows, point)
        if rank == len(fiber):
            basis = []
            evidence = f"numeric full column rank {rank} at region certificate"
        else:
            basis = linalg.nullspace(rows, len(fiber))
            evidence = "symbolic elimination (certified pivots)"
    candidates = []
    for vec in basis:
        cand = Expr.zero()
        for j, c in enumerate(fiber):
            if not vec[j].is_zero():
                cand = cand + vec[j] * energy.derivative(c)
        candidates.append((cand, expr_is_zero(cand)))
    return KernelCheck(basis, candidates, evidence)


class AlgorithmResult:
    def __init__(self, side, ansatz, system, solver, chain, kernel,
                 dx_identities, passes):
        self.side = side
        self.ansatz = ansatz
        self.system = system
        self.solver = solver
        self.chain = chain
        self.kernel = kernel
        self.dx_identities = dx_identities
        self.passes = passes

    @property
    def constraints(self):
        return self.chain.all()

    def constraints_of(self, klass):
        return [c for c in self.chain.all() if c.klass == klass]

    def prop2_consistent(self) -> bool:
        """Every kernel-derived candidate is implied by the found
        compatibility constraints (never asserted as equality)."""
        if self.kernel is None:
            return True
        for cand in self.kernel.candidate_constraints():
            if not expr_is_zero(self.chain.reduce(cand)):
                return False
        return True


def run_constraint_algorithm(omega: DiffForm, omega_tilde: DiffForm,
                             energy: Expr, chart: Chart, side: str,
                             max_generations: int = 10) -> AlgorithmResult:
    """Full constraint algorithm on one side; see the module docstring.

    The equation form is rescaled by the lcm of its coefficient
    denominators (a certified-nonzero factor on the region), which leaves
    the solution class, the constraints (divided back out) and the kernel
    unchanged while keeping every coefficient polynomial.
    """
    from .exterior import clear_denominators
    ansatz = build_ansatz(chart, side)
    omega_scaled, scale = clear_denominators(omega)
    system = field_equation_system(omega_scaled, ansatz)
    chain = ConstraintChain(chart)
    region = chart.region_point()
    holo = holonomy_rules(chart, ansatz) if side == "lagrangian" else None
    solver = Solver(ansatz, system.fiber(), chain, holonomy=None,
                    region_point=region)
    solver.scale = scale
    passes = 0
    if side == "lagrangian":
        solver.holonomy_shortcut()
    # compatibility sweep(s)
    while True:
        passes += 1
        if passes > max_generations * 4:
            raise GenerationLimit("compatibility sweep did not stabilize")
        found = solver.run(COMPATIBILITY)
        if not found:
            break
        chain.add_generation(COMPATIBILITY, found)
    if side == "lagrangian":
        residues = impose_sopde(solver, chain)
        chain.add_generation(SOPDE, residues)
        solver.holonomy = dict(holonomy_rules(chart, ansatz))
        # re-run: rows re-reduce under the holonomy + chain rules
        solver.pending = [(eq, eq.expr) for eq in system.fiber()]
        solver.pivots = {u: r for u, r in solver.pivots.items()
                         if u not in solver.holonomy}
        solver.identities = []
        solver.constraint_rows = []
        solver.unresolved = []
        while True:
            passes += 1
            if passes > max_generations * 4:
                raise GenerationLimit("SOPDE sweep did not stabilize")
            found = solver.run(SOPDE)
            if not found:
                break
            chain.add_generation(SOPDE, found)
    # tangency iteration
    generations = 0
    while True:
        generations += 1
        if generations > max_generations:
            raise GenerationLimit(
                f"tangency produced more than {max_generations} generations")
        rows = _tangency_rows(solver, chain)
        new_constraints: list[Expr] = []
        new_rows: list[Equation] = []
        for eq in rows:
            e = solver.reduce(eq.expr)
            if e.is_zero():
                continue
            if not _unknowns_in(e):
                new_constraints.append(e)
            else:
                new_rows.append(eq)
        if new_constraints:
            added = chain.add_generation(TANGENCY, new_constraints)
            if added:
                continue
        if new_rows:
            before = dict(solver.pivots)
            solver.pending.extend((eq, eq.expr) for eq in new_rows)
            found = solver.run(TANGENCY)
            if found:
                chain.add_generation(TANGENCY, found)
                continue
            if solver.pivots != before:
                continue
        break
    kernel = kernel_compatibility_check(omega_tilde, energy, chart)
    dx_ok = _dx_family_identities(system, solver, chain)
    return AlgorithmResult(side, ansatz, system, solver, chain, kernel,
                           dx_ok, passes)


# ---------------------------------------------------------------------------
# integral sections: turn the solved chain into PDE residuals
# ---------------------------------------------------------------------------

def _section_functions(chart: Chart):
    """Parameter functions of the base coordinates for every fiber family."""
    deps = frozenset(chart.base)
    table: dict[Sym, Expr] = {}
    for f in chart.fields:
        fn = ParamFn(f.name, f.indices, deps)
        table[f] = fn()
    for v in chart.velocities:
        f = chart.field_of(v)
        mu = chart.direction_of(v)
        table[v] = table[f].derivative(chart.base[mu])
    for p in chart.momenta:
        fn = ParamFn("p_" + p.name, p.indices, deps)
        table[p] = fn()
    return table


def extract_field_equations(result: AlgorithmResult) -> list[Expr]:
    """Residual PDEs over section functions from constraints, the
    field-equation pivots, and unresolved relation rows."""
    chart = result.ansatz.chart
    sections = _section_functions(chart)

    def unknown_value(u: Sym) -> Expr:
        mu, c = result.ansatz.label[u]
        return sections[c].derivative(chart.base[mu])

    def to_pde(e: Expr) -> Expr:
        rules = dict(sections)
        for u in _unknowns_in(e):
            rules[u] = unknown_value(u)
        return e.substitute(rules)

    pdes: list[Expr] = []

    def push(e: Expr):
        pde = to_pde(e)
        if pde.is_zero():
            return
        if any(_proportional(pde, q) for q in pdes):
            return
        pdes.append(pde)

    for con in result.chain.all():
        push(con.expr)
    fiber_slots = {eq.slot.display() for eq in result.system.fiber()}
    for u, rhs in sorted(result.solver.pivots.items(),
                         key=lambda t: t[0].indices):
        if result.solver.pivot_source.get(u) in fiber_slots:
            push(Expr.from_sym(u) - rhs)
    for _, e in result.solver.unresolved:
        push(e)
    return pdes


def lemma_semibasic_residual(omega: DiffForm, omega_tilde: DiffForm,
                             energy: Expr,
                             ansatz: MultiVectorAnsatz) -> DiffForm:
    """alpha~_X = i(X)Omega - i(X)Omega~ - (-1)^m dE for f = 1.

    Exposed for inspection only: with the normalization i(X)d^m x = 1 the
    residual is semibasic (only dx^mu slots survive), which the property
    suite asserts.
    """
    from .exterior import exterior_derivative
    chart = ansatz.chart
    mv = ansatz.multivector()
    full = contract(mv, omega)
    tilde = contract(mv, omega_tilde)
    alpha = exterior_derivative(DiffForm.function(chart, energy))
    sign = Expr.from_rational((-1) ** chart.m)
    return full - tilde - alpha * sign

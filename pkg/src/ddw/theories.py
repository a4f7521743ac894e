"""Built-in theory catalog: two-field scalar theories (canonical, electric
and magnetic Carrollian), the Nambu-Goto string, the membrane (p = 2), and
2+1 gravity in Chern-Simons form.

Every builtin is generated as theory-file text and pushed through the same
parser as user files, so the golden fixtures exercise the full input path.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping

from .chart import Chart
from .dsl import TheoryFile, parse_theory_file, resolve_generators
from .expr import (Expr, ExprError, MOMENTUM, PARAM, Sym, sqrt_expr)
from .lagrangian import LagrangianSystem
from .legendre import HamiltonianSystem, LegendreData, build_legendre
from .symmetry import SymmetryGenerator

__all__ = ["TheorySpec", "instantiate_builtin", "builtin_names",
           "builtin_theory_text", "carroll_contraction"]

BUILTIN_NAMES = ("kg-canonical", "carroll-electric", "carroll-magnetic",
                 "nambu-goto", "p-brane", "cs-gravity")


def builtin_names():
    return list(BUILTIN_NAMES)


class TheorySpec:
    """A theory file plus the machinery hooks the analyses need."""

    def __init__(self, name: str, tf: TheoryFile, params: Mapping,
                 hamiltonian_side: bool = True):
        self.name = name
        self.tf = tf
        self.params = dict(params)
        self.hamiltonian_side = hamiltonian_side
        self.chart: Chart = tf.chart
        self.lagrangian: Expr = tf.lagrangian
        self._lag = None
        self._legendre = None

    # -- lazy analyses -------------------------------------------------------

    def lag_system(self) -> LagrangianSystem:
        if self._lag is None:
            self._lag = LagrangianSystem(self.chart, self.lagrangian)
        return self._lag

    def inverse_map(self):
        """Closed-form (FL^-1)* for regular builtins, else None."""
        if self.name in ("nambu-goto",):
            return _ng_inverse(self)
        return None

    def legendre(self) -> LegendreData:
        if self._legendre is None:
            self._legendre = build_legendre(self.lag_system(),
                                            self.inverse_map())
        return self._legendre

    def hamiltonian_system(self) -> HamiltonianSystem:
        if self.name == "nambu-goto":
            return HamiltonianSystem(self.legendre(), h=_ng_hamiltonian(self))
        return HamiltonianSystem(self.legendre())

    def generators(self) -> list[SymmetryGenerator]:
        out = []
        for name, direct, comps in resolve_generators(self.tf):
            if direct:
                from .exterior import VectorField
                vf = VectorField(self.chart, {
                    self.chart.index[c]: e for c, e in comps.items()})
                out.append(SymmetryGenerator(name, self.chart, direct=vf))
            else:
                out.append(SymmetryGenerator(name, self.chart, on_e=comps))
        return out

    def param_sym(self, name: str, indices=()) -> Sym:
        fam = self.tf.param_fns[name]
        e = fam.at(tuple(indices))
        (mono, _), = e.num.items()
        return mono[0][0]

    def __repr__(self):
        return f"TheorySpec({self.name!r}, m={self.chart.m})"


# -- theory text -------------------------------------------------------------

def _kg_text(m: int) -> str:
    d = m - 1
    region = ", ".join(
        ["pi=1/2", "phi=1/3"] +
        [f"v(phi;{i})={Fraction(2, 2 + i)}" for i in range(1, m)] +
        [f"v(pi;{mu})={Fraction(1, 3 + mu)}" for mu in range(m)])
    return f"""\
theory kg-canonical
dims m={m}
index mu: 0..{d}
index nu: 0..{d}
index rho: 0..{d}
index i: 1..{d}
index j: 1..{d}
fields phi, pi
param eps[mu,nu]: antisym
region {region}
lagrangian pi*v(phi;0) - 1/2*pi^2 - 1/2*v(phi;i)*v(phi;i)
symmetry lorentz direct
  comp x(mu): -eta(mu,nu)*eps(nu,rho)*x(rho)
  comp pi: eta(i,j)*eps(j,0)*v(phi;i)
  comp v(phi;mu): eta(nu,rho)*eps(rho,mu)*v(phi;nu)
  comp v(pi;mu): eta(nu,rho)*eps(rho,mu)*v(pi;nu)
"""


def _carroll_common(m: int) -> str:
    d = m - 1
    rot = """
symmetry carroll
  comp x(0): -b(i)*x(i)
  comp x(i): -eps(i,j)*x(j)
"""
    if m == 2:  # no spatial rotations at d = 1
        rot = """
symmetry carroll
  comp x(0): -b(i)*x(i)
"""
    return rot, d


def _electric_text(m: int) -> str:
    rot, d = _carroll_common(m)
    return f"""\
theory carroll-electric
dims m={m}
index mu: 0..{d}
index nu: 0..{d}
index i: 1..{d}
index j: 1..{d}
fields phi, pi
param b[i]
param eps[i,j]: antisym
region pi=2, phi=1/3
lagrangian pi*v(phi;0) - 1/2*pi^2{rot}"""


def _magnetic_text(m: int) -> str:
    d = m - 1
    rot_comp = "" if m == 2 else "\n  comp x(i): -eps(i,j)*x(j)"
    rot_phi = "b(i)*v(phi;0)" if m == 2 else \
        "b(i)*v(phi;0) + eps(j,i)*v(phi;j)"
    rot_pi = "b(i)*v(pi;0)" if m == 2 else \
        "b(i)*v(pi;0) + eps(j,i)*v(pi;j)"
    return f"""\
theory carroll-magnetic
dims m={m}
index mu: 0..{d}
index nu: 0..{d}
index i: 1..{d}
index j: 1..{d}
fields phi, pi
param b[i]
param eps[i,j]: antisym
region pi=2, phi=1/3, v(phi;1)=3/4
lagrangian pi*v(phi;0) - 1/2*v(phi;i)*v(phi;i)
symmetry carroll direct
  comp x(0): -b(i)*x(i){rot_comp}
  comp pi: b(i)*v(phi;i)
  comp v(phi;i): {rot_phi}
  comp v(pi;i): {rot_pi}
"""


def _ng_text(D: int) -> str:
    dt = D - 1
    region = ", ".join(["T=1", "v(X(0);0)=1", "v(X(1);1)=1"])
    return f"""\
theory nambu-goto
dims m=2
base sigma
index a: 0..1
index b: 0..1
index c: 0..1
index mu: 0..{dt}
index nu: 0..{dt}
index rho: 0..{dt}
fields X[mu]
param T: positive
param xi[a]: fn(base)
param epsL[mu,nu]: antisym
region {region}
lagrangian -T*sqrt(-det(a,b: eta(mu,nu)*v(X(mu);a)*v(X(nu);b)))
symmetry worldsheet-diffs
  comp sigma(a): -xi(a)
symmetry lorentz-isometry
  comp X(mu): -eta(mu,nu)*epsL(nu,rho)*X(rho)
symmetry dilation
  comp X(mu): -X(mu)
"""


def _pbrane_text(D: int) -> str:
    dt = D - 1
    return f"""\
theory p-brane
dims m=3
base sigma
index a: 0..2
index b: 0..2
index mu: 0..{dt}
index nu: 0..{dt}
fields X[mu]
param T: positive
region T=1, v(X(0);0)=1, v(X(1);1)=1, v(X(2);2)=1
lagrangian -T*sqrt(-det(a,b: eta(mu,nu)*v(X(mu);a)*v(X(nu);b)))
"""


def _cs_text(lam) -> str:
    lam_decl = "param lam\n" if lam is None else ""
    lam_ref = "lam" if lam is None else f"({Fraction(lam)})"
    region = ", ".join([f"e({a},{a})={Fraction(1)}" for a in range(3)] +
                       [f"w(0,1)=1/5", "w(1,2)=1/7", "w(2,0)=1/11"])
    return f"""\
theory cs-gravity
dims m=3
index mu: 0..2
index nu: 0..2
index rho: 0..2
index sg: 0..2
index a: 0..2
index b: 0..2
index c: 0..2
index d: 0..2
fields e[a,mu], w[c,rho]
{lam_decl}param rho_t[a]: fn(base)
param tau_t[a]: fn(base)
param xi[mu]: fn(base)
region {region}
lagrangian lc(mu,nu,rho)*(2*eta(a,c)*e(a,mu)*v(w(c,rho);nu) + lc(a,b,c)*(e(a,mu)*w(b,nu)*w(c,rho) + 1/3*{lam_ref}*e(a,mu)*e(b,nu)*e(c,rho)))
symmetry spacetime-diffs
  comp x(mu): -xi(mu)
  comp e(a,mu): e(a,nu)*dd(xi(nu);x(mu))
  comp w(a,mu): w(a,nu)*dd(xi(nu);x(mu))
symmetry local-poincare
  comp e(a,mu): dd(rho_t(a);x(mu)) + eta(a,d)*lc(d,b,c)*(e(b,mu)*tau_t(c) + w(b,mu)*rho_t(c))
  comp w(a,mu): dd(tau_t(a);x(mu)) + eta(a,d)*lc(d,b,c)*(w(b,mu)*tau_t(c) + {lam_ref}*e(b,mu)*rho_t(c))
"""


def builtin_theory_text(name: str, **params) -> str:
    if name == "kg-canonical":
        m = int(params.get("m", 4))
        if not 2 <= m <= 4:
            raise ExprError("kg-canonical supports m in 2..4")
        return _kg_text(m)
    if name == "carroll-electric":
        m = int(params.get("m", 2))
        if not 2 <= m <= 4:
            raise ExprError("carroll-electric supports m in 2..4")
        return _electric_text(m)
    if name == "carroll-magnetic":
        m = int(params.get("m", 3))
        if not 2 <= m <= 4:
            raise ExprError("carroll-magnetic supports m in 2..4")
        return _magnetic_text(m)
    if name == "nambu-goto":
        D = int(params.get("D", 3))
        if not 3 <= D <= 4:
            raise ExprError("nambu-goto supports D in 3..4")
        return _ng_text(D)
    if name == "p-brane":
        D = int(params.get("D", 4))
        p = int(params.get("p", 2))
        if p != 2 or D != 4:
            raise ExprError("p-brane ships p=2, D=4")
        return _pbrane_text(D)
    if name == "cs-gravity":
        lam = params.get("lam", None)
        return _cs_text(lam)
    raise ExprError(f"unknown builtin {name!r}; know {BUILTIN_NAMES}")


def instantiate_builtin(name: str, **params) -> TheorySpec:
    text = builtin_theory_text(name, **params)
    tf = parse_theory_file(text)
    ham = name != "p-brane"  # membrane ships Lagrangian-side only
    return TheorySpec(name, tf, params, hamiltonian_side=ham)


# -- string closed-form inverse ----------------------------------------------

def _flat_eta(D: int):
    return [Fraction(-1) if mu == 0 else Fraction(1) for mu in range(D)]


def _ng_dual_data(spec: TheorySpec):
    """(momentum symbols p[a][mu], Pi^{ab}, det Pi) on the dual chart."""
    chart = spec.chart
    D = len(chart.fields)
    eta = _flat_eta(D)
    p = [[Sym(MOMENTUM, "X", (mu, a)) for mu in range(D)] for a in range(2)]
    Pi = [[sum((Expr.from_rational(eta[mu]) * Expr.from_sym(p[a][mu])
                * Expr.from_sym(p[b][mu]) for mu in range(D)), Expr.zero())
           for b in range(2)] for a in range(2)]
    detPi = Pi[0][0] * Pi[1][1] - Pi[0][1] * Pi[1][0]
    return p, Pi, detPi


def _ng_inverse(spec: TheorySpec) -> dict:
    """(FL^-1)* x^nu_b = -(1/T) sqrt(-det Pi) G^{mu nu} Pi_{ab} p^a_mu."""
    chart = spec.chart
    D = len(chart.fields)
    eta = _flat_eta(D)
    T = Expr.from_sym(spec.param_sym("T"))
    p, Pi, detPi = _ng_dual_data(spec)
    sPi = sqrt_expr(-detPi)
    inv_det = detPi.inverse("det Pi nonzero on the declared region")
    # 2x2 inverse: Pi_{ab} = eps_{cb} eps_{da} Pi^{cd} / det Pi
    lower = [[(Pi[1][1], 1), (Pi[0][1], -1)], [(Pi[1][0], -1), (Pi[0][0], 1)]]
    Pi_low = [[lower[a][b][0] * Expr.from_rational(lower[a][b][1]) * inv_det
               for b in range(2)] for a in range(2)]
    out = {}
    minus_inv_T = -T.inverse("tension is positive")
    for b in range(2):
        for nu in range(D):
            acc = Expr.zero()
            for a in range(2):
                acc = acc + Expr.from_rational(eta[nu]) * Pi_low[a][b] \
                    * Expr.from_sym(p[a][nu])
            v = chart.velocity(chart.fields[nu], b)
            out[v] = minus_inv_T * sPi * acc
    return out


def _ng_hamiltonian(spec: TheorySpec) -> Expr:
    """H = -(1/T) sqrt(-det Pi) in dual coordinates."""
    T = Expr.from_sym(spec.param_sym("T"))
    _, _, detPi = _ng_dual_data(spec)
    return -T.inverse("tension is positive") * sqrt_expr(-detPi)


# -- Carrollian contractions --------------------------------------------------

def carroll_contraction(kg_lagrangian: Expr, chart: Chart, kind: str,
                        c: Expr) -> Expr:
    """c-dressed family of the canonical two-field Lagrangian.

    Reinserting the light-speed factors puts c^2 on the pi^2 sector
    (L_c = pi phi_0 - c^2/2 pi^2 - 1/2 phi_i phi^i); the magnetic theory is
    its c -> 0 limit, the electric theory is the same limit after the field
    redefinition phi -> c phi, pi -> pi/c.
    """
    phi, pi = chart.fields[0], chart.fields[1]
    vphi0 = chart.velocity(phi, 0)
    pi_e = Expr.from_sym(pi)
    dressed = kg_lagrangian + (Expr.one() - c * c) \
        * Expr.from_rational(Fraction(1, 2)) * pi_e * pi_e
    if kind == "magnetic":
        return dressed
    if kind == "electric":
        rules = {pi: pi_e * c.inverse("formal contraction parameter")}
        rules.update({chart.velocity(phi, mu):
                      c * Expr.from_sym(chart.velocity(phi, mu))
                      for mu in range(chart.m)})
        rules[phi] = c * Expr.from_sym(phi)
        return dressed.substitute(rules)
    raise ExprError(f"unknown contraction {kind!r}")

"""Exterior algebra over a chart: wedge, d, contraction, Lie derivative.

Forms are sparse tables keyed by strictly increasing tuples of roster
indices.  The multivector contraction order is fixed so that
``i(X_0 ^ ... ^ X_{m-1}) d^m x = +1`` for X_mu = d/dx^mu, which pins every
downstream sign (field-equation slots, momentum maps, the splitting of the
premultisymplectic form).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .chart import Chart
from .expr import BASE, Expr, ExprError, Sym

__all__ = ["DiffForm", "VectorField", "MultiVector", "VolumeBasis",
           "wedge", "exterior_derivative", "contract", "lie_derivative",
           "lie_derivative_coordinate_formula", "volume_basis", "d_coord"]


class DiffForm:
    """Degree-k form: {strictly increasing index tuple: Expr coefficient}."""

    __slots__ = ("chart", "degree", "table")

    def __init__(self, chart: Chart, degree: int,
                 table: Mapping[tuple, Expr] | None = None):
        if degree < 0 or degree > chart.dim:
            raise ExprError(f"degree {degree} out of range for chart")
        self.chart = chart
        self.degree = degree
        tab = {}
        for idx, coeff in (table or {}).items():
            if len(idx) != degree or tuple(sorted(idx)) != tuple(idx) or \
                    len(set(idx)) != degree:
                raise ExprError(f"bad slot {idx} for degree {degree}")
            if not coeff.is_zero():
                tab[idx] = coeff
        self.table = tab

    @staticmethod
    def zero(chart: Chart, degree: int) -> "DiffForm":
        return DiffForm(chart, degree, {})

    @staticmethod
    def function(chart: Chart, f: Expr) -> "DiffForm":
        return DiffForm(chart, 0, {(): f})

    def is_zero(self) -> bool:
        return not self.table

    def __add__(self, other: "DiffForm") -> "DiffForm":
        self._compat(other)
        tab = dict(self.table)
        for idx, c in other.table.items():
            s = tab.get(idx, Expr.zero()) + c
            if s.is_zero():
                tab.pop(idx, None)
            else:
                tab[idx] = s
        return DiffForm(self.chart, self.degree, tab)

    def __sub__(self, other: "DiffForm") -> "DiffForm":
        return self + (-other)

    def __neg__(self) -> "DiffForm":
        return DiffForm(self.chart, self.degree,
                        {i: -c for i, c in self.table.items()})

    def __mul__(self, scalar) -> "DiffForm":
        if isinstance(scalar, (int, Fraction)):
            scalar = Expr.from_rational(scalar)
        if not isinstance(scalar, Expr):
            return NotImplemented
        return DiffForm(self.chart, self.degree,
                        {i: c * scalar for i, c in self.table.items()})

    __rmul__ = __mul__

    def __xor__(self, other: "DiffForm") -> "DiffForm":
        return wedge(self, other)

    def map_coefficients(self, fn) -> "DiffForm":
        return DiffForm(self.chart, self.degree,
                        {i: fn(c) for i, c in self.table.items()})

    def substitute(self, rules) -> "DiffForm":
        return self.map_coefficients(lambda c: c.substitute(rules))

    def slots(self):
        return sorted(self.table)

    def coefficient(self, coords: Sequence[Sym]) -> Expr:
        idx, sign = _sorted_slot(tuple(self.chart.index[c] for c in coords))
        if idx is None:
            return Expr.zero()
        return self.table.get(idx, Expr.zero()) * sign

    def equals(self, other: "DiffForm") -> bool:
        self._compat(other)
        return (self - other).is_zero()

    def _compat(self, other: "DiffForm"):
        if self.chart is not other.chart:
            raise ExprError("chart mismatch")
        if self.degree != other.degree:
            raise ExprError("degree mismatch")

    def display(self) -> str:
        if not self.table:
            return "0"
        names = self.chart.coords
        parts = []
        for idx in self.slots():
            basis = "^".join(f"d{names[i].display()}" for i in idx) or "1"
            parts.append(f"({self.table[idx].display()}) {basis}")
        return "  +  ".join(parts)

    def __repr__(self):
        return f"DiffForm<{self.degree}>[{len(self.table)} slots]"


class VectorField:
    """Sparse vector field: {roster index: Expr component}."""

    __slots__ = ("chart", "comp")

    def __init__(self, chart: Chart, comp: Mapping[int, Expr] | None = None):
        self.chart = chart
        self.comp = {i: c for i, c in (comp or {}).items() if not c.is_zero()}

    @staticmethod
    def coordinate(chart: Chart, coord: Sym) -> "VectorField":
        return VectorField(chart, {chart.index[coord]: Expr.one()})

    def component(self, coord: Sym) -> Expr:
        return self.comp.get(self.chart.index[coord], Expr.zero())

    def __add__(self, other: "VectorField") -> "VectorField":
        comp = dict(self.comp)
        for i, c in other.comp.items():
            comp[i] = comp.get(i, Expr.zero()) + c
        return VectorField(self.chart, comp)

    def __neg__(self) -> "VectorField":
        return VectorField(self.chart, {i: -c for i, c in self.comp.items()})

    def __mul__(self, scalar: Expr) -> "VectorField":
        if isinstance(scalar, (int, Fraction)):
            scalar = Expr.from_rational(scalar)
        return VectorField(self.chart, {i: c * scalar
                                        for i, c in self.comp.items()})

    __rmul__ = __mul__

    def substitute(self, rules) -> "VectorField":
        return VectorField(self.chart, {i: c.substitute(rules)
                                        for i, c in self.comp.items()})

    def apply(self, f: Expr) -> Expr:
        """Directional derivative X(f)."""
        out = Expr.zero()
        for i, c in self.comp.items():
            out = out + c * f.derivative(self.chart.coords[i])
        return out

    def display(self) -> str:
        if not self.comp:
            return "0"
        names = self.chart.coords
        return " + ".join(f"({c.display()}) d/d{names[i].display()}"
                          for i, c in sorted(self.comp.items()))

    def __repr__(self):
        return f"VectorField[{len(self.comp)} comps]"


class MultiVector:
    """Decomposable m-vector field X_0 ^ ... ^ X_{m-1}."""

    def __init__(self, factors: Sequence[VectorField]):
        if not factors:
            raise ExprError("empty multivector")
        chart = factors[0].chart
        if any(f.chart is not chart for f in factors):
            raise ExprError("chart mismatch in multivector factors")
        if len(factors) != chart.m:
            raise ExprError("decomposable multivector needs m factors")
        self.chart = chart
        self.factors = tuple(factors)


VolumeBasisCache: dict = {}


class VolumeBasis:
    """d^m x and its interior products d^{m-1}x_mu, d^{m-2}x_{mu nu}."""

    def __init__(self, chart: Chart):
        self.chart = chart
        self.top = DiffForm(chart, chart.m,
                            {tuple(range(chart.m)): Expr.one()})

    def dm1(self, mu: int) -> DiffForm:
        return contract(VectorField.coordinate(self.chart,
                                               self.chart.base[mu]), self.top)

    def dm2(self, mu: int, nu: int) -> DiffForm:
        return contract(VectorField.coordinate(self.chart,
                                               self.chart.base[nu]),
                        self.dm1(mu))


def volume_basis(chart: Chart) -> VolumeBasis:
    key = id(chart)
    vb = VolumeBasisCache.get(key)
    if vb is None:
        vb = VolumeBasis(chart)
        VolumeBasisCache[key] = vb
    return vb


def d_coord(chart: Chart, coord: Sym) -> DiffForm:
    """The 1-form d(coord)."""
    return DiffForm(chart, 1, {(chart.index[coord],): Expr.one()})


def _sorted_slot(idx: tuple):
    """Sort an index tuple, tracking permutation parity; None if repeated."""
    if len(set(idx)) != len(idx):
        return None, 0
    perm = sorted(range(len(idx)), key=lambda k: idx[k])
    sign = 1
    seen = [False] * len(perm)
    for start in range(len(perm)):
        if seen[start]:
            continue
        length, j = 0, start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return tuple(sorted(idx)), sign


def _finish(chart, degree, acc: dict) -> DiffForm:
    return DiffForm(chart, degree, {slot: a.total()
                                    for slot, a in acc.items()})


def wedge(alpha: DiffForm, beta: DiffForm) -> DiffForm:
    """Graded-commutative product; degree overflow gives the zero form."""
    from .expr import ExprAccumulator
    if alpha.chart is not beta.chart:
        raise ExprError("chart mismatch")
    deg = alpha.degree + beta.degree
    if deg > alpha.chart.dim:
        return DiffForm.zero(alpha.chart, min(deg, alpha.chart.dim))
    out: dict = {}
    for i1, c1 in alpha.table.items():
        for i2, c2 in beta.table.items():
            idx, sign = _sorted_slot(i1 + i2)
            if idx is None:
                continue
            term = c1 * c2 * Expr.from_rational(sign)
            out.setdefault(idx, ExprAccumulator()).add(term)
    return _finish(alpha.chart, deg, out)


def exterior_derivative(alpha: DiffForm) -> DiffForm:
    """d: linear, Leibniz, d.d = 0 (checked property-wise in the suite)."""
    from .expr import ExprAccumulator
    chart = alpha.chart
    out: dict = {}
    for idx, coeff in alpha.table.items():
        for j, coord in enumerate(chart.coords):
            dc = coeff.derivative(coord)
            if dc.is_zero():
                continue
            slot, sign = _sorted_slot((j,) + idx)
            if slot is None:
                continue
            out.setdefault(slot, ExprAccumulator()).add(
                dc * Expr.from_rational(sign))
    return _finish(chart, alpha.degree + 1, out)


def _contract_vector(X: VectorField, alpha: DiffForm) -> DiffForm:
    """Antiderivation of degree -1."""
    from .expr import ExprAccumulator
    if alpha.degree == 0:
        return DiffForm.zero(alpha.chart, 0)
    out: dict = {}
    for idx, coeff in alpha.table.items():
        for k, j in enumerate(idx):
            comp = X.comp.get(j)
            if comp is None:
                continue
            slot = idx[:k] + idx[k + 1:]
            term = coeff * comp * Expr.from_rational((-1) ** k)
            out.setdefault(slot, ExprAccumulator()).add(term)
    return _finish(alpha.chart, alpha.degree - 1, out)


def contract(X, alpha: DiffForm) -> DiffForm:
    """Interior product with a vector field or a decomposable multivector.

    For a multivector the iterated order is i(X_{m-1})...i(X_0), i.e. the
    result pairs as alpha(X_0, ..., X_{m-1}, .); forms of degree < m
    contract to zero.
    """
    if isinstance(X, VectorField):
        if X.chart is not alpha.chart:
            raise ExprError("chart mismatch")
        return _contract_vector(X, alpha)
    if isinstance(X, MultiVector):
        if X.chart is not alpha.chart:
            raise ExprError("chart mismatch")
        if alpha.degree < len(X.factors):
            return DiffForm.zero(alpha.chart, 0)
        out = alpha
        for f in X.factors:
            out = _contract_vector(f, out)
        return out
    raise ExprError(f"cannot contract {type(X).__name__}")


def lie_derivative(X: VectorField, alpha: DiffForm) -> DiffForm:
    """Cartan identity: L_X = i(X) d + d i(X)."""
    return contract(X, exterior_derivative(alpha)) + \
        exterior_derivative(contract(X, alpha))


def lie_derivative_coordinate_formula(X: VectorField,
                                      alpha: DiffForm) -> DiffForm:
    """Independent coordinate formula, used to cross-check Cartan's identity.

    (L_X alpha) = X(f_I) dz_I + f_I sum_k dz_{i0} ^ .. ^ d(X^{ik}) ^ ..
    """
    chart = alpha.chart
    out = DiffForm.zero(chart, alpha.degree)
    for idx, coeff in alpha.table.items():
        out = out + DiffForm(chart, alpha.degree, {idx: X.apply(coeff)})
        for k, j in enumerate(idx):
            dXj = DiffForm.zero(chart, 1)  # d of the component X^{z_j}
            comp = X.comp.get(j, Expr.zero())
            for c_i, coord in enumerate(chart.coords):
                dc = comp.derivative(coord)
                if not dc.is_zero():
                    dXj = dXj + DiffForm(chart, 1, {(c_i,): dc})
            if dXj.is_zero():
                continue
            term = DiffForm.function(chart, coeff)
            for kk, jj in enumerate(idx):
                term = wedge(term, dXj if kk == k
                             else d_coord(chart, chart.coords[jj]))
            out = out + term
    return out


def clear_denominators(form: DiffForm):
    """(scaled form, scalar): multiply by the lcm of the coefficient
    denominators, leaving polynomial coefficients.

    The scalar is a product of certified-nonzero bases, so the scaled form
    defines the same equation i(X) form = 0 on the declared region.
    """
    from fractions import Fraction as _F
    lcm: dict = {}
    for coeff in form.table.values():
        for b, e in coeff.den:
            if lcm.get(b, 0) < e:
                lcm[b] = e
    if not lcm:
        return form, Expr.one()
    scale = Expr.one()
    for b, e in sorted(lcm.items(), key=lambda t: t[0].key):
        scale = scale * (Expr(b.poly) ** e)
    return form * scale, scale

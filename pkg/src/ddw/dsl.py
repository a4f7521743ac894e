"""Theory-definition language: line-oriented blocks, infix expressions with
declared index ranges and the summation convention over repeated indices.

Blocks::

    theory <name>
    dims m=<int>
    base <name>                 # optional, default "x"
    index <var>: <lo>..<hi>
    fields <name>[i,j], <name>, ...
    param <name>[i,j]: positive|antisym|sym|fn(base)|fn(fields) ...
    region <coordref>=<number>, ...
    lagrangian <expr>
    symmetry <name> [direct]
      comp <coordref>: <expr>

Builtins inside expressions: ``delta(i,j)``, ``eta(i,j)`` (signature
-+...+), ``lc(i,...)`` (Levi-Civita permutation symbol), ``sqrt(e)``,
``det(a,b: e)``, velocity/momentum accessors ``v(f;mu)`` / ``p(f;mu)``,
parameter derivatives ``dd(f;c,...)``.  A ``#`` starts a comment.
"""

from __future__ import annotations

import re
from fractions import Fraction
from itertools import permutations
from typing import Mapping, Sequence

from .chart import Chart, FieldDecl, build_jet_chart
from .expr import (BASE, FIELD, Expr, ExprError, MOMENTUM, PARAM, ParamFn,
                   Sym, VELOCITY, sqrt_expr)

__all__ = ["DslError", "TheoryFile", "parse_theory_file", "GeneratorSpec"]


class DslError(Exception):
    """Lexical, syntactic, or semantic theory-file error with location."""

    def __init__(self, message, line=0, col=0, expected=()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        loc = f"{line}:{col}: " if line else ""
        exp = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{loc}{message}{exp}")


_TOKEN = re.compile(r"""
    (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\^|\+|-|\*|/|\(|\)|\[|\]|,|;|:|=|\.\.)
  | (?P<ws>[ \t]+)
  | (?P<bad>.)
""", re.VERBOSE)


def _tokenize(text: str, line_no: int):
    out = []
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise DslError(f"unexpected character {m.group()!r}",
                           line_no, m.start() + 1)
        out.append((kind, m.group(), m.start() + 1))
    return out


# -- expression AST ----------------------------------------------------------

class Node:
    pass


class Num(Node):
    def __init__(self, value):
        self.value = Fraction(value)

    def index_vars(self):
        return []

    def pretty(self):
        return str(self.value)


class Ref(Node):
    """name(args...) or name(args...; wrt) accessor; bare name has no args."""

    def __init__(self, head, args=(), wrt=None, line=0, col=0):
        self.head = head
        self.args = list(args)
        self.wrt = wrt
        self.line, self.col = line, col

    def index_vars(self):
        if not self.args and self.wrt is None:
            return [self.head]  # a bare name may be an index variable
        out = []
        for a in self.args:
            if isinstance(a, Node):
                out.extend(a.index_vars())
        if isinstance(self.wrt, Node):
            out.extend(self.wrt.index_vars())
        return out

    def pretty(self):
        if not self.args and self.wrt is None:
            return self.head
        args = ",".join(a.pretty() if isinstance(a, Node) else str(a)
                        for a in self.args)
        if self.wrt is None:
            return f"{self.head}({args})"
        w = self.wrt.pretty() if isinstance(self.wrt, Node) else str(self.wrt)
        return f"{self.head}({args};{w})"


class Call(Node):
    def __init__(self, head, parts, line=0, col=0):
        self.head = head          # sqrt | dd | det
        self.parts = parts        # head-specific payload
        self.line, self.col = line, col

    def index_vars(self):
        # sqrt and det are summation barriers: their bodies run the
        # convention independently (a contraction may not span a root)
        if self.head == "dd":
            out = self.parts[0].index_vars()
            for c in self.parts[1]:
                out.extend(c.index_vars())
            return out
        return []

    def pretty(self):
        if self.head == "sqrt":
            return f"sqrt({self.parts[0].pretty()})"
        if self.head == "dd":
            coords = ",".join(c.pretty() for c in self.parts[1])
            return f"dd({self.parts[0].pretty()};{coords})"
        if self.head == "det":
            return (f"det({self.parts[0][0]},{self.parts[0][1]}: "
                    f"{self.parts[1].pretty()})")
        raise AssertionError


class BinOp(Node):
    def __init__(self, op, left, right):
        self.op, self.left, self.right = op, left, right

    def index_vars(self):
        return self.left.index_vars() + self.right.index_vars()

    def pretty(self):
        l, r = self.left.pretty(), self.right.pretty()
        if self.op in "*/":
            if isinstance(self.left, BinOp) and self.left.op in "+-":
                l = f"({l})"
            if isinstance(self.right, BinOp):
                r = f"({r})"
            return f"{l}{self.op}{r}"
        if self.op == "-" and isinstance(self.right, BinOp) \
                and self.right.op in "+-":
            return f"{l}-({r})"
        return f"{l}{self.op}{r}"


class Neg(Node):
    def __init__(self, inner):
        self.inner = inner

    def index_vars(self):
        return self.inner.index_vars()

    def pretty(self):
        s = self.inner.pretty()
        return f"-({s})" if isinstance(self.inner, BinOp) else f"-{s}"


class Pow(Node):
    def __init__(self, base, exp):
        self.base, self.exp = base, exp

    def index_vars(self):
        return self.base.index_vars()

    def pretty(self):
        b = self.base.pretty()
        if isinstance(self.base, (BinOp, Neg)):
            b = f"({b})"
        return f"{b}^{self.exp}"


class _ExprParser:
    def __init__(self, tokens, line_no):
        self.toks = tokens
        self.i = 0
        self.line = line_no

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, want_val=None, expected=()):
        t = self.peek()
        if t is None or (want_val is not None and t[1] != want_val):
            got = t[1] if t else "end of line"
            raise DslError(f"unexpected {got!r}", self.line,
                           t[2] if t else 0,
                           expected or ((want_val,) if want_val else ()))
        self.i += 1
        return t

    def parse(self):
        e = self.expr()
        if self.peek() is not None:
            t = self.peek()
            raise DslError(f"trailing input {t[1]!r}", self.line, t[2])
        return e

    def expr(self):
        node = self.term()
        while self.peek() and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.power()
        while self.peek() and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.power())
        return node

    def power(self):
        node = self.factor()
        if self.peek() and self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek() and self.peek()[1] == "-":
                self.take()
                sign = -1
            t = self.take(expected=("integer exponent",))
            if t[0] != "num":
                raise DslError("exponent must be an integer", self.line, t[2],
                               ("integer",))
            node = Pow(node, sign * int(t[1]))
        return node

    def factor(self):
        t = self.peek()
        if t is None:
            raise DslError("missing operand", self.line, 0, ("expression",))
        if t[1] == "-":
            self.take()
            return Neg(self.factor())
        if t[1] == "+":
            self.take()
            return self.factor()
        if t[1] == "(":
            self.take()
            e = self.expr()
            self.take(")", expected=(")",))
            return e
        if t[0] == "num":
            self.take()
            return Num(int(t[1]))
        if t[0] == "name":
            return self.reference()
        raise DslError(f"unexpected {t[1]!r}", self.line, t[2],
                       ("expression",))

    def reference(self):
        t = self.take()
        head, line, col = t[1], self.line, t[2]
        if not (self.peek() and self.peek()[1] == "("):
            return Ref(head, line=line, col=col)
        self.take("(")
        if head == "sqrt":
            inner = self.expr()
            self.take(")", expected=(")",))
            return Call("sqrt", (inner,), line, col)
        if head == "det":
            a = self.take(expected=("index variable",))
            self.take(",", expected=(",",))
            b = self.take(expected=("index variable",))
            self.take(":", expected=(":",))
            inner = self.expr()
            self.take(")", expected=(")",))
            return Call("det", ((a[1], b[1]), inner), line, col)
        if head == "dd":
            inner = self.reference()
            self.take(";", expected=(";",))
            coords = [self.reference()]
            while self.peek() and self.peek()[1] == ",":
                self.take()
                coords.append(self.reference())
            self.take(")", expected=(")",))
            return Call("dd", (inner, coords), line, col)
        if head in ("v", "p"):
            inner = self.reference()
            self.take(";", expected=(";",))
            wrt = self.index_arg()
            self.take(")", expected=(")",))
            return Ref(head, (inner,), wrt, line, col)
        args = [self.index_arg()]
        while self.peek() and self.peek()[1] == ",":
            self.take()
            args.append(self.index_arg())
        self.take(")", expected=(")",))
        return Ref(head, args, None, line, col)

    def index_arg(self):
        t = self.peek()
        if t and t[0] == "num":
            self.take()
            return Num(int(t[1]))
        if t and t[0] == "name":
            # allow nested refs for dd coords, plain vars otherwise
            return self.reference() if False else Ref(self.take()[1],
                                                      line=self.line,
                                                      col=t[2])
        raise DslError("expected an index", self.line, t[2] if t else 0,
                       ("index",))


class GeneratorSpec:
    def __init__(self, name, direct, comps):
        self.name = name
        self.direct = direct          # True: components live on the jet chart
        self.comps = comps            # list of (Ref coordref, Node expr)

    def pretty(self):
        head = f"symmetry {self.name}" + (" direct" if self.direct else "")
        lines = [head]
        for ref, node in self.comps:
            lines.append(f"  comp {ref.pretty()}: {node.pretty()}")
        return lines


class ParamDecl:
    def __init__(self, name, index_vars, flags):
        self.name = name
        self.index_vars = list(index_vars)
        self.flags = list(flags)

    def pretty(self):
        head = self.name
        if self.index_vars:
            head += f"[{','.join(self.index_vars)}]"
        if self.flags:
            head += ": " + ", ".join(self.flags)
        return f"param {head}"


class TheoryFile:
    """Parsed, semantically checked theory definition."""

    def __init__(self):
        self.name = ""
        self.m = 0
        self.base_name = "x"
        self.indices: dict[str, range] = {}
        self.field_decls: list[tuple[str, list[str]]] = []
        self.params: list[ParamDecl] = []
        self.region_entries: list[tuple[Ref, Fraction]] = []
        self.lagrangian_node: Node | None = None
        self.generators: list[GeneratorSpec] = []
        # resolved objects
        self.chart: Chart | None = None
        self.lagrangian: Expr | None = None
        self.param_fns: dict[str, "ParamFamily"] = {}

    def pretty(self) -> str:
        lines = [f"theory {self.name}", f"dims m={self.m}"]
        if self.base_name != "x":
            lines.append(f"base {self.base_name}")
        for v, r in self.indices.items():
            lines.append(f"index {v}: {r.start}..{r.stop - 1}")
        decls = []
        for name, vars_ in self.field_decls:
            decls.append(name if not vars_ else f"{name}[{','.join(vars_)}]")
        lines.append(f"fields {', '.join(decls)}")
        for p in self.params:
            lines.append(p.pretty())
        if self.region_entries:
            parts = [f"{ref.pretty()}={val}" for ref, val in
                     self.region_entries]
            lines.append(f"region {', '.join(parts)}")
        lines.append(f"lagrangian {self.lagrangian_node.pretty()}")
        for g in self.generators:
            lines.extend(g.pretty())
        return "\n".join(lines) + "\n"

    def structure_key(self):
        return self.pretty()

    def __eq__(self, other):
        return isinstance(other, TheoryFile) and \
            self.structure_key() == other.structure_key()

    def __hash__(self):
        return hash(self.structure_key())


class ParamFamily:
    """A declared parameter family, expanded to concrete symbols on use."""

    def __init__(self, decl: ParamDecl, ranges: Sequence[range], deps,
                 positive: bool, symmetry: str | None):
        self.decl = decl
        self.ranges = list(ranges)
        self.deps = deps
        self.positive = positive
        self.symmetry = symmetry  # None | "sym" | "antisym"

    def at(self, idx: tuple[int, ...]) -> Expr:
        sign = 1
        if self.symmetry in ("sym", "antisym") and len(idx) == 2:
            i, j = idx
            if self.symmetry == "antisym":
                if i == j:
                    return Expr.zero()
                if i > j:
                    idx, sign = (j, i), -1
            elif i > j:
                idx = (j, i)
        s = Sym(PARAM, self.decl.name, tuple(idx), (), self.deps,
                self.positive)
        return Expr.from_sym(s) * Expr.from_rational(sign)


# -- evaluation --------------------------------------------------------------

class Evaluator:
    """Resolve AST nodes to Expr over a chart, with the summation
    convention over repeated declared index variables."""

    def __init__(self, tf: TheoryFile):
        self.tf = tf
        self.chart = tf.chart

    def expr(self, node: Node, env: Mapping[str, int]) -> Expr:
        if isinstance(node, Num):
            return Expr.from_rational(node.value)
        if isinstance(node, Neg):
            return -self.expr(node.inner, env)
        if isinstance(node, Pow):
            base = self.expr(node.base, env)
            return base ** node.exp if node.exp >= 0 else \
                (base ** (-node.exp)).inverse("declared power")
        if isinstance(node, BinOp):
            if node.op == "+":
                return self.sum_node(node, env)
            if node.op == "-":
                return self.sum_node(node, env)
            return self.term(node, env)
        return self.term(node, env)

    def sum_node(self, node: BinOp, env) -> Expr:
        left = self.expr(node.left, env)
        right = self.term_or_expr(node.right, env)
        return left + right if node.op == "+" else left - right

    def term_or_expr(self, node, env):
        return self.expr(node, env)

    def term(self, node: Node, env: Mapping[str, int]) -> Expr:
        """Multiplicative term: apply the summation convention."""
        counts: dict[str, int] = {}
        for v in node.index_vars():
            if v in env or v in self.tf.indices:
                counts[v] = counts.get(v, 0) + 1
        summed = [v for v, k in counts.items() if v not in env and k >= 2]
        free = [v for v, k in counts.items() if v not in env and k == 1]
        bad = [v for v in free if v in self.tf.indices]
        if bad:
            line = getattr(node, "line", 0)
            raise DslError(
                f"index {bad[0]!r} appears once in a term and is not bound",
                line or 1, getattr(node, "col", 0) or 1)
        if not summed:
            return self.product(node, env)
        total = Expr.zero()
        for assignment in self._assignments(summed):
            e2 = dict(env)
            e2.update(assignment)
            total = total + self.product(node, e2)
        return total

    def _assignments(self, names):
        if not names:
            yield {}
            return
        head, rest = names[0], names[1:]
        for v in self.tf.indices[head]:
            for sub in self._assignments(rest):
                out = {head: v}
                out.update(sub)
                yield out

    def product(self, node: Node, env) -> Expr:
        if isinstance(node, BinOp) and node.op in "*/":
            left = self.product(node.left, env)
            right = self.product(node.right, env)
            if node.op == "*":
                return left * right
            try:
                return left / right
            except ExprError as exc:
                raise DslError(str(exc), getattr(node, "line", 1) or 1, 1)
        if isinstance(node, Neg):
            return -self.product(node.inner, env)
        if isinstance(node, Pow):
            base = self.product(node.base, env)
            return base ** node.exp if node.exp >= 0 else \
                (base ** (-node.exp)).inverse("declared power")
        if isinstance(node, (Ref, Call, Num)):
            return self.atom(node, env)
        if isinstance(node, BinOp):
            # parenthesized sums inside a product restart the convention
            return self.expr(node, env)
        raise AssertionError(type(node))

    def _idx(self, arg, env, where) -> int:
        if isinstance(arg, Num):
            return int(arg.value)
        if isinstance(arg, Ref) and not arg.args and arg.wrt is None:
            if arg.head in env:
                return env[arg.head]
            raise DslError(f"unbound index {arg.head!r}", where.line or 1,
                           getattr(arg, "col", 0) or 1)
        raise DslError("expected an index", where.line or 1, 1)

    def coordinate(self, ref: Ref, env) -> Sym:
        chart = self.chart
        if ref.head in ("v", "p"):
            inner = ref.args[0]
            f = self.field_sym(inner, env)
            mu = self._idx(ref.wrt, env, ref)
            return chart.velocity(f, mu) if ref.head == "v" \
                else chart.momentum(f, mu)
        if ref.head == self.tf.base_name:
            mu = self._idx(ref.args[0], env, ref)
            if not 0 <= mu < chart.m:
                raise DslError(f"base index {mu} out of range", ref.line or 1,
                               ref.col or 1)
            return chart.base[mu]
        return self.field_sym(ref, env)

    def field_sym(self, ref: Ref, env) -> Sym:
        idx = tuple(self._idx(a, env, ref) for a in ref.args)
        s = Sym(FIELD, ref.head, idx)
        if s not in self.chart.index:
            raise DslError(f"unknown coordinate {ref.pretty()!r}",
                           ref.line or 1, ref.col or 1)
        return s

    def atom(self, node: Node, env) -> Expr:
        if isinstance(node, Num):
            return Expr.from_rational(node.value)
        if isinstance(node, Call):
            if node.head == "sqrt":
                inner = self.expr(node.parts[0], env)
                try:
                    return sqrt_expr(inner)
                except ExprError as exc:
                    raise DslError(str(exc), node.line or 1, node.col or 1)
            if node.head == "det":
                (a, b), inner = node.parts
                ra = self.tf.indices.get(a)
                rb = self.tf.indices.get(b)
                if ra is None or rb is None or len(ra) != len(rb):
                    raise DslError(
                        f"det needs two declared index variables of equal "
                        f"range, got {a!r},{b!r}", node.line or 1,
                        node.col or 1)
                total = Expr.zero()
                vals = list(ra)
                for perm in permutations(range(len(vals))):
                    sign = _perm_sign(perm)
                    prod = Expr.from_rational(sign)
                    for k, pk in enumerate(perm):
                        e2 = dict(env)
                        e2[a] = vals[k]
                        e2[b] = list(rb)[pk]
                        prod = prod * self.expr(node.parts[1], e2)
                    total = total + prod
                return total
            if node.head == "dd":
                inner, coords = node.parts
                base = self.atom_ref(inner, env)
                out = base
                for cref in coords:
                    c = self.coordinate(cref, env)
                    out = out.derivative(c)
                return out
        if isinstance(node, Ref):
            return self.atom_ref(node, env)
        return self.expr(node, env)

    def atom_ref(self, ref: Ref, env) -> Expr:
        head = ref.head
        if head == "delta":
            i, j = (self._idx(a, env, ref) for a in ref.args)
            return Expr.one() if i == j else Expr.zero()
        if head == "eta":
            i, j = (self._idx(a, env, ref) for a in ref.args)
            if i != j:
                return Expr.zero()
            return Expr.from_rational(-1 if i == 0 else 1)
        if head == "lc":
            idx = [self._idx(a, env, ref) for a in ref.args]
            return Expr.from_rational(_levi_civita(idx))
        if head in self.tf.param_fns:
            fam = self.tf.param_fns[head]
            idx = tuple(self._idx(a, env, ref) for a in ref.args)
            if len(idx) != len(fam.decl.index_vars):
                raise DslError(f"parameter {head!r} takes "
                               f"{len(fam.decl.index_vars)} indices",
                               ref.line or 1, ref.col or 1)
            return fam.at(idx)
        try:
            return Expr.from_sym(self.coordinate(ref, env))
        except DslError:
            raise
        except ExprError as exc:
            raise DslError(str(exc), ref.line or 1, ref.col or 1)


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
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


def _levi_civita(idx) -> int:
    if len(set(idx)) != len(idx):
        return 0
    perm = sorted(range(len(idx)), key=lambda k: idx[k])
    return _perm_sign(perm)


# -- top-level parser --------------------------------------------------------

def parse_theory_file(text: str) -> TheoryFile:
    tf = TheoryFile()
    lines = text.splitlines()
    if not any(line.split("#", 1)[0].strip() for line in lines):
        raise DslError("empty theory file", 1, 1, ("theory <name>",))
    pending_symmetry: GeneratorSpec | None = None
    for ln, raw in enumerate(lines, start=1):
        body = raw.split("#", 1)[0].rstrip()
        if not body.strip():
            continue
        indented = body[0] in " \t"
        stripped = body.strip()
        toks = _tokenize(stripped, ln)
        key = toks[0][1] if toks else ""
        if indented:
            if pending_symmetry is None:
                raise DslError("indented line outside a symmetry block", ln, 1)
            _parse_comp_line(pending_symmetry, toks, ln)
            continue
        pending_symmetry = None
        if key == "theory":
            tf.name = _rest_as_name(toks, ln)
        elif key == "dims":
            tf.m = _parse_dims(toks, ln)
        elif key == "base":
            tf.base_name = _rest_as_name(toks, ln)
        elif key == "index":
            _parse_index(tf, toks, ln)
        elif key == "fields":
            _parse_fields(tf, toks, ln)
        elif key == "param":
            _parse_param(tf, toks, ln)
        elif key == "region":
            tf.region_entries.extend(_parse_region(toks, ln))
        elif key == "lagrangian":
            tf.lagrangian_node = _ExprParser(toks[1:], ln).parse()
        elif key == "symmetry":
            pending_symmetry = _parse_symmetry_head(toks, ln)
            tf.generators.append(pending_symmetry)
        else:
            raise DslError(f"unknown block {key!r}", ln, 1,
                           ("theory", "dims", "base", "index", "fields",
                            "param", "region", "lagrangian", "symmetry"))
    _resolve(tf)
    return tf


def _rest_as_name(toks, ln) -> str:
    if len(toks) < 2:
        raise DslError("missing name", ln, 1, ("name",))
    return "".join(t[1] for t in toks[1:])


def _parse_dims(toks, ln) -> int:
    # dims m=4
    if len(toks) != 4 or toks[1][1] != "m" or toks[2][1] != "=" \
            or toks[3][0] != "num":
        raise DslError("dims must read m=<int>", ln, 1, ("m=<int>",))
    m = int(toks[3][1])
    if m < 1:
        raise DslError("base dimension must be >= 1", ln, 1)
    return m


def _parse_index(tf, toks, ln):
    # index i: 1..3
    if len(toks) != 6 or toks[2][1] != ":" or toks[4][1] != "..":
        raise DslError("index must read <var>: <lo>..<hi>", ln, 1,
                       ("<var>: <lo>..<hi>",))
    var = toks[1][1]
    lo, hi = int(toks[3][1]), int(toks[5][1])
    if var in tf.indices:
        raise DslError(f"duplicate index variable {var!r}", ln, toks[1][2])
    if hi < lo:
        raise DslError("empty index range", ln, toks[3][2])
    tf.indices[var] = range(lo, hi + 1)


def _name_with_brackets(toks, i, ln):
    """name or name[i,j]; returns (name, index-vars, next position)."""
    if i >= len(toks) or toks[i][0] != "name":
        col = toks[i][2] if i < len(toks) else 1
        raise DslError("expected a name", ln, col, ("name",))
    name = toks[i][1]
    i += 1
    vars_: list[str] = []
    if i < len(toks) and toks[i][1] == "[":
        i += 1
        while True:
            if i >= len(toks) or toks[i][0] != "name":
                raise DslError("expected an index variable", ln,
                               toks[i][2] if i < len(toks) else 1,
                               ("index variable",))
            vars_.append(toks[i][1])
            i += 1
            if i < len(toks) and toks[i][1] == ",":
                i += 1
                continue
            break
        if i >= len(toks) or toks[i][1] != "]":
            raise DslError("missing ']'", ln,
                           toks[i][2] if i < len(toks) else 1, ("]",))
        i += 1
    return name, vars_, i


def _parse_fields(tf, toks, ln):
    i = 1
    if i >= len(toks):
        raise DslError("fields block is empty", ln, 1, ("field name",))
    while i < len(toks):
        name, vars_, i = _name_with_brackets(toks, i, ln)
        tf.field_decls.append((name, vars_))
        if i < len(toks):
            if toks[i][1] != ",":
                raise DslError("expected ','", ln, toks[i][2], (",",))
            i += 1


def _parse_param(tf, toks, ln):
    name, vars_, i = _name_with_brackets(toks, 1, ln)
    flags: list[str] = []
    if i < len(toks):
        if toks[i][1] != ":":
            raise DslError("expected ':' before param flags", ln, toks[i][2],
                           (":",))
        i += 1
        while i < len(toks):
            if toks[i][0] != "name":
                raise DslError("expected a flag", ln, toks[i][2], ("flag",))
            flag = toks[i][1]
            i += 1
            if i < len(toks) and toks[i][1] == "(":
                if i + 2 < len(toks) and toks[i + 2][1] == ")":
                    flag += f"({toks[i + 1][1]})"
                    i += 3
                else:
                    raise DslError("bad flag arguments", ln, toks[i][2])
            flags.append(flag)
            if i < len(toks) and toks[i][1] == ",":
                i += 1
    tf.params.append(ParamDecl(name, vars_, flags))


def _parse_region(toks, ln):
    entries = []
    i = 1
    while i < len(toks):
        j = i
        depth = 0
        while j < len(toks) and not (toks[j][1] == "=" and depth == 0):
            if toks[j][1] == "(":
                depth += 1
            elif toks[j][1] == ")":
                depth -= 1
            j += 1
        if j >= len(toks):
            raise DslError("region entries read <coord>=<number>", ln, 1,
                           ("<coord>=<number>",))
        ref = _ExprParser(toks[i:j], ln).parse()
        if not isinstance(ref, Ref):
            raise DslError("region keys must be coordinates", ln, toks[i][2])
        k = j + 1
        sign = 1
        if k < len(toks) and toks[k][1] == "-":
            sign = -1
            k += 1
        if k >= len(toks) or toks[k][0] != "num":
            raise DslError("region values are numbers", ln, 1, ("number",))
        num = int(toks[k][1])
        k += 1
        den = 1
        if k < len(toks) and toks[k][1] == "/":
            k += 1
            den = int(toks[k][1])
            k += 1
        entries.append((ref, Fraction(sign * num, den)))
        if k < len(toks) and toks[k][1] == ",":
            k += 1
        i = k
    return entries


def _parse_symmetry_head(toks, ln) -> GeneratorSpec:
    if len(toks) < 2:
        raise DslError("symmetry needs a name", ln, 1, ("name",))
    direct = toks[-1][1] == "direct"
    names = toks[1:len(toks) - 1] if direct else toks[1:]
    if not names:
        raise DslError("symmetry needs a name", ln, 1, ("name",))
    return GeneratorSpec("".join(t[1] for t in names), direct, [])


def _parse_comp_line(gen: GeneratorSpec, toks, ln):
    if not toks or toks[0][1] != "comp":
        raise DslError("symmetry lines read comp <coord>: <expr>", ln, 1,
                       ("comp",))
    # split at the first ':' outside parentheses
    depth, split = 0, None
    for i, t in enumerate(toks):
        if t[1] == "(":
            depth += 1
        elif t[1] == ")":
            depth -= 1
        elif t[1] == ":" and depth == 0:
            split = i
            break
    if split is None:
        raise DslError("missing ':' in comp line", ln, 1, (":",))
    ref = _ExprParser(toks[1:split], ln).parse()
    if not isinstance(ref, Ref):
        raise DslError("comp target must be a coordinate", ln, toks[1][2])
    node = _ExprParser(toks[split + 1:], ln).parse()
    gen.comps.append((ref, node))


def _resolve(tf: TheoryFile):
    if not tf.name:
        raise DslError("missing theory block", 1, 1, ("theory <name>",))
    if tf.m < 1:
        raise DslError("missing dims block", 1, 1, ("dims m=<int>",))
    if tf.lagrangian_node is None:
        raise DslError("missing lagrangian block", 1, 1, ("lagrangian",))
    decls = []
    for name, vars_ in tf.field_decls:
        try:
            ranges = [tf.indices[v] for v in vars_]
        except KeyError as exc:
            raise DslError(f"undeclared index {exc.args[0]!r} in field "
                           f"{name!r}", 1, 1)
        decls.append(FieldDecl(name, ranges))
    chart = build_jet_chart(tf.m, decls, base_name=tf.base_name)
    tf.chart = chart
    for p in tf.params:
        _install_param(tf, p)
    ev = Evaluator(tf)
    region = {}
    for ref, val in tf.region_entries:
        if ref.head in tf.param_fns and ref.wrt is None:
            fam = tf.param_fns[ref.head]
            idx = tuple(ev._idx(a, {}, ref) for a in ref.args)
            sym_expr = fam.at(idx)
            (mono, _), = sym_expr.num.items()
            region[mono[0][0]] = val
        else:
            region[ev.coordinate(ref, {})] = val
    chart.region.update(region)
    tf.lagrangian = ev.expr(tf.lagrangian_node, {})
    for g in tf.generators:
        for ref, node in g.comps:
            free = [v for v in ref.index_vars() if v in tf.indices]
            for assignment in ev._assignments(sorted(set(free))):
                c = ev.coordinate(ref, assignment)
                if not g.direct and c.rank not in (BASE, FIELD):
                    raise DslError(
                        f"symmetry {g.name!r} is not 'direct' but has a "
                        f"component along {c.display()}", 1, 1)
                ev.expr(node, assignment)  # semantic check now
    return tf


def _install_param(tf: TheoryFile, decl: ParamDecl):
    deps: frozenset = frozenset()
    positive = False
    symmetry = None
    for f in decl.flags:
        if f == "positive":
            positive = True
        elif f in ("sym", "antisym"):
            symmetry = f
        elif f == "fn(base)":
            deps = frozenset(tf.chart.base)
        elif f == "fn(fields)":
            deps = frozenset(tf.chart.fields)
        else:
            raise DslError(f"unknown param flag {f!r}", 1, 1,
                           ("positive", "sym", "antisym", "fn(base)",
                            "fn(fields)"))
    try:
        ranges = [tf.indices[v] for v in decl.index_vars]
    except KeyError as exc:
        raise DslError(f"undeclared index {exc.args[0]!r} in param "
                       f"{decl.name!r}", 1, 1)
    tf.param_fns[decl.name] = ParamFamily(decl, ranges, deps, positive,
                                          symmetry)


def resolve_generators(tf: TheoryFile):
    """Expand the symmetry blocks to concrete per-coordinate components.

    Returns [(name, direct, {coordinate Sym: Expr})]; free indices on the
    component target range over their declared values.
    """
    ev = Evaluator(tf)
    out = []
    for g in tf.generators:
        comps: dict = {}
        for ref, node in g.comps:
            free = sorted({v for v in ref.index_vars() if v in tf.indices})
            for assignment in ev._assignments(free):
                c = ev.coordinate(ref, assignment)
                e = ev.expr(node, assignment)
                comps[c] = comps.get(c, Expr.zero()) + e
        comps = {c: e for c, e in comps.items() if not e.is_zero()}
        out.append((g.name, g.direct, comps))
    return out

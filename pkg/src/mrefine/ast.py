"""Core term language: finite types, predicates, schemas, actions, processes.

All terms are immutable values. Operations never mutate; they build new terms.
Sequences and choices are kept as flattened n-ary lists so that rewrite paths
can address any operand uniformly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields


class KernelError(Exception):
    """Malformed term construction."""


class CaptureError(KernelError):
    """A substitution value would be captured by a binder."""


class _Node:
    """Base for all term nodes: frozen dataclasses with a cached hash."""

    def __hash__(self):
        h = self.__dict__.get("_h")
        if h is None:
            vals = tuple(getattr(self, f.name) for f in fields(self))
            h = hash((self.__class__.__name__, vals))
            object.__setattr__(self, "_h", h)
        return h

    def children(self):
        return ()


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=True)
class FiniteType(_Node):
    """A named finite carrier: enumeration literals or a bounded int range."""

    name: str
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise KernelError(f"type {self.name} has an empty domain")
        if len(set(self.values)) != len(self.values):
            raise KernelError(f"type {self.name} has duplicate values")

    @staticmethod
    def int_range(name, lo, hi):
        if lo > hi:
            raise KernelError(f"type {name}: bad range {lo}..{hi}")
        return FiniteType(name, tuple(range(lo, hi + 1)))

    @property
    def is_int_range(self):
        vs = self.values
        return (all(isinstance(v, int) for v in vs)
                and list(vs) == list(range(vs[0], vs[-1] + 1)))


@dataclass(frozen=True, eq=True)
class BagType(_Node):
    """Bag-of-T, allowed only for schema input/output parameters."""

    elem: FiniteType

    @property
    def name(self):
        return f"bag {self.elem.name}"


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------
# Variable identifiers keep their decoration: "x" plain, "x'" primed,
# "f?" input, "r!" output.  Decorations are part of the name.

class Expr(_Node):
    pass


@dataclass(frozen=True, eq=True)
class Lit(Expr):
    value: object  # int or enum literal (str)


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Arith(Expr):
    op: str  # + - * div mod
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class BagLit(Expr):
    items: tuple  # of Expr

    def children(self):
        return self.items


@dataclass(frozen=True, eq=True)
class SeqLit(Expr):
    items: tuple

    def children(self):
        return self.items


@dataclass(frozen=True, eq=True)
class SetLit(Expr):
    items: tuple

    def children(self):
        return self.items


@dataclass(frozen=True, eq=True)
class Items(Expr):
    """Canonical sequence arrangement (sorted) of a bag expression."""

    bag: Expr

    def children(self):
        return (self.bag,)


@dataclass(frozen=True, eq=True)
class Fold(Expr):
    """fold op zero seq  --  op is a declared binary operation name."""

    op: str
    zero: Expr
    seq: Expr

    def children(self):
        return (self.zero, self.seq)


@dataclass(frozen=True, eq=True)
class Card(Expr):
    """Cardinality of a finite set expression."""

    set: Expr

    def children(self):
        return (self.set,)


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

class Pred(_Node):
    pass


@dataclass(frozen=True, eq=True)
class BoolLit(Pred):
    value: bool


TRUE = BoolLit(True)
FALSE = BoolLit(False)


@dataclass(frozen=True, eq=True)
class Cmp(Pred):
    op: str  # = != < <=
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class And(Pred):
    terms: tuple

    def children(self):
        return self.terms


@dataclass(frozen=True, eq=True)
class Or(Pred):
    terms: tuple

    def children(self):
        return self.terms


@dataclass(frozen=True, eq=True)
class Not(Pred):
    term: Pred

    def children(self):
        return (self.term,)


@dataclass(frozen=True, eq=True)
class Implies(Pred):
    left: Pred
    right: Pred

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Quant(Pred):
    kind: str  # exists | forall
    var: str
    type: FiniteType
    body: Pred

    def children(self):
        return (self.body,)


@dataclass(frozen=True, eq=True)
class Member(Pred):
    item: Expr
    set: Expr

    def children(self):
        return (self.item, self.set)


@dataclass(frozen=True, eq=True)
class InTable(Pred):
    """Explicit value-set constraint over a tuple of variables."""

    vars: tuple  # of str
    rows: frozenset  # of value tuples


def conj(parts):
    parts = [p for p in parts if p != TRUE]
    flat = []
    for p in parts:
        flat.extend(p.terms if isinstance(p, And) else (p,))
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(parts):
    flat = []
    for p in parts:
        flat.extend(p.terms if isinstance(p, Or) else (p,))
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------

ROLES = ("delta", "xi", "input", "output", "plain")


@dataclass(frozen=True, eq=True)
class SigEntry(_Node):
    var: str
    type: object  # FiniteType | BagType
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise KernelError(f"bad role {self.role}")
        if isinstance(self.type, BagType) and self.role not in ("input", "output"):
            raise KernelError(f"bag-typed {self.var} must be an input or output")

    @property
    def decorated(self):
        if self.role == "input":
            return self.var + "?"
        if self.role == "output":
            return self.var + "!"
        return self.var


def prime(name):
    return name + "'"


def is_primed(name):
    return name.endswith("'")


def unprime(name):
    return name[:-1] if name.endswith("'") else name


@dataclass(frozen=True, eq=True)
class Schema(_Node):
    """Named operation: typed signature with roles plus a predicate.

    delta/xi entries implicitly introduce primed counterparts; xi entries
    additionally constrain v' = v.  Input/output entries are referenced in
    predicates with their ?/! decoration.
    """

    name: str
    signature: tuple  # of SigEntry
    predicate: Pred

    def __post_init__(self):
        seen = set()
        for e in self.signature:
            if e.var in seen:
                raise KernelError(f"schema {self.name}: duplicate entry {e.var}")
            seen.add(e.var)

    def entries(self, *roles):
        return tuple(e for e in self.signature if e.role in roles)

    def entry(self, var):
        for e in self.signature:
            if e.var == var:
                return e
        return None

    def declared_names(self):
        """All variable names a predicate over this schema may mention."""
        names = set()
        for e in self.signature:
            if e.role in ("delta", "xi"):
                names.add(e.var)
                names.add(prime(e.var))
            else:
                names.add(e.decorated)
        return names


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------

class Action(_Node):
    pass


@dataclass(frozen=True, eq=True)
class Skip(Action):
    pass


@dataclass(frozen=True, eq=True)
class Stop(Action):
    pass


@dataclass(frozen=True, eq=True)
class SchemaAct(Action):
    """A schema used as an action; actuals bind input/output params in order.

    Input actuals are expressions; output actuals are variable names that
    receive the produced values.
    """

    schema: str
    args: tuple = ()

    def children(self):
        return self.args


@dataclass(frozen=True, eq=True)
class SchemaConj(Action):
    """Schema conjunction used as a single atomic action."""

    items: tuple  # of SchemaAct

    def __post_init__(self):
        if len(self.items) < 2:
            raise KernelError("schema conjunction needs at least two operands")


@dataclass(frozen=True, eq=True)
class ZSeq(Action):
    """Relational (schema) composition, distinct from action sequence."""

    items: tuple  # of SchemaAct

    def __post_init__(self):
        if len(self.items) < 2:
            raise KernelError("schema composition needs at least two operands")


@dataclass(frozen=True, eq=True)
class Assign(Action):
    var: str
    expr: Expr


@dataclass(frozen=True, eq=True)
class Prefix(Action):
    """Channel engagement: sync `c`, input `c?x` (binds x), output `c!e`."""

    channel: str
    kind: str  # sync | in | out
    payload: object  # None | str (bound var) | Expr
    body: Action

    def __post_init__(self):
        if self.kind not in ("sync", "in", "out"):
            raise KernelError(f"bad prefix kind {self.kind}")


@dataclass(frozen=True, eq=True)
class ExtChoice(Action):
    items: tuple


@dataclass(frozen=True, eq=True)
class IntChoice(Action):
    items: tuple


@dataclass(frozen=True, eq=True)
class Seq(Action):
    items: tuple


@dataclass(frozen=True, eq=True)
class Parallel(Action):
    ns1: frozenset
    cs: frozenset
    ns2: frozenset
    left: Action
    right: Action

    def __post_init__(self):
        overlap = self.ns1 & self.ns2
        if overlap:
            raise KernelError(f"parallel namesets overlap on {sorted(overlap)}")


@dataclass(frozen=True, eq=True)
class Interleave(Action):
    left: Action
    right: Action


@dataclass(frozen=True, eq=True)
class Hide(Action):
    body: Action
    channels: frozenset


@dataclass(frozen=True, eq=True)
class Rec(Action):
    binder: str
    body: Action


@dataclass(frozen=True, eq=True)
class RecCall(Action):
    binder: str


@dataclass(frozen=True, eq=True)
class Wait(Action):
    lo: int
    hi: int

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi):
            raise KernelError(f"bad wait interval {self.lo}..{self.hi}")


@dataclass(frozen=True, eq=True)
class TermDeadline(Action):
    """A deadline_t T: the body must terminate within T ticks."""

    body: Action
    ticks: int

    def __post_init__(self):
        if self.ticks < 0:
            raise KernelError("negative deadline")


@dataclass(frozen=True, eq=True)
class SyncDeadline(Action):
    """A deadline_s T: the body must engage a visible event within T ticks."""

    body: Action
    ticks: int

    def __post_init__(self):
        if self.ticks < 0:
            raise KernelError("negative deadline")


@dataclass(frozen=True, eq=True)
class VarBlock(Action):
    decls: tuple  # of (name, FiniteType)
    body: Action


@dataclass(frozen=True, eq=True)
class Guard(Action):
    pred: Pred
    body: Action


SKIP = Skip()
STOP = Stop()


def seq(items):
    """n-ary sequence, flattened; empty is Skip, singleton is the operand."""
    flat = []
    for a in items:
        flat.extend(a.items if isinstance(a, Seq) else (a,))
    if not flat:
        return SKIP
    if len(flat) == 1:
        return flat[0]
    return Seq(tuple(flat))


def extchoice(items):
    flat = []
    for a in items:
        flat.extend(a.items if isinstance(a, ExtChoice) else (a,))
    if len(flat) == 1:
        return flat[0]
    return ExtChoice(tuple(flat))


def intchoice(items):
    flat = []
    for a in items:
        flat.extend(a.items if isinstance(a, IntChoice) else (a,))
    if len(flat) == 1:
        return flat[0]
    return IntChoice(tuple(flat))


def zseq(items):
    flat = []
    for a in items:
        flat.extend(a.items if isinstance(a, ZSeq) else (a,))
    if len(flat) == 1:
        return flat[0]
    return ZSeq(tuple(flat))


# ---------------------------------------------------------------------------
# Processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=True)
class Channel(_Node):
    name: str
    payload: object = None  # FiniteType | None


@dataclass(frozen=True, eq=True)
class BinOp(_Node):
    """Declared binary operation over a finite type, given by an expression
    in the formal operands `a` and `b`, with a designated zero element."""

    name: str
    operand_type: FiniteType
    expr: Expr
    zero: object  # a value


@dataclass(frozen=True, eq=True)
class ProcessDef(_Node):
    name: str
    channels: tuple  # of Channel
    state: Schema  # operation-free: plain-role components + invariant
    defs: tuple  # of (name, Schema | Action) in declaration order
    main: Action
    binops: tuple = ()  # of BinOp
    types: tuple = ()  # declared FiniteTypes, in declaration order

    def channel(self, name):
        for c in self.channels:
            if c.name == name:
                return c
        return None

    def lookup(self, name):
        for n, d in self.defs:
            if n == name:
                return d
        return None

    def schema(self, name):
        d = self.lookup(name)
        return d if isinstance(d, Schema) else None

    def binop(self, name):
        for b in self.binops:
            if b.name == name:
                return b
        return None

    def state_vars(self):
        return tuple(e.var for e in self.state.signature)

    def state_types(self):
        return {e.var: e.type for e in self.state.signature}

    def with_main(self, main):
        return ProcessDef(self.name, self.channels, self.state, self.defs,
                          main, self.binops, self.types)

    def with_def(self, name, value):
        for i, (n, _) in enumerate(self.defs):
            if n == name:
                ds = list(self.defs)
                ds[i] = (name, value)
                return ProcessDef(self.name, self.channels, self.state,
                                  tuple(ds), self.main, self.binops, self.types)
        return ProcessDef(self.name, self.channels, self.state,
                          self.defs + ((name, value),), self.main, self.binops,
                          self.types)

    def with_channel(self, chan):
        if self.channel(chan.name) is not None:
            raise KernelError(f"channel {chan.name} already declared")
        return ProcessDef(self.name, self.channels + (chan,), self.state,
                          self.defs, self.main, self.binops, self.types)


# ---------------------------------------------------------------------------
# Free variables and substitution
# ---------------------------------------------------------------------------

def expr_vars(e):
    """Free variable names of an expression (decorated names as written)."""
    if isinstance(e, Var):
        return {e.name}
    out = set()
    for c in e.children():
        out |= expr_vars(c)
    return out


def pred_vars(p):
    """Free variable names of a predicate."""
    if isinstance(p, (BoolLit,)):
        return set()
    if isinstance(p, Cmp):
        return expr_vars(p.left) | expr_vars(p.right)
    if isinstance(p, (And, Or)):
        return set().union(*(pred_vars(t) for t in p.terms)) if p.terms else set()
    if isinstance(p, Not):
        return pred_vars(p.term)
    if isinstance(p, Implies):
        return pred_vars(p.left) | pred_vars(p.right)
    if isinstance(p, Quant):
        return pred_vars(p.body) - {p.var}
    if isinstance(p, Member):
        return expr_vars(p.item) | expr_vars(p.set)
    if isinstance(p, InTable):
        return set(p.vars)
    raise KernelError(f"unknown predicate node {p!r}")


def _fresh(base, avoid):
    if base not in avoid:
        return base
    stem = base.rstrip("0123456789")
    for i in itertools.count(0):
        cand = f"{stem}{i}"
        if cand not in avoid:
            return cand


def subst_expr(e, mapping):
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Lit):
        return e
    if isinstance(e, Arith):
        return Arith(e.op, subst_expr(e.left, mapping), subst_expr(e.right, mapping))
    if isinstance(e, (BagLit, SeqLit, SetLit)):
        return type(e)(tuple(subst_expr(i, mapping) for i in e.items))
    if isinstance(e, Items):
        return Items(subst_expr(e.bag, mapping))
    if isinstance(e, Fold):
        return Fold(e.op, subst_expr(e.zero, mapping), subst_expr(e.seq, mapping))
    if isinstance(e, Card):
        return Card(subst_expr(e.set, mapping))
    raise KernelError(f"unknown expression node {e!r}")


def subst_pred(p, mapping):
    """Capture-avoiding simultaneous substitution var -> expression."""
    if isinstance(p, BoolLit):
        return p
    if isinstance(p, Cmp):
        return Cmp(p.op, subst_expr(p.left, mapping), subst_expr(p.right, mapping))
    if isinstance(p, And):
        return And(tuple(subst_pred(t, mapping) for t in p.terms))
    if isinstance(p, Or):
        return Or(tuple(subst_pred(t, mapping) for t in p.terms))
    if isinstance(p, Not):
        return Not(subst_pred(p.term, mapping))
    if isinstance(p, Implies):
        return Implies(subst_pred(p.left, mapping), subst_pred(p.right, mapping))
    if isinstance(p, Quant):
        inner = {k: v for k, v in mapping.items() if k != p.var}
        if not inner:
            return p
        value_vars = set().union(*(expr_vars(v) for v in inner.values()))
        var, body = p.var, p.body
        if var in value_vars:
            avoid = value_vars | pred_vars(body) | set(inner)
            var = _fresh(p.var, avoid)
            body = subst_pred(body, {p.var: Var(var)})
        return Quant(p.kind, var, p.type, subst_pred(body, inner))
    if isinstance(p, Member):
        return Member(subst_expr(p.item, mapping), subst_expr(p.set, mapping))
    if isinstance(p, InTable):
        new_vars = []
        for v in p.vars:
            r = mapping.get(v)
            if r is None:
                new_vars.append(v)
            elif isinstance(r, Var):
                new_vars.append(r.name)
            else:
                raise CaptureError(
                    f"cannot substitute non-variable for {v} in a value table")
        return InTable(tuple(new_vars), p.rows)
    raise KernelError(f"unknown predicate node {p!r}")


def action_channels_syntactic(a):
    """Channel names mentioned anywhere in an action term."""
    out = set()

    def walk(t):
        if isinstance(t, Prefix):
            out.add(t.channel)
        elif isinstance(t, Parallel):
            out.update(t.cs)
        elif isinstance(t, Hide):
            out.update(t.channels)
        for c in _action_children(t):
            walk(c)

    walk(a)
    return out


def _action_children(a):
    if isinstance(a, (Skip, Stop, RecCall, Wait, Assign, SchemaAct)):
        return ()
    if isinstance(a, (SchemaConj, ZSeq, Seq, ExtChoice, IntChoice)):
        return a.items
    if isinstance(a, Prefix):
        return (a.body,)
    if isinstance(a, (Parallel, Interleave)):
        return (a.left, a.right)
    if isinstance(a, (Hide, Rec, TermDeadline, SyncDeadline, VarBlock)):
        return (a.body,)
    if isinstance(a, Guard):
        return (a.body,)
    raise KernelError(f"unknown action node {a!r}")


def action_children(a):
    return _action_children(a)


def subst_action(a, mapping, chan_mapping=None):
    """Capture-avoiding substitution of variables (var -> expr) and channels
    (channel -> channel) through an action term."""
    cm = chan_mapping or {}

    def ch(name):
        return cm.get(name, name)

    def chset(s):
        return frozenset(ch(c) for c in s)

    def go(t, m):
        if isinstance(t, (Skip, Stop, RecCall, Wait)):
            return t
        if isinstance(t, SchemaAct):
            args = []
            for arg in t.args:
                if isinstance(arg, Var) and arg.name in m:
                    r = m[arg.name]
                    args.append(r)
                else:
                    args.append(subst_expr(arg, m) if isinstance(arg, Expr) else arg)
            return SchemaAct(t.schema, tuple(args))
        if isinstance(t, (SchemaConj, ZSeq)):
            return type(t)(tuple(go(i, m) for i in t.items))
        if isinstance(t, Assign):
            tgt = t.var
            if tgt in m:
                r = m[tgt]
                if not isinstance(r, Var):
                    raise CaptureError(f"cannot assign to non-variable target {r!r}")
                tgt = r.name
            return Assign(tgt, subst_expr(t.expr, m))
        if isinstance(t, Prefix):
            if t.kind == "in":
                inner = {k: v for k, v in m.items() if k != t.payload}
                var, body = t.payload, t.body
                value_vars = set().union(*(expr_vars(v) for v in inner.values())) if inner else set()
                if var in value_vars:
                    avoid = value_vars | action_free_vars(body) | set(inner)
                    var = _fresh(var, avoid)
                    body = go(body, {t.payload: Var(var)})
                return Prefix(ch(t.channel), "in", var, go(body, inner))
            payload = subst_expr(t.payload, m) if t.kind == "out" else None
            return Prefix(ch(t.channel), t.kind, payload, go(t.body, m))
        if isinstance(t, (Seq, ExtChoice, IntChoice)):
            return type(t)(tuple(go(i, m) for i in t.items))
        if isinstance(t, Parallel):
            return Parallel(t.ns1, chset(t.cs), t.ns2, go(t.left, m), go(t.right, m))
        if isinstance(t, Interleave):
            return Interleave(go(t.left, m), go(t.right, m))
        if isinstance(t, Hide):
            return Hide(go(t.body, m), chset(t.channels))
        if isinstance(t, Rec):
            return Rec(t.binder, go(t.body, m))
        if isinstance(t, (TermDeadline, SyncDeadline)):
            return type(t)(go(t.body, m), t.ticks)
        if isinstance(t, VarBlock):
            names = [n for n, _ in t.decls]
            inner = {k: v for k, v in m.items() if k not in names}
            value_vars = set().union(*(expr_vars(v) for v in inner.values())) if inner else set()
            clash = [n for n in names if n in value_vars]
            decls, body = t.decls, t.body
            if clash:
                avoid = value_vars | action_free_vars(body) | set(inner) | set(names)
                ren = {}
                new_decls = []
                for n, ty in t.decls:
                    if n in clash:
                        f = _fresh(n, avoid)
                        avoid.add(f)
                        ren[n] = Var(f)
                        new_decls.append((f, ty))
                    else:
                        new_decls.append((n, ty))
                decls = tuple(new_decls)
                body = go(body, ren)
            return VarBlock(decls, go(body, inner))
        if isinstance(t, Guard):
            return Guard(subst_pred(t.pred, m), go(t.body, m))
        raise KernelError(f"unknown action node {t!r}")

    return go(a, dict(mapping))


def action_free_vars(a):
    """Free (unbound) variable names occurring in an action term.

    Schema references contribute the names in their argument expressions
    plus nothing for the schema body (which is closed over its signature).
    """
    def go(t, bound):
        out = set()
        if isinstance(t, SchemaAct):
            for arg in t.args:
                out |= expr_vars(arg) - bound
            return out
        if isinstance(t, Assign):
            s = expr_vars(t.expr) | {t.var}
            return s - bound
        if isinstance(t, Prefix):
            if t.kind == "out":
                out |= expr_vars(t.payload) - bound
            if t.kind == "in":
                return out | go(t.body, bound | {t.payload})
            return out | go(t.body, bound)
        if isinstance(t, VarBlock):
            names = {n for n, _ in t.decls}
            return go(t.body, bound | names)
        if isinstance(t, Guard):
            out |= pred_vars(t.pred) - bound
            return out | go(t.body, bound)
        for c in _action_children(t):
            out |= go(c, bound)
        return out

    return go(a, set())


def substitute(term, mapping, chan_mapping=None):
    """Capture-avoiding simultaneous substitution on a predicate or action."""
    if isinstance(term, Pred):
        if chan_mapping:
            raise KernelError("channel mapping does not apply to predicates")
        return subst_pred(term, mapping)
    if isinstance(term, Action):
        return subst_action(term, mapping, chan_mapping)
    if isinstance(term, Expr):
        return subst_expr(term, mapping)
    raise KernelError(f"cannot substitute into {term!r}")


# ---------------------------------------------------------------------------
# Structural (alpha) equality
# ---------------------------------------------------------------------------

def _alpha_key_pred(p, env, counter):
    if isinstance(p, BoolLit):
        return ("b", p.value)
    if isinstance(p, Cmp):
        return ("cmp", p.op, _alpha_key_expr(p.left, env),
                _alpha_key_expr(p.right, env))
    if isinstance(p, (And, Or)):
        tag = "and" if isinstance(p, And) else "or"
        return (tag,) + tuple(_alpha_key_pred(t, env, counter) for t in p.terms)
    if isinstance(p, Not):
        return ("not", _alpha_key_pred(p.term, env, counter))
    if isinstance(p, Implies):
        return ("imp", _alpha_key_pred(p.left, env, counter),
                _alpha_key_pred(p.right, env, counter))
    if isinstance(p, Quant):
        tag = f"@{counter[0]}"
        counter[0] += 1
        env2 = dict(env)
        env2[p.var] = tag
        return ("q", p.kind, p.type, _alpha_key_pred(p.body, env2, counter))
    if isinstance(p, Member):
        return ("mem", _alpha_key_expr(p.item, env), _alpha_key_expr(p.set, env))
    if isinstance(p, InTable):
        return ("tbl", tuple(env.get(v, v) for v in p.vars), p.rows)
    raise KernelError(f"unknown predicate node {p!r}")


def _alpha_key_expr(e, env):
    if isinstance(e, Lit):
        return ("l", e.value)
    if isinstance(e, Var):
        return ("v", env.get(e.name, e.name))
    if isinstance(e, Arith):
        return ("a", e.op, _alpha_key_expr(e.left, env), _alpha_key_expr(e.right, env))
    if isinstance(e, (BagLit, SeqLit, SetLit)):
        return (type(e).__name__,) + tuple(_alpha_key_expr(i, env) for i in e.items)
    if isinstance(e, Items):
        return ("items", _alpha_key_expr(e.bag, env))
    if isinstance(e, Fold):
        return ("fold", e.op, _alpha_key_expr(e.zero, env), _alpha_key_expr(e.seq, env))
    if isinstance(e, Card):
        return ("card", _alpha_key_expr(e.set, env))
    raise KernelError(f"unknown expression node {e!r}")


def _alpha_key_action(a, env, counter):
    def bind(names):
        env2 = dict(env)
        for n in names:
            tag = f"@{counter[0]}"
            counter[0] += 1
            env2[n] = tag
        return env2

    if isinstance(a, Skip):
        return ("skip",)
    if isinstance(a, Stop):
        return ("stop",)
    if isinstance(a, SchemaAct):
        return ("act", a.schema) + tuple(_alpha_key_expr(x, env) for x in a.args)
    if isinstance(a, (SchemaConj, ZSeq)):
        tag = "conj" if isinstance(a, SchemaConj) else "zseq"
        return (tag,) + tuple(_alpha_key_action(i, env, counter) for i in a.items)
    if isinstance(a, Assign):
        return ("asn", env.get(a.var, a.var), _alpha_key_expr(a.expr, env))
    if isinstance(a, Prefix):
        if a.kind == "in":
            env2 = bind([a.payload])
            return ("pfx", a.channel, "in", _alpha_key_action(a.body, env2, counter))
        pay = _alpha_key_expr(a.payload, env) if a.kind == "out" else None
        return ("pfx", a.channel, a.kind, pay, _alpha_key_action(a.body, env, counter))
    if isinstance(a, Seq):
        return ("seq",) + tuple(_alpha_key_action(i, env, counter) for i in a.items)
    if isinstance(a, ExtChoice):
        return ("ext",) + tuple(_alpha_key_action(i, env, counter) for i in a.items)
    if isinstance(a, IntChoice):
        return ("int",) + tuple(_alpha_key_action(i, env, counter) for i in a.items)
    if isinstance(a, Parallel):
        return ("par", frozenset(a.ns1), frozenset(a.cs), frozenset(a.ns2),
                _alpha_key_action(a.left, env, counter),
                _alpha_key_action(a.right, env, counter))
    if isinstance(a, Interleave):
        return ("il", _alpha_key_action(a.left, env, counter),
                _alpha_key_action(a.right, env, counter))
    if isinstance(a, Hide):
        return ("hide", frozenset(a.channels), _alpha_key_action(a.body, env, counter))
    if isinstance(a, Rec):
        env2 = bind([a.binder])
        return ("rec", _alpha_key_action(a.body, env2, counter))
    if isinstance(a, RecCall):
        return ("call", env.get(a.binder, a.binder))
    if isinstance(a, Wait):
        return ("wait", a.lo, a.hi)
    if isinstance(a, (TermDeadline, SyncDeadline)):
        tag = "dt" if isinstance(a, TermDeadline) else "ds"
        return (tag, a.ticks, _alpha_key_action(a.body, env, counter))
    if isinstance(a, VarBlock):
        names = [n for n, _ in a.decls]
        env2 = bind(names)
        types = tuple(t for _, t in a.decls)
        return ("var", types, _alpha_key_action(a.body, env2, counter))
    if isinstance(a, Guard):
        return ("grd", _alpha_key_pred(a.pred, env, counter),
                _alpha_key_action(a.body, env, counter))
    raise KernelError(f"unknown action node {a!r}")


def alpha_key(term):
    """Canonical key: equal keys iff terms are alpha-equivalent (with n-ary
    sequence/choice lists compared as flattened lists)."""
    counter = [0]
    if isinstance(term, Action):
        return _alpha_key_action(_flatten(term), {}, counter)
    if isinstance(term, Pred):
        return _alpha_key_pred(term, {}, counter)
    raise KernelError(f"cannot compare {term!r}")


def _flatten(a):
    """Normalize n-ary lists by flattening nested same-kind nodes."""
    kids = _action_children(a)
    if not kids:
        return a
    if isinstance(a, Seq):
        return seq([_flatten(i) for i in a.items])
    if isinstance(a, ExtChoice):
        return extchoice([_flatten(i) for i in a.items])
    if isinstance(a, IntChoice):
        return intchoice([_flatten(i) for i in a.items])
    if isinstance(a, ZSeq):
        return zseq([_flatten(i) for i in a.items])
    if isinstance(a, SchemaConj):
        return SchemaConj(tuple(_flatten(i) for i in a.items))
    if isinstance(a, Prefix):
        return Prefix(a.channel, a.kind, a.payload, _flatten(a.body))
    if isinstance(a, Parallel):
        return Parallel(a.ns1, a.cs, a.ns2, _flatten(a.left), _flatten(a.right))
    if isinstance(a, Interleave):
        return Interleave(_flatten(a.left), _flatten(a.right))
    if isinstance(a, Hide):
        return Hide(_flatten(a.body), a.channels)
    if isinstance(a, Rec):
        return Rec(a.binder, _flatten(a.body))
    if isinstance(a, (TermDeadline, SyncDeadline)):
        return type(a)(_flatten(a.body), a.ticks)
    if isinstance(a, VarBlock):
        return VarBlock(a.decls, _flatten(a.body))
    if isinstance(a, Guard):
        return Guard(a.pred, _flatten(a.body))
    return a


def structural_eq(a, b):
    """Alpha-equivalence modulo flattening of n-ary operator lists."""
    return alpha_key(a) == alpha_key(b)


def unfold(rec):
    """One unfolding of a recursive action."""
    if not isinstance(rec, Rec):
        raise KernelError("unfold expects a recursion")

    def go(t):
        if isinstance(t, RecCall) and t.binder == rec.binder:
            return rec
        if isinstance(t, Rec) and t.binder == rec.binder:
            return t  # inner binder shadows
        kids = _action_children(t)
        if not kids:
            return t
        if isinstance(t, (Seq, ExtChoice, IntChoice, ZSeq, SchemaConj)):
            return type(t)(tuple(go(i) for i in t.items))
        if isinstance(t, Prefix):
            return Prefix(t.channel, t.kind, t.payload, go(t.body))
        if isinstance(t, Parallel):
            return Parallel(t.ns1, t.cs, t.ns2, go(t.left), go(t.right))
        if isinstance(t, Interleave):
            return Interleave(go(t.left), go(t.right))
        if isinstance(t, Hide):
            return Hide(go(t.body), t.channels)
        if isinstance(t, Rec):
            return Rec(t.binder, go(t.body))
        if isinstance(t, (TermDeadline, SyncDeadline)):
            return type(t)(go(t.body), t.ticks)
        if isinstance(t, VarBlock):
            return VarBlock(t.decls, go(t.body))
        if isinstance(t, Guard):
            return Guard(t.pred, go(t.body))
        raise KernelError(f"unknown action node {t!r}")

    return go(rec.body)

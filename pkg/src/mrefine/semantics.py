"""Bounded discrete-time semantics: schemas as finite relations, timed trace
enumeration, verification-condition discharge, trace equality/inclusion.

Operational model (documented choices):
  * internal steps (schema application, assignment, internal choice,
    recursion unfolding, hidden events) are urgent: they happen before time
    passes at their node;
  * visible events are offered persistently until taken;
  * `wait lo..hi` may terminate at any instant in the interval;
  * termination is immediate at top level but waits for partners in
    parallel compositions;
  * a deadline that can no longer be met stops time on that branch: the
    configuration contributes no further trace extensions;
  * state is unobservable in traces; only channel events and ticks appear.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import ast as A

DEFAULT_CAP = 10_000_000


class SemanticsError(Exception):
    pass


class DomainTooLarge(SemanticsError):
    pass


class UnguardedRecursion(SemanticsError):
    pass


class NamesetViolation(SemanticsError):
    pass


class AlphabetMismatch(SemanticsError):
    pass


class _Undef:
    __slots__ = ()

    def __repr__(self):
        return "<undef>"


UNDEF = _Undef()


@dataclass(frozen=True)
class Bounds:
    max_depth: int = 10
    max_ticks: int = 12

    def __post_init__(self):
        if self.max_depth < 0 or self.max_ticks < 0:
            raise SemanticsError("bounds must be non-negative")

    def covers(self, other):
        return (self.max_depth >= other.max_depth
                and self.max_ticks >= other.max_ticks)


# ---------------------------------------------------------------------------
# Scalar evaluation
# ---------------------------------------------------------------------------

def _sort_key(v):
    return (0, v, "") if isinstance(v, int) else (1, 0, v)


def canon_bag(values):
    return tuple(sorted(values, key=_sort_key))


def eval_expr(e, env, binops=None):
    """Evaluate an expression under an assignment dict name -> value."""
    if isinstance(e, A.Lit):
        return e.value
    if isinstance(e, A.Var):
        if e.name not in env:
            raise SemanticsError(f"unbound variable {e.name}")
        v = env[e.name]
        if v is UNDEF:
            raise SemanticsError(f"read of unassigned local {e.name}")
        return v
    if isinstance(e, A.Arith):
        x = eval_expr(e.left, env, binops)
        y = eval_expr(e.right, env, binops)
        if not (isinstance(x, int) and isinstance(y, int)):
            raise SemanticsError(f"arithmetic on non-integers {x!r}, {y!r}")
        if e.op == "+":
            return x + y
        if e.op == "-":
            return x - y
        if e.op == "*":
            return x * y
        if e.op == "div":
            if y == 0:
                raise SemanticsError("division by zero")
            return x // y
        if e.op == "mod":
            if y == 0:
                raise SemanticsError("division by zero")
            return x % y
        raise SemanticsError(f"unknown operator {e.op}")
    if isinstance(e, A.BagLit):
        return canon_bag(eval_expr(i, env, binops) for i in e.items)
    if isinstance(e, A.SeqLit):
        return tuple(eval_expr(i, env, binops) for i in e.items)
    if isinstance(e, A.SetLit):
        return frozenset(eval_expr(i, env, binops) for i in e.items)
    if isinstance(e, A.Items):
        bag = eval_expr(e.bag, env, binops)
        return tuple(bag)  # bags are kept in canonical sorted order
    if isinstance(e, A.Fold):
        op = (binops or {}).get(e.op)
        if op is None:
            raise SemanticsError(f"unknown binary operation {e.op}")
        acc = eval_expr(e.zero, env, binops)
        for v in eval_expr(e.seq, env, binops):
            acc = apply_binop(op, acc, v)
        return acc
    if isinstance(e, A.Card):
        s = eval_expr(e.set, env, binops)
        return len(s)
    raise SemanticsError(f"cannot evaluate {e!r}")


def apply_binop(op, x, y):
    return eval_expr(op.expr, {"a": x, "b": y})


def eval_pred(p, env, binops=None):
    if isinstance(p, A.BoolLit):
        return p.value
    if isinstance(p, A.Cmp):
        x = eval_expr(p.left, env, binops)
        y = eval_expr(p.right, env, binops)
        if p.op == "=":
            return x == y
        if p.op == "!=":
            return x != y
        if not (isinstance(x, int) and isinstance(y, int)):
            raise SemanticsError("ordering comparison needs integers")
        return x < y if p.op == "<" else x <= y
    if isinstance(p, A.And):
        return all(eval_pred(t, env, binops) for t in p.terms)
    if isinstance(p, A.Or):
        return any(eval_pred(t, env, binops) for t in p.terms)
    if isinstance(p, A.Not):
        return not eval_pred(p.term, env, binops)
    if isinstance(p, A.Implies):
        return (not eval_pred(p.left, env, binops)) or eval_pred(p.right, env, binops)
    if isinstance(p, A.Quant):
        hit = any(eval_pred(p.body, {**env, p.var: v}, binops)
                  for v in p.type.values)
        return hit if p.kind == "exists" else not any(
            not eval_pred(p.body, {**env, p.var: v}, binops)
            for v in p.type.values)
    if isinstance(p, A.Member):
        item = eval_expr(p.item, env, binops)
        s = eval_expr(p.set, env, binops)
        return item in s
    if isinstance(p, A.InTable):
        row = tuple(env[v] for v in p.vars)
        return row in p.rows
    raise SemanticsError(f"cannot evaluate {p!r}")


# ---------------------------------------------------------------------------
# Relational predicate evaluation (satisfying sets)
# ---------------------------------------------------------------------------

def _join(cols_a, rows_a, cols_b, rows_b):
    shared = [c for c in cols_a if c in cols_b]
    extra = [c for c in cols_b if c not in cols_a]
    ia = [cols_a.index(c) for c in shared]
    ib = [cols_b.index(c) for c in shared]
    ie = [cols_b.index(c) for c in extra]
    index = {}
    for r in rows_b:
        index.setdefault(tuple(r[i] for i in ib), []).append(tuple(r[i] for i in ie))
    out = set()
    for r in rows_a:
        for ext in index.get(tuple(r[i] for i in ia), ()):
            out.add(r + ext)
    return cols_a + extra, out


def _extend(cols, rows, want, domains):
    missing = [c for c in want if c not in cols]
    for c in missing:
        dom = domains[c]
        rows = {r + (v,) for r in rows for v in dom}
        cols = cols + [c]
    perm = [cols.index(c) for c in want]
    return [cols[i] for i in perm], {tuple(r[i] for i in perm) for r in rows}


def sat_set(pred, domains, binops=None, cap=DEFAULT_CAP):
    """Satisfying assignments of a predicate as (columns, row set).

    `domains` maps every free variable to its value tuple.
    """
    def space(vs, doms):
        n = 1
        for v in vs:
            n *= len(doms[v])
        return n

    def base(p, doms):
        free = sorted(A.pred_vars(p))
        if space(free, doms) > cap:
            raise DomainTooLarge(f"enumeration space for {free} exceeds cap")
        rows = set()
        for combo in itertools.product(*(doms[v] for v in free)):
            env = dict(zip(free, combo))
            if eval_pred(p, env, binops):
                rows.add(combo)
        return free, rows

    def go(p, doms):
        if isinstance(p, A.BoolLit):
            return [], ({()} if p.value else set())
        if isinstance(p, (A.Cmp, A.Member, A.InTable)):
            return base(p, doms)
        if isinstance(p, A.And):
            cols, rows = [], {()}
            for t in p.terms:
                c2, r2 = go(t, doms)
                cols, rows = _join(cols, rows, c2, r2)
            return cols, rows
        if isinstance(p, A.Or):
            want = sorted(A.pred_vars(p))
            if space(want, doms) > cap:
                raise DomainTooLarge("disjunction space exceeds cap")
            out = set()
            for t in p.terms:
                c2, r2 = go(t, doms)
                _, r2x = _extend(c2, r2, want, doms)
                out |= r2x
            return want, out
        if isinstance(p, A.Not):
            want = sorted(A.pred_vars(p))
            if space(want, doms) > cap:
                raise DomainTooLarge("negation space exceeds cap")
            c2, r2 = go(p.term, doms)
            _, r2x = _extend(c2, r2, want, doms)
            full = set(itertools.product(*(doms[v] for v in want)))
            return want, full - r2x
        if isinstance(p, A.Implies):
            return go(A.disj([A.Not(p.left), p.right]), doms)
        if isinstance(p, A.Quant):
            doms2 = dict(doms)
            doms2[p.var] = tuple(p.type.values)
            if p.kind == "exists":
                c2, r2 = go(p.body, doms2)
                if p.var not in c2:
                    return c2, r2
                keep = [i for i, c in enumerate(c2) if c != p.var]
                return ([c2[i] for i in keep],
                        {tuple(r[i] for i in keep) for r in r2})
            inner = A.Not(A.Quant("exists", p.var, p.type, A.Not(p.body)))
            return go(inner, doms)
        raise SemanticsError(f"cannot evaluate {p!r}")

    cols, rows = go(pred, dict(domains))
    want = sorted(A.pred_vars(pred))
    return _extend(cols, rows, want, domains)


# ---------------------------------------------------------------------------
# Schema relations
# ---------------------------------------------------------------------------

@dataclass
class SchemaRelation:
    """Exhaustive relation of a schema.

    The table is keyed only on the before-variables the predicate actually
    reads (`key_vars`) plus the inputs; before-values of components the
    operation overwrites blindly are don't-cares.  `after_vars` covers the
    delta entries (all other components are preserved)."""

    schema: A.Schema
    before_vars: tuple  # all delta/xi/plain entries, signature order
    key_vars: tuple     # the relevant subset actually read
    after_vars: tuple   # delta entries
    input_vars: tuple   # decorated names
    output_vars: tuple  # decorated names
    table: dict  # (key..., inputs...) -> set of (afters..., outputs...)

    def successors(self, before_env, inputs=()):
        """Successor set for a full before binding (a mapping) and inputs."""
        key = tuple(before_env[v] for v in self.key_vars) + tuple(inputs)
        return self.table.get(key, set())


def _schema_domains(schema, inputs=None):
    domains = {}
    for e in schema.signature:
        if e.role in ("delta", "xi", "plain"):
            domains[e.var] = tuple(e.type.values)
            if e.role in ("delta", "xi"):
                domains[A.prime(e.var)] = tuple(e.type.values)
        else:
            name = e.decorated
            if isinstance(e.type, A.BagType):
                if inputs is None or name not in inputs:
                    raise DomainTooLarge(
                        f"bag parameter {name} needs a supplied value")
                domains[name] = (inputs[name],)
            elif inputs is not None and name in inputs:
                domains[name] = (inputs[name],)
            else:
                domains[name] = tuple(e.type.values)
    return domains


def schema_rel_pred(schema):
    """Predicate of the full relation: declared predicate plus xi equalities."""
    eqs = [A.Cmp("=", A.Var(A.prime(e.var)), A.Var(e.var))
           for e in schema.signature if e.role == "xi"]
    return A.conj([schema.predicate] + eqs)


def eval_schema(schema, binops=None, inputs=None, cap=DEFAULT_CAP):
    """Enumerate a schema as a finite relation.

    `inputs` optionally pins input parameters (required for bag-typed ones):
    a dict over decorated names, e.g. {"rb?": (1, 2)}.
    """
    binops = binops or {}
    domains = _schema_domains(schema, inputs)
    before_vars = tuple(e.var for e in schema.signature
                        if e.role in ("delta", "xi", "plain"))
    after_vars = tuple(e.var for e in schema.signature if e.role == "delta")
    input_vars = tuple(e.decorated for e in schema.signature if e.role == "input")
    output_vars = tuple(e.decorated for e in schema.signature if e.role == "output")

    pred = schema_rel_pred(schema)
    free = sorted(A.pred_vars(pred))
    for v in free:
        if v not in domains:
            raise SemanticsError(
                f"schema {schema.name}: predicate mentions undeclared {v}")
    key_vars = tuple(v for v in before_vars if v in free)
    cols, rows = sat_set(pred, domains, binops, cap)
    want = (list(key_vars) + list(input_vars)
            + [A.prime(v) for v in after_vars] + list(output_vars))
    cols, rows = _extend(cols, rows, want, domains)
    if len(rows) > cap:
        raise DomainTooLarge(
            f"schema {schema.name}: relation size {len(rows)} exceeds cap {cap}")
    nb = len(key_vars) + len(input_vars)
    table = {}
    for r in rows:
        table.setdefault(r[:nb], set()).add(r[nb:])
    return SchemaRelation(schema, before_vars, key_vars, after_vars,
                          input_vars, output_vars, table)


def precondition(schema, binops=None, cap=DEFAULT_CAP):
    """Predicate true exactly on before-bindings (and inputs) that have at
    least one after-binding, as an explicit value table.  Components the
    operation never reads do not constrain the precondition and are omitted
    from the table."""
    rel = eval_schema(schema, binops, None, cap)
    cols = rel.key_vars + rel.input_vars
    rows = frozenset(k for k, vs in rel.table.items() if vs)
    if not cols:
        return A.TRUE if rows else A.FALSE
    if len(rows) == _space(schema, cols):
        return A.TRUE
    if not rows:
        return A.FALSE
    return A.InTable(cols, rows)


def _space(schema, cols):
    n = 1
    doms = _schema_domains(schema)
    for c in cols:
        n *= len(doms[c])
    return n


def compose_schemas(s1, s2, state_entries):
    """Relational composition of two operations over the same state space,
    as a predicate: exists mid . rel1(before, mid) and rel2(mid, after)."""
    mids = {}
    for e in state_entries:
        mids[e.var] = f"{e.var}__mid"
    p1 = schema_rel_pred(_lift_schema(s1, state_entries))
    p2 = schema_rel_pred(_lift_schema(s2, state_entries))
    p1 = A.subst_pred(p1, {A.prime(e.var): A.Var(mids[e.var]) for e in state_entries})
    p2 = A.subst_pred(p2, {e.var: A.Var(mids[e.var]) for e in state_entries})
    body = A.conj([p1, p2])
    for e in reversed(state_entries):
        body = A.Quant("exists", mids[e.var], e.type, body)
    return body


def _lift_schema(s, state_entries):
    """Extend a schema to the full state: unmentioned components become xi."""
    have = {e.var for e in s.signature}
    extra = tuple(A.SigEntry(e.var, e.type, "xi")
                  for e in state_entries if e.var not in have)
    return A.Schema(s.name, s.signature + extra, s.predicate)


def lifted_rel_pred(s, state_entries):
    """Full-state relation predicate of an operation schema."""
    return schema_rel_pred(_lift_schema(s, state_entries))


# ---------------------------------------------------------------------------
# Timed operational semantics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=True)
class LocalScope(A.Action):
    """Semantics-internal wrapper holding live local-variable frames."""

    body: A.Action
    frame: tuple  # of (name, value)


@dataclass
class Moves:
    events: list = field(default_factory=list)  # (chan, value, term', sigma', lw)
    taus: list = field(default_factory=list)    # (term', sigma', lw)
    can_term: bool = False
    tick: object = None                         # term' or None


@dataclass(frozen=True)
class Config:
    """Residual action, state binding and elapsed ticks."""

    term: A.Action
    binding: tuple
    elapsed: int = 0


class SemCtx:
    """Evaluation context for one process: schema relations, channels, caps."""

    def __init__(self, process, cap=DEFAULT_CAP):
        self.process = process
        self.cap = cap
        self.binops = {b.name: b for b in process.binops}
        self.state_vars = process.state_vars()
        self.state_index = {v: i for i, v in enumerate(self.state_vars)}
        self.state_types = process.state_types()
        self.channels = {c.name: c for c in process.channels}
        self._rel_cache = {}
        self._merge_cache = {}
        self._unfold_cache = {}
        self._explore_cache = {}
        self._closure_cache = {}
        self._dsucc_cache = {}
        self.visited = 0

    def closure(self, term, sigma):
        """Configurations reachable by internal steps, the entry included."""
        hit = self._closure_cache.get((term, sigma))
        if hit is not None:
            return hit
        seen = {(term, sigma)}
        stack = [(term, sigma)]
        order = []
        while stack:
            cfg = stack.pop()
            order.append(cfg)
            mv = explore(self, cfg[0], cfg[1])
            for (t2, sg2, lw) in mv.taus:
                if lw:
                    raise SemanticsError("local write escaped all scopes")
                if (t2, sg2) not in seen:
                    seen.add((t2, sg2))
                    stack.append((t2, sg2))
        order = tuple(order)
        self._closure_cache[(term, sigma)] = order
        return order

    def initial_binding(self):
        return tuple(self.state_types[v].values[0] for v in self.state_vars)

    def chan_values(self, name):
        ch = self.channels.get(name)
        if ch is None:
            raise SemanticsError(f"undeclared channel {name}")
        if ch.payload is None:
            return (None,)
        return ch.payload.values

    def relation(self, schema, inputs_key):
        key = (schema, inputs_key)
        rel = self._rel_cache.get(key)
        if rel is None:
            rel = eval_schema(schema, self.binops, dict(inputs_key), self.cap)
            self._rel_cache[key] = rel
        return rel

    def merged_conj(self, conj):
        s = self._merge_cache.get(conj)
        if s is None:
            s = merge_conjunction(self.process, conj)
            self._merge_cache[conj] = s
        return s

    def unfold(self, rec):
        t = self._unfold_cache.get(rec)
        if t is None:
            t = A.unfold(rec)
            self._unfold_cache[rec] = t
        return t


def merge_conjunction(process, conj):
    """One schema equivalent to a conjunction of schema references.

    Shared delta/xi names keep the stronger constraint; shared input names
    must receive identical actuals at the call site.
    """
    entries = {}
    order = []
    preds = []
    args = []
    for item in conj.items:
        s = process.schema(item.schema)
        if s is None:
            raise SemanticsError(f"unknown schema {item.schema}")
        preds.append(s.predicate)
        params = s.entries("input", "output")
        if len(params) != len(item.args):
            raise SemanticsError(f"{item.schema}: wrong argument count")
        for e in s.signature:
            prev = entries.get(e.var)
            if prev is None:
                entries[e.var] = e
                order.append(e.var)
            elif prev.role != e.role:
                if {prev.role, e.role} == {"delta", "xi"}:
                    entries[e.var] = A.SigEntry(e.var, e.type, "delta")
                    preds.append(A.Cmp("=", A.Var(A.prime(e.var)), A.Var(e.var)))
                else:
                    raise SemanticsError(
                        f"conjunction role clash on {e.var}")
        for e, a in zip(params, item.args):
            args.append((e.decorated, a))
    seen = {}
    merged_args = []
    for name, a in args:
        if name in seen:
            if seen[name] != a:
                raise SemanticsError(
                    f"conjunction binds parameter {name} twice differently")
            continue
        seen[name] = a
        merged_args.append(a)
    name = "_and_".join(i.schema for i in conj.items)
    sig = tuple(entries[v] for v in order)
    return A.Schema(name, sig, A.conj(preds)), tuple(merged_args)


def _locate(name, env, ctx):
    """Where a variable name resolves: ('local', depth) or ('state', idx)."""
    for d in range(len(env) - 1, -1, -1):
        if any(n == name for n, _ in env[d]):
            return ("local", d)
    if name in ctx.state_index:
        return ("state", ctx.state_index[name])
    return None


def _read(name, sigma, env, ctx):
    loc = _locate(name, env, ctx)
    if loc is None:
        raise SemanticsError(f"unbound variable {name}")
    if loc[0] == "state":
        return sigma[loc[1]]
    for n, v in env[loc[1]]:
        if n == name:
            if v is UNDEF:
                raise SemanticsError(f"read of unassigned local {name}")
            return v
    raise SemanticsError(f"unbound variable {name}")


def _scalar_env(sigma, env, ctx):
    out = dict(zip(ctx.state_vars, sigma))
    for frame in env:
        for n, v in frame:
            out[n] = v
    return out


def apply_atomic(ctx, term, sigma, env):
    """All outcomes of an atomic data operation: list of (sigma', lw).

    lw is a tuple of (depth, name, value) local writes for enclosing scopes.
    """
    if isinstance(term, A.SchemaConj):
        schema, args = ctx.merged_conj(term)
        return _apply_schema(ctx, schema, args, sigma, env)
    if isinstance(term, A.SchemaAct):
        s = ctx.process.schema(term.schema)
        if s is None:
            raise SemanticsError(f"unknown schema {term.schema}")
        return _apply_schema(ctx, s, term.args, sigma, env)
    if isinstance(term, A.ZSeq):
        states = [(sigma, {})]
        for item in term.items:
            nxt = []
            for sg, lws in states:
                env2 = _patch_env(env, lws)
                for sg2, lw2 in apply_atomic(ctx, item, sg, env2):
                    merged = dict(lws)
                    for d, n, v in lw2:
                        merged[(d, n)] = v
                    nxt.append((sg2, merged))
            states = nxt
        out = []
        seen = set()
        for sg, lws in states:
            lw = tuple(sorted((d, n, v) for (d, n), v in lws.items()))
            key = (sg, lw)
            if key not in seen:
                seen.add(key)
                out.append((sg, lw))
        return out
    raise SemanticsError(f"not an atomic operation: {term!r}")


def _patch_env(env, lws):
    if not lws:
        return env
    env2 = list(env)
    for (d, n), v in lws.items():
        frame = list(env2[d])
        for i, (fn, _) in enumerate(frame):
            if fn == n:
                frame[i] = (n, v)
        env2[d] = tuple(frame)
    return tuple(env2)


def _apply_schema(ctx, schema, args, sigma, env):
    params = schema.entries("input", "output")
    if len(params) != len(args):
        raise SemanticsError(f"{schema.name}: wrong argument count")
    scal = _scalar_env(sigma, env, ctx)
    inputs = {}
    out_targets = []
    for e, a in zip(params, args):
        if e.role == "input":
            v = eval_expr(a, scal, ctx.binops)
            if isinstance(e.type, A.BagType):
                if not isinstance(v, tuple):
                    raise SemanticsError(f"{schema.name}: {e.var} needs a bag")
            elif v not in e.type.values:
                raise SemanticsError(
                    f"{schema.name}: input {e.var} value {v!r} outside domain")
            inputs[e.decorated] = v
        else:
            if not isinstance(a, A.Var):
                raise SemanticsError(f"{schema.name}: output target must be a variable")
            out_targets.append((e, a.name))
    rel = ctx.relation(schema, tuple(sorted(inputs.items())))
    before = []
    for v in rel.key_vars:
        before.append(_read(v, sigma, env, ctx))
    key = tuple(before) + tuple(inputs[v] for v in rel.input_vars)
    outcomes = []
    for row in sorted(rel.table.get(key, ()), key=repr):
        afters = dict(zip([A.prime(v) for v in rel.after_vars],
                          row[:len(rel.after_vars)]))
        outs = dict(zip(rel.output_vars, row[len(rel.after_vars):]))
        sigma2 = list(sigma)
        lw = []
        for v in rel.after_vars:
            _write(v, afters[A.prime(v)], sigma2, lw, env, ctx)
        for (e, target) in out_targets:
            _write(target, outs[e.decorated], sigma2, lw, env, ctx)
        outcomes.append((tuple(sigma2), tuple(sorted(lw))))
    return outcomes


def _write(name, value, sigma_list, lw, env, ctx):
    loc = _locate(name, env, ctx)
    if loc is None:
        raise SemanticsError(f"cannot write to unbound {name}")
    if loc[0] == "state":
        ty = ctx.state_types[ctx.state_vars[loc[1]]]
        if value not in ty.values:
            raise SemanticsError(
                f"value {value!r} outside domain of {name}")
        sigma_list[loc[1]] = value
    else:
        lw.append((loc[1], name, value))


# -- move computation --------------------------------------------------------

def explore(ctx, term, sigma, env=()):
    key = (term, sigma, env)
    hit = ctx._explore_cache.get(key)
    if hit is not None:
        return hit
    ctx.visited += 1
    if ctx.visited > ctx.cap:
        raise DomainTooLarge(f"state space exceeds cap {ctx.cap}")
    m = _explore(ctx, term, sigma, env)
    ctx._explore_cache[key] = m
    return m


def _explore(ctx, t, sigma, env):
    m = Moves()
    if isinstance(t, A.Skip):
        m.can_term = True
        return m
    if isinstance(t, A.Stop):
        m.tick = t
        return m
    if isinstance(t, A.Wait):
        m.can_term = t.lo == 0
        if t.hi > 0:
            m.tick = A.Wait(max(t.lo - 1, 0), t.hi - 1)
        return m
    if isinstance(t, (A.SchemaAct, A.SchemaConj, A.ZSeq)):
        for sigma2, lw in apply_atomic(ctx, t, sigma, env):
            m.taus.append((A.SKIP, sigma2, lw))
        return m
    if isinstance(t, A.Assign):
        scal = _scalar_env(sigma, env, ctx)
        v = eval_expr(t.expr, scal, ctx.binops)
        loc = _locate(t.var, env, ctx)
        if loc is None:
            raise SemanticsError(f"cannot assign to unbound {t.var}")
        if loc[0] == "state":
            ty = ctx.state_types[t.var]
            if v not in ty.values:
                raise SemanticsError(f"value {v!r} outside domain of {t.var}")
            sigma2 = list(sigma)
            sigma2[loc[1]] = v
            m.taus.append((A.SKIP, tuple(sigma2), ()))
        else:
            m.taus.append((A.SKIP, sigma, ((loc[1], t.var, v),)))
        return m
    if isinstance(t, A.Prefix):
        if t.kind == "sync":
            m.events.append((t.channel, None, t.body, sigma, ()))
        elif t.kind == "out":
            scal = _scalar_env(sigma, env, ctx)
            v = eval_expr(t.payload, scal, ctx.binops)
            ch = ctx.channels.get(t.channel)
            if ch is None:
                raise SemanticsError(f"undeclared channel {t.channel}")
            if ch.payload is not None and v not in ch.payload.values:
                raise SemanticsError(
                    f"channel {t.channel}: value {v!r} outside payload domain")
            m.events.append((t.channel, v, t.body, sigma, ()))
        else:
            for v in ctx.chan_values(t.channel):
                m.events.append((t.channel, v,
                                 LocalScope(t.body, ((t.payload, v),)), sigma, ()))
        m.tick = t
        return m
    if isinstance(t, A.Guard):
        scal = _scalar_env(sigma, env, ctx)
        if eval_pred(t.pred, scal, ctx.binops):
            return _explore(ctx, t.body, sigma, env)
        m.tick = t
        return m
    if isinstance(t, A.Seq):
        head, rest = t.items[0], t.items[1:]
        sub = explore(ctx, head, sigma, env)
        for (c, v, t2, sg2, lw) in sub.events:
            m.events.append((c, v, A.seq([t2, *rest]), sg2, lw))
        for (t2, sg2, lw) in sub.taus:
            m.taus.append((A.seq([t2, *rest]), sg2, lw))
        if sub.can_term:
            m.taus.append((A.seq(rest), sigma, ()))
        if sub.tick is not None:
            m.tick = A.seq([sub.tick, *rest])
        return m
    if isinstance(t, A.ExtChoice):
        ticks = []
        for i, b in enumerate(t.items):
            sub = explore(ctx, b, sigma, env)
            m.events.extend(sub.events)
            for (t2, sg2, lw) in sub.taus:
                items = list(t.items)
                items[i] = t2
                m.taus.append((A.extchoice(items), sg2, lw))
            if sub.can_term:
                m.can_term = True
            ticks.append(sub.tick)
        if all(tk is not None for tk in ticks):
            m.tick = A.extchoice(ticks)
        return m
    if isinstance(t, A.IntChoice):
        for b in t.items:
            m.taus.append((b, sigma, ()))
        return m
    if isinstance(t, A.Parallel) or isinstance(t, A.Interleave):
        if isinstance(t, A.Parallel):
            ns1, cs, ns2 = t.ns1, t.cs, t.ns2
            check_ns = True
        else:
            ns1 = ns2 = frozenset()
            cs = frozenset()
            check_ns = False

        def rebuild(l, r):
            if isinstance(t, A.Parallel):
                return A.Parallel(ns1, cs, ns2, l, r)
            return A.Interleave(l, r)

        sl = explore(ctx, t.left, sigma, env)
        sr = explore(ctx, t.right, sigma, env)
        if check_ns:
            _assert_ns(ctx, t.left, sl, sigma, ns1, "left")
            _assert_ns(ctx, t.right, sr, sigma, ns2, "right")
        for (c, v, t2, sg2, lw) in sl.events:
            if c not in cs:
                m.events.append((c, v, rebuild(t2, t.right), sg2, lw))
        for (c, v, t2, sg2, lw) in sr.events:
            if c not in cs:
                m.events.append((c, v, rebuild(t.left, t2), sg2, lw))
        for (c, v, tl, sgl, lwl) in sl.events:
            if c not in cs:
                continue
            for (c2, v2, tr, sgr, lwr) in sr.events:
                if c2 == c and v2 == v:
                    m.events.append((c, v, rebuild(tl, tr), sigma, lwl + lwr))
        for (t2, sg2, lw) in sl.taus:
            m.taus.append((rebuild(t2, t.right), sg2, lw))
        for (t2, sg2, lw) in sr.taus:
            m.taus.append((rebuild(t.left, t2), sg2, lw))
        m.can_term = sl.can_term and sr.can_term
        lt = sl.tick if sl.tick is not None else (t.left if sl.can_term else None)
        rt = sr.tick if sr.tick is not None else (t.right if sr.can_term else None)
        if (lt is not None and rt is not None
                and (sl.tick is not None or sr.tick is not None)):
            m.tick = rebuild(lt, rt)
        return m
    if isinstance(t, A.Hide):
        sub = explore(ctx, t.body, sigma, env)
        hidden_ready = False
        for (c, v, t2, sg2, lw) in sub.events:
            if c in t.channels:
                hidden_ready = True
                m.taus.append((A.Hide(t2, t.channels), sg2, lw))
            else:
                m.events.append((c, v, A.Hide(t2, t.channels), sg2, lw))
        for (t2, sg2, lw) in sub.taus:
            m.taus.append((A.Hide(t2, t.channels), sg2, lw))
        m.can_term = sub.can_term
        if sub.tick is not None and not hidden_ready:
            m.tick = A.Hide(sub.tick, t.channels)
        return m
    if isinstance(t, A.Rec):
        m.taus.append((ctx.unfold(t), sigma, ()))
        return m
    if isinstance(t, A.RecCall):
        raise SemanticsError(f"unbound recursion variable {t.binder}")
    if isinstance(t, A.SyncDeadline):
        sub = explore(ctx, t.body, sigma, env)
        for (c, v, t2, sg2, lw) in sub.events:
            m.events.append((c, v, t2, sg2, lw))
        for (t2, sg2, lw) in sub.taus:
            m.taus.append((A.SyncDeadline(t2, t.ticks), sg2, lw))
        m.can_term = sub.can_term
        if t.ticks > 0 and sub.tick is not None:
            m.tick = A.SyncDeadline(sub.tick, t.ticks - 1)
        return m
    if isinstance(t, A.TermDeadline):
        sub = explore(ctx, t.body, sigma, env)
        for (c, v, t2, sg2, lw) in sub.events:
            m.events.append((c, v, A.TermDeadline(t2, t.ticks), sg2, lw))
        for (t2, sg2, lw) in sub.taus:
            m.taus.append((A.TermDeadline(t2, t.ticks), sg2, lw))
        m.can_term = sub.can_term
        if t.ticks > 0 and sub.tick is not None:
            m.tick = A.TermDeadline(sub.tick, t.ticks - 1)
        return m
    if isinstance(t, A.VarBlock):
        frame = tuple((n, UNDEF) for n, _ in t.decls)
        m.taus.append((LocalScope(t.body, frame), sigma, ()))
        return m
    if isinstance(t, LocalScope):
        depth = len(env)
        sub = explore(ctx, t.body, sigma, env + (t.frame,))

        def wrap(t2, lw):
            mine = {n: v for d, n, v in lw if d == depth}
            rest = tuple(e for e in lw if e[0] != depth)
            frame = tuple((n, mine.get(n, v)) for n, v in t.frame)
            return LocalScope(t2, frame), rest

        for (c, v, t2, sg2, lw) in sub.events:
            t3, rest = wrap(t2, lw)
            m.events.append((c, v, t3, sg2, rest))
        for (t2, sg2, lw) in sub.taus:
            t3, rest = wrap(t2, lw)
            m.taus.append((t3, sg2, rest))
        m.can_term = sub.can_term
        if sub.tick is not None:
            m.tick = LocalScope(sub.tick, t.frame)
        return m
    raise SemanticsError(f"cannot execute {t!r}")


def _assert_ns(ctx, operand, moves, sigma, ns, side):
    for (_, sg2, _) in moves.taus:
        for i, (a, b) in enumerate(zip(sigma, sg2)):
            if a != b and ctx.state_vars[i] not in ns:
                raise NamesetViolation(
                    f"{side} parallel operand wrote {ctx.state_vars[i]} "
                    f"outside its nameset {sorted(ns)}")


# -- guardedness --------------------------------------------------------------

def _must_delay(t):
    if isinstance(t, A.Prefix):
        return True
    if isinstance(t, A.Wait):
        return t.lo >= 1
    if isinstance(t, A.Seq):
        return any(_must_delay(i) for i in t.items)
    if isinstance(t, (A.ExtChoice, A.IntChoice)):
        return all(_must_delay(i) for i in t.items)
    if isinstance(t, (A.Parallel, A.Interleave)):
        return _must_delay(t.left) or _must_delay(t.right)
    if isinstance(t, (A.Hide, A.Rec, A.TermDeadline, A.SyncDeadline,
                      A.VarBlock, A.Guard)):
        return _must_delay(t.body)
    if isinstance(t, LocalScope):
        return _must_delay(t.body)
    return False


def check_guarded(action):
    """Every recursive call must be preceded by an event or a forced delay."""

    def go(t, open_binders):
        if isinstance(t, A.RecCall):
            if t.binder in open_binders:
                raise UnguardedRecursion(
                    f"recursion {t.binder} can restart without an event or tick")
            return
        if isinstance(t, A.Rec):
            go(t.body, open_binders | {t.binder})
            return
        if isinstance(t, A.Prefix):
            go(t.body, frozenset())
            return
        if isinstance(t, A.Seq):
            open_now = open_binders
            for item in t.items:
                go(item, open_now)
                if _must_delay(item):
                    open_now = frozenset()
            return
        for c in A.action_children(t):
            go(c, open_binders)

    go(action, frozenset())


# -- trace enumeration ---------------------------------------------------------

TICK_B = b"\x01"
TERM_B = b"\x02"


class TraceCodec:
    def __init__(self, process):
        self.channels = [c.name for c in process.channels]
        self.cindex = {c: i for i, c in enumerate(self.channels)}
        self.vals = {}
        for c in process.channels:
            if c.payload is not None:
                self.vals[c.name] = {v: i for i, v in enumerate(c.payload.values)}

    def event(self, chan, value):
        ci = self.cindex[chan]
        vi = 0 if value is None else self.vals[chan][value] + 1
        return bytes((0x10 + ci, vi))

    def decode(self, trace):
        out = []
        i = 0
        while i < len(trace):
            b = trace[i]
            if b == 1:
                out.append(("tick",))
                i += 1
            elif b == 2:
                out.append(("term",))
                i += 1
            else:
                ci = b - 0x10
                vi = trace[i + 1]
                chan = self.channels[ci]
                if vi == 0:
                    out.append(("event", chan))
                else:
                    inv = {i: v for v, i in self.vals[chan].items()}
                    out.append(("event", chan, inv[vi - 1]))
                i += 2
        return out


def exposed_channels(process):
    """Channels of the external interface: every syntactic occurrence not
    erased by an enclosing hide, plus declared-but-unused channels."""
    out = set()

    def go(t, hidden):
        if isinstance(t, A.Prefix) and t.channel not in hidden:
            out.add(t.channel)
        if isinstance(t, A.Parallel):
            out.update(set(t.cs) - hidden)
        if isinstance(t, A.Hide):
            go(t.body, hidden | set(t.channels))
            return
        for c in A.action_children(t):
            go(c, hidden)

    go(process.main, set())
    used = A.action_channels_syntactic(process.main)
    for c in process.channels:
        if c.name not in used:
            out.add(c.name)
    return out


def traces_bytes(process, bounds, cap=DEFAULT_CAP, ctx=None):
    """Bounded prefix-closed timed-trace set, as encoded byte strings."""
    if ctx is None:
        ctx = SemCtx(process, cap)
    check_guarded(process.main)
    codec = TraceCodec(process)
    memo = {}

    def gen(term, sigma, d, t):
        key = (term, sigma, d, t)
        hit = memo.get(key)
        if hit is not None:
            return hit
        acc = {b""}
        for (tm, sg) in ctx.closure(term, sigma):
            mv = explore(ctx, tm, sg)
            if mv.can_term:
                acc.add(TERM_B)
            if d > 0:
                for (c, v, t2, sg2, lw) in mv.events:
                    if lw:
                        raise SemanticsError("local write escaped all scopes")
                    eb = codec.event(c, v)
                    for s in gen(t2, sg2, d - 1, t):
                        acc.add(eb + s)
            if t > 0 and mv.tick is not None:
                for s in gen(mv.tick, sg, d, t - 1):
                    acc.add(TICK_B + s)
        result = frozenset(acc)
        memo[key] = result
        return result

    sigma0 = ctx.initial_binding()
    out = gen(process.main, sigma0, bounds.max_depth, bounds.max_ticks)
    return out, codec, ctx


def traces(process, bounds, cap=DEFAULT_CAP):
    """Canonical sorted list of decoded timed traces."""
    raw, codec, _ = traces_bytes(process, bounds, cap)
    return [codec.decode(t) for t in sorted(raw)]


@dataclass
class Verdict:
    kind: str  # equal | leftOnly | rightOnly | refines | counterexample
    witness: list | None
    bounds: Bounds
    state_space: int

    @property
    def holds(self):
        return self.kind in ("equal", "refines")

    def to_json(self):
        return {
            "verdict": self.kind,
            "witness": self.witness,
            "bounds": {"maxDepth": self.bounds.max_depth,
                       "maxTicks": self.bounds.max_ticks},
            "stateSpaceSize": self.state_space,
        }


def _check_alphabets(p, q):
    ap, aq = exposed_channels(p), exposed_channels(q)
    if ap != aq:
        raise AlphabetMismatch(
            f"external alphabets differ: {sorted(ap)} vs {sorted(aq)}")


class DetView:
    """Determinized view of a process: states are internal-closure sets of
    configurations; transitions are labelled by events and ticks.  Bounded
    trace comparison walks two views in lockstep without materializing
    trace sets."""

    def __init__(self, process, cap=DEFAULT_CAP):
        check_guarded(process.main)
        self.ctx = SemCtx(process, cap)
        self._succs = {}

    def initial(self):
        sigma0 = self.ctx.initial_binding()
        return frozenset(self.ctx.closure(self.ctx.process.main, sigma0))

    def can_term(self, ds):
        return any(explore(self.ctx, t, s).can_term for (t, s) in ds)

    def succs(self, ds):
        hit = self._succs.get(ds)
        if hit is not None:
            return hit
        by_label = {}
        for (t, s) in ds:
            mv = explore(self.ctx, t, s)
            for (c, v, t2, sg2, lw) in mv.events:
                if lw:
                    raise SemanticsError("local write escaped all scopes")
                by_label.setdefault(("ev", c, v), set()).update(
                    self.ctx.closure(t2, sg2))
            if mv.tick is not None:
                by_label.setdefault(("tick",), set()).update(
                    self.ctx.closure(mv.tick, s))
        out = {k: frozenset(v) for k, v in by_label.items()}
        self._succs[ds] = out
        return out


def _label_ok(label, d, t):
    return d > 0 if label[0] == "ev" else t > 0


def _label_item(label):
    if label[0] == "tick":
        return ("tick",)
    _, c, v = label
    return ("event", c) if v is None else ("event", c, v)


def _spend(label, d, t):
    return (d - 1, t) if label[0] == "ev" else (d, t - 1)


def _compare_views(p, q, bounds, cap, inclusion):
    """Synchronized bounded walk of two determinized views.

    With `inclusion`, checks capabilities of q within p (trace refinement);
    otherwise exact equality.  Returns (difference, side) where difference
    is a witness trace as a list of items."""
    vp, vq = DetView(p, cap), DetView(q, cap)
    start = (vp.initial(), vq.initial())
    seen = {(start[0], start[1], bounds.max_depth, bounds.max_ticks)}
    queue = [(start[0], start[1], bounds.max_depth, bounds.max_ticks, ())]
    while queue:
        dsp, dsq, d, t, trail = queue.pop()
        ctp, ctq = vp.can_term(dsp), vq.can_term(dsq)
        if ctq and not ctp:
            return list(trail) + [("term",)], "right", vp, vq
        if not inclusion and ctp and not ctq:
            return list(trail) + [("term",)], "left", vp, vq
        sp, sq = vp.succs(dsp), vq.succs(dsq)
        labels = set(sp) | set(sq)
        for label in sorted(labels, key=repr):
            if not _label_ok(label, d, t):
                continue
            inp, inq = label in sp, label in sq
            if inq and not inp:
                return list(trail) + [_label_item(label)], "right", vp, vq
            if not inclusion and inp and not inq:
                return list(trail) + [_label_item(label)], "left", vp, vq
            if inp and inq:
                d2, t2 = _spend(label, d, t)
                key = (sp[label], sq[label], d2, t2)
                if key not in seen:
                    seen.add(key)
                    queue.append((sp[label], sq[label], d2, t2,
                                  trail + (_label_item(label),)))
    return None, None, vp, vq


def check_equal(p, q, bounds, cap=DEFAULT_CAP):
    """Bounded timed-trace set equality of two processes."""
    _check_alphabets(p, q)
    diff, side, vp, vq = _compare_views(p, q, bounds, cap, inclusion=False)
    space = vp.ctx.visited + vq.ctx.visited
    if diff is None:
        return Verdict("equal", None, bounds, space)
    kind = "leftOnly" if side == "left" else "rightOnly"
    return Verdict(kind, diff, bounds, space)


def check_refines(p, q, bounds, cap=DEFAULT_CAP):
    """Bounded trace refinement: every trace of q is a trace of p."""
    _check_alphabets(p, q)
    diff, side, vp, vq = _compare_views(p, q, bounds, cap, inclusion=True)
    space = vp.ctx.visited + vq.ctx.visited
    if diff is None:
        return Verdict("refines", None, bounds, space)
    return Verdict("counterexample", diff, bounds, space)


# ---------------------------------------------------------------------------
# Verification-condition discharge
# ---------------------------------------------------------------------------

def discharge(vc, binops=None, cap=DEFAULT_CAP):
    """Decide a verification condition by exhaustive enumeration.

    Mutates the condition's status (open -> discharged/failed) and records a
    counterexample in `vc.detail` on failure.  Returns the new status.
    """
    if vc.status != "open":
        return vc.status
    binops = binops or {}
    kind = vc.kind
    pl = vc.payload
    if kind == "StaticProviso":
        ok = bool(pl["holds"])
        vc.resolve(ok, None if ok else pl.get("description"))
        return vc.status
    if kind == "TimeArith":
        rel = pl.get("rel", "=")
        ok = pl["lhs"] <= pl["rhs"] if rel == "<=" else pl["lhs"] == pl["rhs"]
        vc.resolve(ok, None if ok else f"{pl['lhs']} {rel} {pl['rhs']} fails")
        return vc.status
    if kind == "Algebra":
        op = pl["op"]
        vals = op.operand_type.values
        try:
            for x in vals:
                for y in vals:
                    if apply_binop(op, x, y) != apply_binop(op, y, x):
                        vc.resolve(False, f"not commutative at ({x}, {y})")
                        return vc.status
                if apply_binop(op, x, op.zero) != x:
                    vc.resolve(False, f"zero is not a unit at {x}")
                    return vc.status
            for x in vals:
                for y in vals:
                    for z in vals:
                        if (apply_binop(op, apply_binop(op, x, y), z)
                                != apply_binop(op, x, apply_binop(op, y, z))):
                            vc.resolve(False, f"not associative at ({x}, {y}, {z})")
                            return vc.status
        except SemanticsError as e:
            vc.resolve(False, f"operation is partial: {e}")
            return vc.status
        vc.resolve(True, None)
        return vc.status
    if kind in ("PredEquiv", "PredImpl"):
        domains = {v: tuple(t.values) for v, t in pl["domains"].items()}
        lhs, rhs = pl["lhs"], pl["rhs"]
        want = sorted(A.pred_vars(lhs) | A.pred_vars(rhs))
        for v in want:
            if v not in domains:
                raise SemanticsError(f"no domain for free variable {v}")
        cl, rl = sat_set(lhs, domains, binops, cap)
        cr, rr = sat_set(rhs, domains, binops, cap)
        _, rl = _extend(cl, rl, want, domains)
        _, rr = _extend(cr, rr, want, domains)
        if kind == "PredEquiv":
            bad = (rl - rr) | (rr - rl)
        else:
            bad = rl - rr
        if not bad:
            vc.resolve(True, None)
        else:
            row = min(bad, key=repr)
            vc.resolve(False, dict(zip(want, row)))
        return vc.status
    raise SemanticsError(f"unknown VC kind {kind}")

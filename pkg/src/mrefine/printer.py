"""Canonical text rendering of terms, schemas and process files.

The printer and parser agree on a round-trip law: parsing printed text gives
a term structurally equal to the original.
"""

from __future__ import annotations

from . import ast as A

# Action precedence tiers (loosest to tightest):
#   0 right-open binders (mu, var, guard)  -- printed with explicit parens as operands
#   1 internal choice |~|
#   2 external choice []
#   3 sequence ; and zseq
#   4 parallel / interleave / hide
#   5 prefix
#   6 postfix deadlines, atoms


def fmt_value(v):
    return str(v)


def fmt_type(t):
    if isinstance(t, A.BagType):
        return f"bag {t.elem.name}"
    return t.name


def fmt_type_decl(t):
    if t.is_int_range:
        return f"type {t.name} = {t.values[0]}..{t.values[-1]}"
    return f"type {t.name} = {{{', '.join(str(v) for v in t.values)}}}"


def fmt_expr(e, prec=0):
    if isinstance(e, A.Lit):
        return str(e.value)
    if isinstance(e, A.Var):
        return e.name
    if isinstance(e, A.Arith):
        mine = 1 if e.op in ("*", "div", "mod") else 0
        s = f"{fmt_expr(e.left, mine)} {e.op} {fmt_expr(e.right, mine + 1)}"
        return f"({s})" if mine < prec else s
    if isinstance(e, A.BagLit):
        return "[[" + ", ".join(fmt_expr(i) for i in e.items) + "]]"
    if isinstance(e, A.SeqLit):
        return "<<" + ", ".join(fmt_expr(i) for i in e.items) + ">>"
    if isinstance(e, A.SetLit):
        return "{" + ", ".join(fmt_expr(i) for i in e.items) + "}"
    if isinstance(e, A.Items):
        return f"items({fmt_expr(e.bag)})"
    if isinstance(e, A.Fold):
        return f"fold({e.op}, {fmt_expr(e.zero)}, {fmt_expr(e.seq)})"
    if isinstance(e, A.Card):
        return f"card({fmt_expr(e.set)})"
    raise A.KernelError(f"cannot print expression {e!r}")


def fmt_pred(p, prec=0):
    # 0 ==> ; 1 \/ ; 2 /\ ; 3 not ; 4 atoms
    if isinstance(p, A.BoolLit):
        return "true" if p.value else "false"
    if isinstance(p, A.Cmp):
        return f"{fmt_expr(p.left)} {p.op} {fmt_expr(p.right)}"
    if isinstance(p, A.And):
        s = " /\\ ".join(fmt_pred(t, 3) for t in p.terms)
        return f"({s})" if prec > 2 else s
    if isinstance(p, A.Or):
        s = " \\/ ".join(fmt_pred(t, 2) for t in p.terms)
        return f"({s})" if prec > 1 else s
    if isinstance(p, A.Not):
        return f"not {fmt_pred(p.term, 4)}"
    if isinstance(p, A.Implies):
        s = f"{fmt_pred(p.left, 1)} ==> {fmt_pred(p.right, 0)}"
        return f"({s})" if prec > 0 else s
    if isinstance(p, A.Quant):
        s = f"{p.kind} {p.var} : {p.type.name} @ {fmt_pred(p.body, 0)}"
        return f"({s})" if prec > 0 else s
    if isinstance(p, A.Member):
        return f"{fmt_expr(p.item)} in {fmt_expr(p.set)}"
    if isinstance(p, A.InTable):
        rows = sorted(p.rows)
        vs = ", ".join(p.vars)
        rws = ", ".join("(" + ", ".join(fmt_value(v) for v in r) + ")" for r in rows)
        return f"({vs}) in {{{rws}}}"
    raise A.KernelError(f"cannot print predicate {p!r}")


def _fmt_nameset(ns):
    return "{" + ", ".join(sorted(ns)) + "}"


def fmt_action(a, prec=0):
    def wrap(s, mine):
        return f"({s})" if mine < prec else s

    if isinstance(a, A.Skip):
        return "Skip"
    if isinstance(a, A.Stop):
        return "Stop"
    if isinstance(a, A.SchemaAct):
        if a.args:
            return f"{a.schema}({', '.join(fmt_expr(x) for x in a.args)})"
        return a.schema
    if isinstance(a, A.SchemaConj):
        return "(" + " /\\ ".join(fmt_action(i, 6) for i in a.items) + ")"
    if isinstance(a, A.ZSeq):
        return wrap(" zseq ".join(fmt_action(i, 4) for i in a.items), 3)
    if isinstance(a, A.Assign):
        return f"{a.var} := {fmt_expr(a.expr)}"
    if isinstance(a, A.Prefix):
        if a.kind == "sync":
            head = a.channel
        elif a.kind == "in":
            head = f"{a.channel}?{a.payload}"
        else:
            head = f"{a.channel}!{fmt_expr(a.payload, 2)}"
        return wrap(f"{head} -> {fmt_action(a.body, 5)}", 5)
    if isinstance(a, A.ExtChoice):
        return wrap(" [] ".join(fmt_action(i, 3) for i in a.items), 2)
    if isinstance(a, A.IntChoice):
        return wrap(" |~| ".join(fmt_action(i, 2) for i in a.items), 1)
    if isinstance(a, A.Seq):
        return wrap(" ; ".join(fmt_action(i, 4) for i in a.items), 3)
    if isinstance(a, A.Parallel):
        s = (f"{fmt_action(a.left, 5)} [| {_fmt_nameset(a.ns1)} | "
             f"{_fmt_nameset(a.cs)} | {_fmt_nameset(a.ns2)} |] "
             f"{fmt_action(a.right, 5)}")
        return wrap(s, 4)
    if isinstance(a, A.Interleave):
        return wrap(f"{fmt_action(a.left, 5)} ||| {fmt_action(a.right, 5)}", 4)
    if isinstance(a, A.Hide):
        return wrap(f"{fmt_action(a.body, 5)} \\ {_fmt_nameset(a.channels)}", 4)
    if isinstance(a, A.Rec):
        return f"(mu {a.binder} @ {fmt_action(a.body, 0)})"
    if isinstance(a, A.RecCall):
        return a.binder
    if isinstance(a, A.Wait):
        if a.lo == a.hi:
            return f"wait {a.lo}"
        return f"wait {a.lo}..{a.hi}"
    if isinstance(a, A.TermDeadline):
        return wrap(f"{fmt_action(a.body, 6)} deadline_t {a.ticks}", 5)
    if isinstance(a, A.SyncDeadline):
        return wrap(f"{fmt_action(a.body, 6)} deadline_s {a.ticks}", 5)
    if isinstance(a, A.VarBlock):
        ds = ", ".join(f"{n} : {t.name}" for n, t in a.decls)
        return f"(var {ds} @ {fmt_action(a.body, 0)})"
    if isinstance(a, A.Guard):
        return wrap(f"[{fmt_pred(a.pred)}] & {fmt_action(a.body, 5)}", 5)
    raise A.KernelError(f"cannot print action {a!r}")


def fmt_schema(s):
    lines = [f"schema {s.name}"]
    for e in s.signature:
        lines.append(f"  {e.role} {e.var} : {fmt_type(e.type)}")
    lines.append(f"  pred {fmt_pred(s.predicate)}")
    lines.append("end")
    return "\n".join(lines)


def fmt_binop(b):
    return (f"binop {b.name} : {b.operand_type.name} = "
            f"{fmt_expr(b.expr)} zero {fmt_value(b.zero)}")


def collect_types(p):
    """Declared types plus any finite types in use, in declaration order."""
    seen = {}

    def add(t):
        if isinstance(t, A.BagType):
            add(t.elem)
            return
        if isinstance(t, A.FiniteType) and t.name not in seen:
            seen[t.name] = t

    for t in p.types:
        add(t)
    for e in p.state.signature:
        add(e.type)
    for c in p.channels:
        if c.payload is not None:
            add(c.payload)
    for b in p.binops:
        add(b.operand_type)
    for _, d in p.defs:
        if isinstance(d, A.Schema):
            for e in d.signature:
                add(e.type)
        else:
            _collect_action_types(d, add)
    _collect_action_types(p.main, add)
    return list(seen.values())


def _collect_action_types(a, add):
    if isinstance(a, A.VarBlock):
        for _, t in a.decls:
            add(t)
    if isinstance(a, A.Quant):
        add(a.type)
    for c in A.action_children(a):
        _collect_action_types(c, add)


def fmt_process(p):
    out = []
    for t in collect_types(p):
        out.append(fmt_type_decl(t))
    out.append("")
    for c in p.channels:
        if c.payload is None:
            out.append(f"channel {c.name}")
        else:
            out.append(f"channel {c.name} : {c.payload.name}")
    if p.binops:
        out.append("")
        for b in p.binops:
            out.append(fmt_binop(b))
    out.append("")
    for name, d in p.defs:
        if isinstance(d, A.Schema):
            out.append(fmt_schema(d))
            out.append("")
    out.append(f"process {p.name}")
    st = ", ".join(f"{e.var} : {e.type.name}" for e in p.state.signature)
    out.append(f"  state {st} inv {fmt_pred(p.state.predicate)}")
    for name, d in p.defs:
        if isinstance(d, A.Action):
            out.append(f"  action {name} = {fmt_action(d)}")
    out.append(f"  main {fmt_action(p.main)}")
    out.append("end")
    return "\n".join(out) + "\n"


def pretty(term):
    """Canonical text of any term kind."""
    if isinstance(term, A.ProcessDef):
        return fmt_process(term)
    if isinstance(term, A.Schema):
        return fmt_schema(term)
    if isinstance(term, A.Action):
        return fmt_action(term)
    if isinstance(term, A.Pred):
        return fmt_pred(term)
    if isinstance(term, A.Expr):
        return fmt_expr(term)
    raise A.KernelError(f"cannot print {term!r}")

"""Static analyses backing law provisos: write/read sets, channel usage,
path addressing into process terms.

wrt/used are syntactic over-approximations on purpose; provisos must be
sound.  Local variables (var blocks, input binders) are excluded at the
process level.
"""

from __future__ import annotations

from . import ast as A


class PathError(Exception):
    def __init__(self, msg, path=None):
        self.path = path
        super().__init__(msg if path is None else f"at {format_path(path)}: {msg}")


def format_path(path):
    return "/".join(str(s) for s in path)


def schema_wrt(schema):
    """State components a schema may write: its delta-role entries."""
    return {e.var for e in schema.signature if e.role == "delta"}


def schema_used(schema):
    """State components a schema reads: delta/xi/plain entries whose
    unprimed name occurs in the predicate."""
    free = A.pred_vars(schema.predicate)
    out = set()
    for e in schema.signature:
        if e.role in ("delta", "xi", "plain") and e.var in free:
            out.add(e.var)
    return out


def wrt(process, term):
    """Set of state components possibly written by an action or schema."""
    if isinstance(term, A.Schema):
        return schema_wrt(term)
    state = set(process.state_vars())

    def go(t, bound):
        out = set()
        if isinstance(t, A.Assign):
            if t.var not in bound and t.var in state:
                out.add(t.var)
            return out
        if isinstance(t, A.SchemaAct):
            s = _schema_of(process, t)
            out |= (schema_wrt(s) - bound) & state
            outs = [e for e in s.entries("input", "output")]
            for e, arg in zip(outs, t.args):
                if e.role == "output" and isinstance(arg, A.Var):
                    if arg.name not in bound and arg.name in state:
                        out.add(arg.name)
            return out
        if isinstance(t, (A.SchemaConj, A.ZSeq)):
            for i in t.items:
                out |= go(i, bound)
            return out
        if isinstance(t, A.Parallel):
            out |= (t.ns1 | t.ns2) & state
            out |= go(t.left, bound) | go(t.right, bound)
            return out
        if isinstance(t, A.Prefix) and t.kind == "in":
            return go(t.body, bound | {t.payload})
        if isinstance(t, A.VarBlock):
            return go(t.body, bound | {n for n, _ in t.decls})
        for c in A.action_children(t):
            out |= go(c, bound)
        return out

    return go(term, frozenset())


def used(process, term):
    """Set of state components possibly read by an action or schema."""
    if isinstance(term, A.Schema):
        return schema_used(term)
    state = set(process.state_vars())

    def expr_reads(e, bound):
        return (A.expr_vars(e) - bound) & state

    def go(t, bound):
        out = set()
        if isinstance(t, A.Assign):
            return expr_reads(t.expr, bound)
        if isinstance(t, A.SchemaAct):
            s = _schema_of(process, t)
            out |= (schema_used(s) - bound) & state
            params = s.entries("input", "output")
            for e, arg in zip(params, t.args):
                if e.role == "input":
                    out |= expr_reads(arg, bound)
            return out
        if isinstance(t, (A.SchemaConj, A.ZSeq)):
            for i in t.items:
                out |= go(i, bound)
            return out
        if isinstance(t, A.Prefix):
            if t.kind == "out":
                out |= expr_reads(t.payload, bound)
            if t.kind == "in":
                return out | go(t.body, bound | {t.payload})
            return out | go(t.body, bound)
        if isinstance(t, A.Guard):
            out |= (A.pred_vars(t.pred) - bound) & state
            return out | go(t.body, bound)
        if isinstance(t, A.VarBlock):
            return go(t.body, bound | {n for n, _ in t.decls})
        for c in A.action_children(t):
            out |= go(c, bound)
        return out

    return go(term, frozenset())


def channels_of(term):
    """All channels occurring in prefixes, synchronisation and hiding sets."""
    return A.action_channels_syntactic(term)


def _schema_of(process, act):
    s = process.schema(act.schema)
    if s is None:
        raise PathError(f"unknown schema {act.schema}")
    return s


# ---------------------------------------------------------------------------
# Path resolution
# ---------------------------------------------------------------------------

_LIST_NODES = (A.Seq, A.ExtChoice, A.IntChoice, A.ZSeq, A.SchemaConj)


def _child(term, sel):
    if isinstance(term, _LIST_NODES) and isinstance(sel, int):
        if 0 <= sel < len(term.items):
            return term.items[sel]
        raise PathError(f"index {sel} out of range for {type(term).__name__} "
                        f"with {len(term.items)} operands")
    if isinstance(term, (A.Parallel, A.Interleave)):
        if sel == "left":
            return term.left
        if sel == "right":
            return term.right
        raise PathError(f"{type(term).__name__} has children left/right, not {sel!r}")
    if isinstance(term, (A.Hide, A.Rec, A.Prefix, A.TermDeadline,
                         A.SyncDeadline, A.VarBlock, A.Guard)):
        if sel == "body":
            return term.body
        raise PathError(f"{type(term).__name__} has child body, not {sel!r}")
    raise PathError(f"{type(term).__name__} has no child {sel!r}")


def _rebuild(term, sel, new):
    if isinstance(term, _LIST_NODES) and isinstance(sel, int):
        items = list(term.items)
        items[sel] = new
        if isinstance(term, A.Seq):
            return A.seq(items)
        if isinstance(term, A.ExtChoice):
            return A.extchoice(items)
        if isinstance(term, A.IntChoice):
            return A.intchoice(items)
        if isinstance(term, A.ZSeq):
            if all(isinstance(i, (A.SchemaAct, A.ZSeq)) for i in items):
                return A.zseq(items)
            raise PathError(
                "a schema composition operand can only be rewritten into "
                "another composition; convert the composition to an action "
                "sequence first")
        return A.SchemaConj(tuple(items))
    if isinstance(term, (A.Parallel,)):
        if sel == "left":
            return A.Parallel(term.ns1, term.cs, term.ns2, new, term.right)
        return A.Parallel(term.ns1, term.cs, term.ns2, term.left, new)
    if isinstance(term, A.Interleave):
        if sel == "left":
            return A.Interleave(new, term.right)
        return A.Interleave(term.left, new)
    if isinstance(term, A.Hide):
        return A.Hide(new, term.channels)
    if isinstance(term, A.Rec):
        return A.Rec(term.binder, new)
    if isinstance(term, A.Prefix):
        return A.Prefix(term.channel, term.kind, term.payload, new)
    if isinstance(term, A.TermDeadline):
        return A.TermDeadline(new, term.ticks)
    if isinstance(term, A.SyncDeadline):
        return A.SyncDeadline(new, term.ticks)
    if isinstance(term, A.VarBlock):
        return A.VarBlock(term.decls, new)
    if isinstance(term, A.Guard):
        return A.Guard(term.pred, new)
    raise PathError(f"cannot rebuild through {type(term).__name__}")


class Resolved:
    """An addressed subterm plus a context that rebuilds the process."""

    def __init__(self, process, path, term, rebuild):
        self.process = process
        self.path = path
        self.term = term
        self._rebuild = rebuild

    def replace(self, new_term):
        return self._rebuild(new_term)


def resolve(process, path):
    """Resolve a path to a subterm of a process definition.

    The first segment names the root: `main` or an action/schema definition.
    Remaining segments select children (integer operand indices, or
    left/right/body).
    """
    if not path:
        raise PathError("empty path", path)
    root = path[0]
    if root == "main":
        base = process.main

        def put_root(a):
            return process.with_main(a)
    else:
        d = process.lookup(root)
        if d is None:
            raise PathError(f"no definition named {root}", path)
        if isinstance(d, A.Schema):
            raise PathError(f"{root} is a schema; paths address actions", path)
        base = d

        def put_root(a):
            return process.with_def(root, a)

    path = tuple(int(s) if isinstance(s, str) and s.isdigit() else s
                 for s in path)
    spine = [base]
    term = base
    for sel in path[1:]:
        try:
            term = _child(term, sel)
        except PathError as e:
            raise PathError(str(e), path)
        spine.append(term)

    def rebuild(new_term):
        t = new_term
        for i in range(len(path) - 1, 0, -1):
            t = _rebuild(spine[i - 1], path[i], t)
        return put_root(t)

    return Resolved(process, path, term, rebuild)


def check_namesets(process):
    """Well-formedness: in every parallel, each operand's write set must be
    contained in its declared nameset.  Returns a list of violation strings."""
    problems = []

    def go(t, where):
        if isinstance(t, A.Parallel):
            wl = wrt(process, t.left)
            wr = wrt(process, t.right)
            if not wl <= set(t.ns1):
                problems.append(
                    f"{where}: left operand writes {sorted(wl - set(t.ns1))} "
                    f"outside its nameset")
            if not wr <= set(t.ns2):
                problems.append(
                    f"{where}: right operand writes {sorted(wr - set(t.ns2))} "
                    f"outside its nameset")
        for i, c in enumerate(A.action_children(t)):
            go(c, f"{where}.{i}")

    go(process.main, "main")
    for name, d in process.defs:
        if isinstance(d, A.Action):
            go(d, name)
    return problems


def iter_paths(process, root="main"):
    """Enumerate (path, subterm) pairs under a root, preorder."""
    base = process.main if root == "main" else process.lookup(root)
    out = []

    def go(t, path):
        out.append((path, t))
        if isinstance(t, _LIST_NODES):
            for i, c in enumerate(t.items):
                go(c, path + (i,))
        elif isinstance(t, (A.Parallel, A.Interleave)):
            go(t.left, path + ("left",))
            go(t.right, path + ("right",))
        elif isinstance(t, (A.Hide, A.Rec, A.Prefix, A.TermDeadline,
                            A.SyncDeadline, A.VarBlock, A.Guard)):
            go(t.body, path + ("body",))

    if isinstance(base, A.Action):
        go(base, (root,))
    return out

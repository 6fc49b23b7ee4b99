"""Parser for process files (.mspec) and refinement scripts (.rsc).

Text format is plain ASCII with `--` line comments.  Every reported problem
carries a source span.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ast as A


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self):
        return f"{self.file}:{self.line}:{self.col}"


class SpecError(Exception):
    def __init__(self, msg, span=None):
        self.span = span
        self.msg = msg
        super().__init__(f"{span}: {msg}" if span else msg)


class ParseError(SpecError):
    """Bad syntax; message names the expected tokens."""


class ScopeError(SpecError):
    """Undeclared channel, variable, type, or definition."""


class TypeMismatchError(SpecError):
    """Value or expression outside the declared domain."""


class UnknownLaw(SpecError):
    pass


class ParameterArityError(SpecError):
    pass


_SYMBOLS = [
    "[|", "|]", "|~|", "|||", "==>", "<=", ">=", "!=", "..", "->", ":=",
    "/\\", "\\/", "[[", "]]", "<<", ">>", "[]",
    "(", ")", "{", "}", "[", "]", ",", ":", ";", "=", "<", ">",
    "+", "-", "*", "\\", "|", "@", "&", "/",
]

_KEYWORDS = {
    "type", "channel", "schema", "process", "state", "inv", "pred", "end",
    "delta", "xi", "input", "output", "plain", "action", "main", "wait",
    "mu", "var", "deadline_t", "deadline_s", "div", "mod", "true", "false",
    "exists", "forall", "items", "fold", "card", "zero", "binop", "bag",
    "Skip", "Stop", "not", "in", "zseq", "apply", "at", "with",
    "periodic", "loop",
}


@dataclass(frozen=True)
class Token:
    kind: str  # int | ident | sym | eof
    text: str
    span: SourceSpan


def tokenize(text, filename="<input>"):
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)

    def span(l0, c0, l1, c1):
        return SourceSpan(filename, l0, c0, l1, c1)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        l0, c0 = line, col
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], span(l0, c0, line, col + j - i)))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            # decorations attach directly: x'  f?  r!   (but != is comparison)
            while j < n and text[j] == "'":
                j += 1
            if j < n and text[j] in "?!" and not text.startswith("=", j + 1):
                j += 1
            toks.append(Token("ident", text[i:j], span(l0, c0, line, col + j - i)))
            col += j - i
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                toks.append(Token("sym", sym, span(l0, c0, line, col + len(sym))))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}",
                             span(l0, c0, line, col + 1))
    toks.append(Token("eof", "", span(line, col, line, col)))
    return toks


class _Cursor:
    def __init__(self, toks):
        self.toks = toks
        self.pos = 0

    def peek(self, ahead=0):
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def at(self, text):
        return self.peek().text == text and self.peek().kind in ("sym", "ident")

    def at_kind(self, kind):
        return self.peek().kind == kind

    def take(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, text):
        t = self.peek()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text!r}", t.span)
        return self.take()

    def expect_ident(self, what="identifier"):
        t = self.peek()
        if t.kind != "ident" or t.text in _KEYWORDS:
            raise ParseError(f"expected {what}, found {t.text!r}", t.span)
        return self.take()

    def expect_int(self):
        t = self.peek()
        if t.kind != "int":
            raise ParseError(f"expected integer, found {t.text!r}", t.span)
        self.take()
        return int(t.text)


class _ProcParser:
    """Parses one process file: type/channel/binop/schema decls + process."""

    def __init__(self, text, filename="<input>"):
        self.c = _Cursor(tokenize(text, filename))
        self.types = {}
        self.enum_values = {}  # literal -> FiniteType
        self.channels = []
        self.binops = []
        self.defs = []  # (name, Schema|Action)
        self.state = None
        self.proc_name = None
        self.main = None

    # -- declarations -------------------------------------------------------

    def parse(self):
        c = self.c
        while not c.at_kind("eof"):
            t = c.peek()
            if t.text == "type":
                self.type_decl()
            elif t.text == "channel":
                self.channel_decl()
            elif t.text == "binop":
                self.binop_decl()
            elif t.text == "schema":
                self.schema_decl()
            elif t.text == "process":
                self.process_block()
            else:
                raise ParseError(
                    "expected 'type', 'channel', 'binop', 'schema' or 'process'",
                    t.span)
        if self.proc_name is None:
            raise ParseError("no process block in file", c.peek().span)
        return A.ProcessDef(self.proc_name, tuple(self.channels), self.state,
                            tuple(self.defs), self.main, tuple(self.binops),
                            tuple(self.types.values()))

    def type_decl(self):
        c = self.c
        c.expect("type")
        name_tok = c.expect_ident("type name")
        name = name_tok.text
        if name in self.types:
            raise ScopeError(f"type {name} already declared", name_tok.span)
        c.expect("=")
        if c.at_kind("int"):
            lo = c.expect_int()
            c.expect("..")
            hi = c.expect_int()
            if lo > hi:
                raise TypeMismatchError(f"bad range {lo}..{hi}", name_tok.span)
            ty = A.FiniteType.int_range(name, lo, hi)
        else:
            c.expect("{")
            vals = []
            while True:
                v = c.expect_ident("enumeration literal")
                vals.append(v.text)
                if c.at(","):
                    c.take()
                    continue
                break
            c.expect("}")
            try:
                ty = A.FiniteType(name, tuple(vals))
            except A.KernelError as e:
                raise TypeMismatchError(str(e), name_tok.span)
            for v in vals:
                if v in self.enum_values:
                    raise ScopeError(f"enumeration literal {v} already in use",
                                     name_tok.span)
                self.enum_values[v] = ty
        self.types[name] = ty

    def type_ref(self):
        c = self.c
        if c.at("bag"):
            c.take()
            t = c.expect_ident("type name")
            if t.text not in self.types:
                raise ScopeError(f"unknown type {t.text}", t.span)
            return A.BagType(self.types[t.text])
        t = c.expect_ident("type name")
        if t.text not in self.types:
            raise ScopeError(f"unknown type {t.text}", t.span)
        return self.types[t.text]

    def channel_decl(self):
        c = self.c
        c.expect("channel")
        t = c.expect_ident("channel name")
        if any(ch.name == t.text for ch in self.channels):
            raise ScopeError(f"channel {t.text} already declared", t.span)
        payload = None
        if c.at(":"):
            c.take()
            payload = self.type_ref()
            if isinstance(payload, A.BagType):
                raise TypeMismatchError("channels cannot carry bags", t.span)
        self.channels.append(A.Channel(t.text, payload))

    def binop_decl(self):
        c = self.c
        c.expect("binop")
        t = c.expect_ident("operation name")
        c.expect(":")
        ty = self.type_ref()
        c.expect("=")
        expr = self.expr({"a", "b"})
        c.expect("zero")
        zero = self.value(ty)
        self.binops.append(A.BinOp(t.text, ty, expr, zero))

    def value(self, ty=None):
        c = self.c
        t = c.peek()
        if t.kind == "int":
            v = c.expect_int()
        elif t.kind == "ident" and t.text in self.enum_values:
            v = c.take().text
        else:
            raise ParseError("expected a value literal", t.span)
        if ty is not None and v not in ty.values:
            raise TypeMismatchError(f"value {v} outside {ty.name}", t.span)
        return v

    def schema_decl(self):
        c = self.c
        c.expect("schema")
        t = c.expect_ident("schema name")
        entries = []
        while c.peek().text in ("delta", "xi", "input", "output", "plain"):
            role = c.take().text
            v = c.expect_ident("variable")
            c.expect(":")
            ty = self.type_ref()
            if v.text in self.enum_values:
                raise ScopeError(f"{v.text} clashes with an enumeration literal",
                                 v.span)
            try:
                entries.append(A.SigEntry(v.text, ty, role))
            except A.KernelError as e:
                raise TypeMismatchError(str(e), v.span)
        c.expect("pred")
        sig = tuple(entries)
        schema = A.Schema(t.text, sig, A.TRUE)
        scope = schema.declared_names()
        pred = self.pred(scope)
        c.expect("end")
        schema = A.Schema(t.text, sig, pred)
        if any(n == t.text for n, _ in self.defs):
            raise ScopeError(f"{t.text} already defined", t.span)
        self.defs.append((t.text, schema))

    # -- expressions and predicates ----------------------------------------

    def expr(self, scope, prec=0):
        c = self.c
        left = self.expr_atom(scope) if prec >= 1 else self.expr(scope, 1)
        if prec == 0:
            while c.peek().text in ("+", "-"):
                op = c.take().text
                right = self.expr(scope, 1)
                left = A.Arith(op, left, right)
            return left
        while c.peek().text in ("*", "div", "mod"):
            op = c.take().text
            right = self.expr_atom(scope)
            left = A.Arith(op, left, right)
        return left

    def expr_atom(self, scope):
        c = self.c
        t = c.peek()
        if t.kind == "int":
            return A.Lit(c.expect_int())
        if t.text == "(":
            c.take()
            e = self.expr(scope)
            c.expect(")")
            return e
        if t.text == "[[":
            c.take()
            items = self.expr_list(scope, "]]")
            return A.BagLit(tuple(items))
        if t.text == "<<":
            c.take()
            items = self.expr_list(scope, ">>")
            return A.SeqLit(tuple(items))
        if t.text == "{":
            c.take()
            items = self.expr_list(scope, "}")
            return A.SetLit(tuple(items))
        if t.text == "items":
            c.take()
            c.expect("(")
            b = self.expr(scope)
            c.expect(")")
            return A.Items(b)
        if t.text == "card":
            c.take()
            c.expect("(")
            s = self.expr(scope)
            c.expect(")")
            return A.Card(s)
        if t.text == "fold":
            c.take()
            c.expect("(")
            op = c.expect_ident("operation name").text
            c.expect(",")
            zero = self.expr(scope)
            c.expect(",")
            s = self.expr(scope)
            c.expect(")")
            return A.Fold(op, zero, s)
        if t.kind == "ident" and t.text not in _KEYWORDS:
            c.take()
            if t.text in self.enum_values:
                return A.Lit(t.text)
            if scope is not None and t.text not in scope:
                raise ScopeError(f"unknown variable {t.text}", t.span)
            return A.Var(t.text)
        raise ParseError("expected an expression", t.span)

    def expr_list(self, scope, closer):
        c = self.c
        items = []
        if not c.at(closer):
            items.append(self.expr(scope))
            while c.at(","):
                c.take()
                items.append(self.expr(scope))
        c.expect(closer)
        return items

    def pred(self, scope, prec=0):
        c = self.c
        # 0 ==>  1 \/  2 /\  3 not/atom
        if prec == 0:
            left = self.pred(scope, 1)
            if c.at("==>"):
                c.take()
                right = self.pred(scope, 0)
                return A.Implies(left, right)
            return left
        if prec == 1:
            parts = [self.pred(scope, 2)]
            while c.at("\\/"):
                c.take()
                parts.append(self.pred(scope, 2))
            return A.disj(parts) if len(parts) > 1 else parts[0]
        if prec == 2:
            parts = [self.pred(scope, 3)]
            while c.at("/\\"):
                c.take()
                parts.append(self.pred(scope, 3))
            return A.conj(parts) if len(parts) > 1 else parts[0]
        return self.pred_atom(scope)

    def pred_atom(self, scope):
        c = self.c
        t = c.peek()
        if t.text == "true":
            c.take()
            return A.TRUE
        if t.text == "false":
            c.take()
            return A.FALSE
        if t.text == "not":
            c.take()
            return A.Not(self.pred_atom(scope))
        if t.text in ("exists", "forall"):
            kind = c.take().text
            v = c.expect_ident("bound variable")
            c.expect(":")
            ty = self.type_ref()
            if isinstance(ty, A.BagType):
                raise TypeMismatchError("cannot quantify over bags", v.span)
            c.expect("@")
            inner = set(scope) | {v.text} if scope is not None else None
            body = self.pred(inner)
            return A.Quant(kind, v.text, ty, body)
        if t.text == "(":
            # parenthesised predicate, or a variable-tuple table constraint
            save = c.pos
            c.take()
            if c.at_kind("ident") and c.peek().text not in _KEYWORDS:
                names = [c.take().text]
                while c.at(","):
                    c.take()
                    nt = c.peek()
                    if nt.kind != "ident":
                        break
                    names.append(c.take().text)
                if len(names) > 1 and c.at(")") and c.peek(1).text == "in":
                    c.take()  # )
                    c.take()  # in
                    if scope is not None:
                        for nm in names:
                            if nm not in scope:
                                raise ScopeError(f"unknown variable {nm}", t.span)
                    rows = self.row_set(len(names))
                    return A.InTable(tuple(names), rows)
            c.pos = save
            c.take()
            p = self.pred(scope)
            c.expect(")")
            return p
        # comparison or membership
        left = self.expr(scope)
        t = c.peek()
        if t.text == "in":
            c.take()
            s = self.expr(scope)
            return A.Member(left, s)
        if t.text in ("=", "!=", "<", "<=", ">", ">="):
            op = c.take().text
            right = self.expr(scope)
            if op == ">":
                return A.Cmp("<", right, left)
            if op == ">=":
                return A.Cmp("<=", right, left)
            return A.Cmp(op, left, right)
        raise ParseError("expected a comparison operator", t.span)

    def row_set(self, width):
        c = self.c
        c.expect("{")
        rows = set()
        while not c.at("}"):
            c.expect("(")
            row = [self.value()]
            while c.at(","):
                c.take()
                row.append(self.value())
            c.expect(")")
            if len(row) != width:
                raise TypeMismatchError(
                    f"row width {len(row)} does not match {width} variables",
                    c.peek().span)
            rows.add(tuple(row))
            if c.at(","):
                c.take()
        c.expect("}")
        return frozenset(rows)

    # -- actions -------------------------------------------------------------

    def process_block(self):
        c = self.c
        c.expect("process")
        t = c.expect_ident("process name")
        if self.proc_name is not None:
            raise ParseError("only one process per file", t.span)
        self.proc_name = t.text
        c.expect("state")
        entries = []
        while True:
            v = c.expect_ident("state component")
            c.expect(":")
            ty = self.type_ref()
            if isinstance(ty, A.BagType):
                raise TypeMismatchError("state components must be finite types",
                                        v.span)
            if v.text in self.enum_values:
                raise ScopeError(f"{v.text} clashes with an enumeration literal",
                                 v.span)
            entries.append(A.SigEntry(v.text, ty, "plain"))
            if c.at(","):
                c.take()
                continue
            break
        c.expect("inv")
        names = {e.var for e in entries}
        inv = self.pred(names)
        self.state = A.Schema("State", tuple(entries), inv)
        while c.at("action"):
            c.take()
            nt = c.expect_ident("action name")
            c.expect("=")
            body = self.action(recs=())
            if any(n == nt.text for n, _ in self.defs):
                raise ScopeError(f"{nt.text} already defined", nt.span)
            self.defs.append((nt.text, body))
        c.expect("main")
        self.main = self.action(recs=())
        c.expect("end")

    def _state_scope(self):
        names = set()
        for e in self.state.signature:
            names.add(e.var)
        return names

    def action(self, recs, prec=0):
        c = self.c
        if prec == 0:
            parts = [self.action(recs, 2)]
            while c.at("|~|"):
                c.take()
                parts.append(self.action(recs, 2))
            return A.intchoice(parts) if len(parts) > 1 else parts[0]
        if prec == 2:
            parts = [self.action(recs, 3)]
            while c.at("[]"):
                c.take()
                parts.append(self.action(recs, 3))
            return A.extchoice(parts) if len(parts) > 1 else parts[0]
        if prec == 3:
            parts = [self.action(recs, 35)]
            while c.at(";"):
                c.take()
                parts.append(self.action(recs, 35))
            return A.seq(parts) if len(parts) > 1 else parts[0]
        if prec == 35:
            parts = [self.action(recs, 4)]
            while c.at("zseq"):
                c.take()
                parts.append(self.action(recs, 4))
            if len(parts) == 1:
                return parts[0]
            for p in parts:
                if not isinstance(p, A.SchemaAct):
                    raise ParseError("zseq operands must be schema references",
                                     c.peek().span)
            return A.zseq(parts)
        if prec == 4:
            left = self.action(recs, 5)
            while True:
                t = c.peek()
                if t.text == "|||":
                    c.take()
                    right = self.action(recs, 5)
                    left = A.Interleave(left, right)
                elif t.text == "[|":
                    c.take()
                    ns1 = self.nameset(kind="state")
                    c.expect("|")
                    cs = self.nameset(kind="channel")
                    c.expect("|")
                    ns2 = self.nameset(kind="state")
                    c.expect("|]")
                    right = self.action(recs, 5)
                    try:
                        left = A.Parallel(ns1, cs, ns2, left, right)
                    except A.KernelError as e:
                        raise TypeMismatchError(str(e), t.span)
                elif t.text == "\\":
                    c.take()
                    chans = self.nameset(kind="channel")
                    left = A.Hide(left, chans)
                else:
                    break
            return left
        return self.action_prefix(recs)

    def nameset(self, kind):
        c = self.c
        t = c.expect("{")
        names = set()
        while not c.at("}"):
            n = c.expect_ident()
            if kind == "channel":
                if not any(ch.name == n.text for ch in self.channels):
                    raise ScopeError(f"undeclared channel {n.text}", n.span)
            else:
                if n.text not in self._state_scope():
                    raise ScopeError(f"unknown state component {n.text}", n.span)
            names.add(n.text)
            if c.at(","):
                c.take()
        c.expect("}")
        return frozenset(names)

    def action_prefix(self, recs):
        c = self.c
        t = c.peek()
        if t.text == "[":
            c.take()
            scope = self._state_scope() | self._local_scope_hint
            g = self.pred(scope)
            c.expect("]")
            c.expect("&")
            body = self.action_prefix(recs)
            return A.Guard(g, body)
        if t.kind == "ident" and t.text not in _KEYWORDS:
            # channel prefix?
            name = t.text
            if name.endswith("?") or name.endswith("!"):
                chan = name[:-1]
                self._check_channel(chan, t.span, needs_payload=True)
                c.take()
                if name.endswith("?"):
                    v = c.expect_ident("input variable")
                    c.expect("->")
                    saved = self._local_scope_hint
                    self._local_scope_hint = saved | {v.text}
                    body = self.action_prefix(recs)
                    self._local_scope_hint = saved
                    return A.Prefix(chan, "in", v.text, body)
                scope = self._state_scope() | self._local_scope_hint
                e = self.expr(scope, prec=1)
                c.expect("->")
                body = self.action_prefix(recs)
                return A.Prefix(chan, "out", e, body)
            if c.peek(1).text == "->":
                self._check_channel(name, t.span, needs_payload=False)
                c.take()
                c.take()
                body = self.action_prefix(recs)
                return A.Prefix(name, "sync", None, body)
        return self.action_postfix(recs)

    _local_scope_hint = frozenset()

    def _check_channel(self, chan, span, needs_payload):
        decl = next((ch for ch in self.channels if ch.name == chan), None)
        if decl is None:
            raise ScopeError(f"undeclared channel {chan}", span)
        if needs_payload and decl.payload is None:
            raise TypeMismatchError(f"channel {chan} carries no value", span)

    def action_postfix(self, recs):
        c = self.c
        a = self.action_atom(recs)
        while c.peek().text in ("deadline_t", "deadline_s"):
            which = c.take().text
            ticks = c.expect_int()
            cls = A.TermDeadline if which == "deadline_t" else A.SyncDeadline
            a = cls(a, ticks)
        return a

    def action_atom(self, recs):
        c = self.c
        t = c.peek()
        if t.text == "Skip":
            c.take()
            return A.SKIP
        if t.text == "Stop":
            c.take()
            return A.STOP
        if t.text == "wait":
            c.take()
            lo = c.expect_int()
            hi = lo
            if c.at(".."):
                c.take()
                hi = c.expect_int()
            try:
                return A.Wait(lo, hi)
            except A.KernelError as e:
                raise TypeMismatchError(str(e), t.span)
        if t.text == "mu":
            c.take()
            b = c.expect_ident("recursion binder")
            c.expect("@")
            body = self.action(recs + (b.text,))
            return A.Rec(b.text, body)
        if t.text == "var":
            c.take()
            decls = []
            while True:
                v = c.expect_ident("local variable")
                c.expect(":")
                ty = self.type_ref()
                if isinstance(ty, A.BagType):
                    raise TypeMismatchError("locals must have finite types", v.span)
                decls.append((v.text, ty))
                if c.at(","):
                    c.take()
                    continue
                break
            c.expect("@")
            saved = self._local_scope_hint
            self._local_scope_hint = saved | {n for n, _ in decls}
            body = self.action(recs)
            self._local_scope_hint = saved
            return A.VarBlock(tuple(decls), body)
        if t.text == "(":
            c.take()
            a = self.action(recs)
            if c.at("/\\"):
                items = [a]
                while c.at("/\\"):
                    c.take()
                    items.append(self.action(recs, 4))
                for i in items:
                    if not isinstance(i, A.SchemaAct):
                        raise ParseError(
                            "conjunction operands must be schema references",
                            t.span)
                c.expect(")")
                return A.SchemaConj(tuple(items))
            c.expect(")")
            return a
        if t.kind == "ident" and t.text not in _KEYWORDS:
            name = c.take().text
            if name in recs:
                return A.RecCall(name)
            if c.at(":="):
                c.take()
                scope = self._state_scope() | self._local_scope_hint
                if name not in scope:
                    raise ScopeError(f"unknown variable {name}", t.span)
                e = self.expr(scope)
                return A.Assign(name, e)
            defn = next((d for n, d in self.defs if n == name), None)
            if isinstance(defn, A.Schema):
                args = ()
                if c.at("("):
                    c.take()
                    scope = self._state_scope() | self._local_scope_hint
                    args = tuple(self.expr_list(scope, ")"))
                act = A.SchemaAct(name, args)
                self._check_schema_act(act, t.span)
                return act
            if isinstance(defn, A.Action):
                return defn  # named actions are inlined at use sites
            raise ScopeError(f"unknown name {name}", t.span)
        raise ParseError("expected an action", t.span)

    def _check_schema_act(self, act, span):
        schema = next((d for n, d in self.defs if n == act.schema), None)
        params = schema.entries("input", "output")
        if len(act.args) != len(params):
            raise ParameterArityError(
                f"{act.schema} takes {len(params)} parameter(s), got {len(act.args)}",
                span)
        for e, arg in zip(params, act.args):
            if e.role == "output" and not isinstance(arg, A.Var):
                raise TypeMismatchError(
                    f"output parameter {e.var} needs a variable target", span)


def parse_process(text, filename="<input>"):
    """Parse a full process file, checking well-formedness as it goes."""
    return _ProcParser(text, filename).parse()


# ---------------------------------------------------------------------------
# Refinement scripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScriptStep:
    law: str
    path: tuple
    params: dict
    span: SourceSpan

    def __hash__(self):
        return hash((self.law, self.path, tuple(sorted(self.params))))


@dataclass(frozen=True)
class RefinementScript:
    steps: tuple


def parse_path(c):
    segs = []
    while True:
        t = c.peek()
        if t.kind == "int":
            segs.append(c.expect_int())
        elif t.kind == "ident":
            segs.append(c.take().text)
        else:
            raise ParseError("expected a path segment", t.span)
        if c.at("/"):
            c.take()
            continue
        return tuple(segs)


def parse_script(text, process, registry=None, filename="<script>"):
    """Parse a refinement script against a law registry.

    Parameter values are parsed according to each law's declared parameter
    kinds; schema literals and predicates resolve types against `process`.
    """
    if registry is None:
        from .laws import REGISTRY as registry
    c = _Cursor(tokenize(text, filename))
    helper = _ProcParser("", filename)
    helper.types = {t.name: t for t in _process_types(process)}
    helper.enum_values = {}
    for t in helper.types.values():
        if not t.is_int_range:
            for v in t.values:
                helper.enum_values[v] = t
    helper.channels = list(process.channels)
    helper.defs = list(process.defs)
    helper.state = process.state

    steps = []
    while not c.at_kind("eof"):
        start = c.expect("apply")
        law_tok = c.expect_ident("law name")
        law = law_tok.text
        if law not in registry:
            raise UnknownLaw(f"unknown law {law}", law_tok.span)
        c.expect("at")
        path = parse_path(c)
        params = {}
        if c.at("with"):
            c.take()
            while True:
                pname = c.expect_ident("parameter name")
                c.expect("=")
                kinds = registry[law].params
                if pname.text not in kinds:
                    raise ParameterArityError(
                        f"law {law} has no parameter {pname.text}", pname.span)
                params[pname.text] = _parse_param(c, helper, kinds[pname.text])
                if c.at(","):
                    c.take()
                    continue
                break
        missing = [k for k in registry[law].params if k not in params
                   and not registry[law].params[k].endswith("?")]
        if missing:
            raise ParameterArityError(
                f"law {law} missing parameter(s): {', '.join(missing)}",
                law_tok.span)
        steps.append(ScriptStep(law, path, params, start.span))
    return RefinementScript(tuple(steps))


def _process_types(p):
    from .printer import collect_types
    return collect_types(p)


def _parse_param(c, helper, kind):
    kind = kind.rstrip("?")
    helper.c = c
    t = c.peek()
    if kind == "int":
        return c.expect_int()
    if kind == "value":
        return helper.value()
    if kind == "name":
        if t.kind != "ident":
            raise ParseError(f"expected name, found {t.text!r}", t.span)
        return c.take().text
    if kind == "names":
        c.expect("{")
        names = []
        while not c.at("}"):
            names.append(c.expect_ident().text)
            if c.at(","):
                c.take()
        c.expect("}")
        return tuple(names)
    if kind == "schema":
        helper.schema_decl()
        name, schema = helper.defs.pop()
        return schema
    if kind == "pred":
        scope = None  # validated in law scope at application time
        return helper.pred(scope)
    if kind == "expr":
        return helper.expr(None)
    if kind == "wraps":
        # per-leaf loop wrappers: (periodic 6, loop, loop, ...)
        c.expect("(")
        out = []
        while not c.at(")"):
            w = c.peek()
            if w.text == "periodic":
                c.take()
                out.append(("periodic", c.expect_int()))
            elif w.text == "loop":
                c.take()
                out.append(("loop", None))
            else:
                raise ParseError("expected 'periodic T' or 'loop'", w.span)
            if c.at(","):
                c.take()
        c.expect(")")
        return tuple(out)
    raise ParseError(f"unhandled parameter kind {kind}", t.span)

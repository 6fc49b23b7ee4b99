"""Catalog of proviso-guarded rewrites on process definitions.

Each law application returns the rewritten process together with the
verification conditions that must be discharged for the step to be valid.
Static provisos are decided immediately; predicate-level conditions are
discharged by enumeration in the semantics engine.

Laws are marked as equalities or refinements; a refinement step weakens the
relation certified for a whole derivation chain.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import ast as A
from . import analysis as AN
from . import semantics as S
from .printer import fmt_action, fmt_pred


class LawError(Exception):
    pass


class PartitionError(LawError):
    pass


class InvariantSplitError(LawError):
    pass


class TimeArithError(LawError):
    pass


class ShapeError(LawError):
    pass


class FreshnessError(LawError):
    pass


class ProvisoError(LawError):
    pass


class ArityError(LawError):
    pass


class AlgebraError(LawError):
    pass


class SideConditionError(LawError):
    pass


@dataclass
class VerificationCondition:
    id: str
    kind: str  # PredEquiv | PredImpl | Algebra | TimeArith | StaticProviso
    payload: dict
    status: str = "open"
    detail: object = None

    def resolve(self, ok, detail=None):
        if self.status != "open":
            raise LawError(f"VC {self.id} already {self.status}")
        self.status = "discharged" if ok else "failed"
        self.detail = detail

    def describe(self):
        if self.kind in ("PredEquiv", "PredImpl"):
            glue = "<=>" if self.kind == "PredEquiv" else "==>"
            return f"{fmt_pred(self.payload['lhs'])} {glue} {fmt_pred(self.payload['rhs'])}"
        if self.kind == "Algebra":
            op = self.payload["op"]
            return f"{op.name} is associative and commutative with unit {op.zero}"
        if self.kind == "TimeArith":
            return f"{self.payload['lhs']} {self.payload.get('rel', '=')} {self.payload['rhs']}"
        return str(self.payload.get("description", ""))


@dataclass
class LawResult:
    new_process: A.ProcessDef
    vcs: list
    report: str
    relation: str  # equality | refinement


@dataclass(frozen=True)
class LawSpec:
    name: str
    fn: object
    params: dict
    relation: str
    summary: str

    def apply(self, process, path, params):
        return self.fn(process, path, params)


REGISTRY: dict[str, LawSpec] = {}


def _law(name, params, relation, summary):
    def deco(fn):
        REGISTRY[name] = LawSpec(name, fn, params, relation, summary)
        return fn
    return deco


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _vc(counter, law, kind, payload):
    vid = f"{law}-{kind.lower()}-{next(counter)}"
    return VerificationCondition(vid, kind, payload)


def _counter():
    return itertools.count(1)


def _register_schema(process, schema):
    existing = process.schema(schema.name)
    if existing is not None:
        if existing == schema:
            return process
        raise LawError(f"name {schema.name} already bound to a different schema")
    if process.lookup(schema.name) is not None:
        raise LawError(f"name {schema.name} already bound to an action")
    return process.with_def(schema.name, schema)


def _state_domains(process, extra_schemas=()):
    """Domain map covering state vars, their primes, and the decorated
    parameters of the given schemas."""
    doms = {}
    for e in process.state.signature:
        doms[e.var] = e.type
        doms[A.prime(e.var)] = e.type
    for s in extra_schemas:
        for e in s.entries("input", "output"):
            if isinstance(e.type, A.BagType):
                continue  # must be substituted away before discharge
            doms.setdefault(e.decorated, e.type)
    return doms


def _schema_arg_map(schema, args):
    params = schema.entries("input", "output")
    if len(params) != len(args):
        raise ArityError(f"{schema.name} takes {len(params)} parameters")
    return {e.var: (e, a) for e, a in zip(params, args)}


def _args_by_name(new_schema, orig_schema, orig_args):
    """Actual parameters for a user-supplied schema, matched by name against
    the original operation's parameters."""
    have = _schema_arg_map(orig_schema, orig_args)
    out = []
    for e in new_schema.entries("input", "output"):
        got = have.get(e.var)
        if got is None:
            raise PartitionError(
                f"{new_schema.name}: parameter {e.var} has no counterpart in "
                f"{orig_schema.name}")
        prev, actual = got
        if prev.role != e.role:
            raise PartitionError(
                f"{new_schema.name}: parameter {e.var} changes role")
        out.append(actual)
    return tuple(out)


def _require_schema_act(res):
    if not isinstance(res.term, A.SchemaAct):
        raise ShapeError(f"path must address a schema reference, found "
                         f"{type(res.term).__name__}")
    return res.term


def _composition_vc(process, counter, law, op, op1, op2):
    st = process.state.signature
    lhs = S.lifted_rel_pred(op, st)
    rhs = S.compose_schemas(op1, op2, st)
    doms = _state_domains(process, (op, op1, op2))
    return _vc(counter, law, "PredEquiv",
               {"lhs": lhs, "rhs": rhs, "domains": doms})


def _fresh_channel(process, name, payload):
    if process.channel(name) is not None:
        raise FreshnessError(f"channel {name} is already declared")
    return process.with_channel(A.Channel(name, payload))


def _split_seq(res, cut):
    if not isinstance(res.term, A.Seq):
        raise ShapeError("path must address a sequence")
    items = res.term.items
    if not (0 < cut < len(items)):
        raise ShapeError(f"cut {cut} out of range for {len(items)} operands")
    return A.seq(items[:cut]), A.seq(items[cut:])


# ---------------------------------------------------------------------------
# Decomposition of data operations
# ---------------------------------------------------------------------------

@_law("seq_decomp_indep",
      {"Op1": "schema", "Op2": "schema"},
      "equality",
      "split an atomic update of independent state parts into a relational "
      "composition of two updates")
def seq_decomp_indep(process, path, params):
    res = AN.resolve(process, path)
    act = _require_schema_act(res)
    op = process.schema(act.schema)
    op1, op2 = params["Op1"], params["Op2"]
    counter = _counter()
    d1, d2 = _check_partition(process, op, op1, op2)
    vcs = [_vc(counter, "seq_decomp_indep", "StaticProviso",
               {"description": f"writes partition state: {sorted(d1)} / {sorted(d2)}",
                "holds": True}),
           _composition_vc(process, counter, "seq_decomp_indep", op, op1, op2)]
    p2 = _register_schema(_register_schema(process, op1), op2)
    new = A.zseq([A.SchemaAct(op1.name, _args_by_name(op1, op, act.args)),
                  A.SchemaAct(op2.name, _args_by_name(op2, op, act.args))])
    return LawResult(AN.resolve(p2, path).replace(new), vcs,
                     f"{op.name} -> {op1.name} zseq {op2.name}", "equality")


def _check_partition(process, op, op1, op2):
    """Static partition proviso shared by the decomposition laws: the two
    write sets are non-empty, disjoint, and exactly cover the original's."""
    state = set(process.state_vars())
    d0 = AN.schema_wrt(op)
    d1, d2 = AN.schema_wrt(op1), AN.schema_wrt(op2)
    if not d1 or not d2:
        raise PartitionError("both operations must write something")
    if d1 & d2:
        raise PartitionError(f"write sets overlap on {sorted(d1 & d2)}")
    if (d1 | d2) != d0:
        missing = d0 - (d1 | d2)
        extra = (d1 | d2) - d0
        parts = []
        if missing:
            parts.append(f"misses {sorted(missing)}")
        if extra:
            parts.append(f"adds {sorted(extra)}")
        raise PartitionError("partition " + " and ".join(parts))
    for s in (op1, op2):
        for e in s.signature:
            if e.role in ("delta", "xi", "plain") and e.var not in state:
                raise PartitionError(f"{s.name} mentions unknown component {e.var}")
    return d1, d2


@_law("seq_decomp_dep",
      {"Op1": "schema", "Op2": "schema", "I1": "pred", "I2": "pred"},
      "equality",
      "split an atomic update into two updates where the second reads the "
      "first one's result; the linking invariant moves into the predicates")
def seq_decomp_dep(process, path, params):
    res = AN.resolve(process, path)
    act = _require_schema_act(res)
    op = process.schema(act.schema)
    op1, op2 = params["Op1"], params["Op2"]
    i1, i2 = params["I1"], params["I2"]
    counter = _counter()
    d1, d2 = _check_partition(process, op, op1, op2)
    i1_vars = A.pred_vars(i1)
    if not i1_vars <= d1:
        raise InvariantSplitError(
            f"first invariant part mentions {sorted(i1_vars - d1)}, which the "
            f"first operation does not own")
    state_names = set(process.state_vars())
    bad = (A.pred_vars(i2) | i1_vars) - state_names
    if bad:
        raise InvariantSplitError(f"invariant parts mention unknown {sorted(bad)}")
    doms_state = {e.var: e.type for e in process.state.signature}
    vcs = [
        _vc(counter, "seq_decomp_dep", "StaticProviso",
            {"description": f"writes partition state: {sorted(d1)} / {sorted(d2)}",
             "holds": True}),
        _vc(counter, "seq_decomp_dep", "PredEquiv",
            {"lhs": process.state.predicate, "rhs": A.conj([i1, i2]),
             "domains": doms_state}),
        _composition_vc(process, counter, "seq_decomp_dep", op, op1, op2),
    ]
    p2 = _register_schema(_register_schema(process, op1), op2)
    new = A.zseq([A.SchemaAct(op1.name, _args_by_name(op1, op, act.args)),
                  A.SchemaAct(op2.name, _args_by_name(op2, op, act.args))])
    return LawResult(AN.resolve(p2, path).replace(new), vcs,
                     f"{op.name} -> {op1.name} zseq {op2.name}", "equality")


@_law("par_decomp_indep",
      {"Op1": "schema", "Op2": "schema"},
      "equality",
      "split an atomic update of independent state parts into a schema "
      "conjunction")
def par_decomp_indep(process, path, params):
    res = AN.resolve(process, path)
    act = _require_schema_act(res)
    op = process.schema(act.schema)
    op1, op2 = params["Op1"], params["Op2"]
    counter = _counter()
    d1, d2 = _check_partition(process, op, op1, op2)
    p2 = _register_schema(_register_schema(process, op1), op2)
    a1 = A.SchemaAct(op1.name, _args_by_name(op1, op, act.args))
    a2 = A.SchemaAct(op2.name, _args_by_name(op2, op, act.args))
    conj = A.SchemaConj((a1, a2))
    merged, margs = S.merge_conjunction(p2, conj)
    st = process.state.signature
    vcs = [
        _vc(counter, "par_decomp_indep", "StaticProviso",
            {"description": f"write sets disjoint: {sorted(d1)} / {sorted(d2)}",
             "holds": True}),
        _vc(counter, "par_decomp_indep", "PredEquiv",
            {"lhs": S.lifted_rel_pred(op, st),
             "rhs": S.lifted_rel_pred(merged, st),
             "domains": _state_domains(process, (op, op1, op2))}),
    ]
    return LawResult(AN.resolve(p2, path).replace(conj), vcs,
                     f"{op.name} -> {op1.name} /\\ {op2.name}", "equality")


@_law("par_decomp_merge",
      {"POp": "schema", "MOp": "schema", "op": "name", "n": "int",
       "locals": "names?"},
      "equality",
      "split an atomic computation into n indexed partial computations whose "
      "results are folded together by an order-insensitive merge")
def par_decomp_merge(process, path, params):
    res = AN.resolve(process, path)
    act = _require_schema_act(res)
    op = process.schema(act.schema)
    pop, mop, n = params["POp"], params["MOp"], params["n"]
    if n < 2:
        raise ArityError(f"need at least 2 partial computations, got {n}")
    binop = process.binop(params["op"])
    if binop is None:
        raise AlgebraError(f"unknown binary operation {params['op']}")

    pop_in = pop.entries("input")
    pop_out = pop.entries("output")
    if len(pop_in) != 1 or len(pop_out) != 1:
        raise ShapeError("the partial operation needs exactly one index input "
                         "and one result output")
    idx, out = pop_in[0], pop_out[0]
    if isinstance(idx.type, A.BagType) or not set(range(1, n + 1)) <= set(idx.type.values):
        raise ShapeError(f"index parameter {idx.var} must cover 1..{n}")
    rtype = out.type
    if isinstance(rtype, A.BagType):
        raise ShapeError("the partial result must have a finite type")
    if binop.operand_type != rtype:
        raise AlgebraError(
            f"operation {binop.name} works on {binop.operand_type.name}, "
            f"but partial results have type {rtype.name}")
    mop_in = mop.entries("input")
    if len(mop_in) != 1 or not isinstance(mop_in[0].type, A.BagType) \
            or mop_in[0].type.elem != rtype:
        raise ShapeError("the merge operation needs exactly one bag input over "
                         "the partial result type")
    if mop.entries("output"):
        raise ShapeError("the merge operation cannot have outputs")
    if AN.schema_wrt(pop):
        raise ShapeError("partial computations must not write state components")

    names = params.get("locals") or tuple(f"r{i}" for i in range(1, n + 1))
    if len(names) != n:
        raise ArityError(f"need {n} local result names")

    counter = _counter()
    p2 = _register_schema(_register_schema(process, pop), mop)
    insts = []
    for i, rn in zip(range(1, n + 1), names):
        inst_pred = A.subst_pred(pop.predicate,
                                 {out.decorated: A.Var(A.prime(rn)),
                                  idx.decorated: A.Lit(i)})
        sig = tuple(e for e in pop.signature if e.role in ("delta", "xi", "plain"))
        inst = A.Schema(f"{pop.name}_{i}", sig + (A.SigEntry(rn, rtype, "delta"),),
                        inst_pred)
        p2 = _register_schema(p2, inst)
        insts.append(inst)
    conj = A.SchemaConj(tuple(A.SchemaAct(s.name) for s in insts))
    bag = A.BagLit(tuple(A.Var(rn) for rn in names))
    mop_act = A.SchemaAct(mop.name, (bag,))
    block = A.VarBlock(tuple((rn, rtype) for rn in names),
                       A.seq([conj, mop_act]))

    # existential form: the original operation equals "some partial results
    # exist that the merge folds into the final state"
    parts = [A.subst_pred(pop.predicate, {out.decorated: A.Var(rn),
                                          idx.decorated: A.Lit(i)})
             for i, rn in zip(range(1, n + 1), names)]
    parts += [A.Cmp("=", A.Var(A.prime(e.var)), A.Var(e.var))
              for e in pop.signature if e.role == "xi"]
    merge_part = A.subst_pred(S.schema_rel_pred(mop), {mop_in[0].decorated: bag})
    rhs = A.conj(parts + [merge_part])
    for rn in reversed(names):
        rhs = A.Quant("exists", rn, rtype, rhs)
    rhs_schema = A.Schema("_merge_form", _merge_state_roles(pop, mop), rhs)
    st = process.state.signature
    vcs = [
        _vc(counter, "par_decomp_merge", "Algebra", {"op": binop}),
        _vc(counter, "par_decomp_merge", "PredEquiv",
            {"lhs": S.lifted_rel_pred(op, st),
             "rhs": S.lifted_rel_pred(rhs_schema, st),
             "domains": _state_domains(process, (op, pop, mop))}),
    ]
    return LawResult(AN.resolve(p2, path).replace(block), vcs,
                     f"{op.name} -> {n} x {pop.name} merged by {mop.name}",
                     "equality")


def _merge_state_roles(pop, mop):
    entries = {}
    order = []
    for s in (pop, mop):
        for e in s.signature:
            if e.role in ("input", "output"):
                continue
            prev = entries.get(e.var)
            if prev is None:
                entries[e.var] = e
                order.append(e.var)
            elif prev.role != e.role:
                role = "delta" if "delta" in (prev.role, e.role) else prev.role
                entries[e.var] = A.SigEntry(e.var, e.type, role)
    return tuple(entries[v] for v in order)


# ---------------------------------------------------------------------------
# Time budgets
# ---------------------------------------------------------------------------

def _require_budget(res):
    t = res.term
    if not isinstance(t, A.Wait) or t.lo != 0:
        raise ShapeError("path must address a budget of the form wait 0..t")
    return t


@_law("budget_split", {"t1": "int", "t2": "int"}, "equality",
      "split one time budget into two consecutive budgets")
def budget_split(process, path, params):
    res = AN.resolve(process, path)
    w = _require_budget(res)
    t1, t2 = params["t1"], params["t2"]
    if t1 < 0 or t2 < 0 or t1 + t2 != w.hi:
        raise TimeArithError(f"{t1} + {t2} != {w.hi}")
    counter = _counter()
    vc = _vc(counter, "budget_split", "TimeArith",
             {"lhs": t1 + t2, "rhs": w.hi, "rel": "="})
    new = A.Seq((A.Wait(0, t1), A.Wait(0, t2)))
    return LawResult(res.replace(new), [vc],
                     f"wait 0..{w.hi} -> wait 0..{t1} ; wait 0..{t2}",
                     "equality")


@_law("budget_narrow", {"t2": "int"}, "refinement",
      "narrow a time budget, reducing nondeterminism")
def budget_narrow(process, path, params):
    res = AN.resolve(process, path)
    w = _require_budget(res)
    t2 = params["t2"]
    if t2 < 0 or t2 > w.hi:
        raise TimeArithError(f"{t2} > {w.hi}")
    counter = _counter()
    vc = _vc(counter, "budget_narrow", "TimeArith",
             {"lhs": t2, "rhs": w.hi, "rel": "<="})
    return LawResult(res.replace(A.Wait(0, t2)), [vc],
                     f"wait 0..{w.hi} -> wait 0..{t2}", "refinement")


_INSTANT = (A.SchemaAct, A.Assign, A.SchemaConj, A.ZSeq)


@_law("budget_distribute", {"idx": "int"}, "equality",
      "swap a delay with an adjacent instantaneous data operation")
def budget_distribute(process, path, params):
    res = AN.resolve(process, path)
    if not isinstance(res.term, A.Seq):
        raise ShapeError("path must address a sequence")
    i = params["idx"]
    items = res.term.items
    if not (0 <= i < len(items) - 1):
        raise ShapeError(f"no adjacent pair at index {i}")
    a, b = items[i], items[i + 1]
    if isinstance(a, A.Wait) and isinstance(b, _INSTANT):
        pass
    elif isinstance(b, A.Wait) and isinstance(a, _INSTANT):
        pass
    else:
        raise ShapeError(
            "adjacent operands must be a delay and a data operation, found "
            f"{type(a).__name__} and {type(b).__name__}")
    counter = _counter()
    vc = _vc(counter, "budget_distribute", "StaticProviso",
             {"description": "partner operand is an instantaneous data operation",
              "holds": True})
    new_items = list(items)
    new_items[i], new_items[i + 1] = b, a
    return LawResult(res.replace(A.Seq(tuple(new_items))), [vc],
                     f"swap operands {i} and {i + 1}", "equality")


@_law("budget_fuse", {}, "equality",
      "fuse an internal choice of two delays into one delay")
def budget_fuse(process, path, params):
    res = AN.resolve(process, path)
    t = res.term
    if not (isinstance(t, A.IntChoice) and len(t.items) == 2
            and all(isinstance(i, A.Wait) for i in t.items)):
        raise ShapeError("path must address an internal choice of two delays")
    w1, w2 = t.items
    new = A.Wait(min(w1.lo, w2.lo), max(w1.hi, w2.hi))
    return LawResult(res.replace(new), [],
                     f"wait {w1.lo}..{w1.hi} |~| wait {w2.lo}..{w2.hi} -> "
                     f"wait {new.lo}..{new.hi}", "equality")


@_law("zseq_to_seq", {"link": "int?"}, "equality",
      "turn a relational composition into an action sequence")
def zseq_to_seq(process, path, params):
    res = AN.resolve(process, path)
    t = res.term
    if not isinstance(t, A.ZSeq):
        raise ShapeError("path must address a schema composition")
    link = params.get("link", 0)
    if not (0 <= link < len(t.items) - 1):
        raise ShapeError(f"no composition link at {link}")
    left = t.items[:link + 1]
    right = t.items[link + 1:]
    lact = left[0] if len(left) == 1 else A.ZSeq(left)
    ract = right[0] if len(right) == 1 else A.ZSeq(right)

    st = process.state.signature
    lpred = _group_pred(process, left, st)
    rpred = _group_pred(process, right, st)
    whole = _compose_preds(lpred, rpred, st)
    pre_whole = _exists_after(whole, st)
    pre_right_primed = A.subst_pred(
        _exists_after(rpred, st),
        {e.var: A.Var(A.prime(e.var)) for e in st})
    counter = _counter()
    schemas = [process.schema(i.schema) for i in t.items]
    vc = _vc(counter, "zseq_to_seq", "PredImpl",
             {"lhs": A.conj([pre_whole, lpred]),
              "rhs": pre_right_primed,
              "domains": _state_domains(process, schemas)})
    return LawResult(res.replace(A.seq([lact, ract])), [vc],
                     "schema composition -> action sequence", "equality")


def _group_pred(process, acts, st):
    pred = None
    for act in acts:
        s = process.schema(act.schema)
        if s is None:
            raise ShapeError(f"unknown schema {act.schema}")
        p = S.lifted_rel_pred(s, st)
        pred = p if pred is None else _compose_preds(pred, p, st)
    return pred


def _compose_preds(p1, p2, st):
    mids = {e.var: f"{e.var}__m" for e in st}
    a = A.subst_pred(p1, {A.prime(e.var): A.Var(mids[e.var]) for e in st})
    b = A.subst_pred(p2, {e.var: A.Var(mids[e.var]) for e in st})
    body = A.conj([a, b])
    for e in reversed(st):
        body = A.Quant("exists", mids[e.var], e.type, body)
    return body


def _exists_after(pred, st):
    body = pred
    for e in reversed(st):
        body = A.Quant("exists", A.prime(e.var), e.type, body)
    return body


# ---------------------------------------------------------------------------
# Parallelisation of actions
# ---------------------------------------------------------------------------

@_law("par_intro_indep", {"c": "name", "cut": "int?"}, "equality",
      "run two independent sequential fragments in parallel, ordered by a "
      "fresh synchronisation channel")
def par_intro_indep(process, path, params):
    res = AN.resolve(process, path)
    a1, a2 = _split_seq(res, params.get("cut", 1))
    w1, w2 = AN.wrt(process, a1), AN.wrt(process, a2)
    u2 = AN.used(process, a2)
    if w1 & w2:
        raise ProvisoError(f"write sets overlap on {sorted(w1 & w2)}")
    if w1 & u2:
        raise ProvisoError(
            f"the second fragment reads {sorted(w1 & u2)} written by the first")
    c = params["c"]
    p2 = _fresh_channel(process, c, None)
    counter = _counter()
    vcs = [_vc(counter, "par_intro_indep", "StaticProviso",
               {"description": f"no data flow between fragments; {c} fresh",
                "holds": True})]
    left = A.seq([a1, A.Prefix(c, "sync", None, A.SKIP)])
    right = A.Prefix(c, "sync", None, a2)
    new = A.Hide(A.Parallel(frozenset(w1), frozenset([c]), frozenset(w2),
                            left, right), frozenset([c]))
    return LawResult(AN.resolve(p2, path).replace(new), vcs,
                     f"sequence -> parallel over fresh {c}", "equality")


@_law("par_intro_dep", {"c": "name", "x": "name", "cut": "int?"}, "equality",
      "run two data-dependent sequential fragments in parallel; the fresh "
      "channel communicates the shared value")
def par_intro_dep(process, path, params):
    res = AN.resolve(process, path)
    a1, a2 = _split_seq(res, params.get("cut", 1))
    x = params["x"]
    w1, w2 = AN.wrt(process, a1), AN.wrt(process, a2)
    u2 = AN.used(process, a2)
    if w1 & w2:
        raise ProvisoError(f"write sets overlap on {sorted(w1 & w2)}")
    dep = w1 & u2
    if dep != {x}:
        raise ProvisoError(
            f"data dependency is {sorted(dep)}, expected exactly {{{x}}}; "
            "pack multiple values into one component or use the independent law")
    xty = process.state_types().get(x)
    if xty is None:
        raise ProvisoError(f"{x} is not a state component")
    c = params["c"]
    p2 = _fresh_channel(process, c, xty)
    counter = _counter()
    vcs = [_vc(counter, "par_intro_dep", "StaticProviso",
               {"description": f"dependency exactly {{{x}}}; {c} fresh, "
                               f"carrying {xty.name}",
                "holds": True})]
    left = A.seq([a1, A.Prefix(c, "out", A.Var(x), A.SKIP)])
    right = A.Prefix(c, "in", x, a2)
    new = A.Hide(A.Parallel(frozenset(w1), frozenset([c]), frozenset(w2),
                            left, right), frozenset([c]))
    return LawResult(AN.resolve(p2, path).replace(new), vcs,
                     f"sequence -> parallel over fresh {c} carrying {x}",
                     "equality")


@_law("conj_to_par", {"split": "int?"}, "equality",
      "turn a schema conjunction with disjoint write sets into a parallel "
      "composition")
def conj_to_par(process, path, params):
    res = AN.resolve(process, path)
    t = res.term
    if not isinstance(t, A.SchemaConj):
        raise ShapeError("path must address a schema conjunction")
    split = params.get("split", 1)
    if not (0 < split < len(t.items)):
        raise ShapeError(f"split {split} out of range")
    left_items, right_items = t.items[:split], t.items[split:]
    lact = left_items[0] if len(left_items) == 1 else A.SchemaConj(left_items)
    ract = right_items[0] if len(right_items) == 1 else A.SchemaConj(right_items)
    w1, w2 = AN.wrt(process, lact), AN.wrt(process, ract)
    if w1 & w2:
        raise ProvisoError(f"write sets overlap on {sorted(w1 & w2)}")
    counter = _counter()
    vcs = [_vc(counter, "conj_to_par", "StaticProviso",
               {"description": f"write sets disjoint: {sorted(w1)} / {sorted(w2)}",
                "holds": True})]
    new = A.Parallel(frozenset(w1), frozenset(), frozenset(w2), lact, ract)
    return LawResult(res.replace(new), vcs,
                     "schema conjunction -> parallel composition", "equality")


@_law("conj_to_par_budgeted",
      {"POp_TB": "int", "Rec_TB": "int", "Merge_TB": "int", "rec": "name",
       "recv": "name?", "idx": "int?"},
      "refinement",
      "turn a budgeted merge-form computation into parallel budgeted partial "
      "computations feeding a budgeted collector")
def conj_to_par_budgeted(process, path, params):
    res = AN.resolve(process, path)
    if not isinstance(res.term, A.Seq):
        raise ShapeError("path must address a sequence containing the budget "
                         "and the merge-form block")
    items = res.term.items
    idx = params.get("idx")
    candidates = range(len(items) - 1) if idx is None else [idx]
    found = None
    for i in candidates:
        if isinstance(items[i], A.Wait) and items[i].lo == 0 \
                and isinstance(items[i + 1], A.VarBlock):
            found = i
            break
    if found is None:
        raise ShapeError(
            "expected: wait 0..t followed by a local block; found operands "
            + ", ".join(type(x).__name__ for x in items))
    w, block = items[found], items[found + 1]
    shape = _match_merge_block(process, block)
    n, decls, conj_items, mop_act, rtype = shape

    pop_tb, rec_tb, merge_tb = params["POp_TB"], params["Rec_TB"], params["Merge_TB"]
    if pop_tb < 0 or rec_tb < 0 or merge_tb < 0 \
            or pop_tb + n * rec_tb + merge_tb > w.hi:
        raise TimeArithError(
            f"{pop_tb} + {n}*{rec_tb} + {merge_tb} > {w.hi}")
    rec = params["rec"]
    recv = params.get("recv", "v")
    p2 = _fresh_channel(process, rec, rtype)
    counter = _counter()
    vcs = [_vc(counter, "conj_to_par_budgeted", "TimeArith",
               {"lhs": pop_tb + n * rec_tb + merge_tb, "rhs": w.hi, "rel": "<="}),
           _vc(counter, "conj_to_par_budgeted", "StaticProviso",
               {"description": f"{rec} fresh, carrying {rtype.name}",
                "holds": True})]

    partials = []
    for (rn, ty), act in zip(decls, conj_items):
        body = A.seq([A.Wait(0, pop_tb), act,
                      A.Prefix(rec, "out", A.Var(rn), A.SKIP)])
        partials.append(A.VarBlock(((rn, ty),), body))
    tree = partials[0]
    for pt in partials[1:]:
        tree = A.Interleave(tree, pt)

    recs = []
    for rn, _ in decls:
        recs.append(A.Prefix(rec, "in", recv,
                             A.seq([A.Wait(0, rec_tb), A.Assign(rn, A.Var(recv))])))
    collector = A.VarBlock(decls,
                           A.seq(recs + [A.Wait(0, merge_tb), mop_act]))
    cw = AN.wrt(p2, mop_act)
    par = A.Parallel(frozenset(), frozenset([rec]), frozenset(cw),
                     tree, collector)
    new_items = list(items)
    new_items[found:found + 2] = [A.Hide(par, frozenset([rec]))]
    return LawResult(AN.resolve(p2, path).replace(A.seq(new_items)), vcs,
                     f"budgeted merge-form -> {n} parallel partials + collector "
                     f"over fresh {rec}", "refinement")


def _match_merge_block(process, block):
    """Match the block produced by the merge decomposition: local result
    variables, a conjunction of indexed partial updates, and the folding
    merge applied to the bag of results."""
    decls = block.decls
    body = block.body
    if not isinstance(body, A.Seq) or len(body.items) != 2:
        raise ShapeError("merge-form block must be a two-step sequence, found "
                         + fmt_action(body))
    conj, mop_act = body.items
    if not isinstance(conj, A.SchemaConj):
        raise ShapeError("first step must be a conjunction of partial updates, "
                         "found " + fmt_action(conj))
    if not isinstance(mop_act, A.SchemaAct) or len(mop_act.args) != 1 \
            or not isinstance(mop_act.args[0], A.BagLit):
        raise ShapeError("second step must apply the merge to a bag of results, "
                         "found " + fmt_action(mop_act))
    n = len(decls)
    if len(conj.items) != n:
        raise ShapeError(f"{n} locals but {len(conj.items)} partial updates")
    bag = mop_act.args[0]
    names = tuple(v.name for v in bag.items if isinstance(v, A.Var))
    if names != tuple(rn for rn, _ in decls):
        raise ShapeError("merge must take exactly the local results, in order")
    rtypes = {ty for _, ty in decls}
    if len(rtypes) != 1:
        raise ShapeError("all partial results must share one type")
    for (rn, _), act in zip(decls, conj.items):
        s = process.schema(act.schema)
        if s is None or s.entry(rn) is None or s.entry(rn).role != "delta":
            raise ShapeError(f"partial update {act.schema} must produce {rn}")
    return n, decls, conj.items, mop_act, next(iter(rtypes))


# ---------------------------------------------------------------------------
# Elementary structural laws
# ---------------------------------------------------------------------------

def _free_in(process, action):
    return A.action_free_vars(action) | AN.used(process, action) | AN.wrt(process, action)


@_law("elementary",
      {"which": "name", "direction": "name?", "cut": "int?", "count": "int?",
       "idx": "int?", "side": "name?", "cs1": "names?", "cs2": "names?",
       "channels": "names?", "wraps": "wraps?"},
      "equality",
      "small structural rearrangements: hide extraction, prefix distribution, "
      "budget/choice distribution, parallel regrouping, channel fan-out, and "
      "cyclic-loop distribution over parallel components")
def elementary(process, path, params):
    which = params["which"]
    fn = _ELEMENTARY.get(which)
    if fn is None:
        raise ShapeError(f"unknown elementary variant {which}")
    return fn(process, path, params)


def _elem_hide_extract(process, path, params):
    res = AN.resolve(process, path)
    if not isinstance(res.term, A.Hide):
        raise ShapeError("path must address a hidden action")
    if len(path) < 2:
        raise SideConditionError("the hide is already at the root")
    hide = res.term
    parent_res = AN.resolve(process, path[:-1])
    parent = parent_res.term
    sel = path[-1]
    hch = hide.channels

    def check_clear(other):
        clash = hch & AN.channels_of(other)
        if clash:
            raise SideConditionError(
                f"hidden channels {sorted(clash)} occur in the surrounding context")

    if isinstance(parent, A.Seq):
        rest = [x for j, x in enumerate(parent.items) if j != sel]
        for r in rest:
            check_clear(r)
        items = list(parent.items)
        items[sel] = hide.body
        new = A.Hide(A.seq(items), hch)
    elif isinstance(parent, (A.Parallel, A.Interleave)):
        other = parent.right if sel == "left" else parent.left
        check_clear(other)
        if isinstance(parent, A.Parallel) and hch & parent.cs:
            raise SideConditionError(
                f"hidden channels {sorted(hch & parent.cs)} are synchronised "
                "at the enclosing parallel")
        inner = AN._rebuild(parent, sel, hide.body)
        new = A.Hide(inner, hch)
    elif isinstance(parent, A.Prefix):
        if parent.channel in hch:
            raise SideConditionError(
                f"hidden channel {parent.channel} guards the context")
        new = A.Hide(A.Prefix(parent.channel, parent.kind, parent.payload,
                              hide.body), hch)
    elif isinstance(parent, A.Hide):
        new = A.Hide(hide.body, hch | parent.channels)
    else:
        raise SideConditionError(
            f"cannot extract hiding through {type(parent).__name__}")
    counter = _counter()
    vcs = [_vc(counter, "elementary", "StaticProviso",
               {"description": f"hidden {sorted(hch)} unused in the crossed context",
                "holds": True})]
    return LawResult(parent_res.replace(new), vcs,
                     f"lift hiding of {sorted(hch)} one level", "equality")


def _strip_sync_deadline(t):
    if isinstance(t, A.SyncDeadline):
        return t.body, lambda b: A.SyncDeadline(b, t.ticks)
    return t, lambda b: b


def _elem_prefix_distribute_seq(process, path, params):
    direction = params.get("direction", "out")
    res = AN.resolve(process, path)
    counter = _counter()
    if direction == "in":
        if not isinstance(res.term, A.Seq):
            raise ShapeError("path must address a sequence")
        items = res.term.items
        count = params.get("count", len(items) - 1)
        head, rewrap = _strip_sync_deadline(items[0])
        if not isinstance(head, A.Prefix):
            raise ShapeError("first operand must be a channel prefix "
                             "(possibly under an engagement deadline)")
        if count < 1 or count > len(items) - 1:
            raise ShapeError(f"cannot absorb {count} operands")
        moved = items[1:1 + count]
        if head.kind == "in":
            for mv in moved:
                if head.payload in _free_in(process, mv):
                    raise SideConditionError(
                        f"absorbed part uses the bound variable {head.payload}")
        new_head = rewrap(A.Prefix(head.channel, head.kind, head.payload,
                                   A.seq([head.body, *moved])))
        new = A.seq([new_head, *items[1 + count:]])
        report = f"absorb {count} operand(s) into the {head.channel} prefix"
    else:
        head, rewrap = _strip_sync_deadline(res.term)
        if not isinstance(head, A.Prefix) or not isinstance(head.body, A.Seq):
            raise ShapeError("path must address a prefix over a sequence")
        items = head.body.items
        cut = params.get("cut", 1)
        if not (0 < cut < len(items)):
            raise ShapeError(f"cut {cut} out of range")
        stay, moved = items[:cut], items[cut:]
        if head.kind == "in":
            for mv in moved:
                if head.payload in _free_in(process, mv):
                    raise SideConditionError(
                        f"moved part uses the bound variable {head.payload}")
        new_head = rewrap(A.Prefix(head.channel, head.kind, head.payload,
                                   A.seq(stay)))
        new = A.seq([new_head, *moved])
        report = f"move {len(moved)} operand(s) out of the {head.channel} prefix"
    vcs = [_vc(counter, "elementary", "StaticProviso",
               {"description": "input binder unused in the redistributed part",
                "holds": True})]
    return LawResult(res.replace(new), vcs, report, "equality")


def _elem_prefix_distribute_par(process, path, params):
    res = AN.resolve(process, path)
    head = res.term
    if not isinstance(head, A.Prefix):
        raise ShapeError("path must address a channel prefix")
    body = head.body
    if not isinstance(body, (A.Parallel, A.Interleave)):
        raise ShapeError("the prefix must guard a parallel composition")
    side = params.get("side", "left")
    tgt = body.left if side == "left" else body.right
    other = body.right if side == "left" else body.left
    cs = body.cs if isinstance(body, A.Parallel) else frozenset()
    if head.channel in cs:
        raise SideConditionError(
            f"{head.channel} is in the synchronisation set")
    if head.channel in AN.channels_of(other):
        raise SideConditionError(
            f"{head.channel} occurs in the other operand")
    if head.kind == "in" and head.payload in _free_in(process, other):
        raise SideConditionError(
            f"bound variable {head.payload} occurs in the other operand")
    new_tgt = A.Prefix(head.channel, head.kind, head.payload, tgt)
    new = AN._rebuild(body, side, new_tgt)
    counter = _counter()
    vcs = [_vc(counter, "elementary", "StaticProviso",
               {"description": "prefix channel and binder untouched by the "
                               "other operand", "holds": True})]
    return LawResult(res.replace(new), vcs,
                     f"distribute {head.channel} prefix into the {side} operand",
                     "equality")


def _elem_intchoice_wait_distribute(process, path, params):
    direction = params.get("direction", "in")
    res = AN.resolve(process, path)
    counter = _counter()
    if direction == "in":
        if not isinstance(res.term, A.Seq):
            raise ShapeError("path must address a sequence")
        i = params.get("idx", 0)
        items = res.term.items
        if i + 1 >= len(items) or not isinstance(items[i], A.Wait) \
                or not isinstance(items[i + 1], (A.IntChoice, A.ExtChoice)):
            raise ShapeError("need a delay immediately before a choice")
        w, ch = items[i], items[i + 1]
        branches = tuple(A.seq([w, b]) for b in ch.items)
        new_items = list(items)
        new_items[i:i + 2] = [type(ch)(branches)]
        new = A.seq(new_items)
        report = "distribute the delay into the choice"
    else:
        t = res.term
        if not isinstance(t, (A.IntChoice, A.ExtChoice)):
            raise ShapeError("path must address a choice")
        heads = []
        rests = []
        for b in t.items:
            if not (isinstance(b, A.Seq) and isinstance(b.items[0], A.Wait)):
                raise ShapeError("every branch must start with a delay")
            heads.append(b.items[0])
            rests.append(A.seq(b.items[1:]))
        if len(set(heads)) != 1:
            raise SideConditionError("branch delays differ")
        new = A.seq([heads[0], type(t)(tuple(rests))])
        report = "factor the common delay out of the choice"
    vcs = [_vc(counter, "elementary", "StaticProviso",
               {"description": "delay adjacent to the choice", "holds": True})]
    return LawResult(res.replace(new), vcs, report, "equality")


def _elem_par_seq_absorb(process, path, params):
    res = AN.resolve(process, path)
    if not isinstance(res.term, A.Seq):
        raise ShapeError("path must address a sequence")
    items = res.term.items
    i = params.get("idx", 0)
    side = params.get("side", "right")
    if i >= len(items) - 1 or not isinstance(items[i], A.Parallel):
        raise ShapeError("need a parallel composition with a continuation")
    par = items[i]
    tail = items[i + 1:]
    if side == "right":
        new_par = A.Parallel(par.ns1, par.cs, par.ns2, par.left,
                             A.seq([par.right, *tail]))
    else:
        new_par = A.Parallel(par.ns1, par.cs, par.ns2,
                             A.seq([par.left, *tail]), par.right)
    new = A.seq(list(items[:i]) + [new_par])
    counter = _counter()
    vcs = [_vc(counter, "elementary", "StaticProviso",
               {"description": f"continuation owned by the {side} operand; "
                               "the other operand is finished by then",
                "holds": True})]
    return LawResult(res.replace(new), vcs,
                     f"absorb the continuation into the {side} parallel operand",
                     "equality")


def _elem_par_comm(process, path, params):
    res = AN.resolve(process, path)
    t = res.term
    if isinstance(t, A.Parallel):
        new = A.Parallel(t.ns2, t.cs, t.ns1, t.right, t.left)
    elif isinstance(t, A.Interleave):
        new = A.Interleave(t.right, t.left)
    else:
        raise ShapeError("path must address a parallel composition")
    return LawResult(res.replace(new), [], "swap parallel operands", "equality")


def _elem_par_reassoc(process, path, params):
    """Regroup a nested parallel composition.  cs1 is the new outer
    synchronisation set and cs2 the new inner one; their union must equal
    the union of the old sets so no channel gains or loses partners."""
    res = AN.resolve(process, path)
    t = res.term
    direction = params.get("direction", "l2r")
    cs1 = frozenset(params.get("cs1", ()))
    cs2 = frozenset(params.get("cs2", ()))
    for c in cs1 | cs2:
        if process.channel(c) is None:
            raise ShapeError(f"undeclared channel {c}")
    if direction == "l2r":
        # (A |x| B) |y| C  ->  A |cs1| (B |cs2| C)
        if not (isinstance(t, A.Parallel) and isinstance(t.left, A.Parallel)):
            raise ShapeError("need a left-nested parallel composition")
        inner = t.left
        old_union = inner.cs | t.cs
        a, b, c = inner.left, inner.right, t.right
        nsa, nsb, nsc = inner.ns1, inner.ns2, t.ns2
        new = A.Parallel(nsa, cs1, frozenset(nsb | nsc), a,
                         A.Parallel(nsb, cs2, nsc, b, c))
    else:
        # A |x| (B |y| C)  ->  (A |cs2| B) |cs1| C
        if not (isinstance(t, A.Parallel) and isinstance(t.right, A.Parallel)):
            raise ShapeError("need a right-nested parallel composition")
        inner = t.right
        old_union = inner.cs | t.cs
        a, b, c = t.left, inner.left, inner.right
        nsa, nsb, nsc = t.ns1, inner.ns1, inner.ns2
        new = A.Parallel(frozenset(nsa | nsb), cs1, nsc,
                         A.Parallel(nsa, cs2, nsb, a, b), c)
    if cs1 | cs2 != old_union:
        raise SideConditionError(
            f"regrouping changes the synchronised channels: "
            f"{sorted(old_union)} vs {sorted(cs1 | cs2)}")
    counter = _counter()
    vcs = [_vc(counter, "elementary", "StaticProviso",
               {"description": "synchronised channel set preserved by regrouping",
                "holds": True})]
    return LawResult(res.replace(new), vcs, "regroup parallel composition",
                     "equality")


def _elem_chan_fanout(process, path, params):
    res = AN.resolve(process, path)
    t = res.term
    if not isinstance(t, A.Hide) or len(t.channels) != 1:
        raise ShapeError("path must address an action hiding exactly one channel")
    c = next(iter(t.channels))
    ds = params.get("channels")
    if not ds:
        raise ShapeError("need the fresh per-component channels")
    decl = process.channel(c)
    sites = []

    def find(term):
        if isinstance(term, A.Prefix) and term.channel == c:
            sites.append(term)
        for k in A.action_children(term):
            find(k)

    find(t.body)
    outs = [s for s in sites if s.kind == "out"]
    ins = [s for s in sites if s.kind == "in"]
    if len(outs) != 1 or len(ins) != 1 or len(sites) != 2:
        raise ShapeError(f"need exactly one sender and one receiver on {c}")
    out_site, in_site = outs[0], ins[0]
    if not isinstance(out_site.body, A.Skip):
        raise ShapeError("the sender must finish after sending")
    leaves = _interleave_leaves(in_site.body)
    if len(leaves) != len(ds):
        raise ShapeError(f"receiver splits into {len(leaves)} components, "
                         f"got {len(ds)} channels")
    p2 = process
    for d in ds:
        p2 = _fresh_channel(p2, d, decl.payload)

    send_tree = None
    for d in ds:
        pfx = A.Prefix(d, "out", out_site.payload, A.SKIP)
        send_tree = pfx if send_tree is None else A.Interleave(send_tree, pfx)
    recv_tree = None
    for d, leaf in zip(ds, leaves):
        pfx = A.Prefix(d, "in", in_site.payload, leaf)
        recv_tree = pfx if recv_tree is None else A.Interleave(recv_tree, pfx)

    def rewrite(term):
        if term is out_site:
            return send_tree
        if term is in_site:
            return recv_tree
        if isinstance(term, A.Parallel):
            cs = term.cs
            if c in cs:
                cs = (cs - {c}) | frozenset(ds)
            return A.Parallel(term.ns1, cs, term.ns2,
                              rewrite(term.left), rewrite(term.right))
        kids = A.action_children(term)
        if not kids:
            return term
        if isinstance(term, (A.Seq, A.ExtChoice, A.IntChoice)):
            return type(term)(tuple(rewrite(i) for i in term.items))
        if isinstance(term, A.Interleave):
            return A.Interleave(rewrite(term.left), rewrite(term.right))
        if isinstance(term, A.Hide):
            return A.Hide(rewrite(term.body), term.channels)
        if isinstance(term, A.Prefix):
            return A.Prefix(term.channel, term.kind, term.payload,
                            rewrite(term.body))
        if isinstance(term, A.Rec):
            return A.Rec(term.binder, rewrite(term.body))
        if isinstance(term, (A.TermDeadline, A.SyncDeadline)):
            return type(term)(rewrite(term.body), term.ticks)
        if isinstance(term, A.VarBlock):
            return A.VarBlock(term.decls, rewrite(term.body))
        if isinstance(term, A.Guard):
            return A.Guard(term.pred, rewrite(term.body))
        return term

    new = A.Hide(rewrite(t.body), frozenset(ds))
    counter = _counter()
    vcs = [_vc(counter, "elementary", "StaticProviso",
               {"description": f"{c} fans out to {len(ds)} fresh channels, "
                               "one per receiving component",
                "holds": True})]
    return LawResult(AN.resolve(p2, path).replace(new), vcs,
                     f"fan {c} out into {', '.join(ds)}", "equality")


def _interleave_leaves(t):
    if isinstance(t, A.Interleave):
        return _interleave_leaves(t.left) + _interleave_leaves(t.right)
    return [t]


def _elem_loop_par_distribute(process, path, params):
    res = AN.resolve(process, path)
    t = res.term
    if not isinstance(t, A.Rec):
        raise ShapeError("path must address a recursion")
    body = t.body
    if not (isinstance(body, A.ExtChoice) and len(body.items) == 2):
        raise ShapeError("loop body must offer the cycle and the termination "
                         "event")
    cyc, stop = body.items
    if not (isinstance(stop, A.Prefix) and stop.kind == "sync"
            and isinstance(stop.body, A.Skip)):
        raise ShapeError("second branch must be a termination event prefix")
    term_chan = stop.channel
    if not (isinstance(cyc, A.Seq) and len(cyc.items) == 2
            and isinstance(cyc.items[1], A.RecCall)
            and cyc.items[1].binder == t.binder):
        raise ShapeError("first branch must loop after one cycle")
    core = cyc.items[0]
    if not (isinstance(core, A.Interleave) and isinstance(core.right, A.Wait)
            and core.right.lo == core.right.hi):
        raise ShapeError("cycle must pace a parallel body against a fixed delay")
    period = core.right.lo
    tree = core.left
    hides = []
    while isinstance(tree, A.Hide):
        hides.append(tree.channels)
        tree = tree.body
    leaves = _par_leaves(tree)
    wraps = params.get("wraps")
    if wraps is None or len(wraps) != len(leaves):
        raise ShapeError(f"need one wrap per component ({len(leaves)} found)")

    def wrap_leaf(leaf, spec):
        kind, arg = spec
        if kind == "periodic":
            per = arg if arg is not None else period
            cycle = A.seq([A.Interleave(A.TermDeadline(leaf, per),
                                        A.Wait(per, per)),
                           A.RecCall("X")])
        else:
            cycle = A.seq([leaf, A.RecCall("X")])
        return A.Rec("X", A.extchoice(
            [cycle, A.Prefix(term_chan, "sync", None, A.SKIP)]))

    pos = itertools.count()

    def rebuild(node):
        if isinstance(node, A.Parallel):
            return A.Parallel(node.ns1, node.cs | {term_chan}, node.ns2,
                              rebuild(node.left), rebuild(node.right))
        if isinstance(node, A.Interleave):
            nl = AN.wrt(process, node.left)
            nr = AN.wrt(process, node.right)
            left = rebuild(node.left)
            right = rebuild(node.right)
            return A.Parallel(frozenset(nl), frozenset([term_chan]),
                              frozenset(nr), left, right)
        return wrap_leaf(node, wraps[next(pos)])

    new = rebuild(tree)
    for h in reversed(hides):
        new = A.Hide(new, h)
    counter = _counter()
    vcs = [_vc(counter, "elementary", "StaticProviso",
               {"description": f"every component re-synchronises each period "
                               f"({period} ticks) and on {term_chan}",
                "holds": True})]
    return LawResult(res.replace(new), vcs,
                     f"distribute the cycle loop over {len(leaves)} components",
                     "refinement")


def _par_leaves(t):
    if isinstance(t, (A.Parallel, A.Interleave)):
        return _par_leaves(t.left) + _par_leaves(t.right)
    return [t]


_ELEMENTARY = {
    "hide_extract": _elem_hide_extract,
    "prefix_distribute_seq": _elem_prefix_distribute_seq,
    "prefix_distribute_par": _elem_prefix_distribute_par,
    "intchoice_wait_distribute": _elem_intchoice_wait_distribute,
    "par_seq_absorb": _elem_par_seq_absorb,
    "par_comm": _elem_par_comm,
    "par_reassoc": _elem_par_reassoc,
    "chan_fanout": _elem_chan_fanout,
    "loop_par_distribute": _elem_loop_par_distribute,
}


# ---------------------------------------------------------------------------
# One-point simplification (pre-step for quantified operation predicates)
# ---------------------------------------------------------------------------

@_law("one_point", {"name": "name?"}, "equality",
      "eliminate existential quantifiers whose witness is forced by an "
      "equality, inside a schema predicate")
def one_point(process, path, params):
    res = AN.resolve(process, path)
    act = _require_schema_act(res)
    op = process.schema(act.schema)
    simplified = _one_point_pred(op.predicate)
    if simplified == op.predicate:
        raise ShapeError("no one-point opportunity found")
    new_name = params.get("name", f"{op.name}_sim")
    new_schema = A.Schema(new_name, op.signature, simplified)
    p2 = _register_schema(process, new_schema)
    counter = _counter()
    vcs = [_vc(counter, "one_point", "PredEquiv",
               {"lhs": S.lifted_rel_pred(op, process.state.signature),
                "rhs": S.lifted_rel_pred(new_schema, process.state.signature),
                "domains": _state_domains(process, (op,))})]
    return LawResult(AN.resolve(p2, path).replace(A.SchemaAct(new_name, act.args)),
                     vcs, f"{op.name} -> {new_name} (one-point simplification)",
                     "equality")


def _one_point_pred(p):
    if isinstance(p, A.Quant) and p.kind == "exists":
        body = _one_point_pred(p.body)
        terms = body.terms if isinstance(body, A.And) else (body,)
        for i, c in enumerate(terms):
            if isinstance(c, A.Cmp) and c.op == "=":
                witness = None
                if isinstance(c.left, A.Var) and c.left.name == p.var \
                        and p.var not in A.expr_vars(c.right):
                    witness = c.right
                elif isinstance(c.right, A.Var) and c.right.name == p.var \
                        and p.var not in A.expr_vars(c.left):
                    witness = c.left
                if witness is not None:
                    rest = terms[:i] + terms[i + 1:]
                    replaced = A.conj([A.subst_pred(r, {p.var: witness})
                                       for r in rest]) if rest else A.TRUE
                    return _one_point_pred(replaced)
        return A.Quant("exists", p.var, p.type, body)
    if isinstance(p, A.And):
        return A.conj([_one_point_pred(t) for t in p.terms])
    if isinstance(p, A.Or):
        return A.disj([_one_point_pred(t) for t in p.terms])
    if isinstance(p, A.Not):
        return A.Not(_one_point_pred(p.term))
    if isinstance(p, A.Implies):
        return A.Implies(_one_point_pred(p.left), _one_point_pred(p.right))
    if isinstance(p, A.Quant):
        return A.Quant(p.kind, p.var, p.type, _one_point_pred(p.body))
    return p


def apply_law(process, law, path, params):
    """Look up and apply a single law; returns its LawResult."""
    spec = REGISTRY.get(law)
    if spec is None:
        raise LawError(f"unknown law {law}")
    result = spec.apply(process, tuple(path), dict(params))
    problems = AN.check_namesets(result.new_process)
    if problems:
        raise LawError("result violates nameset discipline: " + "; ".join(problems))
    return result

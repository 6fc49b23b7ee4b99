"""Script execution: applies refinement steps in order, discharges their
verification conditions, optionally validates every step against the bounded
trace semantics, and produces a replayable certificate."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from . import ast as A
from . import analysis as AN
from . import laws as L
from . import semantics as S
from .parser import parse_process, parse_script
from .printer import pretty, fmt_pred, fmt_schema


class StepError(Exception):
    def __init__(self, index, law, cause):
        self.index = index
        self.law = law
        self.cause = cause
        super().__init__(f"step {index} ({law}): {cause}")


class SemanticMismatch(Exception):
    def __init__(self, index, law, verdict):
        self.index = index
        self.law = law
        self.verdict = verdict
        super().__init__(
            f"step {index} ({law}): trace check failed ({verdict.kind}), "
            f"witness {verdict.witness}")


class IncompleteDerivation(Exception):
    pass


@dataclass
class StepRecord:
    index: int
    step: object  # parser.ScriptStep
    result: L.LawResult
    verdict: object  # semantics.Verdict | None


@dataclass
class Derivation:
    initial: A.ProcessDef
    steps: list
    final: A.ProcessDef
    chain_relation: str  # equality | refinement
    bounds: S.Bounds
    mode: str  # vc-only | full

    @property
    def all_discharged(self):
        return all(vc.status == "discharged"
                   for r in self.steps for vc in r.result.vcs)


def run_script(process, script, bounds=None, mode="vc-only", cap=S.DEFAULT_CAP):
    """Apply every step of a refinement script.

    In full mode each step is additionally validated by bounded trace
    comparison of the process before and after the step (set equality for
    equality laws, inclusion for refinement laws).  Execution halts at the
    first failed verification condition or semantic counterexample; steps
    are atomic, so the failure leaves the derivation at the prior version.
    """
    bounds = bounds or S.Bounds()
    binops = {b.name: b for b in process.binops}
    current = process
    records = []
    chain = "equality"
    for i, step in enumerate(script.steps):
        try:
            result = L.apply_law(current, step.law, step.path, step.params)
        except (L.LawError, AN.PathError) as e:
            raise StepError(i, step.law, e) from e
        for vc in result.vcs:
            S.discharge(vc, binops, cap)
            if vc.status == "failed":
                raise StepError(
                    i, step.law,
                    f"verification condition {vc.id} failed: {vc.detail} "
                    f"[{vc.describe()}]")
        verdict = None
        if mode == "full":
            if result.relation == "equality":
                verdict = S.check_equal(current, result.new_process, bounds, cap)
            else:
                verdict = S.check_refines(current, result.new_process, bounds, cap)
            if not verdict.holds:
                raise SemanticMismatch(i, step.law, verdict)
        records.append(StepRecord(i, step, result, verdict))
        if result.relation == "refinement":
            chain = "refinement"
        current = result.new_process
    return Derivation(process, records, current, chain, bounds, mode)


# ---------------------------------------------------------------------------
# Target-shape recognition
# ---------------------------------------------------------------------------

@dataclass
class HandlerInfo:
    kind: str  # periodic | aperiodic
    period: int | None
    channels: tuple
    path: str


@dataclass
class ShapeCheck:
    pattern: str
    match: bool
    handlers: list = field(default_factory=list)
    missions: int = 0
    mismatch: str | None = None

    def to_json(self):
        return {
            "pattern": self.pattern,
            "match": self.match,
            "missions": self.missions,
            "handlers": [{"kind": h.kind, "period": h.period,
                          "channels": sorted(h.channels), "path": h.path}
                         for h in self.handlers],
            "mismatch": self.mismatch,
        }


def _match_term_ctrl(t):
    """Find the termination fragment: request then synchronised stop."""
    if isinstance(t, A.Prefix) and t.kind == "sync":
        b = t.body
        if isinstance(b, A.Prefix) and b.kind == "sync" and isinstance(b.body, A.Skip):
            return t.channel, b.channel
    return None


def _match_handler(t, term_chan):
    """Match a handler loop against the periodic or aperiodic template."""
    if not isinstance(t, A.Rec):
        return None, "not a recursion"
    body = t.body
    if not (isinstance(body, A.ExtChoice) and len(body.items) == 2):
        return None, "loop body is not a two-way choice"
    cyc, stop = body.items
    if not (isinstance(stop, A.Prefix) and stop.kind == "sync"
            and stop.channel == term_chan and isinstance(stop.body, A.Skip)):
        return None, f"no termination branch on {term_chan}"
    if not (isinstance(cyc, A.Seq) and len(cyc.items) == 2
            and isinstance(cyc.items[1], A.RecCall)
            and cyc.items[1].binder == t.binder):
        return None, "cycle branch does not loop"
    core = cyc.items[0]
    if isinstance(core, A.Interleave) and isinstance(core.right, A.Wait) \
            and core.right.lo == core.right.hi \
            and isinstance(core.left, A.TermDeadline) \
            and core.left.ticks == core.right.lo:
        return HandlerInfo("periodic", core.right.lo,
                           tuple(sorted(AN.channels_of(core))), ""), None
    head = core
    if isinstance(head, A.Seq):
        head = head.items[0]
    choices = head.items if isinstance(head, A.ExtChoice) else (head,)
    if all(isinstance(c, A.Prefix) and c.kind in ("in", "sync") for c in choices):
        return HandlerInfo("aperiodic", None,
                           tuple(sorted(AN.channels_of(core))), ""), None
    return None, "cycle matches neither handler template"


def shape_check(process):
    """Check the design shape: state initialisation followed by missions,
    each mission a parallel of handler loops composed with a control action
    over the termination channels."""
    check = ShapeCheck("scj_design_fig2", False)
    main = process.main
    if not isinstance(main, A.Seq) or len(main.items) < 2:
        check.mismatch = "main: expected initialisation followed by missions"
        return check
    if not isinstance(main.items[0], A.SchemaAct):
        check.mismatch = "main/0: initialisation must be a data operation"
        return check
    for mi, mission in enumerate(main.items[1:], start=1):
        ok = _check_mission(process, mission, f"main/{mi}", check)
        if not ok:
            return check
        check.missions += 1
    check.match = True
    return check


def _check_mission(process, mission, where, check):
    t = mission
    while isinstance(t, A.Hide):
        t = t.body
        where += "/body"
    if not isinstance(t, A.Parallel):
        check.mismatch = f"{where}: mission is not a parallel composition"
        return False
    ctrl_side = t.right
    term = None
    for leaf in _par_leaves(ctrl_side):
        got = _match_term_ctrl(leaf)
        if got is None and isinstance(leaf, A.Rec):
            got = _match_term_ctrl_in_loop(leaf)
        if got is not None:
            term = got
            break
    if term is None:
        check.mismatch = (f"{where}/right: control side lacks the "
                          "termination fragment")
        return False
    term_req, term_msn = term
    if not {term_req, term_msn} <= set(t.cs):
        check.mismatch = (f"{where}: mission does not synchronise on "
                          f"{term_req} and {term_msn}")
        return False
    leaves = _par_leaves_with_paths(t.left, where + "/left")
    for leaf, lpath in leaves:
        info, why = _match_handler(leaf, term_msn)
        if info is None:
            check.mismatch = f"{lpath}: {why}"
            return False
        info.path = lpath
        check.handlers.append(info)
    return True


def _match_term_ctrl_in_loop(rec):
    body = rec.body
    items = body.items if isinstance(body, A.ExtChoice) else (body,)
    for it in items:
        t = it
        if isinstance(t, A.Seq):
            t = t.items[0]
        got = _match_term_ctrl(t)
        if got is not None:
            return got
    return None


def _par_leaves(t):
    if isinstance(t, (A.Parallel, A.Interleave)):
        return _par_leaves(t.left) + _par_leaves(t.right)
    return [t]


def _par_leaves_with_paths(t, path):
    if isinstance(t, (A.Parallel, A.Interleave)):
        return (_par_leaves_with_paths(t.left, path + "/left")
                + _par_leaves_with_paths(t.right, path + "/right"))
    return [(t, path)]


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

def _sha(text):
    return hashlib.sha256(text.encode()).hexdigest()


def _fmt_param(v):
    if isinstance(v, A.Schema):
        return fmt_schema(v)
    if isinstance(v, A.Pred):
        return fmt_pred(v)
    if isinstance(v, tuple):
        return [_fmt_param(x) for x in v]
    return v


def certificate(derivation, spec_text, script_text):
    """Machine-checkable record of a derivation; contains enough to replay."""
    for r in derivation.steps:
        for vc in r.result.vcs:
            if vc.status == "open":
                raise IncompleteDerivation(f"verification condition {vc.id} is open")
    steps = []
    for r in derivation.steps:
        law = L.REGISTRY[r.step.law]
        steps.append({
            "index": r.index,
            "law": r.step.law,
            "about": law.summary,
            "at": AN.format_path(r.step.path),
            "params": {k: _fmt_param(v) for k, v in sorted(r.step.params.items())},
            "relation": r.result.relation,
            "report": r.result.report,
            "vcs": [{
                "id": vc.id,
                "kind": vc.kind,
                "status": vc.status,
                "statement": vc.describe(),
                "detail": _json_safe(vc.detail),
            } for vc in r.result.vcs],
            "verdict": r.verdict.to_json() if r.verdict else None,
        })
    doc = {
        "certVersion": 1,
        "process": derivation.initial.name,
        "specSha256": _sha(spec_text),
        "scriptSha256": _sha(script_text),
        "spec": spec_text,
        "script": script_text,
        "mode": derivation.mode,
        "bounds": {"maxDepth": derivation.bounds.max_depth,
                   "maxTicks": derivation.bounds.max_ticks},
        "chainRelation": derivation.chain_relation,
        "steps": steps,
        "finalSha256": _sha(pretty(derivation.final)),
        "final": pretty(derivation.final),
    }
    return doc


def _json_safe(v):
    if v is None or isinstance(v, (str, int, bool)):
        return v
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return str(v)


def certificate_json(doc):
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def replay(doc, cap=S.DEFAULT_CAP):
    """Re-run a certificate's script on its recorded specification.

    Returns (ok, new_doc): ok is true when the replayed certificate is
    byte-identical and the final process matches structurally.
    """
    process = parse_process(doc["spec"], "<certificate>")
    script = parse_script(doc["script"], process)
    bounds = S.Bounds(doc["bounds"]["maxDepth"], doc["bounds"]["maxTicks"])
    derivation = run_script(process, script, bounds, doc["mode"], cap)
    new_doc = certificate(derivation, doc["spec"], doc["script"])
    same_final = A.structural_eq(derivation.final.main,
                                 parse_process(doc["final"]).main)
    ok = (certificate_json(new_doc) == certificate_json(doc)) and same_final
    return ok, new_doc

"""Command-line front end.

Exit codes: 0 success, 1 verification failure (witness as JSON on stdout),
2 usage or parse error, 3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import analysis as AN
from . import ast as A
from . import laws as L
from . import semantics as S
from . import tactic as T
from .parser import SpecError, parse_path, parse_process, parse_script, _Cursor, tokenize
from .printer import pretty, fmt_action


def _cap(args):
    env = os.environ.get("MREFINE_CAP")
    if args.cap is not None:
        return args.cap
    if env:
        return int(env)
    return S.DEFAULT_CAP


def _load(path):
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return text, parse_process(text, path)


def _emit(args, payload, human):
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def _bounds(args):
    return S.Bounds(args.depth, args.ticks)


def cmd_parse(args):
    _, p = _load(args.file)
    problems = AN.check_namesets(p)
    if problems:
        for pr in problems:
            print(pr, file=sys.stderr)
        return 1
    if args.tree:
        for path, term in AN.iter_paths(p):
            label = type(term).__name__
            print(f"{AN.format_path(path)}  {label}")
    else:
        print(pretty(p), end="")
    return 0


def cmd_analyze(args):
    _, p = _load(args.file)
    if args.path:
        cur = _Cursor(tokenize(args.path, "<path>"))
        path = parse_path(cur)
        term = AN.resolve(p, path).term
    else:
        term = p.main
    out = {
        "wrt": sorted(AN.wrt(p, term)),
        "used": sorted(AN.used(p, term)),
        "channels": sorted(AN.channels_of(term)),
    }
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_apply(args):
    text, p = _load(args.file)
    with open(args.script, encoding="utf-8") as f:
        stext = f.read()
    script = parse_script(stext, p, filename=args.script)
    k = args.step
    if not (0 <= k < len(script.steps)):
        print(f"script has {len(script.steps)} steps", file=sys.stderr)
        return 2
    current = p
    for i in range(k):
        step = script.steps[i]
        current = L.apply_law(current, step.law, step.path, step.params).new_process
    step = script.steps[k]
    before = AN.resolve(current, step.path).term
    result = L.apply_law(current, step.law, step.path, step.params)
    after = AN.resolve(result.new_process, step.path[:1]).term
    print(f"step {k}: {step.law} at {AN.format_path(step.path)}")
    print(f"  {result.report}")
    print("--- before (addressed node)")
    print(fmt_action(before))
    print("--- after (root)")
    print(fmt_action(after))
    for vc in result.vcs:
        print(f"  vc {vc.id} [{vc.kind}] {vc.describe()}")
    return 0


def cmd_refine(args):
    text, p = _load(args.file)
    with open(args.script, encoding="utf-8") as f:
        stext = f.read()
    script = parse_script(stext, p, filename=args.script)
    mode = "full" if args.full else "vc-only"
    try:
        derivation = T.run_script(p, script, _bounds(args), mode, _cap(args))
    except T.SemanticMismatch as e:
        _emit(args, {"error": "semantic-mismatch", "step": e.index,
                     "law": e.law, "verdict": e.verdict.to_json()}, str(e))
        return 1
    except T.StepError as e:
        _emit(args, {"error": "step-failed", "step": e.index,
                     "law": e.law, "cause": str(e.cause)}, str(e))
        return 1
    doc = T.certificate(derivation, text, stext)
    out = args.output or (args.file + ".cert.json")
    with open(out, "w", encoding="utf-8") as f:
        f.write(T.certificate_json(doc))
    sc = T.shape_check(derivation.final)
    _emit(args, {"certificate": out, "chainRelation": derivation.chain_relation,
                 "steps": len(derivation.steps), "shape": sc.to_json()},
          f"{len(derivation.steps)} steps applied; chain relation: "
          f"{derivation.chain_relation}; certificate: {out}\n"
          f"shape: {'match' if sc.match else 'mismatch'}"
          f" ({len(sc.handlers)} handlers)")
    return 0


def cmd_replay(args):
    with open(args.certificate, encoding="utf-8") as f:
        doc = json.load(f)
    ok, _ = T.replay(doc, _cap(args))
    _emit(args, {"replay": "ok" if ok else "mismatch"},
          "replay ok" if ok else "replay mismatch")
    return 0 if ok else 1


def cmd_traces(args):
    _, p = _load(args.file)
    ts = S.traces(p, _bounds(args), _cap(args))
    if args.json:
        print(json.dumps(ts))
    else:
        for t in ts:
            print(" ".join(_fmt_item(i) for i in t) if t else "<>")
    return 0


def _fmt_item(item):
    if item[0] == "tick":
        return "tick"
    if item[0] == "term":
        return "term"
    if len(item) == 3:
        return f"{item[1]}.{item[2]}"
    return item[1]


def cmd_equal(args):
    _, p = _load(args.file1)
    _, q = _load(args.file2)
    v = S.check_equal(p, q, _bounds(args), _cap(args))
    _emit(args, v.to_json(), f"verdict: {v.kind}"
          + (f", witness: {v.witness}" if v.witness else ""))
    return 0 if v.holds else 1


def cmd_refines(args):
    _, p = _load(args.file1)
    _, q = _load(args.file2)
    v = S.check_refines(p, q, _bounds(args), _cap(args))
    _emit(args, v.to_json(), f"verdict: {v.kind}"
          + (f", witness: {v.witness}" if v.witness else ""))
    return 0 if v.holds else 1


def cmd_laws(args):
    out = []
    for name in sorted(L.REGISTRY):
        spec = L.REGISTRY[name]
        out.append({"law": name, "relation": spec.relation,
                    "params": spec.params, "summary": spec.summary})
    if args.json:
        print(json.dumps(out, sort_keys=True, indent=2))
    else:
        for e in out:
            ps = ", ".join(f"{k}:{v}" for k, v in e["params"].items())
            print(f"{e['law']} [{e['relation']}] ({ps})")
            print(f"    {e['summary']}")
    return 0


def cmd_shape(args):
    _, p = _load(args.file)
    sc = T.shape_check(p)
    _emit(args, sc.to_json(),
          f"{'match' if sc.match else 'mismatch'}: {sc.missions} mission(s), "
          f"{len(sc.handlers)} handler(s)"
          + (f"; {sc.mismatch}" if sc.mismatch else ""))
    return 0 if sc.match else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="mrefine",
                                 description="refinement-law engine for timed "
                                             "mission models")
    ap.add_argument("--json", action="store_true",
                    help="machine-readable output on stdout")
    ap.add_argument("--cap", type=int, default=None,
                    help="enumeration cap (overrides MREFINE_CAP)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common_bounds(sp):
        sp.add_argument("--depth", type=int, default=10,
                        help="maximum number of events per trace")
        sp.add_argument("--ticks", type=int, default=12,
                        help="time horizon in ticks")

    sp = sub.add_parser("parse", help="parse and well-formedness-check a file")
    sp.add_argument("file")
    sp.add_argument("--tree", action="store_true",
                    help="print addressable paths instead of the canonical text")
    sp.set_defaults(fn=cmd_parse)

    sp = sub.add_parser("analyze", help="write/read/channel sets as JSON")
    sp.add_argument("file")
    sp.add_argument("--path", default=None)
    sp.set_defaults(fn=cmd_analyze)

    sp = sub.add_parser("apply", help="preview a single script step")
    sp.add_argument("file")
    sp.add_argument("script")
    sp.add_argument("--step", type=int, default=0)
    sp.set_defaults(fn=cmd_apply)

    sp = sub.add_parser("refine", help="run a refinement script end to end")
    sp.add_argument("file")
    sp.add_argument("script")
    sp.add_argument("--full", action="store_true",
                    help="trace-validate every step (slower)")
    sp.add_argument("--output", default=None, help="certificate path")
    common_bounds(sp)
    sp.set_defaults(fn=cmd_refine)

    sp = sub.add_parser("replay", help="re-run and compare a certificate")
    sp.add_argument("certificate")
    sp.set_defaults(fn=cmd_replay)

    sp = sub.add_parser("traces", help="dump the bounded timed-trace set")
    sp.add_argument("file")
    common_bounds(sp)
    sp.set_defaults(fn=cmd_traces)

    sp = sub.add_parser("equal", help="bounded trace-set equality")
    sp.add_argument("file1")
    sp.add_argument("file2")
    common_bounds(sp)
    sp.set_defaults(fn=cmd_equal)

    sp = sub.add_parser("refines", help="bounded trace refinement "
                                        "(second refines first)")
    sp.add_argument("file1")
    sp.add_argument("file2")
    common_bounds(sp)
    sp.set_defaults(fn=cmd_refines)

    sp = sub.add_parser("laws", help="list the law catalog")
    sp.add_argument("what", nargs="?", default="list", choices=["list"])
    sp.set_defaults(fn=cmd_laws)

    sp = sub.add_parser("shape", help="check the mission-design target shape")
    sp.add_argument("file")
    sp.set_defaults(fn=cmd_shape)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except SpecError as e:
        print(str(e), file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(str(e), file=sys.stderr)
        return 2
    except S.DomainTooLarge as e:
        print(str(e), file=sys.stderr)
        return 3
    except (L.LawError, AN.PathError, S.SemanticsError, T.IncompleteDerivation) as e:
        print(str(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

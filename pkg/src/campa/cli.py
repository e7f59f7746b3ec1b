"""Command-line entry point: ``campa <command> FILE [options]``.

Exit codes: 0 success, 1 analysis failure, 2 budget exceeded, 3 usage error.
``optimize`` uses 0 = related, 1 = unrelated, 2 = related but a check failed.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
import warnings
from fractions import Fraction
from pathlib import Path

from .algebra import AlgebraError, CostEnv, evaluate, expr_to_json
from .core_types import GlobalType, Role, count_binders, format_cost, unroll
from .cost import CostError, global_cost_ext, trace_cost
from .deployment import DeploymentError, fit_cost_curve, load_architecture, load_bindings, resource_cost, to_fraction
from .frontend import ParseError, Protocol, parse, print_local
from .latency import LatencyError, latency, latency_rel
from .optimizer import check_opt_cost, check_opt_deadlock, explain_leq
from .projection import has_split_actions, well_formed
from .semantics import BudgetExceeded, SemanticsError, config_steps, deadlock_free, format_trace, initial_configuration

SCHEMA = "campa/1"

EXIT_OK, EXIT_FAIL, EXIT_BUDGET, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class AnalysisFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="campa", description="Cost analysis of multiparty protocols.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, file=True):
        if file:
            sp.add_argument("file", help="protocol file (.camp)")
        sp.add_argument("--format", choices=("text", "json"), default="text")
        sp.add_argument("--seed", type=int, default=42)
        sp.add_argument("--samples", type=int, default=100)
        sp.add_argument("--state-cap", type=int, default=10**6)
        sp.add_argument("--n-max", type=int, default=8)
        return sp

    sp = common(sub.add_parser("check", help="well-formedness and deadlock-freedom"))
    sp.add_argument("--unroll", help="iteration counts K[,K...] (default 1 per loop)")

    sp = common(sub.add_parser("project", help="local type of every role"))
    sp.add_argument("--role")

    sp = common(sub.add_parser("cost", help="per-role cost equations"))
    sp.add_argument("--unroll")
    sp.add_argument("--bind", help="bindings JSON; evaluates the equations")
    sp.add_argument("--role")

    sp = common(sub.add_parser("latency", help="per-iteration latency of a loop"))
    sp.add_argument("--relative", metavar="ROLE", help="divide by ROLE's interactions per iteration")
    sp.add_argument("--bind")

    sp = common(sub.add_parser("simulate", help="one seeded run of the projected configuration"))
    sp.add_argument("--unroll")
    sp.add_argument("--max-depth", type=int, default=1000)
    sp.add_argument("--bind")

    sp = common(sub.add_parser("optimize", help="check an asynchronous optimization"))
    sp.add_argument("--against", required=True, help="the original protocol")
    sp.add_argument("--check-deadlock", action="store_true")
    sp.add_argument("--check-cost", action="store_true")
    sp.add_argument("--zero-send", action="store_true", help="force send costs to 0 in the cost check")
    sp.add_argument("--unroll")

    sp = common(sub.add_parser("deploy-cost", help="cost on a hardware description"))
    sp.add_argument("--arch", required=True)
    sp.add_argument("--bind", required=True)
    sp.add_argument("--unroll")

    sp = common(sub.add_parser("fit", help="fit a cost curve to profiling samples"), file=False)
    sp.add_argument("file", help="samples as JSON [[size, time], ...] or CSV lines 'size,time'")
    sp.add_argument("--at", action="append", default=[], help="size to evaluate (repeatable)")
    return p


# ---------------------------------------------------------------------------
# Helpers


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _load(path: str) -> Protocol:
    try:
        return parse(_read(path))
    except ParseError as e:
        raise AnalysisFailure(f"{path}:{e.line}:{e.col}: {e.message}") from None


def _unroll(text, g: GlobalType):
    n = count_binders(g)
    if text is None:
        return [1] * n
    try:
        ks = [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--unroll expects integers, got {text!r}") from None
    if any(k < 0 for k in ks):
        raise UsageError("--unroll counts must be nonnegative")
    if len(ks) == 1 and n > 1:
        ks = ks * n
    if len(ks) != n:
        raise UsageError(f"--unroll expects {n} comma-separated count(s), got {len(ks)}")
    return ks


def _role(proto: Protocol, name: str) -> Role:
    try:
        return proto.role(name)
    except KeyError:
        raise UsageError(f"unknown role {name}") from None


def _num(x: Fraction) -> dict:
    return {"exact": str(x), "decimal": float(x)}


def _env_json(env: CostEnv) -> dict:
    return {r.name: {"text": format_cost(e), "expr": expr_to_json(e)} for r, e in sorted(env.items())}


def _env_text(env: CostEnv, indent: str = "  ") -> list:
    return [f"{indent}T_{r.name} = {format_cost(e)}" for r, e in sorted(env.items())]


def _evaluated(env: CostEnv, b) -> dict:
    return {r: evaluate(e, b) for r, e in sorted(env.items())}


def _ks_label(ks) -> str:
    return ",".join(str(k) for k in ks) if ks else "1"


def _wf_or_fail(proto: Protocol, path: str) -> None:
    wf = well_formed(proto.body)
    if not wf:
        lines = []
        for role, msg, where in wf.failures:
            span = proto.span_of(where)
            loc = f"{path}:{span[0]}:{span[1]}" if span else path
            who = f"role {role}: " if role is not None else ""
            branch = f" (branch path {'/'.join(where)})" if where else ""
            lines.append(f"{loc}: {who}{msg}{branch}")
        raise AnalysisFailure("\n".join(lines))


# ---------------------------------------------------------------------------
# Commands; each returns (exit code, results dict, text lines)


def cmd_check(a):
    proto = _load(a.file)
    _wf_or_fail(proto, a.file)
    ks = _unroll(a.unroll, proto.body)
    split = has_split_actions(proto.body)
    rep = deadlock_free(proto.body, ks or None, a.state_cap, allow_orphans=split)
    results = {"well_formed": True, "deadlock_free": rep.deadlock_free, "unroll": ks, "configurations": rep.states}
    if rep.deadlock_free:
        return EXIT_OK, results, [f"well-formed; deadlock-free (k={_ks_label(ks)})"]
    results["trace"] = format_trace(rep.trace)
    return EXIT_FAIL, results, ["well-formed; DEADLOCK"] + rep.lines()


def cmd_project(a):
    proto = _load(a.file)
    _wf_or_fail(proto, a.file)
    local = well_formed(proto.body).locals
    if a.role:
        r = _role(proto, a.role)
        local = {r: local[r]}
    results = {r.name: print_local(l) for r, l in sorted(local.items())}
    return EXIT_OK, results, [f"{name}: {text}" for name, text in results.items()]


def cmd_cost(a):
    proto = _load(a.file)
    ks = _unroll(a.unroll, proto.body)
    env = global_cost_ext(proto.body, ks)
    if a.role:
        r = _role(proto, a.role)
        env = CostEnv({r: env.get(r)})
    results = {"unroll": ks, "equations": _env_json(env)}
    lines = [f"cost(G, {_ks_label(ks)}):"] + _env_text(env)
    if a.bind:
        vals = _evaluated(env, load_bindings(_read(a.bind)))
        results["values"] = {r.name: _num(v) for r, v in vals.items()}
        lines += ["values:"] + [f"  T_{r.name} = {v} ({float(v):.6g})" for r, v in vals.items()]
    return EXIT_OK, results, lines


def cmd_latency(a):
    proto = _load(a.file)
    res = latency(proto.body, a.n_max, a.samples, a.seed)
    env = res.env
    if a.relative:
        env = latency_rel(proto.body, _role(proto, a.relative), a.n_max)
    results = {"stabilized_at": res.index, "numeric": res.numeric, "latency": _env_json(env)}
    label = f"latency relative to {a.relative}" if a.relative else "latency"
    lines = [f"{label} (stable from n={res.index}{', by sampled evaluation' if res.numeric else ''}):"]
    lines += _env_text(env)
    if a.bind:
        vals = _evaluated(env, load_bindings(_read(a.bind)))
        results["values"] = {r.name: _num(v) for r, v in vals.items()}
        lines += ["values:"] + [f"  T_{r.name} = {v} ({float(v):.6g})" for r, v in vals.items()]
    return EXIT_OK, results, lines


def cmd_simulate(a):
    proto = _load(a.file)
    _wf_or_fail(proto, a.file)
    ks = _unroll(a.unroll, proto.body)
    cfg = initial_configuration(unroll(proto.body, ks) if ks else proto.body)
    rng = random.Random(a.seed)
    trace = []
    while len(trace) < a.max_depth:
        steps = sorted(config_steps(cfg), key=lambda s: s[0].sort_key())
        if not steps:
            break
        act, cfg = steps[rng.randrange(len(steps))]
        trace.append(act)
    stuck = not config_steps(cfg) and not cfg.finished
    env = trace_cost(trace)
    results = {"unroll": ks, "steps": len(trace), "trace": [str(x) for x in trace], "deadlocked": stuck,
               "complete": cfg.finished, "cost": _env_json(env)}
    lines = [f"{len(trace)} steps: {format_trace(trace)}"]
    if stuck:
        lines.append("run is stuck")
    lines += ["trace cost:"] + _env_text(env)
    if a.bind:
        vals = _evaluated(env, load_bindings(_read(a.bind)))
        results["values"] = {r.name: _num(v) for r, v in vals.items()}
        lines += ["values:"] + [f"  T_{r.name} = {v}" for r, v in vals.items()]
    return (EXIT_FAIL if stuck else EXIT_OK), results, lines


def cmd_optimize(a):
    p1, p2 = _load(a.file), _load(a.against)
    g1, g2 = p1.body, p2.body
    reasons = explain_leq(g1, g2)
    related = not reasons
    results = {"related": related, "reasons": reasons}
    lines = ["related: the first type optimizes the second" if related else "unrelated: " + "; ".join(reasons)]
    failed = False
    if a.check_deadlock:
        ks = _unroll(a.unroll, g1)
        rep = check_opt_deadlock(g1, g2, ks or None, a.state_cap)
        results["deadlock"] = {"deadlock_free": rep.deadlock_free, "basis": rep.basis, "configurations": rep.deadlock.states}
        lines.append(("deadlock-free" if rep.deadlock_free else "DEADLOCK") + f" ({rep.basis})")
        failed |= not rep.deadlock_free
    if a.check_cost:
        ks = _unroll(a.unroll, g1)
        rep = check_opt_cost(g1, g2, ks, a.samples, a.seed, zero_send=a.zero_send)
        cmp_ = rep.comparison
        results["cost"] = {"holds": cmp_.holds, "method": cmp_.method, "zero_send": a.zero_send,
                           "optimized": _env_json(rep.optimized), "original": _env_json(rep.original),
                           "violations": len(cmp_.violations)}
        lines.append(f"cost(optimized) <= cost(original): {'yes' if cmp_.holds else 'no'} ({cmp_.method})")
        failed |= not cmp_.holds
    if not related:
        return EXIT_FAIL, results, lines
    return (EXIT_BUDGET if failed else EXIT_OK), results, lines


def cmd_deploy_cost(a):
    proto = _load(a.file)
    hw, mapping = load_architecture(_read(a.arch))
    b = load_bindings(_read(a.bind))
    ks = _unroll(a.unroll, proto.body)
    vals = resource_cost(proto.body, ks, hw, mapping, b)
    results = {"unroll": ks, "values": {r.name: _num(v) for r, v in sorted(vals.items())}}
    lines = [f"resource-bounded cost (k={_ks_label(ks)}):"]
    lines += [f"  T_{r.name} = {v} ({float(v):.6g})" for r, v in sorted(vals.items())]
    return EXIT_OK, results, lines


def _samples(text: str) -> list:
    text = text.strip()
    if text.startswith("["):
        return json.loads(text)
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            parts = line.split(",")
            if len(parts) != 2:
                raise UsageError(f"expected 'size,time', got {line!r}")
            rows.append([p.strip() for p in parts])
    return rows


def cmd_fit(a):
    curve = fit_cost_curve(_samples(_read(a.file)))
    values = {}
    for x in a.at:
        values[x] = curve(to_fraction(x))
    lo, hi = curve.domain
    results = {"knots": curve.to_json(), "domain": [str(lo), str(hi)],
               "values": {x: _num(v) for x, v in values.items()}}
    lines = [f"natural cubic spline through {len(curve.xs)} samples on [{lo}, {hi}]"]
    lines += [f"  f({x}) = {v} ({float(v):.6g})" for x, v in values.items()]
    return EXIT_OK, results, lines


COMMANDS = {
    "check": cmd_check, "project": cmd_project, "cost": cmd_cost, "latency": cmd_latency,
    "simulate": cmd_simulate, "optimize": cmd_optimize, "deploy-cost": cmd_deploy_cost, "fit": cmd_fit,
}


def _inputs(a) -> dict:
    keys = ("file", "against", "arch", "bind", "unroll", "role", "relative", "at")
    return {k: getattr(a, k) for k in keys if getattr(a, k, None) not in (None, [], False)}


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    a = build_parser().parse_args(argv)
    budgets = {"state_cap": a.state_cap, "n_max": a.n_max, "samples": a.samples}
    results, lines, error = {}, [], None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code, results, lines = COMMANDS[a.command](a)
        except UsageError as e:
            code, error = EXIT_USAGE, str(e)
        except BudgetExceeded as e:
            code, error = EXIT_BUDGET, f"budget exceeded: {e}"
        except (AnalysisFailure, CostError, LatencyError, DeploymentError, AlgebraError, SemanticsError) as e:
            code, error = EXIT_FAIL, str(e)
    notes = [str(w.message) for w in caught]
    if a.format == "json":
        doc = {"schema": SCHEMA, "command": a.command, "inputs": _inputs(a), "results": results,
               "warnings": notes, "provenance": {"seed": a.seed, "budgets": budgets}}
        if error is not None:
            doc["error"] = error
        out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        for line in lines:
            out.write(line + "\n")
        for n in notes:
            sys.stderr.write(f"warning: {n}\n")
        if error is not None:
            sys.stderr.write(f"error: {error}\n")
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

"""Command line: ``netmbt [run] ...``, ``netmbt replay TRACE``, ``netmbt oracle TRACE``.

Exit status: 0 accept, 1 reject, 2 inconclusive, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .executor import Accept, Budgets, EndpointError, Inconclusive, Reject, TraceLog, Verdict, replay_check, run
from .gen import GenConfig, HttpGenerator, ProxyGenerator
from .harness.reference import MUTANTS, PROXY_MUTANTS, ReferenceEndpoint
from .harness.scripted import ScriptedEndpoint, load_script
from .harness.sockets import SocketEndpoint
from .httpmodel import FIXTURE_DATA
from .oracle import OracleAccept, check, exchanges_from_trace, initial_state
from .presets import MODELS, tester_for

EXIT_ACCEPT, EXIT_REJECT, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 64
COMMANDS = ("run", "replay", "oracle")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    model: str = "http"
    endpoint: str = "reference"
    host: str = "127.0.0.1"
    port: int = 8080
    origin_port: Optional[int] = None
    mutant: Optional[str] = None
    script: Optional[str] = None
    seed: int = 0
    budgets: Budgets = Budgets()
    connections: int = 3
    trace_out: Optional[str] = None
    strict_status: bool = False
    p_pipeline: float = GenConfig.p_pipeline
    unknown_tags: bool = False

    def validate(self) -> None:
        if self.connections < 1:
            raise UsageError("--connections must be at least 1")
        if self.endpoint == "scripted" and not self.script:
            raise UsageError("--endpoint scripted needs a script file")
        if self.mutant is not None:
            if self.endpoint != "reference":
                raise UsageError("--mutant only applies to the reference endpoint")
            if (self.mutant in PROXY_MUTANTS) != (self.model == "proxy"):
                raise UsageError(f"mutant {self.mutant} does not apply to the {self.model} model")


def exit_status(v: Verdict) -> int:
    if isinstance(v, Accept):
        return EXIT_ACCEPT
    if isinstance(v, Reject):
        return EXIT_REJECT
    return EXIT_INCONCLUSIVE


def _budget_args(p: argparse.ArgumentParser) -> None:
    d = Budgets()
    p.add_argument("--max-steps", type=int, default=d.max_steps, help="external events before accepting")
    p.add_argument("--retries", type=int, default=d.retries, help="polls before giving up on a response")
    p.add_argument("--poll-ms", type=float, default=d.poll_ms)
    p.add_argument("--max-branches", type=int, default=d.max_branches)
    p.add_argument("--timeout", type=float, default=d.timeout_s, dest="timeout_s", help="seconds")


def build_parser() -> dict[str, argparse.ArgumentParser]:
    run_p = _Parser(prog="netmbt run", description="Test a server against a model.")
    run_p.add_argument("--model", choices=MODELS, default="http")
    run_p.add_argument("--endpoint", choices=("reference", "tcp", "scripted"), default="reference")
    run_p.add_argument("script", nargs="?", help="script file for --endpoint scripted")
    run_p.add_argument("--host", default="127.0.0.1")
    run_p.add_argument("--port", type=int, default=8080)
    run_p.add_argument("--origin-port", type=int, help="listen here for connections a proxy opens")
    run_p.add_argument("--mutant", choices=sorted(MUTANTS))
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--connections", type=int, default=3)
    run_p.add_argument("--trace-out", help="write the transcript here (JSON lines)")
    run_p.add_argument("--strict-status", action="store_true", help="2xx codes must match exactly")
    run_p.add_argument("--p-pipeline", type=float, default=GenConfig.p_pipeline,
                       help="chance of sending while a response is pending")
    run_p.add_argument("--unknown-tags", action="store_true",
                       help="the tester does not know the fixture's initial ETags")
    run_p.add_argument("-v", "--verbose", action="store_true")
    _budget_args(run_p)

    replay_p = _Parser(prog="netmbt replay", description="Re-judge a recorded transcript.")
    replay_p.add_argument("trace")
    replay_p.add_argument("--model", choices=MODELS, help="defaults to the model recorded in the trace")
    replay_p.add_argument("--strict-status", action="store_true")

    oracle_p = _Parser(prog="netmbt oracle", description="Judge a one-connection transcript by the ad hoc checker.")
    oracle_p.add_argument("trace")
    oracle_p.add_argument("--bare", action="store_true", help="without the two completions")
    return {"run": run_p, "replay": replay_p, "oracle": oracle_p}


def _config(ns: argparse.Namespace) -> RunConfig:
    try:
        budgets = Budgets(ns.max_steps, ns.retries, ns.poll_ms, ns.max_branches, ns.timeout_s)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not 0.0 <= ns.p_pipeline <= 1.0:
        raise UsageError("--p-pipeline must be a probability")
    cfg = RunConfig(
        ns.model, ns.endpoint, ns.host, ns.port, ns.origin_port, ns.mutant, ns.script, ns.seed,
        budgets, ns.connections, ns.trace_out, ns.strict_status, ns.p_pipeline, ns.unknown_tags,
    )
    cfg.validate()
    return cfg


def _open(cfg: RunConfig):
    if cfg.endpoint == "reference":
        return ReferenceEndpoint(
            connections=cfg.connections, mutant=cfg.mutant, seed=cfg.seed,
            proxy=cfg.model == "proxy", shuffle_seed=cfg.seed,
        )
    if cfg.endpoint == "scripted":
        try:
            with open(cfg.script, encoding="utf-8") as fp:
                steps = load_script(fp)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load script: {exc}") from None
        return ScriptedEndpoint(steps)
    origin = cfg.origin_port if cfg.origin_port is not None else (0 if cfg.model == "proxy" else None)
    return SocketEndpoint(cfg.host, cfg.port, connections=cfg.connections, origin_port=origin)


def execute(cfg: RunConfig) -> Verdict:
    trace = TraceLog()
    trace.meta = {
        "model": cfg.model, "endpoint": cfg.endpoint, "seed": cfg.seed, "mutant": cfg.mutant,
        "unknown_tags": cfg.unknown_tags,
    }
    try:
        io = _open(cfg)
    except EndpointError as exc:
        return Inconclusive(0, f"endpoint error: {exc}", trace)
    budgets = cfg.budgets
    try:
        if isinstance(io, ScriptedEndpoint):
            # a script is a finished session: accept once it has played out
            budgets = replace(budgets, max_steps=max(1, min(budgets.max_steps, len(io.steps))))
            gen = io.generator()
        else:
            gcfg = GenConfig(p_pipeline=cfg.p_pipeline)
            kind = ProxyGenerator if cfg.model == "proxy" else HttpGenerator
            gen = kind(cfg.seed, io.clients, cfg=gcfg)
        tester = tester_for(cfg.model, strict_status=cfg.strict_status, known_tags=not cfg.unknown_tags)
        return run(tester, io, gen, budgets, trace=trace)
    finally:
        io.close()


def report(v: Verdict, out=None) -> None:
    out = out or sys.stdout
    if isinstance(v, Accept):
        print(f"ACCEPT after {v.steps} steps: no violation observed within the step budget "
              "(a bounded check, not a proof)", file=out)
    elif isinstance(v, Reject):
        print(f"REJECT after {v.steps} steps: no explanation of the observed trace is left", file=out)
        print("Why each remaining explanation failed:", file=out)
        for reason, n in Counter(v.reasons).most_common(10):
            print(f"  [{n}x] {reason}", file=out)
        print("Transcript:", file=out)
        print(v.trace.render(), file=out)
    else:
        print(f"INCONCLUSIVE after {v.steps} steps: {v.reason}", file=out)


def _load_trace(path: str) -> TraceLog:
    try:
        with open(path, encoding="utf-8") as fp:
            return TraceLog.load(fp)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read trace {path}: {exc}") from None


def cmd_run(ns: argparse.Namespace) -> int:
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING)
    cfg = _config(ns)
    v = execute(cfg)
    if cfg.trace_out:
        v.trace.meta["verdict"] = type(v).__name__.lower()
        with open(cfg.trace_out, "w", encoding="utf-8") as fp:
            v.trace.dump(fp)
    report(v)
    return exit_status(v)


def cmd_replay(ns: argparse.Namespace) -> int:
    trace = _load_trace(ns.trace)
    model = ns.model or trace.meta.get("model", "http")
    if model not in MODELS:
        raise UsageError(f"unknown model {model!r} in trace")
    known = not trace.meta.get("unknown_tags", False)
    v = replay_check(tester_for(model, strict_status=ns.strict_status, known_tags=known), trace)
    report(v)
    return exit_status(v)


def cmd_oracle(ns: argparse.Namespace) -> int:
    trace = _load_trace(ns.trace)
    try:
        exchanges = exchanges_from_trace(trace)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    verdict = check(exchanges, initial_state(FIXTURE_DATA), complete=not ns.bare)
    if isinstance(verdict, OracleAccept):
        print(f"ACCEPT: {len(exchanges)} exchanges are consistent")
        return EXIT_ACCEPT
    req, resp = exchanges[verdict.index]
    print(f"REJECT at exchange {verdict.index} ({req.summary()} -> {resp.summary()}): {verdict.reason}")
    return EXIT_REJECT


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    command = "run"
    if args and args[0] in COMMANDS:
        command = args.pop(0)
    elif args and args[0] in ("-h", "--help"):
        print(__doc__.strip())
    parsers = build_parser()
    try:
        ns = parsers[command].parse_args(args)
        return {"run": cmd_run, "replay": cmd_replay, "oracle": cmd_oracle}[command](ns)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

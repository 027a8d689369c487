"""Command-line front end.

Exit status: 0 on success, 1 when a search ends without reaching its goal,
2 on usage, parse or file errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .canonical import IndexStructureError, canonicalize
from .components import ComponentError, expand_components
from .expr import HeadRegistry, to_text
from .matching import InstantiationError
from .parser import ParseError, parse_expr
from .physics import (
    Conserved, TEMResult, TheoryError, canonical_tem, check_conservation, load_theory,
    SymmetrizationError, symmetrize_tem,
)
from .rules import RuleError, RuleSet, data_text, load_rules, seed_rules
from .search import Found, GoalError, SearchBudget, explain, parse_goal, search

COMMANDS = ("simplify", "derive", "tem", "symmetrize", "check-conserved", "expand")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qftsearch",
        description="Breadth-first derivation search over Lorentz-tensor expressions.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--rules", action="append", default=[], metavar="PATH",
                   help="rule file, repeatable (default: the seed rules)")
    p.add_argument("--theory", metavar="PATH", help="theory definition file")
    p.add_argument("--goal", metavar="SPEC",
                   help="is-zero | equals <expr> | matches <pattern> | symmetric-in <i> <j>")
    p.add_argument("--expr", metavar="TEXT", help="input expression (default: standard input)")
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--max-states", type=int, default=200_000)
    p.add_argument("--max-seconds", type=float, default=60.0)
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--dimension", type=int, default=4)
    p.add_argument("--symmetrize", action="store_true", help="tem: also symmetrize")
    p.add_argument("--check", action="store_true", help="tem: also check conservation")
    return p


def _resolve(path: str, suffix: str) -> tuple[str, str]:
    """Read a file, falling back to the packaged data of the same name."""
    p = Path(path)
    if p.is_file():
        return p.read_text(encoding="utf-8"), str(p)
    try:
        return data_text(p.name if p.suffix else p.name + suffix), p.name
    except (FileNotFoundError, IsADirectoryError):
        raise UsageError(f"cannot read {path}") from None


class _Run:
    def __init__(self, args, stdin, out, err):
        self.args = args
        self.stdin = stdin
        self.out = out
        self.err = err
        self.dim = args.dimension
        if self.dim < 1:
            raise UsageError("--dimension must be positive")
        self.theory = None
        if args.theory:
            text, source = _resolve(args.theory, ".theory")
            self.theory = load_theory(text, source)
        self.registry = self.theory.registry if self.theory else HeadRegistry()

    # -- helpers

    def rules(self) -> RuleSet:
        if self.args.rules:
            rs = RuleSet()
            for path in self.args.rules:
                text, source = _resolve(path, ".rules")
                rs = rs.merged(load_rules(text, self.registry, source))
        else:
            rs = seed_rules(self.registry)
        if self.theory is not None:
            rs = rs.merged(self.theory.eom_rules)
        return rs

    def budget(self) -> SearchBudget:
        a = self.args
        try:
            return SearchBudget(a.max_depth, a.max_states, a.max_seconds)
        except ValueError as err:
            raise UsageError(str(err)) from None

    def input_expr(self, required: bool = True):
        text = self.args.expr
        if text is None:
            if not required and (self.stdin is None or self.stdin.isatty()):
                return None
            text = self.stdin.read() if self.stdin is not None else ""
        if not text.strip():
            if required:
                raise UsageError("no input expression (use --expr or standard input)")
            return None
        return parse_expr(text.strip(), self.registry)

    def need_theory(self):
        if self.theory is None:
            raise UsageError(f"{self.args.command} requires --theory")
        return self.theory

    def emit(self, section: str, value: str) -> None:
        if self.args.format == "structured":
            self.out.write(json.dumps({"section": section, "expr": value}, sort_keys=True) + "\n")
        else:
            self.out.write(f"{section}: {value}\n")

    def transcript(self, section: str, state, start) -> None:
        t = explain(state, start, self.dim)
        if self.args.format == "structured":
            for rec in t.records():
                rec["section"] = section
                self.out.write(json.dumps(rec, sort_keys=True) + "\n")
        else:
            self.out.write(f"-- {section} ({len(t) - 1} steps)\n{t.to_text()}\n")

    def stats(self, label: str, status: str, stats) -> None:
        if self.args.format == "structured":
            rec = {"label": label, "status": status, **stats.as_dict()}
            self.err.write(json.dumps(rec, sort_keys=True) + "\n")
        else:
            self.err.write(f"{label}: {status} ({stats})\n")

    # -- commands

    def simplify(self) -> int:
        self.emit("canonical", to_text(canonicalize(self.input_expr(), self.dim)))
        return 0

    def derive(self) -> int:
        if not self.args.goal:
            raise UsageError("derive requires --goal")
        goal = parse_goal(self.args.goal, self.registry)
        start = self.input_expr()
        result = search(start, self.rules(), goal, self.budget(), self.dim)
        self.stats("derive", result.status, result.stats)
        if isinstance(result, Found):
            self.transcript("derivation", result.state, start)
            return 0
        return 1

    def _conservation(self, label: str, T: TEMResult, rs: RuleSet) -> int:
        res = check_conservation(T, self.theory, rs, self.budget(), self.dim)
        if isinstance(res, Conserved):
            self.stats(label, "conserved", res.stats)
            self.transcript(label, res.state, res.start)
            return 0
        self.stats(label, f"not shown: {res.reason}", res.stats)
        return 1

    def tem(self) -> int:
        t = self.need_theory()
        rs = self.rules()
        T = canonical_tem(t, self.dim)
        self.emit("T", to_text(T.tensor))
        status = 0
        S = None
        if self.args.symmetrize:
            S = self._symmetrized(T, rs)
            if S is None:
                return 1
        if self.args.check:
            status = max(status, self._conservation("conservation of T", T, rs))
            if S is not None:
                status = max(status, self._conservation("conservation of T1", S, rs))
        return status

    def symmetrize(self) -> int:
        t = self.need_theory()
        rs = self.rules()
        return 0 if self._symmetrized(canonical_tem(t, self.dim), rs) else 1

    def _symmetrized(self, T: TEMResult, rs: RuleSet) -> TEMResult | None:
        try:
            S = symmetrize_tem(T, self.theory, rs, self.budget(), self.dim)
        except SymmetrizationError as exc:
            if exc.stats is None:
                raise
            self.stats("symmetrization", "not found", exc.stats)
            return None
        self.stats("symmetrization", "found", S.stats)
        self.emit("T1", to_text(S.tensor))
        self.transcript("symmetrization", S.derivation, S.start)
        return S

    def check_conserved(self) -> int:
        t = self.need_theory()
        given = self.input_expr(required=False)
        T = canonical_tem(t, self.dim) if given is None else TEMResult(canonicalize(given, self.dim), "canonical")
        self.emit("T", to_text(T.tensor))
        return self._conservation("conservation", T, self.rules())

    def expand(self) -> int:
        e = self.input_expr()
        if self.theory is not None:
            table = self.theory.components(e, self.dim)
        else:
            table = expand_components(e, self.dim)
        names = [str(i) for i in table.indices]
        for values in sorted(table.entries):
            key = ",".join(f"{n}={v}" for n, v in zip(names, values))
            poly = str(table.entries[values])
            if self.args.format == "structured":
                self.out.write(json.dumps({"entry": dict(zip(names, values)), "value": poly}, sort_keys=True) + "\n")
            else:
                self.out.write(f"[{key}] {poly}\n" if key else f"{poly}\n")
        if not table.entries and self.args.format == "text":
            self.out.write("0\n")
        return 0


def main(argv=None, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    out = stdout if stdout is not None else sys.stdout
    err = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run = _Run(args, stdin, out, err)
        return getattr(run, args.command.replace("-", "_"))()
    except (UsageError, ParseError, RuleError, TheoryError, GoalError,
            IndexStructureError, ComponentError, InstantiationError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return 2
    except RecursionError:
        err.write("error: expression nests too deeply\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

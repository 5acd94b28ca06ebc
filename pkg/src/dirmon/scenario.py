"""Line-oriented scenario files.

One directive per line, blank lines and ``#`` comments ignored:

    at <tick> kill-thread <node> <idx>
    at <tick> trap segv <node> <idx>
    at <tick> trap divzero <node> <idx>
    at <tick> link-down <a> <b>
    at <tick> link-up <a> <b>
    at <tick> reboot <node>
    at <tick> watchdog-timeout <node> [<idx>]

Fault directives accept an optional trailing ``expect <name>`` where the
name is one of the predicates in faults.PREDICATES ("detected",
"undetected", "recovered", "killed", "any").  Without it the directive is
purely chaos: injected, observed, never judged.  ``link-up`` is a repair,
not a fault: it is applied directly and takes no expectation.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .faults import FaultKind, FaultSpec, PREDICATES
from .model import DirmonError


class ScenarioError(DirmonError):
    """A scenario file that cannot be used, with its line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"scenario line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class Directive:
    line_no: int
    tick: int
    action: str  # a FaultKind value or "link-up"
    args: tuple[int, ...]
    expect: str | None = None

    @property
    def is_repair(self) -> bool:
        return self.action == "link-up"

    def fault_spec(self) -> FaultSpec:
        assert not self.is_repair
        return FaultSpec(kind=FaultKind(self.action), target=self.args, at_tick=self.tick)


_ARITY = {
    "kill-thread": (2, 2),
    "link-down": (2, 2),
    "link-up": (2, 2),
    "reboot": (1, 1),
    "watchdog-timeout": (1, 2),
    "divzero": (2, 2),
    "segviol": (2, 2),
}

_TRAP_ALIASES = {"segv": "segviol", "segviol": "segviol", "divzero": "divzero"}


def parse_scenario(text: str) -> list[Directive]:
    directives: list[Directive] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] != "at" or len(tokens) < 3:
            raise ScenarioError(line_no, f"expected 'at <tick> <directive> ...', got {raw.strip()!r}")
        try:
            tick = int(tokens[1])
        except ValueError:
            raise ScenarioError(line_no, f"bad tick {tokens[1]!r}")
        if tick < 1:
            raise ScenarioError(line_no, f"tick must be >= 1, got {tick}")

        action = tokens[2]
        rest = tokens[3:]
        if action == "trap":
            if not rest or rest[0] not in _TRAP_ALIASES:
                raise ScenarioError(line_no, "trap needs a kind: segv or divzero")
            action = _TRAP_ALIASES[rest[0]]
            rest = rest[1:]
        if action not in _ARITY:
            raise ScenarioError(line_no, f"unknown directive {action!r}")

        expect: str | None = None
        if "expect" in rest:
            idx = rest.index("expect")
            if idx != len(rest) - 2:
                raise ScenarioError(line_no, "expect takes exactly one predicate name")
            expect = rest[idx + 1]
            rest = rest[:idx]
            if expect not in PREDICATES:
                raise ScenarioError(
                    line_no,
                    f"unknown expectation {expect!r}; choose from {sorted(PREDICATES)}",
                )
            if action == "link-up":
                raise ScenarioError(line_no, "link-up is a repair and takes no expectation")

        lo, hi = _ARITY[action]
        if not lo <= len(rest) <= hi:
            raise ScenarioError(line_no, f"{action} takes {lo}..{hi} integer arguments")
        try:
            args = tuple(int(tok) for tok in rest)
        except ValueError:
            raise ScenarioError(line_no, f"arguments to {action} must be integers: {rest}")

        directives.append(Directive(line_no, tick, action, args, expect))
    directives.sort(key=lambda d: (d.tick, d.line_no))
    return directives


def load_scenario(path: str | Path) -> list[Directive]:
    return parse_scenario(Path(path).read_text("utf-8"))

"""Netlist text format: parsing, validation and serialization.

Element lines (case-insensitive keywords, whitespace separated):

    R<name> <n+> <n-> <resistance> [prate=<watts>]
    C<name> <n+> <n-> <capacitance> [type=electrolytic|polymer] [esr=<ohms>] [rleak=<ohms>]
    D<name> <anode> <cathode> [diode|zener] [is=<amps>] [n=<ideality>] [bv=<volts>]
    Q<name> <collector> <base> <emitter> [bf=<beta>] [is=<amps>]
    V<name> <n+> <n-> DC <volts>
    V<name> <n+> <n-> PWL(t1 v1 t2 v2 ...)

Directives: .op | .tran <tstep> <tstop> | .dcsweep V<name> <start> <stop> <step>

Lines whose first non-blank character is '*' are comments; the first comment
line of the file doubles as the netlist title. Values take the SPICE-style
suffixes p, n, u, m, k, meg (case-insensitive, so "1M" is a milli). Node "0"
and the alias "gnd" (any case) are ground; other node names are taken
verbatim. Component names are unique case-insensitively. Unknown key=value
pairs are errors, not warnings.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

from .devices import (
    BjtModel,
    CapacitorModel,
    DiodeModel,
    ResistorModel,
    SourceModel,
)
from .errors import DuplicateNameError, NetlistSyntaxError, UnknownDeviceKindError

RESISTOR = "resistor"
CAPACITOR = "capacitor"
DIODE = "diode"
ZENER = "zener"
BJT = "bjt"
VSOURCE = "vsource"

# terminal count by kind
_N_TERMINALS = {RESISTOR: 2, CAPACITOR: 2, DIODE: 2, ZENER: 2, BJT: 3, VSOURCE: 2}

_SUFFIXES = {"": 1.0, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3, "k": 1e3, "meg": 1e6}

_VALUE_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([a-zA-Z]*)$")
_TOKEN_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class Component:
    name: str
    kind: str
    nodes: tuple[str, ...]
    model: object

    def __post_init__(self):
        if self.kind not in _N_TERMINALS:
            raise ValueError(f"unknown component kind {self.kind!r}")
        if len(self.nodes) != _N_TERMINALS[self.kind]:
            raise ValueError(
                f"{self.kind} takes {_N_TERMINALS[self.kind]} nodes, got {len(self.nodes)}"
            )


@dataclass(frozen=True)
class OpDirective:
    kind: str = "op"


@dataclass(frozen=True)
class TranDirective:
    tstep: float
    tstop: float
    kind: str = "tran"

    def __post_init__(self):
        if not (0 < self.tstep <= self.tstop) or not math.isfinite(self.tstop):
            raise ValueError(f"need 0 < tstep <= tstop, got {self.tstep}, {self.tstop}")


@dataclass(frozen=True)
class DcSweepDirective:
    source: str
    start: float
    stop: float
    step: float
    kind: str = "dcsweep"

    def __post_init__(self):
        if self.step == 0 or not all(map(math.isfinite, (self.start, self.stop, self.step))):
            raise ValueError("sweep step must be nonzero and finite")
        if (self.stop - self.start) / self.step < 0:
            raise ValueError("sweep step sign must point from start to stop")


@dataclass(frozen=True)
class ParamSweepDirective:
    """Component-parameter sweep; no netlist syntax, built by callers."""

    component: str
    param: str
    values: tuple[float, ...]
    kind: str = "paramsweep"

    def __post_init__(self):
        if not self.values:
            raise ValueError("paramsweep needs at least one value")


Directive = OpDirective | TranDirective | DcSweepDirective | ParamSweepDirective


@dataclass(frozen=True)
class Netlist:
    title: str
    components: tuple[Component, ...]
    nodes: dict[str, int]
    directives: tuple[Directive, ...]

    def component(self, name: str) -> Component:
        wanted = name.casefold()
        for c in self.components:
            if c.name.casefold() == wanted:
                return c
        raise KeyError(name)


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    message: str


def parse_value(token: str, line: int = 0, column: int = 0) -> float:
    """Numeric literal with optional SPICE suffix; "1k" == "1000" == "1e3"."""
    m = _VALUE_RE.match(token)
    if not m:
        raise NetlistSyntaxError(f"bad numeric value {token!r}", line, column)
    mag, suffix = m.groups()
    mult = _SUFFIXES.get(suffix.casefold())
    if mult is None:
        raise NetlistSyntaxError(f"unknown unit suffix {suffix!r} in {token!r}", line, column)
    value = float(mag) * mult
    if not math.isfinite(value):
        raise NetlistSyntaxError(f"value {token!r} overflows", line, column)
    return value


def _norm_node(token: str) -> str:
    return "0" if token.casefold() in ("0", "gnd") else token


def _split_keyvals(tokens, allowed, line):
    """Trailing key=value tokens -> dict; spans used for error columns."""
    out = {}
    for tok, col in tokens:
        if "=" not in tok:
            raise NetlistSyntaxError(f"expected key=value, got {tok!r}", line, col)
        key, _, raw = tok.partition("=")
        key = key.casefold()
        if key not in allowed:
            raise NetlistSyntaxError(f"unknown parameter {key!r}", line, col)
        if key in out:
            raise NetlistSyntaxError(f"duplicate parameter {key!r}", line, col)
        if key == "type":
            out[key] = raw.casefold()
        else:
            out[key] = parse_value(raw, line, col)
    return out


def _model_error(exc: ValueError, line: int, column: int) -> NetlistSyntaxError:
    return NetlistSyntaxError(str(exc), line, column)


def _parse_element(tokens, lineno):
    name, col0 = tokens[0]
    kind_letter = name[0].casefold()
    if kind_letter not in "rcdqv":
        raise UnknownDeviceKindError(f"unknown device kind {name[0]!r}", lineno, col0)

    n_nodes = 3 if kind_letter == "q" else 2
    if len(tokens) < 1 + n_nodes + (1 if kind_letter in "rcv" else 0):
        raise NetlistSyntaxError(f"too few fields for {name!r}", lineno, col0)
    nodes = tuple(_norm_node(t) for t, _ in tokens[1 : 1 + n_nodes])
    rest = tokens[1 + n_nodes :]

    try:
        if kind_letter == "r":
            value = parse_value(rest[0][0], lineno, rest[0][1])
            kv = _split_keyvals(rest[1:], {"prate"}, lineno)
            model = ResistorModel(resistance=value, rated_power=kv.get("prate", 0.25))
            return Component(name, RESISTOR, nodes, model)
        if kind_letter == "c":
            value = parse_value(rest[0][0], lineno, rest[0][1])
            kv = _split_keyvals(rest[1:], {"type", "esr", "rleak"}, lineno)
            dielectric = kv.get("type", "electrolytic")
            if dielectric not in ("electrolytic", "polymer"):
                raise NetlistSyntaxError(f"unknown capacitor type {dielectric!r}", lineno, col0)
            model = CapacitorModel(
                capacitance=value,
                dielectric=dielectric,
                esr=kv.get("esr"),
                rleak=kv.get("rleak"),
            )
            return Component(name, CAPACITOR, nodes, model)
        if kind_letter == "d":
            kind = DIODE
            if rest and "=" not in rest[0][0]:
                keyword = rest[0][0].casefold()
                if keyword not in (DIODE, ZENER):
                    raise NetlistSyntaxError(f"expected 'diode' or 'zener', got {rest[0][0]!r}", lineno, rest[0][1])
                kind = keyword
                rest = rest[1:]
            kv = _split_keyvals(rest, {"is", "n", "bv"}, lineno)
            if kind == DIODE and "bv" in kv:
                raise NetlistSyntaxError("bv is only valid on a zener", lineno, col0)
            if kind == ZENER and "bv" not in kv:
                raise NetlistSyntaxError(f"zener {name!r} needs bv=<volts>", lineno, col0)
            model = DiodeModel(
                is_sat=kv.get("is", 1e-12),
                n_ideality=kv.get("n", 1.0),
                breakdown_v=kv.get("bv"),
            )
            return Component(name, kind, nodes, model)
        if kind_letter == "q":
            kv = _split_keyvals(rest, {"bf", "is"}, lineno)
            model = BjtModel(is_sat=kv.get("is", 1e-13), beta_f=kv.get("bf", 50.0))
            return Component(name, BJT, nodes, model)
        # voltage source
        spec_tok, spec_col = rest[0]
        joined = " ".join(t for t, _ in rest)
        if spec_tok.casefold() == "dc":
            if len(rest) != 2:
                raise NetlistSyntaxError("DC source takes exactly one value", lineno, spec_col)
            model = SourceModel(dc=parse_value(rest[1][0], lineno, rest[1][1]))
            return Component(name, VSOURCE, nodes, model)
        m = re.match(r"(?is)^pwl\s*\((.*)\)$", joined)
        if not m:
            raise NetlistSyntaxError("source needs 'DC <v>' or 'PWL(t1 v1 ...)'", lineno, spec_col)
        fields = m.group(1).split()
        if not fields or len(fields) % 2:
            raise NetlistSyntaxError("PWL needs an even, nonzero number of values", lineno, spec_col)
        vals = [parse_value(f, lineno, spec_col) for f in fields]
        pairs = tuple(zip(vals[0::2], vals[1::2]))
        model = SourceModel(dc=pairs[0][1], pwl=pairs)
        return Component(name, VSOURCE, nodes, model)
    except ValueError as exc:  # model invariant violations become syntax errors
        raise _model_error(exc, lineno, col0) from exc


def _parse_directive(tokens, lineno):
    word, col0 = tokens[0]
    word = word.casefold()
    args = tokens[1:]
    try:
        if word == ".op":
            if args:
                raise NetlistSyntaxError(".op takes no arguments", lineno, args[0][1])
            return OpDirective()
        if word == ".tran":
            if len(args) != 2:
                raise NetlistSyntaxError(".tran takes <tstep> <tstop>", lineno, col0)
            return TranDirective(
                tstep=parse_value(args[0][0], lineno, args[0][1]),
                tstop=parse_value(args[1][0], lineno, args[1][1]),
            )
        if word == ".dcsweep":
            if len(args) != 4:
                raise NetlistSyntaxError(".dcsweep takes <source> <start> <stop> <step>", lineno, col0)
            return DcSweepDirective(
                source=args[0][0],
                start=parse_value(args[1][0], lineno, args[1][1]),
                stop=parse_value(args[2][0], lineno, args[2][1]),
                step=parse_value(args[3][0], lineno, args[3][1]),
            )
    except ValueError as exc:
        raise _model_error(exc, lineno, col0) from exc
    raise NetlistSyntaxError(f"unknown directive {tokens[0][0]!r}", lineno, col0)


def parse(text: str | bytes) -> Netlist:
    """Parse netlist text into a Netlist; raises NetlistSyntaxError subtypes."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise NetlistSyntaxError(f"input is not valid UTF-8: {exc}") from exc

    title = ""
    seen_title = False
    components: list[Component] = []
    directives: list[Directive] = []
    names: dict[str, tuple[str, int]] = {}

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("*"):
            if not seen_title:
                title = stripped[1:].strip()
                seen_title = True
            continue
        tokens = [(m.group(0), m.start() + 1) for m in _TOKEN_RE.finditer(line)]
        if tokens[0][0].startswith("."):
            directives.append(_parse_directive(tokens, lineno))
            continue
        comp = _parse_element(tokens, lineno)
        key = comp.name.casefold()
        if key in names:
            prev_name, prev_line = names[key]
            raise DuplicateNameError(
                f"component name {comp.name!r} already used as {prev_name!r} on line {prev_line}",
                lineno,
                tokens[0][1],
            )
        names[key] = (comp.name, lineno)
        components.append(comp)

    source_names = {c.name.casefold() for c in components if c.kind == VSOURCE}
    for d in directives:
        if isinstance(d, DcSweepDirective) and d.source.casefold() not in source_names:
            raise NetlistSyntaxError(f".dcsweep names unknown source {d.source!r}")

    nodes: dict[str, int] = {"0": 0}
    for comp in components:
        for node in comp.nodes:
            if node not in nodes:
                nodes[node] = len(nodes)

    return Netlist(title, tuple(components), nodes, tuple(directives))


def validate(n: Netlist) -> list[Violation]:
    """Structural checks; returns violations sorted by (subject, rule)."""
    out: list[Violation] = []

    touches: dict[str, int] = {}
    for comp in n.components:
        for node in comp.nodes:
            touches[node] = touches.get(node, 0) + 1

    if touches.get("0", 0) == 0:
        out.append(Violation("missing-ground", "0", "no component terminal touches ground"))

    seen: dict[str, str] = {}
    for comp in n.components:
        key = comp.name.casefold()
        if key in seen:
            out.append(
                Violation("duplicate-name", comp.name, f"name collides with {seen[key]!r}")
            )
        else:
            seen[key] = comp.name
        expected = _N_TERMINALS[comp.kind]
        if len(comp.nodes) != expected:
            out.append(
                Violation(
                    "terminal-count",
                    comp.name,
                    f"{comp.kind} takes {expected} terminals, has {len(comp.nodes)}",
                )
            )

    for node in n.nodes:
        if node == "0":
            continue
        if touches.get(node, 0) < 2:
            out.append(
                Violation("dangling-node", node, "node is touched by fewer than 2 terminals")
            )

    out.sort(key=lambda v: (v.subject.casefold(), v.rule))
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize(n: Netlist) -> str:
    """Netlist back to text; parse(serialize(parse(t))) == parse(t)."""
    lines = []
    if n.title:
        lines.append(f"* {n.title}")
    for c in n.components:
        nodes = " ".join(c.nodes)
        m = c.model
        if c.kind == RESISTOR:
            lines.append(f"{c.name} {nodes} {_fmt(m.resistance)} prate={_fmt(m.rated_power)}")
        elif c.kind == CAPACITOR:
            lines.append(
                f"{c.name} {nodes} {_fmt(m.capacitance)} type={m.dielectric} "
                f"esr={_fmt(m.esr)} rleak={_fmt(m.rleak)}"
            )
        elif c.kind in (DIODE, ZENER):
            extra = f" bv={_fmt(m.breakdown_v)}" if c.kind == ZENER else ""
            lines.append(
                f"{c.name} {nodes} {c.kind} is={_fmt(m.is_sat)} n={_fmt(m.n_ideality)}{extra}"
            )
        elif c.kind == BJT:
            lines.append(f"{c.name} {nodes} bf={_fmt(m.beta_f)} is={_fmt(m.is_sat)}")
        elif c.kind == VSOURCE:
            if m.pwl is None:
                lines.append(f"{c.name} {nodes} DC {_fmt(m.dc)}")
            else:
                pairs = " ".join(f"{_fmt(t)} {_fmt(v)}" for t, v in m.pwl)
                lines.append(f"{c.name} {nodes} PWL({pairs})")
    for d in n.directives:
        if isinstance(d, OpDirective):
            lines.append(".op")
        elif isinstance(d, TranDirective):
            lines.append(f".tran {_fmt(d.tstep)} {_fmt(d.tstop)}")
        elif isinstance(d, DcSweepDirective):
            lines.append(f".dcsweep {d.source} {_fmt(d.start)} {_fmt(d.stop)} {_fmt(d.step)}")
    return "\n".join(lines) + "\n"


def with_component(n: Netlist, comp: Component) -> Netlist:
    """Copy of n with the same-named component replaced."""
    found = False
    out = []
    for c in n.components:
        if c.name.casefold() == comp.name.casefold():
            out.append(comp)
            found = True
        else:
            out.append(c)
    if not found:
        raise KeyError(comp.name)
    nodes: dict[str, int] = {"0": 0}
    for c in out:
        for node in c.nodes:
            if node not in nodes:
                nodes[node] = len(nodes)
    return replace(n, components=tuple(out), nodes=nodes)


def with_source_dc(n: Netlist, source: str, volts: float) -> Netlist:
    """Copy of n with the named source forced to a DC level."""
    c = n.component(source)
    if c.kind != VSOURCE:
        raise KeyError(f"{source!r} is not a voltage source")
    return with_component(n, replace(c, model=SourceModel(dc=volts)))

"""MATPOWER case files and battery devices.

Only literal assignments are understood: ``mpc.<field> = <number | 'string' |
[matrix]>;``. Cell arrays and other statements are skipped. Matrices keep the
MATPOWER column layout; the index constants below name the columns used here.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError, UnknownBus, ValidationError

# bus columns
BUS_I, BUS_TYPE, PD, QD, GS, BS, BUS_AREA, VM, VA, BASE_KV, ZONE, VMAX, VMIN = range(13)
# gen columns
GEN_BUS, PG, QG, QMAX, QMIN, VG, MBASE, GEN_STATUS, PMAX, PMIN = range(10)
# branch columns
F_BUS, T_BUS, BR_R, BR_X, BR_B, RATE_A, RATE_B, RATE_C, TAP, SHIFT, BR_STATUS, ANGMIN, ANGMAX = range(13)
# gencost columns
MODEL, STARTUP, SHUTDOWN, NCOST, COST = range(5)

PQ, PV, REF, NONE = 1, 2, 3, 4
POLYNOMIAL = 2

MIN_COLUMNS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}
COLUMN_NAMES = {
    "bus": ["bus_i", "type", "Pd", "Qd", "Gs", "Bs", "area", "Vm", "Va", "baseKV", "zone", "Vmax", "Vmin"],
    "gen": ["bus", "Pg", "Qg", "Qmax", "Qmin", "Vg", "mBase", "status", "Pmax", "Pmin"],
    "branch": ["fbus", "tbus", "r", "x", "b", "rateA", "rateB", "rateC", "ratio", "angle", "status", "angmin", "angmax"],
    "gencost": ["model", "startup", "shutdown", "n"],
}

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eEdD][+-]?\d+)?|[+-]?(?:Inf|inf|NaN|nan)\b")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*")


class _Scanner:
    """Character scanner with MATLAB comment handling and 1-based positions."""

    def __init__(self, text):
        self.text = text
        self.pos = 0

    def where(self, pos=None):
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, message, expected=None, pos=None):
        line, col = self.where(pos)
        return ParseError(message, line, col, expected)

    def at_end(self):
        return self.pos >= len(self.text)

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_comment(self):
        if self.peek() == "%":
            nl = self.text.find("\n", self.pos)
            self.pos = len(self.text) if nl < 0 else nl
            return True
        if self.text.startswith("...", self.pos):
            # line continuation: ignore the rest of the line including the newline
            nl = self.text.find("\n", self.pos)
            self.pos = len(self.text) if nl < 0 else nl + 1
            return True
        return False

    def skip_space(self, newlines=True):
        while not self.at_end():
            c = self.peek()
            if c in " \t\r" or (newlines and c == "\n"):
                self.pos += 1
            elif not self.skip_comment():
                break

    def match(self, regex):
        m = regex.match(self.text, self.pos)
        if m:
            self.pos = m.end()
        return m

    def skip_statement(self):
        """Advance past the current statement (to ``;`` or newline outside brackets and strings)."""
        depth = 0
        while not self.at_end():
            c = self.peek()
            if c == "'":
                end = self.text.find("'", self.pos + 1)
                self.pos = len(self.text) if end < 0 else end + 1
                continue
            if self.skip_comment():
                continue
            if c in "[{(":
                depth += 1
            elif c in "]})":
                depth -= 1
            elif depth <= 0 and c in ";\n":
                self.pos += 1
                return
            self.pos += 1


def _to_float(tok):
    t = tok.replace("d", "e").replace("D", "e")
    low = t.lower().lstrip("+-")
    if low == "inf":
        return -math.inf if t.startswith("-") else math.inf
    if low == "nan":
        return math.nan
    return float(t)


def _parse_matrix(sc):
    start = sc.pos
    sc.pos += 1  # '['
    rows, row = [], []
    while True:
        sc.skip_space(newlines=False)
        c = sc.peek()
        if c == "":
            raise sc.error("unterminated matrix", "']'", start)
        if c == "]":
            sc.pos += 1
            if row:
                rows.append(row)
            break
        if c in ";\n":
            sc.pos += 1
            if row:
                rows.append(row)
                row = []
            continue
        if c == ",":
            sc.pos += 1
            continue
        m = sc.match(_NUMBER)
        if not m:
            raise sc.error(f"unexpected character {c!r} in matrix", "number, ';' or ']'")
        row.append(_to_float(m.group(0)))
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise sc.error("matrix rows have unequal lengths", None, start)
    if not rows:
        return np.zeros((0, 0))
    return np.array(rows, dtype=np.float64)


def _parse_value(sc):
    sc.skip_space(newlines=False)
    c = sc.peek()
    if c == "[":
        return _parse_matrix(sc)
    if c == "'":
        end = sc.text.find("'", sc.pos + 1)
        if end < 0:
            raise sc.error("unterminated string", "closing quote")
        val = sc.text[sc.pos + 1:end]
        sc.pos = end + 1
        return val
    m = sc.match(_NUMBER)
    if m:
        return _to_float(m.group(0))
    return None  # unsupported expression; caller skips it


def _statements(text):
    """Yield ``(field, value)`` for every ``mpc.<field> = value`` statement."""
    sc = _Scanner(text)
    while True:
        sc.skip_space()
        if sc.at_end():
            return
        stmt_start = sc.pos
        ident = sc.match(_IDENT)
        if not ident:
            raise sc.error(f"unexpected character {sc.peek()!r}", "statement")
        name = ident.group(0)
        if name == "function":
            sc.skip_statement()
            continue
        sc.skip_space(newlines=False)
        if sc.peek() != "=":
            sc.skip_statement()
            continue
        sc.pos += 1
        if "." not in name:
            sc.skip_statement()
            continue
        fld = name.split(".", 1)[1]
        value = _parse_value(sc)
        if value is None:
            sc.skip_statement()
            continue
        sc.skip_space(newlines=False)
        if sc.peek() == ";":
            sc.pos += 1
        elif sc.peek() not in ("\n", ""):
            raise sc.error(f"trailing text after value of {name}", "';' or end of line")
        yield fld, value, sc.where(stmt_start)


@dataclass(frozen=True)
class BatteryDevice:
    """Battery pack at a bus. Power is in kW, discharge positive.

    ``nameplate`` holds the pack rating used without health constraints;
    ``constraints`` holds box-derived bounds.
    """

    bus: int
    n_cells: int = 1500
    initial_efc: float = 0.0
    hi: float = 1.0
    constraints: object = None
    nameplate: object = None
    p_b_kw: float = 0.0
    name: str = ""

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("bus", "n_cells", "initial_efc", "hi", "p_b_kw", "name")}
        for k in ("constraints", "nameplate"):
            v = getattr(self, k)
            d[k] = None if v is None else v.to_dict()
        return d


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkCase:
    """Parsed network in MATPOWER matrix layout (MW, MVAr, degrees, p.u.)."""

    base_mva: float
    bus: np.ndarray
    gen: np.ndarray
    branch: np.ndarray
    gencost: np.ndarray
    name: str = "case"
    version: str = "2"
    batteries: tuple = field(default=())

    def __post_init__(self):
        for k in ("bus", "gen", "branch", "gencost"):
            object.__setattr__(self, k, _frozen(getattr(self, k)))
        object.__setattr__(self, "batteries", tuple(self.batteries))

    def __eq__(self, other):
        if not isinstance(other, NetworkCase):
            return NotImplemented
        return (
            self.base_mva == other.base_mva
            and self.name == other.name
            and self.version == other.version
            and self.batteries == other.batteries
            and all(np.array_equal(getattr(self, k), getattr(other, k), equal_nan=True)
                    for k in ("bus", "gen", "branch", "gencost"))
        )

    __hash__ = None

    @property
    def n_bus(self):
        return self.bus.shape[0]

    @property
    def n_gen(self):
        return self.gen.shape[0]

    @property
    def n_branch(self):
        return self.branch.shape[0]

    def bus_index(self, bus_id):
        """Row of bus ``bus_id``; raises :class:`UnknownBus`."""
        hits = np.flatnonzero(self.bus[:, BUS_I] == bus_id)
        if hits.size == 0:
            raise UnknownBus(f"bus {bus_id} does not exist")
        return int(hits[0])

    def id_to_index(self):
        return {int(b): k for k, b in enumerate(self.bus[:, BUS_I])}

    @property
    def ref_index(self):
        return int(np.flatnonzero(self.bus[:, BUS_TYPE] == REF)[0])

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        """JSON mirror: matrices as row lists plus column names."""
        return {
            "name": self.name,
            "version": self.version,
            "baseMVA": self.base_mva,
            "columns": COLUMN_NAMES,
            "bus": self.bus.tolist(),
            "gen": self.gen.tolist(),
            "branch": self.branch.tolist(),
            "gencost": self.gencost.tolist(),
            "batteries": [b.to_dict() for b in self.batteries],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d):
        return validate(cls(
            base_mva=float(d["baseMVA"]),
            bus=np.array(d["bus"], dtype=np.float64),
            gen=np.array(d["gen"], dtype=np.float64),
            branch=np.array(d["branch"], dtype=np.float64),
            gencost=np.array(d["gencost"], dtype=np.float64),
            name=d.get("name", "case"),
            version=str(d.get("version", "2")),
        ))


def validate(case):
    """Check structural invariants; returns the case or raises :class:`ValidationError`."""
    bus = case.bus
    ids = bus[:, BUS_I]
    if len(set(ids.tolist())) != ids.size:
        raise ValidationError("duplicate bus ids")
    n_ref = int(np.sum(bus[:, BUS_TYPE] == REF))
    if n_ref != 1:
        raise ValidationError(f"need exactly one slack bus, found {n_ref}")
    if not np.all(np.isin(bus[:, BUS_TYPE], (PQ, PV, REF, NONE))):
        raise ValidationError("bus type must be 1, 2, 3 or 4")
    known = set(ids.tolist())
    for col, what in ((F_BUS, "from"), (T_BUS, "to")):
        for k, b in enumerate(case.branch[:, col]):
            if b not in known:
                raise ValidationError(f"branch {k + 1}: {what} bus {int(b)} does not exist")
    live = case.branch[:, BR_STATUS] > 0
    z = np.hypot(case.branch[live, BR_R], case.branch[live, BR_X])
    if np.any(z <= 0):
        raise ValidationError("in-service branch with zero impedance")
    for k, b in enumerate(case.gen[:, GEN_BUS]):
        if b not in known:
            raise ValidationError(f"generator {k + 1}: bus {int(b)} does not exist")
    if case.gencost.shape[0] != case.n_gen:
        raise ValidationError(f"{case.gencost.shape[0]} gencost rows for {case.n_gen} generators")
    if case.base_mva <= 0:
        raise ValidationError("baseMVA must be positive")
    return case


def parse_matpower(text):
    """Parse MATPOWER case text.

    Raises
    ------
    ParseError
        Malformed syntax, with line and column.
    SchemaError
        Missing matrix or too few columns.
    ValidationError
        Structural invariant violated.
    """
    found = {}
    name = "case"
    m = re.search(r"^\s*function\s+\w+\s*=\s*(\w+)", text, re.M)
    if m:
        name = m.group(1)
    for fld, value, loc in _statements(text):
        found[fld] = (value, loc)
    if "baseMVA" not in found:
        raise SchemaError("missing mpc.baseMVA")
    base = found["baseMVA"][0]
    if not isinstance(base, float):
        raise SchemaError("mpc.baseMVA must be a number")
    mats = {}
    for key, ncol in MIN_COLUMNS.items():
        if key not in found:
            raise SchemaError(f"missing mpc.{key}")
        val, (line, _) = found[key]
        if not isinstance(val, np.ndarray):
            raise SchemaError(f"mpc.{key} (line {line}) must be a matrix")
        if val.size == 0:
            val = np.zeros((0, ncol))
        if val.shape[1] < ncol:
            raise SchemaError(f"mpc.{key} (line {line}) has {val.shape[1]} columns, need at least {ncol}")
        mats[key] = val
    gc = mats["gencost"]
    for k, row in enumerate(gc):
        need = COST + (int(row[NCOST]) if row[MODEL] == POLYNOMIAL else 2 * int(row[NCOST]))
        if row[MODEL] not in (1, POLYNOMIAL):
            raise SchemaError(f"gencost row {k + 1}: model must be 1 or 2")
        if gc.shape[1] < need:
            raise SchemaError(f"gencost row {k + 1} needs {need} columns")
    version = found.get("version", ("2", None))[0]
    return validate(NetworkCase(
        base_mva=base, bus=mats["bus"], gen=mats["gen"], branch=mats["branch"], gencost=gc,
        name=name, version=str(version),
    ))


def _fmt(v):
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    if math.isnan(v):
        return "NaN"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def serialize(case):
    """MATPOWER text for ``case``; :func:`parse_matpower` reads it back exactly."""
    out = [f"function mpc = {case.name}", "", f"mpc.version = '{case.version}';", f"mpc.baseMVA = {_fmt(case.base_mva)};"]
    for key in ("bus", "gen", "branch", "gencost"):
        out.append("")
        out.append("%\t" + "\t".join(COLUMN_NAMES[key]))
        out.append(f"mpc.{key} = [")
        for row in getattr(case, key):
            out.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
        out.append("];")
    return "\n".join(out) + "\n"


def load_case(path):
    return parse_matpower(Path(path).read_text())


def load_case39():
    """The bundled IEEE 39-bus case."""
    return parse_matpower(resources.files("hirul.data").joinpath("case39.m").read_text())


def attach_batteries(case, devices, tighten_voltage=False):
    """Register battery devices at their buses.

    With ``tighten_voltage`` the upper voltage limit of each battery bus is
    lowered to the device's ``constraints.v_bus_max_pu`` when that is tighter.
    """
    devices = list(devices)
    index = case.id_to_index()
    for d in devices:
        if d.bus not in index:
            raise UnknownBus(f"bus {d.bus} does not exist")
    if not devices:
        return case
    bus = case.bus.copy()
    if tighten_voltage:
        for d in devices:
            if d.constraints is not None:
                k = index[d.bus]
                bus[k, VMAX] = min(bus[k, VMAX], d.constraints.v_bus_max_pu)
    return replace(case, bus=bus, batteries=case.batteries + tuple(devices))

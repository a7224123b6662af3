"""MATPOWER and JSON case files, solution and report output."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, TextIO, Union

import jsonschema
import numpy as np

from .grid import Bus, GenKind, Generator, Grid, Line

BIG_M_LIMIT = 1e4
MANDATORY_TABLES = ("bus", "branch", "gen", "gencost")


class CaseSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CaseDataError(ValueError):
    pass


class SchemaError(ValueError):
    def __init__(self, message: str, pointer: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


@dataclass(eq=False)
class CaseDocument:
    name: str
    base_mva: float
    bus: np.ndarray
    branch: np.ndarray
    gen: np.ndarray
    gencost: np.ndarray
    extras: dict[str, Any] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, CaseDocument):
            return NotImplemented
        return (
            self.name == other.name
            and self.base_mva == other.base_mva
            and all(
                np.array_equal(getattr(self, t), getattr(other, t))
                for t in MANDATORY_TABLES
            )
            and _extras_equal(self.extras, other.extras)
        )


def _extras_equal(a: dict, b: dict) -> bool:
    if a.keys() != b.keys():
        return False
    for k in a:
        x, y = a[k], b[k]
        if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
            if not (isinstance(x, np.ndarray) and isinstance(y, np.ndarray)
                    and np.array_equal(x, y)):
                return False
        elif x != y:
            return False
    return True


# ---------------------------------------------------------------- MATPOWER

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[+-]?(?:Inf|inf|NaN|nan)\b")
_IDENT = re.compile(r"[A-Za-z_]\w*")


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def where(self, pos=None):
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, message, pos=None):
        return CaseSyntaxError(message, *self.where(pos))

    def skip(self, newlines=True):
        """Skip blanks and % comments; optionally stop at newlines."""
        t = self.text
        while self.pos < len(t):
            ch = t[self.pos]
            if ch == "%":
                end = t.find("\n", self.pos)
                self.pos = len(t) if end < 0 else end
            elif ch == "." and t.startswith("...", self.pos):
                end = t.find("\n", self.pos)  # continuation
                self.pos = len(t) if end < 0 else end + 1
            elif ch in " \t\r" or (newlines and ch == "\n"):
                self.pos += 1
            else:
                break

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, s):
        self.skip()
        if not self.text.startswith(s, self.pos):
            raise self.error(f"expected {s!r}")
        self.pos += len(s)

    def ident(self):
        self.skip()
        m = _IDENT.match(self.text, self.pos)
        if not m:
            raise self.error("expected identifier")
        self.pos = m.end()
        return m.group()

    def number(self):
        m = _NUMBER.match(self.text, self.pos)
        if not m:
            raise self.error("expected number")
        self.pos = m.end()
        return float(m.group())

    def string(self):
        quote = self.peek()
        start = self.pos
        self.pos += 1
        out = []
        t = self.text
        while True:
            if self.pos >= len(t) or t[self.pos] == "\n":
                raise self.error("unterminated string", start)
            ch = t[self.pos]
            if ch == quote:
                if t.startswith(quote * 2, self.pos):
                    out.append(quote)
                    self.pos += 2
                    continue
                self.pos += 1
                return "".join(out)
            out.append(ch)
            self.pos += 1


def _parse_matrix(sc: _Scanner, close: str):
    """Rows of numbers (or strings, for cell arrays) until ``close``."""
    start = sc.pos - 1
    rows: list[list] = [[]]
    while True:
        sc.skip(newlines=False)
        ch = sc.peek()
        if ch == "":
            raise sc.error(f"unterminated matrix, missing {close!r}", start)
        if ch == close:
            sc.pos += 1
            break
        if ch in ";\n":
            sc.pos += 1
            if rows[-1]:
                rows.append([])
            continue
        if ch == ",":
            sc.pos += 1
            continue
        if ch in "'\"":
            rows[-1].append(sc.string())
        else:
            rows[-1].append(sc.number())
    if not rows[-1]:
        rows.pop()
    if close == "}":
        return [r[0] if len(r) == 1 else r for r in rows]
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise sc.error(f"row {i + 1} has {len(r)} entries, expected {width}", start)
    return np.array(rows, dtype=float)


def parse_matpower(text: Union[str, bytes]) -> CaseDocument:
    """Parse a MATPOWER case file.

    Accepts ``function mpc = name`` headers and ``mpc.<field> = value;``
    assignments where value is a number, a quoted string, a ``[...]`` matrix or a
    ``{...}`` cell array. Unknown fields are kept in ``extras``.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    sc = _Scanner(text)
    name = ""
    fields: dict[str, Any] = {}
    while True:
        sc.skip()
        if sc.pos >= len(text):
            break
        word_pos = sc.pos
        word = sc.ident()
        if word == "function":
            out = sc.ident()
            sc.expect("=")
            name = sc.ident()
            if out != "mpc":
                raise sc.error("expected 'function mpc = <name>'", word_pos)
            continue
        if word != "mpc":
            raise sc.error(f"unexpected {word!r}", word_pos)
        sc.expect(".")
        key = sc.ident()
        sc.expect("=")
        sc.skip()
        ch = sc.peek()
        if ch == "[":
            sc.pos += 1
            value = _parse_matrix(sc, "]")
        elif ch == "{":
            sc.pos += 1
            value = _parse_matrix(sc, "}")
        elif ch in "'\"":
            value = sc.string()
        else:
            value = sc.number()
        sc.skip(newlines=False)
        if sc.peek() != ";":
            raise sc.error("expected ';'")
        sc.pos += 1
        if key in fields:
            raise sc.error(f"duplicate field {key!r}", word_pos)
        fields[key] = value

    missing = [t for t in MANDATORY_TABLES if t not in fields]
    if missing:
        raise CaseDataError(f"missing mandatory table(s): {', '.join(missing)}")
    tables = {}
    for t in MANDATORY_TABLES:
        v = fields.pop(t)
        if not isinstance(v, np.ndarray):
            raise CaseDataError(f"mpc.{t} must be a matrix")
        tables[t] = v
    base = fields.pop("baseMVA", 100.0)
    doc = CaseDocument(name=name, base_mva=float(base), extras=fields, **tables)
    _check_references(doc)
    return doc


def _check_references(doc: CaseDocument):
    if doc.bus.shape[1] < 3 or doc.branch.shape[1] < 11 or doc.gen.shape[1] < 10:
        raise CaseDataError("bus/branch/gen tables have too few columns")
    ids = set(doc.bus[:, 0].tolist())
    for i, (f, t) in enumerate(doc.branch[:, :2]):
        if f not in ids or t not in ids:
            raise CaseDataError(f"branch row {i + 1} references unknown bus")
    for i, b in enumerate(doc.gen[:, 0]):
        if b not in ids:
            raise CaseDataError(f"gen row {i + 1} references unknown bus {b:g}")


def _fmt(v: float) -> str:
    if not math.isfinite(v):
        return "NaN" if math.isnan(v) else ("Inf" if v > 0 else "-Inf")
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def print_matpower(doc: CaseDocument) -> str:
    """Inverse of :func:`parse_matpower` for documents it can produce."""
    out = [f"function mpc = {doc.name or 'case'}"]

    def emit(key, value):
        if isinstance(value, np.ndarray):
            out.append(f"mpc.{key} = [")
            for row in value:
                out.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
            out.append("];")
        elif isinstance(value, list):
            out.append(f"mpc.{key} = {{")
            for item in value:
                items = item if isinstance(item, list) else [item]
                out.append("\t" + "\t".join(_quote(v) for v in items) + ";")
            out.append("};")
        elif isinstance(value, str):
            out.append(f"mpc.{key} = {_quote(value)};")
        else:
            out.append(f"mpc.{key} = {_fmt(value)};")

    extras = dict(doc.extras)
    if "version" in extras:
        emit("version", extras.pop("version"))
    emit("baseMVA", doc.base_mva)
    for t in MANDATORY_TABLES:
        emit(t, getattr(doc, t))
    for k, v in extras.items():
        emit(k, v)
    return "\n".join(out) + "\n"


def _quote(v) -> str:
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return _fmt(v)


def to_grid(
    doc: CaseDocument,
    linearize_costs: bool = False,
    big_m: float = BIG_M_LIMIT,
    quadratic_tol: float = 1e-12,
    abs_reactance: bool = False,
) -> Grid:
    """Map a MATPOWER document to the DC model.

    Uses bus (id, type, Pd), branch (from, to, x, rateA, status), gen (bus,
    status, Pmax) and the linear term of polynomial gencost rows. Out-of-service
    branches and generators are dropped; ``rateA == 0`` maps to ``big_m``.
    """
    ids = doc.bus[:, 0].astype(int)
    index = {int(b): i for i, b in enumerate(ids)}
    if len(index) != len(ids):
        raise CaseDataError("duplicate bus ids")
    buses = [Bus(i, float(pd)) for i, pd in enumerate(doc.bus[:, 2])]
    slack = np.flatnonzero(doc.bus[:, 1] == 3)
    if slack.size == 0:
        raise CaseDataError("no slack bus (bus type 3)")

    lines = []
    for row_no, row in enumerate(doc.branch, start=1):
        if row[10] <= 0:
            continue
        x = row[3]
        if x == 0 or (x < 0 and not abs_reactance):
            raise CaseDataError(f"branch row {row_no}: reactance {x:g} must be positive")
        rate = row[5] if row[5] > 0 else big_m
        lines.append(
            Line(len(lines), index[int(row[0])], index[int(row[1])], 1.0 / abs(x), float(rate))
        )

    ng = doc.gen.shape[0]
    if doc.gencost.shape[0] < ng:
        raise CaseDataError("gencost has fewer rows than gen")
    gens = []
    for g in range(ng):
        row, cost_row = doc.gen[g], doc.gencost[g]
        if row[7] <= 0:
            continue
        gens.append(
            Generator(
                len(gens),
                index[int(row[0])],
                _linear_cost(cost_row, g + 1, linearize_costs, quadratic_tol),
                float(row[8]),
                GenKind.THERMAL,
            )
        )
    return Grid(tuple(buses), tuple(lines), tuple(gens), int(slack[0]), doc.name)


def _linear_cost(row, row_no, linearize, tol) -> float:
    if int(row[0]) != 2:
        raise CaseDataError(f"gencost row {row_no}: only polynomial costs (model 2) supported")
    n = int(row[3])
    coeffs = row[4:4 + n]  # highest order first
    if n == 0:
        return 0.0
    if n == 1:
        return 0.0
    higher = coeffs[: n - 2]
    if np.any(np.abs(higher) > tol) and not linearize:
        raise CaseDataError(
            f"gencost row {row_no}: nonlinear cost; pass linearize_costs to drop higher-order terms"
        )
    return float(coeffs[n - 2])


def read_matpower(path) -> CaseDocument:
    with open(path, "rb") as fh:
        return parse_matpower(fh.read())


# ---------------------------------------------------------------- JSON

CASE_SCHEMA = {
    "type": "object",
    "required": ["slack_bus", "buses", "lines", "generators"],
    "properties": {
        "name": {"type": "string"},
        "slack_bus": {"type": "integer", "minimum": 0},
        "buses": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "demand"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "demand": {"type": "number", "minimum": 0},
                },
            },
        },
        "lines": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "from", "to", "susceptance", "limit"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "from": {"type": "integer", "minimum": 0},
                    "to": {"type": "integer", "minimum": 0},
                    "susceptance": {"type": "number", "exclusiveMinimum": 0},
                    "limit": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "generators": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "bus", "cost", "p_max"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "bus": {"type": "integer", "minimum": 0},
                    "cost": {"type": "number"},
                    "p_max": {"type": "number", "minimum": 0},
                    "kind": {"enum": [k.value for k in GenKind]},
                },
            },
        },
    },
}


def _pointer(path: Iterable) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def grid_to_json(grid: Grid) -> dict:
    return {
        "name": grid.name,
        "slack_bus": grid.slack_bus,
        "buses": [{"id": b.id, "demand": b.demand} for b in grid.buses],
        "lines": [
            {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus,
             "susceptance": ln.susceptance, "limit": ln.limit}
            for ln in grid.lines
        ],
        "generators": [
            {"id": g.id, "bus": g.bus, "cost": g.cost, "p_max": g.p_max,
             "kind": g.kind.value}
            for g in grid.generators
        ],
    }


def grid_from_json(data: dict) -> Grid:
    """Validate ``data`` against the case schema and build a Grid.

    Raises :class:`SchemaError` carrying a JSON pointer to the offending value.
    """
    validator = jsonschema.Draft7Validator(CASE_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaError(err.message, _pointer(err.absolute_path))

    n = len(data["buses"])
    for key in ("buses", "lines", "generators"):
        for pos, item in enumerate(data[key]):
            if item["id"] != pos:
                raise SchemaError(f"id {item['id']} must equal position {pos}",
                                  f"/{key}/{pos}/id")
    for pos, ln in enumerate(data["lines"]):
        for end in ("from", "to"):
            if ln[end] >= n:
                raise SchemaError(f"unknown bus {ln[end]}", f"/lines/{pos}/{end}")
    for pos, g in enumerate(data["generators"]):
        if g["bus"] >= n:
            raise SchemaError(f"unknown bus {g['bus']}", f"/generators/{pos}/bus")
    if data["slack_bus"] >= n:
        raise SchemaError("slack bus out of range", "/slack_bus")

    return Grid(
        buses=tuple(Bus(b["id"], float(b["demand"])) for b in data["buses"]),
        lines=tuple(
            Line(ln["id"], ln["from"], ln["to"], float(ln["susceptance"]), float(ln["limit"]))
            for ln in data["lines"]
        ),
        generators=tuple(
            Generator(g["id"], g["bus"], float(g["cost"]), float(g["p_max"]),
                      GenKind(g.get("kind", "thermal")))
            for g in data["generators"]
        ),
        slack_bus=data["slack_bus"],
        name=data.get("name", ""),
    )


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def write_json_case(grid: Grid, stream: TextIO) -> None:
    stream.write(dumps_json(grid_to_json(grid)))


def read_json_case(stream: Union[TextIO, str, bytes]) -> Grid:
    if isinstance(stream, (str, bytes)):
        data = json.loads(stream)
    else:
        data = json.load(stream)
    return grid_from_json(data)


def load_case(path, fmt: str = "auto", **to_grid_kwargs) -> Grid:
    """Read a case from disk; ``fmt`` is ``json``, ``matpower`` or ``auto`` (by suffix)."""
    path = str(path)
    if fmt == "auto":
        fmt = "matpower" if path.endswith(".m") else "json"
    if fmt == "matpower":
        return to_grid(read_matpower(path), **to_grid_kwargs)
    with open(path, encoding="utf-8") as fh:
        return read_json_case(fh)


def save_case(grid: Grid, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_json_case(grid, fh)


# ---------------------------------------------------------------- reports

REPORT_HEADER = ("method", "n_clusters", "z_full", "z_agg", "rove", "mrllv", "gpt_seconds")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_report_csv(records, stream: TextIO) -> None:
    """One row per evaluation record (objects with the header's attributes)."""
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(REPORT_HEADER)
    for r in records:
        writer.writerow([_cell(getattr(r, k)) for k in REPORT_HEADER])


def report_csv_text(records) -> str:
    buf = io.StringIO()
    write_report_csv(records, buf)
    return buf.getvalue()

"""MILP intermediate representation: variables, linear rows, objective.

All formulation and surrogate-embedding passes accumulate into a `MilpModel`.
The model converts to an all-inequality standard form for the solver, checks
candidate assignments row by row, and exports fixed-format MPS (plus a small
reader so exported files can be round-tripped and handed to other solvers).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

VAR_KINDS = ("continuous", "integer", "binary")
SENSES = ("<=", "=", ">=")

FEAS_TOL = 1e-6
INT_TOL = 1e-6

INF = math.inf


class ModelError(ValueError):
    pass


@dataclass
class Variable:
    id: int
    name: str
    kind: str
    lower: float
    upper: float


@dataclass
class LinearConstraint:
    """Sparse row: sum(coeff * var) sense rhs, tagged with its origin."""

    terms: list[tuple[int, float]]
    sense: str
    rhs: float
    tag: str


@dataclass
class Violation:
    index: int
    tag: str
    amount: float  # signed: positive means the row is violated by this much


@dataclass
class Solution:
    """Solver output: values by dense variable id plus run statistics."""

    values: np.ndarray
    objective: float
    status: str  # optimal | infeasible | unbounded | limit
    nodes: int = 0
    iterations: int = 0
    seconds: float = 0.0


@dataclass
class StandardForm:
    """minimize c@x  s.t.  A@x <= b,  lb <= x <= ub, integrality mask.

    row_origin maps each standard-form row back to (constraint index, sign)
    where sign is +1 for the as-is row and -1 for the negated half of an
    equality or >= row.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    is_int: np.ndarray
    row_origin: list[tuple[int, int]] = field(default_factory=list)


class MilpModel:
    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[LinearConstraint] = []
        self.objective: dict[int, float] = {}
        self._frozen = False

    # -- construction ------------------------------------------------------

    def add_variable(self, name: str, kind: str = "continuous",
                     lower: float = 0.0, upper: float = INF) -> int:
        if self._frozen:
            raise ModelError("model is frozen")
        if kind not in VAR_KINDS:
            raise ModelError(f"unknown variable kind {kind!r}")
        if kind == "binary":
            lower, upper = 0.0, 1.0
        if lower > upper:
            raise ModelError(f"variable {name!r}: lower {lower} exceeds upper {upper}")
        vid = len(self.variables)
        self.variables.append(Variable(vid, name, kind, float(lower), float(upper)))
        return vid

    def add_constraint(self, terms: list[tuple[int, float]], sense: str,
                       rhs: float, tag: str = "") -> int:
        if self._frozen:
            raise ModelError("model is frozen")
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        seen = set()
        for vid, _ in terms:
            if vid < 0 or vid >= len(self.variables):
                raise ModelError(f"constraint {tag!r} references unknown variable {vid}")
            if vid in seen:
                raise ModelError(f"constraint {tag!r} repeats variable {vid}")
            seen.add(vid)
        self.constraints.append(
            LinearConstraint([(v, float(c)) for v, c in terms], sense, float(rhs), tag))
        return len(self.constraints) - 1

    def add_objective_term(self, vid: int, coeff: float):
        if self._frozen:
            raise ModelError("model is frozen")
        if vid < 0 or vid >= len(self.variables):
            raise ModelError(f"objective references unknown variable {vid}")
        self.objective[vid] = self.objective.get(vid, 0.0) + float(coeff)

    def freeze(self):
        self._frozen = True

    # -- queries -----------------------------------------------------------

    def num_variables(self) -> int:
        return len(self.variables)

    def num_constraints(self) -> int:
        return len(self.constraints)

    def num_integer(self) -> int:
        return sum(1 for v in self.variables if v.kind != "continuous")

    def binary_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.kind == "binary"]

    def objective_value(self, values) -> float:
        return float(sum(c * values[v] for v, c in self.objective.items()))

    def evaluate(self, assignment, tol: float = FEAS_TOL) -> list[Violation]:
        """Check every row against an assignment; return the violated ones.

        `assignment` is indexable by variable id (array or dict). A row's
        violation is how far its left side lands on the wrong side of rhs;
        the list is empty exactly when the point is feasible at `tol`.
        """
        values = np.empty(len(self.variables))
        for v in self.variables:
            try:
                values[v.id] = assignment[v.id]
            except (KeyError, IndexError):
                raise ModelError(f"assignment misses variable {v.name!r} (id {v.id})")
        out = []
        for idx, con in enumerate(self.constraints):
            lhs = sum(c * values[v] for v, c in con.terms)
            if con.sense == "<=":
                viol = lhs - con.rhs
            elif con.sense == ">=":
                viol = con.rhs - lhs
            else:
                viol = abs(lhs - con.rhs)
            if viol > tol:
                out.append(Violation(idx, con.tag, viol))
        return out

    # -- conversions -------------------------------------------------------

    def to_standard_form(self) -> StandardForm:
        """Rewrite every row as <=; equalities become a <= / >= pair."""
        n = len(self.variables)
        rows, rhs, origin = [], [], []
        for idx, con in enumerate(self.constraints):
            dense = np.zeros(n)
            for v, c in con.terms:
                dense[v] = c
            if con.sense in ("<=", "="):
                rows.append(dense)
                rhs.append(con.rhs)
                origin.append((idx, 1))
            if con.sense in (">=", "="):
                rows.append(-dense)
                rhs.append(-con.rhs)
                origin.append((idx, -1))
        A = np.array(rows) if rows else np.zeros((0, n))
        c = np.zeros(n)
        for v, coeff in self.objective.items():
            c[v] = coeff
        lb = np.array([v.lower for v in self.variables]) if n else np.zeros(0)
        ub = np.array([v.upper for v in self.variables]) if n else np.zeros(0)
        is_int = np.array([v.kind != "continuous" for v in self.variables], dtype=bool)
        return StandardForm(A, np.array(rhs), c, lb, ub, is_int, origin)

    # -- export ------------------------------------------------------------

    def write_lp(self) -> str:
        """Human-readable dump for debugging; not a parseable LP file."""
        def term_str(terms):
            parts = []
            for v, c in terms:
                name = self.variables[v].name
                parts.append(f"{'+' if c >= 0 else '-'} {abs(c):g} {name}")
            return " ".join(parts) if parts else "0"

        lines = [f"\\ model {self.name}", "minimize:"]
        lines.append("  " + term_str(sorted(self.objective.items())))
        lines.append("subject to:")
        for con in self.constraints:
            lines.append(f"  [{con.tag}] {term_str(con.terms)} {con.sense} {con.rhs:g}")
        lines.append("bounds:")
        for v in self.variables:
            lines.append(f"  {v.lower:g} <= {v.name} <= {v.upper:g}  ({v.kind})")
        return "\n".join(lines) + "\n"

    def export_mps(self, path: str):
        """Write fixed-format MPS plus a `<path>.names` truncation map.

        Row/column names are truncated to 8 characters (with a counter suffix
        on collision) as fixed MPS requires; numeric fields use the shortest
        exact decimal form, which can overflow the classic 12-character field
        but stays whitespace-delimited for modern readers.
        """
        short_rows = _shorten([f"C{i}_{c.tag}" for i, c in enumerate(self.constraints)])
        short_cols = _shorten([v.name for v in self.variables])

        def num(x: float) -> str:
            if x == INF:
                return "1e308"
            return repr(float(x))

        lines = [f"NAME          {self.name[:60]}", "ROWS", " N  OBJ"]
        sense_code = {"<=": "L", ">=": "G", "=": "E"}
        for i, con in enumerate(self.constraints):
            lines.append(f" {sense_code[con.sense]}  {short_rows[i]}")

        lines.append("COLUMNS")
        marker_n = 0
        in_int = False
        for v in self.variables:
            want_int = v.kind != "continuous"
            if want_int and not in_int:
                lines.append(f"    MARKER{marker_n:02d}  'MARKER'                 'INTORG'")
                marker_n += 1
                in_int = True
            elif not want_int and in_int:
                lines.append(f"    MARKER{marker_n:02d}  'MARKER'                 'INTEND'")
                marker_n += 1
                in_int = False
            entries = []
            if v.id in self.objective and self.objective[v.id] != 0.0:
                entries.append(("OBJ", self.objective[v.id]))
            for i, con in enumerate(self.constraints):
                for vid, coeff in con.terms:
                    if vid == v.id and coeff != 0.0:
                        entries.append((short_rows[i], coeff))
            if not entries:
                entries.append(("OBJ", 0.0))  # keep empty columns visible
            for row_name, coeff in entries:
                lines.append(f"    {short_cols[v.id]:<8}  {row_name:<8}  {num(coeff)}")
        if in_int:
            lines.append(f"    MARKER{marker_n:02d}  'MARKER'                 'INTEND'")

        lines.append("RHS")
        for i, con in enumerate(self.constraints):
            if con.rhs != 0.0:
                lines.append(f"    RHS       {short_rows[i]:<8}  {num(con.rhs)}")

        lines.append("BOUNDS")
        for v in self.variables:
            name = short_cols[v.id]
            lo, up = v.lower, v.upper
            if lo == up:
                lines.append(f" FX BND       {name:<8}  {num(lo)}")
                continue
            if lo == -INF:
                lines.append(f" MI BND       {name:<8}")
            elif lo != 0.0 or v.kind != "continuous":
                lines.append(f" LO BND       {name:<8}  {num(lo)}")
            if up != INF:
                lines.append(f" UP BND       {name:<8}  {num(up)}")
            elif v.kind != "continuous":
                lines.append(f" PL BND       {name:<8}")
        lines.append("ENDATA")

        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        name_map = {
            "rows": {short_rows[i]: self.constraints[i].tag for i in range(len(self.constraints))},
            "cols": {short_cols[v.id]: v.name for v in self.variables},
        }
        with open(str(path) + ".names", "w") as fh:
            json.dump(name_map, fh, indent=1)


def _shorten(names: list[str]) -> list[str]:
    """Truncate names to 8 chars, suffixing a counter on collision."""
    out, used = [], set()
    for name in names:
        base = "".join(ch if ch.isalnum() else "_" for ch in name)[:8] or "X"
        cand = base
        k = 0
        while cand in used:
            suffix = str(k)
            cand = base[: 8 - len(suffix)] + suffix
            k += 1
        used.add(cand)
        out.append(cand)
    return out


def read_mps(path: str) -> MilpModel:
    """Minimal fixed/free MPS reader covering what `export_mps` emits.

    Restores original long names from the `.names` sidecar when present.
    """
    name_map = {"rows": {}, "cols": {}}
    try:
        with open(str(path) + ".names") as fh:
            name_map = json.load(fh)
    except FileNotFoundError:
        pass

    model = MilpModel()
    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    obj_row = None
    col_ids: dict[str, int] = {}
    col_kind: dict[str, str] = {}
    entries: dict[str, list[tuple[str, float]]] = {}
    rhs: dict[str, float] = {}
    bounds: dict[str, list] = {}
    integer_mode = False

    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("*"):
                continue
            if not line[0].isspace():
                section = line.split()[0].upper()
                if section == "NAME":
                    parts = line.split(None, 1)
                    model.name = parts[1].strip() if len(parts) > 1 else "model"
                continue
            tok = line.split()
            if section == "ROWS":
                code, rname = tok[0].upper(), tok[1]
                if code == "N":
                    obj_row = rname
                else:
                    row_sense[rname] = {"L": "<=", "G": ">=", "E": "="}[code]
                    row_order.append(rname)
            elif section == "COLUMNS":
                if len(tok) >= 3 and tok[1] == "'MARKER'":
                    integer_mode = tok[2] == "'INTORG'"
                    continue
                cname = tok[0]
                if cname not in col_ids:
                    col_ids[cname] = len(col_ids)
                    col_kind[cname] = "integer" if integer_mode else "continuous"
                    entries[cname] = []
                for j in range(1, len(tok) - 1, 2):
                    entries[cname].append((tok[j], float(tok[j + 1])))
            elif section == "RHS":
                for j in range(1, len(tok) - 1, 2):
                    rhs[tok[j]] = float(tok[j + 1])
            elif section == "BOUNDS":
                btype, cname = tok[0].upper(), tok[2]
                val = float(tok[3]) if len(tok) > 3 else None
                bounds.setdefault(cname, []).append((btype, val))
            elif section == "ENDATA":
                break

    for cname, cid in col_ids.items():
        lo, up = 0.0, INF
        for btype, val in bounds.get(cname, []):
            if btype == "UP":
                up = val
            elif btype == "LO":
                lo = val
            elif btype == "FX":
                lo = up = val
            elif btype == "MI":
                lo = -INF
            elif btype == "PL":
                up = INF
            elif btype == "BV":
                lo, up = 0.0, 1.0
        kind = col_kind[cname]
        if kind == "integer" and lo == 0.0 and up == 1.0:
            kind = "binary"
        long_name = name_map["cols"].get(cname, cname)
        vid = model.add_variable(long_name, kind, lo, up)
        assert vid == cid
        for rname, coeff in entries[cname]:
            if rname == obj_row:
                if coeff != 0.0:
                    model.add_objective_term(vid, coeff)

    for rname in row_order:
        terms = []
        for cname, cid in col_ids.items():
            for ename, coeff in entries[cname]:
                if ename == rname:
                    terms.append((cid, coeff))
        model.add_constraint(terms, row_sense[rname], rhs.get(rname, 0.0),
                             tag=name_map["rows"].get(rname, rname))
    return model

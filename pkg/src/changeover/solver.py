"""Minimal MILP abstraction: build a model once, solve it on any backend.

Two backends ship:

* ``highs`` — scipy's HiGHS-based ``scipy.optimize.milp`` (default).
* ``branch-and-bound`` — a best-first branch and bound written here, using
  scipy's LP solver for node relaxations.  Slow but dependency-light; meant
  for tiny instances and for cross-checking the external backend.

Whatever the backend claims, ``solve`` re-verifies the returned assignment
against every constraint, bound, and integrality requirement, and recomputes
the objective from the assignment; a backend can therefore never smuggle an
infeasible "optimum" past the caller.
"""

from __future__ import annotations

import heapq
import math
import re
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

__all__ = [
    "CONTINUOUS",
    "INTEGER",
    "BINARY",
    "SENSE_LE",
    "SENSE_EQ",
    "SENSE_GE",
    "SolveStatus",
    "MilpModel",
    "SolveOutcome",
    "SolveSettings",
    "solve",
    "export_lp_text",
]

CONTINUOUS = "continuous"
INTEGER = "integer"
BINARY = "binary"

SENSE_LE = "<="
SENSE_EQ = "="
SENSE_GE = ">="

_VALID_KINDS = (CONTINUOUS, INTEGER, BINARY)
_VALID_SENSES = (SENSE_LE, SENSE_EQ, SENSE_GE)
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")

_FEAS_TOL = 1e-6
_INT_TOL = 1e-6


class SolveStatus:
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    TIME_LIMIT_FEASIBLE = "time-limit-feasible"
    ERROR = "error"


@dataclass(slots=True)
class _Variable:
    name: str
    kind: str
    lower: float
    upper: float


@dataclass(slots=True)
class _Constraint:
    name: str
    coeffs: dict[str, float]
    sense: str
    rhs: float


class MilpModel:
    """Named variables, linear rows, one linear objective.

    Coefficients are plain ``{variable_name: coefficient}`` dicts; there is no
    expression algebra here on purpose — builders assemble dicts directly and
    the model stays trivially serializable.
    """

    def __init__(self, name: str = "model") -> None:
        self.name = name
        self.variables: list[_Variable] = []
        self.constraints: list[_Constraint] = []
        self.objective: dict[str, float] = {}
        self.objective_constant: float = 0.0
        self.maximize: bool = True
        self._var_index: dict[str, int] = {}

    def add_variable(
        self,
        name: str,
        kind: str = CONTINUOUS,
        lower: float = 0.0,
        upper: float | None = None,
    ) -> str:
        if not _NAME_RE.match(name):
            raise ValueError(f"variable name {name!r} is not a valid identifier")
        if name in self._var_index:
            raise ValueError(f"duplicate variable {name!r}")
        if kind not in _VALID_KINDS:
            raise ValueError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lower = 0.0 if lower is None else max(0.0, float(lower))
            upper = 1.0 if upper is None else min(1.0, float(upper))
        else:
            lower = -math.inf if lower is None else float(lower)
            upper = math.inf if upper is None else float(upper)
        if lower > upper:
            raise ValueError(f"variable {name!r} has lower bound {lower} > upper bound {upper}")
        self._var_index[name] = len(self.variables)
        self.variables.append(_Variable(name, kind, lower, upper))
        return name

    def add_constraint(self, name: str, coeffs: dict[str, float], sense: str, rhs: float) -> None:
        if not _NAME_RE.match(name):
            raise ValueError(f"constraint name {name!r} is not a valid identifier")
        if sense not in _VALID_SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        for var in coeffs:
            if var not in self._var_index:
                raise ValueError(f"constraint {name!r} references undeclared variable {var!r}")
        self.constraints.append(_Constraint(name, dict(coeffs), sense, float(rhs)))

    def set_objective(
        self, coeffs: dict[str, float], maximize: bool = True, constant: float = 0.0
    ) -> None:
        for var in coeffs:
            if var not in self._var_index:
                raise ValueError(f"objective references undeclared variable {var!r}")
        self.objective = dict(coeffs)
        self.objective_constant = float(constant)
        self.maximize = bool(maximize)

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_integer_variables(self) -> int:
        return sum(1 for v in self.variables if v.kind != CONTINUOUS)

    def variable_names(self) -> list[str]:
        return [v.name for v in self.variables]

    def evaluate_objective(self, assignment: dict[str, float]) -> float:
        total = self.objective_constant
        for var, coef in self.objective.items():
            total += coef * assignment[var]
        return total

    def check_assignment(
        self, assignment: dict[str, float], tol: float = _FEAS_TOL
    ) -> list[str]:
        """Return human-readable violation descriptions (empty = feasible)."""
        violations: list[str] = []
        for v in self.variables:
            x = assignment.get(v.name)
            if x is None:
                violations.append(f"variable {v.name} missing from assignment")
                continue
            if x < v.lower - tol or x > v.upper + tol:
                violations.append(f"variable {v.name}={x} outside bounds [{v.lower}, {v.upper}]")
            if v.kind != CONTINUOUS and abs(x - round(x)) > _INT_TOL:
                violations.append(f"variable {v.name}={x} violates integrality")
        for c in self.constraints:
            lhs = sum(coef * assignment[var] for var, coef in c.coeffs.items())
            slack_tol = tol + 1e-9 * max(1.0, abs(lhs), abs(c.rhs))
            if c.sense == SENSE_LE and lhs > c.rhs + slack_tol:
                violations.append(f"constraint {c.name}: {lhs} > {c.rhs}")
            elif c.sense == SENSE_GE and lhs < c.rhs - slack_tol:
                violations.append(f"constraint {c.name}: {lhs} < {c.rhs}")
            elif c.sense == SENSE_EQ and abs(lhs - c.rhs) > slack_tol:
                violations.append(f"constraint {c.name}: {lhs} != {c.rhs}")
        return violations


@dataclass(frozen=True, slots=True)
class SolveSettings:
    """Solver knobs.  ``seed`` is recorded for reproducibility bookkeeping;
    the HiGHS backend runs single-threaded and is deterministic regardless."""

    gap_tolerance: float = 1e-6
    time_limit: float = 60.0
    seed: int | None = None
    backend: str = "highs"
    node_limit: int = 500_000


@dataclass(frozen=True, slots=True)
class SolveOutcome:
    status: str
    objective_value: float | None
    assignment: dict[str, float] = field(default_factory=dict)
    solve_time: float = 0.0
    gap: float = 0.0
    message: str = ""

    @property
    def has_solution(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.TIME_LIMIT_FEASIBLE)


@dataclass(slots=True)
class _RawResult:
    status: str
    x: np.ndarray | None
    gap: float
    message: str


@dataclass(slots=True)
class _Arrays:
    """Model compiled to the arrays both backends consume (minimization form)."""

    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integrality: np.ndarray
    a_matrix: sparse.csr_matrix | None
    row_lower: np.ndarray
    row_upper: np.ndarray


def _compile(model: MilpModel) -> _Arrays:
    n = model.n_variables
    index = {v.name: i for i, v in enumerate(model.variables)}
    c = np.zeros(n)
    for var, coef in model.objective.items():
        c[index[var]] = coef
    if model.maximize:
        c = -c
    lower = np.array([v.lower for v in model.variables], dtype=float)
    upper = np.array([v.upper for v in model.variables], dtype=float)
    integrality = np.array([1 if v.kind != CONTINUOUS else 0 for v in model.variables])

    m = len(model.constraints)
    if m == 0:
        return _Arrays(c, lower, upper, integrality, None, np.empty(0), np.empty(0))
    rows, cols, data = [], [], []
    row_lower = np.empty(m)
    row_upper = np.empty(m)
    for i, con in enumerate(model.constraints):
        for var, coef in con.coeffs.items():
            rows.append(i)
            cols.append(index[var])
            data.append(coef)
        if con.sense == SENSE_LE:
            row_lower[i], row_upper[i] = -np.inf, con.rhs
        elif con.sense == SENSE_GE:
            row_lower[i], row_upper[i] = con.rhs, np.inf
        else:
            row_lower[i] = row_upper[i] = con.rhs
    a_matrix = sparse.csr_matrix((data, (rows, cols)), shape=(m, n))
    return _Arrays(c, lower, upper, integrality, a_matrix, row_lower, row_upper)


def _solve_highs(arrays: _Arrays, settings: SolveSettings) -> _RawResult:
    """External solve via scipy's HiGHS, run once per presolve mode.

    The HiGHS build vendored by scipy 1.15 occasionally returns a feasible
    but suboptimal incumbent *claimed optimal* on small fixed-charge models —
    and which presolve mode misbehaves varies by instance.  Both modes are
    therefore raced and the better incumbent kept (these models are tiny, so
    the second solve is cheap).  ``solve`` re-verifies whatever comes back.
    """
    kwargs = {}
    if arrays.a_matrix is not None:
        kwargs["constraints"] = LinearConstraint(arrays.a_matrix, arrays.row_lower, arrays.row_upper)
    best: _RawResult | None = None
    best_fun = math.inf
    for presolve in (True, False):
        options = {
            "time_limit": settings.time_limit,
            "mip_rel_gap": settings.gap_tolerance,
            "presolve": presolve,
        }
        res = milp(
            arrays.c,
            integrality=arrays.integrality,
            bounds=Bounds(arrays.lower, arrays.upper),
            options=options,
            **kwargs,
        )
        gap = getattr(res, "mip_gap", 0.0)
        gap = 0.0 if gap is None else float(gap)
        if res.status == 0:
            raw = _RawResult(SolveStatus.OPTIMAL, res.x, gap, res.message)
        elif res.status == 2:
            raw = _RawResult(SolveStatus.INFEASIBLE, None, 0.0, res.message)
        elif res.status == 1 and res.x is not None:
            raw = _RawResult(SolveStatus.TIME_LIMIT_FEASIBLE, res.x, gap, res.message)
        else:
            raw = _RawResult(SolveStatus.ERROR, None, 0.0, res.message or "backend failure")
        if raw.x is None:
            # infeasible/error: only keep it if the other mode found nothing
            if best is None:
                best = raw
            continue
        fun = float(arrays.c @ raw.x)
        if best is None or best.x is None or fun < best_fun - 1e-12:
            best, best_fun = raw, fun
    return best if best is not None else _RawResult(
        SolveStatus.ERROR, None, 0.0, "backend returned no result"
    )


def _node_lp(arrays: _Arrays, lower: np.ndarray, upper: np.ndarray):
    """Solve one LP relaxation; returns (objective, x) or None if infeasible."""
    if arrays.a_matrix is not None:
        finite_ub = np.isfinite(arrays.row_upper)
        finite_lb = np.isfinite(arrays.row_lower)
        a_ub = sparse.vstack(
            [arrays.a_matrix[finite_ub], -arrays.a_matrix[finite_lb]], format="csr"
        )
        b_ub = np.concatenate([arrays.row_upper[finite_ub], -arrays.row_lower[finite_lb]])
        lp_kwargs = {"A_ub": a_ub, "b_ub": b_ub}
    else:
        lp_kwargs = {}
    res = linprog(
        arrays.c,
        bounds=np.column_stack([lower, upper]),
        method="highs",
        **lp_kwargs,
    )
    if res.status == 2:  # infeasible node
        return None
    if res.status == 3:
        raise RuntimeError("LP relaxation is unbounded")
    if not res.success:
        raise RuntimeError(f"LP relaxation failed: {res.message}")
    return float(res.fun), res.x


def _solve_branch_bound(arrays: _Arrays, settings: SolveSettings) -> _RawResult:
    """Best-first branch and bound over LP relaxations (minimization form)."""
    deadline = time.perf_counter() + settings.time_limit
    int_mask = arrays.integrality.astype(bool)

    try:
        root = _node_lp(arrays, arrays.lower, arrays.upper)
    except RuntimeError as exc:
        return _RawResult(SolveStatus.ERROR, None, 0.0, str(exc))
    if root is None:
        return _RawResult(SolveStatus.INFEASIBLE, None, 0.0, "root relaxation infeasible")

    best_x: np.ndarray | None = None
    best_obj = np.inf
    counter = 0
    heap: list[tuple[float, int, np.ndarray, np.ndarray, np.ndarray]] = []
    heapq.heappush(heap, (root[0], counter, root[1], arrays.lower.copy(), arrays.upper.copy()))
    nodes = 0
    timed_out = False

    while heap:
        bound, _, x, lo, hi = heapq.heappop(heap)
        if bound >= best_obj - 1e-9:
            continue  # cannot improve the incumbent
        nodes += 1
        if nodes > settings.node_limit:
            timed_out = True
            break
        if time.perf_counter() > deadline:
            timed_out = True
            break

        frac = np.abs(x[int_mask] - np.round(x[int_mask]))
        if frac.size == 0 or frac.max() <= _INT_TOL:
            rounded = x.copy()
            rounded[int_mask] = np.round(rounded[int_mask])
            obj = float(arrays.c @ rounded)
            if obj < best_obj:
                best_obj, best_x = obj, rounded
            continue

        # branch on the most fractional integer variable
        int_indices = np.flatnonzero(int_mask)
        j = int_indices[int(np.argmax(frac))]
        for child_lo, child_hi in (
            (lo, _with(hi, j, math.floor(x[j]))),
            (_with(lo, j, math.ceil(x[j])), hi),
        ):
            if child_lo[j] > child_hi[j]:
                continue
            try:
                solved = _node_lp(arrays, child_lo, child_hi)
            except RuntimeError as exc:
                return _RawResult(SolveStatus.ERROR, None, 0.0, str(exc))
            if solved is None:
                continue
            child_bound, child_x = solved
            if child_bound < best_obj - 1e-9:
                counter += 1
                heapq.heappush(heap, (child_bound, counter, child_x, child_lo, child_hi))

    if best_x is None:
        if timed_out:
            return _RawResult(SolveStatus.ERROR, None, 0.0, "limit reached with no incumbent")
        return _RawResult(SolveStatus.INFEASIBLE, None, 0.0, "search exhausted with no incumbent")
    remaining = min((entry[0] for entry in heap), default=best_obj)
    gap = max(0.0, (best_obj - remaining) / max(1.0, abs(best_obj)))
    if timed_out and gap > settings.gap_tolerance:
        return _RawResult(SolveStatus.TIME_LIMIT_FEASIBLE, best_x, gap, "limit reached")
    return _RawResult(SolveStatus.OPTIMAL, best_x, gap, f"proved optimal after {nodes} nodes")


def _with(bounds: np.ndarray, index: int, value: float) -> np.ndarray:
    out = bounds.copy()
    out[index] = value
    return out


def solve(model: MilpModel, settings: SolveSettings | None = None) -> SolveOutcome:
    """Solve the model; verify the answer in-artifact before reporting it.

    The returned ``objective_value`` is always recomputed from the assignment
    (never trusted from the backend), so it matches the model's objective
    expression exactly.
    """
    settings = settings or SolveSettings()
    arrays = _compile(model)
    start = time.perf_counter()
    if settings.backend == "highs":
        raw = _solve_highs(arrays, settings)
    elif settings.backend == "branch-and-bound":
        raw = _solve_branch_bound(arrays, settings)
    else:
        raise ValueError(f"unknown backend {settings.backend!r}")
    elapsed = time.perf_counter() - start

    if raw.x is None:
        return SolveOutcome(
            status=raw.status,
            objective_value=None,
            solve_time=elapsed,
            gap=raw.gap,
            message=raw.message,
        )

    assignment = {v.name: float(x) for v, x in zip(model.variables, raw.x)}
    violations = model.check_assignment(assignment)
    if violations:
        return SolveOutcome(
            status=SolveStatus.ERROR,
            objective_value=None,
            solve_time=elapsed,
            gap=raw.gap,
            message="backend returned an infeasible assignment: " + "; ".join(violations[:5]),
        )
    return SolveOutcome(
        status=raw.status,
        objective_value=model.evaluate_objective(assignment),
        assignment=assignment,
        solve_time=elapsed,
        gap=raw.gap,
        message=raw.message,
    )


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return f"{value:.12g}"


def _format_terms(coeffs: dict[str, float], order: list[str]) -> list[str]:
    terms = []
    first = True
    for name in order:
        if name not in coeffs:
            continue
        coef = coeffs[name]
        if coef == 0:
            continue
        mag = _format_number(abs(coef))
        if first:
            sign = "-" if coef < 0 else ""
            terms.append(f"{sign}{mag} {name}")
            first = False
        else:
            sign = "-" if coef < 0 else "+"
            terms.append(f"{sign} {mag} {name}")
    return terms


def _wrap(prefix: str, terms: list[str], width: int = 78) -> list[str]:
    lines = [prefix]
    for term in terms:
        if len(lines[-1]) + len(term) + 1 > width:
            lines.append("   " + term)
        else:
            lines[-1] = lines[-1] + " " + term
    return lines


def export_lp_text(model: MilpModel) -> str:
    """Render the model in the standard human-readable LP text format."""
    order = model.variable_names()
    lines = [f"\\ {model.name}", "Maximize" if model.maximize else "Minimize"]
    obj_terms = _format_terms(model.objective, order)
    if model.objective_constant:
        sign = "-" if model.objective_constant < 0 else "+"
        mag = _format_number(abs(model.objective_constant))
        obj_terms.append(f"{sign} {mag}" if obj_terms else _format_number(model.objective_constant))
    if not obj_terms:
        obj_terms = [f"0 {order[0]}"] if order else ["0"]
    lines.extend(_wrap(" obj:", obj_terms))
    lines.append("Subject To")
    sense_text = {SENSE_LE: "<=", SENSE_GE: ">=", SENSE_EQ: "="}
    for con in model.constraints:
        terms = _format_terms(con.coeffs, order)
        if not terms:
            terms = ["0"]
        terms.append(f"{sense_text[con.sense]} {_format_number(con.rhs)}")
        lines.extend(_wrap(f" {con.name}:", terms))
    lines.append("Bounds")
    for v in model.variables:
        if v.kind == BINARY:
            continue  # implied by the Binaries section
        if math.isinf(v.lower) and math.isinf(v.upper):
            lines.append(f" {v.name} free")
        elif math.isinf(v.upper):
            lines.append(f" {_format_number(v.lower)} <= {v.name}")
        else:
            lines.append(
                f" {_format_number(v.lower)} <= {v.name} <= {_format_number(v.upper)}"
            )
    generals = [v.name for v in model.variables if v.kind == INTEGER]
    if generals:
        lines.append("Generals")
        lines.extend(f" {name}" for name in generals)
    binaries = [v.name for v in model.variables if v.kind == BINARY]
    if binaries:
        lines.append("Binaries")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"

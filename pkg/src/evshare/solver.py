"""Small LP/MILP modelling layer on top of HiGHS (through scipy).

Models are built row by row with labelled constraints so callers can map
dual values back to their own symbols. Two MILP backends exist: ``highs``
(``scipy.optimize.milp``) and ``bnb``, a plain best-first branch and bound
over LP relaxations. The default comes from ``$EVSHARE_SOLVER``.

Dual values are reported as the sensitivity of the objective to the
constraint right-hand side, in the model's own objective sense. A minimising
model therefore has non-positive duals on binding ``<=`` rows and
non-negative duals on binding ``>=`` rows.
"""

from __future__ import annotations

import heapq
import math
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIME_LIMIT = "time-limit"

FEAS_TOL = 1e-6
INT_TOL = 1e-6
SENSES = ("<=", "==", ">=")

_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9}


class SolverError(RuntimeError):
    pass


class ModelError(ValueError):
    pass


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    integer: bool = False


@dataclass
class Constraint:
    index: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float
    label: str


class LinearModel:
    def __init__(self, name: str = "model", sense: str = "min"):
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be 'min' or 'max', not {sense!r}")
        self.name = name
        self.sense = sense
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self._labels: dict[str, int] = {}

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def has_integers(self) -> bool:
        return any(v.integer for v in self.variables)

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf, integer: bool = False, obj: float = 0.0) -> int:
        if lb > ub:
            raise ModelError(f"variable {name}: lower bound {lb} above upper bound {ub}")
        self.variables.append(Variable(name, float(lb), float(ub), bool(integer)))
        j = len(self.variables) - 1
        if obj:
            self.objective[j] = float(obj)
        return j

    def add_constraint(
        self,
        terms: Mapping[int, float] | Iterable[tuple[int, float]],
        sense: str,
        rhs: float,
        label: str,
    ) -> int:
        if sense not in SENSES:
            raise ModelError(f"constraint {label}: unknown sense {sense!r}")
        if label in self._labels:
            raise ModelError(f"duplicate constraint label {label!r}")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[int, float] = {}
        for j, a in items:
            if not 0 <= j < len(self.variables):
                raise ModelError(f"constraint {label}: undeclared variable index {j}")
            acc[j] = acc.get(j, 0.0) + float(a)
        idx = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
        val = np.fromiter(acc.values(), dtype=float, count=len(acc))
        self.constraints.append(Constraint(idx, val, sense, float(rhs), label))
        self._labels[label] = len(self.constraints) - 1
        return len(self.constraints) - 1

    def set_objective(self, terms: Mapping[int, float] | Iterable[tuple[int, float]], sense: str | None = None):
        if sense is not None:
            if sense not in ("min", "max"):
                raise ModelError(f"objective sense must be 'min' or 'max', not {sense!r}")
            self.sense = sense
        items = terms.items() if isinstance(terms, Mapping) else terms
        self.objective = {}
        for j, a in items:
            if not 0 <= j < len(self.variables):
                raise ModelError(f"objective: undeclared variable index {j}")
            self.objective[j] = self.objective.get(j, 0.0) + float(a)

    def copy(self) -> "LinearModel":
        """Copy with independent variables and objective; constraint rows are shared."""
        m = LinearModel(self.name, self.sense)
        m.variables = [Variable(v.name, v.lb, v.ub, v.integer) for v in self.variables]
        m.constraints = list(self.constraints)
        m.objective = dict(self.objective)
        m._labels = dict(self._labels)
        return m

    def relaxed(self) -> "LinearModel":
        m = self.copy()
        for v in m.variables:
            v.integer = False
        return m

    def fix(self, j: int, value: float):
        v = self.variables[j]
        v.lb = v.ub = float(value)

    def constraint_index(self, label: str) -> int:
        return self._labels[label]

    def matrix(self) -> sparse.csr_matrix:
        rows = [np.full(len(c.index), i, dtype=np.int64) for i, c in enumerate(self.constraints)]
        if rows:
            r = np.concatenate(rows)
            cidx = np.concatenate([c.index for c in self.constraints])
            val = np.concatenate([c.coef for c in self.constraints])
        else:
            r = cidx = np.zeros(0, dtype=np.int64)
            val = np.zeros(0)
        return sparse.csr_matrix((val, (r, cidx)), shape=(self.n_constraints, self.n_vars))

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, a in self.objective.items():
            c[j] = a
        return c

    def to_lp_text(self) -> str:
        """Human-readable LP-format dump, for debugging only."""

        def expr(pairs):
            parts = [f"{'+' if a >= 0 else '-'} {abs(a):g} {self.variables[j].name}" for j, a in pairs]
            return " ".join(parts) if parts else "0"

        out = [f"\\ {self.name}", "Maximize" if self.sense == "max" else "Minimize"]
        out.append(" obj: " + expr(sorted(self.objective.items())))
        out.append("Subject To")
        for c in self.constraints:
            op = {"<=": "<=", "==": "=", ">=": ">="}[c.sense]
            out.append(f" {c.label}: {expr(zip(c.index.tolist(), c.coef.tolist()))} {op} {c.rhs:g}")
        out.append("Bounds")
        for v in self.variables:
            ub = "+inf" if math.isinf(v.ub) else f"{v.ub:g}"
            lb = "-inf" if math.isinf(v.lb) else f"{v.lb:g}"
            out.append(f" {lb} <= {v.name} <= {ub}")
        ints = [v.name for v in self.variables if v.integer]
        if ints:
            out.append("General")
            out.append(" " + " ".join(ints))
        out.append("End")
        return "\n".join(out) + "\n"


@dataclass(frozen=True)
class SolveOutcome:
    status: str
    objective: float | None
    values: np.ndarray | None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    solve_time: float = 0.0
    labels: Mapping[str, int] = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    def dual(self, label: str) -> float:
        if self.duals is None:
            raise SolverError("no dual values: the model was solved with integer variables")
        return float(self.duals[self.labels[label]])


def default_backend() -> str:
    return os.environ.get("EVSHARE_SOLVER", "highs").lower()


def _bounds(model: LinearModel):
    lb = np.array([v.lb for v in model.variables], dtype=float)
    ub = np.array([v.ub for v in model.variables], dtype=float)
    return lb, ub


def _empty_outcome(model: LinearModel, with_duals: bool) -> SolveOutcome:
    for c in model.constraints:
        if (c.sense == "<=" and c.rhs < -FEAS_TOL) or (c.sense == ">=" and c.rhs > FEAS_TOL) or (
            c.sense == "==" and abs(c.rhs) > FEAS_TOL
        ):
            return SolveOutcome(INFEASIBLE, None, None, labels=model._labels)
    duals = np.zeros(model.n_constraints) if with_duals else None
    return SolveOutcome(OPTIMAL, 0.0, np.zeros(0), duals, np.zeros(0) if with_duals else None, 0.0, model._labels)


def _linprog(c, A, senses, rhs, lb, ub):
    """Dual simplex on ``min c x``; returns (status, x, obj, duals per row, reduced costs)."""
    le = np.flatnonzero(senses != 0)  # '<=' and '>=' rows
    eq = np.flatnonzero(senses == 0)
    sign = np.where(senses[le] == 2, -1.0, 1.0)
    A_ub = sparse.diags(sign) @ A[le] if le.size else None
    b_ub = sign * rhs[le] if le.size else None
    A_eq = A[eq] if eq.size else None
    b_eq = rhs[eq] if eq.size else None
    bounds = np.column_stack([np.where(np.isinf(lb), -np.inf, lb), np.where(np.isinf(ub), np.inf, ub)])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs-ds", options=_LP_OPTIONS)
    if res.status == 2:
        return INFEASIBLE, None, None, None, None
    if res.status == 3:
        return UNBOUNDED, None, None, None, None
    if res.status != 0:
        raise SolverError(f"LP solve failed (status {res.status}): {res.message}")
    duals = np.zeros(len(senses))
    if le.size:
        duals[le] = sign * res.ineqlin.marginals
    if eq.size:
        duals[eq] = res.eqlin.marginals
    rc = res.lower.marginals + res.upper.marginals
    return OPTIMAL, res.x, float(res.fun), duals, rc


def _sense_codes(model: LinearModel) -> np.ndarray:
    code = {"==": 0, "<=": 1, ">=": 2}
    return np.array([code[c.sense] for c in model.constraints], dtype=np.int8)


def solve_lp(model: LinearModel) -> SolveOutcome:
    """Solve the continuous relaxation of ``model`` and return primal and dual values."""
    t0 = time.perf_counter()
    if model.n_vars == 0:
        return _empty_outcome(model, with_duals=True)
    flip = -1.0 if model.sense == "max" else 1.0
    c = flip * model.cost_vector()
    rhs = np.array([k.rhs for k in model.constraints], dtype=float)
    lb, ub = _bounds(model)
    status, x, obj, duals, rc = _linprog(c, model.matrix(), _sense_codes(model), rhs, lb, ub)
    elapsed = time.perf_counter() - t0
    if status != OPTIMAL:
        return SolveOutcome(status, None, None, solve_time=elapsed, labels=model._labels)
    return SolveOutcome(OPTIMAL, flip * obj, x, flip * duals, flip * rc, elapsed, model._labels)


def solve_milp(model: LinearModel, time_limit: float | None = None, backend: str | None = None) -> SolveOutcome:
    """Solve ``model`` honouring integrality flags.

    On a time limit the best incumbent (if any) is returned with status
    ``time-limit``. No duals are produced when integer variables are present.
    """
    if not model.has_integers:
        return solve_lp(model)
    if model.n_vars == 0:
        return _empty_outcome(model, with_duals=False)
    backend = backend or default_backend()
    if backend == "highs":
        return _milp_highs(model, time_limit)
    if backend == "bnb":
        return _milp_bnb(model, time_limit)
    raise SolverError(f"unknown solver backend {backend!r}")


def _milp_highs(model: LinearModel, time_limit: float | None) -> SolveOutcome:
    t0 = time.perf_counter()
    flip = -1.0 if model.sense == "max" else 1.0
    c = flip * model.cost_vector()
    lb, ub = _bounds(model)
    integ = np.array([v.integer for v in model.variables], dtype=np.uint8)
    rhs = np.array([k.rhs for k in model.constraints], dtype=float)
    senses = _sense_codes(model)
    lo = np.where(senses == 1, -np.inf, rhs)
    hi = np.where(senses == 2, np.inf, rhs)
    constraints = [LinearConstraint(model.matrix(), lo, hi)] if model.n_constraints else []
    options = {"mip_rel_gap": 1e-7}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(c, integrality=integ, bounds=Bounds(lb, ub), constraints=constraints, options=options)
    elapsed = time.perf_counter() - t0
    if res.status == 0:
        return SolveOutcome(OPTIMAL, flip * float(res.fun), res.x, solve_time=elapsed, labels=model._labels)
    if res.status == 1:
        if res.x is None:
            return SolveOutcome(TIME_LIMIT, None, None, solve_time=elapsed, labels=model._labels)
        return SolveOutcome(TIME_LIMIT, flip * float(res.fun), res.x, solve_time=elapsed, labels=model._labels)
    if res.status == 2:
        return SolveOutcome(INFEASIBLE, None, None, solve_time=elapsed, labels=model._labels)
    if res.status == 3:
        return SolveOutcome(UNBOUNDED, None, None, solve_time=elapsed, labels=model._labels)
    raise SolverError(f"MILP solve failed (status {res.status}): {res.message}")


def _pruned(bound: float, incumbent: float) -> bool:
    if math.isinf(incumbent):
        return False
    return bound >= incumbent - 1e-9 * max(1.0, abs(incumbent))


def _milp_bnb(model: LinearModel, time_limit: float | None) -> SolveOutcome:
    t0 = time.perf_counter()
    flip = -1.0 if model.sense == "max" else 1.0
    c = flip * model.cost_vector()
    A = model.matrix()
    senses = _sense_codes(model)
    rhs = np.array([k.rhs for k in model.constraints], dtype=float)
    lb0, ub0 = _bounds(model)
    integ = np.flatnonzero([v.integer for v in model.variables])
    lb0[integ] = np.ceil(lb0[integ] - INT_TOL)
    ub0[integ] = np.floor(ub0[integ] + INT_TOL)

    best_x, best_obj = None, math.inf
    counter = 0
    status, x, obj, _, _ = _linprog(c, A, senses, rhs, lb0, ub0) if np.all(lb0 <= ub0) else (INFEASIBLE,) * 5
    if status == UNBOUNDED:
        return SolveOutcome(UNBOUNDED, None, None, solve_time=time.perf_counter() - t0, labels=model._labels)
    heap = []
    if status == OPTIMAL:
        heap.append((obj, counter, lb0, ub0, x))
    timed_out = False
    while heap:
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            timed_out = True
            break
        bound, _, lb, ub, x = heapq.heappop(heap)
        if _pruned(bound, best_obj):
            continue
        frac = np.abs(x[integ] - np.round(x[integ]))
        if frac.size == 0 or frac.max() <= INT_TOL:
            best_x, best_obj = x.copy(), bound
            best_x[integ] = np.round(best_x[integ])
            continue
        j = integ[int(np.argmax(frac))]
        for lo_j, hi_j in ((lb[j], math.floor(x[j])), (math.ceil(x[j]), ub[j])):
            if lo_j > hi_j:
                continue
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[j], ub2[j] = lo_j, hi_j
            st, x2, obj2, _, _ = _linprog(c, A, senses, rhs, lb2, ub2)
            if st == OPTIMAL and not _pruned(obj2, best_obj):
                counter += 1
                heapq.heappush(heap, (obj2, counter, lb2, ub2, x2))
    elapsed = time.perf_counter() - t0
    if timed_out:
        if best_x is None:
            return SolveOutcome(TIME_LIMIT, None, None, solve_time=elapsed, labels=model._labels)
        return SolveOutcome(TIME_LIMIT, flip * best_obj, best_x, solve_time=elapsed, labels=model._labels)
    if best_x is None:
        return SolveOutcome(INFEASIBLE, None, None, solve_time=elapsed, labels=model._labels)
    return SolveOutcome(OPTIMAL, flip * best_obj, best_x, solve_time=elapsed, labels=model._labels)

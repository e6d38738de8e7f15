"""Thin LP/MIP layer over HiGHS; the only third-party solver touchpoint.

Models are built sparsely with stable variable/constraint keys so callers can
read primal values and LP duals by key rather than by row order. All models
maximize; duals are reported in maximization convention (the derivative of the
optimum with respect to a constraint's right-hand side), which makes duals of
``<=`` rows nonnegative.

Two engines drive the same contracts: the HiGHS bindings bundled with scipy
(persistent models, warm re-solves after bound changes) and, as a fallback,
scipy's public ``linprog``/``milp`` wrappers. Set ``LINERIDE_SOLVER=scipy``
to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
TIME_LIMIT = "time_limit"
UNBOUNDED = "unbounded"

CONTINUOUS = "continuous"
BINARY = "binary"

_SENSES = ("<=", ">=", "=")

#: Backends that can report LP constraint duals. Column generation is
#: impossible without them, so anything else is rejected outright.
SUPPORTED_BACKENDS = ("highs",)


class BackendError(RuntimeError):
    """The underlying solver failed or was misused."""


def require_backend(name: str) -> str:
    if name not in SUPPORTED_BACKENDS:
        raise BackendError(
            f"backend {name!r} is unavailable or lacks LP dual support; choose from {SUPPORTED_BACKENDS}"
        )
    return name


_core = None
if os.environ.get("LINERIDE_SOLVER", "").lower() != "scipy":
    try:
        from scipy.optimize._highspy import _core  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on scipy build
        _core = None


def native_engine_active() -> bool:
    return _core is not None


@dataclass
class _Variable:
    index: int
    kind: str
    lb: float
    ub: float
    obj: float


@dataclass
class _Row:
    coeffs: dict
    sense: str
    rhs: float


@dataclass
class SolveResult:
    status: str
    objective: Optional[float] = None
    bound: Optional[float] = None
    values: Optional[dict] = None
    duals: Optional[dict] = None

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    def value(self, key) -> float:
        return self.values[key]


class Model:
    """A maximization LP/MILP assembled row by row with hashable keys."""

    def __init__(self, name: str = "model", time_limit: Optional[float] = None,
                 mip_gap: float = 0.0, threads: int = 1):
        self.name = name
        self.time_limit = time_limit
        self.mip_gap = mip_gap
        self.threads = threads
        self._vars: dict = {}
        self._rows: dict = {}

    def add_variable(self, key, kind: str = CONTINUOUS, lb: float = 0.0,
                     ub: Optional[float] = None, obj: float = 0.0):
        if key in self._vars:
            raise BackendError(f"variable {key!r} already declared")
        if kind not in (CONTINUOUS, BINARY):
            raise BackendError(f"unknown variable kind {kind!r}")
        upper = np.inf if ub is None else float(ub)
        if kind == BINARY and ub is None:
            upper = 1.0
        if lb > upper:
            raise BackendError(f"variable {key!r}: lb {lb} > ub {upper}")
        self._vars[key] = _Variable(len(self._vars), kind, float(lb), upper, float(obj))

    def set_bounds(self, key, lb: float, ub: float):
        var = self._vars[key]
        if lb > ub:
            raise BackendError(f"variable {key!r}: lb {lb} > ub {ub}")
        var.lb, var.ub = float(lb), float(ub)

    def fix_variable(self, key, value: float):
        self.set_bounds(key, value, value)

    def has_variable(self, key) -> bool:
        return key in self._vars

    def add_constraint(self, key, coeffs: Mapping, sense: str, rhs: float):
        if key in self._rows:
            raise BackendError(f"constraint {key!r} already declared")
        if sense not in _SENSES:
            raise BackendError(f"unknown constraint sense {sense!r}")
        unknown = [v for v in coeffs if v not in self._vars]
        if unknown:
            raise BackendError(f"constraint {key!r} references undeclared variables {unknown}")
        self._rows[key] = _Row(dict(coeffs), sense, float(rhs))

    @property
    def n_variables(self) -> int:
        return len(self._vars)

    @property
    def n_constraints(self) -> int:
        return len(self._rows)

    @property
    def variable_keys(self):
        return list(self._vars)

    def _assemble(self):
        nv = len(self._vars)
        obj = np.zeros(nv)
        lb = np.zeros(nv)
        ub = np.zeros(nv)
        integrality = np.zeros(nv)
        for key, var in self._vars.items():
            obj[var.index] = var.obj
            lb[var.index] = var.lb
            ub[var.index] = var.ub
            integrality[var.index] = 1.0 if var.kind == BINARY else 0.0
        rows_i, cols_i, data = [], [], []
        lower, upper, keys = [], [], []
        for i, (key, row) in enumerate(self._rows.items()):
            for var_key, coeff in row.coeffs.items():
                rows_i.append(i)
                cols_i.append(self._vars[var_key].index)
                data.append(float(coeff))
            if row.sense == "<=":
                lower.append(-np.inf)
                upper.append(row.rhs)
            elif row.sense == ">=":
                lower.append(row.rhs)
                upper.append(np.inf)
            else:
                lower.append(row.rhs)
                upper.append(row.rhs)
            keys.append(key)
        matrix = sparse.csr_matrix(
            (data, (rows_i, cols_i)), shape=(len(self._rows), nv)
        )
        return obj, lb, ub, integrality, matrix, np.array(lower), np.array(upper), keys


def _native_lp(obj, lb, ub, matrix, lower, upper, integrality=None):
    """Build a native HiGHS model (costs negated: HiGHS minimizes)."""
    csc = matrix.tocsc()
    lp = _core.HighsLp()
    lp.num_col_ = len(obj)
    lp.num_row_ = matrix.shape[0]
    lp.col_cost_ = -obj
    lp.col_lower_ = lb
    lp.col_upper_ = ub
    lp.row_lower_ = lower
    lp.row_upper_ = upper
    lp.a_matrix_.format_ = _core.MatrixFormat.kColwise
    lp.a_matrix_.start_ = csc.indptr
    lp.a_matrix_.index_ = csc.indices
    lp.a_matrix_.value_ = csc.data
    lp.sense_ = _core.ObjSense.kMinimize
    if integrality is not None and integrality.any():
        lp.integrality_ = [
            _core.HighsVarType.kInteger if flag else _core.HighsVarType.kContinuous
            for flag in integrality
        ]
    solver = _core._Highs()
    solver.setOptionValue("output_flag", False)
    solver.setOptionValue("threads", 1)
    solver.setOptionValue("random_seed", 0)
    solver.passModel(lp)
    return solver


def _native_status(solver) -> str:
    status = solver.getModelStatus()
    if status == _core.HighsModelStatus.kOptimal:
        return OPTIMAL
    if status == _core.HighsModelStatus.kInfeasible:
        return INFEASIBLE
    if status in (
        _core.HighsModelStatus.kUnbounded,
        _core.HighsModelStatus.kUnboundedOrInfeasible,
    ):
        return UNBOUNDED
    if status in (
        _core.HighsModelStatus.kTimeLimit,
        _core.HighsModelStatus.kIterationLimit,
    ):
        return TIME_LIMIT
    raise BackendError(f"solver stopped with status {status}")


class CompiledLP:
    """The continuous relaxation compiled once for repeated solving.

    Re-solving with per-call bound overrides skips model re-assembly and, on
    the native engine, warm-starts from the previous basis. That is the hot
    path of the tree search, where nodes differ only in branching fixings.
    """

    def __init__(self, model: Model):
        obj, lb, ub, integrality, matrix, lower, upper, keys = model._assemble()
        binary = integrality > 0.5
        lb[binary] = np.maximum(lb[binary], 0.0)
        ub[binary] = np.minimum(ub[binary], 1.0)
        self._obj = obj
        self._base_lb = lb
        self._base_ub = ub
        self._index = {key: var.index for key, var in model._vars.items()}
        self._keys = list(self._index)
        self._row_keys = keys
        self._overridden: list[int] = []
        self._costs_dirty = False
        if native_engine_active():
            self._solver = _native_lp(obj, lb, ub, matrix, lower, upper)
        else:
            self._solver = None
            self._prepare_scipy(matrix, lower, upper)

    def _prepare_scipy(self, matrix, lower, upper):
        finite_upper = np.isfinite(upper)
        finite_lower = np.isfinite(lower)
        eq_mask = finite_upper & finite_lower & (upper == lower)
        ub_mask = finite_upper & ~eq_mask
        lb_mask = finite_lower & ~eq_mask
        a_ub_parts, b_ub_parts = [], []
        if ub_mask.any():
            a_ub_parts.append(matrix[ub_mask])
            b_ub_parts.append(upper[ub_mask])
        if lb_mask.any():
            a_ub_parts.append(-matrix[lb_mask])
            b_ub_parts.append(-lower[lb_mask])
        self._a_ub = sparse.vstack(a_ub_parts) if a_ub_parts else None
        self._b_ub = np.concatenate(b_ub_parts) if b_ub_parts else None
        self._a_eq = matrix[eq_mask] if eq_mask.any() else None
        self._b_eq = upper[eq_mask] if eq_mask.any() else None
        self._n_ub_rows = int(ub_mask.sum())
        self._ub_keys = [k for k, m in zip(self._row_keys, ub_mask) if m]
        self._lb_keys = [k for k, m in zip(self._row_keys, lb_mask) if m]
        self._eq_keys = [k for k, m in zip(self._row_keys, eq_mask) if m]

    def solve(self, bound_overrides: Optional[Mapping] = None,
              objective: Optional[Mapping] = None) -> SolveResult:
        if self._solver is not None:
            return self._solve_native(bound_overrides, objective)
        return self._solve_scipy(bound_overrides, objective)

    def _solve_native(self, bound_overrides, objective) -> SolveResult:
        if self._overridden:
            indices = np.array(self._overridden, dtype=np.int32)
            self._solver.changeColsBounds(
                len(indices), indices, self._base_lb[indices], self._base_ub[indices]
            )
            self._overridden = []
        if bound_overrides:
            indices, lows, highs = [], [], []
            for key, (low, high) in bound_overrides.items():
                indices.append(self._index[key])
                lows.append(low)
                highs.append(high)
            order = np.argsort(indices)
            indices = np.array(indices, dtype=np.int32)[order]
            self._solver.changeColsBounds(
                len(indices), indices,
                np.array(lows)[order], np.array(highs)[order],
            )
            self._overridden = list(indices)
        if objective is not None:
            cost = self._obj.copy()
            for key, coeff in objective.items():
                cost[self._index[key]] = coeff
            self._solver.changeColsCost(len(cost), np.arange(len(cost), dtype=np.int32), -cost)
            self._costs_dirty = True
        elif self._costs_dirty:
            self._solver.changeColsCost(
                len(self._obj), np.arange(len(self._obj), dtype=np.int32), -self._obj
            )
            self._costs_dirty = False
        self._solver.run()
        status = _native_status(self._solver)
        if status != OPTIMAL:
            if status == TIME_LIMIT:
                raise BackendError("LP solve hit an unexpected limit")
            return SolveResult(status)
        solution = self._solver.getSolution()
        values = dict(zip(self._keys, solution.col_value))
        # HiGHS minimizes the negated objective; flipping its row duals gives
        # the maximization shadow prices.
        duals = {
            key: -float(dual) for key, dual in zip(self._row_keys, solution.row_dual)
        }
        objective = -float(self._solver.getInfo().objective_function_value)
        return SolveResult(OPTIMAL, objective=objective, bound=objective, values=values, duals=duals)

    def _solve_scipy(self, bound_overrides, objective=None) -> SolveResult:
        lb = self._base_lb
        ub = self._base_ub
        if bound_overrides:
            lb = lb.copy()
            ub = ub.copy()
            for key, (low, high) in bound_overrides.items():
                index = self._index[key]
                lb[index] = low
                ub[index] = high
        obj = self._obj
        if objective is not None:
            obj = obj.copy()
            for key, coeff in objective.items():
                obj[self._index[key]] = coeff
        res = linprog(
            c=-obj,
            A_ub=self._a_ub,
            b_ub=self._b_ub,
            A_eq=self._a_eq,
            b_eq=self._b_eq,
            bounds=np.column_stack([lb, ub]),
            method="highs",
        )
        if res.status == 2:
            return SolveResult(INFEASIBLE)
        if res.status == 3:
            return SolveResult(UNBOUNDED)
        if res.status != 0:
            raise BackendError(f"LP solve failed: {res.message}")
        values = dict(zip(self._keys, (float(v) for v in res.x)))
        duals = {}
        # scipy marginals are d(min obj)/d(rhs); negate for maximization
        # duals. Rows flipped from >= to <= pick up a second sign change.
        if self._a_ub is not None:
            marginals = res.ineqlin.marginals
            for key, marg in zip(self._ub_keys, marginals[: self._n_ub_rows]):
                duals[key] = -float(marg)
            for key, marg in zip(self._lb_keys, marginals[self._n_ub_rows:]):
                duals[key] = float(marg)
        if self._a_eq is not None:
            for key, marg in zip(self._eq_keys, res.eqlin.marginals):
                duals[key] = -float(marg)
        objective = -float(res.fun)
        return SolveResult(OPTIMAL, objective=objective, bound=objective, values=values, duals=duals)


def compile_lp(model: Model) -> CompiledLP:
    return CompiledLP(model)


class CompiledMIP:
    """An integer model compiled once and re-solved with swapped objectives.

    On the native engine the solver object persists and only the cost vector
    changes between runs; the fallback re-solves through scipy each time.
    """

    def __init__(self, model: Model, presolve: bool = True):
        obj, lb, ub, integrality, matrix, lower, upper, keys = model._assemble()
        self._mip_gap = model.mip_gap
        self._base = (obj, lb, ub, integrality, matrix, lower, upper)
        self._index = {key: var.index for key, var in model._vars.items()}
        self._keys = list(self._index)
        if native_engine_active():
            self._solver = _native_lp(obj, lb, ub, matrix, lower, upper, integrality)
            self._solver.setOptionValue("mip_rel_gap", model.mip_gap)
            if not presolve:
                # tiny models re-solved thousands of times go faster raw
                self._solver.setOptionValue("presolve", "off")
        else:
            self._solver = None

    def solve(self, objective: Optional[Mapping] = None,
              time_limit: Optional[float] = None) -> SolveResult:
        obj, lb, ub, integrality, matrix, lower, upper = self._base
        if objective is not None:
            obj = obj.copy()
            for key, coeff in objective.items():
                obj[self._index[key]] = coeff
        if self._solver is None:
            return _solve_mip_scipy(
                self._keys, self._mip_gap, obj, lb, ub, integrality, matrix, lower, upper, time_limit
            )
        if objective is not None:
            nv = len(obj)
            self._solver.changeColsCost(nv, np.arange(nv, dtype=np.int32), -obj)
        if time_limit is not None:
            self._solver.setOptionValue("time_limit", max(float(time_limit), 0.0))
        self._solver.run()
        status = _native_status(self._solver)
        if status in (INFEASIBLE, UNBOUNDED):
            return SolveResult(status)
        info = self._solver.getInfo()
        bound = None
        if np.isfinite(info.mip_dual_bound):
            bound = -float(info.mip_dual_bound)
        if info.primal_solution_status != _core.kSolutionStatusFeasible:
            return SolveResult(TIME_LIMIT, objective=None, bound=bound, values=None)
        values = dict(zip(self._keys, self._solver.getSolution().col_value))
        objective_value = -float(info.objective_function_value)
        if bound is None:
            bound = objective_value
        return SolveResult(status, objective=objective_value, bound=bound, values=values)


def compile_mip(model: Model, presolve: bool = True) -> CompiledMIP:
    return CompiledMIP(model, presolve=presolve)


def solve_lp(model: Model) -> SolveResult:
    """Solve the continuous relaxation and report primal values and duals.

    Binary variables are relaxed to their declared bounds clipped to [0, 1];
    continuous variables keep their bounds as given.
    """
    if model.n_variables == 0:
        return SolveResult(OPTIMAL, objective=0.0, bound=0.0, values={}, duals={})
    return CompiledLP(model).solve()


def solve_mip(model: Model, time_limit: Optional[float] = None) -> SolveResult:
    """Solve with integrality; on time limit, return the incumbent and bound."""
    if model.n_variables == 0:
        return SolveResult(OPTIMAL, objective=0.0, bound=0.0, values={}, duals=None)
    limit = time_limit if time_limit is not None else model.time_limit
    obj, lb, ub, integrality, matrix, lower, upper, _ = model._assemble()
    if native_engine_active():
        return _solve_mip_native(model, obj, lb, ub, integrality, matrix, lower, upper, limit)
    return _solve_mip_scipy(
        list(model._vars), model.mip_gap, obj, lb, ub, integrality, matrix, lower, upper, limit
    )


def _solve_mip_native(model, obj, lb, ub, integrality, matrix, lower, upper, limit) -> SolveResult:
    solver = _native_lp(obj, lb, ub, matrix, lower, upper, integrality)
    solver.setOptionValue("mip_rel_gap", model.mip_gap)
    if limit is not None:
        solver.setOptionValue("time_limit", max(float(limit), 0.0))
    solver.run()
    status = _native_status(solver)
    if status in (INFEASIBLE, UNBOUNDED):
        return SolveResult(status)
    info = solver.getInfo()
    bound = None
    if np.isfinite(info.mip_dual_bound):
        bound = -float(info.mip_dual_bound)
    if info.primal_solution_status != _core.kSolutionStatusFeasible:
        return SolveResult(TIME_LIMIT, objective=None, bound=bound, values=None)
    values = dict(zip(model._vars, solver.getSolution().col_value))
    objective = -float(info.objective_function_value)
    if bound is None:
        bound = objective
    return SolveResult(status, objective=objective, bound=bound, values=values)


def _solve_mip_scipy(keys, mip_gap, obj, lb, ub, integrality, matrix, lower, upper, limit) -> SolveResult:
    options = {"mip_rel_gap": mip_gap}
    if limit is not None:
        options["time_limit"] = max(float(limit), 0.0)
    constraints = (
        LinearConstraint(matrix, lower, upper) if matrix.shape[0] else ()
    )
    res = milp(
        c=-obj,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options=options,
    )
    if res.status == 2:
        return SolveResult(INFEASIBLE)
    if res.status == 3:
        return SolveResult(UNBOUNDED)
    if res.status not in (0, 1):
        raise BackendError(f"MIP solve failed: {res.message}")
    bound = None
    if res.mip_dual_bound is not None and np.isfinite(res.mip_dual_bound):
        bound = -float(res.mip_dual_bound)
    if res.x is None:
        return SolveResult(TIME_LIMIT, objective=None, bound=bound, values=None)
    values = dict(zip(keys, (float(v) for v in res.x)))
    objective = -float(res.fun)
    status = OPTIMAL if res.status == 0 else TIME_LIMIT
    if bound is None:
        bound = objective
    return SolveResult(status, objective=objective, bound=bound, values=values)


def write_lp(model: Model, path: str):
    """Dump the model in LP text format for debugging."""
    names = {key: f"v{var.index}" for key, var in model._vars.items()}

    def term(coeff, key):
        sign = "+" if coeff >= 0 else "-"
        return f"{sign} {abs(coeff):.17g} {names[key]}"

    lines = ["Maximize", " obj: " + " ".join(
        term(var.obj, key) for key, var in model._vars.items() if var.obj
    )]
    lines.append("Subject To")
    for i, (key, row) in enumerate(model._rows.items()):
        expr = " ".join(term(c, k) for k, c in row.coeffs.items())
        op = {"<=": "<=", ">=": ">=", "=": "="}[row.sense]
        lines.append(f" c{i}: {expr} {op} {row.rhs:.17g}  \\ {key}")
    lines.append("Bounds")
    for key, var in model._vars.items():
        upper = "+inf" if np.isinf(var.ub) else f"{var.ub:.17g}"
        lines.append(f" {var.lb:.17g} <= {names[key]} <= {upper}")
    binaries = [names[key] for key, var in model._vars.items() if var.kind == BINARY]
    if binaries:
        lines.append("Binary")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")

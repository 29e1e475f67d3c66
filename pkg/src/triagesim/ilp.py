"""Generic 0-1 integer linear programming: representation, exact solver, LP export.

The solver is a depth-first branch-and-bound with constraint propagation
and an LP-free bound: remaining objective mass, tightened over packing
("at most one of these") constraints. Instances here are desk scale, so
no simplex machinery is needed; the LP text export exists for plugging in
an external MILP solver on larger replays.

Tie-breaking between optima is deterministic: variables are branched in
declaration order with the 1-branch first, so the first optimum found is
the one setting the earliest-declared variables. Callers order variables
to encode their preference (earliest start day, lowest slot, developer
order for triage programs).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

EPS = 1e-9

LE = "<="
GE = ">="
EQ = "="


class MalformedProgramError(ValueError):
    pass


class CoverageError(ValueError):
    """An assignment handed to verify() does not cover every variable."""


@dataclass
class Constraint:
    coeffs: Dict[int, float]
    op: str
    rhs: float


class BinaryProgram:
    """A maximize-objective 0-1 program over labelled binary variables."""

    def __init__(self) -> None:
        self.labels: List[str] = []
        self.objective: List[float] = []
        self.constraints: List[Constraint] = []

    @property
    def num_vars(self) -> int:
        return len(self.labels)

    def add_var(self, label: str, objective: float = 0.0) -> int:
        if not (objective == objective and abs(objective) != float("inf")):
            raise MalformedProgramError(f"non-finite objective for {label}")
        self.labels.append(label)
        self.objective.append(float(objective))
        return len(self.labels) - 1

    def add_constraint(self, coeffs: Dict[int, float], op: str, rhs: float) -> int:
        if op not in (LE, GE, EQ):
            raise MalformedProgramError(f"bad comparator {op!r}")
        for idx in coeffs:
            if not 0 <= idx < len(self.labels):
                raise MalformedProgramError(f"constraint references unknown var {idx}")
        self.constraints.append(Constraint(dict(coeffs), op, float(rhs)))
        return len(self.constraints) - 1

    # -- LP text export --------------------------------------------------

    def to_lp_text(self) -> str:
        """Export in LP file format (objective / constraints / binaries)."""

        def term(c: float, i: int) -> str:
            sign = "+" if c >= 0 else "-"
            return f"{sign} {abs(c):.12g} x{i}"

        lines = ["Maximize", " obj: " + " ".join(
            term(c, i) for i, c in enumerate(self.objective) if c != 0.0
        ).lstrip("+ ") or " obj: 0 x0"]
        lines.append("Subject To")
        opmap = {LE: "<=", GE: ">=", EQ: "="}
        for k, con in enumerate(self.constraints):
            body = " ".join(term(c, i) for i, c in sorted(con.coeffs.items())).lstrip("+ ")
            lines.append(f" c{k}: {body} {opmap[con.op]} {con.rhs:.12g}")
        lines.append("Binaries")
        lines.append(" " + " ".join(f"x{i}" for i in range(self.num_vars)))
        lines.append("End")
        return "\n".join(lines) + "\n"


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    TIMEOUT_BEST_FEASIBLE = "timeout_best_feasible"


@dataclass
class SolveResult:
    status: SolveStatus
    assignment: Optional[List[int]]
    objective: float
    nodes_explored: int
    wall_time: float
    has_incumbent: bool = True


def verify(program: BinaryProgram, assignment: Sequence[int]) -> Tuple[bool, Optional[int]]:
    """Check every constraint; returns (ok, index of first violated constraint)."""
    if len(assignment) != program.num_vars:
        raise CoverageError(
            f"assignment covers {len(assignment)} of {program.num_vars} variables"
        )
    for k, con in enumerate(program.constraints):
        lhs = sum(c * assignment[i] for i, c in con.coeffs.items())
        if con.op == LE and lhs > con.rhs + EPS:
            return False, k
        if con.op == GE and lhs < con.rhs - EPS:
            return False, k
        if con.op == EQ and abs(lhs - con.rhs) > EPS:
            return False, k
    return True, None


def parse_solution_text(text: str, program: BinaryProgram) -> List[int]:
    """Parse "x<i> <0|1>" lines from an external solver and size-check them."""
    values = [0] * program.num_vars
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, raw = line.split()
        idx = int(name.lstrip("x"))
        values[idx] = int(round(float(raw)))
    return values


class _Solver:
    """One solve() invocation. Constraints are normalized to <= form."""

    def __init__(self, program: BinaryProgram, node_budget: int, time_budget: Optional[float]):
        self.n = program.num_vars
        self.obj = program.objective
        self.node_budget = node_budget
        self.time_budget = time_budget
        self.t0 = time.monotonic()
        self.nodes = 0

        # normalized rows: (var indices, coeffs, rhs)
        self.rows: List[Tuple[List[int], List[float], float]] = []
        for con in program.constraints:
            idxs = list(con.coeffs)
            cs = [con.coeffs[i] for i in idxs]
            if con.op in (LE, EQ):
                self.rows.append((idxs, cs, con.rhs))
            if con.op in (GE, EQ):
                self.rows.append((idxs, [-c for c in cs], -con.rhs))

        self.var_rows: List[List[Tuple[int, float]]] = [[] for _ in range(self.n)]
        for r, (idxs, cs, _) in enumerate(self.rows):
            for i, c in zip(idxs, cs):
                self.var_rows[i].append((r, c))

        # slack[r] = rhs - lhs(fixed); minadd[r] = sum of negative coeffs of free vars
        self.slack = [rhs for _, _, rhs in self.rows]
        self.minadd = [sum(c for c in cs if c < 0) for _, cs, _ in self.rows]
        self.value = [-1] * self.n  # -1 free

        # packing rows (sum of 1-coeff vars <= 1) give the tightened bound;
        # each variable belongs to at most one covering row
        self.clique_of = [-1] * self.n
        self.cliques: List[List[int]] = []
        for idxs, cs, rhs in self.rows:
            if rhs == 1 and all(c == 1 for c in cs) and len(idxs) > 1:
                members = [i for i in idxs if self.clique_of[i] < 0]
                if len(members) > 1:
                    cid = len(self.cliques)
                    self.cliques.append(members)
                    for i in members:
                        self.clique_of[i] = cid

        self.incumbent: Optional[List[int]] = None
        self.incumbent_obj = float("-inf")
        self.stopped = False

    # -- propagation with an undo trail ----------------------------------

    def _fix(self, var: int, val: int, trail: List[int]) -> bool:
        """Fix a variable and propagate row consequences to a fixpoint."""
        queue: List[int] = []
        if not self._fix_inner(var, val, trail, queue):
            return False
        while queue:
            v = queue.pop()
            for r, _ in self.var_rows[v]:
                if not self._check_row(r, trail, queue):
                    return False
        return True

    def _check_row(self, r: int, trail: List[int], queue: List[int]) -> bool:
        slack = self.slack[r]
        minadd = self.minadd[r]
        if minadd > slack + EPS:
            return False
        idxs, cs, _ = self.rows[r]
        for i, c in zip(idxs, cs):
            if self.value[i] >= 0:
                continue
            if c > 0:
                # taking i cannot be compensated by the other free vars
                if c + (minadd - min(0.0, c)) > slack + EPS:
                    if not self._fix_inner(i, 0, trail, queue):
                        return False
                    slack = self.slack[r]
                    minadd = self.minadd[r]
            else:
                # leaving i at 0 makes the row unsatisfiable
                if (minadd - c) > slack + EPS:
                    if not self._fix_inner(i, 1, trail, queue):
                        return False
                    slack = self.slack[r]
                    minadd = self.minadd[r]
        return True

    def _fix_inner(self, var: int, val: int, trail: List[int], queue: List[int]) -> bool:
        if self.value[var] >= 0:
            return self.value[var] == val
        self.value[var] = val
        trail.append(var)
        for r, c in self.var_rows[var]:
            if val == 1:
                self.slack[r] -= c
            if c < 0:
                self.minadd[r] -= c
        queue.append(var)
        return True

    def _undo(self, trail: List[int], mark: int) -> None:
        while len(trail) > mark:
            var = trail.pop()
            val = self.value[var]
            self.value[var] = -1
            for r, c in self.var_rows[var]:
                if val == 1:
                    self.slack[r] += c
                if c < 0:
                    self.minadd[r] += c

    # -- bound ------------------------------------------------------------

    def _bound(self) -> float:
        fixed = 0.0
        clique_best = [0.0] * len(self.cliques)
        loose = 0.0
        for i in range(self.n):
            v = self.value[i]
            c = self.obj[i]
            if v == 1:
                fixed += c
            elif v < 0 and c > 0:
                cid = self.clique_of[i]
                if cid >= 0:
                    if c > clique_best[cid]:
                        clique_best[cid] = c
                else:
                    loose += c
        return fixed + loose + sum(clique_best)

    # -- search -----------------------------------------------------------

    def _out_of_budget(self) -> bool:
        if self.nodes >= self.node_budget:
            return True
        if self.time_budget is not None and self.nodes % 256 == 0:
            if time.monotonic() - self.t0 > self.time_budget:
                return True
        return False

    def _dfs(self, depth_var: int, trail: List[int]) -> None:
        if self.stopped:
            return
        self.nodes += 1
        if self._out_of_budget():
            self.stopped = True
            return

        var = depth_var
        while var < self.n and self.value[var] >= 0:
            var += 1
        if var == self.n:
            obj = sum(c for c, v in zip(self.obj, self.value) if v == 1)
            if obj > self.incumbent_obj + EPS:
                self.incumbent_obj = obj
                self.incumbent = list(self.value)
            return

        if self.incumbent is not None and self._bound() <= self.incumbent_obj + EPS:
            return

        for val in (1, 0):
            mark = len(trail)
            if self._fix(var, val, trail):
                self._dfs(var + 1, trail)
            self._undo(trail, mark)
            if self.stopped:
                return

    def run(self) -> SolveResult:
        trail: List[int] = []
        root_ok = True
        queue: List[int] = []
        for r in range(len(self.rows)):
            if not self._check_row(r, trail, queue):
                root_ok = False
                break
        while root_ok and queue:
            v = queue.pop()
            for r, _ in self.var_rows[v]:
                if not self._check_row(r, trail, queue):
                    root_ok = False
                    break

        if root_ok:
            self._dfs(0, trail)

        wall = time.monotonic() - self.t0
        if self.incumbent is None:
            if self.stopped:
                return SolveResult(
                    SolveStatus.TIMEOUT_BEST_FEASIBLE, None, float("-inf"),
                    self.nodes, wall, has_incumbent=False,
                )
            return SolveResult(
                SolveStatus.INFEASIBLE, None, float("-inf"), self.nodes, wall,
                has_incumbent=False,
            )
        status = SolveStatus.TIMEOUT_BEST_FEASIBLE if self.stopped else SolveStatus.OPTIMAL
        return SolveResult(status, self.incumbent, self.incumbent_obj, self.nodes, wall)


def solve(
    program: BinaryProgram,
    node_budget: int = 5_000_000,
    time_budget: Optional[float] = None,
) -> SolveResult:
    """Exact optimum of a 0-1 program within the given budgets.

    Past budget, the best incumbent so far is returned with a timeout
    status; ``has_incumbent`` is False when not even one feasible point
    was reached.
    """
    if program.num_vars == 0:
        return SolveResult(SolveStatus.OPTIMAL, [], 0.0, 0, 0.0)
    return _Solver(program, node_budget, time_budget).run()


def brute_force(program: BinaryProgram) -> Tuple[float, Optional[List[int]]]:
    """Exhaustive 2^n enumeration; the independent oracle for solver tests."""
    n = program.num_vars
    best: Optional[List[int]] = None
    best_obj = float("-inf")
    for mask in range(1 << n):
        assignment = [(mask >> i) & 1 for i in range(n)]
        ok, _ = verify(program, assignment)
        if ok:
            obj = sum(c * v for c, v in zip(program.objective, assignment))
            if obj > best_obj + EPS:
                best_obj = obj
                best = assignment
    return best_obj, best

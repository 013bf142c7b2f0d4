"""A small deterministic CDCL satisfiability solver.

Complete within a decision budget: `solve` returns True/False, or None
when the budget is exhausted (the search engine surfaces that as an
abandoned analysis rather than guessing).  Watched literals, 1UIP
learning, VSIDS-style activities, phase saving, geometric restarts.
"""

from __future__ import annotations


class Solver:
    def __init__(self):
        self.nvars = 0
        self.clauses = []  # each a list of lits; first two are watched
        self.watches = {}  # lit -> clause indices watching it
        self.assign = [0]  # var -> 0 unassigned, 1 true, -1 false
        self.level = [0]
        self.reason = [None]
        self.phase = [False]
        self.activity = [0.0]
        self.var_inc = 1.0
        self.trail = []
        self.trail_lim = []
        self.prop_head = 0
        self.unsat = False

    # -- construction ------------------------------------------------------

    def new_var(self) -> int:
        self.nvars += 1
        self.assign.append(0)
        self.level.append(0)
        self.reason.append(None)
        self.phase.append(False)
        self.activity.append(0.0)
        return self.nvars

    def _value(self, lit: int) -> int:
        v = self.assign[abs(lit)]
        return v if lit > 0 else -v

    def add_clause(self, lits) -> None:
        if self.unsat:
            return
        seen = set()
        clause = []
        for lit in lits:
            if -lit in seen:
                return  # tautology
            if lit in seen:
                continue
            seen.add(lit)
            if self._value(lit) == 1 and self.level[abs(lit)] == 0:
                return  # satisfied at top level
            if self._value(lit) == -1 and self.level[abs(lit)] == 0:
                continue  # falsified at top level
            clause.append(lit)
        if not clause:
            self.unsat = True
            return
        if len(clause) == 1:
            if not self._enqueue(clause[0], None):
                self.unsat = True
            elif self._propagate() is not None:
                self.unsat = True
            return
        ci = len(self.clauses)
        self.clauses.append(clause)
        for lit in clause[:2]:
            self.watches.setdefault(lit, []).append(ci)

    # -- core --------------------------------------------------------------

    def _enqueue(self, lit: int, reason) -> bool:
        val = self._value(lit)
        if val == 1:
            return True
        if val == -1:
            return False
        v = abs(lit)
        self.assign[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.phase[v] = lit > 0
        self.trail.append(lit)
        return True

    def _propagate(self):
        """Returns a conflicting clause (list of lits) or None."""
        while self.prop_head < len(self.trail):
            p = self.trail[self.prop_head]
            self.prop_head += 1
            false_lit = -p
            watchers = self.watches.get(false_lit, [])
            i = 0
            while i < len(watchers):
                ci = watchers[i]
                clause = self.clauses[ci]
                if clause[0] == false_lit:
                    clause[0], clause[1] = clause[1], clause[0]
                other = clause[0]
                if self._value(other) == 1:
                    i += 1
                    continue
                moved = False
                for k in range(2, len(clause)):
                    if self._value(clause[k]) != -1:
                        clause[1], clause[k] = clause[k], clause[1]
                        self.watches.setdefault(clause[1], []).append(ci)
                        watchers[i] = watchers[-1]
                        watchers.pop()
                        moved = True
                        break
                if moved:
                    continue
                # clause is unit or conflicting on `other`
                if not self._enqueue(other, clause):
                    return clause
                i += 1
        return None

    def _bump(self, v: int):
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for i in range(1, self.nvars + 1):
                self.activity[i] *= 1e-100
            self.var_inc *= 1e-100

    def _analyze(self, conflict):
        learnt = []
        seen = [False] * (self.nvars + 1)
        counter = 0
        p = None
        cl = conflict
        idx = len(self.trail) - 1
        cur_level = len(self.trail_lim)
        while True:
            for q in cl:
                if p is not None and abs(q) == abs(p):
                    continue
                v = abs(q)
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self._bump(v)
                    if self.level[v] == cur_level:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[abs(self.trail[idx])]:
                idx -= 1
            p = self.trail[idx]
            cl = self.reason[abs(p)] or []
            seen[abs(p)] = False
            counter -= 1
            idx -= 1
            if counter == 0:
                break
        learnt.insert(0, -p)
        if len(learnt) == 1:
            back_level = 0
        else:
            back_level = max(self.level[abs(q)] for q in learnt[1:])
            # put a literal of back_level in the second watch position
            for k in range(1, len(learnt)):
                if self.level[abs(learnt[k])] == back_level:
                    learnt[1], learnt[k] = learnt[k], learnt[1]
                    break
        return learnt, back_level

    def _cancel_until(self, lvl: int):
        while len(self.trail_lim) > lvl:
            bound = self.trail_lim.pop()
            while len(self.trail) > bound:
                lit = self.trail.pop()
                self.assign[abs(lit)] = 0
                self.reason[abs(lit)] = None
            self.prop_head = min(self.prop_head, len(self.trail))

    def _decide(self) -> int:
        best = 0
        best_act = -1.0
        for v in range(1, self.nvars + 1):
            if self.assign[v] == 0 and self.activity[v] > best_act:
                best = v
                best_act = self.activity[v]
        if best == 0:
            return 0
        return best if self.phase[best] else -best

    def solve(self, assumptions=(), max_decisions=None):
        """True = satisfiable, False = unsatisfiable, None = budget hit."""
        if self.unsat:
            return False
        self._cancel_until(0)
        if self._propagate() is not None:
            self.unsat = True
            return False
        for lit in assumptions:
            self.trail_lim.append(len(self.trail))
            if not self._enqueue(lit, None) or self._propagate() is not None:
                self._cancel_until(0)
                return False
        base_level = len(self.trail_lim)
        decisions = 0
        conflicts = 0
        restart_limit = 128
        while True:
            conflict = self._propagate()
            if conflict is not None:
                conflicts += 1
                if len(self.trail_lim) == base_level:
                    self._cancel_until(0)
                    return False
                learnt, back_level = self._analyze(conflict)
                self._cancel_until(max(back_level, base_level))
                if len(learnt) == 1:
                    if not self._enqueue(learnt[0], None):
                        self._cancel_until(0)
                        return False
                else:
                    ci = len(self.clauses)
                    self.clauses.append(learnt)
                    for lit in learnt[:2]:
                        self.watches.setdefault(lit, []).append(ci)
                    self._enqueue(learnt[0], learnt)
                self.var_inc /= 0.95
                if conflicts >= restart_limit:
                    conflicts = 0
                    restart_limit = int(restart_limit * 1.5)
                    self._cancel_until(base_level)
            else:
                lit = self._decide()
                if lit == 0:
                    model = {v: self.assign[v] == 1 for v in range(1, self.nvars + 1)}
                    self._model = model
                    self._cancel_until(0)
                    return True
                if max_decisions is not None and decisions >= max_decisions:
                    self._cancel_until(0)
                    return None
                decisions += 1
                self.trail_lim.append(len(self.trail))
                self._enqueue(lit, None)

    def model(self) -> dict:
        return self._model

"""Embedded CDCL SAT solver.

Conflict-driven clause learning with two-watched-literal propagation,
1UIP learning, VSIDS-style activities, phase saving, Luby restarts and
chronological backtracking: after a conflict at level d the solver returns
to level d-1 (never past the learned clause's assertion level), which keeps
still-valid partial assignments alive between nearby conflicts.

The solver is incremental: clauses may be added between `solve` calls and
each call may carry assumption literals.  No preprocessing is done.
"""
from __future__ import annotations

import time
from heapq import heappush, heappop

SAT = "SAT"
UNSAT = "UNSAT"
TIMEOUT = "TIMEOUT"


def luby(i):
    """Luby restart sequence, 0-indexed: 1 1 2 1 1 2 4 1 1 2 1 1 2 4 8 ..."""
    size, seq = 1, 0
    while size < i + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != i:
        size = (size - 1) >> 1
        seq -= 1
        i %= size
    return 1 << seq


class Solver:
    def __init__(self, phase_saving=True, static_order=False):
        self.phase_saving = phase_saving
        # static order: decide in reverse creation order, no activity bumping,
        # so incremental re-solves replay near-identical assignments
        self.static_order = static_order
        self._vkey = -1 if static_order else 1
        self.nvars = 0
        self.values = [0]          # var -> 0 unassigned / 1 true / -1 false
        self.levels = [0]
        self.reasons = [None]
        self.saved = [False]       # phase saving
        self.activity = [0.0]
        self.var_inc = 1.0
        self.watches = {}          # lit -> list of clauses watching it
        self.trail = []
        self.trail_lim = []        # start index of each decision level
        self.qhead = 0
        self.learnts = []
        self.root_unsat = False
        self.order = []            # lazy max-heap of (-activity, -var); stale entries skipped
        self.constrained = set()   # vars that occur in some clause; others never decided
        self.decisions = 0
        self.conflicts = 0
        self.propagations = 0

    # ------------------------------------------------------------ setup

    def new_var(self):
        self.nvars += 1
        self.values.append(0)
        self.levels.append(0)
        self.reasons.append(None)
        self.saved.append(False)
        self.activity.append(0.0)
        heappush(self.order, (0.0, self._vkey * self.nvars))
        return self.nvars

    def ensure_vars(self, n):
        while self.nvars < n:
            self.new_var()

    def value(self, lit):
        v = self.values[lit if lit > 0 else -lit]
        if v == 0:
            return None
        return (v > 0) == (lit > 0)

    def add_clause(self, lits):
        """Add a clause; only legal between solves (decision level 0).

        Simplifies against the root-level assignment: satisfied clauses are
        dropped, false literals removed.  Returns False if the formula is
        unsatisfiable at root level.
        """
        assert not self.trail_lim, "add_clause during search"
        if self.root_unsat:
            return False
        out = []
        seen = set()
        for l in lits:
            self.ensure_vars(abs(l))
            v = self.value(l)
            if v is True:
                return True
            if v is False:
                continue
            if -l in seen:
                return True
            if l not in seen:
                seen.add(l)
                out.append(l)
        if not out:
            self.root_unsat = True
            return False
        for l in out:
            self.constrained.add(l if l > 0 else -l)
        if len(out) == 1:
            self._enqueue(out[0], None)
            return True
        self._attach(out)
        return True

    def _attach(self, clause):
        self.watches.setdefault(clause[0], []).append(clause)
        self.watches.setdefault(clause[1], []).append(clause)

    # ------------------------------------------------------------ trail

    def _enqueue(self, lit, reason):
        var = lit if lit > 0 else -lit
        self.values[var] = 1 if lit > 0 else -1
        self.levels[var] = len(self.trail_lim)
        self.reasons[var] = reason
        if self.phase_saving and reason is None:
            self.saved[var] = lit > 0
        self.trail.append(lit)

    def _backtrack(self, level):
        if len(self.trail_lim) <= level:
            return
        start = self.trail_lim[level]
        for lit in reversed(self.trail[start:]):
            var = lit if lit > 0 else -lit
            self.values[var] = 0
            self.reasons[var] = None
            heappush(self.order, (-self.activity[var], self._vkey * var))
        del self.trail[start:]
        del self.trail_lim[level:]
        self.qhead = min(self.qhead, len(self.trail))

    def _propagate(self):
        while self.qhead < len(self.trail):
            p = self.trail[self.qhead]
            self.qhead += 1
            self.propagations += 1
            wl = self.watches.get(-p)
            if not wl:
                continue
            keep = []
            values = self.values
            for ci, c in enumerate(wl):
                if c[0] == -p:
                    c[0], c[1] = c[1], c[0]
                first = c[0]
                fv = values[first if first > 0 else -first]
                if fv != 0 and (fv > 0) == (first > 0):
                    keep.append(c)
                    continue
                for i in range(2, len(c)):
                    l = c[i]
                    lv = values[l if l > 0 else -l]
                    if lv == 0 or (lv > 0) == (l > 0):
                        c[1], c[i] = c[i], c[1]
                        self.watches.setdefault(c[1], []).append(c)
                        break
                else:
                    keep.append(c)
                    if fv != 0:
                        # conflict: keep the remaining watchers and bail out
                        keep.extend(wl[ci + 1:])
                        self.watches[-p] = keep
                        return c
                    self._enqueue(first, c)
            self.watches[-p] = keep
        return None

    # ------------------------------------------------------------ analysis

    def _bump(self, var):
        if self.static_order:
            return
        self.activity[var] += self.var_inc
        if self.activity[var] > 1e100:
            inv = 1e-100
            for v in range(1, self.nvars + 1):
                self.activity[v] *= inv
            self.var_inc *= inv
            self.order = [(-self.activity[self._vkey * nv], nv) for _, nv in self.order]
            self.order.sort()
        elif self.values[var] == 0:
            heappush(self.order, (-self.activity[var], self._vkey * var))

    def _analyze(self, conflict):
        """1UIP conflict analysis at the current decision level."""
        level = len(self.trail_lim)
        learnt = []
        seen = set()
        counter = 0
        for q in conflict:
            var = q if q > 0 else -q
            if var not in seen and self.levels[var] > 0:
                seen.add(var)
                self._bump(var)
                if self.levels[var] == level:
                    counter += 1
                else:
                    learnt.append(q)
        idx = len(self.trail) - 1
        while True:
            while True:
                lit = self.trail[idx]
                var = lit if lit > 0 else -lit
                if var in seen and self.levels[var] == level:
                    break
                idx -= 1
            p = self.trail[idx]
            pvar = p if p > 0 else -p
            idx -= 1
            seen.discard(pvar)
            counter -= 1
            if counter == 0:
                break
            for q in self.reasons[pvar]:
                var = q if q > 0 else -q
                if var != pvar and var not in seen and self.levels[var] > 0:
                    seen.add(var)
                    self._bump(var)
                    if self.levels[var] == level:
                        counter += 1
                    else:
                        learnt.append(q)
        return [-p] + learnt

    # ------------------------------------------------------------ search

    def _pick_var(self):
        order = self.order
        values = self.values
        constrained = self.constrained
        while order:
            neg_act, nv = heappop(order)
            v = self._vkey * nv
            # stale entries carry an outdated activity or an assigned var
            if values[v] == 0 and v in constrained and -neg_act == self.activity[v]:
                return v
        for v in constrained:
            if values[v] == 0:
                return v
        return 0

    def _reduce_db(self):
        self.learnts.sort(key=len)
        keep = []
        locked = set()
        for lit in self.trail:
            r = self.reasons[lit if lit > 0 else -lit]
            if r is not None:
                locked.add(id(r))
        half = len(self.learnts) // 2
        for i, c in enumerate(self.learnts):
            if i < half or len(c) <= 3 or id(c) in locked:
                keep.append(c)
            else:
                for w in (c[0], c[1]):
                    wl = self.watches.get(w)
                    if wl is not None:
                        try:
                            wl.remove(c)
                        except ValueError:
                            pass
        self.learnts = keep

    def solve(self, assumptions=(), max_conflicts=None, deadline=None):
        """Search under the given assumption literals.

        Returns (status, model) where model is a list indexed by var
        (index 0 unused) of booleans, or None unless status is SAT.
        """
        if self.root_unsat:
            return UNSAT, None
        self._backtrack(0)
        if self._propagate() is not None:
            self.root_unsat = True
            return UNSAT, None
        assumptions = list(assumptions)
        conflict_count = 0
        restart_num = 0
        restart_budget = 64 * luby(restart_num)
        learnt_cap = 4000

        while True:
            conflict = self._propagate()
            if conflict is not None:
                self.conflicts += 1
                conflict_count += 1
                if conflict_count % 256 == 0 and deadline and time.monotonic() > deadline:
                    self._backtrack(0)
                    return TIMEOUT, None
                if max_conflicts is not None and conflict_count > max_conflicts:
                    self._backtrack(0)
                    return TIMEOUT, None
                top = max(self.levels[l if l > 0 else -l] for l in conflict)
                if top == 0:
                    self.root_unsat = True
                    return UNSAT, None
                if top < len(self.trail_lim):
                    self._backtrack(top)
                learnt = self._analyze(conflict)
                self.var_inc /= 0.95
                if len(learnt) == 1:
                    self._backtrack(0)
                    if self.value(learnt[0]) is False:
                        self.root_unsat = True
                        return UNSAT, None
                    if self.value(learnt[0]) is None:
                        self._enqueue(learnt[0], None)
                else:
                    # chronological step: drop exactly one level; the learnt
                    # clause is unit there since only its head was unassigned
                    self._backtrack(len(self.trail_lim) - 1)
                    self._attach(learnt)
                    self.learnts.append(learnt)
                    if self.value(learnt[0]) is None:
                        self._enqueue(learnt[0], learnt)
                if len(self.learnts) > learnt_cap:
                    self._reduce_db()
                    learnt_cap += 500
                continue

            if conflict_count >= restart_budget:
                if deadline and time.monotonic() > deadline:
                    self._backtrack(0)
                    return TIMEOUT, None
                restart_num += 1
                restart_budget = conflict_count + 64 * luby(restart_num)
                self._backtrack(0)
                continue

            # re-establish assumptions, one pseudo-decision level each
            level = len(self.trail_lim)
            if level < len(assumptions):
                a = assumptions[level]
                v = self.value(a)
                if v is False:
                    self._backtrack(0)
                    return UNSAT, None
                self.trail_lim.append(len(self.trail))
                if v is None:
                    self._enqueue(a, None)
                continue

            var = self._pick_var()
            if var == 0:
                model = [False] + [self.values[v] > 0 for v in range(1, self.nvars + 1)]
                self._backtrack(0)
                return SAT, model
            self.decisions += 1
            if self.decisions % 4096 == 0 and deadline and time.monotonic() > deadline:
                self._backtrack(0)
                return TIMEOUT, None
            self.trail_lim.append(len(self.trail))
            self._enqueue(var if self.saved[var] else -var, None)

    def stats(self):
        return {
            "decisions": self.decisions,
            "conflicts": self.conflicts,
            "propagations": self.propagations,
            "vars": self.nvars,
            "learnts": len(self.learnts),
        }

"""Reference DPLL solver with a DIMACS command-line interface.

Runs as ``python -m lockbench.extsolver file.cnf`` and prints competition
style output.  Plain iterative DPLL over a trail: unit propagation with
per-clause watch of all literals (no learning, no heuristics beyond first
unassigned variable).  Slow but simple; it serves as the default external
cross-check for the embedded CDCL engine.
"""
from __future__ import annotations

import sys

from .dimacs import parse_dimacs


def solve(num_vars, clauses):
    """Return a model dict (var -> bool) or None if unsatisfiable."""
    assign = {}
    # trail entries: (var, value, flipped) -- flipped marks both-tried
    trail = []

    def lit_value(l):
        v = assign.get(abs(l))
        if v is None:
            return None
        return v == (l > 0)

    def propagate():
        """Scan-to-fixpoint unit propagation; True on success."""
        changed = True
        while changed:
            changed = False
            for c in clauses:
                unassigned = None
                satisfied = False
                count = 0
                for l in c:
                    v = lit_value(l)
                    if v is True:
                        satisfied = True
                        break
                    if v is None:
                        unassigned = l
                        count += 1
                        if count > 1:
                            break
                if satisfied or count > 1:
                    continue
                if count == 0:
                    return False
                assign[abs(unassigned)] = unassigned > 0
                trail.append((abs(unassigned), unassigned > 0, True))
                changed = True
        return True

    def backtrack():
        """Undo to the most recent un-flipped decision; False when none."""
        while trail:
            var, val, flipped = trail.pop()
            del assign[var]
            if not flipped:
                assign[var] = not val
                trail.append((var, not val, True))
                return True
        return False

    while True:
        if propagate():
            var = next((v for v in range(1, num_vars + 1) if v not in assign), None)
            if var is None:
                return dict(assign)
            assign[var] = False
            trail.append((var, False, False))
        elif not backtrack():
            return None


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m lockbench.extsolver <file.cnf>", file=sys.stderr)
        return 2
    with open(argv[0]) as fh:
        num_vars, clauses = parse_dimacs(fh.read())
    model = solve(num_vars, clauses)
    if model is None:
        print("s UNSATISFIABLE")
        return 20
    print("s SATISFIABLE")
    lits = [v if model.get(v) else -v for v in range(1, num_vars + 1)]
    print("v " + " ".join(str(l) for l in lits) + " 0")
    return 10


if __name__ == "__main__":
    sys.exit(main())

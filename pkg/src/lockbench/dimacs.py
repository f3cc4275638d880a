"""DIMACS CNF text format and the external-solver bridge.

The bridge runs any solver that follows the common competition convention:
``solver <file.cnf>`` printing ``s SATISFIABLE``/``s UNSATISFIABLE`` plus
``v`` model lines, exit code 10/20 accepted in lieu of the status line.
The solver path comes from the ``LOCKBENCH_EXT_SOLVER`` environment
variable; when unset a bundled reference solver (`lockbench.extsolver`,
a plain DPLL, deliberately a different algorithm than the embedded CDCL
engine) is spawned through the current interpreter.
"""
from __future__ import annotations

import os
import subprocess
import sys
import tempfile

ENV_SOLVER = "LOCKBENCH_EXT_SOLVER"


def to_dimacs(num_vars, clauses, comment=None):
    lines = []
    if comment:
        lines.append(f"c {comment}")
    lines.append(f"p cnf {num_vars} {len(clauses)}")
    for c in clauses:
        lines.append(" ".join(str(l) for l in c) + " 0")
    return "\n".join(lines) + "\n"


def parse_dimacs(text):
    num_vars = 0
    clauses = []
    cur = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"bad problem line: {line!r}")
            num_vars = int(parts[2])
            continue
        for tok in line.split():
            l = int(tok)
            if l == 0:
                clauses.append(cur)
                cur = []
            else:
                cur.append(l)
    if cur:
        clauses.append(cur)
    return num_vars, clauses


def parse_solver_output(text, returncode=None):
    """Extract (status, model-dict) from competition-style solver output."""
    status = None
    model = {}
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("s "):
            word = line[2:].strip().upper()
            if word.startswith("SATISFIABLE") or word == "SAT":
                status = "SAT"
            elif word.startswith("UNSAT"):
                status = "UNSAT"
        elif line.startswith("v ") or line.startswith("V "):
            for tok in line[2:].split():
                l = int(tok)
                if l != 0:
                    model[abs(l)] = l > 0
    if status is None:
        if returncode == 10:
            status = "SAT"
        elif returncode == 20:
            status = "UNSAT"
    return status, (model if status == "SAT" else None)


def external_solver_command():
    path = os.environ.get(ENV_SOLVER)
    if path:
        return [path]
    return [sys.executable, "-m", "lockbench.extsolver"]


def run_external(num_vars, clauses, timeout=None, command=None):
    """Solve via the external bridge; returns (status, model or None)."""
    cmd = list(command) if command else external_solver_command()
    with tempfile.NamedTemporaryFile("w", suffix=".cnf", delete=False) as fh:
        fh.write(to_dimacs(num_vars, clauses))
        path = fh.name
    try:
        proc = subprocess.run(cmd + [path], capture_output=True, text=True,
                              timeout=timeout)
    except subprocess.TimeoutExpired:
        os.unlink(path)
        return "TIMEOUT", None
    os.unlink(path)
    status, model = parse_solver_output(proc.stdout, proc.returncode)
    if status is None:
        raise RuntimeError(
            f"external solver {cmd[0]!r} produced no status "
            f"(rc={proc.returncode}, stderr={proc.stderr[:200]!r})")
    return status, model

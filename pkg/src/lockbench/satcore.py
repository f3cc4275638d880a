"""CNF encoding, key miters, the DIP attack loop and bounded unrolling.

The encoder maps nets to signed literals and folds while encoding:
NOT/BUFF become literal aliases, constants fold through gates, and XOR
with a constant side collapses to a literal.  A query that fixes the
primary inputs therefore reduces a whole circuit copy to the few clauses
that actually depend on the key, which keeps the iterative attack loop
linear in practice instead of re-solving ever-growing circuit stacks.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from . import dimacs
from .cdcl import Solver, SAT, UNSAT, TIMEOUT
from .netlist import Netlist, NetlistError, Gate, topo_order
from .simulate import sim_comb


@dataclass
class Budget:
    """Attack resource budget; defaults are deliberately generous."""
    max_iterations: int = 10_000
    max_seconds: float = 600.0


class BudgetExceeded(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


@dataclass
class SolveResult:
    status: str
    model: dict | None
    stats: dict = field(default_factory=dict)


@dataclass
class DipTrace:
    """Distinguishing input patterns consumed by an attack loop."""
    dips: list
    iterations: int


@dataclass
class Miter:
    """Two keyed copies of a locked circuit over shared non-key inputs.

    `diff_lit` is true iff some output pair disagrees; assuming it turns a
    solve into a search for a distinguishing input pattern.
    """
    formula: "CnfFormula"
    x_lits: dict
    k1_lits: dict
    k2_lits: dict
    y1_lits: dict
    y2_lits: dict
    diff_lit: int


@dataclass
class EquivResult:
    equivalent: bool
    counterexample: dict | None = None


class CnfFormula:
    """Clause container with net-literal bookkeeping and folding helpers.

    `var_map` maps net names to signed literals: inverters are absorbed
    as negative literals rather than spending a variable.
    """

    def __init__(self):
        self.num_vars = 0
        self.clauses = []
        self.var_map = {}
        self._true = None

    def new_var(self):
        self.num_vars += 1
        return self.num_vars

    def add(self, clause):
        self.clauses.append(list(clause))

    def true_lit(self):
        if self._true is None:
            self._true = self.new_var()
            self.add([self._true])
        return self._true

    def const_lit(self, value):
        t = self.true_lit()
        return t if value else -t

    def is_const(self, lit):
        if self._true is None:
            return None
        if lit == self._true:
            return True
        if lit == -self._true:
            return False
        return None

    def and_lits(self, lits):
        out = []
        for l in lits:
            c = self.is_const(l)
            if c is False:
                return self.const_lit(False)
            if c is True:
                continue
            if -l in out:
                return self.const_lit(False)
            if l not in out:
                out.append(l)
        if not out:
            return self.const_lit(True)
        if len(out) == 1:
            return out[0]
        y = self.new_var()
        for l in out:
            self.add([-y, l])
        self.add([y] + [-l for l in out])
        return y

    def or_lits(self, lits):
        return -self.and_lits([-l for l in lits])

    def xor2(self, a, b):
        ca, cb = self.is_const(a), self.is_const(b)
        if ca is not None:
            return -b if ca else b
        if cb is not None:
            return -a if cb else a
        if a == b:
            return self.const_lit(False)
        if a == -b:
            return self.const_lit(True)
        y = self.new_var()
        self.add([-y, a, b])
        self.add([-y, -a, -b])
        self.add([y, -a, b])
        self.add([y, a, -b])
        return y

    def xor_lits(self, lits):
        acc = lits[0]
        for l in lits[1:]:
            acc = self.xor2(acc, l)
        return acc


def encode_netlist(f, n, litmap):
    """Encode the combinational part of `n` into `f`.

    `litmap` must pre-assign literals for every primary input (constants
    allowed via f.const_lit).  Returns a net -> literal map covering every
    net.  DFBs are rejected: encode unrolled netlists instead.
    """
    m = dict(litmap)
    missing = [x for x in n.inputs if x not in m]
    if missing:
        raise NetlistError(f"no literal for inputs {missing[:5]}")
    for g in topo_order(n):
        if g.kind == "DFF":
            raise NetlistError("cannot encode a sequential netlist; unroll first")
        fi = [m[x] for x in g.fanins]
        k = g.kind
        if k == "AND":
            lit = f.and_lits(fi)
        elif k == "NAND":
            lit = -f.and_lits(fi)
        elif k == "OR":
            lit = f.or_lits(fi)
        elif k == "NOR":
            lit = -f.or_lits(fi)
        elif k == "XOR":
            lit = f.xor_lits(fi)
        elif k == "XNOR":
            lit = -f.xor_lits(fi)
        elif k == "NOT":
            lit = -fi[0]
        elif k == "BUFF":
            lit = fi[0]
        elif k == "CONST0":
            lit = f.const_lit(False)
        else:  # CONST1
            lit = f.const_lit(True)
        m[g.output] = lit
    return m


def tseitin(n):
    """Standalone CNF of a combinational netlist; var_map covers every net."""
    f = CnfFormula()
    litmap = {}
    for x in n.inputs:
        v = f.new_var()
        litmap[x] = v
    f.var_map = encode_netlist(f, n, litmap)
    return f


def build_key_miter(locked, f=None):
    """Miter of two key-differentiated copies sharing non-key inputs."""
    if not locked.key_inputs:
        raise NetlistError("netlist has no key inputs")
    if locked.is_sequential:
        raise NetlistError("sequential netlist: unroll before building a miter")
    f = f or CnfFormula()
    x = {p: f.new_var() for p in locked.data_inputs}
    k1 = {p: f.new_var() for p in locked.key_inputs}
    k2 = {p: f.new_var() for p in locked.key_inputs}
    m1 = encode_netlist(f, locked, {**x, **k1})
    m2 = encode_netlist(f, locked, {**x, **k2})
    y1 = {p: m1[p] for p in locked.outputs}
    y2 = {p: m2[p] for p in locked.outputs}
    diff = f.or_lits([f.xor2(y1[p], y2[p]) for p in locked.outputs])
    return Miter(f, x, k1, k2, y1, y2, diff)


def unit_reduce(clauses, units):
    """Propagate `units` through `clauses`; returns the surviving clauses
    plus all derived unit clauses.  Raises on contradiction."""
    val = {}
    queue = list(units)
    pending = [list(c) for c in clauses]
    while True:
        for u in queue:
            v = abs(u)
            if v in val and val[v] != (u > 0):
                raise NetlistError("contradiction while reducing a query")
            val[v] = u > 0
        queue = []
        nxt = []
        for c in pending:
            out = []
            sat = False
            for l in c:
                if abs(l) in val:
                    if val[abs(l)] == (l > 0):
                        sat = True
                        break
                else:
                    out.append(l)
            if sat:
                continue
            if not out:
                raise NetlistError("contradiction while reducing a query")
            if len(out) == 1:
                queue.append(out[0])
            else:
                nxt.append(out)
        pending = nxt
        if not queue:
            break
    return pending + [[v if b else -v] for v, b in sorted(val.items())]


class _AttackInstance:
    """Incremental solver wrapper used by the attack loops."""

    def __init__(self, locked, oracle=None, static=True):
        self.locked = locked
        self.oracle = oracle
        self.f = CnfFormula()
        self.miter = build_key_miter(locked, self.f)
        # static decision order keeps re-solves stable across DIP additions,
        # so successive models differ minimally and key guesses are not
        # steered toward any particular corner of the key space
        self.solver = Solver(static_order=static)
        self._fed = 0
        self._feed()

    def _feed(self):
        for c in self.f.clauses[self._fed:]:
            self.solver.add_clause(c)
        self._fed = len(self.f.clauses)

    def fix_keys(self, bits):
        for p, b in bits.items():
            for kmap in (self.miter.k1_lits, self.miter.k2_lits):
                lit = kmap[p]
                self.solver.add_clause([lit if b else -lit])

    def add_dip(self, x_assign, y_assign):
        """Conjoin both keyed copies evaluated at a fixed input pattern."""
        for kmap in (self.miter.k1_lits, self.miter.k2_lits):
            start = len(self.f.clauses)
            litmap = {p: self.f.const_lit(x_assign[p]) for p in self.locked.data_inputs}
            litmap.update(kmap)
            m = encode_netlist(self.f, self.locked, litmap)
            fresh = self.f.clauses[start:]
            del self.f.clauses[start:]
            units = []
            for y in self.locked.outputs:
                lit = m[y]
                want = y_assign[y] & 1
                c = self.f.is_const(lit)
                if c is not None:
                    if c != bool(want):
                        raise NetlistError("oracle answer contradicts the netlist")
                    continue
                units.append(lit if want else -lit)
            if self.f._true is not None:
                units.append(self.f._true)
            for c in unit_reduce(fresh, units):
                self.solver.add_clause(c)
        self.solver.ensure_vars(self.f.num_vars)

    def model_inputs(self, model):
        out = {}
        for p, lit in self.miter.x_lits.items():
            out[p] = 1 if model[abs(lit)] == (lit > 0) else 0
        return out

    def model_key(self, model, which=1):
        kmap = self.miter.k1_lits if which == 1 else self.miter.k2_lits
        return {p: (1 if model[abs(l)] == (l > 0) else 0) for p, l in kmap.items()}


COMPLETE = "complete"
ITERATION_LIMIT = "iteration-limit"


def sat_attack(locked, oracle, budget=None, fixed_keys=None, seed_dips=None):
    """Iterative distinguishing-input attack.

    Repeatedly finds an input on which two candidate keys disagree, asks
    the oracle for the true output, and constrains both key copies with
    the answer; when no distinguishing input remains, any satisfying key
    is behaviorally correct.  Returns (key, DipTrace, status): status
    "complete" means the loop proved no distinguishing input remains;
    "timeout" / "iteration-limit" mean the budget ran out and the key is
    merely consistent with the DIPs collected so far.

    `fixed_keys` pins chosen key ports to constants in both copies (their
    bits are excluded from the returned assignment); `seed_dips` conjoins
    known (input, output) pairs before the loop starts.
    """
    budget = budget or Budget()
    deadline = time.monotonic() + budget.max_seconds
    inst = _AttackInstance(locked, oracle)
    if fixed_keys:
        inst.fix_keys(fixed_keys)
    dips = []
    outcome = COMPLETE
    if seed_dips:
        for x, y in seed_dips:
            inst.add_dip(x, y)
            dips.append((dict(x), dict(y)))
    # the static order can thrash on a hard query; after `stall` seconds
    # on one solve, rebuild on the activity-driven solver and replay
    stall = min(1.0, max(0.25, budget.max_seconds / 20.0))
    fell_back = False

    def rebuild():
        ni = _AttackInstance(locked, oracle, static=False)
        if fixed_keys:
            ni.fix_keys(fixed_keys)
        for x, y in dips:
            ni.add_dip(x, y)
        return ni

    while True:
        if len(dips) >= budget.max_iterations:
            outcome = ITERATION_LIMIT
            break
        cap = deadline if fell_back else min(deadline, time.monotonic() + stall)
        status, model = inst.solver.solve([inst.miter.diff_lit], deadline=cap)
        if status == TIMEOUT:
            if not fell_back and time.monotonic() < deadline:
                fell_back = True
                inst = rebuild()
                continue
            outcome = "timeout"
            break
        if status == UNSAT:
            break
        x = inst.model_inputs(model)
        y = oracle.query(x)
        inst.add_dip(x, y)
        dips.append((x, y))
    # key extraction gets a short grace period even when the loop timed out
    status, model = inst.solver.solve(
        [], deadline=time.monotonic() + max(10.0, budget.max_seconds * 0.1))
    if status != SAT and not fell_back:
        inst = rebuild()
        status, model = inst.solver.solve(
            [], deadline=time.monotonic() + max(10.0, budget.max_seconds * 0.1))
    if status != SAT:
        raise NetlistError("no key is consistent with the oracle answers")
    key = inst.model_key(model)
    if fixed_keys:
        for p in fixed_keys:
            key.pop(p, None)
    return key, DipTrace(dips, len(dips)), outcome


def check_equivalence(a, b, bind=None, budget=None, backend=None):
    """Miter-based equivalence check of two combinational netlists.

    `bind` fixes nets by name (typically key ports) on whichever side has
    them.  Returns EquivResult; a counterexample is re-validated by
    simulation before being returned.
    """
    bind = {k: v & 1 for k, v in (bind or {}).items()}
    for n in (a, b):
        if n.is_sequential:
            raise NetlistError("sequential netlist: use unroll for bounded checks")
    free_a = [x for x in a.inputs if x not in bind]
    free_b = [x for x in b.inputs if x not in bind]
    if set(free_a) != set(free_b):
        raise NetlistError("free input ports differ between the two netlists")
    if set(a.outputs) != set(b.outputs):
        raise NetlistError("output ports differ between the two netlists")
    f = CnfFormula()
    shared = {x: f.new_var() for x in free_a}
    lm_a = dict(shared)
    lm_b = dict(shared)
    for k, v in bind.items():
        if k in a.gate_map or k in b.gate_map:
            raise NetlistError(f"bound net {k!r} is not an input")
        lm_a[k] = lm_b[k] = f.const_lit(v)
    ya = encode_netlist(f, a, lm_a)
    yb = encode_netlist(f, b, lm_b)
    diff = f.or_lits([f.xor2(ya[p], yb[p]) for p in a.outputs])
    f.add([diff])
    budget = budget or Budget()
    res = solve(f, budget=budget, backend=backend)
    if res.status == TIMEOUT:
        raise BudgetExceeded("equivalence check budget exhausted")
    if res.status == UNSAT:
        return EquivResult(True, None)
    cex = {}
    for p in free_a:
        lit = shared[p]
        cex[p] = 1 if res.model.get(abs(lit)) == (lit > 0) else 0
    va = sim_comb(a, {**{k: v for k, v in bind.items() if k in set(a.inputs)}, **cex})
    vb = sim_comb(b, {**{k: v for k, v in bind.items() if k in set(b.inputs)}, **cex})
    if va == vb:
        raise RuntimeError("solver counterexample failed simulation re-check")
    return EquivResult(False, cex)


def solve(f, assumptions=(), budget=None, backend=None):
    """Solve a CnfFormula; backend None uses the embedded engine, anything
    else goes through the DIMACS bridge (a path, or True for the default)."""
    budget = budget or Budget()
    if backend:
        t0 = time.monotonic()
        clauses = list(f.clauses) + [[l] for l in assumptions]
        command = None if backend is True else [backend] if isinstance(backend, str) else backend
        status, model = dimacs.run_external(f.num_vars, clauses,
                                            timeout=budget.max_seconds,
                                            command=command)
        return SolveResult(status, model, {"seconds": time.monotonic() - t0})
    t0 = time.monotonic()
    s = Solver()
    s.ensure_vars(f.num_vars)
    for c in f.clauses:
        s.add_clause(c)
    status, model = s.solve(assumptions, deadline=t0 + budget.max_seconds)
    mdl = None
    if status == SAT:
        mdl = {v: model[v] for v in range(1, f.num_vars + 1)}
    st = s.stats()
    st["seconds"] = time.monotonic() - t0
    return SolveResult(status, mdl, st)


def unroll(n, cycles, expose_state=False):
    """Unfold a sequential netlist into `cycles` combinational time frames.

    Ports are replicated per frame as ``<name>_t<k>``; cycle-0 state is
    tied to constants (the all-zero reset).  With `expose_state` the final
    state nets are added as outputs ``<dff>_t<cycles>``.
    """
    if cycles < 1:
        raise NetlistError("cycles must be >= 1")
    if not n.is_sequential:
        raise NetlistError("netlist has no state elements")
    gates = []
    inputs = []
    key_inputs = []
    outputs = []
    dffs = n.state_elements
    state = {}
    for g in dffs:
        net = f"{g.output}_t0"
        gates.append(Gate(net, "CONST0", ()))
        state[g.output] = net
    comb = [g for g in topo_order(n) if g.kind != "DFF"]
    keys = set(n.key_inputs)
    for t in range(cycles):
        m = {}
        for x in n.inputs:
            px = f"{x}_t{t}"
            inputs.append(px)
            if x in keys:
                key_inputs.append(px)
            m[x] = px
        for d, net in state.items():
            m[d] = net
        for g in comb:
            out = f"{g.output}_t{t}"
            gates.append(Gate(out, g.kind, tuple(m[x] for x in g.fanins)))
            m[g.output] = out
        for y in n.outputs:
            py = f"{y}_t{t}"
            if m[y] != py:
                gates.append(Gate(py, "BUFF", (m[y],)))
            outputs.append(py)
        state = {g.output: m[g.fanins[0]] for g in dffs}
    if expose_state:
        for g in dffs:
            net = f"{g.output}_t{cycles}"
            gates.append(Gate(net, "BUFF", (state[g.output],)))
            outputs.append(net)
    return Netlist(f"{n.name}.u{cycles}", inputs, outputs, gates, key_inputs)

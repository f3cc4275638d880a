"""Gate-level netlist model and BENCH-format I/O.

Nets are identified by their names.  A netlist is immutable after
construction; every transformation returns a fresh instance.  DFFs share a
single implicit clock and reset to 0, so a sequential netlist is modelled as
a combinational core plus a set of state nets (the DFF outputs).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

GATE_KINDS = frozenset({
    "AND", "NAND", "OR", "NOR", "XOR", "XNOR", "NOT", "BUFF", "DFF",
    "CONST0", "CONST1",
})

# Swapping a kind for its dual inverts the gate's output.
DUAL_KIND = {
    "AND": "NAND", "NAND": "AND",
    "OR": "NOR", "NOR": "OR",
    "XOR": "XNOR", "XNOR": "XOR",
    "NOT": "BUFF", "BUFF": "NOT",
    "CONST0": "CONST1", "CONST1": "CONST0",
}

# Multi-input kinds that anonymize may flip without leaving a structural hint.
FLIP_ELIGIBLE = frozenset({"AND", "NAND", "OR", "NOR", "XOR", "XNOR"})

NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\[\]]*\Z")
KEY_PORT_RE = re.compile(r"keyinput(\d+)\Z")

_ASSIGN_RE = re.compile(r"^([^\s=]+)\s*=\s*([A-Za-z0-9]+)\s*\((.*)\)$")
_IO_RE = re.compile(r"^(INPUT|OUTPUT)\s*\(\s*([^\s()]+)\s*\)$")


class NetlistError(ValueError):
    pass


class ParseError(NetlistError):
    pass


class CycleError(NetlistError):
    pass


@dataclass(frozen=True)
class Gate:
    output: str
    kind: str
    fanins: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise NetlistError(f"unknown gate kind {self.kind!r} for net {self.output!r}")
        n = len(self.fanins)
        if self.kind in ("NOT", "BUFF", "DFF"):
            if n != 1:
                raise NetlistError(f"{self.kind} {self.output!r} needs 1 fanin, got {n}")
        elif self.kind in ("CONST0", "CONST1"):
            if n != 0:
                raise NetlistError(f"{self.kind} {self.output!r} takes no fanins, got {n}")
        elif n < 2:
            raise NetlistError(f"{self.kind} {self.output!r} needs >= 2 fanins, got {n}")


class Netlist:
    """An immutable gate-level netlist.

    Parameters
    ----------
    name : str
        Display name, also written back as the BENCH header comment.
    inputs : iterable of str
        Primary inputs in declaration order.  Key ports are primary inputs
        flagged through `key_inputs`.
    outputs : iterable of str
        Primary outputs in declaration order; each must reference a defined
        net (an input or a gate output).
    gates : iterable of Gate
        Gates in declaration order.
    key_inputs : iterable of str, optional
        Subset of `inputs` carrying key bits.  Ports named ``keyinput<N>``
        are flagged automatically.
    """

    __slots__ = ("name", "inputs", "outputs", "gates", "key_inputs",
                 "gate_map", "state_elements", "_topo", "_fanouts")

    def __init__(self, name, inputs, outputs, gates, key_inputs=()):
        self.name = name
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        self.gates = tuple(gates)

        seen = set()
        for x in self.inputs:
            if x in seen:
                raise NetlistError(f"duplicate input {x!r}")
            seen.add(x)
        self.gate_map = {}
        for g in self.gates:
            if g.output in seen or g.output in self.gate_map:
                raise NetlistError(f"duplicate definition of net {g.output!r}")
            self.gate_map[g.output] = g
        defined = seen | self.gate_map.keys()
        for g in self.gates:
            for f in g.fanins:
                if f not in defined:
                    raise NetlistError(f"dangling wire {f!r} (fanin of {g.output!r})")
        out_seen = set()
        for y in self.outputs:
            if y not in defined:
                raise NetlistError(f"dangling output {y!r}")
            if y in out_seen:
                raise NetlistError(f"duplicate output {y!r}")
            out_seen.add(y)

        auto = {x for x in self.inputs if KEY_PORT_RE.match(x)}
        keys = auto | set(key_inputs)
        for k in keys:
            if k not in seen:
                raise NetlistError(f"key input {k!r} is not a primary input")
        self.key_inputs = tuple(x for x in self.inputs if x in keys)

        self.state_elements = tuple(g for g in self.gates if g.kind == "DFF")
        self._topo = None
        self._fanouts = None

    @property
    def data_inputs(self):
        """Primary inputs that are not key ports, in declaration order."""
        keys = set(self.key_inputs)
        return tuple(x for x in self.inputs if x not in keys)

    @property
    def is_sequential(self):
        return bool(self.state_elements)

    def fanouts(self):
        """Map net -> tuple of gate outputs consuming it."""
        if self._fanouts is None:
            fo = {}
            for g in self.gates:
                for f in g.fanins:
                    fo.setdefault(f, []).append(g.output)
            self._fanouts = {k: tuple(v) for k, v in fo.items()}
        return self._fanouts

    def with_name(self, name):
        return Netlist(name, self.inputs, self.outputs, self.gates, self.key_inputs)


@dataclass(frozen=True)
class Cone:
    """Transitive fanin of one net.

    Traversal stops at primary inputs and does not cross DFF boundaries:
    a DFF in the cone is a member, but its next-state logic belongs to a
    different time frame and is not included.
    """
    root: str
    members: tuple[str, ...]
    support: tuple[str, ...]
    key_support: tuple[str, ...]


@dataclass(frozen=True)
class Stats:
    name: str
    inputs: int
    outputs: int
    gates: int
    dffs: int
    key_bits: int
    kind_counts: tuple = ()


@dataclass(frozen=True)
class RenamePatch:
    """Reversible record of an anonymization pass.

    `net_map` / `port_map` hold old -> new names; `kind_flips` holds
    (anonymized gate id, original kind, new kind).  Applying the patch in
    reverse restores the original names and gate kinds.
    """
    net_map: dict
    port_map: dict
    kind_flips: tuple


def parse_bench(text, name="netlist", key_inputs=()):
    """Parse BENCH-format text into a Netlist.

    Accepted grammar per line: ``INPUT(<name>)``, ``OUTPUT(<name>)``,
    ``<name> = <KIND>(<name>{, <name>})`` plus ``#`` comments and blank
    lines.  ``BUF`` is accepted as an alias of ``BUFF``; constants are
    written ``CONST0()`` / ``CONST1()``.  Ports named ``keyinput<N>`` are
    flagged as key inputs automatically.
    """
    inputs, outputs, gates = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _IO_RE.match(line)
        if m:
            net = m.group(2)
            if not NAME_RE.match(net):
                raise ParseError(f"line {lineno}: bad net name {net!r}")
            (inputs if m.group(1) == "INPUT" else outputs).append(net)
            continue
        m = _ASSIGN_RE.match(line)
        if not m:
            raise ParseError(f"line {lineno}: malformed line {line!r}")
        out, kind, args = m.group(1), m.group(2).upper(), m.group(3).strip()
        if kind == "BUF":
            kind = "BUFF"
        if kind not in GATE_KINDS:
            raise ParseError(f"line {lineno}: unknown gate kind {m.group(2)!r}")
        if not NAME_RE.match(out):
            raise ParseError(f"line {lineno}: bad net name {out!r}")
        fanins = tuple(a.strip() for a in args.split(",")) if args else ()
        for f in fanins:
            if not NAME_RE.match(f):
                raise ParseError(f"line {lineno}: bad net name {f!r}")
        try:
            gates.append(Gate(out, kind, fanins))
        except NetlistError as e:
            raise ParseError(f"line {lineno}: {e}") from None
    try:
        return Netlist(name, inputs, outputs, gates, key_inputs)
    except NetlistError as e:
        raise ParseError(str(e)) from None


def write_bench(n):
    """Render a Netlist as canonical BENCH text (idempotent under re-parse)."""
    lines = [f"# {n.name}"]
    lines += [f"INPUT({x})" for x in n.inputs]
    lines += [f"OUTPUT({y})" for y in n.outputs]
    for g in n.gates:
        lines.append(f"{g.output} = {g.kind}({', '.join(g.fanins)})")
    return "\n".join(lines) + "\n"


def topo_order(n):
    """Gates ordered so every gate follows its fanins.

    DFF outputs count as sources (their value is previous-cycle state); the
    DFF gates themselves are emitted last, after the combinational logic
    that computes their next-state inputs.
    """
    if n._topo is not None:
        return n._topo
    sources = set(n.inputs) | {g.output for g in n.state_elements}
    comb = [g for g in n.gates if g.kind != "DFF"]
    remaining = {}   # gate output -> number of unresolved fanins
    waiting = {}     # net -> gates waiting on it
    ready = []
    done = sources | {g.output for g in n.gates if g.kind in ("CONST0", "CONST1")}
    for g in comb:
        if g.kind in ("CONST0", "CONST1"):
            ready.append(g)
            continue
        pend = [f for f in set(g.fanins) if f not in sources]
        if not pend:
            ready.append(g)
        else:
            remaining[g.output] = len(pend)
            for f in pend:
                waiting.setdefault(f, []).append(g)
    order = []
    i = 0
    while i < len(ready):
        g = ready[i]
        i += 1
        order.append(g)
        for w in waiting.get(g.output, ()):
            remaining[w.output] -= 1
            if remaining[w.output] == 0:
                ready.append(w)
    if len(order) != len(comb):
        stuck = sorted(set(g.output for g in comb) - set(g.output for g in order))
        raise CycleError(f"combinational cycle through {stuck[:5]}")
    n._topo = tuple(order) + n.state_elements
    return n._topo


def extract_cone(n, root):
    """Cone of influence of `root` (see Cone for the DFF boundary rule)."""
    defined = set(n.inputs) | n.gate_map.keys()
    if root not in defined:
        raise NetlistError(f"unknown net {root!r}")
    keys = set(n.key_inputs)
    members, support, key_support = set(), set(), set()
    stack = [root]
    seen = set()
    while stack:
        net = stack.pop()
        if net in seen:
            continue
        seen.add(net)
        if net in n.gate_map:
            g = n.gate_map[net]
            members.add(net)
            if g.kind != "DFF":
                stack.extend(g.fanins)
        elif net in keys:
            key_support.add(net)
        else:
            support.add(net)
    decl = {x: i for i, x in enumerate(n.inputs)}
    gidx = {g.output: i for i, g in enumerate(n.gates)}
    return Cone(
        root=root,
        members=tuple(sorted(members, key=gidx.__getitem__)),
        support=tuple(sorted(support, key=decl.__getitem__)),
        key_support=tuple(sorted(key_support, key=decl.__getitem__)),
    )


def cone_netlist(n, root, name=None):
    """Standalone combinational netlist computing `root` from its support.

    DFF outputs inside the cone become pseudo primary inputs.
    """
    cone = extract_cone(n, root)
    pseudo = [m for m in cone.members if n.gate_map[m].kind == "DFF"]
    gates = [n.gate_map[m] for m in cone.members if n.gate_map[m].kind != "DFF"]
    inputs = list(cone.support) + list(cone.key_support) + pseudo
    if root not in n.gate_map or n.gate_map[root].kind == "DFF":
        # root is an input or state net: expose it through a buffer
        buf = _fresh_name(set(inputs) | set(cone.members), "cone_root")
        gates.append(Gate(buf, "BUFF", (root,)))
        return Netlist(name or f"{n.name}.cone", inputs, (buf,), gates, cone.key_support)
    return Netlist(name or f"{n.name}.cone", inputs, (root,), gates, cone.key_support)


def stats(n):
    counts = {}
    for g in n.gates:
        counts[g.kind] = counts.get(g.kind, 0) + 1
    dffs = counts.get("DFF", 0)
    return Stats(
        name=n.name,
        inputs=len(n.data_inputs),
        outputs=len(n.outputs),
        gates=len(n.gates) - dffs,
        dffs=dffs,
        key_bits=len(n.key_inputs),
        kind_counts=tuple(sorted(counts.items())),
    )


def _fresh_name(taken, base):
    if base not in taken:
        return base
    i = 0
    while f"{base}_{i}" in taken:
        i += 1
    return f"{base}_{i}"


class _AigBuilder:
    """Emits AND/NOT/BUFF primitives with counter names, folding constants
    and double negations on the fly (no structural sharing)."""

    def __init__(self, taken):
        self.gates = []
        self.by_out = {}
        self.taken = set(taken)
        self.counter = 0

    def fresh(self):
        while True:
            name = f"a{self.counter}"
            self.counter += 1
            if name not in self.taken:
                self.taken.add(name)
                return name

    def emit(self, kind, fanins):
        out = self.fresh()
        g = Gate(out, kind, tuple(fanins))
        self.gates.append(g)
        self.by_out[out] = g
        return out

    def const(self, v):
        return self.emit("CONST1" if v else "CONST0", ())

    def is_const(self, net):
        g = self.by_out.get(net)
        if g and g.kind in ("CONST0", "CONST1"):
            return g.kind == "CONST1"
        return None

    def inv(self, a):
        c = self.is_const(a)
        if c is not None:
            return self.const(not c)
        g = self.by_out.get(a)
        if g and g.kind == "NOT":
            return g.fanins[0]        # double negation collapses
        return self.emit("NOT", (a,))

    def and2(self, a, b):
        ca, cb = self.is_const(a), self.is_const(b)
        if ca is False or cb is False:
            return self.const(False)
        if ca is True:
            return b
        if cb is True:
            return a
        if a == b:
            return a
        return self.emit("AND", (a, b))

    def and_tree(self, nets):
        acc = nets[0]
        for x in nets[1:]:
            acc = self.and2(acc, x)
        return acc

    def xor2(self, a, b):
        t1 = self.and2(a, self.inv(b))
        t2 = self.and2(self.inv(a), b)
        return self.inv(self.and2(self.inv(t1), self.inv(t2)))


def to_aig(n):
    """Rewrite into AND/NOT/BUFF/DFF/CONST form with two-input ANDs.

    Ports keep their names; internal nets are renamed from a counter.
    Returns (netlist, RenamePatch); the patch records old root net -> new
    name for every original gate output.
    """
    b = _AigBuilder(set(n.inputs) | set(n.outputs) |
                    {g.output for g in n.state_elements})
    out_set = set(n.outputs)
    net_map = {x: x for x in n.inputs}
    for g in n.state_elements:
        net_map[g.output] = g.output
    dff_todo = []
    for g in topo_order(n):
        if g.kind == "DFF":
            dff_todo.append(g)
            continue
        fi = [net_map[f] for f in g.fanins]
        k = g.kind
        if k == "BUFF":
            new = fi[0]
        elif k == "NOT":
            new = b.inv(fi[0])
        elif k == "AND":
            new = b.and_tree(fi)
        elif k == "NAND":
            new = b.inv(b.and_tree(fi))
        elif k == "OR":
            new = b.inv(b.and_tree([b.inv(x) for x in fi]))
        elif k == "NOR":
            new = b.and_tree([b.inv(x) for x in fi])
        elif k in ("XOR", "XNOR"):
            acc = fi[0]
            for x in fi[1:]:
                acc = b.xor2(acc, x)
            new = b.inv(acc) if k == "XNOR" else acc
        elif k in ("CONST0", "CONST1"):
            new = b.const(k == "CONST1")
        else:  # pragma: no cover
            raise NetlistError(f"unhandled kind {k}")
        if g.output in out_set:
            # outputs keep their declared names
            b.gates.append(Gate(g.output, "BUFF", (new,)))
            new = g.output
        net_map[g.output] = new
    for g in dff_todo:
        # state nets keep their names so sequential semantics stay aligned
        b.gates.append(Gate(g.output, "DFF", (net_map[g.fanins[0]],)))
    aig = Netlist(n.name, n.inputs, n.outputs, b.gates, n.key_inputs)
    patch = RenamePatch(
        net_map={k: v for k, v in net_map.items() if k in n.gate_map},
        port_map={},
        kind_flips=(),
    )
    return aig, patch


def anonymize(n, m, seed):
    """Flip m eligible gate kinds to their duals and rename every net.

    Returns (netlist, RenamePatch).  Reversing the patch restores a netlist
    identical to the input.  Key ports keep their names (the ``keyinput<N>``
    convention is load-bearing for scoring).
    """
    import random
    eligible = [g.output for g in n.gates if g.kind in FLIP_ELIGIBLE]
    if m > len(eligible):
        raise NetlistError(f"m={m} exceeds {len(eligible)} flip-eligible gates")
    rng = random.Random(seed)
    flipped = set(rng.sample(eligible, m))

    keys = set(n.key_inputs)
    net_map = {}
    port_map = {}
    di = 0
    for x in n.inputs:
        if x in keys:
            net_map[x] = x
        else:
            net_map[x] = f"x{di}"
            port_map[x] = f"x{di}"
            di += 1
    for i, g in enumerate(n.gates):
        net_map[g.output] = f"n{i}"

    gates = []
    flips = []
    for g in n.gates:
        kind = g.kind
        if g.output in flipped:
            kind = DUAL_KIND[g.kind]
            flips.append((net_map[g.output], g.kind, kind))
        gates.append(Gate(net_map[g.output], kind, tuple(net_map[f] for f in g.fanins)))
    for y in n.outputs:
        port_map[y] = net_map[y]
    anon = Netlist(n.name, [net_map[x] for x in n.inputs],
                   [net_map[y] for y in n.outputs], gates, n.key_inputs)
    return anon, RenamePatch(net_map=net_map, port_map=port_map, kind_flips=tuple(flips))


def reverse_patch(n, patch):
    """Undo a RenamePatch: restore original names and flip kinds back."""
    inv = {v: k for k, v in patch.net_map.items()}
    flip_back = {gid: old for gid, old, _new in patch.kind_flips}
    gates = []
    for g in n.gates:
        kind = flip_back.get(g.output, g.kind)
        gates.append(Gate(inv.get(g.output, g.output), kind,
                          tuple(inv.get(f, f) for f in g.fanins)))
    return Netlist(n.name, [inv.get(x, x) for x in n.inputs],
                   [inv.get(y, y) for y in n.outputs], gates, n.key_inputs)


def substitute(n, consts, name=None):
    """Constant-propagate `consts` (net -> 0/1) through the netlist.

    Returns a netlist over the remaining free inputs.  Gates whose value
    becomes constant fold away; surviving outputs that collapse to a
    constant are kept as CONST gates so the port list is preserved.
    """
    if n.is_sequential:
        raise NetlistError("substitute() expects a combinational netlist")
    val = dict(consts)
    keep_inputs = [x for x in n.inputs if x not in val]
    gates = []
    for g in topo_order(n):
        fv = [val.get(f) for f in g.fanins]
        folded = _fold_gate(g.kind, fv)
        if folded is not None:
            val[g.output] = folded
            continue
        fanins = tuple(f if val.get(f) is None else _const_net(gates, val[f], g.output, i)
                       for i, f in enumerate(g.fanins))
        gates.append(Gate(g.output, g.kind, fanins))
    out_gates = {g.output for g in gates}
    for y in n.outputs:
        if y in val and y not in out_gates and y not in keep_inputs:
            gates.append(Gate(y, "CONST1" if val[y] else "CONST0", ()))
    keys = [k for k in n.key_inputs if k in keep_inputs]
    return Netlist(name or n.name, keep_inputs, n.outputs, gates, keys)


def _const_net(gates, value, owner, idx):
    name = f"{owner}.c{idx}"
    gates.append(Gate(name, "CONST1" if value else "CONST0", ()))
    return name


def _fold_gate(kind, fanin_values):
    """Value of a gate when enough fanins are known, else None."""
    if kind in ("CONST0", "CONST1"):
        return 1 if kind == "CONST1" else 0
    known = [v for v in fanin_values if v is not None]
    all_known = len(known) == len(fanin_values)
    if kind == "BUFF":
        return known[0] if all_known else None
    if kind == "NOT":
        return 1 - known[0] if all_known else None
    if kind in ("AND", "NAND"):
        if any(v == 0 for v in known):
            return 0 if kind == "AND" else 1
        if all_known:
            return 1 if kind == "AND" else 0
        return None
    if kind in ("OR", "NOR"):
        if any(v == 1 for v in known):
            return 1 if kind == "OR" else 0
        if all_known:
            return 0 if kind == "OR" else 1
        return None
    if kind in ("XOR", "XNOR"):
        if not all_known:
            return None
        acc = 0
        for v in known:
            acc ^= v
        return acc if kind == "XOR" else 1 - acc
    return None


def parse_kv(text):
    """Parse simple ``key = value`` sidecar/manifest text into a dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def format_kv(pairs):
    return "".join(f"{k} = {v}\n" for k, v in pairs.items())

"""Combinational locking: random key gates, point-function stripping,
the layered pipeline, packaging and key verification.

Two layers are provided.  `lock_rll` drops XOR/XNOR key gates onto random
internal nets; polarity (gate kind vs. correct bit) is decorrelated by
absorbing the implied inverter into neighboring gate duals.  `lock_pf`
strips the function on a Hamming ball around a secret cube and restores
it with a key-driven comparator, so a distinguishing-input attack can
rule out only one key per query.  `lock_layered` composes both.
"""
from __future__ import annotations

import os
import random
from dataclasses import dataclass, replace

from .netlist import (
    DUAL_KIND, FLIP_ELIGIBLE, Gate, Netlist, NetlistError, RenamePatch,
    _fresh_name, anonymize, extract_cone, format_kv, stats, to_aig, write_bench,
)
from .satcore import check_equivalence
from .simulate import OracleBundle, _eval_packed, save_bundle

RLL = "RLL"
PF = "PF"

# gate kinds that can absorb an inversion on a single fanin by switching
# to their dual
_ABSORB_KINDS = frozenset({"NOT", "BUFF", "XOR", "XNOR"})


@dataclass(frozen=True)
class KeyBit:
    port: str
    value: int
    layer: str
    site: str = ""


@dataclass
class KeyRecord:
    """Ground-truth key: ordered per-bit records plus the recipe used."""
    bits: tuple
    seed: int = 0
    recipe: "LockRecipe | None" = None

    def as_dict(self):
        return {b.port: b.value for b in self.bits}

    def layer_ports(self, layer):
        return [b.port for b in self.bits if b.layer == layer]

    def to_text(self):
        return "".join(f"{b.port} {b.value} {b.layer}\n" for b in self.bits)

    @classmethod
    def from_text(cls, text):
        bits = []
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3 or parts[1] not in ("0", "1") or parts[2] not in (RLL, PF):
                raise NetlistError(f"key record line {ln}: expected '<port> <0|1> <RLL|PF>'")
            bits.append(KeyBit(parts[0], int(parts[1]), parts[2]))
        ports = [b.port for b in bits]
        if len(set(ports)) != len(ports):
            raise NetlistError("key record claims a port twice")
        return cls(tuple(bits))


@dataclass(frozen=True)
class LockRecipe:
    k_rll: int = 0
    k_pf: int = 0
    h: int = 0
    protected_output: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.k_rll < 0 or self.k_pf < 0:
            raise ValueError("key widths must be >= 0")
        if self.k_pf == 0:
            if self.h != 0:
                raise ValueError("h requires a point-function layer")
        elif not 0 <= self.h < self.k_pf:
            raise ValueError("need 0 <= h < k_pf")


@dataclass(frozen=True)
class Preset:
    """Named recipe shape; port/gate counts record the intended scale."""
    k_rll: int
    k_pf: int
    h: int
    inputs: int
    outputs: int
    gates: int


COMB_PRESETS = {
    "small": Preset(40, 40, 0, 522, 512, 20226),
    "medium": Preset(60, 60, 0, 767, 757, 29951),
    "large": Preset(80, 80, 0, 1452, 1445, 32326),
    "bonus": Preset(128, 128, 0, 892, 1746, 16164),
}


def make_comb_target(inputs, outputs, gates, seed=0, name="target"):
    """Deterministic random combinational netlist for preset runs without a
    user-supplied circuit.

    One wide head cone chains through every input, so a point-function
    cube of any width up to `inputs` fits; the rest is shallow independent
    blocks, keeping randomly placed key gates observable rather than
    attenuated down a deep chain.
    """
    kinds = ("AND", "NAND", "OR", "NOR", "XOR", "XNOR")
    rng = random.Random(seed)
    ins = [f"pi{i}" for i in range(inputs)]
    comb = []
    prev = ins[0]
    for gi in range(inputs):
        b = ins[gi] if ins[gi] != prev else ins[(gi + 1) % inputs]
        # XOR-leaning mix: masking gates at every level would bury the
        # deep half of the chain for probe-based analyses
        kind = rng.choice(kinds) if rng.random() < 0.5 else rng.choice(("XOR", "XNOR"))
        comb.append(Gate(f"w{gi}", kind, (prev, b)))
        prev = comb[-1].output
    head = prev
    # shallow blocks, surplus XOR-folded into the output slots: depth stays
    # bounded no matter the gate budget, so block-internal sites stay visible
    depth = 8
    n_slots = max(outputs - 1, 1)
    n_blocks = max(n_slots, (max(gates, inputs + 2 * n_slots) - inputs) // (depth + 1))
    slots = [None] * n_slots
    for bi in range(n_blocks):
        pool = rng.sample(ins, min(5, inputs)) + [head]
        cur = None
        for gi in range(depth):
            a = cur if cur is not None else rng.choice(pool)
            b = rng.choice([x for x in pool if x != a])
            comb.append(Gate(f"b{bi}g{gi}", rng.choice(kinds), (a, b)))
            pool.append(comb[-1].output)
            cur = comb[-1].output
        j = bi % n_slots
        if slots[j] is None:
            slots[j] = cur
        else:
            comb.append(Gate(f"c{bi}", "XOR", (slots[j], cur)))
            slots[j] = comb[-1].output
    return Netlist(name, ins, [head, *slots][:outputs], comb)


def _output_reaching_nets(n):
    """Nets in the transitive fanin of any primary output."""
    seen = set(n.outputs)
    stack = list(n.outputs)
    while stack:
        g = n.gate_map.get(stack.pop())
        if g is None:
            continue
        for f in g.fanins:
            if f not in seen:
                seen.add(f)
                stack.append(f)
    return seen


def _key_port(n, index, taken):
    name = f"keyinput{index}"
    if name in taken or name in set(n.inputs):
        raise NetlistError(f"key port {name} already exists")
    return name


_OBS_WIDTH = 4096
_OBS_MIN = 64  # flip must corrupt >= this many of _OBS_WIDTH random patterns


def _select_observable(n, cands, k, rng):
    """Draw k sites whose complement visibly and distinctly corrupts outputs.

    Two screens.  A key gate on a net whose flip never reaches an output
    locks nothing: either key value leaves the function intact, so the
    bit is unlearnable from I/O and a DIP-rate analysis sees a phantom
    point function; the acceptance rate (1/64) sits orders of magnitude
    above any point-function ball.  And no two sites may corrupt outputs
    identically: key gates composed through an effectively linear path
    (XOR chains, inverters — in any gate decomposition) cancel pairwise,
    leaving the pair recoverable only up to a joint flip, which no oracle
    query resolves.  Equal flip signatures are that symptom.
    """
    probe = {x: rng.getrandbits(_OBS_WIDTH) for x in n.inputs}
    base = _eval_packed(n, probe, _OBS_WIDTH)
    seen = set()
    picked = []
    for w in rng.sample(cands, len(cands)):
        if len(picked) == k:
            break
        fv = _eval_packed(n, probe, _OBS_WIDTH, flip=w)
        sig = tuple(base[y] ^ fv[y] for y in n.outputs)
        if sum(bin(d).count("1") for d in sig) < _OBS_MIN or sig in seen:
            continue
        picked.append(w)
        seen.add(sig)
    if len(picked) < k:
        raise NetlistError(f"only {len(picked)} of {len(cands)} lockable "
                           f"nets are separable and observable, need {k}")
    return picked


def lock_rll(n, k, seed=0, key_offset=0, sites=None):
    """Insert k XOR/XNOR key gates on random output-reaching nets.

    Gate kind and correct bit are drawn independently; when the pair
    implies an inverter, it is pushed into the fanout gates' duals where
    all of them can absorb it, and otherwise into the driver's dual.
    `sites` optionally narrows the eligible nets.  Returns (locked
    netlist, KeyRecord).
    """
    if n.is_sequential:
        raise NetlistError("lock_rll expects a combinational netlist")
    if k == 0:
        return n, KeyRecord((), seed)
    rng = random.Random(seed)
    reach = _output_reaching_nets(n)
    if sites is not None:
        reach &= set(sites)
    cands = [g.output for g in n.gates if g.kind != "DFF" and g.output in reach]
    if k > len(cands):
        raise NetlistError(f"k={k} exceeds {len(cands)} lockable nets")
    chosen = _select_observable(n, cands, k, rng)

    gates = list(n.gates)
    index = {g.output: i for i, g in enumerate(gates)}
    taken = set(n.inputs) | set(index)
    out_set = set(n.outputs)
    inputs = list(n.inputs)
    keys = list(n.key_inputs)
    bits = []
    for j, w in enumerate(chosen):
        port = _key_port(n, key_offset + j, taken)
        taken.add(port)
        bit = rng.getrandbits(1)
        kind = rng.choice(("XOR", "XNOR"))
        inverts = (kind == "XOR") == (bit == 1)

        raw = _fresh_name(taken, w + ".raw")
        taken.add(raw)
        di = index[w]
        driver = gates[di]
        gates[di] = Gate(raw, driver.kind, driver.fanins)
        if inverts:
            consumers = [i for i, g in enumerate(gates) if w in g.fanins]
            absorbable = (
                w not in out_set
                and consumers
                and all(gates[i].kind in _ABSORB_KINDS and gates[i].fanins.count(w) == 1
                        for i in consumers)
            )
            if absorbable:
                for i in consumers:
                    g = gates[i]
                    gates[i] = Gate(g.output, DUAL_KIND[g.kind], g.fanins)
            else:
                gates[di] = Gate(raw, DUAL_KIND[driver.kind], driver.fanins)
        kg = Gate(w, kind, (raw, port))
        index[raw] = di
        index[w] = len(gates)
        gates.append(kg)
        inputs.append(port)
        keys.append(port)
        bits.append(KeyBit(port, bit, RLL, site=w))
    locked = Netlist(n.name, inputs, n.outputs, gates, keys)
    return locked, KeyRecord(tuple(bits), seed)


def _popcount_le(gates, taken, bits, h, prefix):
    """Emit gates computing [popcount(bits) <= h]; returns the result net."""

    def emit(kind, fanins, base):
        net = _fresh_name(taken, f"{prefix}.{base}")
        taken.add(net)
        gates.append(Gate(net, kind, tuple(fanins)))
        return net

    if h == 0:
        return emit("NOR", bits, "m")
    # ripple-accumulate a binary sum, little-endian; the final carry is
    # dropped whenever the accumulator is already wide enough to hold j
    acc = []
    for j, b in enumerate(bits, start=1):
        carry = b
        grow = len(acc) < j.bit_length()
        for i, s in enumerate(acc):
            last = not grow and i == len(acc) - 1
            acc[i] = emit("XOR", (s, carry), f"s{j}.{i}")
            if not last:
                carry = emit("AND", (s, carry), f"c{j}.{i}")
        if grow:
            acc.append(carry)
    # constant comparison sum <= h, MSB first
    eq = None
    gt = None
    for i in range(len(acc) - 1, -1, -1):
        if (h >> i) & 1:
            eq = acc[i] if eq is None else emit("AND", (eq, acc[i]), f"e{i}")
        else:
            t = acc[i] if eq is None else emit("AND", (eq, acc[i]), f"g{i}")
            gt = t if gt is None else emit("OR", (gt, t), f"o{i}")
            ni = emit("NOT", (acc[i],), f"n{i}")
            eq = ni if eq is None else emit("AND", (eq, ni), f"e{i}")
    if gt is None:
        return emit("CONST1", (), "m")
    return emit("NOT", (gt,), "m")


def lock_pf(n, k, h=0, seed=0, key_offset=0, protected_output=None):
    """Point-function layer: strip a Hamming ball, restore it with a key.

    Picks the widest-support output (unless given), takes its k
    topologically shallowest support inputs as the protected sub-vector,
    and strips the function wherever that sub-vector lies within Hamming
    distance h of a secret cube; a comparator against the key plus a
    corrective XOR restores it.  Returns (locked netlist, KeyRecord).
    """
    if n.is_sequential:
        raise NetlistError("lock_pf expects a combinational netlist")
    if k < 1:
        raise NetlistError("point-function layer needs k >= 1")
    if not 0 <= h < k:
        raise NetlistError("need 0 <= h < k")
    rng = random.Random(seed)
    keys = set(n.key_inputs)

    cones = {}
    for y in n.outputs:
        c = extract_cone(n, y)
        cones[y] = [x for x in c.support if x not in keys]
    if protected_output is None:
        pos = {out: i for i, out in enumerate(n.outputs)}
        protected_output = max(n.outputs, key=lambda out: (len(cones[out]), -pos[out]))
    elif protected_output not in set(n.outputs):
        raise NetlistError(f"unknown output {protected_output!r}")
    y = protected_output
    support = set(cones[y])
    if len(support) < k:
        raise NetlistError(f"cone of {y!r} has {len(support)} support inputs, need {k}")
    if y in set(n.inputs):
        raise NetlistError("protected output is wired straight to an input")

    # min gate-hops from the protected output back to each support input
    depth = {y: 0}
    frontier = [y]
    while frontier:
        nxt = []
        for net in frontier:
            g = n.gate_map.get(net)
            if g is None:
                continue
            for f in g.fanins:
                if f not in depth:
                    depth[f] = depth[net] + 1
                    nxt.append(f)
        frontier = nxt
    order = {x: i for i, x in enumerate(n.inputs)}
    sub = sorted(support, key=lambda x: (depth[x], order[x]))[:k]
    cube = [rng.getrandbits(1) for _ in range(k)]

    gates = list(n.gates)
    index = {g.output: i for i, g in enumerate(gates)}
    taken = set(n.inputs) | set(index)
    inputs = list(n.inputs)
    key_list = list(n.key_inputs)
    bits = []

    def emit(kind, fanins, base):
        net = _fresh_name(taken, base)
        taken.add(net)
        gates.append(Gate(net, kind, tuple(fanins)))
        return net

    # stripped-side distance bits: literal polarity encodes the cube
    d_strip = []
    for i, (x, c) in enumerate(zip(sub, cube)):
        d_strip.append(emit("NOT", (x,), f"{y}.d{i}") if c else x)
    strip_match = _popcount_le(gates, taken, d_strip, h, f"{y}.s")

    # restore side: same comparator against the key ports
    d_rest = []
    for i, x in enumerate(sub):
        port = _key_port(n, key_offset + i, taken)
        taken.add(port)
        inputs.append(port)
        key_list.append(port)
        bits.append(KeyBit(port, cube[i], PF, site=f"{y}:{x}"))
        d_rest.append(emit("XOR", (x, port), f"{y}.r{i}"))
    rest_match = _popcount_le(gates, taken, d_rest, h, f"{y}.k")

    di = index[y]
    driver = gates[di]
    fn = _fresh_name(taken, f"{y}.fn")
    taken.add(fn)
    gates[di] = Gate(fn, driver.kind, driver.fanins)
    stripped = emit("XOR", (fn, strip_match), f"{y}.strip")
    gates.append(Gate(y, "XOR", (stripped, rest_match)))
    locked = Netlist(n.name, inputs, n.outputs, gates, key_list)
    return locked, KeyRecord(tuple(bits), seed)


def lock_layered(n, recipe):
    """Point-function layer first, then random key gates on the result.

    The second layer only targets nets of the original design: dropping a
    key gate inside the fresh restore unit would turn a scattered key bit
    into one more point-function bit.
    """
    rng = random.Random(recipe.seed)
    pf_seed = rng.getrandbits(32)
    rll_seed = rng.getrandbits(32)
    bits = ()
    cur = n
    if recipe.k_pf:
        cur, rec = lock_pf(cur, recipe.k_pf, recipe.h, pf_seed,
                           protected_output=recipe.protected_output)
        bits += rec.bits
    if recipe.k_rll:
        sites = set(g.output for g in n.gates) & set(cur.gate_map)
        cur, rec = lock_rll(cur, recipe.k_rll, rll_seed,
                            key_offset=recipe.k_pf, sites=sites)
        bits += rec.bits
    return cur, KeyRecord(bits, recipe.seed, recipe)


def verify_key(locked, original, key):
    """Equivalence of locked-at-key vs. original; EquivResult carries the
    distinguishing input when they differ."""
    missing = [p for p in locked.key_inputs if p not in key]
    if missing:
        raise NetlistError(f"key assignment missing ports {missing[:5]}")
    return check_equivalence(locked, original, bind={p: key[p] for p in locked.key_inputs})


def write_patch(patch):
    lines = ["[ports]"]
    for old, new in patch.port_map.items():
        lines.append(f"{old} {new}")
    lines.append("[nets]")
    for old, new in patch.net_map.items():
        lines.append(f"{old} {new}")
    lines.append("[kinds]")
    for gid, old, new in patch.kind_flips:
        lines.append(f"{gid} {old} {new}")
    return "\n".join(lines) + "\n"


def read_patch(text):
    section = None
    ports, nets, kinds = {}, {}, []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line in ("[ports]", "[nets]", "[kinds]"):
            section = line[1:-1]
            continue
        parts = line.split()
        if section == "ports" and len(parts) == 2:
            ports[parts[0]] = parts[1]
        elif section == "nets" and len(parts) == 2:
            nets[parts[0]] = parts[1]
        elif section == "kinds" and len(parts) == 3:
            kinds.append((parts[0], parts[1], parts[2]))
        else:
            raise NetlistError(f"patch line {ln}: cannot parse {raw!r}")
    return RenamePatch(net_map=nets, port_map=ports, kind_flips=tuple(kinds))


@dataclass
class BenchmarkPackage:
    name: str
    attacker_dir: str
    blueteam_dir: str
    locked_path: str
    manifest_path: str
    oracle_path: str | None
    key_path: str
    patch_path: str
    record: KeyRecord
    manifest: dict


def _compose_patches(p1, p2):
    net_map = {old: p2.net_map.get(new, new) for old, new in p1.net_map.items()}
    port_map = {old: p2.port_map.get(new, new) for old, new in p1.port_map.items()}
    return RenamePatch(net_map=net_map, port_map=port_map,
                       kind_flips=p1.kind_flips + p2.kind_flips)


def package_benchmark(n, recipe, with_oracle, out_dir, name=None, anon_flips=None):
    """Full blue-team pipeline: anonymize, AIG-rewrite, lock, write files.

    The attacker directory holds the locked netlist, a manifest, and (when
    requested) a sealed oracle bundle; key record and rename patch go to a
    separate blue-team directory.  Byte-identical for identical arguments.
    """
    name = name or n.name
    rng = random.Random(recipe.seed)
    anon_seed = rng.getrandbits(32)
    eligible = sum(1 for g in n.gates if g.kind in FLIP_ELIGIBLE)
    m = anon_flips if anon_flips is not None else min(eligible, max(1, len(n.gates) // 50))
    anon, p1 = anonymize(n, m, anon_seed)
    aig, p2 = to_aig(anon)
    sub_recipe = recipe
    if recipe.protected_output is not None:
        sub_recipe = replace(recipe, protected_output=p1.port_map[recipe.protected_output])
    locked, record = lock_layered(aig, sub_recipe)
    locked = locked.with_name(name)

    atk = os.path.join(out_dir, "attacker")
    blue = os.path.join(out_dir, "blueteam")
    os.makedirs(atk, exist_ok=True)
    os.makedirs(blue, exist_ok=True)

    st = stats(locked)
    manifest = {
        "benchmark": name,
        "inputs": st.inputs,
        "outputs": st.outputs,
        "gates": st.gates,
        "dffs": st.dffs,
        "key_bits": st.key_bits,
        "k_rll": recipe.k_rll,
        "k_pf": recipe.k_pf,
        "pf_family": "sfll-hd",
        "oracle": int(bool(with_oracle)),
    }
    locked_path = os.path.join(atk, f"{name}_locked.bench")
    manifest_path = os.path.join(atk, "manifest.txt")
    _write(locked_path, write_bench(locked))
    _write(manifest_path, format_kv(manifest))
    oracle_path = None
    if with_oracle:
        oracle_path = os.path.join(atk, f"{name}.oracle")
        save_bundle(OracleBundle(aig.with_name(name), name=name), oracle_path)

    key_path = os.path.join(blue, "key.txt")
    patch_path = os.path.join(blue, "patch.txt")
    _write(key_path, record.to_text())
    _write(patch_path, write_patch(_compose_patches(p1, p2)))
    _write(os.path.join(blue, "prelock.bench"), write_bench(aig.with_name(name)))
    _write(os.path.join(blue, "original_input.bench"), write_bench(n))
    _write(os.path.join(blue, "recipe.txt"), format_kv({
        "k_rll": recipe.k_rll, "k_pf": recipe.k_pf, "h": recipe.h,
        "protected_output": sub_recipe.protected_output or "",
        "seed": recipe.seed, "anon_flips": m,
    }))
    return BenchmarkPackage(name, atk, blue, locked_path, manifest_path,
                            oracle_path, key_path, patch_path, record, manifest)


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)

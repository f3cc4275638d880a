"""Sequential locking by FSM augmentation.

A locked design powers up in a corrupted mode: a sequence recognizer built
from added state registers watches a designated set of primary inputs, and
only the exact unlock sequence applied from reset latches a permanent mode
bit.  Until then a subset of outputs is XOR-masked with state-dependent
corruption and the dead recognizer bleeds poison into the original
next-state logic.  With the mode bit set the netlist is cycle-for-cycle
equivalent to the original.
"""
from __future__ import annotations

import logging
import os
import random
from collections import deque
from dataclasses import dataclass

from .netlist import Gate, Netlist, NetlistError, _fresh_name, format_kv, stats, write_bench
from .simulate import OracleBundle, next_state_packed, save_bundle, sim_seq

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KeySequence:
    """Unlock sequence: one frame of key-port bits per cycle, from reset."""

    key_ports: tuple
    frames: tuple

    def __post_init__(self):
        for i, f in enumerate(self.frames):
            if len(f) != len(self.key_ports):
                raise NetlistError(f"frame {i} has {len(f)} bits, expected {len(self.key_ports)}")

    @property
    def length(self):
        return len(self.frames)

    def to_text(self):
        return "".join("".join(str(b & 1) for b in f) + "\n" for f in self.frames)

    @classmethod
    def from_text(cls, text, key_ports):
        frames = []
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if set(line) - {"0", "1"}:
                raise NetlistError(f"sequence line {ln}: not a bitstring: {line!r}")
            frames.append(tuple(int(c) for c in line))
        return cls(tuple(key_ports), tuple(frames))


@dataclass(frozen=True)
class FsmAugmentation:
    """Blue-team record of what lock_seq added, in post-rename names."""

    added_registers: tuple
    mode_register: str
    corrupted_outputs: tuple
    unlock: KeySequence

    def __post_init__(self):
        if self.mode_register not in self.added_registers:
            raise NetlistError("mode register is not among the added registers")
        if not self.corrupted_outputs:
            raise NetlistError("a lock must corrupt at least one output")


def min_extra_regs(seq_len):
    """Registers the recognizer needs: a mode latch plus a saturating
    counter wide enough for values 0..seq_len (the top value is the dead
    sentinel shared with "sequence consumed")."""
    return 1 + seq_len.bit_length()


def lock_seq(n, seq_len, extra_regs, key_port_count, seed=0, corrupt_fraction=1.0):
    """Augment a sequential netlist with an unlock-sequence recognizer.

    Adds `extra_regs` DFFs: a match counter, a permanent mode latch, and
    decoy registers for any surplus.  The counter tracks how many unlock
    frames matched so far; one mismatch sends it to a dead value it never
    leaves.  While the mode latch is 0, each corrupted output is XORed
    with a mask drawn from the added state, and a dead recognizer also
    perturbs part of the original next-state logic.  All internal wires
    are renamed afterwards; port names survive untouched.

    Returns (locked netlist, FsmAugmentation).  The special pair
    seq_len=1, extra_regs=1 uses a counterless recognizer that re-arms
    only in the reset state and poisons the original next-state logic so
    that state is never re-entered.
    """
    if not n.is_sequential:
        raise NetlistError("lock_seq expects a sequential netlist")
    if seq_len < 1:
        raise NetlistError("seq_len < 1")
    if not 1 <= key_port_count <= len(n.inputs):
        raise NetlistError(f"too few inputs: need 1..{len(n.inputs)} key ports, "
                           f"got {key_port_count}")
    special = seq_len == 1 and extra_regs == 1
    need = min_extra_regs(seq_len)
    if not special and extra_regs < need:
        raise NetlistError(f"extra_regs={extra_regs} cannot hold a length-{seq_len} "
                           f"recognizer; need >= {need}")

    rng = random.Random(seed)
    picked = set(rng.sample(range(len(n.inputs)), key_port_count))
    key_ports = tuple(x for i, x in enumerate(n.inputs) if i in picked)
    frames = tuple(tuple(rng.getrandbits(1) for _ in key_ports) for _ in range(seq_len))

    gates = list(n.gates)
    taken = set(n.inputs) | {g.output for g in gates}
    dff_pos = {g.output: i for i, g in enumerate(gates) if g.kind == "DFF"}

    def emit(kind, fanins, base):
        net = _fresh_name(taken, base)
        taken.add(net)
        gates.append(Gate(net, kind, tuple(fanins)))
        return net

    def inv(net, base):
        return emit("NOT", (net,), base)

    # frame-match literals: polarity of each key port encodes the frame bit
    ninv = {}

    def port_lit(port, bit):
        if bit:
            return port
        if port not in ninv:
            ninv[port] = inv(port, f"sl.np.{port}")
        return ninv[port]

    added = []
    mode = _fresh_name(taken, "sl.m")
    taken.add(mode)

    if special:
        state_nets = [g.output for g in n.state_elements]
        at_zero = (inv(state_nets[0], "sl.z") if len(state_nets) == 1
                   else emit("NOR", state_nets, "sl.z"))
        lits = [port_lit(p, b) for p, b in zip(key_ports, frames[0])]
        hit = lits[0] if len(lits) == 1 else emit("AND", lits, "sl.fm0")
        arm = emit("AND", (at_zero, hit), "sl.arm")
        m_next = emit("OR", (mode, arm), "sl.mn")
        gates.append(Gate(mode, "DFF", (m_next,)))
        added.append(mode)
        not_mn = inv(m_next, "sl.nmn")
        # poison: keep the original machine out of the all-zero re-arm state
        # whenever the next cycle would still be locked
        nexts = [gates[dff_pos[s]].fanins[0] for s in state_nets]
        zero_next = (inv(nexts[0], "sl.zn") if len(nexts) == 1
                     else emit("NOR", nexts, "sl.zn"))
        poison = emit("AND", (not_mn, zero_next), "sl.p0")
        tgt = state_nets[0]
        gates[dff_pos[tgt]] = Gate(tgt, "DFF",
                                   (emit("OR", (nexts[0], poison), "sl.d0"),))
        cnt = []
    else:
        w = seq_len.bit_length()
        cnt = []
        for j in range(w):
            c = _fresh_name(taken, f"sl.c{j}")
            taken.add(c)
            cnt.append(c)
        ncnt = [inv(c, f"sl.nc{j}") for j, c in enumerate(cnt)]

        def cnt_lits(value):
            return [cnt[j] if (value >> j) & 1 else ncnt[j] for j in range(w)]

        fm = []
        for v in range(seq_len):
            lits = cnt_lits(v) + [port_lit(p, b) for p, b in zip(key_ports, frames[v])]
            fm.append(emit("AND", lits, f"sl.fm{v}"))
        success = fm[-1]
        if seq_len == 1:
            go_dead = emit("CONST1", (), "sl.gd")
        else:
            onstep = emit("OR", fm, "sl.on")
            go_dead = emit("OR", (inv(onstep, "sl.non"), success), "sl.gd")
        m_next = emit("OR", (mode, success), "sl.mn")
        gates.append(Gate(mode, "DFF", (m_next,)))
        added.append(mode)
        for j in range(w):
            srcs = [fm[v] for v in range(seq_len - 1) if ((v + 1) >> j) & 1]
            if (seq_len >> j) & 1:
                srcs.append(go_dead)
            if not srcs:
                nxt = emit("CONST0", (), f"sl.k{j}")
            elif len(srcs) == 1:
                nxt = srcs[0]
            else:
                nxt = emit("OR", srcs, f"sl.cn{j}")
            gates.append(Gate(cnt[j], "DFF", (nxt,)))
            added.append(cnt[j])

        not_m = inv(mode, "sl.nm")
        # a dead recognizer also bleeds into the original next-state logic,
        # so the locked trajectory diverges in state, not just at the pins
        dead_en = emit("AND", [not_m] + cnt_lits(seq_len), "sl.de")
        state_nets = [g.output for g in n.state_elements]
        for tgt in rng.sample(state_nets, min(2, len(state_nets))):
            g = gates[dff_pos[tgt]]
            spice = emit("XNOR", (rng.choice(cnt), rng.choice(n.inputs)), f"sl.h.{tgt}")
            en = emit("AND", (dead_en, spice), f"sl.pe.{tgt}")
            gates[dff_pos[tgt]] = Gate(tgt, "DFF",
                                       (emit("XOR", (g.fanins[0], en), f"sl.px.{tgt}"),))

    for k in range(extra_regs - len(added)):
        d = _fresh_name(taken, f"sl.x{k}")
        taken.add(d)
        src = rng.choice(n.inputs + tuple(g.output for g in n.state_elements))
        gates.append(Gate(d, "DFF", (emit("XOR", (d, src), f"sl.xn{k}"),)))
        added.append(d)

    eligible = [y for y in n.outputs if y not in set(n.inputs)]
    if not eligible:
        raise NetlistError("every output is wired straight to an input; nothing to corrupt")
    m_corrupt = max(1, min(len(eligible), round(corrupt_fraction * len(eligible))))
    corrupted = [y for y in eligible if y in set(rng.sample(eligible, m_corrupt))]

    # displace each corrupted driver and splice an XOR mask under the port name
    shift = {y: _fresh_name(taken, f"{y}.pre") for y in corrupted}
    taken.update(shift.values())
    gates = [Gate(shift.get(g.output, g.output), g.kind,
                  tuple(shift.get(f, f) for f in g.fanins)) for g in gates]
    not_mode = emit("NOT", (mode,), "sl.nmo")
    for y in corrupted:
        a = rng.choice(cnt) if cnt else rng.choice([g.output for g in n.state_elements])
        a = shift.get(a, a)  # a state net may itself be a displaced output
        b = rng.choice(n.inputs)
        tex = emit("XNOR", (a, b), f"sl.t.{y}")
        mask = emit("AND", (not_mode, tex), f"sl.mk.{y}")
        gates.append(Gate(y, "XOR", (shift[y], mask)))

    ports = set(n.inputs) | set(n.outputs)
    hidden = [g.output for g in gates if g.output not in ports]
    order = list(range(len(hidden)))
    rng.shuffle(order)
    wmap = {}
    for net, idx in zip(hidden, order):
        wmap[net] = _fresh_name(ports, f"w{idx}")
        ports.add(wmap[net])
    gates = [Gate(wmap.get(g.output, g.output), g.kind,
                  tuple(wmap.get(f, f) for f in g.fanins)) for g in gates]
    rng.shuffle(gates)

    locked = Netlist(n.name, n.inputs, n.outputs, gates)
    aug = FsmAugmentation(
        added_registers=tuple(wmap.get(d, d) for d in added),
        mode_register=wmap.get(mode, mode),
        corrupted_outputs=tuple(corrupted),
        unlock=KeySequence(key_ports, frames),
    )
    return locked, aug


def verify_seq_unlock(locked, original, ks, trials=8, seed=0, tail=24):
    """True iff after the unlock prefix the two machines agree cycle-for-cycle.

    Every trial drives both netlists from reset with the unlock frames on
    the key ports (other inputs random), then `tail` fully random frames;
    outputs are compared from the first post-unlock cycle on.  The first
    mismatching cycle is logged.  An empty sequence never unlocks.
    """
    if set(locked.inputs) != set(original.inputs) or set(locked.outputs) != set(original.outputs):
        raise NetlistError("port mismatch between locked and original netlists")
    if ks.length == 0:
        log.info("empty key sequence cannot unlock %s", locked.name)
        return False
    rng = random.Random(seed)
    for t in range(trials):
        frames = []
        for c in range(ks.length + tail):
            a = {x: rng.getrandbits(1) for x in locked.inputs}
            if c < ks.length:
                a.update(zip(ks.key_ports, ks.frames[c]))
            frames.append(a)
        got = sim_seq(locked, frames).outputs
        want = sim_seq(original, frames).outputs
        for c in range(ks.length, len(frames)):
            if got[c] != want[c]:
                bad = sorted(y for y in want[c] if got[c][y] != want[c][y])
                log.info("trial %d: first mismatching cycle %d (outputs %s)",
                         t, c, ",".join(bad[:4]))
                return False
    return True


@dataclass(frozen=True)
class ReachResult:
    """Outcome of reachability_check: unreachable-except-prefix, or a trace."""

    unreachable: bool
    trace: tuple | None
    states_explored: int


def reachability_check(locked, aug, max_states=1 << 16):
    """Exhaustive BFS proof that the mode bit needs the full unlock prefix.

    Explores (register state, prefix progress) pairs from reset over every
    input pattern; the progress component replays the unlock sequence
    independently of the netlist.  If some state asserts the mode register
    without the full prefix having been applied, the offending input trace
    is returned; otherwise the lock is declared bypass-free.  Raises once
    more than max_states pairs have been visited.
    """
    if max_states < 1:
        raise NetlistError("state-space bound exceeded (max_states < 1)")
    ins = locked.inputs
    if len(ins) > 16:
        raise NetlistError(f"{len(ins)} primary inputs is beyond exhaustive reach")
    dffs = [g.output for g in locked.state_elements]
    if aug.mode_register not in set(dffs):
        raise NetlistError(f"mode register {aug.mode_register!r} is not a state net")
    midx = dffs.index(aug.mode_register)
    kidx = [ins.index(p) for p in aug.unlock.key_ports]
    width = 1 << len(ins)
    ones = (1 << width) - 1
    cols = {x: sum(((p >> j) & 1) << p for p in range(width))
            for j, x in enumerate(ins)}

    L = aug.unlock.length
    DEAD = L + 1

    def advance(tr, p):
        if tr >= L:
            return tr
        want = aug.unlock.frames[tr]
        if all(((p >> j) & 1) == b for j, b in zip(kidx, want)):
            return tr + 1
        return DEAD

    start = (tuple([0] * len(dffs)), 0)
    parent = {start: None}
    queue = deque([start])
    succ = {}  # register state -> decoded next-state tuples, one per pattern
    while queue:
        node = queue.popleft()
        s, tr = node
        if s not in succ:
            masks = {d: (ones if b else 0) for d, b in zip(dffs, s)}
            _, nxt = next_state_packed(locked, masks, cols, width)
            succ[s] = [tuple((nxt[d] >> p) & 1 for d in dffs) for p in range(width)]
        for p, ns in enumerate(succ[s]):
            child = (ns, advance(tr, p))
            if child in parent:
                continue
            parent[child] = (node, p)
            if len(parent) > max_states:
                raise NetlistError("state-space bound exceeded")
            if ns[midx] and child[1] != L:
                pats = []
                cur = child
                while parent[cur] is not None:
                    cur, pat = parent[cur]
                    pats.append(pat)
                trace = tuple({x: (p >> j) & 1 for j, x in enumerate(ins)}
                              for p in reversed(pats))
                return ReachResult(False, trace, len(parent))
            queue.append(child)
    return ReachResult(True, None, len(parent))


@dataclass(frozen=True)
class SeqPreset:
    """Shape target for a generated sequential benchmark."""

    name: str
    inputs: int
    outputs: int
    unlock_len: int
    dffs: int
    gates: int


SEQ_PRESETS = {
    "tiny": SeqPreset("tiny", 6, 71, 18, 4, 240),
    "i2c": SeqPreset("i2c", 18, 14, 51, 8, 160),
    "md5": SeqPreset("md5", 41, 35, 63, 12, 300),
    "s35932": SeqPreset("s35932", 36, 32, 134, 12, 320),
    "s15850": SeqPreset("s15850", 13, 87, 52, 8, 260),
    "s13207": SeqPreset("s13207", 11, 121, 103, 8, 300),
    "uart": SeqPreset("uart", 21, 13, 162, 8, 180),
}


def make_seq_target(preset, seed=0):
    """Deterministic random sequential netlist matching a preset's shape."""
    if isinstance(preset, str):
        try:
            preset = SEQ_PRESETS[preset]
        except KeyError:
            raise NetlistError(f"unknown preset {preset!r}; have "
                               f"{', '.join(sorted(SEQ_PRESETS))}") from None
    rng = random.Random(seed)
    ins = [f"pi{i}" for i in range(preset.inputs)]
    regs = [f"r{j}" for j in range(preset.dffs)]
    n_gates = max(preset.gates, preset.outputs + 8, preset.inputs + preset.dffs + 8)
    pool = ins + regs
    comb = []
    for gi in range(n_gates):
        a = comb[-1].output if comb else pool[0]
        if gi < preset.inputs:
            b = ins[gi]
        elif gi < preset.inputs + preset.dffs:
            b = regs[gi - preset.inputs]
        else:
            b = rng.choice(pool)
        if b == a:
            b = rng.choice([x for x in pool if x != a])
        comb.append(Gate(f"u{gi}", rng.choice(
            ("AND", "NAND", "OR", "NOR", "XOR", "XNOR")), (a, b)))
        pool.append(f"u{gi}")
    flops = [Gate(r, "DFF", (rng.choice(comb).output,)) for r in regs]
    outs = [g.output for g in comb[-preset.outputs:]]
    return Netlist(preset.name, ins, outs, comb + flops)


@dataclass
class SeqBenchmarkPackage:
    name: str
    attacker_dir: str
    blueteam_dir: str
    locked_path: str
    manifest_path: str
    oracle_path: str | None
    sequence_path: str
    aug: FsmAugmentation
    manifest: dict


def package_seq_benchmark(n, seq_len, extra_regs, key_port_count, seed,
                          with_oracle, out_dir, name=None, corrupt_fraction=1.0):
    """Lock a sequential netlist and lay out attacker/blue-team directories.

    With an oracle, the attacker side gets the locked netlist plus a sealed
    reset-on-connect oracle over the original.  Without one, the original
    netlist itself is disclosed alongside the locked design — the stated
    rules for the no-oracle sequential round.  Ports keep their names, so
    no rename patch is needed; the unlock sequence and augmentation record
    go to the blue-team side.
    """
    name = name or n.name
    locked, aug = lock_seq(n, seq_len, extra_regs, key_port_count,
                           seed=seed, corrupt_fraction=corrupt_fraction)
    locked = locked.with_name(name)

    atk = os.path.join(out_dir, "attacker")
    blue = os.path.join(out_dir, "blueteam")
    os.makedirs(atk, exist_ok=True)
    os.makedirs(blue, exist_ok=True)

    st = stats(locked)
    manifest = {
        "benchmark": name,
        "style": "seq-fsm",
        "inputs": st.inputs,
        "outputs": st.outputs,
        "gates": st.gates,
        "dffs": st.dffs,
        "oracle": int(bool(with_oracle)),
        "disclosed_netlist": int(not with_oracle),
    }
    locked_path = os.path.join(atk, f"{name}_locked.bench")
    manifest_path = os.path.join(atk, "manifest.txt")
    _write(locked_path, write_bench(locked))
    _write(manifest_path, format_kv(manifest))
    oracle_path = None
    if with_oracle:
        oracle_path = os.path.join(atk, f"{name}.oracle")
        save_bundle(OracleBundle(n.with_name(name), name=name), oracle_path)
    else:
        _write(os.path.join(atk, "original_input.bench"), write_bench(n.with_name(name)))

    sequence_path = os.path.join(blue, "key_sequence.txt")
    _write(sequence_path, aug.unlock.to_text())
    _write(os.path.join(blue, "original_input.bench"), write_bench(n))
    _write(os.path.join(blue, "aug.txt"), format_kv({
        "key_ports": ",".join(aug.unlock.key_ports),
        "unlock_len": aug.unlock.length,
        "mode_register": aug.mode_register,
        "added_registers": ",".join(aug.added_registers),
        "corrupted_outputs": ",".join(aug.corrupted_outputs),
        "seq_len": seq_len,
        "extra_regs": extra_regs,
        "key_port_count": key_port_count,
        "seed": seed,
    }))
    return SeqBenchmarkPackage(name, atk, blue, locked_path, manifest_path,
                               oracle_path, sequence_path, aug, manifest)


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)

"""Logic simulation and I/O-only oracles.

Two independent evaluation paths are kept on purpose: a scalar per-gate
walk and a bit-parallel one packing 64 patterns per machine word (Python
ints extend this to arbitrary widths).  Differential tests compare them.

An OracleBundle answers input/output queries for a benchmark without
exposing its structure.  Opacity is an interface contract: the public
surface carries only port names and query methods.
"""
from __future__ import annotations

import base64
import random
import zlib
from dataclasses import dataclass

from .netlist import Netlist, NetlistError, parse_bench, parse_kv, topo_order, write_bench

WORD = 64


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SeqTrace:
    """Frame-indexed record of one sequential run."""
    inputs: tuple
    outputs: tuple
    states: tuple | None = None


def _check_cover(n, a, nets):
    missing = [x for x in nets if x not in a]
    if missing:
        raise SimulationError(f"missing input bits for {missing[:5]}")


def sim_comb(n, a):
    """Scalar combinational simulation: assignment over inputs -> outputs."""
    if n.is_sequential:
        raise SimulationError("netlist has state elements; use sim_seq")
    values = _eval_scalar(n, a)
    return {y: values[y] for y in n.outputs}


def _eval_scalar(n, a, state=None):
    _check_cover(n, a, n.inputs)
    v = {x: a[x] & 1 for x in n.inputs}
    if state:
        v.update(state)
    for g in topo_order(n):
        if g.kind == "DFF":
            continue
        k = g.kind
        if k == "AND":
            r = 1
            for f in g.fanins:
                r &= v[f]
        elif k == "NAND":
            r = 1
            for f in g.fanins:
                r &= v[f]
            r ^= 1
        elif k == "OR":
            r = 0
            for f in g.fanins:
                r |= v[f]
        elif k == "NOR":
            r = 0
            for f in g.fanins:
                r |= v[f]
            r ^= 1
        elif k == "XOR":
            r = 0
            for f in g.fanins:
                r ^= v[f]
        elif k == "XNOR":
            r = 1
            for f in g.fanins:
                r ^= v[f]
        elif k == "NOT":
            r = v[g.fanins[0]] ^ 1
        elif k == "BUFF":
            r = v[g.fanins[0]]
        elif k == "CONST0":
            r = 0
        else:  # CONST1
            r = 1
        v[g.output] = r
    return v


def sim_comb_packed(n, a, width):
    """Bit-parallel combinational simulation.

    `a` maps each input net to an int whose bit p is the net's value in
    pattern p; `width` is the pattern count.  Returns output masks.
    """
    if n.is_sequential:
        raise SimulationError("netlist has state elements; use sim_seq")
    v = _eval_packed(n, a, width)
    return {y: v[y] for y in n.outputs}


def _eval_packed(n, a, width, state=None, flip=None):
    # `flip` complements one net's computed value in every pattern —
    # fault-injection hook for observability probing
    _check_cover(n, a, n.inputs)
    mask = (1 << width) - 1
    v = {x: a[x] & mask for x in n.inputs}
    if state:
        v.update(state)
    if flip in v:
        v[flip] ^= mask
    for g in topo_order(n):
        if g.kind == "DFF":
            continue
        k = g.kind
        fi = g.fanins
        if k == "AND" or k == "NAND":
            r = v[fi[0]]
            for f in fi[1:]:
                r &= v[f]
            if k == "NAND":
                r ^= mask
        elif k == "OR" or k == "NOR":
            r = v[fi[0]]
            for f in fi[1:]:
                r |= v[f]
            if k == "NOR":
                r ^= mask
        elif k == "XOR" or k == "XNOR":
            r = v[fi[0]]
            for f in fi[1:]:
                r ^= v[f]
            if k == "XNOR":
                r ^= mask
        elif k == "NOT":
            r = v[fi[0]] ^ mask
        elif k == "BUFF":
            r = v[fi[0]]
        elif k == "CONST0":
            r = 0
        else:  # CONST1
            r = mask
        if g.output == flip:
            r ^= mask
        v[g.output] = r
    return v


def sim_seq(n, frames, init=None, record_states=False):
    """Cycle-accurate sequential simulation from the all-zero reset state.

    Frame i is an assignment over the primary inputs; the outputs for
    cycle i are computed from (state_i, frame_i) and every DFF takes its
    fanin's cycle-i value as state for cycle i+1.
    """
    if not n.is_sequential:
        raise SimulationError("netlist has no state elements; use sim_comb")
    state = {g.output: 0 for g in n.state_elements}
    if init:
        for k, b in init.items():
            if k not in state:
                raise SimulationError(f"{k!r} is not a state net")
            state[k] = b & 1
    outs, states = [], []
    for a in frames:
        v = _eval_scalar(n, a, state)
        outs.append({y: v[y] for y in n.outputs})
        if record_states:
            states.append(dict(state))
        state = {g.output: v[g.fanins[0]] for g in n.state_elements}
    return SeqTrace(tuple(dict(f) for f in frames), tuple(outs),
                    tuple(states) if record_states else None)


def sim_seq_packed(n, frames, width, init=None):
    """Packed variant of sim_seq: every frame maps inputs to width-wide masks.

    All width patterns run in lockstep; `init` maps state nets to masks
    (default all-zero).  Returns (output frames, final state).
    """
    if not n.is_sequential:
        raise SimulationError("netlist has no state elements; use sim_comb")
    state = {g.output: 0 for g in n.state_elements}
    if init:
        state.update(init)
    outs = []
    for a in frames:
        v = _eval_packed(n, a, width, state)
        outs.append({y: v[y] for y in n.outputs})
        state = {g.output: v[g.fanins[0]] for g in n.state_elements}
    return outs, state


def next_state_packed(n, state, inputs, width):
    """One packed transition step: (state, inputs) -> (outputs, next state)."""
    v = _eval_packed(n, inputs, width, state)
    outs = {y: v[y] for y in n.outputs}
    nxt = {g.output: v[g.fanins[0]] for g in n.state_elements}
    return outs, nxt


class OracleBundle:
    """Sealed input/output oracle for a benchmark.

    The payload is either the original netlist or a locked netlist plus its
    correct key; either way only query interfaces are public.  Sequential
    oracles reset to the all-zero state at the start of every session
    (one `query_seq` call, or one served connection).
    """

    def __init__(self, netlist, key=None, name=None):
        self._net = netlist
        self._key = {k: v & 1 for k, v in (key or {}).items()}
        missing = [k for k in netlist.key_inputs if k not in self._key]
        if missing:
            raise SimulationError(f"bundle lacks bits for key ports {missing[:5]}")
        self.name = name if name is not None else netlist.name
        self.mode = "seq" if netlist.is_sequential else "comb"
        self.input_ports = netlist.data_inputs
        self.output_ports = netlist.outputs

    def query(self, a):
        """Combinational query: assignment over input_ports -> outputs."""
        if self.mode != "comb":
            raise SimulationError("sequential oracle: use query_seq")
        full = dict(self._key)
        full.update({x: a[x] & 1 for x in self.input_ports})
        return sim_comb(self._net, full)

    def query_packed(self, a, width):
        """Packed combinational query (width patterns at once)."""
        if self.mode != "comb":
            raise SimulationError("sequential oracle: use query_seq")
        mask = (1 << width) - 1
        full = {k: mask * v for k, v in self._key.items()}
        full.update({x: a[x] & mask for x in self.input_ports})
        return sim_comb_packed(self._net, full, width)

    def query_seq(self, frames):
        """Sequential session: list of input frames -> list of output frames.

        State resets to all-zero at the start of the call.
        """
        if self.mode != "seq":
            raise SimulationError("combinational oracle: use query")
        full = []
        for a in frames:
            f = dict(self._key)
            f.update({x: a[x] & 1 for x in self.input_ports})
            full.append(f)
        return list(sim_seq(self._net, full).outputs)


def oracle_query(o, a):
    """Functional wrapper over OracleBundle.query."""
    return o.query(a)


def _parse_bits(s, ports):
    if len(s) != len(ports):
        raise ValueError("length")
    out = {}
    for ch, p in zip(s, ports):
        if ch == "0":
            out[p] = 0
        elif ch == "1":
            out[p] = 1
        else:
            raise ValueError("parse")
    return out


def _format_bits(vals, ports):
    return "".join("1" if vals[p] else "0" for p in ports)


def oracle_serve(o, in_stream, out_stream):
    """Serve the line protocol until EOF.

    ``Q <bits>`` answers a combinational query, ``S <frame>;<frame>;...``
    a sequential session; the first character of a bitstring is the first
    declared port.  Replies are ``A <bits>`` / ``A <frame>;...`` or
    ``E <reason>`` (reasons: parse, length, mode).
    """
    for raw in in_stream:
        line = raw.strip()
        if not line:
            continue
        try:
            if line.startswith("Q "):
                if o.mode != "comb":
                    raise SimulationError("mode")
                vals = o.query(_parse_bits(line[2:].strip(), o.input_ports))
                reply = "A " + _format_bits(vals, o.output_ports)
            elif line.startswith("S "):
                if o.mode != "seq":
                    raise SimulationError("mode")
                frames = [_parse_bits(f.strip(), o.input_ports)
                          for f in line[2:].split(";") if f.strip() != ""]
                outs = o.query_seq(frames)
                reply = "A " + ";".join(_format_bits(v, o.output_ports) for v in outs)
            else:
                raise ValueError("parse")
        except SimulationError:
            reply = "E mode"
        except ValueError as e:
            reason = str(e.args[0]) if e.args else "parse"
            reply = "E " + (reason if reason in ("parse", "length") else "parse")
        out_stream.write(reply + "\n")
        out_stream.flush()


def save_bundle(o, path):
    """Write a bundle to disk.  The payload is compressed and encoded so the
    file carries no cleartext structure; this is a trust boundary, not a
    cryptographic seal."""
    bench = write_bench(o._net)
    keytxt = "".join(f"{k} {v}\n" for k, v in sorted(o._key.items()))
    blob = base64.b64encode(zlib.compress((bench + "\x00" + keytxt).encode())).decode()
    lines = [
        "# sealed oracle bundle",
        f"version = 1",
        f"name = {o.name}",
        f"mode = {o.mode}",
        f"payload = {blob}",
        "",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def load_bundle(path):
    with open(path) as fh:
        meta = parse_kv(fh.read())
    if meta.get("version") != "1":
        raise SimulationError(f"unsupported bundle version {meta.get('version')!r}")
    bench, _, keytxt = zlib.decompress(base64.b64decode(meta["payload"])).decode().partition("\x00")
    key = {}
    for line in keytxt.splitlines():
        port, bit = line.split()
        key[port] = int(bit)
    net = parse_bench(bench, name=meta.get("name", "oracle"))
    return OracleBundle(net, key=key, name=meta.get("name"))


def corruption_rate(locked, oracle, key, samples=1024, seed=0):
    """Fraction of sampled input patterns where any output differs between
    the keyed locked netlist and the oracle.

    Sampling is uniform over the non-key input space with replacement,
    driven by `seed`; the same seed reproduces the same estimate.
    """
    rng = random.Random(seed)
    ports = locked.data_inputs
    if set(ports) != set(oracle.input_ports) or set(locked.outputs) != set(oracle.output_ports):
        raise SimulationError("locked netlist and oracle disagree on ports")
    mask = (1 << samples) - 1
    a = {x: rng.getrandbits(samples) for x in ports}
    full = {k: mask * (v & 1) for k, v in key.items()}
    full.update(a)
    got = sim_comb_packed(locked, full, samples)
    want = oracle.query_packed(a, samples)
    diff = 0
    for y in locked.outputs:
        diff |= got[y] ^ want[y]
    return bin(diff).count("1") / samples

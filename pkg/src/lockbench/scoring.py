"""Submission scoring: exact bit matching against blue-team truth.

Combinational submissions are scored per lock layer as x/y — bits
verified correct out of bits claimed, matched positionally by port name
with no equivalence-class credit.  Sequential submissions score the
identified key ports a/b against the true port set and the recovered
unlock sequence c/d as the longest claimed prefix that agrees with the
true sequence on the correctly identified ports.  Scoring is a pure
function of (truth, submission); rendering emits one human text table
and one versioned machine-readable report.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .locks import KeyRecord
from .netlist import NetlistError
from .seqlock import KeySequence


@dataclass(frozen=True)
class Submission:
    """Parsed attacker claim: key bits and/or an unlock sequence."""

    bits: tuple = ()
    ports: tuple | None = None
    frames: tuple = ()

    @property
    def claims_sequence(self):
        return self.ports is not None


def parse_submission(text):
    """Parse the submission file format.

    One ``<port> <0|1>`` line per combinational bit; a sequential claim
    is a ``PORTS p1,p2,...`` line followed by one ``FRAME <bits>`` line
    per cycle.  Blank lines and ``#`` comments are ignored.
    """
    bits = []
    seen = set()
    ports = None
    frames = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("PORTS"):
            if ports is not None:
                raise NetlistError(f"submission line {ln}: duplicate PORTS")
            rest = line[5:].strip()
            ports = tuple(p.strip() for p in rest.split(",") if p.strip())
            if len(set(ports)) != len(ports):
                raise NetlistError(f"submission line {ln}: repeated key port")
            continue
        if line.startswith("FRAME"):
            if ports is None:
                raise NetlistError(f"submission line {ln}: FRAME before PORTS")
            word = line[5:].strip()
            if set(word) - {"0", "1"} or len(word) != len(ports):
                raise NetlistError(
                    f"submission line {ln}: frame needs {len(ports)} bits")
            frames.append(tuple(int(c) for c in word))
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise NetlistError(f"submission line {ln}: expected '<port> <0|1>'")
        if parts[0] in seen:
            raise NetlistError(f"submission line {ln}: port {parts[0]!r} claimed twice")
        seen.add(parts[0])
        bits.append((parts[0], int(parts[1])))
    return Submission(tuple(bits), ports, tuple(frames))


@dataclass(frozen=True)
class LayerScore:
    layer: str
    correct: int
    claimed: int
    truth_bits: int

    def __post_init__(self):
        if not 0 <= self.correct <= self.claimed:
            raise ValueError("layer score needs 0 <= correct <= claimed")

    @property
    def cell(self):
        return f"{self.correct}/{self.claimed}"


@dataclass(frozen=True)
class ScoreCard:
    """One benchmark's scored outcome, Table-cell ready."""

    benchmark: str
    scenario: str
    technique: str
    layers: tuple = ()
    ports_correct: int = 0
    ports_claimed: int = 0
    truth_ports: int = 0
    seq_recovered: int = 0
    seq_true: int = 0
    seconds: float = 0.0
    unknown_ports: tuple = ()
    sequential: bool = False

    def __post_init__(self):
        if not 0 <= self.ports_correct <= self.ports_claimed:
            raise ValueError("need 0 <= a <= b")
        if not 0 <= self.seq_recovered <= max(self.seq_true, self.seq_recovered):
            raise ValueError("need 0 <= c")
        if self.seq_true and self.seq_recovered > self.seq_true:
            raise ValueError("need c <= d")

    def cell(self, layer):
        for ls in self.layers:
            if ls.layer == layer:
                return ls.cell
        return "-"

    @property
    def sequence_cell(self):
        if not self.sequential:
            return "-"
        return (f"{self.ports_correct}/{self.ports_claimed} & "
                f"{self.seq_recovered}/{self.seq_true}")


def score_combinational(truth, submission, benchmark="", scenario="",
                        technique="", seconds=0.0):
    """Exact per-layer bit matching of a submission against a KeyRecord."""
    if isinstance(truth, str):
        truth = KeyRecord.from_text(truth)
    value = truth.as_dict()
    layer_of = {b.port: b.layer for b in truth.bits}
    order = []
    for b in truth.bits:
        if b.layer not in order:
            order.append(b.layer)
    claimed = {l: 0 for l in order}
    correct = {l: 0 for l in order}
    unknown = []
    for port, v in submission.bits:
        layer = layer_of.get(port)
        if layer is None:
            unknown.append(port)
            continue
        claimed[layer] += 1
        if value[port] == v:
            correct[layer] += 1
    layers = [LayerScore(l, correct[l], claimed[l],
                         sum(1 for b in truth.bits if b.layer == l))
              for l in order]
    if unknown:
        layers.append(LayerScore("unknown", 0, len(unknown), 0))
    return ScoreCard(benchmark, scenario, technique, tuple(layers),
                     seconds=seconds, unknown_ports=tuple(sorted(unknown)))


def score_sequential(truth, submission, benchmark="", scenario="",
                     technique="", seconds=0.0):
    """Score a sequential claim against the true unlock sequence.

    a/b: claimed key ports correct / claimed.  c/d: longest prefix of
    the claimed frames agreeing with the true sequence on the correctly
    identified ports, over the true length.  A claim identifying no true
    port recovers nothing of the sequence.
    """
    if not isinstance(truth, KeySequence):
        raise NetlistError("sequential scoring needs a KeySequence truth")
    ports = submission.ports or ()
    true_idx = {p: i for i, p in enumerate(truth.key_ports)}
    matched = [(i, true_idx[p]) for i, p in enumerate(ports) if p in true_idx]
    a, b = len(matched), len(ports)
    d = truth.length
    c = 0
    if matched or not ports:
        for t in range(min(len(submission.frames), d)):
            if all(submission.frames[t][i] == truth.frames[t][j]
                   for i, j in matched):
                c += 1
            else:
                break
    if not matched and submission.frames:
        c = 0
    return ScoreCard(benchmark, scenario, technique, (),
                     ports_correct=a, ports_claimed=b,
                     truth_ports=len(truth.key_ports),
                     seq_recovered=c, seq_true=d, seconds=seconds,
                     sequential=True)


def score(truth, submission, **kw):
    """Dispatch on truth type; accepts raw submission text."""
    if isinstance(submission, str):
        submission = parse_submission(submission)
    if isinstance(truth, KeySequence):
        return score_sequential(truth, submission, **kw)
    return score_combinational(truth, submission, **kw)


def render_table(cards):
    """Text table, one row per score card."""
    layer_names = []
    for c in cards:
        for ls in c.layers:
            if ls.layer not in layer_names:
                layer_names.append(ls.layer)
    header = ["benchmark", "scenario", "technique", *[l.lower() for l in layer_names],
              "sequence", "time"]
    rows = [header]
    for c in cards:
        rows.append([c.benchmark, c.scenario, c.technique,
                     *[c.cell(l) for l in layer_names],
                     c.sequence_cell, f"{c.seconds:.1f}s"])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    out = []
    for ri, r in enumerate(rows):
        out.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if ri == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


REPORT_VERSION = 1


def report_dict(card):
    return {
        "version": REPORT_VERSION,
        "benchmark": card.benchmark,
        "scenario": card.scenario,
        "technique": card.technique,
        "layers": [{"layer": ls.layer, "correct": ls.correct,
                    "claimed": ls.claimed, "truth_bits": ls.truth_bits}
                   for ls in card.layers],
        "ports_correct": card.ports_correct,
        "ports_claimed": card.ports_claimed,
        "truth_ports": card.truth_ports,
        "sequence_recovered": card.seq_recovered,
        "sequence_true": card.seq_true,
        "sequential": card.sequential,
        "unknown_ports": list(card.unknown_ports),
        "seconds": round(card.seconds, 3),
    }


def report_json(cards):
    if isinstance(cards, ScoreCard):
        cards = [cards]
    return json.dumps({"version": REPORT_VERSION,
                       "cards": [report_dict(c) for c in cards]},
                      indent=2, sort_keys=True) + "\n"

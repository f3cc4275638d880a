"""Command-line workbench: lock, attack, oracle, verify, score.

Each verb is an independent process.  `lock` writes an attacker/blue-team
benchmark package, `oracle` serves a sealed bundle over stdio or TCP,
`attack` runs one technique against an attacker directory and writes a
submission plus a machine-readable report, `verify` is a thin equivalence
check with a key bound, and `score` matches a submission against
blue-team truth.  Exit codes: 0 success, 1 verification mismatch,
2 usage/parse errors.
"""
from __future__ import annotations

import argparse
import io
import json
import os
import socketserver
import sys
import time

from . import attacks
from .locks import (
    COMB_PRESETS, KeyRecord, LockRecipe, make_comb_target, package_benchmark,
)
from .netlist import NetlistError, parse_bench, parse_kv
from .satcore import COMPLETE, Budget, BudgetExceeded, check_equivalence, sat_attack
from .seqlock import (
    KeySequence, SEQ_PRESETS, make_seq_target, min_extra_regs,
    package_seq_benchmark,
)
from .simulate import load_bundle, oracle_serve
from .scoring import parse_submission, render_table, report_json, score

REPORT_VERSION = 1


class CliError(Exception):
    """Usage or input problem; maps to exit code 2."""


def _read(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _budget(args):
    return Budget(max_iterations=args.budget_iterations,
                  max_seconds=args.budget_seconds)


# ------------------------------------------------------------------- lock

def cmd_lock(args):
    if args.preset and args.preset in SEQ_PRESETS:
        args.seq = True
    if args.seq:
        return _lock_seq(args)
    return _lock_comb(args)


def _lock_comb(args):
    k_rll, k_pf, h = args.k_rll, args.k_pf, args.h
    if args.preset:
        try:
            p = COMB_PRESETS[args.preset]
        except KeyError:
            raise CliError(f"unknown combinational preset {args.preset!r}") from None
        k_rll = p.k_rll if k_rll is None else k_rll
        k_pf = p.k_pf if k_pf is None else k_pf
        h = p.h if h is None else h
    k_rll = k_rll or 0
    k_pf = k_pf or 0
    h = h or 0
    if k_rll == 0 and k_pf == 0:
        raise CliError("refusing a no-op lock: both --k-rll and --k-pf are 0")
    if args.input:
        n = parse_bench(_read(args.input), name=args.name or "design")
    else:
        # no circuit supplied: deterministic desk-scale target wide enough
        # for the requested point-function cube
        ni = max(16, k_pf + 4)
        n = make_comb_target(ni, max(4, ni // 2), args.gen_gates or 12 * ni,
                             seed=args.seed, name=args.name or "target")
    recipe = LockRecipe(k_rll=k_rll, k_pf=k_pf, h=h, seed=args.seed)
    pkg = package_benchmark(n, recipe, not args.no_oracle, args.out,
                            name=args.name or n.name)
    print(f"wrote {pkg.attacker_dir} ({pkg.manifest['key_bits']} key bits: "
          f"{k_rll} RLL + {k_pf} PF)")
    print(f"blue-team records in {pkg.blueteam_dir}")
    return 0


def _lock_seq(args):
    seq_len, key_ports = args.seq_len, args.key_ports
    if args.preset:
        try:
            p = SEQ_PRESETS[args.preset]
        except KeyError:
            raise CliError(f"unknown sequential preset {args.preset!r}") from None
        seq_len = p.unlock_len if seq_len is None else seq_len
        if args.input:
            n = parse_bench(_read(args.input), name=args.name or p.name)
        else:
            n = make_seq_target(p, seed=args.seed)
    else:
        if not args.input:
            raise CliError("sequential lock needs --preset or --input")
        n = parse_bench(_read(args.input), name=args.name or "design")
    if seq_len is None:
        raise CliError("sequential lock needs --seq-len (or a preset)")
    if seq_len <= 0:
        raise CliError("refusing a no-op lock: --seq-len must be positive")
    extra = args.extra_regs if args.extra_regs is not None else min_extra_regs(seq_len)
    if key_ports is None:
        key_ports = max(2, len(n.inputs) // 2)
    pkg = package_seq_benchmark(n, seq_len, extra, key_ports, args.seed,
                                not args.no_oracle, args.out,
                                name=args.name or n.name,
                                corrupt_fraction=args.corrupt_fraction)
    print(f"wrote {pkg.attacker_dir} (unlock length {seq_len}, "
          f"{extra} added registers)")
    print(f"blue-team records in {pkg.blueteam_dir}")
    return 0


# ----------------------------------------------------------------- attack

_ORACLE_TECHNIQUES = ("sat", "sensitization", "bitflip", "hd", "subcircuit",
                      "seq-unroll")
_ORACLELESS_TECHNIQUES = ("unit-function", "redundancy")
TECHNIQUES = _ORACLE_TECHNIQUES + _ORACLELESS_TECHNIQUES


def _run_sat(locked, oracle, args, budget):
    key, trace, status = sat_attack(locked, oracle, budget=budget)
    notes = () if status == COMPLETE else (f"dip loop ended: {status}",)
    return attacks.AttackReport(
        "sat", "oracle",
        claimed_bits=tuple((p, key[p]) for p in locked.key_inputs if p in key),
        iterations=trace.iterations, verified=status == COMPLETE, notes=notes)


def _run_attack(locked, oracle, args, budget):
    t = args.technique
    if t == "sat":
        return _run_sat(locked, oracle, args, budget)
    if t == "sensitization":
        return attacks.attack_sensitization(locked, oracle, budget=budget)
    if t == "bitflip":
        return attacks.attack_bitflip(locked, oracle, budget=budget,
                                      seed=args.seed)
    if t == "hd":
        return attacks.attack_hd(locked, oracle, args.distance,
                                 budget=budget, seed=args.seed)
    if t == "subcircuit":
        return attacks.attack_subcircuit_sat(locked, oracle, budget=budget)
    if t == "unit-function":
        return attacks.attack_unit_function(locked)
    if t == "redundancy":
        return attacks.attack_redundancy(locked, margin=args.margin)
    if t == "seq-unroll":
        return attacks.attack_seq_unroll(locked, oracle, args.max_cycles,
                                         budget=budget, seed=args.seed)
    raise CliError(f"unknown technique {t!r}; have {', '.join(TECHNIQUES)}")


def _attack_report_dict(report):
    d = {
        "version": REPORT_VERSION,
        "kind": "attack-report",
        "technique": report.technique,
        "scenario": report.scenario,
        "claimed_bits": len(report.claimed_bits),
        "claimed_ports": list(report.claimed_ports),
        "sequence_length": (report.claimed_sequence.length
                            if report.claimed_sequence is not None else None),
        "iterations": report.iterations,
        "verified": report.verified,
        "notes": list(report.notes),
        "seconds": round(report.seconds, 3),
    }
    return d


def cmd_attack(args):
    if args.technique not in TECHNIQUES:
        raise CliError(f"unknown technique {args.technique!r}; "
                       f"have {', '.join(TECHNIQUES)}")
    target = args.target
    if os.path.isdir(target):
        mf = parse_kv(_read(os.path.join(target, "manifest.txt")))
        target = os.path.join(target, f"{mf['benchmark']}_locked.bench")
        if args.oracle is None and not args.no_oracle:
            cand = os.path.join(os.path.dirname(target),
                                f"{mf['benchmark']}.oracle")
            if os.path.exists(cand):
                args.oracle = cand
    locked = parse_bench(_read(target))
    oracle = None
    needs_oracle = args.technique in _ORACLE_TECHNIQUES
    if args.no_oracle and args.oracle:
        raise CliError("--no-oracle contradicts --oracle")
    if needs_oracle:
        if args.oracle is None or args.no_oracle:
            raise CliError(f"oracle scenario required for {args.technique!r}")
        oracle = load_bundle(args.oracle)
    budget = _budget(args)
    t0 = time.monotonic()
    try:
        report = _run_attack(locked, oracle, args, budget)
    except BudgetExceeded as e:
        report = attacks.AttackReport(args.technique,
                                      "oracle" if needs_oracle else "oracle-less",
                                      seconds=time.monotonic() - t0,
                                      notes=(f"budget exhausted: {e}",))
    os.makedirs(args.out, exist_ok=True)
    sub_path = os.path.join(args.out, "submission.txt")
    rep_path = os.path.join(args.out, "report.json")
    attacks.write_submission(report, sub_path)
    _write(rep_path, json.dumps(_attack_report_dict(report),
                                indent=2, sort_keys=True) + "\n")
    claim = f"{len(report.claimed_bits)} bit(s)"
    if report.claimed_sequence is not None:
        claim += f", sequence of {report.claimed_sequence.length}"
    print(f"{report.technique}: claimed {claim} in {report.seconds:.1f}s "
          f"-> {sub_path}")
    for note in report.notes:
        print(f"note: {note}")
    return 0


# ----------------------------------------------------------------- oracle

class _OracleTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def cmd_oracle(args):
    bundle = load_bundle(args.bundle)
    if args.port is None:
        oracle_serve(bundle, sys.stdin, sys.stdout)
        return 0

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            rin = io.TextIOWrapper(self.rfile)
            wout = io.TextIOWrapper(self.wfile, write_through=True)
            try:
                oracle_serve(bundle, rin, wout)
            except (BrokenPipeError, ConnectionResetError):
                pass

    with _OracleTCPServer((args.host, args.port), Handler) as srv:
        print(f"serving {bundle.name} on {srv.server_address[0]}:"
              f"{srv.server_address[1]}", flush=True)
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0


# ----------------------------------------------------------------- verify

def _load_key_file(text):
    try:
        return KeyRecord.from_text(text).as_dict()
    except NetlistError:
        pass
    sub = parse_submission(text)
    if sub.claims_sequence:
        raise CliError("key file claims a sequence; verify is combinational")
    return dict(sub.bits)


def cmd_verify(args):
    locked = parse_bench(_read(args.locked))
    original = parse_bench(_read(args.original))
    key = _load_key_file(_read(args.key))
    backend = True if args.external else None
    res = check_equivalence(locked, original, bind=key,
                            budget=_budget(args), backend=backend)
    if res.equivalent:
        print("EQUIVALENT")
        return 0
    cex = " ".join(f"{p}={v}" for p, v in sorted(res.counterexample.items()))
    print(f"DIFFER {cex}")
    return 1


# ------------------------------------------------------------------ score

def _load_truth(path):
    if os.path.isdir(path):
        key = os.path.join(path, "key.txt")
        if os.path.exists(key):
            return KeyRecord.from_text(_read(key))
        seq = os.path.join(path, "key_sequence.txt")
        aug = os.path.join(path, "aug.txt")
        if os.path.exists(seq) and os.path.exists(aug):
            meta = parse_kv(_read(aug))
            ports = tuple(p for p in meta["key_ports"].split(",") if p)
            return KeySequence.from_text(_read(seq), ports)
        raise CliError(f"no key.txt or key_sequence.txt under {path}")
    return KeyRecord.from_text(_read(path))


def cmd_score(args):
    truth = _load_truth(args.truth)
    sub = parse_submission(_read(args.submission))
    card = score(truth, sub, benchmark=args.benchmark,
                 scenario=args.scenario, technique=args.technique,
                 seconds=args.seconds)
    sys.stdout.write(render_table([card]))
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.submission)),
                                   "score.json")
    _write(out, report_json(card))
    print(f"report -> {out}")
    return 0


# ------------------------------------------------------------------- main

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget-seconds", type=float, default=600.0)
    common.add_argument("--budget-iterations", type=int, default=10_000)
    common.add_argument("--out", default="out")

    ap = argparse.ArgumentParser(
        prog="lockbench",
        description="gate-level logic-locking workbench")
    sub = ap.add_subparsers(dest="verb", required=True)

    pl = sub.add_parser("lock", parents=[common],
                        help="lock a netlist and package a benchmark")
    pl.add_argument("--preset", choices=sorted(COMB_PRESETS) + sorted(SEQ_PRESETS))
    pl.add_argument("--input", help=".bench netlist to lock (generated when omitted)")
    pl.add_argument("--name")
    pl.add_argument("--k-rll", type=int, default=None)
    pl.add_argument("--k-pf", type=int, default=None)
    pl.add_argument("--h", type=int, default=None)
    pl.add_argument("--gen-gates", type=int, default=None)
    pl.add_argument("--seq", action="store_true",
                    help="sequential FSM lock instead of combinational layers")
    pl.add_argument("--seq-len", type=int, default=None)
    pl.add_argument("--extra-regs", type=int, default=None)
    pl.add_argument("--key-ports", type=int, default=None)
    pl.add_argument("--corrupt-fraction", type=float, default=1.0)
    pl.add_argument("--no-oracle", action="store_true")
    pl.set_defaults(fn=cmd_lock)

    pa = sub.add_parser("attack", parents=[common],
                        help="run one attack technique, write a submission")
    pa.add_argument("--target", required=True,
                    help="locked .bench file or attacker directory")
    pa.add_argument("--technique", required=True)
    pa.add_argument("--oracle", help="sealed oracle bundle")
    pa.add_argument("--no-oracle", action="store_true")
    pa.add_argument("--distance", type=int, default=0, help="hd search radius")
    pa.add_argument("--max-cycles", type=int, default=8)
    pa.add_argument("--margin", type=int, default=2)
    pa.set_defaults(fn=cmd_attack)

    po = sub.add_parser("oracle", parents=[common],
                        help="serve a sealed oracle bundle (stdio or TCP)")
    po.add_argument("--bundle", required=True)
    po.add_argument("--port", type=int, default=None,
                    help="TCP port (0 picks one); stdio when omitted")
    po.add_argument("--host", default="127.0.0.1")
    po.set_defaults(fn=cmd_oracle)

    pv = sub.add_parser("verify", parents=[common],
                        help="equivalence of locked-with-key vs original")
    pv.add_argument("--locked", required=True)
    pv.add_argument("--original", required=True)
    pv.add_argument("--key", required=True)
    pv.add_argument("--external", action="store_true",
                    help="route the solve through the DIMACS bridge "
                         "(LOCKBENCH_EXT_SOLVER)")
    pv.set_defaults(fn=cmd_verify)

    ps = sub.add_parser("score", parents=[common],
                        help="score a submission against blue-team truth")
    ps.add_argument("--truth", required=True,
                    help="blue-team directory or key record file")
    ps.add_argument("--submission", required=True)
    ps.add_argument("--benchmark", default="")
    ps.add_argument("--scenario", default="")
    ps.add_argument("--technique", default="")
    ps.add_argument("--seconds", type=float, default=0.0)
    ps.set_defaults(fn=cmd_score, out=None)
    return ap


def main(argv=None):
    ap = _parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NetlistError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

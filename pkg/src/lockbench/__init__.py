"""Gate-level logic-locking workbench.

Lock combinational and sequential BENCH netlists, package attacker-facing
benchmarks with I/O-only oracles, run the key-recovery attack suite, and
score submissions.  `python -m lockbench.cli --help` (or the `lockbench`
entry point) drives the same operations from the command line.
"""

from .netlist import (
    CycleError, Gate, Netlist, NetlistError, ParseError, RenamePatch,
    anonymize, cone_netlist, extract_cone, parse_bench, reverse_patch,
    stats, substitute, to_aig, topo_order, write_bench,
)
from .simulate import (
    OracleBundle, SimulationError, corruption_rate, load_bundle, oracle_serve,
    save_bundle, sim_comb, sim_comb_packed, sim_seq, sim_seq_packed,
)
from .satcore import (
    Budget, BudgetExceeded, CnfFormula, DipTrace, EquivResult, Miter,
    SolveResult, build_key_miter, check_equivalence, sat_attack, solve,
    tseitin, unroll,
)
from .locks import (
    COMB_PRESETS, KeyBit, KeyRecord, LockRecipe, PF, Preset, RLL,
    lock_layered, lock_pf, lock_rll, make_comb_target, package_benchmark,
    read_patch, verify_key, write_patch,
)
from .seqlock import (
    FsmAugmentation, KeySequence, SEQ_PRESETS, SeqPreset, lock_seq,
    make_seq_target, min_extra_regs, package_seq_benchmark,
    reachability_check, verify_seq_unlock,
)
from .attacks import (
    AttackReport, ConeKeyProfile, attack_bitflip, attack_hd,
    attack_redundancy, attack_seq_unroll, attack_sensitization,
    attack_subcircuit_sat, attack_unit_function, classify_key_bits,
    cone_key_profile, extract_fsc, reduced_pi_table, submission_text,
    write_submission,
)
from .scoring import (
    LayerScore, ScoreCard, Submission, parse_submission, render_table,
    report_json, score, score_combinational, score_sequential,
)

__version__ = "0.1.0"

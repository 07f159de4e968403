"""Acceptance checks. Each test prints one PASS/FAIL line (run with -s, or
see the captured stdout section) and asserts the same condition."""

import time

import numpy as np
import pytest

from millforge.bits import unpack_bits
from millforge.costs import crh_cpu_cost, crh_pipelined_cost, crh_ratios
from millforge.merge import baseline_merge_rounds
from millforge.nonlinear import MillionaireConfig, run_op
from millforge.report import bench, run_session, verify_suite
from millforge.reuse import (ExponentMatrix, brute_force_count, comparison_merge_matrix, n_final, n_naive,
                             n_opt)
from millforge.session import Session
from millforge.tape import TapeSeed
from millforge.transport import PRESETS

SEED = 20240521


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail
    return emit


def _variants(bits, chunk):
    return [MillionaireConfig(bits, chunk, "baseline"), MillionaireConfig(bits, chunk, "tami"),
            MillionaireConfig(bits, chunk, "tami", True)]


def test_criterion_1_oracle_equivalence(verdict):
    start = time.perf_counter()
    bad, cases = 0, 0
    for q in (2, 4):
        for cfg in _variants(8, q):
            for o in verify_suite(cfg, "millionaire", seed=SEED, tape_seeds=256, scheduler="lockstep"):
                bad, cases = bad + o.mismatches, cases + o.cases
    millionaire_s = time.perf_counter() - start
    for cfg in _variants(10, 2):
        for op in ("drelu", "relu"):
            for o in verify_suite(cfg, op, seed=SEED, tape_seeds=0):
                bad, cases = bad + o.mismatches, cases + o.cases
    for cfg in _variants(32, 4):
        for op in ("millionaire", "drelu", "relu"):
            for o in verify_suite(cfg, op, seed=SEED, random_cases=10_000):
                bad, cases = bad + o.mismatches, cases + o.cases
    verdict("criterion 1 (oracle equivalence)", bad == 0 and millionaire_s < 60,
            f"{cases} cases, {bad} mismatches, exhaustive 8-bit millionaire in {millionaire_s:.1f}s")


def test_criterion_2_round_complexity(verdict):
    problems, checked = [], 0
    for bits, q in ((32, 4), (32, 8), (32, 2), (12, 4), (20, 4)):
        n = bits // q
        for cfg in _variants(bits, q):
            if cfg.variant == "tami" and n > 8:
                continue
            phases = run_session(cfg, "millionaire", 8, TapeSeed.from_int(SEED)).phase_rounds
            want = ({"leaf": 2, "merge": baseline_merge_rounds(n)} if cfg.variant == "baseline"
                    else {"leaf": 1, "merge": 1})
            checked += 1
            if phases != want:
                problems.append(f"{cfg.as_dict()}: {phases} != {want}")
    n8 = run_session(MillionaireConfig(32, 4, "baseline"), "millionaire", 8, TapeSeed.from_int(SEED))
    ok = not problems and n8.phase_rounds["merge"] == 3
    verdict("criterion 2 (round complexity)", ok,
            "; ".join(problems) or f"{checked} configs exact; baseline merge at n=8 = 3 rounds")


def test_criterion_3_byte_complexity(verdict):
    problems = []
    count = 16
    for n in range(2, 17):
        q = 2
        bits = n * q
        per = {}
        for cfg in _variants(bits, q):
            reps = [bench(cfg, "millionaire", count, seed=s, scheduler="lockstep") for s in (SEED, SEED + 1)]
            stable = reps[0].phase_bits_per_item == reps[1].phase_bits_per_item
            if not stable:
                problems.append(f"n={n} {cfg.variant}: bits vary with seed")
            if cfg.variant == "tami" and not reps[0].discrepancy_notes:
                problems.append(f"n={n}: no discrepancy notes")
            per[reps[0].variant] = reps[0].phase_bits_per_item
        base, tami, il = per["baseline"], per["tami"], per["tami-interleaved"]
        if base["merge"] != 8 * (n - 1):
            problems.append(f"n={n}: baseline merge {base['merge']} != {8 * (n - 1)}")
        if base["leaf"] != n * q + 2 * n * (1 << q):
            problems.append(f"n={n}: baseline leaf {base['leaf']}")
        if 2 * il["merge"] != tami["merge"]:
            problems.append(f"n={n}: interleaved {il['merge']} not half of {tami['merge']}")
        for t in (tami, il):
            if t["leaf"] > base["leaf"] or t["merge"] > base["merge"]:
                problems.append(f"n={n}: trusted variant exceeds baseline {t} vs {base}")
    verdict("criterion 3 (byte complexity)", not problems,
            "; ".join(problems) or "n=2..16 at q=2: laws exact, interleaved = half, notes emitted, <= baseline")


def _random_matrix(rng):
    m, n = int(rng.integers(1, 9)), int(rng.integers(1, 11))
    E = rng.integers(0, 3, (m, n))
    for i in range(m):
        if not E[i].any():
            E[i, rng.integers(0, n)] = 1
    return ExponentMatrix.from_array(E)


def test_criterion_4_reuse_counting(verdict):
    rng = np.random.default_rng(SEED)
    problems = []
    mats = [_random_matrix(rng) for _ in range(500)] + [comparison_merge_matrix(n) for n in range(1, 17)]
    for E in mats:
        total = n_final(E)[1]
        if total != brute_force_count(E):
            problems.append(f"brute force mismatch on {E.rows}")
        if not total <= n_opt(E) <= n_naive(E):
            problems.append(f"ordering violated on {E.rows}")
    n3 = n_final(comparison_merge_matrix(3))[1]
    ratios = [n_naive(comparison_merge_matrix(n)) / n_final(comparison_merge_matrix(n))[1] for n in range(1, 17)]
    monotone = all(b >= a for a, b in zip(ratios, ratios[1:]))
    ok = not problems and n3 == 10 and monotone
    verdict("criterion 4 (reuse counting)", ok,
            "; ".join(problems[:3]) or f"516 matrices match brute force, n=3 total {n3}, "
                                       f"naive/final ratio monotone up to {ratios[-1]:.1f}")


def test_criterion_5_cost_model(verdict):
    cyc, xfer = crh_ratios(100_000)
    ok = (crh_cpu_cost(4) == (230, 232) and crh_pipelined_cost(4) == (18, 25)
          and abs(cyc - 4.889) <= 0.01 and abs(xfer - 9.28) <= 0.01)
    verdict("criterion 5 (cost model)", ok,
            f"cpu(4)={crh_cpu_cost(4)} pipelined(4)={tuple(map(float, crh_pipelined_cost(4)))} "
            f"ratios at 1e5: cycles {cyc:.4f}, transfers {xfer:.4f}")


def test_criterion_6_end_to_end_trend(verdict):
    base = bench(MillionaireConfig(32, 4, "baseline"), "relu", 200_000, seed=SEED)
    lines, ok = [], base.correct
    for cfg in (MillionaireConfig(32, 4, "tami"), MillionaireConfig(32, 4, "tami", True)):
        fast = bench(cfg, "relu", 200_000, seed=SEED)
        ratio = {p: base.simulated_ms[p] / fast.simulated_ms[p] for p in PRESETS}
        ok &= fast.correct and all(r > 1 for r in ratio.values()) and ratio["mobile"] >= ratio["lan"]
        lines.append(f"{fast.variant} speedup " + " ".join(f"{p}={r:.3f}" for p, r in ratio.items()))
    verdict("criterion 6 (end-to-end trend)", ok, "; ".join(lines))


def _transcript_bits(cfg, seed_id, y, x):
    session = Session(TapeSeed.from_int(SEED, seed_id), scheduler="lockstep", keep_records=False)
    run_op(session, "millionaire", cfg, y, x)
    return np.concatenate([unpack_bits(e.payload, e.nbits) for e in session.transcript()])


def test_criterion_7_uniformity(verdict):
    y, x = np.array([0x9E3779B9], dtype=np.uint64), np.array([0x12345678], dtype=np.uint64)
    seeds = 10_000
    lines, ok = [], True
    for cfg in (MillionaireConfig(32, 4, "tami"), MillionaireConfig(32, 4, "tami", True)):
        total = sum(_transcript_bits(cfg, i, y, x).astype(np.int64) for i in range(seeds))
        freq = total / seeds
        ok &= bool(np.all((freq >= 0.45) & (freq <= 0.55)))
        lines.append(f"{'interleaved' if cfg.interleaved else 'tami'}: {freq.size} bits in "
                     f"[{freq.min():.3f}, {freq.max():.3f}]")
    verdict("criterion 7 (masking uniformity)", ok, f"{seeds} seeds; " + "; ".join(lines))


def test_criterion_8_determinism(verdict):
    problems = []
    for cfg in _variants(32, 4):
        a = bench(cfg, "relu", 2000, seed=SEED, parallel=4)
        b = bench(cfg, "relu", 2000, seed=SEED, parallel=4)
        c = bench(cfg, "relu", 2000, seed=SEED, scheduler="lockstep")
        d = bench(cfg, "relu", 2000, seed=SEED)
        if a.to_json() != b.to_json():
            problems.append(f"{a.variant}: concurrent reports differ")
        if c.to_json() != d.to_json():
            problems.append(f"{a.variant}: lockstep and threaded reports differ")
        t1 = run_session(cfg, "relu", 500, TapeSeed.from_int(SEED)).transcript
        t2 = run_session(cfg, "relu", 500, TapeSeed.from_int(SEED), scheduler="lockstep").transcript
        if t1 != t2:
            problems.append(f"{a.variant}: transcripts differ")
    verdict("criterion 8 (determinism)", not problems,
            "; ".join(problems) or "reports and transcripts byte-identical across repeats, 4 concurrent "
                                   "sessions, and both schedulers")

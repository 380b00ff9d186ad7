"""Acceptance criteria, each run at its stated tolerance.

Every test records a one-line PASS/FAIL verdict that is printed in the pytest
terminal summary; ``python tests/test_acceptance.py`` prints the same lines.
"""

import time

import numpy as np
from hypothesis import given, settings

from acceptance_log import record
from invariants import check_run, configs
from oracles import closed_form_cycles, deterministic_cycles, renewal_ipc, vp_bound

from ilpfspn.cli import main as cli_main
from ilpfspn.experiments import additional_vp_speedup, run_replications, run_simulation, sweep
from ilpfspn.kernel import RngStream, sample_exponential
from ilpfspn.pipeline import SimConfig

SEEDS = 30
WIDTHS = [1, 2, 4, 8, 16, 32]


def _verdict(number, title, ok, detail):
    line = record(number, title, ok, detail)
    assert ok, line


def test_c1_deterministic_baseline():
    t0 = time.perf_counter()
    c1 = run_simulation(SimConfig(W=1, V=1000.0, lambda_i=0.0, mu_i=0.0), engine="reference").cycles
    c4 = run_simulation(SimConfig(W=4, V=1000.0, lambda_i=0.0, mu_i=0.0), engine="reference").cycles
    elapsed = time.perf_counter() - t0
    fused = (run_simulation(SimConfig(W=1, V=1000.0)).cycles, run_simulation(SimConfig(W=4, V=1000.0)).cycles)
    oracle = (deterministic_cycles(1, 1000), deterministic_cycles(4, 1000))
    ok = (c1, c4) == (1003, 253) == fused == oracle == (closed_form_cycles(1, 1000), closed_form_cycles(4, 1000))
    ok = ok and elapsed < 1.0
    _verdict(1, "deterministic baseline", ok, f"cycles W=1: {c1}, W=4: {c4} (want 1003, 253); {elapsed:.3f} s")


def test_c2_perfect_prediction_throughput():
    parts, ok = [], True
    for W in (1, 4, 16):
        for lam, mu in ((0.0, 0.0), (0.2 * W, 0.5 * W)):
            ipc = run_simulation(SimConfig(W=W, V=1e6, lambda_i=lam, mu_i=mu, p_bmis=0.0, p_vmis=0.0)).ipc
            dev = abs(ipc - W) / W
            ok &= dev < 1e-3
            parts.append(f"W={W} lambda_i={lam:g} mu_i={mu:g}: {dev:.2e}")
    _verdict(2, "perfect-prediction IPC within 0.1% of W", ok, "; ".join(parts))


def test_c3_scalar_renewal_oracle():
    parts, ok = [], True
    for lam in (0.1, 0.2):
        for p in (0.05, 0.1):
            cfg = SimConfig(W=1, mu_i=0.0, V=1e6, C_BR=3, lambda_i=lam, p_bmis=p)
            mean = run_replications(cfg, SEEDS, 0).mean_ipc
            target = renewal_ipc(lam, p, 3)
            rel = abs(mean - target) / target
            ok &= rel <= 0.05
            parts.append(f"({lam}, {p}): {mean:.5f} vs {target:.5f} ({rel:.2%})")
    _verdict(3, "scalar renewal oracle within 5%", ok, "; ".join(parts))


def test_c4_value_prediction_bound():
    parts, ok = [], True
    for W, mu in ((2, 1), (4, 1), (4, 2), (8, 4)):
        cfg = SimConfig(W=W, mu_i=float(mu), p_bmis=0.0, V=1e6)
        with_vp = run_replications(cfg.replace(p_vmis=0.0), SEEDS, 0)
        without = run_replications(cfg.replace(p_vmis=1.0), SEEDS, 0)
        ratio = additional_vp_speedup(with_vp, without)
        bound = vp_bound(W, mu)
        rel = abs(ratio - bound) / bound
        ok &= rel <= 0.05
        parts.append(f"({W},{mu}): {ratio:.4f} vs {bound:.4f} ({rel:.2%})")
    _verdict(4, "additional VP speedup within 5% of W/(W-mu_i)", ok, "; ".join(parts))


def _speedups(p_bmis):
    table = sweep({"W": WIDTHS, "lambda_per_w": [0.2], "p_bmis": [p_bmis]}, SimConfig(V=1e6), n=SEEDS, base_seed=0)
    return [r.speedup for r in table.rows]


def test_c5_speedup_shape():
    perfect = _speedups(0.0)
    increasing = all(b > a for a, b in zip(perfect, perfect[1:]))
    real = _speedups(0.1)
    diffs = [b - a for a, b in zip(real, real[1:])]
    slopes = [d / (w1 - w0) for d, w0, w1 in zip(diffs, WIDTHS, WIDTHS[1:])]
    concave = all(s > 0 for s in slopes) and all(b < a for a, b in zip(slopes, slopes[1:]))
    detail = (
        f"p_bmis=0 speedups {[round(x, 3) for x in perfect]}; "
        f"p_bmis=0.1 speedups {[round(x, 3) for x in real]}, "
        f"slopes per unit W {[round(x, 4) for x in slopes]}, raw differences {[round(x, 3) for x in diffs]}"
    )
    _verdict(5, "speedup increases with W, saturates under mispredictions", increasing and concave, detail)


def test_c6_additional_speedup_declines():
    widths = [2, 4, 8, 16, 32]
    table = sweep(
        {"W": widths, "lambda_per_w": [0.2], "mu_per_w": [0.25], "p_bmis": [0.1], "p_vmis": [0.0, 1.0]},
        SimConfig(V=1e6), n=SEEDS, base_seed=0, baseline=False,
    )
    add = [r.additional_speedup for r in table.rows if r.additional_speedup is not None]
    ok = add[-1] < max(add)
    _verdict(6, "additional speedup at W=32 below its maximum", ok,
             f"W={widths}: {[round(x, 4) for x in add]}; max {max(add):.4f} at W={widths[add.index(max(add))]}")


def test_c7_invariant_suite():
    seen = []

    @settings(max_examples=20, deadline=None, derandomize=True, database=None)
    @given(configs)
    def prop(config):
        res, obs = check_run(config)
        seen.append(obs.events)

    try:
        prop()
        ok, info = True, ""
    except AssertionError as exc:
        ok, info = False, f"; first violation: {str(exc).splitlines()[0]}"
    _verdict(7, "per-event invariants on 20 random configs, V=1e5", ok and len(seen) >= 20,
             f"{len(seen)} runs, {sum(seen)} events checked{info}")


def test_c8_determinism(tmp_path, capsys):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(
        "[model]\nV = 20000\nlambda_i = 0.8\nmu_i = 1.0\np_bmis = 0.1\np_vmis = 0.5\nseed = 42\n"
        "[sweep]\nW = [1, 2, 4]\np_bmis = [0.0, 0.1]\n[replications]\nn = 4\nbase_seed = 3\n"
    )
    blobs = []
    for k in range(2):
        trace, csv = tmp_path / f"t{k}.tsv", tmp_path / f"s{k}.csv"
        assert cli_main(["run", "--config", str(cfg), "--trace", str(trace), "--out", str(tmp_path / f"r{k}.txt")]) == 0
        assert cli_main(["sweep", "--config", str(cfg), "--out", str(csv)]) == 0
        blobs.append((trace.read_bytes(), csv.read_bytes(), (tmp_path / f"r{k}.txt").read_bytes()))
    capsys.readouterr()
    ok = blobs[0] == blobs[1]
    lines = blobs[0][0].count(b"\n")
    _verdict(8, "bit-identical trace and CSV across reruns", ok,
             f"trace {lines} lines, CSV {len(blobs[0][1])} bytes, identical={ok}")


def test_c9_sampling_correctness():
    s = RngStream(2024, "branch-timing")
    xs = np.sort(np.array([sample_exponential(1.0, s.uniform_pos()) for _ in range(100_000)]))
    n = len(xs)
    cdf = 1.0 - np.exp(-xs)
    ks = float(max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n)))
    mean = float(xs.mean())
    ok = 0.99 <= mean <= 1.01 and ks < 0.01
    _verdict(9, "exponential inversion mean and KS", ok, f"mean {mean:.5f} in [0.99, 1.01], KS {ks:.5f} < 0.01")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    import acceptance_log

    class _Capsys:
        def readouterr(self):
            return "", ""

    failures = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_c")):
        try:
            if name == "test_c8_determinism":
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d), _Capsys())
            else:
                fn()
        except AssertionError:
            failures += 1
    for number in sorted(acceptance_log.LINES):
        print(acceptance_log.LINES[number])
    sys.exit(1 if failures else 0)

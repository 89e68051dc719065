"""Acceptance gate: the full criteria catalogue, one pass/fail line each.

Every criterion runs at its stated tolerance and asserts its runtime
budget.  Seeds are fixed so the suite is deterministic.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from arnagg import cli
from arnagg.aggregate import (
    convergence_criterion,
    error_trace,
    pipeline_dynamic,
    pipeline_naive,
    pipeline_schur,
)
from arnagg.arnoldi import arnoldi_iterate, build_aggregation, relation_residual
from arnagg.errors import ComplexStationary
from arnagg.mchain import Distribution, inf_norm
from arnagg.models import counterexample, random_chain, random_ncd
from arnagg.orthonorm import CGS, CGS2, CGSIR, MGS2, orthogonality_loss
from arnagg.schur import leading_eigvec, schur_decompose

from oracles import (
    eigenvalues_by_char_poly,
    krylov_matrix,
    multiset_distance,
    power_iteration_stationary,
)


@contextmanager
def criterion(num, name, limit_seconds):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {num} ({name}): FAIL")
        raise
    elapsed = time.perf_counter() - start
    assert elapsed < limit_seconds, f"runtime {elapsed:.1f}s exceeds {limit_seconds}s"
    print(f"[acceptance] criterion {num} ({name}): PASS in {elapsed:.2f}s "
          f"(< {limit_seconds}s)")


def test_criterion_1_counterexample_tightness():
    with criterion(1, "counterexample tightness", 1.0):
        for eps in (0.1, 0.5, 0.9):
            p, p0 = counterexample(eps)
            fact = arnoldi_iterate(p, p0, 1)
            assert np.array_equal(fact.hessenberg, [[0.0]])
            agg = build_aggregation(fact, p0)
            assert np.array_equal(agg.initial, [1.0])
            ks = list(range(0, 101))
            tr = error_trace(p, p0, agg, ks)
            assert abs(tr.errors[0]) <= 1e-14
            assert np.abs(tr.errors[1:] - 1.0).max() <= 1e-12
            assert np.abs(tr.bound_general - tr.errors).max() <= 1e-12


def test_criterion_2_initial_exactness():
    with criterion(2, "(size-1)-step exactness", 30.0):
        rng = np.random.default_rng(1)
        grow, nongrow = 0, 0
        for _ in range(50):
            n = int(rng.integers(10, 51))
            j = int(rng.integers(2, n + 1))
            density = float(rng.uniform(0.1, 0.4))
            p = random_chain(n, density, seed=int(rng.integers(2**63)))
            p0 = Distribution.random(n, seed=int(rng.integers(2**63)))
            fact = arnoldi_iterate(p, p0, j)
            agg = build_aggregation(fact, p0)
            tr = error_trace(p, p0, agg, list(range(0, fact.size + 1)))
            assert tr.errors[:fact.size].max() <= 1e-9
            if fact.deflated or fact.size >= n:
                continue
            if tr.errors[fact.size] > tr.errors[fact.size - 1]:
                grow += 1
            else:
                nongrow += 1
        assert grow / (grow + nongrow) >= 0.9


def test_criterion_3_full_size_exactness():
    with criterion(3, "full-size exactness", 10.0):
        rng = np.random.default_rng(33)
        for n in (2, 4, 7, 11, 16, 22, 30):
            p = random_chain(n, 1.0, seed=int(rng.integers(2**63)))
            p0 = Distribution.random(n, seed=int(rng.integers(2**63)))
            agg = pipeline_schur(p, p0, n)
            pd = p.toarray()
            defect = agg.step_matrix @ agg.disaggregation - agg.disaggregation @ pd
            assert inf_norm(defect) <= 1e-8
            assert np.abs(agg.initial @ agg.disaggregation - p0.values).sum() <= 1e-12
            assert convergence_criterion(p, agg) <= 1e-10
            image = agg.stationary @ agg.disaggregation
            assert np.abs(image - image @ pd).sum() <= 1e-8
            assert np.abs(image - power_iteration_stationary(pd)).sum() <= 1e-6


def test_criterion_4_bound_chain():
    with criterion(4, "error bound chain", 60.0):
        rng = np.random.default_rng(44)
        for _ in range(100):
            n = int(rng.integers(5, 51))
            j = int(rng.integers(1, min(n, 15) + 1))
            density = float(rng.uniform(0.1, 1.0))
            p = random_chain(n, density, seed=int(rng.integers(2**63)))
            p0 = Distribution.random(n, seed=int(rng.integers(2**63)))
            agg = pipeline_naive(p, p0, j)
            ks = sorted(set(int(k) for k in rng.integers(0, 201, size=8)))
            tr = error_trace(p, p0, agg, ks)
            assert np.all(tr.errors <= tr.bound_specific + 1e-8)
            assert np.all(tr.bound_specific + 1e-8 <= tr.bound_general + 1e-6)


def test_criterion_5_orthogonalization_ordering():
    with criterion(5, "orthogonalization ordering", 30.0):
        p = random_ncd(10, 10, 1e-8, seed=7)
        p0 = Distribution.random(100, seed=11)
        assert np.linalg.cond(krylov_matrix(p.toarray(), p0.values, 80)) >= 1e8
        loss, resid = {}, {}
        for method in (CGS, CGS2, MGS2, CGSIR):
            fact = arnoldi_iterate(p, p0, 80, method=method)
            assert fact.size == 80
            loss[method.variant] = orthogonality_loss(fact.basis)
            resid[method.variant] = relation_residual(fact, p)
        for stable in ("cgs2", "mgs2", "cgsir"):
            assert loss["cgs"] > loss[stable]
            assert resid["cgs"] > resid[stable]
        assert max(loss["cgs2"], loss["mgs2"]) <= 10 * min(loss["cgs2"], loss["mgs2"])
        assert max(resid["cgs2"], resid["mgs2"]) <= 10 * min(resid["cgs2"], resid["mgs2"])


def test_criterion_6_schur_correctness():
    with criterion(6, "Schur correctness", 60.0):
        rng = np.random.default_rng(66)
        for _ in range(100):
            n = int(rng.integers(1, 31))
            m = rng.standard_normal((n, n))
            s = schur_decompose(m)
            rebuilt = s.unitary @ s.triangular @ s.unitary.conj().T
            assert inf_norm(rebuilt - m) <= 1e-9 * max(inf_norm(m), 1e-12)
            assert inf_norm(s.unitary @ s.unitary.conj().T - np.eye(n)) <= 1e-10
            if n <= 5:
                roots = eigenvalues_by_char_poly(m)
                assert multiset_distance(s.eigenvalues, roots) <= 1e-6
        for _ in range(10):
            n = int(rng.integers(4, 21))
            p = random_chain(n, 1.0, seed=int(rng.integers(2**63)))
            p0 = Distribution.random(n, seed=int(rng.integers(2**63)))
            agg = pipeline_naive(p, p0, n)
            lam, _ = leading_eigvec(schur_decompose(agg.step_matrix.T))
            assert abs(lam - 1.0) <= 1e-8


def test_criterion_7_normalization_propositions():
    with criterion(7, "normalization propositions", 10.0):
        rng = np.random.default_rng(77)

        def improvement_holds(approx, exact):
            rescaled = approx / np.abs(approx).sum()
            return np.abs(rescaled - exact).sum() <= np.abs(approx - exact).sum() + 1e-12

        for _ in range(5000):
            d = int(rng.integers(2, 11))
            exact = rng.exponential(size=d)
            exact /= exact.sum()
            # proven hypothesis: total mass at least two
            approx = rng.standard_normal(d)
            approx *= rng.uniform(2.0 + 1e-9, 6.0) / np.abs(approx).sum()
            assert improvement_holds(approx, exact)
            # proven hypothesis: all entries nonpositive, mass at least one
            approx = -np.abs(rng.standard_normal(d))
            approx *= rng.uniform(1.0 + 1e-9, 4.0) / np.abs(approx).sum()
            assert improvement_holds(approx, exact)

        # The three conjectured rules are sampled and logged, never asserted.
        violations = {"entry<=-1": 0, "entry>=9/8": 0, "partial-sum<=-1": 0}
        for _ in range(2000):
            d = int(rng.integers(2, 11))
            exact = rng.exponential(size=d)
            exact /= exact.sum()
            v = rng.standard_normal(d)
            v[int(rng.integers(d))] = -rng.uniform(1.0, 2.0)
            if not improvement_holds(v, exact):
                violations["entry<=-1"] += 1
            v = rng.standard_normal(d) * 0.3
            v[int(rng.integers(d))] = rng.uniform(9 / 8, 2.5)
            if not improvement_holds(v, exact):
                violations["entry>=9/8"] += 1
            v = -np.abs(rng.standard_normal(d)) * 0.5
            v[int(rng.integers(d))] = np.abs(rng.standard_normal())
            if v.sum() - v.max() <= -1.0 and not improvement_holds(v, exact):
                violations["partial-sum<=-1"] += 1
        print(f"[acceptance] conjecture-rule violation counts (logged only): {violations}")


def test_criterion_8_dynamic_pipeline_agreement():
    with criterion(8, "dynamic pipeline agreement", 120.0):
        rng = np.random.default_rng(42)
        for _ in range(20):
            blocks = int(rng.integers(2, 7))
            block_size = int(rng.integers(3, 11))
            n = blocks * block_size
            coupling = float(10 ** rng.uniform(-4, -2))
            p = random_ncd(blocks, block_size, coupling, seed=int(rng.integers(2**63)))
            p0 = Distribution.random(n, seed=int(rng.integers(2**63)))
            step = int(rng.integers(1, 6))
            eps = 1e-8
            smallest = None
            for j in range(1, n + 1):
                try:
                    agg = pipeline_schur(p, p0, j)
                except ComplexStationary:
                    continue
                if convergence_criterion(p, agg) <= eps:
                    smallest = j
                    break
            if smallest is None:
                smallest = n
            dyn = pipeline_dynamic(p, p0, n, eps, step_size=step)
            assert smallest <= dyn.size <= smallest + step - 1
            assert dyn.criterion <= eps


def test_criterion_9_complexity_trend(tmp_path):
    with criterion(9, "complexity trend", 120.0):
        out = tmp_path / "bench.csv"
        code = cli.main([
            "bench", "--n", "2000", "--density", "0.002", "--sizes", "64,128",
            "--reps", "3", "--warmup", "1", "--trace-k", "50", "--seed", "9",
            "--out", str(out),
        ])
        assert code == 0
        rows = [line.split(",") for line in out.read_text().strip().split("\n")[1:]]
        arnoldi_time = {int(r[1]): float(r[4]) for r in rows if r[2] == "arnoldi"}
        ratio = arnoldi_time[128] / arnoldi_time[64]
        print(f"[acceptance] arnoldi-only doubling ratio 64->128: {ratio:.2f} "
              "(theory ~4 once the quadratic term dominates)")
        assert 1.5 <= ratio <= 10.0

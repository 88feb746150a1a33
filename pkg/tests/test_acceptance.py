"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``CRITERION n: PASS|FAIL`` line (visible without
``-s``) before asserting, so a full run lists the verdicts in order.
"""
import time

import numpy as np
import pytest

from dgsiac.angular import ordinates_slab, ordinates_sphere_cl
from dgsiac.dg_transport import TransportOperator, TransportProblem
from dgsiac.harness import (
    gaussian_source_case,
    mms_slab_1d,
    mms_steady_2d,
    mms_transient_2d,
    run_convergence_study,
)
from dgsiac.mesh import uniform_mesh
from dgsiac.siac import build_kernel
from dgsiac.solvers import NonConvergenceError, source_iteration

from conftest import dense_ordinate_solve


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok

    return emit


def _fmt(orders):
    return "[" + ", ".join(f"{o:.2f}" for o in orders) + "]"


# ---------------------------------------------------------------------------


def test_criterion_1_kernel_properties(verdict):
    start = time.perf_counter()
    problems = []
    for k in (1, 2, 3):
        K = build_kernel(k)
        c = np.array(K.coeffs)
        if abs(c.sum() - 1.0) > 1e-10:
            problems.append(f"k={k} consistency {c.sum()}")
        if np.max(np.abs(c - c[::-1])) > 1e-10:
            problems.append(f"k={k} symmetry")
        for m in range(1, 2 * k + 1):
            if abs(float(K.moment(m))) > 1e-10:
                problems.append(f"k={k} moment {m}")
    c1 = np.array(build_kernel(1).coeffs)
    if np.max(np.abs(c1 - [-1 / 12, 7 / 6, -1 / 12])) > 1e-12:
        problems.append(f"k=1 coefficients {c1}")
    elapsed = time.perf_counter() - start
    if elapsed >= 1.0:
        problems.append(f"runtime {elapsed:.2f}s")
    ok = verdict(1, not problems, f"k=1..3 consistency/symmetry/moments, runtime {elapsed:.3f}s"
                 + (f"; {problems}" if problems else ""))
    assert ok, problems


# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def slab_studies():
    start = time.perf_counter()
    tables = {k: run_convergence_study(mms_slab_1d(), k, [8, 16, 32, 64], filter=False, tol=1e-13)
              for k in (1, 2)}
    return tables, time.perf_counter() - start


def test_criterion_2_slab_superconvergence(slab_studies, verdict):
    tables, elapsed = slab_studies
    parts, failed = [], []
    for k, t in tables.items():
        for metric, target, tol in (("edge", 2 * k + 2, 0.3), ("radau", k + 2, 0.3), ("l2", k + 1, 0.2)):
            o = t.orders(metric)
            good = bool(np.all(np.abs(o - target) <= tol))
            parts.append(f"k={k} {metric} {_fmt(o)} (target {target}±{tol})")
            if not good:
                failed.append(f"k={k} {metric}")
    if elapsed >= 30:
        failed.append(f"runtime {elapsed:.1f}s")
    ok = verdict(2, not failed, "; ".join(parts) + f"; runtime {elapsed:.1f}s")
    assert ok, f"out of tolerance: {failed}"


# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def steady_2d_k1():
    start = time.perf_counter()
    t = run_convergence_study(mms_steady_2d("constant"), 1, [10, 20, 40, 80])
    return t, time.perf_counter() - start


@pytest.fixture(scope="module")
def steady_2d_k2():
    start = time.perf_counter()
    t = run_convergence_study(mms_steady_2d("constant"), 2, [10, 20, 40])
    return t, time.perf_counter() - start


def test_criterion_3_steady_filtered_order(steady_2d_k1, steady_2d_k2, verdict):
    t1, s1 = steady_2d_k1
    t2, s2 = steady_2d_k2
    o_l2 = t1.orders("l2")
    o_f1 = t1.orders("l2_filtered")
    o_f2 = t2.orders("l2_filtered")
    failed = []
    if not np.all(o_l2 >= 1.8):
        failed.append("k=1 unfiltered")
    if not np.all(o_f1 >= 3.2):
        failed.append("k=1 filtered")
    if not np.all(o_f2 >= 5.5):
        failed.append("k=2 filtered")
    if s1 + s2 >= 600:
        failed.append("runtime")
    ok = verdict(
        3, not failed,
        f"k=1 l2 {_fmt(o_l2)} (>=1.8), k=1 filtered {_fmt(o_f1)} (>=3.2), "
        f"k=2 filtered {_fmt(o_f2)} (>=5.5); runtime {s1 + s2:.1f}s",
    )
    assert ok, failed


# ---------------------------------------------------------------------------


def test_criterion_4_transient_filtered_order(verdict):
    start = time.perf_counter()
    t = run_convergence_study(mms_transient_2d(t_end=0.5), 1, [8, 16, 32, 64],
                              time_scheme={"order": 3, "dt": "0.5h", "t_end": 0.5})
    elapsed = time.perf_counter() - start
    o_u = t.orders("l2")
    o_f = t.orders("l2_filtered")
    failed = []
    if not np.all(np.abs(o_u - 2.0) <= 0.3):
        failed.append("unfiltered")
    if not np.all(np.abs(o_f - 3.0) <= 0.3):
        failed.append("filtered")
    if elapsed >= 600:
        failed.append("runtime")
    ok = verdict(
        4, not failed,
        f"Q1-BDF3, dt = mesh cell size / 2 (paper's h), unfiltered {_fmt(o_u)} (2±0.3), "
        f"filtered {_fmt(o_f)} (3±0.3); runtime {elapsed:.1f}s",
    )
    assert ok, failed


# ---------------------------------------------------------------------------


def test_criterion_5_filtered_vs_refined(steady_2d_k1, verdict):
    t, _ = steady_2d_k1
    f20 = t.row("l2_filtered", 20)
    u40_in = t.row("l2_interior", 40)
    u40_full = t.row("l2", 40)
    cost20 = f20["solve_seconds"] + f20["filter_seconds"]
    cost40 = u40_in["solve_seconds"]
    error_ok = f20["error"] < u40_in["error"]
    time_ok = cost20 < cost40
    share_ok = f20["filter_seconds"] < 0.1 * f20["solve_seconds"]
    ok = verdict(
        5, error_ok and time_ok and share_ok,
        f"filtered@20 {f20['error']:.3e} vs unfiltered@40 on the same interior "
        f"{u40_in['error']:.3e} ({'lower' if error_ok else 'NOT lower'}); "
        f"whole-domain unfiltered@40 {u40_full['error']:.3e} for reference; "
        f"time {cost20:.3f}s vs {cost40:.3f}s; filter/solve {f20['filter_seconds'] / f20['solve_seconds']:.1%}",
    )
    assert ok


# ---------------------------------------------------------------------------


def test_criterion_6_dsa_robustness(verdict):
    start = time.perf_counter()
    problem = gaussian_source_case(n=32, degree=1, uniform_sigma=100.0)
    op = TransportOperator(problem)
    _, rep = source_iteration(problem, tol=1e-10, use_dsa=True, operator=op)
    n_dsa = rep.iterations
    cap = 5 * n_dsa
    try:
        _, plain = source_iteration(problem, tol=1e-10, use_dsa=False, max_iter=cap, operator=op)
        n_si, si_note = plain.iterations, "converged"
        history = plain.history
    except NonConvergenceError as err:
        n_si, si_note = None, f"not converged in {cap}"
        history = err.report.history
    tail = np.asarray(history[len(history) // 2 :])
    rho = float(np.exp(np.mean(np.diff(np.log(tail)))))
    extrapolated = len(history) + np.log(1e-10 / history[-1]) / np.log(rho) if rho < 1 else np.inf
    elapsed = time.perf_counter() - start
    ok = (n_si is None or n_si >= cap) and elapsed < 300
    verdict(
        6, ok,
        f"SI-DSA {n_dsa} iterations; plain SI {si_note} (contraction {rho:.4f}, "
        f"about {extrapolated:.0f} iterations extrapolated); runtime {elapsed:.1f}s",
    )
    assert ok


# ---------------------------------------------------------------------------


def _random_config(rng, i):
    dim = 1 if i < 2 else 2
    k = int(rng.integers(0, 3))
    bc = ["vacuum", "inflow", "periodic"][int(rng.integers(0, 3))]
    if dim == 1:
        mesh = uniform_mesh((0.0, float(rng.uniform(0.5, 3.0))), 16, bc)
        ords = ordinates_slab(int(rng.choice([2, 4, 8])))
    else:
        n = 16 if k < 2 else 8
        mesh = uniform_mesh([(0.0, 1.0), (-0.5, float(rng.uniform(0.5, 2.0)))], (n, n), bc)
        ords = ordinates_sphere_cl(4, 2)
    a0, a1 = rng.uniform(0.1, 3.0, 2)
    sig_a = lambda x, a0=a0, a1=a1: a0 + a1 * x[:, 0] ** 2
    c = rng.standard_normal(3)
    src = lambda x, om, t, c=c: c[0] + c[1] * np.sin(3 * x[:, 0]) + c[2] * om[0]
    inflow = (lambda x, om, t, c=c: c[2] + x[:, -1]) if bc == "inflow" else None
    return TransportProblem(mesh, ords, k, 0.0, sig_a, src, inflow)


def test_criterion_7_oracle_equivalence(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(20240607)
    worst, descr = 0.0, []
    for i in range(5):
        problem = _random_config(rng, i)
        op = TransportOperator(problem)
        q = op.project_source()
        psi = op.sweep(q, op.inflow_load())
        n_ord = len(problem.ordinates)
        for j in sorted({0, n_ord // 2, n_ord - 1}):
            ref = dense_ordinate_solve(problem, j, q[j])
            rel = np.linalg.norm(psi[j] - ref) / np.linalg.norm(ref)
            worst = max(worst, rel)
        descr.append(f"{problem.mesh.dim}D k={problem.degree} {problem.mesh.counts} {problem.mesh.bc[0]}")
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-11 and elapsed < 30
    verdict(7, ok, f"worst relative difference {worst:.2e} over {'; '.join(descr)}; runtime {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------


def test_criterion_8_negative_norm_not_measured(capsys):
    with capsys.disabled():
        print("\nCRITERION 8: NOT MEASURED - the negative-order-norm rate is a theoretical claim; "
              "criteria 3 and 4 check its computable consequence")
    pytest.skip("negative-order-norm rate is not measured directly")

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpmcs.linalg import hard_threshold_top_s
from hpmcs.metrics import (
    check_lemma_fund,
    check_prop1_count,
    check_top_s_lemma,
    fit_rate,
    recovery_report,
    theorem4_envelope,
)
from hpmcs.rip import RipConstants


class TestRecoveryReport:
    def test_exact(self, rng):
        x = np.zeros(10)
        x[[1, 4]] = rng.standard_normal(2)
        r = recovery_report(x, x, 2)
        assert (r.full_error, r.top_s_error, r.top_s_projected_error, r.support_excess) == (0, 0, 0, 0)

    def test_self_comparison_dense(self, rng):
        # against its own top-3 part a dense x keeps its tail
        x = rng.standard_normal(10)
        r = recovery_report(x, x, 3)
        assert r.full_error == 0 and r.top_s_projected_error == 0
        assert r.support_excess == 7
        assert r.top_s_error == pytest.approx(np.linalg.norm(x - hard_threshold_top_s(x, 3)))

    def test_zero_estimate(self, rng):
        x = rng.standard_normal(7)
        assert recovery_report(np.zeros(7), x, 2).full_error == pytest.approx(np.linalg.norm(x))

    def test_recomposition_oracle(self, rng):
        xh, xs = rng.standard_normal(12), rng.standard_normal(12)
        s = 4
        keep = np.argsort(-np.abs(xs), kind="stable")[:s]
        top = np.zeros(12)
        top[keep] = xs[keep]
        keep_h = np.argsort(-np.abs(xh), kind="stable")[:s]
        top_h = np.zeros(12)
        top_h[keep_h] = xh[keep_h]
        r = recovery_report(xh, xs, s)
        assert r.full_error == pytest.approx(math.sqrt(sum((a - b) ** 2 for a, b in zip(xh, xs))))
        assert r.top_s_error == pytest.approx(np.linalg.norm(xh - top))
        assert r.top_s_projected_error == pytest.approx(np.linalg.norm(top_h - top))
        assert r.support_excess == len(set(np.flatnonzero(xh)) - set(keep))
        assert r.nnz == 12

    def test_errors(self):
        with pytest.raises(ValueError):
            recovery_report(np.ones(3), np.ones(4), 1)
        with pytest.raises(ValueError):
            recovery_report(np.ones(3), np.ones(3), 0)


class TestFitRate:
    def test_geometric(self):
        assert abs(fit_rate(0.5 ** np.arange(30)) - 0.5) <= 1e-10

    def test_constant(self):
        assert fit_rate(np.full(10, 3.0)) == pytest.approx(1.0, abs=1e-15)

    def test_floor_and_too_few(self):
        seq = np.concatenate([0.5 ** np.arange(6), np.zeros(10)])
        assert fit_rate(seq, 0.0) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            fit_rate([1.0, 0.5, 0.25, 0.1])

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-6, 1e6), st.integers(0, 2**32 - 1))
    def test_shift_invariance(self, c, seed):
        e = np.exp(np.random.default_rng(seed).standard_normal(20))
        assert abs(fit_rate(c * e) - fit_rate(e)) <= 1e-12


class TestLemmaChecker:
    def test_trivial_equality(self, rng):
        U = rng.standard_normal((5, 8))
        x = np.zeros(8)
        x[2] = 1.0
        y = U @ x
        c = check_lemma_fund(U, y, rng.standard_normal(8), x, 0.1, x, 1)
        assert c.holds and c.slack >= 0

    def test_requires_sparse_reference(self, rng):
        U = rng.standard_normal((5, 8))
        with pytest.raises(ValueError):
            check_lemma_fund(U, np.zeros(5), np.zeros(8), np.zeros(8), 0.1, np.ones(8), 2)

    def test_constructed_violation(self):
        # d=2, U=I, y=x_ref=0, x_t=0: the bracketed inner product is zero, so any
        # x_next far from 0 at a tiny threshold breaks the inequality
        U = np.eye(2)
        c = check_lemma_fund(U, np.zeros(2), np.zeros(2), np.array([5.0, 5.0]), 1e-3, np.zeros(2), 1)
        assert not c.holds and c.slack < 0


class TestTopSLemma:
    def test_sparse_x(self, rng):
        y = np.array([0.0, 1.0, 0.0, 0.0])
        x = np.array([0.0, 0.0, 2.0, 0.0])
        assert check_top_s_lemma(x, y, 2)
        assert check_top_s_lemma(y, y, 2)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            check_top_s_lemma(np.ones(3), np.zeros(3), 2)
        with pytest.raises(ValueError):
            check_top_s_lemma(np.ones(4), np.ones(4), 2)

    def test_bound_is_nearly_tight(self):
        # s=1: x=(1, 1-eps), y=(0, 1+...): ratio approaches sqrt(3) from below
        best = 0.0
        for a in np.linspace(0.01, 2, 400):
            x = np.array([1.0, 1.0 - 1e-12])
            y = np.array([0.0, a])
            top = hard_threshold_top_s(x, 1)
            best = max(best, np.linalg.norm(top - y) / np.linalg.norm(x - y))
        assert best <= math.sqrt(3) and best > 1.6


class TestProp1:
    def test_at_truth(self, rng):
        U = rng.standard_normal((10, 12)) / math.sqrt(10)
        x = np.zeros(12)
        x[[0, 3]] = [1.0, -1.0]
        rip = RipConstants({2: 0.5}, 0.5, 2)
        assert check_prop1_count(U, x, x, rip, 2) == (0, True)
        assert check_prop1_count(np.eye(12), x + 0.1 * (x != 0), x, rip, 2).count == 0

    def test_hypothesis_violation(self, rng):
        x = np.zeros(12)
        x[0] = 1.0
        with pytest.raises(ValueError, match="not applicable"):
            check_prop1_count(np.eye(12), np.ones(12), x, RipConstants({1: 0.1}, 0.1, 1), 1)


def test_theorem4_envelope():
    assert theorem4_envelope(0.1, 0.2, 0.5, 3, 1.0) == pytest.approx(0.5)
    assert theorem4_envelope(0.01, 0.2, 0.5, 3, 1.0) == pytest.approx(0.125)

"""
Tests for the seeded invariant suites.
"""
import numpy as np
import pytest

import measure_core
from models import SuiteOutcome
from selftest import (
    SUITES,
    random_kernel,
    random_program,
    random_quotient,
    random_space,
    run_selftest,
    run_suite,
)


def transpose_inverse(f):
    """A wrong inverse: the normalized transpose, ignoring the weights."""
    flipped = f.matrix.T
    rows = flipped / flipped.sum(axis=1, keepdims=True)
    return measure_core.KernelMorphism.from_matrix(f.target, f.source.labels, rows)


class TestGenerators:
    """Random spaces, kernels, quotients and programs."""

    def test_random_kernel(self, rng):
        """Kernels are stochastic with strictly positive source weights."""
        space = random_space(rng, 6)
        kernel = random_kernel(rng, space, 3)
        assert kernel.matrix.shape == (6, 3)
        assert np.all(space.mu > 0)
        assert np.allclose(kernel.matrix.sum(axis=1), 1.0)

    def test_random_quotient_is_surjective(self, rng):
        """Every quotient label has a non-empty fibre."""
        space = random_space(rng, 8)
        for _ in range(50):
            quotient = random_quotient(rng, space)
            counts = np.bincount(quotient.assignment, minlength=len(quotient.target_labels))
            assert np.all(counts > 0)

    def test_random_program_is_star_free(self, rng):
        """Generated bodies never contain a star."""
        for _ in range(50):
            assert "*" not in str(random_program(rng, 3))


class TestSuites:
    """Running the suites and reporting their outcomes."""

    def test_all_suites_pass(self):
        """A short run of every suite has no failures."""
        outcomes = run_selftest(seed=0, cases=5)
        assert [o.name for o in outcomes] == list(SUITES)
        for outcome in outcomes:
            assert outcome.failures == [], outcome.failures
            assert outcome.passed == 5

    def test_dagger_acceptance_run(self):
        """Five hundred random kernels satisfy the inversion laws."""
        outcome = run_suite("dagger", seed=0, cases=500)
        assert outcome.failures == []

    @pytest.mark.parametrize("seed", [1, 2])
    def test_other_seeds(self, seed):
        """Other seeds pass as well."""
        for name in ("approximation", "naturality"):
            assert run_suite(name, seed=seed, cases=25).failures == []

    def test_wrong_inverse_is_caught(self, mocker):
        """Replacing the inverse with a plain transpose makes the dagger suite fail."""
        mocker.patch("measure_core.dagger", side_effect=transpose_inverse)
        outcome = run_suite("dagger", seed=0, cases=10)
        assert len(outcome.failures) > 0
        assert outcome.failures[0].startswith("seed 0 case ")

    def test_failures_are_reproducible(self, mocker):
        """The same seed reports the same failures."""
        mocker.patch("measure_core.dagger", side_effect=transpose_inverse)
        first = run_suite("dagger", seed=3, cases=5)
        second = run_suite("dagger", seed=3, cases=5)
        assert first.failures == second.failures

    def test_check_exceptions_become_failures(self, mocker):
        """An exception inside a check is recorded, not raised."""
        mocker.patch.dict(
            SUITES, {"naturality": mocker.Mock(side_effect=RuntimeError("boom"))}
        )
        outcome = run_suite("naturality", seed=0, cases=2)
        assert outcome.failures == [
            "seed 0 case 0: RuntimeError: boom",
            "seed 0 case 1: RuntimeError: boom",
        ]

    def test_summary_line(self):
        """Outcomes summarize as passed and failed counts."""
        outcome = SuiteOutcome(name="dagger", cases=4, failures=["seed 0 case 2: x"])
        assert outcome.summary_line() == "dagger: 3 passed, 1 failed"

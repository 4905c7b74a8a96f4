import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from convergence import Interval, refinement_sweep, tensor_convergence_check
from discretize import (
    Partition1D,
    RefinementChain,
    cell_of,
    discretize_kernel,
    window_scheme,
)
from errors import InvalidArgument, PairBudgetExceeded
from measure_core import KernelMorphism, MeasuredSpace, dagger
from models import (
    ConvergenceReport,
    KernelDocument,
    NetkatReport,
    PosteriorCell,
    PosteriorOracle,
    PosteriorReport,
    PosteriorSummary,
    QuadratureConfig,
    QueryAnswer,
    SuiteOutcome,
)
from models1d import (
    exact_gaussian_posterior,
    gaussian_kernel,
    parse_measure,
    posterior_tail_query,
)
from probnetkat import (
    PacketSet,
    StarResult,
    binomial_stderr,
    format_packet_set,
    monte_carlo_star,
    parse_history,
    parse_packet_set,
    parse_program,
    parse_query,
    star_decomposition,
    star_eval,
)
from selftest import run_selftest

logger = logging.getLogger(__name__)

DENSITY_WINDOW = 2.0  # density deviations are compared on cells inside [-2, 2]


def kernel_from_document(document: KernelDocument) -> KernelMorphism:
    source = MeasuredSpace(tuple(document.labels_in), document.mu)
    return KernelMorphism.from_matrix(
        source, tuple(document.labels_out), document.matrix
    )


def document_from_kernel(kernel: KernelMorphism) -> KernelDocument:
    return KernelDocument(
        labels_in=[str(label) for label in kernel.source.labels],
        labels_out=[str(label) for label in kernel.target.labels],
        mu=kernel.source.mu.tolist(),
        matrix=kernel.matrix.tolist(),
    )


def parse_threshold_query(text: str) -> float:
    kind, _, value = text.partition(":")
    if kind != "gt":
        raise InvalidArgument(f"unknown posterior query {text!r}; use gt:<threshold>")
    try:
        return float(value)
    except ValueError:
        raise InvalidArgument(f"non-numeric threshold in {text!r}") from None


def histogram_cells(partition: Partition1D, masses: np.ndarray) -> List[PosteriorCell]:
    edges = partition.edges()
    cells = []
    for i, mass in enumerate(masses):
        left, right = edges[i], edges[i + 1]
        bounded = np.isfinite(left) and np.isfinite(right)
        cells.append(
            PosteriorCell(
                index=i,
                left=float(left) if np.isfinite(left) else None,
                right=float(right) if np.isfinite(right) else None,
                mass=float(mass),
                density=float(mass / (right - left)) if bounded else None,
            )
        )
    return cells


def histogram_moments(
    partition: Partition1D, masses: np.ndarray
) -> Tuple[float, float]:
    """Mean and variance, uniform inside bounded cells, tails at their breakpoint"""
    centres = partition.representatives()
    spread = np.zeros(partition.num_cells)
    if partition.num_cells > 2:
        spread[1:-1] = np.diff(partition.breakpoints) ** 2 / 12.0
    mean = float(masses @ centres)
    variance = float(masses @ ((centres - mean) ** 2 + spread))
    return mean, variance


def histogram_exceedance(partition: Partition1D, masses: np.ndarray, t: float) -> float:
    """P(X > t) for the histogram, tails counting iff their breakpoint exceeds t"""
    edges = partition.edges()
    centres = partition.representatives()
    total = 0.0
    for i, mass in enumerate(masses):
        left, right = edges[i], edges[i + 1]
        if np.isfinite(left) and np.isfinite(right):
            share = (right - max(left, t)) / (right - left)
            total += mass * float(np.clip(share, 0, 1))
        elif centres[i] > t:
            total += mass
    return min(total, 1.0)


class KernelToolkit:
    """Runs the discretize, invert, measure and query pipelines with shared settings"""

    def __init__(self, config, **quadrature_overrides):
        self.config = config
        self.quadrature = QuadratureConfig.from_config(config, **quadrature_overrides)

    def posterior(
        self,
        m: int,
        n: int,
        prior_text: str,
        likelihood_var: float,
        observation: float,
        queries: Sequence[str] = (),
        exact: bool = False,
    ) -> PosteriorReport:
        """
        Approximate posterior of a normal prior under a Gaussian likelihood.

        The likelihood kernel is discretized on window_scheme(m, n), inverted,
        and read off at the cell containing the observation.
        """
        if not np.isfinite(observation):
            raise InvalidArgument(f"observation must be finite, got {observation!r}")
        prior = parse_measure(prior_text)
        thresholds = [(q, parse_threshold_query(q)) for q in queries]
        partition = window_scheme(m, n)
        likelihood = gaussian_kernel(likelihood_var)

        approx = discretize_kernel(
            likelihood, prior, partition, partition, self.quadrature
        )
        observed = int(cell_of(observation, partition))
        masses = dagger(approx).matrix[observed]
        mean, variance = histogram_moments(partition, masses)
        summary = PosteriorSummary(
            mean=mean,
            variance=variance,
            queries={
                q: histogram_exceedance(partition, masses, t) for q, t in thresholds
            },
        )
        cells = histogram_cells(partition, masses)

        oracle = None
        if exact:
            prior_mean, prior_var = prior.descriptor.params
            truth = exact_gaussian_posterior(
                prior_mean, prior_var, likelihood_var, observation
            )
            truth_mean, truth_var = truth.descriptor.params
            inside = [
                c
                for c in cells
                if c.density is not None
                and -DENSITY_WINDOW <= c.left
                and c.right <= DENSITY_WINDOW
            ]
            midpoints = np.array([(c.left + c.right) / 2 for c in inside])
            densities = np.array([c.density for c in inside])
            sup_deviation = (
                float(np.max(np.abs(densities - truth.density(midpoints))))
                if inside
                else 0.0
            )
            oracle = PosteriorOracle(
                mean=truth_mean,
                variance=truth_var,
                mean_deviation=abs(mean - truth_mean),
                variance_deviation=abs(variance - truth_var),
                density_sup_deviation=sup_deviation,
                queries={q: posterior_tail_query(truth, t) for q, t in thresholds},
            )

        logger.info(
            "posterior on %s: mean %.6g, variance %.6g", partition.name, mean, variance
        )
        return PosteriorReport(
            scheme=partition.name,
            prior=str(prior),
            likelihood=str(likelihood),
            observation=observation,
            observed_cell=observed,
            cells=cells,
            summary=summary,
            oracle=oracle,
        )

    def invert(self, document: KernelDocument) -> KernelDocument:
        return document_from_kernel(dagger(kernel_from_document(document)))

    def converge(
        self,
        chain: RefinementChain,
        intervals: Sequence[Interval],
        prior_text: str = "normal:0:1",
        likelihood_var: float = 1.0,
        rectangle: Optional[Tuple[Interval, Interval]] = None,
    ) -> ConvergenceReport:
        prior = parse_measure(prior_text)
        kernel = gaussian_kernel(likelihood_var)
        report = refinement_sweep(kernel, prior, chain, intervals, self.quadrature)
        if rectangle is None:
            return report
        product = tensor_convergence_check(
            kernel, kernel, prior, prior, chain, rectangle, self.quadrature
        )
        return ConvergenceReport(rows=report.rows + product.rows)

    def netkat(
        self,
        program_text: str,
        level: int,
        input_text: str,
        queries: Sequence[str],
        monte_carlo: Optional[Tuple[int, int, int]] = None,
        state_budget: Optional[int] = None,
        pair_budget: Optional[int] = None,
    ) -> NetkatReport:
        """
        Answer queries about the output of a ProbNetKAT program.

        Answers are exact unless the path-union enumeration runs over its
        budget and a Monte Carlo run was requested, in which case the
        estimates stand in for them.
        """
        state_budget = state_budget or self.config.STATE_BUDGET
        pair_budget = pair_budget or self.config.PAIR_BUDGET
        program = parse_program(program_text)
        packets = _parse_input(input_text)
        parsed = [parse_query(q, level) for q in queries]

        body, entering = star_decomposition(program, packets, level)
        exact: Optional[StarResult] = None
        if body is None:
            exact = StarResult.from_distribution(entering, level)
        else:
            try:
                exact = star_eval(
                    body,
                    entering,
                    level,
                    state_budget,
                    pair_budget,
                    self.config.RESIDUAL_MASS,
                )
            except PairBudgetExceeded:
                if monte_carlo is None:
                    raise
                logger.warning("pair budget exceeded; reporting Monte Carlo estimates")

        sampled: Optional[StarResult] = None
        if monte_carlo is not None:
            if body is None:
                logger.warning("program has no star; Monte Carlo run skipped")
            else:
                samples, horizon, seed = monte_carlo
                sampled = monte_carlo_star(
                    body, entering, level, samples, horizon, seed, state_budget
                )

        answers = []
        for query in parsed:
            estimate = query.answer(sampled) if sampled is not None else None
            probability = query.answer(exact) if exact is not None else estimate
            chain = (exact or sampled).chain
            answers.append(
                QueryAnswer(
                    query=query.text,
                    probability=probability,
                    hitting=query.hitting(chain) if chain is not None else None,
                    monte_carlo=estimate,
                    monte_carlo_stderr=(
                        binomial_stderr(estimate, sampled.samples)
                        if sampled is not None
                        else None
                    ),
                    deviation=(
                        abs(estimate - probability)
                        if sampled is not None and exact is not None
                        else None
                    ),
                )
            )
        return NetkatReport(
            program=str(program),
            level=level,
            input=format_packet_set(packets),
            support_size=len((exact or sampled).union_support),
            answers=answers,
        )

    def selftest(
        self, seed: Optional[int] = None, cases: Optional[int] = None
    ) -> List[SuiteOutcome]:
        seed = self.config.SELFTEST_SEED if seed is None else seed
        cases = self.config.SELFTEST_CASES if cases is None else cases
        if seed < 0:
            raise InvalidArgument(f"seed must be non-negative, got {seed}")
        if cases < 1:
            raise InvalidArgument(f"cases must be at least 1, got {cases}")
        return run_selftest(seed, cases)


def _parse_input(text: str) -> PacketSet:
    text = text.strip()
    if text.startswith("{"):
        return parse_packet_set(text)
    return frozenset([parse_history(text)])

"""Measuring how close discretized kernels get to their continuous originals."""

import logging
from dataclasses import dataclass
from time import perf_counter
from typing import List, Sequence, Tuple

import numpy as np

from discretize import (
    Partition1D,
    RefinementChain,
    check_tail_mass,
    discretize_kernel,
    gauss_legendre_nodes,
    pointwise_reference,
)
from errors import IndexMismatch, InvalidArgument, SpaceMismatch
from measure_core import DIVISION_TOL, KernelMorphism, Predicate
from models import ConvergenceReport, ConvergenceRow, QuadratureConfig
from models1d import KernelModel1D, Measure1D

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]

# Rows of the tensor check are built from this many first-factor nodes at a time
TENSOR_CHUNK = 256


def _require_comparable(f: KernelMorphism, g: KernelMorphism):
    # Target weights are pushforwards and legitimately differ between kernels
    if not f.source.same_as(g.source, DIVISION_TOL):
        raise SpaceMismatch("kernels have different sources")
    if f.target.labels != g.target.labels:
        raise SpaceMismatch("kernels have different target cells")


def sot_gap(f: KernelMorphism, g: KernelMorphism, phi: Predicate) -> float:
    """L1(mu) distance between the pullbacks of phi along f and g"""
    _require_comparable(f, g)
    if phi.space.labels != f.target.labels:
        raise IndexMismatch("predicate is not indexed by the kernels' target")
    difference = (f.matrix - g.matrix) @ phi.values
    return float(f.source.mu @ np.abs(difference))


def tv_pointwise(f: KernelMorphism, g: KernelMorphism) -> Tuple[float, float]:
    """Largest and mu-weighted mean total-variation distance between rows"""
    _require_comparable(f, g)
    tv = 0.5 * np.abs(f.matrix - g.matrix).sum(axis=1)
    positive = f.source.mu > 0
    largest = float(tv[positive].max()) if positive.any() else 0.0
    return largest, float(f.source.mu @ tv)


def _check_interval(interval: Interval) -> Interval:
    a, b = (float(v) for v in interval)
    if not (np.isfinite(a) and np.isfinite(b)):
        raise InvalidArgument(f"interval endpoints must be finite, got ({a}, {b}]")
    if a > b:
        raise InvalidArgument(f"interval ({a}, {b}] has its endpoints reversed")
    return a, b


def format_interval(interval: Interval) -> str:
    a, b = interval
    return f"({a:g},{b:g}]"


def _pushforward_mass(
    K: KernelModel1D, prior: Measure1D, lo: float, hi: float, q: QuadratureConfig
) -> float:
    xs, ws = gauss_legendre_nodes(-q.tail_cutoff, q.tail_cutoff, q)
    weights = ws * prior.density(xs)
    return float(weights @ K.interval_probabilities(xs, [lo, hi])[:, 0])


def _cell_weights(
    K: KernelModel1D,
    prior: Measure1D,
    P: Partition1D,
    interval: Interval,
    q: QuadratureConfig,
) -> np.ndarray:
    """Share of each output cell's pushforward mass that falls in the interval"""
    a, b = interval
    edges = P.edges()
    weights = np.zeros(P.num_cells)
    for l in range(P.num_cells):
        lo, hi = edges[l], edges[l + 1]
        overlap_lo, overlap_hi = max(lo, a), min(hi, b)
        if overlap_lo >= overlap_hi:
            continue
        if a <= lo and hi <= b:
            weights[l] = 1.0
            continue
        cell_mass = _pushforward_mass(K, prior, lo, hi, q)
        if cell_mass > 0:
            inside = _pushforward_mass(K, prior, overlap_lo, overlap_hi, q)
            weights[l] = min(1.0, inside / cell_mass)
    return weights


@dataclass(frozen=True)
class _NodeComparison:
    """Exact and step-kernel interval probabilities at the quadrature nodes"""

    weights: np.ndarray  # quadrature weight times prior density
    exact: np.ndarray
    stepped: np.ndarray


def _compare_on_nodes(
    K: KernelModel1D,
    prior: Measure1D,
    approx: KernelMorphism,
    P: Partition1D,
    interval: Interval,
    q: QuadratureConfig,
) -> _NodeComparison:
    if prior.density is None:
        raise InvalidArgument(f"prior {prior} has no density to integrate against")
    if approx.source.size != P.num_cells or approx.target.size != P.num_cells:
        raise SpaceMismatch("approximation is not defined on the partition's cells")
    check_tail_mass(prior, q)

    edges = P.edges()
    cutoff = q.tail_cutoff
    xs_parts: List[np.ndarray] = []
    ws_parts: List[np.ndarray] = []
    cells: List[np.ndarray] = []
    for k in range(P.num_cells):
        lo, hi = max(edges[k], -cutoff), min(edges[k + 1], cutoff)
        if hi <= lo:
            continue
        xs, ws = gauss_legendre_nodes(lo, hi, q)
        xs_parts.append(xs)
        ws_parts.append(ws)
        cells.append(np.full(xs.size, k))
    xs = np.concatenate(xs_parts)
    weights = np.concatenate(ws_parts) * prior.density(xs)

    exact = K.interval_probabilities(xs, list(interval))[:, 0]
    per_cell = approx.matrix @ _cell_weights(K, prior, P, interval, q)
    return _NodeComparison(weights, exact, per_cell[np.concatenate(cells)])


def sot_gap_analytic(
    K: KernelModel1D,
    prior: Measure1D,
    approx: KernelMorphism,
    P: Partition1D,
    interval: Interval,
    q: QuadratureConfig,
) -> float:
    """Integral over the prior of |K(x)(I) - approx(x)(I)| for I = (a, b].

    approx(x) is the row of the cell containing x, spread over each output
    cell in proportion to the pushforward of the prior through K.
    """
    a, b = _check_interval(interval)
    if a == b:
        return 0.0
    nodes = _compare_on_nodes(K, prior, approx, P, (a, b), q)
    return float(nodes.weights @ np.abs(nodes.exact - nodes.stepped))


def refinement_sweep(
    K: KernelModel1D,
    prior: Measure1D,
    chain: RefinementChain,
    test_intervals: Sequence[Interval],
    q: QuadratureConfig,
) -> ConvergenceReport:
    """Discretize K on each partition of the chain and record the gaps"""
    intervals = [_check_interval(i) for i in test_intervals]
    rows: List[ConvergenceRow] = []
    for P in chain.partitions:
        started = perf_counter()
        approx = discretize_kernel(K, prior, P, P, q)
        reference = pointwise_reference(K, P, P, approx.source)
        tv_max, tv_mean = tv_pointwise(approx, reference)
        gaps = [sot_gap_analytic(K, prior, approx, P, i, q) for i in intervals]
        runtime_ms = (perf_counter() - started) * 1000.0
        for interval, gap in zip(intervals, gaps):
            logger.info(
                "%s %s: gap %.6g, tv max %.3g",
                P.name,
                format_interval(interval),
                gap,
                tv_max,
            )
            rows.append(
                ConvergenceRow(
                    scheme=P.name,
                    cells=P.num_cells,
                    interval=format_interval(interval),
                    sot_gap=gap,
                    tv_max=tv_max,
                    tv_mean=tv_mean,
                    runtime_ms=runtime_ms,
                )
            )
    return ConvergenceReport(rows=rows)


def _product_gap(first: _NodeComparison, second: _NodeComparison) -> float:
    total = 0.0
    for start in range(0, first.weights.size, TENSOR_CHUNK):
        block = slice(start, start + TENSOR_CHUNK)
        exact = np.outer(first.exact[block], second.exact)
        stepped = np.outer(first.stepped[block], second.stepped)
        total += first.weights[block] @ np.abs(exact - stepped) @ second.weights
    return float(total)


def tensor_convergence_check(
    Kf: KernelModel1D,
    Kg: KernelModel1D,
    prior_f: Measure1D,
    prior_g: Measure1D,
    chain: RefinementChain,
    rectangle: Tuple[Interval, Interval],
    q: QuadratureConfig,
) -> ConvergenceReport:
    """Gap of the product of two discretizations on a rectangle indicator.

    The product kernel is never materialized; the double integral is
    evaluated on the tensor grid of the two factors' quadrature nodes.
    Total-variation columns are left empty.
    """
    first, second = (_check_interval(i) for i in rectangle)
    label = f"{format_interval(first)}x{format_interval(second)}"
    rows: List[ConvergenceRow] = []
    for P in chain.partitions:
        started = perf_counter()
        if first[0] == first[1] or second[0] == second[1]:
            gap = 0.0
        else:
            approx_f = discretize_kernel(Kf, prior_f, P, P, q)
            approx_g = discretize_kernel(Kg, prior_g, P, P, q)
            gap = _product_gap(
                _compare_on_nodes(Kf, prior_f, approx_f, P, first, q),
                _compare_on_nodes(Kg, prior_g, approx_g, P, second, q),
            )
        runtime_ms = (perf_counter() - started) * 1000.0
        logger.info("%s x %s %s: gap %.6g", P.name, P.name, label, gap)
        rows.append(
            ConvergenceRow(
                scheme=f"{P.name}x{P.name}",
                cells=P.num_cells**2,
                interval=label,
                sot_gap=gap,
                tv_max=None,
                tv_mean=None,
                runtime_ms=runtime_ms,
            )
        )
    return ConvergenceReport(rows=rows)

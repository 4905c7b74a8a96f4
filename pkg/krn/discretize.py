"""Discretization schemes and fibre-averaging approximations of kernels.

Partitions of the real line use right-closed cells
(-inf, b0], (b0, b1], ..., (b_last, +inf). Finite quotients are
deterministic surjections between finite spaces; approximating a kernel
along quotients averages it over their fibres.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from errors import (
    InvalidArgument,
    MalformedDocument,
    QuadratureFailure,
    SpaceMismatch,
    TailMassTooLarge,
)
from measure_core import (
    DIVISION_TOL,
    NULL_MASS,
    KernelMorphism,
    Label,
    MeasuredSpace,
    compose,
    dagger,
    deterministic_kernel,
    kernels_equal_ae,
)
from models import QuadratureConfig
from models1d import KernelModel1D, Measure1D

logger = logging.getLogger(__name__)

ROW_RENORMALIZE = 1e-9  # silently absorbed quadrature error per row
ROW_FAILURE = 1e-6  # beyond this a row is treated as an integration bug
NEGLIGIBLE_MASS = 1e-250  # below this, products underflow; use the fallback row
NESTING_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Partition1D:
    """Interval partition of the real line given by its breakpoints"""

    breakpoints: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        points = np.array(self.breakpoints, dtype=float).reshape(-1)
        if not np.all(np.isfinite(points)):
            raise InvalidArgument("breakpoints must be finite")
        if points.size > 1 and not np.all(np.diff(points) > 0):
            raise InvalidArgument("breakpoints must be strictly increasing")
        points.setflags(write=False)
        object.__setattr__(self, "breakpoints", points)
        if not self.name:
            object.__setattr__(self, "name", f"partition:{points.size + 1}")

    @property
    def num_cells(self) -> int:
        return self.breakpoints.size + 1

    def edges(self) -> np.ndarray:
        return np.concatenate([[-np.inf], self.breakpoints, [np.inf]])

    def widths(self) -> np.ndarray:
        return np.diff(self.edges())

    def labels(self) -> Tuple[int, ...]:
        return tuple(range(self.num_cells))

    def representatives(self) -> np.ndarray:
        """Midpoints of bounded cells; tail cells use their finite breakpoint"""
        if self.breakpoints.size == 0:
            return np.zeros(1)
        b = self.breakpoints
        return np.concatenate([[b[0]], 0.5 * (b[:-1] + b[1:]), [b[-1]]])

    def to_json(self) -> str:
        return json.dumps([float(b) for b in self.breakpoints])

    @classmethod
    def from_json(cls, text: str) -> "Partition1D":
        try:
            points = json.loads(text)
        except json.JSONDecodeError as e:
            raise MalformedDocument(
                f"line {e.lineno}, column {e.colno}: {e.msg}"
            ) from None
        if not isinstance(points, list) or not all(
            isinstance(p, (int, float)) and not isinstance(p, bool) for p in points
        ):
            raise MalformedDocument("a partition is a JSON array of numbers")
        return cls(np.array(points, dtype=float))


def window_scheme(m: int, n: int) -> Partition1D:
    """Window [-m, m] cut into 2mn equal cells plus the two tails"""
    for name, value in (("m", m), ("n", n)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise InvalidArgument(f"{name} must be an integer, got {value!r}")
        if value < 1:
            raise InvalidArgument(f"{name} must be at least 1, got {value}")
    steps = np.arange(2 * m * n + 1) - m * n
    return Partition1D(steps / n, name=f"window:{m}:{n}")


def cell_of(x, partition: Partition1D):
    """Index of the right-closed cell containing x (vectorized)"""
    return np.searchsorted(partition.breakpoints, x, side="left")


def _refines(fine: Partition1D, coarse: Partition1D) -> bool:
    if coarse.breakpoints.size == 0:
        return True
    if fine.breakpoints.size == 0:
        return False
    distance = np.abs(fine.breakpoints[None, :] - coarse.breakpoints[:, None])
    scale = np.maximum(1.0, np.abs(coarse.breakpoints))
    return bool(np.all(distance.min(axis=1) <= NESTING_TOL * scale))


@dataclass(frozen=True, eq=False)
class RefinementChain:
    """Partitions ordered so that each one refines the previous"""

    partitions: Tuple[Partition1D, ...]

    def __post_init__(self):
        partitions = tuple(self.partitions)
        if not partitions:
            raise InvalidArgument("a refinement chain needs at least one partition")
        for i in range(1, len(partitions)):
            if not _refines(partitions[i], partitions[i - 1]):
                raise InvalidArgument(
                    f"partition {i} does not refine partition {i - 1}"
                )
        object.__setattr__(self, "partitions", partitions)

    def __len__(self) -> int:
        return len(self.partitions)

    def quotient(self, i: int, j: int, space: MeasuredSpace) -> "FiniteQuotient":
        """Coarsening from the cells of partition j onto those of partition i"""
        if i > j:
            raise InvalidArgument(
                "can only coarsen from a later partition to an earlier one"
            )
        fine, coarse = self.partitions[j], self.partitions[i]
        if space.size != fine.num_cells:
            raise SpaceMismatch("space does not match the fine partition")
        right_edges = fine.edges()[1:]
        finite = np.where(np.isinf(right_edges), 0.0, right_edges)
        located = cell_of(finite, coarse)
        if coarse.breakpoints.size:
            # right edges within NESTING_TOL of a coarse breakpoint close that cell
            distance = np.abs(finite[:, None] - coarse.breakpoints[None, :])
            nearest = distance.argmin(axis=1)
            scale = np.maximum(1.0, np.abs(coarse.breakpoints[nearest]))
            on_breakpoint = distance[np.arange(finite.size), nearest] <= (
                NESTING_TOL * scale
            )
            located = np.where(on_breakpoint, nearest, located)
        assignment = np.where(np.isinf(right_edges), coarse.num_cells - 1, located)
        return FiniteQuotient(space, coarse.labels(), assignment)


@dataclass(frozen=True, eq=False)
class FiniteQuotient:
    """A deterministic surjection from a space's cells onto target labels"""

    source: MeasuredSpace
    target_labels: Tuple[Label, ...]
    assignment: np.ndarray

    def __post_init__(self):
        labels = tuple(self.target_labels)
        assignment = np.array(self.assignment, dtype=int).reshape(-1)
        if assignment.size != self.source.size:
            raise InvalidArgument("the assignment must cover every source cell")
        if assignment.size and (
            assignment.min() < 0 or assignment.max() >= len(labels)
        ):
            raise InvalidArgument("assignment refers to an unknown target label")
        if np.any(np.bincount(assignment, minlength=len(labels)) == 0):
            raise InvalidArgument("every target label must be hit")
        assignment.setflags(write=False)
        object.__setattr__(self, "target_labels", labels)
        object.__setattr__(self, "assignment", assignment)

    @classmethod
    def identity(cls, space: MeasuredSpace) -> "FiniteQuotient":
        return cls(space, space.labels, np.arange(space.size))

    @classmethod
    def collapse(cls, space: MeasuredSpace, label: Label = "*") -> "FiniteQuotient":
        return cls(space, (label,), np.zeros(space.size, dtype=int))

    @classmethod
    def from_mapping(
        cls, space: MeasuredSpace, mapping: Dict[Label, Label]
    ) -> "FiniteQuotient":
        """Target labels are ordered by first appearance along the source"""
        targets: List[Label] = []
        for label in space.labels:
            if mapping[label] not in targets:
                targets.append(mapping[label])
        assignment = [targets.index(mapping[label]) for label in space.labels]
        return cls(space, tuple(targets), assignment)

    def indicator(self) -> np.ndarray:
        matrix = np.zeros((self.source.size, len(self.target_labels)))
        matrix[np.arange(self.source.size), self.assignment] = 1.0
        return matrix

    def as_kernel(self) -> KernelMorphism:
        return deterministic_kernel(self.source, self.target_labels, self.assignment)

    def quotient_space(self) -> MeasuredSpace:
        return self.as_kernel().target

    def conditional_expectation(self) -> KernelMorphism:
        """Coarsen, then disintegrate back along the source weights"""
        p = self.as_kernel()
        return compose(p, dagger(p))


def _require_on(quotient: FiniteQuotient, space: MeasuredSpace, what: str):
    if not quotient.source.same_as(space, DIVISION_TOL):
        raise SpaceMismatch(f"{what} is not defined on the kernel's space")


def approximate_finite(
    f: KernelMorphism, p: FiniteQuotient, q: FiniteQuotient
) -> KernelMorphism:
    """Average f over the fibres of p (inputs) and q (outputs).

    The result lives on the quotient spaces. Null input fibres get the
    coarsened target weights as their row.
    """
    _require_on(p, f.source, "input quotient")
    _require_on(q, f.target, "output quotient")
    into, outof = p.indicator(), q.indicator()
    joint = f.source.mu[:, None] * f.matrix
    aggregated = into.T @ joint @ outof
    fibre_mass = f.source.mu @ into
    rows = np.tile(f.target.mu @ outof, (fibre_mass.size, 1))
    positive = fibre_mass > NULL_MASS
    rows[positive] = aggregated[positive] / fibre_mass[positive, None]
    return KernelMorphism.from_matrix(p.quotient_space(), q.target_labels, rows)


def internalize(
    f: KernelMorphism, p: FiniteQuotient, q: FiniteQuotient
) -> KernelMorphism:
    """The fibre-averaged kernel expressed on f's own spaces"""
    coarse = approximate_finite(f, p, q)
    lifted = compose(p.as_kernel(), coarse)
    return compose(lifted, dagger(q.as_kernel()))


def coarsen_input(f: KernelMorphism, p: FiniteQuotient) -> KernelMorphism:
    """f averaged over the input fibres of p only"""
    return compose(p.conditional_expectation(), f)


def is_left_hemi_bisimulation(f: KernelMorphism, q: FiniteQuotient) -> bool:
    """True when coarsening f's outputs along q and redistributing loses nothing"""
    return kernels_equal_ae(f, compose(f, q.conditional_expectation()), DIVISION_TOL)


def is_right_hemi_bisimulation(g: KernelMorphism, q: FiniteQuotient) -> bool:
    """True when g's rows are constant on the fibres of q (a.e.)"""
    return kernels_equal_ae(g, compose(q.conditional_expectation(), g), DIVISION_TOL)


def push_measure(mu: Measure1D, partition: Partition1D) -> MeasuredSpace:
    """Weights of each cell under mu"""
    edges = partition.edges()
    weights = mu.interval_mass(edges[:-1], edges[1:])
    return MeasuredSpace(partition.labels(), weights)


def tail_mass(mu: Measure1D, cutoff: float) -> float:
    """Mass of mu outside [-cutoff, cutoff]"""
    return float(mu.cdf(-cutoff) + mu.survival(cutoff))


def gauss_legendre_nodes(
    lo: float, hi: float, q: QuadratureConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [lo, hi]"""
    reference_nodes, reference_weights = np.polynomial.legendre.leggauss(
        q.nodes_per_cell
    )
    panels = max(1, math.ceil((hi - lo) / q.max_panel_width))
    cuts = np.linspace(lo, hi, panels + 1)
    half = 0.5 * (cuts[1:] - cuts[:-1])[:, None]
    centre = 0.5 * (cuts[1:] + cuts[:-1])[:, None]
    return (half * reference_nodes + centre).ravel(), (half * reference_weights).ravel()


def check_tail_mass(prior: Measure1D, q: QuadratureConfig):
    outside = tail_mass(prior, q.tail_cutoff)
    if outside > q.tail_tolerance:
        raise TailMassTooLarge(
            f"prior {prior} puts mass {outside:.3g} outside "
            f"[-{q.tail_cutoff:g}, {q.tail_cutoff:g}] (tolerance {q.tail_tolerance:g})"
        )


def _checked_row(raw: np.ndarray, cell: int) -> np.ndarray:
    total = float(raw.sum())
    deviation = abs(total - 1.0)
    if deviation > ROW_FAILURE:
        raise QuadratureFailure(f"row {cell} sums to {total!r} before normalization")
    if deviation > ROW_RENORMALIZE:
        logger.warning("row %d off by %.3g before normalization", cell, deviation)
    return raw / total


def _representative_rows(
    K: KernelModel1D, points: np.ndarray, out_edges: np.ndarray
) -> np.ndarray:
    rows = K.interval_probabilities(points, out_edges)
    return rows / rows.sum(axis=1, keepdims=True)


def pointwise_reference(
    K: KernelModel1D, P_in: Partition1D, P_out: Partition1D, source: MeasuredSpace
) -> KernelMorphism:
    """K evaluated at one representative point per input cell, binned on P_out"""
    rows = _representative_rows(K, P_in.representatives(), P_out.edges())
    return KernelMorphism.from_matrix(source, P_out.labels(), rows)


def discretize_kernel(
    K: KernelModel1D,
    prior: Measure1D,
    P_in: Partition1D,
    P_out: Partition1D,
    q: QuadratureConfig,
) -> KernelMorphism:
    """Finite approximation of K between the cells of P_in and P_out.

    Entry [k][l] is the prior-weighted average over input cell k of the
    probability K(x) gives to output cell l. Cells are truncated to
    [-T, T]; cells with no usable prior mass are evaluated at their
    representative point instead.
    """
    if prior.density is None:
        raise InvalidArgument(f"prior {prior} has no density to integrate against")
    check_tail_mass(prior, q)
    source = push_measure(prior, P_in)
    in_edges, out_edges = P_in.edges(), P_out.edges()
    cutoff = q.tail_cutoff

    matrix = np.empty((P_in.num_cells, P_out.num_cells))
    fallback: List[int] = []
    for k in range(P_in.num_cells):
        lo, hi = max(in_edges[k], -cutoff), min(in_edges[k + 1], cutoff)
        mass = float(prior.interval_mass(lo, hi)) if hi > lo else 0.0
        if source.mu[k] <= 0 or mass <= NEGLIGIBLE_MASS:
            fallback.append(k)
            continue
        xs, ws = gauss_legendre_nodes(lo, hi, q)
        weights = ws * prior.density(xs)
        raw = weights @ K.interval_probabilities(xs, out_edges) / mass
        matrix[k] = _checked_row(raw, k)

    if fallback:
        logger.info("%d input cells use the representative-point row", len(fallback))
        points = P_in.representatives()[fallback]
        matrix[fallback] = _representative_rows(K, points, out_edges)

    return KernelMorphism.from_matrix(source, P_out.labels(), matrix)

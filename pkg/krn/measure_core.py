"""Exact algebra of measured finite spaces and Markov kernels.

Objects are finite cell sets carrying a probability vector, arrows are
row-stochastic matrices whose target weights are the pushforward of the
source weights. Everything here is immutable: arrays are copied on
construction and marked read-only.
"""

import logging
import math
from dataclasses import dataclass
from typing import Hashable, Sequence, Tuple, Union

import numpy as np

from errors import (
    AbsoluteContinuityViolation,
    IndexMismatch,
    InvalidArgument,
    SpaceMismatch,
)

logger = logging.getLogger(__name__)

EXACT_TOL = 1e-12  # exact finite algebra
DIVISION_TOL = 1e-9  # results that divide by small masses
NORMALIZATION_SLACK = 1e-9  # largest weight-sum deviation we silently absorb
NULL_MASS = 1e-12  # cells at or below this mass are treated as null

Label = Hashable


def _frozen(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


def _renormalized(weights: np.ndarray, what: str) -> np.ndarray:
    total = float(weights.sum())
    if abs(total - 1.0) > NORMALIZATION_SLACK:
        raise InvalidArgument(f"{what} sum to {total!r}, expected 1")
    return weights / total


def _row_stochastic(matrix, shape: Tuple[int, int]) -> np.ndarray:
    matrix = np.array(matrix, dtype=float)
    if matrix.shape != shape:
        raise InvalidArgument(f"matrix has shape {matrix.shape}, expected {shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidArgument("matrix entries must be finite")
    if (matrix < 0).any():
        raise InvalidArgument("matrix entries must be non-negative")
    sums = matrix.sum(axis=1)
    worst = int(np.argmax(np.abs(sums - 1.0)))
    if abs(sums[worst] - 1.0) > NORMALIZATION_SLACK:
        raise InvalidArgument(f"row {worst} sums to {sums[worst]!r}, expected 1")
    return matrix / sums[:, None]


@dataclass(frozen=True, eq=False)
class MeasuredSpace:
    """A finite set of labelled cells with a probability weight per cell"""

    labels: Tuple[Label, ...]
    mu: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        mu = np.array(self.mu, dtype=float).reshape(-1)
        if not labels:
            raise InvalidArgument("a measured space needs at least one cell")
        if len(labels) != mu.size:
            raise InvalidArgument(f"{len(labels)} labels but {mu.size} weights")
        if len(set(labels)) != len(labels):
            raise InvalidArgument("cell labels must be distinct")
        if not np.all(np.isfinite(mu)) or (mu < 0).any():
            raise InvalidArgument("weights must be finite and non-negative")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mu", _frozen(_renormalized(mu, "weights")))

    @classmethod
    def uniform(cls, labels: Sequence[Label]) -> "MeasuredSpace":
        return cls(tuple(labels), np.full(len(labels), 1.0 / len(labels)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: Label) -> int:
        return self.labels.index(label)

    def same_as(self, other: "MeasuredSpace", tol: float = EXACT_TOL) -> bool:
        """Same labels in the same order and weights equal within tol"""
        if self is other:
            return True
        return self.labels == other.labels and bool(
            np.max(np.abs(self.mu - other.mu)) <= tol
        )

    def product(self, other: "MeasuredSpace") -> "MeasuredSpace":
        """Product space with product weights, cells ordered row-major"""
        labels = tuple((a, b) for a in self.labels for b in other.labels)
        return MeasuredSpace(labels, np.outer(self.mu, other.mu).ravel())


def _require_indexed(space: MeasuredSpace, expected: MeasuredSpace, what: str):
    if not space.same_as(expected, DIVISION_TOL):
        raise IndexMismatch(f"{what} is indexed by a different space")


@dataclass(frozen=True, eq=False)
class Predicate:
    """A real function on the cells of a space"""

    space: MeasuredSpace
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.space.size:
            raise IndexMismatch(f"{values.size} values for {self.space.size} cells")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("predicate values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def constant(cls, space: MeasuredSpace, value: float = 1.0) -> "Predicate":
        return cls(space, np.full(space.size, float(value)))

    @classmethod
    def indicator(cls, space: MeasuredSpace, cells: Sequence[int]) -> "Predicate":
        values = np.zeros(space.size)
        values[list(cells)] = 1.0
        return cls(space, values)


@dataclass(frozen=True, eq=False)
class DensityVector:
    """A Radon-Nikodym derivative with respect to a space's weights"""

    space: MeasuredSpace
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.space.size:
            raise IndexMismatch(f"{values.size} values for {self.space.size} cells")
        if not np.all(np.isfinite(values)) or (values < 0).any():
            raise InvalidArgument("densities must be finite and non-negative")
        object.__setattr__(self, "values", _frozen(values))


def _check_absolutely_continuous(values: np.ndarray, mu: np.ndarray):
    offending = np.flatnonzero((mu == 0) & (values > 0))
    if offending.size:
        raise AbsoluteContinuityViolation(
            f"mass {values[offending[0]]!r} on null cell {int(offending[0])}"
        )


@dataclass(frozen=True, eq=False)
class FiniteMeasureVector:
    """A finite measure absolutely continuous w.r.t. a space's weights"""

    space: MeasuredSpace
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.space.size:
            raise IndexMismatch(f"{values.size} values for {self.space.size} cells")
        if not np.all(np.isfinite(values)) or (values < 0).any():
            raise InvalidArgument("measure values must be finite and non-negative")
        _check_absolutely_continuous(values, self.space.mu)
        object.__setattr__(self, "values", _frozen(values))

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())

    @classmethod
    def point_mass(cls, space: MeasuredSpace, cell: int) -> "FiniteMeasureVector":
        values = np.zeros(space.size)
        values[cell] = 1.0
        return cls(space, values)


@dataclass(frozen=True, eq=False)
class KernelMorphism:
    """A Markov kernel between measured finite spaces.

    Row k of ``matrix`` is the distribution the kernel assigns to source
    cell k. The target weights must be the pushforward of the source
    weights through the matrix.
    """

    source: MeasuredSpace
    target: MeasuredSpace
    matrix: np.ndarray

    def __post_init__(self):
        matrix = _row_stochastic(self.matrix, (self.source.size, self.target.size))
        pushed = self.source.mu @ matrix
        gap = float(np.max(np.abs(pushed - self.target.mu)))
        if gap > DIVISION_TOL:
            raise InvalidArgument(
                f"target weights differ from the pushforward by {gap!r}"
            )
        object.__setattr__(self, "matrix", _frozen(matrix))

    @classmethod
    def from_matrix(
        cls, source: MeasuredSpace, target_labels: Sequence[Label], matrix
    ) -> "KernelMorphism":
        """Build a kernel whose target weights are computed from the matrix"""
        matrix = _row_stochastic(matrix, (source.size, len(target_labels)))
        target = MeasuredSpace(tuple(target_labels), source.mu @ matrix)
        return cls(source, target, matrix)


def identity(space: MeasuredSpace) -> KernelMorphism:
    return KernelMorphism.from_matrix(space, space.labels, np.eye(space.size))


def constant_kernel(source: MeasuredSpace, target: MeasuredSpace) -> KernelMorphism:
    """The kernel sending every cell to the target's weights"""
    matrix = np.tile(target.mu, (source.size, 1))
    return KernelMorphism.from_matrix(source, target.labels, matrix)


def deterministic_kernel(
    source: MeasuredSpace, target_labels: Sequence[Label], assignment: Sequence[int]
) -> KernelMorphism:
    """The kernel of a function, given as target indices per source cell"""
    assignment = np.asarray(assignment, dtype=int)
    matrix = np.zeros((source.size, len(target_labels)))
    matrix[np.arange(source.size), assignment] = 1.0
    return KernelMorphism.from_matrix(source, target_labels, matrix)


def compose(f: KernelMorphism, g: KernelMorphism) -> KernelMorphism:
    """Run f, then g"""
    if not f.target.same_as(g.source):
        raise SpaceMismatch(
            "target of the first kernel is not the source of the second"
        )
    return KernelMorphism.from_matrix(f.source, g.target.labels, f.matrix @ g.matrix)


def tensor(f: KernelMorphism, g: KernelMorphism) -> KernelMorphism:
    """Independent product of two kernels on the product spaces"""
    source = f.source.product(g.source)
    target_labels = f.target.product(g.target).labels
    return KernelMorphism.from_matrix(
        source, target_labels, np.kron(f.matrix, g.matrix)
    )


def coupling(f: KernelMorphism) -> FiniteMeasureVector:
    """Joint law of (input, output) on source x target"""
    joint = f.source.mu[:, None] * f.matrix
    return FiniteMeasureVector(f.source.product(f.target), joint.ravel())


def marginals(
    gamma: FiniteMeasureVector, source: MeasuredSpace, target: MeasuredSpace
) -> Tuple[np.ndarray, np.ndarray]:
    """Row and column sums of a measure on source x target"""
    joint = gamma.values.reshape(source.size, target.size)
    return joint.sum(axis=1), joint.sum(axis=0)


def dagger(f: KernelMorphism) -> KernelMorphism:
    """Bayesian inversion of f with respect to its source weights.

    Rows for target cells of mass at most NULL_MASS are set to the source
    weights; any choice is valid there and this one keeps the result
    stochastic.
    """
    mu = f.source.mu
    nu = f.target.mu
    joint = mu[:, None] * f.matrix
    posterior = np.tile(mu, (nu.size, 1))
    positive = nu > NULL_MASS
    posterior[positive] = joint[:, positive].T / nu[positive, None]
    if not positive.all():
        logger.debug("dagger: %d null target cells", int((~positive).sum()))
    return KernelMorphism.from_matrix(f.target, f.source.labels, posterior)


def predicate_transform(f: KernelMorphism, phi: Predicate) -> Predicate:
    """Pull a predicate on the target back to the source (phi after f)"""
    _require_indexed(phi.space, f.target, "predicate")
    return Predicate(f.source, f.matrix @ phi.values)


def state_transform(f: KernelMorphism, rho: FiniteMeasureVector) -> FiniteMeasureVector:
    """Push a measure on the source forward through f"""
    _require_indexed(rho.space, f.source, "measure")
    _check_absolutely_continuous(rho.values, f.source.mu)
    return FiniteMeasureVector(f.target, rho.values @ f.matrix)


def rn_derivative(rho: FiniteMeasureVector, space: MeasuredSpace) -> DensityVector:
    """Density of rho with respect to the space's weights (0 on null cells)"""
    _require_indexed(rho.space, space, "measure")
    _check_absolutely_continuous(rho.values, space.mu)
    density = np.zeros(space.size)
    np.divide(rho.values, space.mu, out=density, where=space.mu > 0)
    return DensityVector(space, density)


def mr(density: DensityVector, space: MeasuredSpace) -> FiniteMeasureVector:
    """The measure with the given density"""
    _require_indexed(density.space, space, "density")
    return FiniteMeasureVector(space, density.values * space.mu)


def lp_norm(phi: Predicate, space: MeasuredSpace, p: Union[int, float]) -> float:
    """Weighted L1, L2 or essential-sup norm"""
    _require_indexed(phi.space, space, "predicate")
    magnitudes = np.abs(phi.values)
    if p == 1:
        return float(space.mu @ magnitudes)
    if p == 2:
        return math.sqrt(float(space.mu @ magnitudes**2))
    if math.isinf(p) and p > 0:
        positive = space.mu > 0
        return float(magnitudes[positive].max()) if positive.any() else 0.0
    raise InvalidArgument(f"unsupported norm exponent {p!r}; use 1, 2 or inf")


def kernels_equal_ae(f: KernelMorphism, g: KernelMorphism, tol: float) -> bool:
    """Rows agree within tol on every source cell of mass above tol"""
    if not f.source.same_as(g.source, DIVISION_TOL) or not f.target.same_as(
        g.target, DIVISION_TOL
    ):
        raise SpaceMismatch("kernels are defined on different spaces")
    rows = f.source.mu > tol
    return bool(np.all(np.abs(f.matrix[rows] - g.matrix[rows]) <= tol))


def change_of_variables_check(f: KernelMorphism, phi: Predicate) -> Tuple[float, float]:
    """Target integral of phi, and source integral of phi transformed by f"""
    pulled = predicate_transform(f, phi)
    return float(f.target.mu @ phi.values), float(f.source.mu @ pulled.values)

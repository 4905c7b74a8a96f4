import csv
import io
import json
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


def _number(value: float) -> str:
    """Serialize a float with 17 significant digits"""
    return format(float(value), ".17g")


class QuadratureConfig(BaseModel):
    """Gauss-Legendre settings for integrating against a prior density"""

    model_config = ConfigDict(frozen=True)

    nodes_per_cell: int = Field(16, ge=2)  # Nodes per panel
    tail_cutoff: float = Field(12.0, gt=0)  # Integrate over [-T, T] only
    tail_tolerance: float = Field(1e-9, ge=0)  # Allowed prior mass outside [-T, T]
    max_panel_width: float = Field(1.0, gt=0)  # Longer cells are split into panels

    @classmethod
    def from_config(cls, config, **overrides) -> "QuadratureConfig":
        values = {
            "nodes_per_cell": config.QUAD_NODES,
            "tail_cutoff": config.TAIL_CUTOFF,
            "tail_tolerance": config.TAIL_TOLERANCE,
            "max_panel_width": config.MAX_PANEL_WIDTH,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class KernelDocument(BaseModel):
    """On-disk form of a finite kernel"""

    labels_in: List[str]
    labels_out: List[str]
    mu: List[float]  # Source weights
    matrix: List[List[float]]  # One row per input label

    @model_validator(mode="after")
    def _check_shapes(self) -> "KernelDocument":
        if len(self.mu) != len(self.labels_in):
            raise ValueError(
                f"mu has {len(self.mu)} entries for {len(self.labels_in)} input labels"
            )
        if len(self.matrix) != len(self.labels_in):
            raise ValueError(
                f"matrix has {len(self.matrix)} rows for "
                f"{len(self.labels_in)} input labels"
            )
        for i, row in enumerate(self.matrix):
            if len(row) != len(self.labels_out):
                raise ValueError(
                    f"matrix row {i} has {len(row)} entries for "
                    f"{len(self.labels_out)} output labels"
                )
        return self

    def to_json(self) -> str:
        rows = ",\n".join(
            "    [" + ", ".join(_number(x) for x in row) + "]" for row in self.matrix
        )
        return "\n".join(
            [
                "{",
                f'  "labels_in": {json.dumps(self.labels_in)},',
                f'  "labels_out": {json.dumps(self.labels_out)},',
                '  "mu": [' + ", ".join(_number(x) for x in self.mu) + "],",
                '  "matrix": [',
                rows,
                "  ]",
                "}",
            ]
        )


class PosteriorCell(BaseModel):
    """One histogram cell of an approximate posterior"""

    index: int
    left: Optional[float] = None  # None stands for -infinity
    right: Optional[float] = None  # None stands for +infinity
    mass: float
    density: Optional[float] = None  # Only reported for bounded cells


class PosteriorSummary(BaseModel):
    mean: float
    variance: float
    queries: Dict[str, float] = {}


class PosteriorOracle(BaseModel):
    """Exact conjugate posterior and how far the approximation is from it"""

    mean: float
    variance: float
    mean_deviation: float
    variance_deviation: float
    density_sup_deviation: float
    queries: Dict[str, float] = {}


class PosteriorReport(BaseModel):
    """Approximate posterior histogram with summaries"""

    scheme: str
    prior: str
    likelihood: str
    observation: float
    observed_cell: int
    cells: List[PosteriorCell]
    summary: PosteriorSummary
    oracle: Optional[PosteriorOracle] = None

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["index", "left", "right", "mass", "density"])
        for cell in self.cells:
            fields = [cell.left, cell.right, cell.mass, cell.density]
            writer.writerow(
                [cell.index] + ["" if v is None else repr(v) for v in fields]
            )
        return buffer.getvalue()


class ConvergenceRow(BaseModel):
    scheme: str
    cells: int
    interval: str
    sot_gap: float
    tv_max: Optional[float] = None  # Empty for tensor rows
    tv_mean: Optional[float] = None
    runtime_ms: float


class ConvergenceReport(BaseModel):
    """Gap measurements along a refinement chain, in chain order"""

    rows: List[ConvergenceRow] = []

    @model_validator(mode="after")
    def _check_order(self) -> "ConvergenceReport":
        last: Dict[str, int] = {}
        for row in self.rows:
            if row.cells < last.get(row.interval, 0):
                raise ValueError("rows must be ordered by refinement")
            last[row.interval] = row.cells
        return self

    def to_csv(self, include_timing: bool = False) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            [
                "scheme",
                "cells",
                "interval",
                "sot_gap",
                "tv_max",
                "tv_mean",
                "runtime_ms",
            ]
        )
        for row in self.rows:
            # Timings are left empty by default so repeated runs are byte-identical
            runtime = repr(round(row.runtime_ms, 3)) if include_timing else ""
            writer.writerow(
                [
                    row.scheme,
                    row.cells,
                    row.interval,
                    repr(row.sot_gap),
                    "" if row.tv_max is None else repr(row.tv_max),
                    "" if row.tv_mean is None else repr(row.tv_mean),
                    runtime,
                ]
            )
        return buffer.getvalue()


class QueryAnswer(BaseModel):
    query: str
    probability: float
    hitting: Optional[float] = None  # Cross-check by linear solve, if applicable
    monte_carlo: Optional[float] = None
    monte_carlo_stderr: Optional[float] = None
    deviation: Optional[float] = None  # |monte_carlo - probability|


class NetkatReport(BaseModel):
    """Answers to queries about a ProbNetKAT program's output distribution"""

    program: str
    level: int
    input: str
    support_size: int
    answers: List[QueryAnswer]


class SuiteOutcome(BaseModel):
    """Result of one invariant suite over seeded random cases"""

    name: str
    cases: int
    failures: List[str] = []  # "seed S case C: ..." reproducers

    @property
    def passed(self) -> int:
        return self.cases - len(self.failures)

    def summary_line(self) -> str:
        return f"{self.name}: {self.passed} passed, {len(self.failures)} failed"

"""Detectability and isolability rank tests, and structure matrices."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import lti
from .plant import PartitionedPlant


class StructureMatrix:
    """Binary ``n_eps x n_f`` matrix; rows are specifications, columns signatures."""

    def __init__(self, entries):
        arr = np.atleast_2d(np.asarray(entries))
        if arr.size and not np.all(np.isin(arr, (0, 1))):
            raise ValueError("structure matrix entries must be 0 or 1")
        self.entries = arr.astype(int)
        self.entries.setflags(write=False)
        empty = np.where(self.entries.sum(axis=0) == 0)[0]
        if empty.size:
            warnings.warn(f"faults {list(empty + 1)} appear in no specification",
                          stacklevel=2)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_faults(self) -> int:
        return self.entries.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.entries[i]

    def column(self, j: int) -> np.ndarray:
        return self.entries[:, j]

    def __eq__(self, other):
        if not isinstance(other, StructureMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.all(self.entries == other.entries))

    def __repr__(self):
        return f"StructureMatrix({self.entries.tolist()})"

    def to_json(self) -> str:
        return json.dumps(self.entries.tolist())

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.entries.tolist())
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "StructureMatrix":
        """Parse a JSON array of 0/1 rows or CSV."""
        text = text.strip()
        if text.startswith("["):
            return cls(json.loads(text))
        rows = [[int(v) for v in r] for r in csv.reader(io.StringIO(text)) if r]
        return cls(rows)


def make_structure(kind: str, n_f: int) -> StructureMatrix:
    """``strong`` (identity), ``hollow`` (ones minus identity) or ``wafer17``."""
    if n_f < 1:
        raise ValueError("n_f must be positive")
    if kind == "strong":
        return StructureMatrix(np.eye(n_f, dtype=int))
    if kind == "hollow":
        return StructureMatrix(np.ones((n_f, n_f), dtype=int) - np.eye(n_f, dtype=int))
    if kind == "wafer17":
        if n_f != 17:
            raise ValueError("wafer17 structure needs n_f = 17")
        s = np.ones((17, 17), dtype=int) - np.eye(17, dtype=int)
        for i in range(4):
            s[i, 13 + i] = 0
        return StructureMatrix(s)
    raise ValueError(f"unknown structure kind {kind!r}")


@dataclass(frozen=True)
class RankVerdict:
    passed: bool
    rank_with: int
    rank_without: int
    margin: float


class _Sampler:
    """Caches generic-point samples of ``[G_d, G_f]`` for repeated rank tests."""

    def __init__(self, plant: PartitionedPlant, n_points: int = lti.RANK_POINTS,
                 seed: int = 12345):
        cols = plant.columns("d") + plant.columns("f")
        sub = lti.select(plant.model, None, cols) if cols else None
        self.n_d = plant.n_d
        self.n_f = plant.n_f
        if sub is None:
            self.resp = np.zeros((n_points, plant.n_y, 0), dtype=complex)
        else:
            self.resp = lti.sample_response(sub, n_points, seed)

    def _cols(self, d: bool, faults) -> list[int]:
        base = list(range(self.n_d)) if d else []
        return base + [self.n_d + j for j in faults]

    def rank(self, faults, with_d: bool = True) -> tuple[int, float]:
        cols = self._cols(with_d, faults)
        if not cols:
            return 0, 0.0
        best, sig = 0, 0.0
        for x in self.resp:
            sub = x[:, cols]
            r = lti.numerical_rank(sub)
            if r >= best:
                sv = np.linalg.svd(sub, compute_uv=False)
                best, sig = r, float(sv[r - 1] / sv[0]) if r else 0.0
        return best, sig

    def compare(self, base_faults, extra_faults) -> RankVerdict:
        r0, _ = self.rank(list(base_faults))
        r1, margin = self.rank(list(base_faults) + list(extra_faults))
        return RankVerdict(r1 > r0, r1, r0, margin if r1 > r0 else 0.0)


def is_completely_detectable(plant: PartitionedPlant) -> list[bool]:
    """Per fault: ``rank [G_fj, G_d] > rank G_d``."""
    if plant.n_f < 1:
        raise ValueError("plant has no fault inputs")
    smp = _Sampler(plant)
    return [smp.compare([], [j]).passed for j in range(plant.n_f)]


@dataclass(frozen=True)
class IsolabilityReport:
    passed: bool
    checks: dict  # (row, fault) -> RankVerdict, zero-based

    def failures(self) -> list[tuple[int, int]]:
        return [k for k, v in self.checks.items() if not v.passed]


def is_s_isolable(plant: PartitionedPlant, s: StructureMatrix) -> IsolabilityReport:
    """``rank [G_d, Ghat_d(i), G_fj] > rank [G_d, Ghat_d(i)]`` for every ``S_ij = 1``."""
    if s.n_faults != plant.n_f:
        raise ValueError("structure matrix column count must equal n_f")
    smp = _Sampler(plant)
    checks = {}
    for i in range(s.n_rows):
        decoupled = [j for j in range(plant.n_f) if s.entries[i, j] == 0]
        for j in range(plant.n_f):
            if s.entries[i, j]:
                checks[(i, j)] = smp.compare(decoupled, [j])
    return IsolabilityReport(all(v.passed for v in checks.values()), checks)


def is_strongly_isolable(plant: PartitionedPlant) -> bool:
    """``rank [G_d, G_f] = rank G_d + n_f``."""
    smp = _Sampler(plant)
    rd, _ = smp.rank([])
    rdf, _ = smp.rank(list(range(plant.n_f)))
    return rdf == rd + plant.n_f


def is_weakly_isolable(plant: PartitionedPlant) -> tuple[bool, list[tuple[int, int]]]:
    """Pairwise tests ``rank [G_d, G_fi, G_fj] > rank [G_d, G_fi]``.

    Returns the verdict and the failing ordered pairs (zero-based).
    """
    if plant.n_f < 2:
        raise ValueError("weak isolability needs at least two faults")
    smp = _Sampler(plant)
    failing = [(i, j) for i in range(plant.n_f) for j in range(plant.n_f)
               if i != j and not smp.compare([i], [j]).passed]
    return not failing, failing

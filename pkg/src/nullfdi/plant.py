"""Plant with inputs partitioned into control, disturbance, noise and fault groups."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lti
from .lti import StateSpaceModel

GROUPS = ("u", "d", "w", "f")


@dataclass(frozen=True)
class PartitionedPlant:
    """``y = G_u u + G_d d + G_w w + G_f f`` carried by one realization."""

    model: StateSpaceModel
    n_u: int
    n_d: int = 0
    n_w: int = 0
    n_f: int = 0

    def __post_init__(self):
        counts = (self.n_u, self.n_d, self.n_w, self.n_f)
        if min(counts) < 0:
            raise ValueError("partition sizes must be non-negative")
        if sum(counts) != self.model.n_inputs:
            raise ValueError(f"partitions sum to {sum(counts)} but model has "
                             f"{self.model.n_inputs} inputs")

    @property
    def n_y(self) -> int:
        return self.model.n_outputs

    def columns(self, group: str) -> list[int]:
        sizes = dict(zip(GROUPS, (self.n_u, self.n_d, self.n_w, self.n_f)))
        start = 0
        for g in GROUPS:
            if g == group:
                return list(range(start, start + sizes[g]))
            start += sizes[g]
        raise KeyError(group)

    def block(self, group: str, subset=None) -> StateSpaceModel | None:
        cols = self.columns(group)
        if subset is not None:
            cols = [cols[j] for j in subset]
        if not cols:
            return None
        return lti.select(self.model, None, cols)

    @property
    def g_u(self) -> StateSpaceModel:
        return lti.select(self.model, None, self.columns("u"))

    @property
    def g_d(self):
        return self.block("d")

    @property
    def g_w(self):
        return self.block("w")

    @property
    def g_f(self):
        return self.block("f")

    def partitions(self) -> dict:
        return {"u": self.n_u, "d": self.n_d, "w": self.n_w, "f": self.n_f}


def assemble(g_u: StateSpaceModel, g_d=None, g_w=None, g_f=None,
             actuator_faults=None, sensor_faults=None) -> PartitionedPlant:
    """Build a partitioned plant sharing the states of ``g_u``.

    ``g_d``/``g_w``/``g_f`` are either constant matrices (added as feedthrough
    columns) or models sharing ``g_u``'s state matrices. ``actuator_faults``
    lists control inputs whose faults enter like ``G_u e_j``; ``sensor_faults``
    lists outputs receiving additive faults ``e_k``. Both are appended after
    ``g_f``.
    """
    n = g_u.n_states
    n_y = g_u.n_outputs
    bs, ds, counts = [g_u.b], [g_u.d], [g_u.n_inputs]

    def _add(block):
        if block is None:
            counts.append(0)
            return
        if isinstance(block, StateSpaceModel):
            if block.n_states != n or not np.allclose(block.a, g_u.a) \
                    or not np.allclose(block.c, g_u.c):
                raise ValueError("blocks must share the realization of g_u")
            bs.append(block.b)
            ds.append(block.d)
            counts.append(block.n_inputs)
        else:
            mat = np.atleast_2d(np.asarray(block, dtype=float))
            bs.append(np.zeros((n, mat.shape[1])))
            ds.append(mat)
            counts.append(mat.shape[1])

    _add(g_d)
    _add(g_w)
    _add(g_f)
    extra = 0
    if actuator_faults:
        idx = list(actuator_faults)
        bs.append(g_u.b[:, idx])
        ds.append(g_u.d[:, idx])
        extra += len(idx)
    if sensor_faults:
        idx = list(sensor_faults)
        bs.append(np.zeros((n, len(idx))))
        ds.append(np.eye(n_y)[:, idx])
        extra += len(idx)
    counts[3] += extra
    model = StateSpaceModel(g_u.a, np.hstack(bs), g_u.c, np.hstack(ds), g_u.ts)
    return PartitionedPlant(model, *counts)

"""Residual generator banks ``Q = Q3 Q2 Q1`` by the nullspace method.

For every specification row ``i`` of a structure matrix the bank holds one
scalar filter acting on ``[y; u]``:

* ``Q1`` is a proper stable left nullspace basis of ``[G_u, G_d, Ghat_d; I, 0, 0]``,
  where ``Ghat_d`` collects the faults that row ``i`` must not see;
* ``Q2`` is a seeded unit-norm combination of the basis rows;
* ``Q3`` is ``gamma`` times the inverse of the co-outer factor of the noise
  channel, or a normalizing constant when there is no noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lti
from .factorizations import _multiply_by_lead, co_inner_outer
from .isolability import StructureMatrix, is_completely_detectable, is_s_isolable
from .lti import StateSpaceModel
from .nullspace import (NoResidualGeneratorError, annihilation_error, composite,
                        balanced_weights, default_weights, left_nullspace)
from .plant import PartitionedPlant

DECOUPLING_TOL = 1e-6


class SynthesisError(ValueError):
    """Synthesis precondition or post-check failed.

    Attributes
    ----------
    condition : str
        Name of the violated condition.
    failing : list of tuple
        Offending ``(row, fault)`` pairs (zero-based) where applicable.
    """

    def __init__(self, message: str, condition: str, failing=()):
        super().__init__(message)
        self.condition = condition
        self.failing = list(failing)


@dataclass(frozen=True)
class SynthesisOptions:
    mode: str = "exact"
    gamma: float = 1.0
    nonzero_threshold: float = 1e-6
    normalize: bool = True
    lcf_weight: float = 1.0
    lcf_shift: float = 0.0
    check: bool = True
    biproper_tau: float | None = None
    emphasis: float = 1.0
    combination: str = "seeded"
    balance_band_hz: float | None = None

    def __post_init__(self):
        if self.mode not in ("exact", "soft"):
            raise ValueError("mode must be 'exact' or 'soft'")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.lcf_weight > 0:
            raise ValueError("lcf_weight must be positive")
        if not self.lcf_shift >= 0:
            raise ValueError("lcf_shift must be nonnegative")
        if self.combination not in ("seeded", "balanced"):
            raise ValueError("combination must be 'seeded' or 'balanced'")
        if self.biproper_tau is not None and not self.biproper_tau > 0:
            raise ValueError("biproper_tau must be positive")
        if self.balance_band_hz is not None and not self.balance_band_hz > 0:
            raise ValueError("balance_band_hz must be positive")
        if not self.emphasis >= 1.0:
            raise ValueError("emphasis must be at least 1")
        if self.emphasis > 1.0 and self.biproper_tau is None:
            raise ValueError("emphasis needs biproper_tau as its corner")


@dataclass(frozen=True)
class GapResult:
    q3: StateSpaceModel
    beta: float
    eta: float
    noise_norm: float


@dataclass
class FilterBank:
    """Scalar residual generators, one per specification row.

    ``fault_channels[i]`` and ``noise_channels[i]`` are stable realizations
    of the open-loop internal forms ``R_f`` (``1 x n_f``) and ``R_w``.
    """

    filters: list
    target: StructureMatrix
    spec_rows: list
    gaps: list
    betas: list
    achieved_structure: StructureMatrix
    column_peaks: np.ndarray
    n_y: int
    n_u: int
    mode: str = "exact"
    gamma: float = 1.0
    fault_channels: list = field(default_factory=list)
    noise_channels: list = field(default_factory=list)
    decoupling_errors: list = field(default_factory=list)

    def __len__(self):
        return len(self.filters)

    @property
    def beta(self) -> float:
        """Bank minimum of the per-filter fault-channel H-infinity norms."""
        return float(min(self.betas)) if self.betas else 0.0

    @property
    def column_minimum(self) -> np.ndarray:
        """Per fault, the smallest designated channel peak over the bank."""
        peaks = np.where(self.target.entries == 1, self.column_peaks, np.inf)
        return np.min(peaks, axis=0)

    def stacked(self) -> StateSpaceModel:
        return lti.vstack(*self.filters) if len(self.filters) > 1 else self.filters[0]

    def to_dict(self) -> dict:
        from .serialize import model_to_dict
        return {
            "filters": [model_to_dict(f) for f in self.filters],
            "spec_row": list(self.spec_rows),
            "gap": [float(g) for g in self.gaps],
            "beta": [float(b) for b in self.betas],
            "structure": self.target.entries.tolist(),
            "achieved_structure": self.achieved_structure.entries.tolist(),
            "column_peaks": self.column_peaks.tolist(),
            "n_y": self.n_y,
            "n_u": self.n_u,
            "mode": self.mode,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FilterBank":
        from .serialize import model_from_dict
        filters = [model_from_dict(f) for f in doc["filters"]]
        if not filters:
            raise ValueError("filter bank is empty")
        target = StructureMatrix(doc["structure"])
        achieved = StructureMatrix(doc.get("achieved_structure", doc["structure"]))
        n_y, n_u = int(doc["n_y"]), int(doc["n_u"])
        for f in filters:
            if f.shape != (1, n_y + n_u):
                raise ValueError("bank filters must be 1 x (n_y + n_u)")
        gaps = [np.inf if g is None or g == "inf" else float(g) for g in doc["gap"]]
        return cls(filters, target, list(doc["spec_row"]), gaps,
                   [float(b) for b in doc.get("beta", [np.nan] * len(filters))],
                   achieved, np.asarray(doc.get("column_peaks",
                                                target.entries.astype(float))),
                   n_y, n_u, doc.get("mode", "exact"), float(doc.get("gamma", 1.0)))


def _peaks(channel: StateSpaceModel | None, grid: lti.FrequencyGrid) -> np.ndarray:
    if channel is None or channel.n_inputs == 0:
        return np.zeros(0)
    resp = np.abs(lti.freqresp(channel, grid.all()))
    return np.max(resp[:, 0, :], axis=0)


def gap_ratio(q3: StateSpaceModel, fault_channel: StateSpaceModel,
              noise_channel: StateSpaceModel | None) -> tuple[float, float]:
    """``(beta, eta)`` for the scalar post-filter ``q3``.

    ``beta`` is the H-infinity norm of ``q3 * fault_channel`` and ``eta``
    divides it by the achieved noise gain, so it does not change when ``q3``
    is rescaled.
    """
    beta = lti.h_inf_norm(lti.series(fault_channel, q3))
    if noise_channel is None or noise_channel.n_inputs == 0:
        return beta, np.inf
    noise = lti.h_inf_norm(lti.series(noise_channel, q3))
    if noise == 0:
        return beta, np.inf
    return beta, beta / noise


def _gap(fault_channel: StateSpaceModel, noise_channel: StateSpaceModel | None,
         gamma: float, normalize: bool, grid: lti.FrequencyGrid) -> GapResult:
    noise_peak = _peaks(noise_channel, grid)
    fault_peak = _peaks(fault_channel, grid)
    ref = max(float(np.max(fault_peak)) if fault_peak.size else 0.0, 1e-300)
    if noise_peak.size and np.max(noise_peak) > 1e-10 * ref:
        q3 = co_inner_outer(noise_channel).outer_inverse(gamma)
        beta, eta = gap_ratio(q3, fault_channel, noise_channel)
        noise = beta / eta
        return GapResult(q3, beta, eta, noise)
    scale = 1.0
    if normalize:
        designated = fault_peak[fault_peak > 0]
        if designated.size:
            scale = 1.0 / float(np.min(designated))
    q3 = lti.gain([[scale]])
    beta = lti.h_inf_norm(lti.series(fault_channel, q3))
    return GapResult(q3, beta, np.inf, 0.0)


def optimize_gap(q12: StateSpaceModel, g_f_cols: StateSpaceModel,
                 g_w: StateSpaceModel | None, gamma: float = 1.0) -> GapResult:
    """Optimal ``Q3`` for the scalar filter ``q12`` acting on ``[y; u]``.

    Parameters
    ----------
    q12 : StateSpaceModel
        ``1 x (n_y + n_u)`` filter ``Q2 Q1``.
    g_f_cols, g_w : StateSpaceModel
        Plant fault and noise columns (``n_y`` rows). ``g_w=None`` gives an
        unbounded gap and a normalizing ``Q3``.
    gamma : float
        Admissible noise gain.

    Returns
    -------
    GapResult
        ``q3 = gamma * G_wo^{-1}``, ``beta = ||q3 q12 G_f||_inf`` and the gap.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    n_u = q12.n_inputs - g_f_cols.n_outputs

    def channel(cols):
        if cols is None or cols.n_inputs == 0:
            return None
        lifted = lti.vstack(cols, lti.zeros(n_u, cols.n_inputs, cols.ts)) if n_u else cols
        prod = lti.minimal_realization(lti.series(lifted, q12))
        if not lti.is_stable(prod):
            raise ValueError("filtered channel is unstable")
        return prod

    return _gap(channel(g_f_cols), channel(g_w), gamma, True,
                lti.FrequencyGrid.standard())


def _row_sets(plant: PartitionedPlant, row: np.ndarray, mode: str):
    f_cols = plant.columns("f")
    decoupled = [f_cols[j] for j in range(plant.n_f) if row[j] == 0]
    extras = plant.columns("d") + (decoupled if mode == "exact" else [])
    noise = plant.columns("w") + (decoupled if mode == "soft" else [])
    return extras, noise, f_cols


def _biproper_repair(q12: StateSpaceModel, carried: StateSpaceModel, tau: float,
                     emphasis: float = 1.0, max_lead: int = 4):
    """Multiply a strictly proper row by ``(tau s + 1)`` until it is biproper.

    A scalar factor keeps every annihilation intact. It lifts the high-frequency
    gain so transient (sensor) fault signatures decay instead of integrating.
    With ``emphasis > 1`` the row is further multiplied by the lead-lag
    ``(tau s + 1) / (tau s / emphasis + 1)``.
    """
    for _ in range(max_lead):
        scale = np.max(np.abs(tau * q12.c @ q12.b), initial=0.0)
        if np.max(np.abs(q12.d), initial=0.0) > 1e-10 * scale:
            break
        q12 = _multiply_by_lead(q12, tau)
        carried = _multiply_by_lead(carried, tau)
    if emphasis > 1.0:
        tp = tau / emphasis
        lead_lag = StateSpaceModel([[-1.0 / tp]], [[1.0 / tp]], [[1.0 - emphasis]],
                                   [[emphasis]], q12.ts)
        q12, carried = lti.series(q12, lead_lag), lti.series(carried, lead_lag)
    return q12, carried


def _synthesize_row(plant: PartitionedPlant, row: np.ndarray, index: int,
                    opts: SynthesisOptions, grid: lti.FrequencyGrid):
    model = plant.model
    extras, noise, f_cols = _row_sets(plant, row, opts.mode)
    carry = noise + f_cols
    basis = left_nullspace(plant.g_u,
                           lti.select(model, None, extras) if extras else None,
                           lti.select(model, None, carry),
                           lcf_weight=opts.lcf_weight, lcf_shift=opts.lcf_shift)
    designated = [j for j in range(plant.n_f) if row[j]]
    if opts.combination == "balanced":
        omegas = grid.all()
        if opts.balance_band_hz is not None:
            omegas = omegas[omegas <= 2 * np.pi * opts.balance_band_hz]
        w = balanced_weights(basis, [len(noise) + j for j in designated], omegas, index)
    else:
        w = default_weights(basis.n_rows, index)
    q12 = basis.combined(w)
    carried = basis.carried(w)
    if opts.biproper_tau is not None:
        q12, carried = _biproper_repair(q12, carried, opts.biproper_tau, opts.emphasis)
    n_w = len(noise)
    noise_ch = lti.select(carried, None, list(range(n_w))) if n_w else None
    fault_all = lti.select(carried, None, list(range(n_w, carried.n_inputs)))
    fault_ch = lti.select(fault_all, None, designated)
    gap = _gap(fault_ch, noise_ch, opts.gamma, opts.normalize, grid)
    q = lti.series(q12, gap.q3)
    r_f = lti.series(fault_all, gap.q3)
    r_w = lti.series(noise_ch, gap.q3) if noise_ch is not None else None
    return q, r_f, r_w, gap, extras


def synthesize_bank(plant: PartitionedPlant, s: StructureMatrix,
                    opts: SynthesisOptions | None = None) -> FilterBank:
    """Bank of scalar residual generators realizing structure ``s``.

    Raises
    ------
    SynthesisError
        If ``n_u + n_d = 0``, the isolability precondition fails (exact mode),
        a nullspace is empty, or a post-check fails.
    """
    opts = opts or SynthesisOptions()
    if s.n_faults != plant.n_f:
        raise ValueError("structure matrix column count must equal n_f")
    if plant.n_u + plant.n_d == 0:
        raise SynthesisError("need n_u + n_d > 0", "n_u + n_d > 0")
    if opts.mode == "exact":
        report = is_s_isolable(plant, s)
        if not report.passed:
            bad = report.failures()
            raise SynthesisError(
                "structure not achievable: rank [G_d Ghat_d(i) G_fj] = rank [G_d Ghat_d(i)] "
                f"for (row, fault) = {[(i + 1, j + 1) for i, j in bad]}",
                "s-isolability", bad)
    grid = lti.FrequencyGrid.standard(n_random=10)
    filters, r_fs, r_ws, gaps, betas, errs = [], [], [], [], [], []
    for i in range(s.n_rows):
        try:
            q, r_f, r_w, gap, extras = _synthesize_row(plant, s.row(i), i, opts, grid)
        except NoResidualGeneratorError as exc:
            raise SynthesisError(f"row {i + 1}: {exc}", "nonempty nullspace", [(i, -1)]) \
                from None
        filters.append(q)
        r_fs.append(r_f)
        r_ws.append(r_w)
        gaps.append(gap.eta)
        betas.append(gap.beta)
        if opts.check:
            errs.append(_check_row(plant, q, r_f, r_w, extras, i))
    peaks = np.vstack([_peaks(r, grid) for r in r_fs])
    rel = _relative_peaks(plant, filters, peaks, grid)
    achieved = StructureMatrix((rel > opts.nonzero_threshold).astype(int))
    if opts.check and opts.mode == "exact" and achieved != s:
        diff = np.argwhere(achieved.entries != s.entries)
        raise SynthesisError(f"achieved structure differs from target at {diff.tolist()}",
                             "requirement e", [tuple(x) for x in diff])
    return FilterBank(filters, s, list(range(s.n_rows)), gaps, betas, achieved, peaks,
                      plant.n_y, plant.n_u, opts.mode, opts.gamma, r_fs, r_ws, errs)


def _relative_peaks(plant: PartitionedPlant, filters, peaks: np.ndarray,
                    grid: lti.FrequencyGrid) -> np.ndarray:
    """Fault-channel peaks relative to filter peak times plant column peak.

    The ratio is invariant to rescaling either the filter or a fault input,
    so channels with different physical units are judged alike.
    """
    g_f = lti.select(plant.model, None, plant.columns("f"))
    col = np.max(np.abs(lti.freqresp(g_f, grid.all())), axis=(0, 1))
    q = np.array([np.max(np.abs(lti.freqresp(f, grid.all()))) for f in filters])
    return peaks / np.maximum(np.outer(q, col), 1e-300)


def _check_row(plant, q, r_f, r_w, extras, i) -> float:
    """Requirements a)-d) for one filter; returns the decoupling error."""
    if not lti.is_stable(q):
        raise SynthesisError(f"filter {i + 1} is unstable", "requirement c/d", [(i, -1)])
    for r in (r_f, r_w):
        if r is not None and not lti.is_stable(r):
            raise SynthesisError(f"internal form of filter {i + 1} is unstable",
                                 "requirement c/d", [(i, -1)])
    target = composite(plant.g_u, lti.select(plant.model, None, extras) if extras else None)
    err = annihilation_error(q, target)
    if err > DECOUPLING_TOL:
        raise SynthesisError(f"filter {i + 1} does not decouple u and d (error {err:.2e})",
                             "requirement a/b", [(i, -1)])
    return err


def synthesize_detector(plant: PartitionedPlant,
                        opts: SynthesisOptions | None = None) -> FilterBank:
    """Single residual decoupled from ``u`` and ``d`` and sensitive to every fault."""
    if plant.n_f < 1:
        raise SynthesisError("plant has no fault inputs", "n_f >= 1")
    verdict = is_completely_detectable(plant)
    bad = [j for j, ok in enumerate(verdict) if not ok]
    if bad:
        raise SynthesisError(
            f"faults {[j + 1 for j in bad]} are not detectable: rank [G_fj G_d] = rank G_d",
            "complete detectability", [(0, j) for j in bad])
    return synthesize_bank(plant, StructureMatrix(np.ones((1, plant.n_f), dtype=int)), opts)

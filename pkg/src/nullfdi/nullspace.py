"""Proper stable left nullspace bases of ``[G_u, G_x; I, 0]``.

The construction follows the coprime route: factor ``[G_u, G_x, G_c]`` as
``M^{-1} [N_u, N_x, N_c]`` and take ``Q1 = W [M, -N_u]`` with ``W`` a stable
left annihilator of ``N_x``. Extra columns that are constant unit vectors
(sensor faults) are handled by deleting the corresponding output instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import optimize

from . import lti
from .factorizations import CoprimePair, left_coprime_factorization
from .lti import StateSpaceModel

ANNIHILATION_TOL = 1e-7


class NoResidualGeneratorError(ValueError):
    """The composite system has no left nullspace."""


def merge_columns(*parts: StateSpaceModel | None) -> StateSpaceModel:
    """``[G1, G2, ...]`` sharing states when all parts share ``(a, c)``."""
    parts = [p for p in parts if p is not None and p.n_inputs > 0]
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    shared = all(p.a.shape == first.a.shape and np.array_equal(p.a, first.a)
                 and np.array_equal(p.c, first.c) for p in parts[1:])
    if shared:
        return StateSpaceModel(first.a, np.hstack([p.b for p in parts]), first.c,
                               np.hstack([p.d for p in parts]), first.ts)
    return lti.hstack(*parts)


def sensor_columns(cols: StateSpaceModel | None, tol: float = 1e-12) -> dict[int, int]:
    """Map column index -> output index for columns equal to a unit vector ``e_k``."""
    if cols is None or cols.n_inputs == 0:
        return {}
    resp = lti.sample_response(cols, 3)
    resp = np.concatenate([resp, cols.d[None].astype(complex)], axis=0)
    found = {}
    for j in range(cols.n_inputs):
        col = resp[:, :, j]
        k = int(np.argmax(np.abs(cols.d[:, j])))
        unit = np.zeros(cols.n_outputs)
        unit[k] = 1.0
        if np.max(np.abs(col - unit)) <= tol * max(1.0, np.max(np.abs(col))):
            found[j] = k
    return found


@dataclass(frozen=True)
class Annihilator:
    """Left annihilator data for a stable column block ``V`` (``p x q``, rank ``q``).

    ``pivot`` rows carry the nonsingular ``q x q`` minor; each basis row
    corresponds to one non-pivot row ``l`` and is the cofactor vector of the
    rows ``pivot + [l]``.
    """

    v: StateSpaceModel | None
    pivot: tuple[int, ...]
    others: tuple[int, ...]
    p: int
    minors: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_rows(self) -> int:
        return len(self.others) if self.v is not None else self.p

    def row_model(self, weights: np.ndarray) -> StateSpaceModel:
        """Realize ``sum_l weights[l] * row_l`` as a ``1 x p`` model."""
        weights = np.asarray(weights, dtype=float).ravel()
        if self.v is None:
            return lti.gain(weights[None, :])
        q = len(self.pivot)
        if q == 1:
            # Entries are linear in the entries of v: realize the transpose of
            # Gamma v, which shares v's state matrix.
            kp = self.pivot[0]
            gam = np.zeros((self.p, self.p))
            for wl, l in zip(weights, self.others):
                gam[l, kp] += wl
                gam[kp, l] -= wl
            col = StateSpaceModel(self.v.a, self.v.b, gam @ self.v.c, gam @ self.v.d,
                                  self.v.ts)
            return col.transpose()
        entries = [None] * self.p
        for wl, l in zip(weights, self.others):
            if wl == 0:
                continue
            rows = sorted(self.pivot + (l,))
            for pos, j in enumerate(rows):
                rest = [r for r in rows if r != j]
                term = lti.scale(_minor(self.v, rest, cache=self.minors), wl * (-1) ** pos)
                entries[j] = term if entries[j] is None else lti.add(entries[j], term)
        ts = self.v.ts
        entries = [lti.zeros(1, 1, ts) if e is None else _reduce(e) for e in entries]
        return _reduce(lti.hstack(*entries))


def _reduce(model: StateSpaceModel, rtol: float = 1e-11) -> StateSpaceModel:
    """Minimal realization that also removes nearly redundant states.

    Sums of products duplicate poles; the duplicates are only numerically
    uncontrollable, so looser staircase tolerances are tried and a candidate
    is kept only if its response matches the input to ``rtol`` on a grid
    spanning the pole magnitudes.
    """
    best = lti.minimal_realization(model)
    if best.n_states == 0 or model.ts is not None:
        return best
    top = max(1.0, float(np.max(np.abs(lti.poles(model)))))
    w = np.logspace(-3, np.log10(10 * top), 60)
    ref = lti.freqresp(model, w)
    scale = max(float(np.max(np.abs(ref))), 1e-300)
    for tol in (1e-6, 1e-5, 1e-4, 1e-3):
        cand = lti.minimal_realization(model, tol)
        if cand.n_states >= best.n_states:
            continue
        if np.max(np.abs(lti.freqresp(cand, w) - ref)) <= rtol * scale:
            best = cand
    return best


def _minor(v: StateSpaceModel, rows: list[int], cols: tuple[int, ...] | None = None,
           cache: dict | None = None) -> StateSpaceModel:
    """Determinant of ``v[rows, cols]`` as a scalar model.

    Laplace expansion along the first row with memoized sub-minors; each
    level is reduced to a minimal realization, which keeps the order within
    the McMillan degree of ``v`` instead of the ``q! q n`` of a full expansion.
    """
    cols = tuple(range(v.n_inputs)) if cols is None else cols
    cache = {} if cache is None else cache
    key = (tuple(rows), cols)
    if key in cache:
        return cache[key]
    if len(cols) == 1:
        out = lti.minimal_realization(lti.select(v, [rows[0]], [cols[0]]))
    else:
        out = None
        for k, c in enumerate(cols):
            entry = lti.minimal_realization(lti.select(v, [rows[0]], [c]))
            sub = _minor(v, rows[1:], cols[:k] + cols[k + 1:], cache)
            term = lti.scale(lti.series(sub, entry), (-1) ** k)
            out = term if out is None else lti.add(out, term)
        out = _reduce(out)
    cache[key] = out
    return out


def _independent_columns(resp: np.ndarray, rtol: float = lti.RANK_RTOL) -> list[int]:
    """Greedy maximal set of generically independent columns."""
    chosen: list[int] = []
    for j in range(resp.shape[2]):
        trial = chosen + [j]
        r = max(lti.numerical_rank(x[:, trial], rtol) for x in resp)
        if r == len(trial):
            chosen = trial
    return chosen


def build_annihilator(v: StateSpaceModel | None, p: int) -> Annihilator:
    if v is None or v.n_inputs == 0:
        return Annihilator(None, (), tuple(range(p)), p)
    resp = lti.sample_response(v)
    cols = _independent_columns(resp)
    if not cols:
        return Annihilator(None, (), tuple(range(p)), p)
    v = lti.select(v, None, cols)
    q = len(cols)
    # Pivot rows: column-pivoted QR of V(s0)^T picks a well conditioned minor.
    _, _, piv = sla.qr(resp[0][:, cols].T, pivoting=True)
    pivot = tuple(sorted(int(i) for i in piv[:q]))
    others = tuple(i for i in range(p) if i not in pivot)
    return Annihilator(v, pivot, others, p)


@dataclass(frozen=True)
class NullspaceBasis:
    """Stable proper left nullspace basis acting on ``[y; u]``.

    Attributes
    ----------
    filter : StateSpaceModel
        ``rows x (n_y + n_u)`` basis (all rows stacked).
    kept_outputs, dropped_outputs : tuple of int
        Outputs used by the basis; dropped outputs carry zero weight.
    lcf : CoprimePair
        Factorization of ``[G_u, G_x, G_c]`` restricted to the kept outputs.
    """

    filter: StateSpaceModel
    n_y: int
    n_u: int
    kept_outputs: tuple[int, ...]
    dropped_outputs: tuple[int, ...]
    lcf: CoprimePair
    annihilator: Annihilator
    n_extra: int
    n_carry: int
    annihilated: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.annihilator.n_rows

    def _base(self) -> StateSpaceModel:
        mf, nf = self.lcf.m_factor, self.lcf.n_factor
        nu = self.n_u
        return StateSpaceModel(mf.a, np.hstack([mf.b, -nf.b[:, :nu]]), mf.c,
                               np.hstack([mf.d, -nf.d[:, :nu]]), mf.ts)

    def _embed(self, q: StateSpaceModel) -> StateSpaceModel:
        pk = len(self.kept_outputs)
        sel = np.zeros((pk + self.n_u, self.n_y + self.n_u))
        for i, k in enumerate(self.kept_outputs):
            sel[i, k] = 1.0
        sel[pk:, self.n_y:] = np.eye(self.n_u)
        return lti.postmultiply(q, sel)

    def combined(self, weights) -> StateSpaceModel:
        """One-row filter ``weights . basis`` realized without stacking rows."""
        w = self.annihilator.row_model(weights)
        return self._embed(lti.series(self._base(), w))

    def carried(self, weights) -> StateSpaceModel:
        """``weights . W . N_c``: the carried columns seen through the filter."""
        nf = self.lcf.n_factor
        start = self.n_u + self.n_extra
        nc = lti.select(nf, None, list(range(start, start + self.n_carry)))
        return lti.series(nc, self.annihilator.row_model(weights))


def left_nullspace(g_u: StateSpaceModel, extra_columns: StateSpaceModel | None = None,
                   carry: StateSpaceModel | None = None, lcf_weight: float = 1.0,
                   lcf_shift: float = 0.0) -> NullspaceBasis:
    """Left nullspace basis of ``[G_u, G_x; I, 0]`` with ``G_x = extra_columns``.

    Parameters
    ----------
    g_u : StateSpaceModel
        ``n_y x n_u`` control channel.
    extra_columns : StateSpaceModel, optional
        Additional columns to decouple (disturbances and decoupled faults).
    carry : StateSpaceModel, optional
        Columns (noise, designated faults) to be transformed by the same
        factorization so their filtered versions have stable realizations.
    lcf_weight : float
        State weight of the filter Riccati equation behind the factorization.
    lcf_shift : float
        Prescribed degree of stability (rad/s) of the factorization poles.

    Raises
    ------
    NoResidualGeneratorError
        If the nullspace is empty.
    """
    n_y, n_u = g_u.n_outputs, g_u.n_inputs
    if n_y < 1:
        raise ValueError("need at least one measured output")
    if extra_columns is not None and extra_columns.n_outputs != n_y:
        raise ValueError("extra columns must share the output dimension")
    sensors = sensor_columns(extra_columns)
    dropped = tuple(sorted(set(sensors.values())))
    kept = tuple(i for i in range(n_y) if i not in dropped)
    if not kept:
        raise NoResidualGeneratorError("no residual generator exists: all outputs decoupled")
    dyn = [j for j in range(extra_columns.n_inputs)] if extra_columns is not None else []
    dyn = [j for j in dyn if j not in sensors]
    x_cols = lti.select(extra_columns, None, dyn) if dyn else None
    n_carry = carry.n_inputs if carry is not None else 0

    joint = merge_columns(g_u, x_cols, carry) if (n_u or dyn or n_carry) else None
    if joint is None:
        joint = StateSpaceModel(g_u.a, g_u.b, g_u.c, g_u.d, g_u.ts)
    joint = lti.select(joint, list(kept), None)
    lcf = left_coprime_factorization(joint, weight=lcf_weight, shift=lcf_shift)
    n_x = len(dyn)
    v = lti.select(lcf.n_factor, None, list(range(n_u, n_u + n_x))) if n_x else None
    ann = build_annihilator(v, len(kept))
    if ann.n_rows == 0:
        raise NoResidualGeneratorError(
            "no residual generator exists: composite system has full row rank")
    basis = NullspaceBasis(lti.zeros(0, n_y + n_u), n_y, n_u, kept, dropped, lcf, ann,
                           n_x, n_carry, {"sensor_columns": sensors, "dynamic_columns": dyn})
    rows = [basis.combined(np.eye(ann.n_rows)[r]) for r in range(ann.n_rows)]
    stacked = lti.vstack(*rows) if len(rows) > 1 else rows[0]
    return NullspaceBasis(stacked, n_y, n_u, kept, dropped, lcf, ann, n_x, n_carry,
                          basis.annihilated)


def combine_rows(basis: NullspaceBasis, weights) -> StateSpaceModel:
    """Filter ``weights . basis`` (``weights`` is a row vector or a matrix).

    Raises
    ------
    ValueError
        If the weights do not have full row rank.
    """
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    if w.shape[1] != basis.n_rows:
        raise ValueError(f"weights need {basis.n_rows} columns, got {w.shape[1]}")
    if np.linalg.matrix_rank(w) < w.shape[0]:
        raise ValueError("combination weights are rank deficient")
    rows = [basis.combined(r) for r in w]
    return rows[0] if len(rows) == 1 else lti.vstack(*rows)


def default_weights(n_rows: int, row_index: int) -> np.ndarray:
    """Seeded pseudo-random unit-norm combination for specification ``row_index``."""
    rng = np.random.default_rng(row_index)
    w = rng.standard_normal(n_rows)
    return w / np.linalg.norm(w)


def balanced_weights(basis: NullspaceBasis, fault_columns: list[int],
                     omegas: np.ndarray, row_index: int = 0) -> np.ndarray:
    """Unit combination maximizing the weakest fault peak relative to the input-path gain.

    The objective is ``min_j max_w |R_fj| / max_w ||Q_u||``. Under a
    multiplicative input error ``G_u (I + Delta)`` the leakage is
    ``-Q_u Delta u``, so the ratio compares fault visibility with model-error
    leakage and is scale free. Nelder-Mead runs from the seeded default and
    the basis directions; the search is deterministic.

    Parameters
    ----------
    fault_columns : list of int
        Indices into the carried columns that must stay visible.
    omegas : ndarray
        Frequencies over which the peaks are taken. A low band favours
        persistent (steady-state) fault visibility over transient peaks.
    """
    k = basis.n_rows
    start = default_weights(k, row_index)
    if k == 1 or not fault_columns:
        return start
    q = np.stack([lti.freqresp(basis.combined(e), omegas)[:, 0, basis.n_y:]
                  for e in np.eye(k)])
    f = np.stack([lti.freqresp(lti.select(basis.carried(e), None, fault_columns),
                               omegas)[:, 0, :] for e in np.eye(k)])

    def score(w):
        w = w / max(np.linalg.norm(w), 1e-300)
        qw = np.tensordot(w, q, axes=1)
        fw = np.tensordot(w, f, axes=1)
        fault = np.min(np.max(np.abs(fw), axis=0))
        return -fault / max(np.max(np.linalg.norm(qw, axis=1)), 1e-300)

    best, best_val = start, score(start)
    for w0 in [start, *np.eye(k)]:
        res = optimize.minimize(score, w0, method="Nelder-Mead",
                                options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 400 * k})
        if res.fun < best_val:
            best, best_val = res.x, res.fun
    return best / np.linalg.norm(best)


def composite(g_u: StateSpaceModel, extra_columns: StateSpaceModel | None = None
              ) -> StateSpaceModel:
    """``[G_u, G_x; I, 0]`` as a single realization."""
    n_y, n_u = g_u.n_outputs, g_u.n_inputs
    cols = merge_columns(g_u, extra_columns)
    n_x = cols.n_inputs - n_u
    lower = np.hstack([np.eye(n_u), np.zeros((n_u, n_x))])
    return StateSpaceModel(cols.a, cols.b, np.vstack([cols.c, np.zeros((n_u, cols.n_states))]),
                           np.vstack([cols.d, lower]), cols.ts)


def annihilation_error(filt: StateSpaceModel, target: StateSpaceModel,
                       grid: lti.FrequencyGrid | None = None) -> float:
    """Max over the grid of ``|Q G|`` relative to ``1 + max|G|`` and ``max|Q|``."""
    grid = grid or lti.FrequencyGrid.standard(n_random=10)
    w = grid.all()
    qr = lti.freqresp(filt, w)
    gr = lti.freqresp(target, w)
    prod = qr @ gr
    scale = (1.0 + np.max(np.abs(gr))) * max(np.max(np.abs(qr)), 1e-300)
    return float(np.max(np.abs(prod)) / scale)

"""Dense state-space models and the primitives the FDI layers build on.

Every transfer function matrix in the package is carried as a
:class:`StateSpaceModel`. Interconnections return plain block realizations;
nothing is minimized unless :func:`minimal_realization` is called.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
import scipy.linalg as sla

STAB_MARGIN = 1e-9
RANK_POINTS = 5
RANK_RTOL = 1e-8
GRID_BOUNDS = (1e-2, 1e5)
GRID_POINTS = 400


class SingularResolventError(ValueError):
    """Raised when a model is evaluated (numerically) at one of its poles."""


class IllPosedLoopError(ValueError):
    """Raised when ``I + D_g D_c`` is singular in a feedback interconnection."""


def _mat(x, shape=None) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if shape is not None and arr.size == 0:
        arr = np.zeros(shape)
    return arr


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Real realization ``(a, b, c, d)``; ``ts=None`` means continuous time.

    ``n = 0`` is allowed and represents the static gain ``d``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    ts: float | None = None

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        p, m = d.shape
        a = np.asarray(self.a, dtype=float)
        n = a.shape[0] if a.size else 0
        a = a.reshape(n, n)
        b = np.asarray(self.b, dtype=float).reshape(n, m)
        c = np.asarray(self.c, dtype=float).reshape(p, n)
        for name, val in (("a", a), ("b", b), ("c", c), ("d", d)):
            if not np.all(np.isfinite(val)):
                raise ValueError(f"matrix {name} has non-finite entries")
            val.setflags(write=False)
        if self.ts is not None and not self.ts > 0:
            raise ValueError("sample time must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.d.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.d.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.d.shape

    @property
    def is_discrete(self) -> bool:
        return self.ts is not None

    def __repr__(self):
        dom = "continuous" if self.ts is None else f"discrete(ts={self.ts:g})"
        return (f"StateSpaceModel(n={self.n_states}, outputs={self.n_outputs}, "
                f"inputs={self.n_inputs}, {dom})")

    def __getitem__(self, key) -> "StateSpaceModel":
        rows, cols = key
        return select(self, rows, cols)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def transpose(self) -> "StateSpaceModel":
        return StateSpaceModel(self.a.T, self.c.T, self.b.T, self.d.T, self.ts)

    T = property(transpose)


def gain(d, ts=None) -> StateSpaceModel:
    """Static gain with no states."""
    d = _mat(d)
    p, m = d.shape
    return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), d, ts)


def zeros(p: int, m: int, ts=None) -> StateSpaceModel:
    return gain(np.zeros((p, m)), ts)


def first_order(tau: float, k: float = 1.0, ts=None) -> StateSpaceModel:
    """``k / (tau s + 1)``."""
    return StateSpaceModel([[-1.0 / tau]], [[1.0 / tau]], [[k]], [[0.0]], ts)


def _common_ts(*models: StateSpaceModel):
    ts = {m.ts for m in models}
    if len(ts) > 1:
        raise ValueError("cannot interconnect models with different time domains")
    return ts.pop()


def select(model: StateSpaceModel, rows=None, cols=None) -> StateSpaceModel:
    """Sub-system picking output ``rows`` and input ``cols`` (slices or index lists)."""
    rows = slice(None) if rows is None else rows
    cols = slice(None) if cols is None else cols
    r = np.arange(model.n_outputs)[rows]
    c = np.arange(model.n_inputs)[cols]
    r = np.atleast_1d(r)
    c = np.atleast_1d(c)
    return StateSpaceModel(model.a, model.b[:, c], model.c[r, :],
                           model.d[np.ix_(r, c)], model.ts)


def scale(model: StateSpaceModel, k: float) -> StateSpaceModel:
    return StateSpaceModel(model.a, model.b, k * model.c, k * model.d, model.ts)


def premultiply(k, model: StateSpaceModel) -> StateSpaceModel:
    """Constant matrix times a model, ``K G``."""
    k = _mat(k)
    return StateSpaceModel(model.a, model.b, k @ model.c, k @ model.d, model.ts)


def postmultiply(model: StateSpaceModel, k) -> StateSpaceModel:
    """``G K`` for a constant matrix ``K``."""
    k = _mat(k)
    return StateSpaceModel(model.a, model.b @ k, model.c, model.d @ k, model.ts)


def series(*parts: StateSpaceModel) -> StateSpaceModel:
    """Cascade ``parts[0]`` first, i.e. the product ``parts[-1] ... parts[0]``."""
    g1 = parts[0]
    for g2 in parts[1:]:
        ts = _common_ts(g1, g2)
        if g2.n_inputs != g1.n_outputs:
            raise ValueError(f"series: {g1.n_outputs} outputs feed {g2.n_inputs} inputs")
        n1, n2 = g1.n_states, g2.n_states
        a = np.block([[g1.a, np.zeros((n1, n2))], [g2.b @ g1.c, g2.a]])
        b = np.vstack([g1.b, g2.b @ g1.d])
        c = np.hstack([g2.d @ g1.c, g2.c])
        g1 = StateSpaceModel(a, b, c, g2.d @ g1.d, ts)
    return g1


def hstack(*parts: StateSpaceModel) -> StateSpaceModel:
    """``[G1, G2, ...]``: shared outputs, stacked inputs."""
    ts = _common_ts(*parts)
    if len({p.n_outputs for p in parts}) > 1:
        raise ValueError("hstack: output dimensions differ")
    return StateSpaceModel(sla.block_diag(*[p.a for p in parts]),
                           sla.block_diag(*[p.b for p in parts]),
                           np.hstack([p.c for p in parts]),
                           np.hstack([p.d for p in parts]), ts)


def vstack(*parts: StateSpaceModel) -> StateSpaceModel:
    """``[G1; G2; ...]``: shared inputs, stacked outputs."""
    ts = _common_ts(*parts)
    if len({p.n_inputs for p in parts}) > 1:
        raise ValueError("vstack: input dimensions differ")
    return StateSpaceModel(sla.block_diag(*[p.a for p in parts]),
                           np.vstack([p.b for p in parts]),
                           sla.block_diag(*[p.c for p in parts]),
                           np.vstack([p.d for p in parts]), ts)


def append(*parts: StateSpaceModel) -> StateSpaceModel:
    """Block-diagonal ``diag(G1, G2, ...)``."""
    ts = _common_ts(*parts)
    return StateSpaceModel(sla.block_diag(*[p.a for p in parts]),
                           sla.block_diag(*[p.b for p in parts]),
                           sla.block_diag(*[p.c for p in parts]),
                           sla.block_diag(*[p.d for p in parts]), ts)


def add(*parts: StateSpaceModel) -> StateSpaceModel:
    """Parallel sum ``G1 + G2 + ...``."""
    ts = _common_ts(*parts)
    if len({p.shape for p in parts}) > 1:
        raise ValueError("add: shapes differ")
    return StateSpaceModel(sla.block_diag(*[p.a for p in parts]),
                           np.vstack([p.b for p in parts]),
                           np.hstack([p.c for p in parts]),
                           sum(p.d for p in parts), ts)


def unity_feedback(loop: StateSpaceModel):
    """Realize ``T = (I + L)^{-1} L`` and ``S = (I + L)^{-1}`` for a square loop ``L``."""
    p = loop.n_outputs
    if loop.n_inputs != p:
        raise ValueError("loop transfer must be square")
    e = np.eye(p) + loop.d
    if np.linalg.cond(e) > 1e12:
        raise IllPosedLoopError("I + L(inf) is singular; feedback loop is ill-posed")
    ei = np.linalg.inv(e)
    a = loop.a - loop.b @ ei @ loop.c
    b = loop.b @ ei
    t = StateSpaceModel(a, b, ei @ loop.c, ei @ loop.d, loop.ts)
    s = StateSpaceModel(a, b, -ei @ loop.c, ei, loop.ts)
    return t, s


def feedback(g: StateSpaceModel, k: StateSpaceModel) -> StateSpaceModel:
    """Reference-to-output map ``(I + G K)^{-1} G K`` under negative feedback."""
    return unity_feedback(series(k, g))[0]


def sensitivity(g: StateSpaceModel, k: StateSpaceModel) -> StateSpaceModel:
    """Output sensitivity ``(I + G K)^{-1}``."""
    return unity_feedback(series(k, g))[1]


_CONNECTORS = {
    "series": series,
    "row_concat": hstack,
    "col_concat": vstack,
    "stack": append,
    "feedback": feedback,
}


def connect(kind: str, *parts: StateSpaceModel) -> StateSpaceModel:
    """Dispatch to an interconnection by name.

    ``series`` multiplies right to left (first part acts first), ``row_concat``
    is ``[G1, G2]``, ``col_concat`` is ``[G1; G2]``, ``stack`` is block
    diagonal and ``feedback(G, C)`` is the reference-to-output closed loop.
    """
    try:
        fn = _CONNECTORS[kind]
    except KeyError:
        raise ValueError(f"unknown interconnection {kind!r}") from None
    return fn(*parts)


def inverse(model: StateSpaceModel) -> StateSpaceModel:
    """Inverse of a square model with invertible feedthrough."""
    if model.n_inputs != model.n_outputs:
        raise ValueError("inverse requires a square model")
    if np.linalg.cond(model.d) > 1e12:
        raise ValueError("feedthrough is singular; inverse would be improper")
    di = np.linalg.inv(model.d)
    return StateSpaceModel(model.a - model.b @ di @ model.c, model.b @ di,
                           -di @ model.c, di, model.ts)


def poles(model: StateSpaceModel) -> np.ndarray:
    if model.n_states == 0:
        return np.zeros(0, dtype=complex)
    return np.linalg.eigvals(model.a)


def is_stable(model: StateSpaceModel, margin: float = STAB_MARGIN) -> bool:
    p = poles(model)
    if p.size == 0:
        return True
    if model.ts is None:
        return bool(np.all(p.real < -margin))
    return bool(np.all(np.abs(p) < 1.0 - margin))


def evaluate(model: StateSpaceModel, s: complex) -> np.ndarray:
    """``D + C (sI - A)^{-1} B``; for discrete models ``s`` is read as ``z``."""
    return freqresp_at(model, np.atleast_1d(np.asarray(s, dtype=complex)))[0]


def freqresp_at(model: StateSpaceModel, points, chunk: int = 256) -> np.ndarray:
    """Evaluate at an array of complex points; returns shape ``(k, p, m)``.

    Raises
    ------
    SingularResolventError
        If any point lies (numerically) on a pole.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    n = model.n_states
    out = np.empty((pts.size, model.n_outputs, model.n_inputs), dtype=complex)
    out[:] = model.d
    if n == 0 or model.n_inputs == 0 or model.n_outputs == 0:
        return out
    # Diagonal balancing then Hessenberg form keep the batched solves well
    # conditioned and cheap.
    ab, (sc, _) = sla.matrix_balance(model.a, permute=False, separate=True)
    h, q = sla.hessenberg(ab, calc_q=True)
    bq = q.T @ (model.b / sc[:, None])
    cq = (model.c * sc[None, :]) @ q
    eye = np.eye(n)
    scale_a = max(1.0, np.linalg.norm(model.a, 1))
    eig = np.linalg.eigvals(h)
    for lo in range(0, pts.size, chunk):
        sl = pts[lo:lo + chunk]
        res = sl[:, None, None] * eye - h
        # Only points near an eigenvalue can be singular; skip the SVD elsewhere.
        near = np.min(np.abs(sl[:, None] - eig[None, :]), axis=1) < 1e-6 * scale_a
        bad = np.zeros(sl.size, dtype=bool)
        if np.any(near):
            cond = np.linalg.cond(res[near])
            bad[near] = ~np.isfinite(cond) | (cond > 1e14)
        if np.any(bad):
            raise SingularResolventError(
                f"evaluation point {sl[bad][0]:.6g} is numerically a pole "
                f"(scale {scale_a:.3g})")
        x = np.linalg.solve(res, np.broadcast_to(bq, (sl.size,) + bq.shape))
        out[lo:lo + chunk] += cq @ x
    return out


def frequency_points(model: StateSpaceModel, omegas) -> np.ndarray:
    """Map angular frequencies to ``s = j w`` (continuous) or ``z = e^{j w ts}``."""
    w = np.asarray(omegas, dtype=float)
    if model.ts is None:
        return 1j * w
    return np.exp(1j * w * model.ts)


def freqresp(model: StateSpaceModel, omegas) -> np.ndarray:
    """Frequency response on the imaginary axis (or unit circle), ``(k, p, m)``."""
    return freqresp_at(model, frequency_points(model, omegas))


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing positive angular frequencies plus optional extra samples."""

    points: np.ndarray
    extra: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        extra = np.asarray(self.extra, dtype=float).ravel()
        if pts.size == 0:
            raise ValueError("frequency grid is empty")
        if not (np.all(np.isfinite(pts)) and np.all(pts > 0)):
            raise ValueError("grid points must be positive and finite")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if extra.size and not (np.all(np.isfinite(extra)) and np.all(extra > 0)):
            raise ValueError("extra points must be positive and finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "extra", extra)

    @classmethod
    def standard(cls, n_random: int = 0, seed: int = 0,
                 lo: float = GRID_BOUNDS[0], hi: float = GRID_BOUNDS[1],
                 n: int = GRID_POINTS) -> "FrequencyGrid":
        rng = np.random.default_rng(seed)
        extra = 10 ** rng.uniform(np.log10(lo), np.log10(hi), n_random)
        return cls(np.logspace(np.log10(lo), np.log10(hi), n), extra)

    def all(self) -> np.ndarray:
        return np.sort(np.concatenate([self.points, self.extra]))

    def clipped(self, ts: float | None) -> np.ndarray:
        """All points, restricted below Nyquist for discrete models."""
        w = self.all()
        if ts is not None:
            w = w[w < np.pi / ts]
        return w


def _singular_values(resp: np.ndarray) -> np.ndarray:
    return np.linalg.svd(resp, compute_uv=False)


def rank_points(n: int = RANK_POINTS, seed: int = 12345) -> np.ndarray:
    """Generic complex evaluation points: log-uniform modulus, uniform phase."""
    rng = np.random.default_rng(seed)
    mod = 10 ** rng.uniform(-2, 4, n)
    phase = rng.uniform(0, 2 * np.pi, n)
    return mod * np.exp(1j * phase)


def numerical_rank(mat: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if mat.size == 0:
        return 0
    sv = _singular_values(mat)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def normal_rank(model: StateSpaceModel, columns=None, n_points: int = RANK_POINTS,
                seed: int = 12345, rtol: float = RANK_RTOL) -> int:
    """Normal rank as the largest numerical rank over generic sample points."""
    resp = sample_response(model, n_points, seed)
    if columns is not None:
        resp = resp[:, :, np.atleast_1d(np.arange(model.n_inputs)[columns])]
    return max(numerical_rank(r, rtol) for r in resp)


def sample_response(model: StateSpaceModel, n_points: int = RANK_POINTS,
                    seed: int = 12345) -> np.ndarray:
    return freqresp_at(model, rank_points(n_points, seed))


def _sigma_max_at(model: StateSpaceModel, w: float) -> float:
    return float(_singular_values(freqresp(model, [w])[0])[0])


def _pole_frequencies(model: StateSpaceModel, lo: float, hi: float) -> np.ndarray:
    p = poles(model)
    if model.ts is not None:
        p = np.log(p[np.abs(p) > 0].astype(complex)) / model.ts
    w = np.abs(p)
    return w[(w > lo) & (w < hi)]


def h_inf_norm(model: StateSpaceModel, grid: FrequencyGrid | None = None,
               refine: bool = True) -> float:
    """Peak largest singular value over a grid with golden-section refinement.

    The grid is augmented with the natural frequencies of the poles so that
    lightly damped peaks are bracketed.
    """
    if not is_stable(model):
        raise ValueError("H-infinity norm requested for an unstable model")
    if model.n_states == 0:
        return float(_singular_values(model.d)[0]) if model.d.size else 0.0
    grid = grid or FrequencyGrid.standard()
    w = grid.clipped(model.ts)
    w = np.unique(np.concatenate([w, _pole_frequencies(model, w[0], w[-1])]))
    sv = np.array([s[0] if s.size else 0.0
                   for s in _singular_values(freqresp(model, w))])
    k = int(np.argmax(sv))
    best = float(sv[k])
    if refine and 0 < k < w.size - 1:
        best = max(best, _golden_max(lambda x: _sigma_max_at(model, np.exp(x)),
                                     np.log(w[k - 1]), np.log(w[k + 1])))
    # Static and infinite-frequency gains bound the grid from both ends.
    ends = [model.d]
    if model.ts is not None or np.min(np.abs(poles(model))) > 0:
        ends.append(dc_gain(model) if model.ts is None else evaluate(model, 1.0))
    for mat in ends:
        if mat.size:
            best = max(best, float(_singular_values(np.asarray(mat))[0]))
    return best


def _golden_max(f, a: float, b: float, iters: int = 60) -> float:
    g = (np.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    best = max(fc, fd)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
        best = max(best, fc, fd)
        if b - a < 1e-12:
            break
    return float(best)


def h_minus_over_grid(model: StateSpaceModel, grid: FrequencyGrid | None = None) -> float:
    """Smallest singular value minimized over the grid."""
    grid = grid or FrequencyGrid.standard()
    w = grid.clipped(model.ts)
    resp = freqresp(model, w)
    sv = _singular_values(resp)
    if sv.shape[-1] == 0:
        return 0.0
    return float(np.min(sv[:, -1]))


def grid_peak(model: StateSpaceModel, grid: FrequencyGrid | None = None) -> float:
    """Largest entry magnitude of the response over the grid (no stability requirement)."""
    grid = grid or FrequencyGrid.standard()
    resp = freqresp(model, grid.clipped(model.ts))
    return float(np.max(np.abs(resp))) if resp.size else 0.0


def _staircase_controllable(a, b, tol):
    """Orthogonal transform separating the controllable part; returns (T, n_c)."""
    n = a.shape[0]
    if n == 0 or b.size == 0:
        return np.eye(n), 0
    # Orthonormal basis of the Krylov space via repeated rank-revealing QR.
    basis = np.zeros((n, 0))
    block = b.copy()
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1.0)
    for _ in range(n):
        if basis.shape[1]:
            block = block - basis @ (basis.T @ block)
            block = block - basis @ (basis.T @ block)
        if block.size == 0:
            break
        u, s, _ = np.linalg.svd(block, full_matrices=False)
        r = int(np.sum(s > tol * scale))
        if r == 0:
            break
        new = u[:, :r]
        basis = np.hstack([basis, new])
        if basis.shape[1] >= n:
            break
        block = a @ new
    nc = basis.shape[1]
    if nc == 0:
        return np.eye(n), 0
    if nc < n:
        return np.hstack([basis, sla.null_space(basis.T)]), nc
    return basis, nc


def minimal_realization(model: StateSpaceModel, tol: float = 1e-8) -> StateSpaceModel:
    """Remove uncontrollable then unobservable states (Kalman decomposition)."""
    a, b, c = model.a, model.b, model.c
    t, nc = _staircase_controllable(a, b, tol)
    a1 = (t.T @ a @ t)[:nc, :nc]
    b1 = (t.T @ b)[:nc]
    c1 = (c @ t)[:, :nc]
    t2, no = _staircase_controllable(a1.T, c1.T, tol)
    a2 = (t2.T @ a1 @ t2)[:no, :no]
    b2 = (t2.T @ b1)[:no]
    c2 = (c1 @ t2)[:, :no]
    return StateSpaceModel(a2, b2, c2, model.d, model.ts)


def balance(model: StateSpaceModel) -> StateSpaceModel:
    """Diagonal similarity scaling of ``a`` (improves numerical conditioning)."""
    if model.n_states == 0:
        return model
    _, (sc, perm) = sla.matrix_balance(model.a, permute=False, separate=True)
    t = np.diag(sc)
    ti = np.diag(1.0 / sc)
    return StateSpaceModel(ti @ model.a @ t, ti @ model.b, model.c @ t, model.d, model.ts)


def dc_gain(model: StateSpaceModel) -> np.ndarray:
    return evaluate(model, 0.0 if model.ts is None else 1.0).real


def zeros_of(model: StateSpaceModel) -> np.ndarray:
    """Finite transmission zeros of a square model via the Rosenbrock pencil."""
    n = model.n_states
    p, m = model.shape
    if p != m:
        raise ValueError("zeros_of supports square models only")
    if n == 0:
        return np.zeros(0, dtype=complex)
    big_a = np.block([[model.a, model.b], [model.c, model.d]])
    big_e = sla.block_diag(np.eye(n), np.zeros((p, m)))
    vals = sla.eigvals(big_a, big_e)
    return vals[np.isfinite(vals)]

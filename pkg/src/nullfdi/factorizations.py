"""Riccati solver, left coprime factorization and co-inner-outer factorization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import lti
from .lti import StateSpaceModel

DEFAULT_TAU = 1.0 / (2 * np.pi * 2000.0)
ZERO_MARGIN = 1e-7


class RiccatiError(ValueError):
    """No stabilizing solution of the algebraic Riccati equation exists."""


def care_residual(a, b, q, r, x) -> float:
    rinv_bt = np.linalg.solve(r, b.T)
    res = a.T @ x + x @ a - x @ b @ rinv_bt @ x + q
    return float(np.linalg.norm(res, "fro"))


def solve_care(a, b, q, r) -> np.ndarray:
    """Stabilizing solution of ``a'x + xa - x b r^{-1} b' x + q = 0``.

    Uses the ordered real Schur form of the Hamiltonian matrix; a few
    Newton-Kleinman sweeps polish the result when the residual is large.

    Raises
    ------
    RiccatiError
        If the Hamiltonian has eigenvalues on the imaginary axis or the
        closed loop ``a - b r^{-1} b' x`` is not stable.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    q = (q + q.T) / 2
    r = (r + r.T) / 2
    if np.min(np.linalg.eigvalsh(r)) <= 0:
        raise ValueError("r must be positive definite")
    g = b @ np.linalg.solve(r, b.T)
    ham = np.block([[a, -g], [-q, -a.T]])
    # Balance to keep the Schur step accurate on badly scaled problems.
    hb, (sc, _) = sla.matrix_balance(ham, permute=False, separate=True)
    t, z, sdim = sla.schur(hb, output="real", sort="lhp")
    eig = np.linalg.eigvals(hb)
    hscale = max(np.linalg.norm(hb, 1), 1.0)
    if np.min(np.abs(eig.real)) < 1e-10 * hscale or sdim != n:
        raise RiccatiError("Hamiltonian has eigenvalues on the imaginary axis; "
                           "no stabilizing solution")
    z = sc[:, None] * z
    u1, u2 = z[:n, :n], z[n:, :n]
    if np.linalg.cond(u1) > 1e12:
        raise RiccatiError("stable invariant subspace is not a graph; "
                           "no stabilizing solution")
    x = np.linalg.solve(u1.T, u2.T).T
    x = (x + x.T) / 2

    for _ in range(4):
        xnorm = np.linalg.norm(x, "fro")
        if care_residual(a, b, q, r, x) < 1e-11 * (1 + xnorm):
            break
        x = _newton_step(a, b, q, r, x)
    acl = a - g @ x
    if np.max(np.linalg.eigvals(acl).real) >= 0:
        raise RiccatiError("Riccati solution is not stabilizing")
    return x


def _newton_step(a, b, q, r, x):
    g = b @ np.linalg.solve(r, b.T)
    acl = a - g @ x
    rhs = -(q + x @ g @ x)
    xn = sla.solve_continuous_lyapunov(acl.T, rhs)
    return (xn + xn.T) / 2


@dataclass(frozen=True)
class CoprimePair:
    """``G = M^{-1} N`` with stable proper ``M`` (square) and ``N``."""

    m_factor: StateSpaceModel
    n_factor: StateSpaceModel
    gain: np.ndarray

    def reconstruct_error(self, g: StateSpaceModel, omegas) -> float:
        mresp = lti.freqresp(self.m_factor, omegas)
        nresp = lti.freqresp(self.n_factor, omegas)
        gresp = lti.freqresp(g, omegas)
        err = np.linalg.solve(mresp, nresp) - gresp
        return float(np.max(np.abs(err)) / max(1.0, np.max(np.abs(gresp))))


def observer_gain(g: StateSpaceModel, weight: float = 1.0, shift: float = 0.0) -> np.ndarray:
    """Output-injection gain ``K`` from the filter Riccati equation.

    Solves ``A_s P + P A_s' - P C'C P + weight * I = 0`` with
    ``A_s = A + shift * I`` and returns ``K = -P C'``. The eigenvalues of
    ``A + K C`` then lie left of ``-shift`` (prescribed degree of stability).
    """
    n = g.n_states
    if shift < 0:
        raise ValueError("shift must be nonnegative")
    try:
        p = solve_care(g.a.T + shift * np.eye(n), g.c.T, weight * np.eye(n),
                       np.eye(g.n_outputs))
    except RiccatiError as exc:
        raise ValueError(f"(C, A) is not detectable: {exc}") from None
    return -p @ g.c.T


def left_coprime_factorization(g: StateSpaceModel, k: np.ndarray | None = None,
                               weight: float = 1.0, shift: float = 0.0) -> CoprimePair:
    """Left coprime factors ``M = (A+KC, K, C, I)``, ``N = (A+KC, B+KD, C, D)``.

    ``k`` may be supplied explicitly (it must make ``A + KC`` stable);
    otherwise it is computed by :func:`observer_gain`.
    """
    n, p = g.n_states, g.n_outputs
    if k is None:
        k = observer_gain(g, weight, shift) if n else np.zeros((0, p))
    k = np.asarray(k, dtype=float).reshape(n, p)
    ak = g.a + k @ g.c
    mf = StateSpaceModel(ak, k, g.c, np.eye(p), g.ts)
    nf = StateSpaceModel(ak, g.b + k @ g.d, g.c, g.d, g.ts)
    if not lti.is_stable(mf):
        raise ValueError("output injection gain does not stabilize A + KC")
    return CoprimePair(mf, nf, k)


@dataclass(frozen=True)
class InnerOuterPair:
    """``G = outer * inner`` with ``inner`` co-inner.

    ``core`` is the biproper factor computed for ``(tau s + 1)^k G``; the
    returned ``outer`` equals ``core / (tau s + 1)^k``.
    """

    outer: StateSpaceModel
    inner: StateSpaceModel
    core: StateSpaceModel
    degree_deficit: int
    tau: float

    def outer_inverse(self, gamma: float = 1.0) -> StateSpaceModel:
        """``gamma * outer^{-1}`` augmented with ``(tau s + 1)^{-k}``; always proper."""
        return lti.scale(lti.inverse(self.core), gamma)


def _multiply_by_lead(g: StateSpaceModel, tau: float) -> StateSpaceModel:
    # (tau s + 1) G for strictly proper G: s G = (A, B, CA, CB).
    return StateSpaceModel(g.a, g.b, g.c + tau * g.c @ g.a, g.d + tau * g.c @ g.b, g.ts)


def _lowpass_power(p: int, k: int, tau: float) -> StateSpaceModel:
    lp = lti.gain(np.eye(p))
    for _ in range(k):
        lp = lti.series(lp, lti.append(*[lti.first_order(tau)] * p))
    return lp


def _inner_outer_tall(h: StateSpaceModel):
    """Inner-outer factorization ``H = N R`` of a tall stable ``H`` with full-column-rank D."""
    a, b, c, d = h.a, h.b, h.c, h.d
    r = d.T @ d
    w, v = np.linalg.eigh(r)
    if np.min(w) <= 1e-14 * np.max(w) or np.max(w) == 0:
        raise ValueError("feedthrough is not of full rank")
    r_half = v @ np.diag(np.sqrt(w)) @ v.T
    r_mhalf = v @ np.diag(1 / np.sqrt(w)) @ v.T
    rinv = np.linalg.inv(r)
    ar = a - b @ rinv @ d.T @ c
    qr = c.T @ (np.eye(d.shape[0]) - d @ rinv @ d.T) @ c
    qr = (qr + qr.T) / 2
    try:
        x = solve_care(ar, b, qr, r)
    except RiccatiError as exc:
        raise ValueError(f"co-inner-outer factorization failed ({exc}); "
                         "the model may have zeros on the imaginary axis") from None
    f = -rinv @ (b.T @ x + d.T @ c)
    inner = StateSpaceModel(a + b @ f, b @ r_mhalf, c + d @ f, d @ r_mhalf, h.ts)
    outer = StateSpaceModel(a, b, -r_half @ f, r_half, h.ts)
    return inner, outer


def co_inner_outer(g: StateSpaceModel, tau: float = DEFAULT_TAU) -> InnerOuterPair:
    """Co-inner-outer factorization ``G = G_o G_i`` of a stable full-row-rank model.

    Strictly proper inputs are first multiplied by ``(tau s + 1)^k`` until the
    feedthrough is nonzero; the deficit ``k`` is folded back into ``outer``.
    """
    if g.ts is not None:
        raise ValueError("only continuous-time factorization is supported")
    if not lti.is_stable(g):
        raise ValueError("co-inner-outer factorization requires a stable model")
    p = g.n_outputs
    if lti.normal_rank(g) < p:
        raise ValueError("model is not of full row rank (quasi-outer case unsupported)")
    work = g
    k = 0
    scale = max(1.0, lti.h_inf_norm(g))
    while np.linalg.norm(work.d) <= 1e-13 * scale and k <= g.n_states:
        work = _multiply_by_lead(work, tau)
        k += 1
    sv = np.linalg.svd(work.d, compute_uv=False)
    if sv.size < p or sv[-1] <= 1e-10 * sv[0]:
        raise ValueError("feedthrough row rank deficient after degree repair; unsupported")
    inner_t, outer_t = _inner_outer_tall(work.transpose())
    core = outer_t.transpose()
    inner = inner_t.transpose()
    outer = lti.series(core, _lowpass_power(p, k, tau)) if k else core
    return InnerOuterPair(outer, inner, core, k, tau)


def allpass_defect(inner: StateSpaceModel, omegas) -> float:
    """Max over the grid of ``|G_i G_i^H - I|``."""
    resp = lti.freqresp(inner, omegas)
    prod = resp @ np.conj(np.swapaxes(resp, 1, 2))
    eye = np.eye(inner.n_outputs)
    return float(np.max(np.abs(prod - eye)))

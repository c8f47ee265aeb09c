"""Randomized numerical checks of the open-loop/closed-loop nullspace theorems."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import lti
from .closedloop import close_loop
from .lti import StateSpaceModel
from .nullspace import NoResidualGeneratorError, composite, left_nullspace
from .plant import PartitionedPlant

EQUALITY_TOL = 1e-6
MAX_RETRIES = 20


def random_stable_matrix(rng: np.random.Generator, n: int) -> np.ndarray:
    """Real matrix with poles in ``-[0.2, 5] +/- j[0, 10]`` under a random orthogonal basis."""
    blocks, k = [], 0
    while k < n:
        sigma = -rng.uniform(0.2, 5.0)
        if n - k >= 2 and rng.random() < 0.6:
            wd = rng.uniform(0.1, 10.0)
            blocks.append(np.array([[sigma, wd], [-wd, sigma]]))
            k += 2
        else:
            blocks.append(np.array([[sigma]]))
            k += 1
    a = np.zeros((n, n))
    i = 0
    for blk in blocks:
        m = blk.shape[0]
        a[i:i + m, i:i + m] = blk
        i += m
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ a @ q.T


def random_plant(seed: int, n_y: int, n_u: int, n_d: int = 0, n_w: int = 0, n_f: int = 0,
                 order: int = 4, rank_d: int | None = None
                 ) -> tuple[PartitionedPlant, StateSpaceModel]:
    """Stable random plant and a full-normal-rank stabilizing controller.

    The controller is ``kappa (K0 + K1/(s + 1))`` with ``kappa`` chosen by the
    small-gain rule, so the loop is stable for any stable plant.

    Parameters
    ----------
    rank_d : int, optional
        Normal rank of ``G_d``; columns beyond it are random combinations.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if min(n_y, n_u, n_d, n_w, n_f) < 0 or n_y < 1:
        raise ValueError("invalid dimensions")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RETRIES):
        a = random_stable_matrix(rng, order)
        c = rng.standard_normal((n_y, order))
        b_u = rng.standard_normal((order, n_u))
        rd = min(n_d, n_y) if rank_d is None else rank_d
        if rd > min(n_d, n_y):
            raise ValueError("rank_d cannot exceed min(n_d, n_y)")
        mix = rng.standard_normal((rd, n_d)) if rd < n_d else np.eye(n_d)
        b_d = rng.standard_normal((order, rd)) @ mix
        d_d = rng.standard_normal((n_y, rd)) @ mix
        # Feedthrough on the exogenous columns keeps their normal rank
        # independent of the model order.
        b = np.hstack([b_u, b_d, rng.standard_normal((order, n_w + n_f))])
        d = np.hstack([np.zeros((n_y, n_u)), d_d, rng.standard_normal((n_y, n_w + n_f))])
        model = StateSpaceModel(a, b, c, d)
        plant = PartitionedPlant(model, n_u, n_d, n_w, n_f)
        if n_u == 0:
            return plant, lti.zeros(0, n_y)
        k0 = rng.standard_normal((n_u, n_y))
        k1 = rng.standard_normal((n_u, n_y))
        gnorm = lti.h_inf_norm(plant.g_u)
        kappa = 0.5 / ((np.linalg.norm(k0, 2) + np.linalg.norm(k1, 2)) * max(gnorm, 1e-12))
        ctrl = StateSpaceModel(-np.eye(n_y), np.eye(n_y), kappa * k1, kappa * k0)
        loop = close_loop(plant.model, ctrl, n_u, n_y)
        if lti.is_stable(loop) and lti.normal_rank(ctrl) == min(n_u, n_y):
            return plant, ctrl
    raise RuntimeError("could not generate a stabilizing full-rank controller")


@dataclass
class TheoremReport:
    theorem: int
    n_y: int
    n_u: int
    r_d: int
    dim_open_loop: int
    dim_closed_loop: int
    expected_open_loop: int
    expected_closed_loop: int
    decoupling_error: float
    discrepancy: float
    containment: float
    verdict: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _grid() -> np.ndarray:
    return lti.FrequencyGrid.standard(n_random=20, seed=7).all()


def _closed_loop_composite(plant: PartitionedPlant, ctrl: StateSpaceModel) -> StateSpaceModel:
    """``G^cl = [G_u C S, S G_d; C S, -C S G_d]`` realized from the loop equations."""
    cols = plant.columns("u") + plant.columns("d")
    sub = PartitionedPlant(lti.select(plant.model, None, cols), plant.n_u, plant.n_d)
    return close_loop(sub.model, ctrl, plant.n_u, plant.n_y)


def _rel_diff(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def _check_controller(ctrl: StateSpaceModel, n_u: int, n_y: int) -> None:
    if ctrl.shape != (n_u, n_y):
        raise ValueError("controller has the wrong dimensions")
    if lti.normal_rank(ctrl) < min(n_u, n_y):
        raise ValueError("controller is not of full normal rank")


def _evaluate(plant: PartitionedPlant, ctrl: StateSpaceModel, theorem: int) -> TheoremReport:
    n_y, n_u = plant.n_y, plant.n_u
    w = _grid()
    g_d = plant.g_d
    r_d = lti.normal_rank(g_d) if g_d is not None else 0
    g_ol = composite(plant.g_u, g_d)
    g_cl = _closed_loop_composite(plant, ctrl)
    dim_ol = n_y + n_u - lti.normal_rank(g_ol)
    dim_cl = n_y + n_u - lti.normal_rank(g_cl)
    exp_ol = n_y - r_d
    exp_cl = n_y - r_d if theorem == 1 else n_u - r_d

    carry_cols = plant.columns("w") + plant.columns("f")
    carry = lti.select(plant.model, None, carry_cols) if carry_cols else None
    try:
        basis = left_nullspace(plant.g_u, g_d, carry)
        q = basis.filter
    except NoResidualGeneratorError:
        basis, q = None, None

    decoupling = containment = discrepancy = 0.0
    if q is not None:
        if basis.n_rows != exp_ol:
            dim_ol = -1
        qr = lti.freqresp(q, w)
        qg = qr @ lti.freqresp(g_cl, w)
        scale = max(np.max(np.abs(qr)), 1e-300) * (1 + np.max(np.abs(lti.freqresp(g_cl, w))))
        containment = float(np.max(np.abs(qg)) / scale)
        decoupling = containment
        if carry is not None:
            m = plant.model
            pad = lti.gain(np.vstack([np.eye(n_y), np.zeros((n_u, n_y))]))
            ol = lti.series(lti.select(m, None, carry_cols), pad, q)
            loop = close_loop(m, ctrl, n_u, n_y)
            first = n_y + plant.n_d
            cl_cols = list(range(first, first + len(carry_cols)))
            cl = lti.series(lti.select(loop, list(range(n_y + n_u)), cl_cols), q)
            discrepancy = _rel_diff(lti.freqresp(ol, w), lti.freqresp(cl, w))
    ok = (dim_ol == exp_ol and dim_cl == exp_cl and containment < EQUALITY_TOL
          and discrepancy < EQUALITY_TOL)
    if theorem == 2:
        ok = ok and dim_cl > dim_ol
    return TheoremReport(theorem, n_y, n_u, r_d, dim_ol, dim_cl, exp_ol, exp_cl,
                         decoupling, discrepancy, containment, bool(ok))


def check_theorem1(seed: int, n_y: int = 3, n_u: int = 2, n_d: int = 1, n_w: int = 1,
                   n_f: int = 1, order: int = 4, rank_d: int | None = None,
                   controller: StateSpaceModel | None = None,
                   plant: PartitionedPlant | None = None) -> TheoremReport:
    """Open-loop filters decouple the closed loop; nullspaces coincide; ``R_w``, ``R_f`` agree.

    Raises
    ------
    ValueError
        If ``n_y < n_u`` or the controller is rank deficient.
    """
    if plant is None:
        if n_y < n_u:
            raise ValueError("theorem 1 needs n_y >= n_u")
        plant, ctrl = random_plant(seed, n_y, n_u, n_d, n_w, n_f, order, rank_d)
    else:
        ctrl = controller
        if plant.n_y < plant.n_u:
            raise ValueError("theorem 1 needs n_y >= n_u")
    if controller is not None:
        ctrl = controller
    _check_controller(ctrl, plant.n_u, plant.n_y)
    return _evaluate(plant, ctrl, 1)


def check_theorem2(seed: int, n_y: int = 2, n_u: int = 3, n_d: int = 0, n_w: int = 1,
                   n_f: int = 1, order: int = 4, rank_d: int | None = None,
                   controller: StateSpaceModel | None = None,
                   plant: PartitionedPlant | None = None) -> TheoremReport:
    """For ``n_y < n_u`` the closed-loop nullspace is strictly larger and contains the open-loop one."""
    if plant is None:
        if n_y >= n_u:
            raise ValueError("theorem 2 needs n_y < n_u")
        plant, ctrl = random_plant(seed, n_y, n_u, n_d, n_w, n_f, order, rank_d)
    else:
        ctrl = controller
        if plant.n_y >= plant.n_u:
            raise ValueError("theorem 2 needs n_y < n_u")
    if controller is not None:
        ctrl = controller
    _check_controller(ctrl, plant.n_u, plant.n_y)
    return _evaluate(plant, ctrl, 2)


def theorem_suite(theorem: int, n_cases: int = 25, seed: int = 0) -> list[TheoremReport]:
    """Seeded batch with dimensions drawn per case."""
    rng = np.random.default_rng(seed)
    reports = []
    for k in range(n_cases):
        if theorem == 1:
            n_u = int(rng.integers(1, 4))
            n_y = n_u + int(rng.integers(0, 3))
        else:
            n_y = int(rng.integers(1, 4))
            n_u = n_y + int(rng.integers(1, 3))
        n_d = int(rng.integers(0, n_y + 1))
        order = int(rng.integers(2, 9))
        fn = check_theorem1 if theorem == 1 else check_theorem2
        reports.append(fn(seed * 1000 + k, n_y, n_u, n_d, 1, 1, order))
    return reports

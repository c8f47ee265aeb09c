"""Closed-loop maps, internal forms, sampled-data simulation and decision logic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import lti
from .isolability import StructureMatrix
from .lti import StateSpaceModel
from .plant import PartitionedPlant


class ClosedLoopError(ValueError):
    """The loop is ill-posed or not internally stable."""


def close_loop(p: StateSpaceModel, k: StateSpaceModel, n_u: int, n_y: int) -> StateSpaceModel:
    """Negative feedback ``u = K (r - y)`` around ``P: [u; e] -> [y; z]``.

    Returns the map ``[r; e] -> [y; u; z]``.
    """
    ts = lti._common_ts(p, k)
    n_e = p.n_inputs - n_u
    n_z = p.n_outputs - n_y
    if k.shape != (n_u, n_y):
        raise ValueError(f"controller must be {n_u} x {n_y}, got {k.shape}")
    a, c, n = p.a, p.c, p.n_states
    b1, b2 = p.b[:, :n_u], p.b[:, n_u:]
    c1, c2 = c[:n_y], c[n_y:]
    d11, d12 = p.d[:n_y, :n_u], p.d[:n_y, n_u:]
    d21, d22 = p.d[n_y:, :n_u], p.d[n_y:, n_u:]
    ak, bk, ck, dk = k.a, k.b, k.c, k.d
    lhs = np.eye(n_u) + dk @ d11
    if np.linalg.cond(lhs) > 1e12:
        raise lti.IllPosedLoopError("I + D_c D_u is singular")
    e = np.linalg.inv(lhs)
    # u = ux x + uc xc + ur r + ue e
    ux, uc, ur, ue = -e @ dk @ c1, e @ ck, e @ dk, -e @ dk @ d12
    yx, yc, yr, ye = c1 + d11 @ ux, d11 @ uc, d11 @ ur, d12 + d11 @ ue
    zx, zc, zr, ze = c2 + d21 @ ux, d21 @ uc, d21 @ ur, d22 + d21 @ ue
    acl = np.block([[a + b1 @ ux, b1 @ uc],
                    [-bk @ yx, ak - bk @ yc]])
    bcl = np.block([[b1 @ ur, b2 + b1 @ ue],
                    [bk @ (np.eye(n_y) - yr), -bk @ ye]])
    ccl = np.block([[yx, yc], [ux, uc], [zx, zc]])
    dcl = np.block([[yr, ye], [ur, ue], [zr, ze]])
    assert bcl.shape == (n + k.n_states, n_y + n_e)
    assert ccl.shape[0] == n_y + n_u + n_z
    return StateSpaceModel(acl, bcl, ccl, dcl, ts)


@dataclass
class ClosedLoopSystem:
    """``[r; d; w; f] -> [y; u]`` (and ``eps`` when a bank is attached).

    ``u = C (r - y)`` with the plant partitions of ``plant``.
    """

    plant: PartitionedPlant
    controller: StateSpaceModel
    model: StateSpaceModel
    bank: object = None

    @property
    def n_y(self) -> int:
        return self.plant.n_y

    @property
    def n_u(self) -> int:
        return self.plant.n_u

    @property
    def sensitivity(self) -> StateSpaceModel:
        """``S = (I + G_u C)^{-1}``."""
        return lti.sensitivity(self.plant.g_u, self.controller)

    def _inputs(self, group: str) -> list[int]:
        if group == "r":
            return list(range(self.n_y))
        return [self.n_y + j - self.n_u for j in self.plant.columns(group)]

    def _outputs(self, name: str) -> list[int]:
        ny, nu = self.n_y, self.n_u
        if name == "y":
            return list(range(ny))
        if name == "u":
            return list(range(ny, ny + nu))
        if name == "eps":
            if self.bank is None:
                raise ValueError("no filter bank attached")
            return list(range(ny + nu, self.model.n_outputs))
        raise KeyError(name)

    def map(self, output: str, source: str) -> StateSpaceModel:
        """Closed-loop map from ``source`` in {r, d, w, f} to ``output`` in {y, u, eps}."""
        return lti.select(self.model, self._outputs(output), self._inputs(source))


def build_closed_loop(plant: PartitionedPlant, controller: StateSpaceModel,
                      bank=None) -> ClosedLoopSystem:
    """Interconnect plant, controller and optional residual bank.

    Raises
    ------
    ClosedLoopError
        If the loop is not internally stable.
    """
    if controller.shape != (plant.n_u, plant.n_y):
        raise ValueError(f"controller must be {plant.n_u} x {plant.n_y}")
    loop = close_loop(plant.model, controller, plant.n_u, plant.n_y)
    if not lti.is_stable(loop):
        worst = float(np.max(lti.poles(loop).real)) if loop.ts is None else \
            float(np.max(np.abs(lti.poles(loop))))
        raise ClosedLoopError(f"closed loop is not internally stable (worst pole {worst:.3g})")
    model = loop
    if bank is not None:
        q = bank.stacked() if hasattr(bank, "stacked") else bank
        model = close_loop(_observed_plant(plant.model, q, plant.n_u, plant.n_y),
                           controller, plant.n_u, plant.n_y)
    return ClosedLoopSystem(plant, controller, model, bank)


def _observed_plant(m: StateSpaceModel, q: StateSpaceModel, n_u: int, n_y: int
                    ) -> StateSpaceModel:
    """``[u; e] -> [y; eps]`` with ``eps = Q [y; u]``."""
    lower = np.hstack([np.eye(n_u), np.zeros((n_u, m.n_inputs - n_u))])
    yu = StateSpaceModel(m.a, m.b, np.vstack([m.c, np.zeros((n_u, m.n_states))]),
                         np.vstack([m.d, lower]), m.ts)
    pick = lti.gain(np.hstack([np.eye(n_y), np.zeros((n_y, n_u))]), m.ts)
    return lti.series(yu, lti.vstack(pick, q))


def internal_form(system: ClosedLoopSystem | PartitionedPlant, formulation: str,
                  bank=None) -> dict:
    """Maps from the exogenous inputs to the residual.

    ``open_loop``: ``Q [G_u, G_d, G_w, G_f; I, 0, 0, 0]`` keyed u, d, w, f.
    ``closed_loop``: ``Q`` times the closed-loop ``[y; u]`` maps, keyed r, d, w, f.
    Empty input groups map to ``None``.
    """
    if bank is None:
        bank = getattr(system, "bank", None)
    if bank is None:
        raise ValueError("a filter bank is required")
    q = bank.stacked() if hasattr(bank, "stacked") else bank
    if formulation == "open_loop":
        plant = system.plant if isinstance(system, ClosedLoopSystem) else system
        n_u = plant.n_u
        m = plant.model
        lower = np.hstack([np.eye(n_u), np.zeros((n_u, m.n_inputs - n_u))])
        comp = StateSpaceModel(m.a, m.b, np.vstack([m.c, np.zeros((n_u, m.n_states))]),
                               np.vstack([m.d, lower]), m.ts)
        full = lti.series(comp, q)
        return {g: (lti.select(full, None, plant.columns(g)) if plant.columns(g) else None)
                for g in ("u", "d", "w", "f")}
    if formulation == "closed_loop":
        if not isinstance(system, ClosedLoopSystem):
            raise ValueError("closed-loop form needs a ClosedLoopSystem")
        yu = close_loop(system.plant.model, system.controller, system.n_u, system.n_y)
        full = lti.series(yu, q)
        out = {}
        for g in ("r", "d", "w", "f"):
            cols = system._inputs(g)
            out[g] = lti.select(full, None, cols) if cols else None
        return out
    raise ValueError("formulation must be 'open_loop' or 'closed_loop'")


def discretize(model: StateSpaceModel, sample_time: float, method: str = "zoh"
               ) -> StateSpaceModel:
    """Zero-order-hold or bilinear (Tustin) discretization.

    Raises
    ------
    ValueError
        For discrete input, nonpositive ``sample_time`` or a Tustin pole at
        ``2 / sample_time``.
    """
    if model.ts is not None:
        raise ValueError("model is already discrete")
    if not sample_time > 0:
        raise ValueError("sample_time must be positive")
    if model.n_states == 0:
        return StateSpaceModel(model.a, model.b, model.c, model.d, sample_time)
    if method == "tustin":
        m = np.eye(model.n_states) - model.a * sample_time / 2
        if np.linalg.cond(m) > 1e12:
            raise ValueError("pole at the bilinear mapping singularity s = 2/ts")
        method = "bilinear"
    elif method != "zoh":
        raise ValueError("method must be 'zoh' or 'tustin'")
    a, b, c, d, _ = signal.cont2discrete((model.a, model.b, model.c, model.d),
                                         sample_time, method=method)
    return StateSpaceModel(a, b, c, d, sample_time)


def simulate_discrete(model: StateSpaceModel, inputs: np.ndarray, block: int = 32,
                      chunk: int = 2048, x0=None) -> np.ndarray:
    """Response of a discrete model to an input sequence ``(N, m)``.

    The recursion is lifted to blocks of ``block`` samples so that all work
    except the block-to-block state update is done by matrix products.
    """
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    nsamp, m = u.shape
    if m != model.n_inputs:
        raise ValueError("input width does not match the model")
    a, b, c, d = model.a, model.b, model.c, model.d
    n, p = model.n_states, model.n_outputs
    if n == 0:
        return u @ d.T
    big_l = max(1, min(block, nsamp))
    powers = [np.eye(n)]
    for _ in range(big_l):
        powers.append(a @ powers[-1])
    obs = np.vstack([c @ powers[k] for k in range(big_l)])                  # (Lp, n)
    markov = [d] + [c @ powers[k - 1] @ b for k in range(1, big_l)]
    toep = np.zeros((big_l * p, big_l * m))
    for i in range(big_l):
        for j in range(i + 1):
            toep[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i - j]
    gam = np.hstack([powers[big_l - 1 - j] @ b for j in range(big_l)])      # (n, Lm)
    al = powers[big_l]
    nb = -(-nsamp // big_l)
    padded = np.zeros((nb * big_l, m))
    padded[:nsamp] = u
    ublk = padded.reshape(nb, big_l * m)
    out = np.empty((nb, big_l * p))
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    for start in range(0, nb, chunk):
        ub = ublk[start:start + chunk]
        drive = ub @ gam.T
        xs = np.empty((ub.shape[0], n))
        for k in range(ub.shape[0]):
            xs[k] = x
            x = al @ x + drive[k]
        out[start:start + ub.shape[0]] = xs @ obs.T + ub @ toep.T
    return out.reshape(nb * big_l, p)[:nsamp]


def smoothstep7(s: np.ndarray) -> np.ndarray:
    """``35 s^4 - 84 s^5 + 70 s^6 - 20 s^7`` clipped to [0, 1]."""
    s = np.clip(s, 0.0, 1.0)
    return s ** 4 * (35 - 84 * s + 70 * s ** 2 - 20 * s ** 3)


def fourth_order_setpoint(stroke_m: float, freq_hz: float, sample_time: float,
                          duration: float | None = None) -> np.ndarray:
    """Periodic point-to-point setpoint with zero velocity, acceleration and jerk at rest.

    Each period consists of a move up over a quarter period, a dwell, a move
    back down and a second dwell. The septic rise keeps the snap bounded.

    Parameters
    ----------
    stroke_m : float
        Move length; zero gives an identically zero trace.
    freq_hz : float
        Repetition frequency.
    sample_time : float
        Sampling interval.
    duration : float, optional
        Trace length in seconds (one period by default).
    """
    if not freq_hz > 0:
        raise ValueError("frequency must be positive")
    if not sample_time > 0:
        raise ValueError("sample time must be positive")
    period = 1.0 / freq_hz
    if period / 4 < 4 * sample_time:
        raise ValueError("moves too short for the sample time")
    duration = period if duration is None else duration
    t = np.arange(int(round(duration / sample_time)) + 1) * sample_time
    return stroke_m * setpoint_profile(t, freq_hz)


def setpoint_profile(t: np.ndarray, freq_hz: float) -> np.ndarray:
    """Unit-stroke profile evaluated at times ``t``."""
    period = 1.0 / freq_hz
    phase = np.mod(t, period) / period
    up = smoothstep7(phase * 4)
    down = 1 - smoothstep7((phase - 0.5) * 4)
    return np.where(phase < 0.5, up, down)


@dataclass(frozen=True)
class FaultEvent:
    fault: int          # 1-based
    t_start: float
    t_end: float
    magnitude: float
    shape: str = "step"
    freq_hz: float = 0.0

    def signal(self, t: np.ndarray) -> np.ndarray:
        active = (t >= self.t_start - 1e-12) & (t < self.t_end - 1e-12)
        if self.shape == "step":
            return self.magnitude * active
        if self.shape == "sine":
            return self.magnitude * active * np.sin(2 * np.pi * self.freq_hz * (t - self.t_start))
        raise ValueError(f"unknown fault shape {self.shape!r}")


@dataclass(frozen=True)
class ReferenceSpec:
    type: str = "fourth_order"
    stroke_m: float = 0.0
    freq_hz: float = 1.0
    axis: object = 0


@dataclass(frozen=True)
class FaultScenario:
    duration: float
    sample_time: float
    reference: ReferenceSpec = ReferenceSpec()
    events: tuple = ()

    def __post_init__(self):
        if not (self.duration > 0 and self.sample_time > 0):
            raise ValueError("duration and sample time must be positive")
        for ev in self.events:
            if not 0 <= ev.t_start < ev.t_end <= self.duration + 1e-9:
                raise ValueError(f"event window invalid for fault {ev.fault}")
            if ev.fault < 1:
                raise ValueError("fault indices are 1-based")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.sample_time)) + 1

    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.sample_time

    def with_events(self, events) -> "FaultScenario":
        return FaultScenario(self.duration, self.sample_time, self.reference, tuple(events))

    def to_dict(self) -> dict:
        ref = self.reference
        return {"duration_s": self.duration, "sample_hz": 1.0 / self.sample_time,
                "reference": {"type": ref.type, "stroke_m": ref.stroke_m,
                              "freq_hz": ref.freq_hz, "axis": ref.axis},
                "events": [{"fault": e.fault, "t_start_s": e.t_start, "t_end_s": e.t_end,
                            "magnitude": e.magnitude,
                            "shape": e.shape if e.shape == "step"
                            else {"sine": e.freq_hz}} for e in self.events]}

    @classmethod
    def from_dict(cls, doc: dict) -> "FaultScenario":
        ref = doc.get("reference") or {}
        if ref.get("type", "fourth_order") != "fourth_order":
            raise ValueError("only fourth_order references are supported")
        events = []
        for e in doc.get("events", []):
            shape, freq = e.get("shape", "step"), 0.0
            if isinstance(shape, dict):
                freq = float(shape["sine"])
                shape = "sine"
            events.append(FaultEvent(int(e["fault"]), float(e["t_start_s"]),
                                     float(e["t_end_s"]), float(e["magnitude"]), shape, freq))
        return cls(float(doc["duration_s"]), 1.0 / float(doc["sample_hz"]),
                   ReferenceSpec("fourth_order", float(ref.get("stroke_m", 0.0)),
                                 float(ref.get("freq_hz", 1.0)), ref.get("axis", 0)),
                   tuple(events))


def scenario_signals(scenario: FaultScenario, plant: PartitionedPlant,
                     directions: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Reference ``(N, n_y)`` and exogenous ``[d; w; f]`` ``(N, n_d + n_w + n_f)`` traces."""
    t = scenario.time()
    ref = scenario.reference
    axis = ref.axis
    if directions and axis in directions:
        direction = np.asarray(directions[axis], dtype=float)
    else:
        direction = np.zeros(plant.n_y)
        direction[int(axis)] = 1.0
    r = np.outer(ref.stroke_m * setpoint_profile(t, ref.freq_hz), direction) \
        if ref.stroke_m else np.zeros((t.size, plant.n_y))
    n_dw = plant.n_d + plant.n_w
    e = np.zeros((t.size, n_dw + plant.n_f))
    for ev in scenario.events:
        if ev.fault > plant.n_f:
            raise ValueError(f"fault index {ev.fault} exceeds n_f = {plant.n_f}")
        e[:, n_dw + ev.fault - 1] += ev.signal(t)
    return r, e


@dataclass
class DecisionConfig:
    window_s: float = 0.05
    factor: float = 5.0
    percentile: float = 99.0
    debounce: int = 10
    floor: float = 1e-9


@dataclass
class DecisionTrace:
    """Per-sample fired pattern and isolated fault (1-based; 0 none, -1 ambiguous)."""

    fired: np.ndarray
    isolated: np.ndarray
    thresholds: np.ndarray
    config: DecisionConfig


@dataclass
class SimulationResult:
    time: np.ndarray
    r: np.ndarray
    y: np.ndarray
    u: np.ndarray
    residuals: np.ndarray
    decisions: DecisionTrace | None = None
    meta: dict = field(default_factory=dict)


def sampled_loop(plant: PartitionedPlant, controller: StateSpaceModel, bank,
                 sample_time: float, true_plant: PartitionedPlant | None = None,
                 filter_method: str = "zoh") -> StateSpaceModel:
    """Discrete ``[r; d; w; f] -> [y; u; eps]`` for sampled-data simulation.

    The controller is discretized with Tustin. With ``filter_method='zoh'``
    the bank is discretized together with the plant it observes (the
    continuous filter sees the continuous plant output and the held control
    input), which preserves exact decoupling at the samples. With
    ``'tustin'`` the bank is discretized on its own and fed sampled data.
    """
    sim = true_plant or plant
    q = bank.stacked() if hasattr(bank, "stacked") else bank
    n_y, n_u = plant.n_y, plant.n_u
    kd = discretize(controller, sample_time, "tustin")
    m = sim.model
    if filter_method == "zoh":
        aug = _observed_plant(m, q, n_u, n_y)
        return close_loop(discretize(aug, sample_time, "zoh"), kd, n_u, n_y)
    if filter_method == "tustin":
        loop = close_loop(discretize(m, sample_time, "zoh"), kd, n_u, n_y)
        yu = lti.select(loop, list(range(n_y + n_u)), None)
        eps = lti.series(yu, discretize(q, sample_time, "tustin"))
        return lti.vstack(loop, eps)
    raise ValueError("filter_method must be 'zoh' or 'tustin'")


def simulate(system: ClosedLoopSystem, scenario: FaultScenario,
             mismatch: PartitionedPlant | None = None, directions: dict | None = None,
             filter_method: str = "zoh", block: int = 32) -> SimulationResult:
    """Fixed-step simulation of a fault scenario.

    ``mismatch`` is the plant actually simulated; the bank stays the one
    designed on ``system.plant``.
    """
    if system.bank is None:
        raise ValueError("simulation needs a filter bank")
    plant = system.plant
    disc = sampled_loop(plant, system.controller, system.bank, scenario.sample_time,
                        mismatch, filter_method)
    if not lti.is_stable(disc):
        raise ClosedLoopError("sampled closed loop is unstable")
    r, e = scenario_signals(scenario, plant, directions)
    out = simulate_discrete(disc, np.hstack([r, e]), block=block)
    n_y, n_u = plant.n_y, plant.n_u
    return SimulationResult(scenario.time(), r, out[:, :n_y], out[:, n_y:n_y + n_u],
                            out[:, n_y + n_u:],
                            meta={"filter_method": filter_method,
                                  "mismatch": mismatch is not None})


def simulate_segmented(system: ClosedLoopSystem, scenario: FaultScenario,
                       mismatch: PartitionedPlant | None = None,
                       directions: dict | None = None, filter_method: str = "zoh",
                       block: int = 32) -> tuple[SimulationResult, SimulationResult]:
    """Per-fault sub-simulations concatenated onto the fault-free run.

    Each event is simulated from rest over its own segment, which runs from
    its onset to the next onset (or the end of the scenario), and added to
    the fault-free trajectory by superposition. Consecutive faults therefore
    do not see each other's tails.

    Returns
    -------
    (result, fault_free) : tuple of SimulationResult
    """
    if system.bank is None:
        raise ValueError("simulation needs a filter bank")
    plant = system.plant
    disc = sampled_loop(plant, system.controller, system.bank, scenario.sample_time,
                        mismatch, filter_method)
    if not lti.is_stable(disc):
        raise ClosedLoopError("sampled closed loop is unstable")
    r, e0 = scenario_signals(scenario.with_events(()), plant, directions)
    base = simulate_discrete(disc, np.hstack([r, e0]), block=block)
    out = base.copy()
    t = scenario.time()
    events = sorted(scenario.events, key=lambda ev: ev.t_start)
    for k, ev in enumerate(events):
        stop = events[k + 1].t_start if k + 1 < len(events) else t[-1] + scenario.sample_time
        seg = np.where((t >= ev.t_start - 1e-12) & (t < stop - 1e-12))[0]
        if seg.size == 0:
            continue
        _, e = scenario_signals(scenario.with_events((ev,)), plant, directions)
        u_in = np.hstack([np.zeros((seg.size, r.shape[1])), e[seg]])
        out[seg] += simulate_discrete(disc, u_in, block=block)
    n_y, n_u = plant.n_y, plant.n_u
    meta = {"filter_method": filter_method, "mismatch": mismatch is not None}

    def pack(arr, segmented):
        return SimulationResult(t, r, arr[:, :n_y], arr[:, n_y:n_y + n_u], arr[:, n_y + n_u:],
                                meta={**meta, "segmented": segmented})
    return pack(out, True), pack(base, False)


def moving_rms(x: np.ndarray, window: int) -> np.ndarray:
    """Causal moving RMS along axis 0 (shorter windows at the start)."""
    x = np.asarray(x, dtype=float)
    window = max(1, int(window))
    csum = np.cumsum(np.concatenate([np.zeros((1,) + x.shape[1:]), x ** 2]), axis=0)
    idx = np.arange(1, x.shape[0] + 1)
    lo = np.maximum(idx - window, 0)
    count = (idx - lo).reshape((-1,) + (1,) * (x.ndim - 1))
    return np.sqrt(np.maximum(csum[idx] - csum[lo], 0.0) / count)


def calibrate_thresholds(residuals: np.ndarray, sample_time: float,
                         config: DecisionConfig | None = None) -> np.ndarray:
    """``factor`` times the chosen percentile of the fault-free moving RMS."""
    config = config or DecisionConfig()
    rms = moving_rms(residuals, round(config.window_s / sample_time))
    thr = config.factor * np.percentile(rms, config.percentile, axis=0)
    return np.maximum(thr, config.floor)


def _debounce(raw: np.ndarray, count: int) -> np.ndarray:
    """True once ``raw`` has held for ``count`` consecutive samples."""
    if count <= 1:
        return raw.copy()
    out = np.zeros_like(raw)
    for j in range(raw.shape[1]):
        col = raw[:, j].astype(int)
        # run length of consecutive True ending at each sample
        csum = np.cumsum(col)
        reset = np.maximum.accumulate(np.where(col == 0, csum, 0))
        out[:, j] = (csum - reset) >= count
    return out


def match_signature(pattern: np.ndarray, s: StructureMatrix) -> int:
    """1-based fault index whose signature equals ``pattern``; 0 if none fired, -1 otherwise."""
    pattern = np.asarray(pattern).astype(int)
    if not pattern.any():
        return 0
    hits = np.where(np.all(s.entries.T == pattern, axis=1))[0]
    return int(hits[0]) + 1 if hits.size == 1 else -1


def decide(residuals: np.ndarray, s: StructureMatrix, thresholds: np.ndarray,
           sample_time: float, config: DecisionConfig | None = None) -> DecisionTrace:
    """Threshold the moving RMS and match fired patterns against signatures."""
    config = config or DecisionConfig()
    residuals = np.asarray(residuals, dtype=float)
    if residuals.shape[1] != s.n_rows:
        raise ValueError("residual count must equal the rows of S")
    rms = moving_rms(residuals, round(config.window_s / sample_time))
    fired = _debounce(rms > np.asarray(thresholds)[None, :], config.debounce)
    keys = fired.astype(np.uint8)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    codes = np.array([match_signature(p, s) for p in uniq], dtype=int)
    return DecisionTrace(fired, codes[inverse.ravel()], np.asarray(thresholds, dtype=float),
                         config)


def write_result_csv(path, result: SimulationResult, decimate: int = 1) -> None:
    sl = slice(None, None, max(1, decimate))
    cols = [result.time[sl, None], result.y[sl], result.u[sl], result.residuals[sl]]
    header = (["time"] + [f"y_{i + 1}" for i in range(result.y.shape[1])]
              + [f"u_{i + 1}" for i in range(result.u.shape[1])]
              + [f"eps_{i + 1}" for i in range(result.residuals.shape[1])])
    np.savetxt(path, np.hstack(cols), delimiter=",", header=",".join(header),
               comments="", fmt="%.10g")


def write_decisions_csv(path, time: np.ndarray, trace: DecisionTrace,
                        decimate: int = 1) -> None:
    step = max(1, decimate)
    with open(path, "w") as fh:
        fh.write("time,fired,isolated\n")
        for k in range(0, time.size, step):
            bits = "".join("1" if b else "0" for b in trace.fired[k])
            fh.write(f"{time[k]:.10g},{bits},{int(trace.isolated[k])}\n")


def normalized_residuals(residuals: np.ndarray) -> np.ndarray:
    """Each residual divided by its peak magnitude over the run (display only)."""
    peak = np.max(np.abs(residuals), axis=0)
    return residuals / np.where(peak > 0, peak, 1.0)


def gnuplot_script(csv_name: str, n_residuals: int, first_column: int) -> str:
    lines = ["set datafile separator ','", "set key autotitle columnhead",
             "set xlabel 'time [s]'", "set ylabel 'residual'",
             f"set multiplot layout {n_residuals},1"]
    for i in range(n_residuals):
        col = first_column + i
        lines.append(f"plot '{csv_name}' using 1:{col} with lines")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"

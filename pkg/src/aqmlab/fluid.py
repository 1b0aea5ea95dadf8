"""Closed-loop fluid models: equilibria, delay-differential right-hand sides,
a fixed-step method-of-steps integrator, and oscillation metrics.

Three systems are covered, distinguished by how the drop probability is fed
back: through an averaged-queue state (3 states: w, q, p), through the
instantaneous queue (2 states: w, q), or through the window itself under a
drop-above-threshold policy (1 state: w).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConvergenceError, DomainError, IntegrationError, InternalConsistencyError
from .numerics import bisect, hermite_eval, is_finite_tuple
from .params import NetworkParams, ProtocolSpec, RedParams, ThresholdParams, Variant
from .protocols import (
    decrease_rate,
    increase_rate,
    threshold_drop_probability,
)

_W_FLOOR = 1e-9  # windows are clamped to a tiny positive value, not 0


class FluidSystemKind(Enum):
    WITH_AVERAGING = "with-averaging"
    NO_AVERAGING = "no-averaging"
    THRESHOLD = "threshold"

    @property
    def dim(self) -> int:
        return {"with-averaging": 3, "no-averaging": 2, "threshold": 1}[self.value]

    @property
    def columns(self) -> tuple[str, ...]:
        return ("w", "q", "p")[: self.dim]


class OperatingRegionWarning(UserWarning):
    """Equilibrium fell outside the affine band of the drop probability."""


@dataclass(frozen=True)
class Equilibrium:
    """Fixed point of one of the fluid systems.

    q_star is None for the threshold system (its queue is not a state).
    wk1_closed_form carries the approximate closed-form value of w*^(k-1)
    for the threshold system (it assumes 1 - p* ~ 1, so it is reported, not
    used).
    """

    kind: FluidSystemKind
    w_star: float
    p_star: float
    q_star: float | None = None
    residual: float = 0.0
    in_band: bool = True
    wk1_closed_form: float | None = None

    def state(self) -> tuple[float, ...]:
        if self.kind is FluidSystemKind.WITH_AVERAGING:
            return (self.w_star, self.q_star, self.p_star)
        if self.kind is FluidSystemKind.NO_AVERAGING:
            return (self.w_star, self.q_star)
        return (self.w_star,)


def _window_balance_residual(spec, w, p):
    """Normalized residual of i(w)(1-p) = d(w) p."""
    gain = increase_rate(spec, w) * (1.0 - p)
    loss = decrease_rate(spec, w) * p
    scale = abs(gain) + abs(loss)
    return abs(gain - loss) / scale if scale > 0 else 0.0


def _solve_red_equilibrium(spec, red, net):
    """Common fixed point of the averaged and instantaneous RED systems.

    Solves i(w)(1-p) = d(w) p with w = C*rtt/(1-p) by bisection on p."""
    bdp = net.c_per_flow * net.rtt

    def g(p):
        w = bdp / (1.0 - p)
        return increase_rate(spec, w) * (1.0 - p) - decrease_rate(spec, w) * p

    lo, hi = 1e-16, 1.0 - 1e-12
    if spec.variant is Variant.AFRICA:
        # keep w inside the AFRICA validity range
        hi = min(hi, 1.0 - bdp / (_AFRICA_W_MAX * 0.999))
    if g(lo) <= 0 or g(hi) >= 0:
        raise ConvergenceError("no drop-probability root in (0, 1)")
    p_star = bisect(g, lo, hi, rtol=1e-16)
    w_star = bdp / (1.0 - p_star)
    q_star = p_star / red.rho + red.b_min
    residual = max(
        _window_balance_residual(spec, w_star, p_star),
        abs(w_star * (1.0 - p_star) - bdp) / bdp,
    )
    in_band = red.b_min < q_star < red.b_max
    if not in_band:
        warnings.warn(
            f"equilibrium queue {q_star:.3g} pkts lies outside the affine band "
            f"({red.b_min:g}, {red.b_max:g}); linearized results are suspect",
            OperatingRegionWarning,
            stacklevel=3,
        )
    return w_star, q_star, p_star, residual, in_band


# AFRICA's log-based decrease fraction leaves (0, 2) beyond this window
_AFRICA_W_MAX = 38.0 * math.exp(0.5 * (math.log(83000.0) - math.log(38.0)) / 0.4)


def equilibrium_with_averaging(
    spec: ProtocolSpec, red: RedParams, net: NetworkParams
) -> Equilibrium:
    w, q, p, res, in_band = _solve_red_equilibrium(spec, red, net)
    return Equilibrium(FluidSystemKind.WITH_AVERAGING, w, p, q, res, in_band)


def equilibrium_no_averaging(
    spec: ProtocolSpec, red: RedParams, net: NetworkParams
) -> Equilibrium:
    w, q, p, res, in_band = _solve_red_equilibrium(spec, red, net)
    return Equilibrium(FluidSystemKind.NO_AVERAGING, w, p, q, res, in_band)


def equilibrium_threshold(
    spec: ProtocolSpec, net: NetworkParams, th: ThresholdParams
) -> Equilibrium:
    """Fixed point of the threshold-policy system, i(w)(1-p(w)) = d(w) p(w)."""
    bdp = net.c_per_flow * net.rtt

    def g(w):
        p = threshold_drop_probability(w, net, th)
        return increase_rate(spec, w) * (1.0 - p) - decrease_rate(spec, w) * p

    lo = 1e-9 * bdp
    hi = bdp * (1.0 - 1e-14)
    if g(lo) <= 0 or g(hi) >= 0:
        raise ConvergenceError("no window root in (0, C*rtt)")
    w_star = bisect(g, lo, hi, rtol=1e-16)
    p_star = threshold_drop_probability(w_star, net, th)
    residual = _window_balance_residual(spec, w_star, p_star)

    wk1_closed = None
    if spec.variant is not Variant.AFRICA:
        alpha, k, beta = _power_law_constants(spec)
        expo = (k - 1.0) / (th.q_th + 2.0 - k)
        wk1_closed = (alpha * bdp**th.q_th / beta) ** expo
        # The same rearrangement with (1 - p*) retained is exact algebra, so
        # it must agree with the bisection root; this guards the solver.
        w_exact = (alpha * (1.0 - p_star) * bdp**th.q_th / beta) ** (
            1.0 / (th.q_th + 2.0 - k)
        )
        lhs = w_exact ** (k - 1.0)
        rhs = w_star ** (k - 1.0)
        if abs(lhs - rhs) > 1e-6 * abs(rhs):
            raise InternalConsistencyError(
                f"threshold equilibrium closed-form check failed: {lhs} vs {rhs}"
            )
    return Equilibrium(
        FluidSystemKind.THRESHOLD, w_star, p_star, None, residual, True, wk1_closed
    )


def _power_law_constants(spec: ProtocolSpec) -> tuple[float, float, float]:
    """(alpha, k, beta) of the power-law family; RENO and ILLINOIS are k=0."""
    v = spec.variant
    if v is Variant.COMPOUND:
        c = spec.compound
        return c.alpha, c.k, c.beta
    if v is Variant.RENO:
        return 1.0, 0.0, 0.5
    if v is Variant.ILLINOIS:
        il = spec.illinois
        return il.alpha_max, 0.0, il.beta_min
    raise DomainError("AFRICA has no power-law form")


def make_rhs(
    kind: FluidSystemKind,
    spec: ProtocolSpec,
    net: NetworkParams,
    red: RedParams | None = None,
    th: ThresholdParams | None = None,
):
    """Build f(state_now, state_delayed) -> derivative tuple for one system."""
    kappa = net.kappa
    tau = net.rtt
    cap = net.c_per_flow
    buf = net.buffer

    def window_dot(w, w_d, p_d):
        w = max(w, _W_FLOOR)
        w_d = max(w_d, _W_FLOOR)
        gain = increase_rate(spec, w) * (1.0 - p_d)
        loss = decrease_rate(spec, w) * p_d
        return kappa * (gain - loss) * w_d / tau

    def queue_dot(q, w, p):
        rate = kappa * ((1.0 - p) * w / tau - cap)
        if q <= 0.0 and rate < 0.0:
            return 0.0
        if buf is not None and q >= buf and rate > 0.0:
            return 0.0
        return rate

    if kind is FluidSystemKind.WITH_AVERAGING:
        if red is None:
            raise DomainError("with-averaging system needs RedParams")
        gC = red.gamma * cap
        rho = red.rho
        b_min = red.b_min

        def f(now, delayed):
            w, q, p = now
            w_d, _, p_d = delayed
            return (
                window_dot(w, w_d, p_d),
                queue_dot(q, w, p),
                -kappa * gC * (p + rho * b_min - rho * q),
            )

        return f

    if kind is FluidSystemKind.NO_AVERAGING:
        if red is None:
            raise DomainError("no-averaging system needs RedParams")
        rho = red.rho
        b_min = red.b_min

        def f(now, delayed):
            w, q = now
            w_d, q_d = delayed
            p_d = rho * (q_d - b_min)
            p = rho * (q - b_min)
            return (window_dot(w, w_d, p_d), queue_dot(q, w, p))

        return f

    if th is None:
        raise DomainError("threshold system needs ThresholdParams")

    def f(now, delayed):
        (w,) = now
        (w_d,) = delayed
        p_d = threshold_drop_probability(max(w_d, _W_FLOOR), net, th)
        return (window_dot(w, w_d, p_d),)

    return f


def rhs(
    kind: FluidSystemKind,
    state_now,
    state_delayed,
    spec: ProtocolSpec,
    net: NetworkParams,
    red: RedParams | None = None,
    th: ThresholdParams | None = None,
):
    """One-off evaluation of the system right-hand side."""
    return make_rhs(kind, spec, net, red, th)(tuple(state_now), tuple(state_delayed))


@dataclass
class Trajectory:
    """Uniformly sampled solution of one fluid system."""

    times: np.ndarray
    states: np.ndarray
    kind: FluidSystemKind
    step: float
    meta: dict = field(default_factory=dict)

    def component(self, name: str) -> np.ndarray:
        return self.states[:, self.kind.columns.index(name)]

    def to_csv(self, path) -> None:
        header = "t," + ",".join(self.kind.columns)
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for t, row in zip(self.times, self.states):
                cells = [f"{t:.12g}"] + [f"{v:.12g}" for v in row]
                fh.write(",".join(cells) + "\n")


def integrate_dde(
    kind: FluidSystemKind,
    spec: ProtocolSpec,
    net: NetworkParams,
    red: RedParams | None = None,
    th: ThresholdParams | None = None,
    *,
    initial_history,
    horizon: float,
    steps_per_delay: int = 500,
    delay: float | None = None,
) -> Trajectory:
    """Integrate one system by the method of steps with classical RK4.

    The step is delay/steps_per_delay so the delay is a whole number of
    steps; delayed values at half-steps come from cubic Hermite interpolation
    of the stored solution. States are clamped at 0 from below (the window at
    a tiny positive floor) and the queue at the buffer from above.

    initial_history is a constant state tuple or a callable t -> state on
    [-delay, 0]. delay defaults to net.rtt; it is exposed separately so the
    rate-multiplier/time-rescaling equivalence can be verified.
    """
    if steps_per_delay < 200:
        raise DomainError("steps_per_delay must be at least 200")
    tau = net.rtt if delay is None else delay
    m = steps_per_delay
    h = tau / m
    n_steps = int(math.ceil(horizon / h - 1e-12))
    dim = kind.dim
    f = make_rhs(kind, spec, net, red, th)

    if callable(initial_history):
        hist = initial_history
    else:
        const = tuple(float(v) for v in initial_history)
        if len(const) != dim:
            raise DomainError(f"history has dim {len(const)}, system needs {dim}")
        hist = lambda t: const  # noqa: E731

    ys = [tuple(float(v) for v in hist(-tau + j * h)) for j in range(m + 1)]
    # one-sided history derivatives (for interpolation left of t=0)
    eps = h * 1e-3
    fs = []
    for j in range(m + 1):
        t = -tau + j * h
        a = hist(max(t - eps, -tau))
        b = hist(min(t + eps, 0.0))
        dt = min(t + eps, 0.0) - max(t - eps, -tau)
        fs.append(
            tuple((bv - av) / dt if dt > 0 else 0.0 for av, bv in zip(a, b))
        )
    f_left_at_0 = fs[m]
    # from t=0 on, node derivatives are the system's own right-hand side
    fs[m] = f(ys[m], ys[0])

    def clamp(y):
        out = list(y)
        out[0] = max(out[0], _W_FLOOR)
        for j in range(1, dim):
            out[j] = max(out[j], 0.0)
        if net.buffer is not None and dim >= 2:
            out[1] = min(out[1], net.buffer)
        return tuple(out)

    half = 0.5 * h
    sixth = h / 6.0
    zero_node = m  # index of t = 0, whose left/right derivatives differ

    def interp_half(j):
        fr = f_left_at_0 if j + 1 == zero_node else fs[j + 1]
        return hermite_eval(0.5, ys[j], ys[j + 1], fs[j], fr, h)

    for i in range(m, m + n_steps):
        y = ys[i]
        j = i - m
        d0 = ys[j]
        dh = interp_half(j)
        d1 = ys[j + 1]
        k1 = fs[i]
        k2 = f(tuple(a + half * b for a, b in zip(y, k1)), dh)
        k3 = f(tuple(a + half * b for a, b in zip(y, k2)), dh)
        k4 = f(tuple(a + h * b for a, b in zip(y, k3)), d1)
        ynew = clamp(
            tuple(
                a + sixth * (b1 + 2.0 * (b2 + b3) + b4)
                for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
            )
        )
        if not is_finite_tuple(ynew):
            raise IntegrationError(
                f"non-finite state at t={(i - m + 1) * h:.6g}", time=(i - m + 1) * h
            )
        ys.append(ynew)
        fs.append(f(ynew, ys[j + 1]))

    times = np.arange(n_steps + 1) * h
    states = np.asarray(ys[m:], dtype=float)
    meta = {
        "kind": kind.value,
        "steps_per_delay": m,
        "delay": tau,
        "kappa": net.kappa,
        "rtt": net.rtt,
        "c_per_flow": net.c_per_flow,
    }
    return Trajectory(times, states, kind, h, meta)


def default_history(eq: Equilibrium, scale: float = 1.1):
    """Constant history at scale * equilibrium (small perturbation)."""
    return tuple(scale * v for v in eq.state())


class History:
    """Uniform-grid state samples over one delay window with the cubic
    Hermite interpolation rule; callable on [-window, 0].

    Node derivatives may be supplied; otherwise they are estimated by
    central differences of the samples, which keeps the interpolant within
    O(h^3) of the underlying solution.
    """

    def __init__(self, step: float, values, derivatives=None):
        self.step = float(step)
        self.values = [tuple(float(x) for x in v) for v in values]
        if len(self.values) < 2:
            raise DomainError("a history needs at least two samples")
        if derivatives is not None:
            self.derivs = [tuple(float(x) for x in d) for d in derivatives]
            if len(self.derivs) != len(self.values):
                raise DomainError("derivative count must match sample count")
        else:
            h = self.step
            vs = self.values
            n = len(vs)
            self.derivs = []
            for j in range(n):
                lo = vs[max(j - 1, 0)]
                hi = vs[min(j + 1, n - 1)]
                dt = (min(j + 1, n - 1) - max(j - 1, 0)) * h
                self.derivs.append(
                    tuple((b - a) / dt if dt > 0 else 0.0 for a, b in zip(lo, hi))
                )
        self.window = self.step * (len(self.values) - 1)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, window: float) -> "History":
        """The most recent delay window of a computed trajectory."""
        n = int(round(window / traj.step))
        if n < 1 or n >= len(traj.times):
            raise DomainError("trajectory does not span the requested window")
        return cls(traj.step, [tuple(row) for row in traj.states[-(n + 1):]])

    def __call__(self, t: float):
        if t > 1e-12 or t < -self.window - 1e-12:
            raise DomainError(f"history queried outside [-{self.window}, 0]")
        pos = (t + self.window) / self.step
        j = min(int(pos), len(self.values) - 2)
        theta = min(max(pos - j, 0.0), 1.0)
        if theta == 0.0:
            return self.values[j]
        return hermite_eval(
            theta, self.values[j], self.values[j + 1],
            self.derivs[j], self.derivs[j + 1], self.step,
        )


@dataclass(frozen=True)
class OscillationMetrics:
    minimum: float
    maximum: float
    amplitude: float
    period: float | None


def oscillation_metrics(
    traj: Trajectory,
    transient_cut: float,
    component: str = "w",
    amplitude_floor: float = 1e-9,
) -> OscillationMetrics:
    """Peak-to-peak amplitude and period estimate after discarding a transient.

    The period is the mean spacing of upward crossings of the post-transient
    mean; it is None when the signal is (numerically) constant or crosses
    fewer than twice.
    """
    mask = traj.times >= transient_cut
    if mask.sum() < 8:
        raise DomainError("post-transient window too short")
    x = traj.component(component)[mask]
    t = traj.times[mask]
    lo = float(x.min())
    hi = float(x.max())
    amplitude = hi - lo
    period = None
    if amplitude > max(amplitude_floor, 1e-12 * max(abs(hi), abs(lo))):
        centered = x - x.mean()
        up = np.flatnonzero((centered[:-1] < 0) & (centered[1:] >= 0))
        if len(up) >= 2:
            # linear interpolation of each crossing instant
            frac = -centered[up] / (centered[up + 1] - centered[up])
            crossings = t[up] + frac * (t[up + 1] - t[up])
            period = float(np.diff(crossings).mean())
    return OscillationMetrics(lo, hi, amplitude, period)


def threshold_bifurcation_sweep(
    spec: ProtocolSpec,
    net: NetworkParams,
    q_th_values,
    *,
    horizon_delays: float = 300.0,
    transient_delays: float = 200.0,
    steps_per_delay: int = 200,
    perturbation: float = 1.1,
):
    """Amplitude of the window oscillation versus the drop threshold.

    Returns a list of (q_th, Equilibrium, OscillationMetrics), suitable for a
    bifurcation diagram. Sweep points are independent; results are ordered by
    the input sequence.
    """
    out = []
    for q_th in q_th_values:
        th = ThresholdParams(q_th=float(q_th))
        eq = equilibrium_threshold(spec, net, th)
        traj = integrate_dde(
            FluidSystemKind.THRESHOLD,
            spec,
            net,
            th=th,
            initial_history=default_history(eq, perturbation),
            horizon=horizon_delays * net.rtt,
            steps_per_delay=steps_per_delay,
        )
        metrics = oscillation_metrics(traj, transient_delays * net.rtt)
        out.append((float(q_th), eq, metrics))
    return out

"""Time integration of the coupled (q, b) flow inside the shrinking set.

A state holds the scale time s, the profile parameter b, and the spectral
split of q: tracked mode coefficients q_0..q_{M_floor} plus a remainder that
is orthogonal to the tracked range. The two parts are advanced together by
classical RK4 but by different mechanisms:

* tracked modes obey dq_n/ds = (1 - n/2k) q_n + P_n(N + D_s + R_s + b' M).
  The generator's off-diagonal (Jordan) coupling cancels exactly against the
  moving-basis correction of d/ds P_n, so only source projections remain;
  they are computed by the conditioned jet/quadrature split, which stays
  accurate at large s where direct re-extraction of high modes from grid
  samples loses all precision to roundoff amplification by I(s)^n;
* the remainder obeys d_s q_- = L_s q_- + (sources minus their tracked-mode
  content), evaluated pointwise on the grid with finite differences
  (outflow-biased at the edges) and re-orthogonalized after every step.

The modulation rate b' is solved at every stage so dq_{2k}/ds = 0; the
neutral mode therefore stays exactly zero along trajectories.

Membership monitoring checks the time-dependent box: |q_m| <= I^{-delta}(s)
for tracked modes m != 2k, |q_{2k}| <= I^{-2 delta}(s), the weighted
remainder sup |q_-|_s <= I^{-delta}(s), and b0/2 <= b <= 2 b0. Trajectories
either survive to the horizon or exit; exits record the violated bound, the
crossing sign, and the crossing speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, derivative, laplacian_compact, sample, uniform_grid, upwind_gradient
from .hermite import (
    QuadratureRule,
    SpectralDecomposition,
    gauss_rule,
    hermite_series,
    power_in_hermite,
    project_modes_from_samples,
    recompose,
    remainder_seminorm,
)
from .operators import (
    drift_values,
    modulation_values,
    nonlinear_values,
    residual_values,
)
from .params import ModelParams, eval_profile, scale_factor
from .projection import projected_sources

__all__ = [
    "FlowOptions",
    "SimState",
    "MembershipReport",
    "TrajectorySample",
    "ExitInfo",
    "TrajectoryRecord",
    "AprioriReport",
    "init_state",
    "step",
    "membership",
    "run",
    "mode_ode_rhs",
    "a_priori_diagnostics",
]

D_BOX_LIMIT = 2.0


@dataclass(frozen=True)
class FlowOptions:
    """Numerical knobs of the modulated flow (grid, quadrature, variants).

    The default grid is deliberately coarse: the remainder is smooth on O(1)
    scales in y, while the explicit diffusion I^{-2} d_yy imposes a step
    ceiling ~ 0.5 h^2 I^2(s), so resolution is paid for cubically. Steps
    larger than the ceiling are split into stable substeps automatically.
    """

    y_max: float = 0.15
    n_nodes: int = 257
    quad_order: int = 96
    variant: str = "derived"
    linear_only: bool = False
    sem_floor: float = 1e-10
    sem_rel_floor: float = 0.05
    max_ds: float = 0.05
    cfl_safety: float = 0.45
    exit_hysteresis: float = 1e-12

    def nodes(self) -> np.ndarray:
        return uniform_grid(self.y_max, self.n_nodes)

    def quad(self) -> QuadratureRule:
        return gauss_rule(self.quad_order)

    def stable_ds(self, s: float, k: int) -> float:
        h = 2.0 * self.y_max / (self.n_nodes - 1)
        I2 = float(scale_factor(s, k)) ** 2
        diff_limit = self.cfl_safety * h * h * I2
        adv_limit = 1.2 * h / (self.y_max / (2.0 * k))
        return min(self.max_ds, diff_limit, adv_limit)


@dataclass(frozen=True)
class SimState:
    s: float
    b: float
    dec: SpectralDecomposition

    def __post_init__(self):
        if self.dec.s != self.s:
            raise ValueError("decomposition scale time must match state time")


@dataclass(frozen=True)
class MembershipReport:
    inside: bool
    violations: list[tuple[str, float]]
    worst_margin: float
    margins: dict[str, float]


@dataclass(frozen=True)
class TrajectorySample:
    s: float
    b: float
    bprime: float
    modes: np.ndarray
    qminus_seminorm: float
    inside: bool


@dataclass(frozen=True)
class ExitInfo:
    s_star: float
    bound: str
    mode: int | None
    omega: int
    dqds: float | None
    transversal: bool | None


@dataclass
class TrajectoryRecord:
    samples: list[TrajectorySample] = field(default_factory=list)
    exit: ExitInfo | None = None
    final_state: "SimState | None" = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "s": np.array([x.s for x in self.samples]),
            "b": np.array([x.b for x in self.samples]),
            "bprime": np.array([x.bprime for x in self.samples]),
            "modes": np.array([x.modes for x in self.samples]),
            "qminus": np.array([x.qminus_seminorm for x in self.samples]),
            "inside": np.array([x.inside for x in self.samples]),
        }


def init_state(
    d, delta: float, b0: float, s0: float, params: ModelParams,
    opts: FlowOptions = FlowOptions(),
) -> SimState:
    """State seeded by the polynomial sum_i d_i I^{-delta}(s0) y^i, b = b0.

    The seed has degree <= 2k-1, so its tracked coefficients above 2k-1 and
    its remainder vanish identically; modes are computed in closed form.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (2 * params.k,):
        raise ValueError(f"d must have length 2k = {2 * params.k}")
    if np.max(np.abs(d)) > D_BOX_LIMIT + 1e-12:
        raise ValueError(f"|d_i| <= {D_BOX_LIMIT} required")
    amp = float(scale_factor(s0, params.k)) ** (-delta)
    modes = np.zeros(params.n_modes)
    for i, di in enumerate(d):
        if di == 0.0:
            continue
        for n, c in power_in_hermite(i, s0, params.k).items():
            modes[n] += di * amp * c
    nodes = opts.nodes()
    rem = GridFunction(nodes, np.zeros_like(nodes))
    return SimState(s=float(s0), b=float(b0), dec=SpectralDecomposition(float(s0), modes, rem))


def _lambda(params: ModelParams) -> np.ndarray:
    return 1.0 - np.arange(params.n_modes) / (2.0 * params.k)


def _stage(
    modes: np.ndarray,
    rem_vals: np.ndarray,
    b: float,
    s: float,
    nodes: np.ndarray,
    h: float,
    params: ModelParams,
    quad: QuadratureRule,
    opts: FlowOptions,
) -> tuple[np.ndarray, np.ndarray, float]:
    """One RK stage: (dq_n/ds, d(remainder)/ds, b')."""
    k = params.k
    I2inv = float(scale_factor(s, k)) ** -2
    lam = _lambda(params)

    # remainder transport-diffusion: upwinded transport keeps the stiff-free
    # late-s regime stable once diffusion no longer damps grid noise
    wind = nodes / (2.0 * k)
    Ls_rem = (
        I2inv * laplacian_compact(rem_vals, h)
        - wind * upwind_gradient(rem_vals, h, wind)
        + rem_vals
    )

    if opts.linear_only:
        return lam * modes, Ls_rem, 0.0

    rem = GridFunction(nodes, rem_vals)
    proj = projected_sources(modes, rem, b, s, params, quad, variant=opts.variant)
    bprime = proj.bprime(params, opts.variant)

    src_proj = proj.PN + proj.PD + proj.PR + bprime * proj.PM
    dmodes = lam * modes + src_proj
    dmodes[2 * k] = 0.0

    # pointwise sources on the grid minus their tracked-mode content
    q_grid = hermite_series(modes, nodes, s, k) + rem_vals
    dq_grid = hermite_series(modes[1:] * np.arange(1, params.n_modes), nodes, s, k) \
        + derivative(rem_vals, h)
    _, e = eval_profile(nodes, b, params)
    S = (
        nonlinear_values(q_grid, e, params.p)
        + drift_values(dq_grid, nodes, e, b, I2inv, params)
        + residual_values(q_grid, nodes, e, b, I2inv, params, opts.variant)
        + bprime * modulation_values(q_grid, nodes, e, params, opts.variant)
    )
    drem = Ls_rem + S - hermite_series(src_proj, nodes, s, k)
    return dmodes, drem, bprime


def _orthogonalize(
    rem_vals: np.ndarray, nodes: np.ndarray, s: float, params: ModelParams,
    quad: QuadratureRule,
) -> np.ndarray:
    """Remove unstable-range debris from the remainder.

    Only modes below 2k are subtracted: they are the ones whose numerical
    debris would grow (rates 1 - n/2k > 0), and their extraction from
    remainder samples stays well-conditioned at large s. Debris in the
    neutral and stable tracked modes decays by itself, and extracting modes
    near M_floor from interpolated samples amplifies interpolation error by
    I(s)^n, which destabilizes the flow late in a run.
    """
    I = float(scale_factor(s, params.k))
    y_q = quad.nodes / I
    r_q = sample(nodes, rem_vals, y_q)
    n_low = 2 * params.k
    leak = project_modes_from_samples(r_q, s, params.k, n_low, quad)
    return rem_vals - hermite_series(leak, nodes, s, params.k)


def _rk4(
    m0: np.ndarray, r0: np.ndarray, b0: float, s0: float, ds: float,
    nodes: np.ndarray, h: float, params: ModelParams, quad: QuadratureRule,
    opts: FlowOptions,
) -> tuple[np.ndarray, np.ndarray, float, float]:
    km1, kr1, bp1 = _stage(m0, r0, b0, s0, nodes, h, params, quad, opts)
    km2, kr2, bp2 = _stage(
        m0 + 0.5 * ds * km1, r0 + 0.5 * ds * kr1, b0 + 0.5 * ds * bp1,
        s0 + 0.5 * ds, nodes, h, params, quad, opts,
    )
    km3, kr3, bp3 = _stage(
        m0 + 0.5 * ds * km2, r0 + 0.5 * ds * kr2, b0 + 0.5 * ds * bp2,
        s0 + 0.5 * ds, nodes, h, params, quad, opts,
    )
    km4, kr4, bp4 = _stage(
        m0 + ds * km3, r0 + ds * kr3, b0 + ds * bp3,
        s0 + ds, nodes, h, params, quad, opts,
    )
    modes = m0 + ds / 6.0 * (km1 + 2.0 * km2 + 2.0 * km3 + km4)
    rem = r0 + ds / 6.0 * (kr1 + 2.0 * kr2 + 2.0 * kr3 + kr4)
    b_new = b0 + ds / 6.0 * (bp1 + 2.0 * bp2 + 2.0 * bp3 + bp4)
    return modes, rem, b_new, bp1


def _step_core(
    state: SimState, ds: float, params: ModelParams, opts: FlowOptions,
) -> tuple[SimState, float]:
    if ds < 0 or ds > opts.max_ds:
        raise ValueError(f"ds must lie in [0, {opts.max_ds}]")
    if not (
        np.all(np.isfinite(state.dec.modes))
        and np.all(np.isfinite(state.dec.remainder.values))
        and math.isfinite(state.b)
    ):
        raise ValueError("state with non-finite values rejected")
    if ds == 0.0:
        return state, 0.0

    nodes = state.dec.remainder.nodes
    h = state.dec.remainder.spacing
    quad = opts.quad()
    modes = state.dec.modes
    rem = state.dec.remainder.values
    b_new, s_new = state.b, state.s
    target = state.s + ds
    bp_first = None
    while s_new < target - 1e-14:
        sub = min(opts.stable_ds(s_new, params.k), target - s_new)
        modes, rem, b_new, bp = _rk4(
            modes, rem, b_new, s_new, sub, nodes, h, params, quad, opts
        )
        s_new += sub
        if bp_first is None:
            bp_first = bp
    s_new = target
    if not (np.all(np.isfinite(modes)) and np.all(np.isfinite(rem))):
        raise ValueError("time step produced non-finite values")

    if not opts.linear_only:
        rem = _orthogonalize(rem, nodes, s_new, params, quad)
        modes = modes.copy()
        modes[2 * params.k] = 0.0
    dec = SpectralDecomposition(s_new, modes, GridFunction(nodes, rem))
    return SimState(s=s_new, b=b_new, dec=dec), float(bp_first)


def step(
    state: SimState, ds: float, params: ModelParams, opts: FlowOptions = FlowOptions(),
) -> SimState:
    """Advance (q, b) by one RK4 step; q_{2k} stays zero by construction."""
    new_state, _ = _step_core(state, ds, params, opts)
    return new_state


_BOUND_B_LOW = "b_low"
_BOUND_B_HIGH = "b_high"
_BOUND_QMINUS = "qminus"


def membership(
    state: SimState, delta: float, b0: float, params: ModelParams,
    opts: FlowOptions = FlowOptions(),
) -> MembershipReport:
    """Check every shrinking-set bound; margins are bound minus attained value."""
    I = float(scale_factor(state.s, params.k))
    mode_bound = I ** (-delta)
    neutral_bound = I ** (-2.0 * delta)
    margins: dict[str, float] = {}
    for m in range(params.n_modes):
        bound = neutral_bound if m == 2 * params.k else mode_bound
        margins[f"mode_{m}"] = bound - abs(float(state.dec.modes[m]))
    sem = remainder_seminorm(
        state.dec.remainder, state.s, params,
        floor=opts.sem_floor, rel_floor=opts.sem_rel_floor,
    )
    margins[_BOUND_QMINUS] = mode_bound - sem
    margins[_BOUND_B_LOW] = state.b - 0.5 * b0
    margins[_BOUND_B_HIGH] = 2.0 * b0 - state.b
    violations = [(name, m) for name, m in margins.items() if m < 0.0]
    return MembershipReport(
        inside=not violations,
        violations=violations,
        worst_margin=min(margins.values()),
        margins=margins,
    )


def _exit_bound(report: MembershipReport, params: ModelParams) -> str:
    """Deterministic violator choice: lowest mode index, then q_-, then b."""
    names = [f"mode_{m}" for m in range(params.n_modes)]
    names += [_BOUND_QMINUS, _BOUND_B_LOW, _BOUND_B_HIGH]
    violated = {name for name, _ in report.violations}
    for name in names:
        if name in violated:
            return name
    raise ValueError("no violated bound")


def mode_ode_rhs(
    state: SimState, params: ModelParams, opts: FlowOptions = FlowOptions(),
) -> np.ndarray:
    """dq_n/ds for the tracked modes at this state."""
    nodes = state.dec.remainder.nodes
    h = state.dec.remainder.spacing
    dmodes, _, _ = _stage(
        state.dec.modes, state.dec.remainder.values, state.b, state.s,
        nodes, h, params, opts.quad(), opts,
    )
    return dmodes


def _sample_of(
    state: SimState, bprime: float, report: MembershipReport,
    params: ModelParams, opts: FlowOptions,
) -> TrajectorySample:
    return TrajectorySample(
        s=state.s,
        b=state.b,
        bprime=bprime,
        modes=state.dec.modes.copy(),
        qminus_seminorm=remainder_seminorm(
            state.dec.remainder, state.s, params,
            floor=opts.sem_floor, rel_floor=opts.sem_rel_floor,
        ),
        inside=report.inside,
    )


def run(
    state0: SimState,
    s_max: float,
    delta: float,
    b0: float,
    params: ModelParams,
    ds: float = 0.01,
    opts: FlowOptions = FlowOptions(),
) -> TrajectoryRecord:
    """Integrate until the trajectory leaves the shrinking set or reaches s_max."""
    if not s_max > state0.s:
        raise ValueError("s_max must exceed the initial scale time")
    record = TrajectoryRecord()
    state = state0
    report = membership(state, delta, b0, params, opts)
    record.samples.append(_sample_of(state, 0.0, report, params, opts))
    while report.worst_margin >= -opts.exit_hysteresis and state.s < s_max - 1e-12:
        this_ds = min(ds, s_max - state.s)
        state, bp = _step_core(state, this_ds, params, opts)
        report = membership(state, delta, b0, params, opts)
        record.samples.append(_sample_of(state, bp, report, params, opts))

    if report.worst_margin < -opts.exit_hysteresis:
        bound = _exit_bound(report, params)
        mode = int(bound.split("_")[1]) if bound.startswith("mode_") else None
        if mode is not None:
            omega = 1 if state.dec.modes[mode] >= 0 else -1
            dqds = float(mode_ode_rhs(state, params, opts)[mode])
            transversal = omega * dqds > 0
        else:
            omega = -1 if bound == _BOUND_B_LOW else 1
            dqds, transversal = None, None
        record.exit = ExitInfo(
            s_star=state.s, bound=bound, mode=mode, omega=omega,
            dqds=dqds, transversal=transversal,
        )
    record.final_state = state
    return record


@dataclass(frozen=True)
class AprioriReport:
    """Empirical constants behind the mode-ODE / modulation / remainder bounds."""

    C1: float
    C1_per_mode: np.ndarray
    C2: float
    C3: float
    b_min: float
    b_max: float
    n_samples: int


def a_priori_diagnostics(
    traj: TrajectoryRecord,
    delta: float,
    params: ModelParams,
    s_window_end: float | None = None,
) -> AprioriReport:
    """Rescaled empirical constants over the in-set portion of a trajectory.

    C1: max_j max_s |q_j' - (1 - j/2k) q_j| I^{2 delta}(s)  (q_j' by centered
    differences of the recorded series); C2: max_s |b'| I^{delta}(s); C3 is
    the smallest constant closing the remainder integral-envelope bound with
    tau at the first sample.
    """
    arr = traj.arrays()
    inside = arr["inside"]
    n_in = int(np.sum(inside))
    if n_in < 10:
        raise ValueError("trajectory has fewer than 10 in-set samples")
    idx = np.where(inside)[0]
    if s_window_end is not None:
        idx = idx[arr["s"][idx] <= s_window_end + 1e-12]
    s = arr["s"][idx]
    modes = arr["modes"][idx]
    b = arr["b"][idx]
    bprime = arr["bprime"][idx]
    qminus = arr["qminus"][idx]
    I = np.asarray(scale_factor(s, params.k))

    k = params.k
    n_modes = modes.shape[1]
    c1_per_mode = np.zeros(n_modes)
    if len(s) >= 3:
        dq = np.gradient(modes, s, axis=0)
        resc = I[:, None] ** (2.0 * delta)
        lam = 1.0 - np.arange(n_modes) / (2.0 * k)
        resid = np.abs(dq - lam[None, :] * modes) * resc
        c1_per_mode = np.max(resid[1:-1], axis=0)
    c2 = float(np.max(np.abs(bprime[1:]) * I[1:] ** delta)) if len(s) > 1 else 0.0

    tau, q_tau = s[0], qminus[0]
    decay = np.exp(-(s - tau) / (params.p - 1.0))
    envelope = I ** (-1.5 * delta) + decay * float(scale_factor(tau, k)) ** (-1.5 * delta)
    c3 = float(np.max(np.maximum(qminus - decay * q_tau, 0.0) / envelope))

    return AprioriReport(
        C1=float(np.max(c1_per_mode)),
        C1_per_mode=c1_per_mode,
        C2=c2,
        C3=c3,
        b_min=float(np.min(b)),
        b_max=float(np.max(b)),
        n_samples=len(s),
    )

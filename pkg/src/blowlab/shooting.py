"""Finite-dimensional search for initial data that never leaves the set.

The seed family q(s0) = sum_i d_i I^{-delta}(s0) y^i is parameterized by the
2k coordinates d (the tracked modes above 2k-1 and the remainder start at
zero). Modes 0..2k-1 are linearly unstable with distinct rates 1 - j/2k, so
a trajectory that exits does so (generically) through one of them, and the
exiting mode/sign says which coordinate was too large and in which direction.
The search exploits that: integrate from the box center, bisect the exiting
coordinate against the exit sign, repeat until a trajectory survives to the
horizon. Survivors come with a certificate (final margins, b drift, bracket
history); persistent exits through non-mode bounds or an exhausted budget
raise SearchFailureError carrying the best candidate seen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    D_BOX_LIMIT,
    FlowOptions,
    TrajectoryRecord,
    init_state,
    membership,
    run,
)
from .hermite import power_in_hermite
from .operators import ModulationBreakdownError
from .params import ModelParams, scale_factor

__all__ = [
    "ShootConfig",
    "ExitMapResult",
    "SurvivorCertificate",
    "SearchFailureError",
    "gamma_map",
    "exit_map",
    "search",
    "search_nested",
]


@dataclass(frozen=True)
class ShootConfig:
    delta: float = 0.1
    b0: float = 1.0
    s0: float = 20.0
    horizon: float = 10.0
    box: float = D_BOX_LIMIT
    depth: int = 40
    ds: float = 0.01
    even_only: bool = False
    max_trajectories: int = 400
    flow: FlowOptions = field(default_factory=FlowOptions)

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("survival horizon must be positive")
        if self.depth < 1:
            raise ValueError("bisection depth must be >= 1")


@dataclass(frozen=True)
class ExitMapResult:
    survived: bool
    s_star: float
    phi: np.ndarray | None
    record: TrajectoryRecord


@dataclass(frozen=True)
class SurvivorCertificate:
    d_star: np.ndarray
    s_end: float
    final_margins: dict[str, float]
    b_drift: float
    brackets: list[tuple[float, float]]
    n_trajectories: int
    anomalies: list[dict]
    breakdowns: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "d_star": [float(x) for x in self.d_star],
            "s_end": self.s_end,
            "final_margins": {k: float(v) for k, v in self.final_margins.items()},
            "b_drift": self.b_drift,
            "brackets": [[float(a), float(b)] for a, b in self.brackets],
            "n_trajectories": self.n_trajectories,
            "anomalies": self.anomalies,
            "breakdowns": self.breakdowns,
        }


class SearchFailureError(RuntimeError):
    """No survivor at the configured depth; carries the best candidate."""

    def __init__(self, message: str, best_d: np.ndarray, best_result: ExitMapResult):
        super().__init__(message)
        self.best_d = best_d
        self.best_result = best_result


def gamma_map(d, s0: float, delta: float, params: ModelParams) -> np.ndarray:
    """Exact basis coefficients (psi_0..psi_{2k-1}) of the seed polynomial.

    Linear in d; diagonal I^{-delta}(s0) plus I^{-delta-2} corrections from
    converting even monomials into the basis.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (2 * params.k,):
        raise ValueError(f"d must have length 2k = {2 * params.k}")
    amp = float(scale_factor(s0, params.k)) ** (-delta)
    psi = np.zeros(2 * params.k)
    for i, di in enumerate(d):
        if di == 0.0:
            continue
        for n, c in power_in_hermite(i, s0, params.k).items():
            psi[n] += di * amp * c
    return psi


def exit_map(d, cfg: ShootConfig, params: ModelParams) -> ExitMapResult:
    """Run the trajectory from seed d; report exit data or survival.

    On exit the rescaled low-mode vector Phi = I^{delta}(s*) (q_0..q_{2k-1})
    is returned; the exiting coordinate of Phi sits on the unit box boundary.
    """
    state0 = init_state(d, cfg.delta, cfg.b0, cfg.s0, params, cfg.flow)
    record = run(
        state0, cfg.s0 + cfg.horizon, cfg.delta, cfg.b0, params,
        ds=cfg.ds, opts=cfg.flow,
    )
    if record.exit is None:
        return ExitMapResult(
            survived=True, s_star=cfg.s0 + cfg.horizon, phi=None, record=record
        )
    s_star = record.exit.s_star
    amp = float(scale_factor(s_star, params.k)) ** cfg.delta
    phi = amp * record.samples[-1].modes[: 2 * params.k]
    return ExitMapResult(survived=False, s_star=s_star, phi=phi, record=record)


def search(cfg: ShootConfig, params: ModelParams) -> tuple[np.ndarray, SurvivorCertificate]:
    """Exit-mode bisection over the seed box.

    Returns the surviving seed and its certificate. Raises SearchFailureError
    when a coordinate's refinement budget is exhausted or too many exits
    happen through bounds that do not identify a coordinate.
    """
    dim = 2 * params.k
    lo = np.full(dim, -cfg.box)
    hi = np.full(dim, cfg.box)
    if cfg.even_only:
        lo[1::2] = 0.0
        hi[1::2] = 0.0
    center = 0.5 * (lo + hi)
    halvings = np.zeros(dim, dtype=int)
    reopened = np.zeros(dim, dtype=int)
    anomalies: list[dict] = []
    breakdowns: list[dict] = []
    best: tuple[float, np.ndarray, ExitMapResult] | None = None
    n_traj = 0
    WIDTH_FLOOR = 1e-13

    def cut(mode: int, omega: int) -> None:
        # a collapsed bracket means the optimum shifted (coupling from other
        # coordinates refined later); reopen around the center, escalating
        if hi[mode] - lo[mode] <= max(WIDTH_FLOOR, 8e-16 * abs(center[mode])):
            reopened[mode] += 1
            R = max(1e-12, hi[mode] - lo[mode]) * 16.0 ** reopened[mode]
            lo[mode] = max(center[mode] - R, -cfg.box)
            hi[mode] = min(center[mode] + R, cfg.box)
            halvings[mode] = max(0, halvings[mode] - 4 * reopened[mode])
        if omega > 0:
            hi[mode] = center[mode]
        else:
            lo[mode] = center[mode]
        halvings[mode] += 1

    while True:
        if n_traj >= cfg.max_trajectories:
            if best is None:
                raise SearchFailureError("trajectory budget exhausted", center.copy(), None)
            raise SearchFailureError(
                f"no survivor within {cfg.max_trajectories} trajectories",
                best[1], best[2],
            )
        n_traj += 1
        try:
            result = exit_map(center, cfg, params)
        except ModulationBreakdownError as exc:
            # the modulation denominator only degenerates when q_0 is driven
            # far negative, so the offending coordinate and direction are known
            breakdowns.append({"d": center.tolist(), "error": str(exc)})
            cut(0, -1)
            center = 0.5 * (lo + hi)
            continue
        if result.survived:
            arr = result.record.arrays()
            s = arr["s"]
            b = arr["b"]
            i_mid = int(np.searchsorted(s, cfg.s0 + cfg.horizon / 2.0))
            b_drift = abs(float(b[-1] - b[min(i_mid, len(b) - 1)]))
            final = membership(
                result.record.final_state, cfg.delta, cfg.b0, params, cfg.flow
            )
            cert = SurvivorCertificate(
                d_star=center.copy(),
                s_end=float(s[-1]),
                final_margins=final.margins,
                b_drift=b_drift,
                brackets=list(zip(lo.tolist(), hi.tolist())),
                n_trajectories=n_traj,
                anomalies=anomalies,
                breakdowns=breakdowns,
            )
            return center.copy(), cert

        if best is None or result.s_star > best[0]:
            best = (result.s_star, center.copy(), result)

        info = result.record.exit
        mode = info.mode
        omega = info.omega
        if mode is None or mode >= dim or (cfg.even_only and mode % 2 == 1):
            # a q_-, b, or high-mode breach is a downstream symptom of the
            # largest unstable mode; bisect that coordinate instead
            anomalies.append(
                {"d": center.tolist(), "s_star": info.s_star, "bound": info.bound}
            )
            final = result.record.samples[-1].modes[:dim]
            ranking = np.abs(final)
            if cfg.even_only:
                ranking = ranking.copy()
                ranking[1::2] = -1.0
            mode = int(np.argmax(ranking))
            omega = 1 if final[mode] >= 0 else -1

        cut(mode, omega)
        if halvings[mode] > cfg.depth:
            raise SearchFailureError(
                f"coordinate {mode} exceeded bisection depth {cfg.depth}",
                best[1], best[2],
            )
        center = 0.5 * (lo + hi)


def search_nested(
    cfg: ShootConfig, params: ModelParams
) -> tuple[np.ndarray, SurvivorCertificate]:
    """Nested bisection: fastest unstable coordinate innermost.

    The flat exit-mode loop can stall once a slow coordinate's error drives
    the fast mode through quadratic coupling: the fast mode dominates every
    exit, yet its own bracket is exhausted. Nesting respects the rate
    separation: each level bisects one coordinate on the sign of *its* mode
    at the exit of the inner-optimized trajectory, warm-starting the inner
    brackets (the inner optimum moves quadratically in an outer move). Cost
    grows with dimension, so this is the refinement tool - the flat search
    remains the default for full-box, short-horizon work.
    """
    dim = 2 * params.k
    active = [j for j in range(dim) if not (cfg.even_only and j % 2 == 1)]
    # growth rate 1 - j/2k is largest for j = 0: innermost
    order = sorted(active)  # order[0] innermost, refined at every level above
    tol = 1e-14
    state = {"n": 0, "anomalies": [], "breakdowns": []}
    centers = np.zeros(dim)
    inner_width = {j: 2.0 * cfg.box for j in active}

    def evaluate(d: np.ndarray):
        if state["n"] >= cfg.max_trajectories:
            raise SearchFailureError(
                f"no survivor within {cfg.max_trajectories} trajectories",
                d.copy(), None,
            )
        state["n"] += 1
        try:
            return exit_map(d, cfg, params)
        except ModulationBreakdownError as exc:
            state["breakdowns"].append({"d": d.tolist(), "error": str(exc)})
            return None  # treated as an immediate far-negative mode-0 exit

    def exit_sign(result, coord: int) -> int:
        if result is None:
            return -1 if coord == 0 else 1
        info = result.record.exit
        if info is not None and info.bound not in (f"mode_{coord}",):
            state["anomalies"].append(
                {"bound": info.bound, "s_star": info.s_star}
            )
        q = result.record.samples[-1].modes[coord]
        return 1 if q >= 0 else -1

    def solve(level: int, d: np.ndarray):
        """Bisect coordinate order[level], optimizing all inner levels."""
        coord = order[level]
        half = 0.5 * inner_width[coord]
        lo = max(centers[coord] - half, -cfg.box)
        hi = min(centers[coord] + half, cfg.box)
        best = None
        while True:
            d = d.copy()
            d[coord] = 0.5 * (lo + hi)
            if level == 0:
                result = evaluate(d)
            else:
                result, d = solve(level - 1, d)
            if result is not None and result.survived:
                centers[coord] = d[coord]
                return result, d
            if result is not None and (
                best is None or result.s_star > best[0].s_star
            ):
                best = (result, d.copy())
            if hi - lo <= max(tol, 8e-16 * abs(d[coord])):
                centers[coord] = d[coord]
                inner_width[coord] = max(64.0 * tol, 0.25 * (hi - lo) + 64.0 * tol)
                if best is None:
                    raise SearchFailureError(
                        "all candidates broke the modulation solve", d, None
                    )
                return best
            if exit_sign(result, coord) > 0:
                hi = d[coord]
            else:
                lo = d[coord]

    top = len(order) - 1
    coord_top = order[top]
    lo = -cfg.box
    hi = cfg.box
    d0 = np.zeros(dim)
    best_overall = None
    while True:
        centers[coord_top] = 0.5 * (lo + hi)
        inner_width[coord_top] = 0.0  # pinned at this level's midpoint
        # widen inner levels around their warm centers after an outer move
        for j in order[:top]:
            inner_width[j] = max(inner_width[j], 0.25 * (hi - lo) ** 2, 1e-12)
        result, d = solve(top, d0) if top > 0 else solve(0, d0)
        if result.survived:
            arr = result.record.arrays()
            s = arr["s"]
            b = arr["b"]
            i_mid = int(np.searchsorted(s, cfg.s0 + cfg.horizon / 2.0))
            b_drift = abs(float(b[-1] - b[min(i_mid, len(b) - 1)]))
            final = membership(
                result.record.final_state, cfg.delta, cfg.b0, params, cfg.flow
            )
            cert = SurvivorCertificate(
                d_star=d.copy(),
                s_end=float(s[-1]),
                final_margins=final.margins,
                b_drift=b_drift,
                brackets=[(float(lo), float(hi))] * 1,
                n_trajectories=state["n"],
                anomalies=state["anomalies"],
                breakdowns=state["breakdowns"],
            )
            return d.copy(), cert
        if best_overall is None or result.s_star > best_overall[0].s_star:
            best_overall = (result, d.copy())
        if hi - lo <= tol:
            raise SearchFailureError(
                "outer bracket exhausted without a survivor",
                best_overall[1], best_overall[0],
            )
        if exit_sign(result, coord_top) > 0:
            hi = centers[coord_top]
        else:
            lo = centers[coord_top]

"""Non-learning controllers: uniform, Webster's, max-pressure and SOTL."""

from __future__ import annotations

from dataclasses import dataclass

from .control import HOLD, Controller, NextPhase
from .simulation import DEFAULT_SATURATION_FLOW


class UniformController(Controller):
    """Fixed cycle, one green duration `u` shared by every phase."""

    def __init__(self, u: int = 10):
        if u <= 0:
            raise ValueError("u must be > 0")
        self.u = int(u)

    def decide(self, view):
        if view.t_p < self.u:
            return HOLD
        return NextPhase((view.current_phase + 1) % view.n_phases)


# -- Webster's ----------------------------------------------------------------

@dataclass
class WebsterConfig:
    W: int = 120                 # data-collection window, seconds
    c_min: int = 40
    c_max: int = 180
    s_sat: float = DEFAULT_SATURATION_FLOW
    R: int | None = None         # total cycle lost time; default |P| * 5 s

    def __post_init__(self):
        if not 0 < self.c_min <= self.c_max:
            raise ValueError("need 0 < c_min <= c_max")
        if self.W <= 0 or self.s_sat <= 0:
            raise ValueError("W and s_sat must be > 0")
        if self.R is not None and self.R < 0:
            raise ValueError("R must be >= 0")


SATURATED_Y = 0.95  # treat the cycle formula as saturated past this point


def webster_cycle(Y, cfg: WebsterConfig, R: float):
    """Cycle length for critical flow ratios Y, clamped to [c_min, c_max]."""
    total = sum(Y)
    if total <= 0.0:
        return float(cfg.c_min)
    if total >= SATURATED_Y:
        return float(cfg.c_max)
    C = (1.5 * R + 5.0) / (1.0 - total)
    return float(min(max(C, cfg.c_min), cfg.c_max))


def webster_timings(flows: dict, cfg: WebsterConfig, phases) -> tuple:
    """Cycle length and integer per-phase greens from a window's lane flows.

    `flows` maps lane id -> flow in veh/h; `phases` is the intersection's
    phase tuple. Greens are rounded to whole seconds with the rounding
    remainder assigned to the highest-ratio phase, and floored at 1 s.
    """
    n = len(phases)
    R = float(cfg.R) if cfg.R is not None else 5.0 * n
    Y = [max(flows.get(lid, 0.0) / cfg.s_sat for lid in p.incoming)
         for p in phases]
    C = webster_cycle(Y, cfg, R)
    G = C - R
    total = sum(Y)
    if total <= 0.0:
        raw = [G / n] * n
    else:
        raw = [G * y / total for y in Y]
    greens = [max(1, round(g)) for g in raw]
    # keep the integer greens summing to round(G)
    target = max(n, round(G))
    widest = max(range(n), key=lambda i: (Y[i], -i))
    greens[widest] += target - sum(greens)
    greens[widest] = max(1, greens[widest])
    return C, greens


class WebsterController(Controller):
    """Cycle controller re-timed from the flows of the last W-second window."""

    def __init__(self, W: int = 120, c_min: int = 40, c_max: int = 180,
                 s_sat: float = DEFAULT_SATURATION_FLOW, R: int | None = None):
        self.cfg = WebsterConfig(W=int(W), c_min=int(c_min), c_max=int(c_max),
                                 s_sat=float(s_sat), R=R)
        self._counts = {}
        self._window_start = 0.0
        self._greens = None

    def begin_episode(self):
        self._counts = {}
        self._window_start = 0.0
        self._greens = None

    def _ensure_greens(self, view):
        if self._greens is None:
            # no data yet: minimum cycle, equal splits
            n = view.n_phases
            R = self.cfg.R if self.cfg.R is not None else 5 * n
            _, self._greens = webster_timings({}, self.cfg,
                                              view.intersection.phases)

    def tick(self, view):
        for lid, n in view.crossings().items():
            self._counts[lid] = self._counts.get(lid, 0) + n
        if view.now - self._window_start >= self.cfg.W:
            flows = {lid: 3600.0 * n / self.cfg.W
                     for lid, n in self._counts.items()}
            _, self._greens = webster_timings(flows, self.cfg,
                                              view.intersection.phases)
            self._counts = {}
            self._window_start = view.now

    def decide(self, view):
        self._ensure_greens(view)
        if view.t_p < self._greens[view.current_phase]:
            return HOLD
        return NextPhase((view.current_phase + 1) % view.n_phases)


# -- Max-pressure --------------------------------------------------------------

def phase_pressure(view, phase) -> int:
    inc = sum(view.count(lid, view.bound) for lid in phase.incoming)
    out = sum(view.count(lid, view.bound) for lid in phase.outgoing)
    return inc - out


class MaxPressureController(Controller):
    """Acyclic: after g_min green seconds, switch to the max-pressure phase."""

    def __init__(self, g_min: int = 10):
        if g_min <= 0:
            raise ValueError("g_min must be > 0")
        self.g_min = int(g_min)

    def decide(self, view):
        if view.t_p < self.g_min:
            return HOLD
        pressures = [phase_pressure(view, p)
                     for p in view.intersection.phases]
        best = max(range(len(pressures)), key=lambda i: (pressures[i], -i))
        return NextPhase(best)


# -- SOTL -----------------------------------------------------------------------

@dataclass
class SotlConfig:
    g_min: int = 10
    theta: float = 50.0   # vehicle-seconds integral threshold
    omega: float = 100.0  # platoon look-back distance, meters
    mu: int = 3           # platoon size above which a change is allowed

    def __post_init__(self):
        if min(self.g_min, self.theta, self.omega, self.mu) <= 0:
            raise ValueError("all SOTL parameters must be positive")


class SotlController(Controller):
    """Self-organizing: change phase once the red-side vehicle-time integral
    exceeds theta, unless a small platoon is about to cross."""

    def __init__(self, g_min: int = 10, theta: float = 50.0,
                 omega: float = 100.0, mu: int = 3):
        self.cfg = SotlConfig(g_min=int(g_min), theta=float(theta),
                              omega=float(omega), mu=int(mu))
        self.kappa = 0.0

    def begin_episode(self):
        self.kappa = 0.0

    def tick(self, view):
        current = view.current_phase
        green_inc = () if current is None else \
            view.intersection.phases[current].incoming
        for lid in view.intersection.incoming:
            if lid not in green_inc:
                self.kappa += view.count(lid, self.cfg.omega)

    def decide(self, view):
        cfg = self.cfg
        if view.t_p <= cfg.g_min:
            return HOLD
        green_inc = view.intersection.phases[view.current_phase].incoming
        n = sum(view.count(lid, cfg.omega) for lid in green_inc)
        if (n > cfg.mu or n == 0) and self.kappa > cfg.theta:
            self.kappa = 0.0
            return NextPhase((view.current_phase + 1) % view.n_phases)
        return HOLD
